import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.stats import norm

from freqbias.kde import (
    class_curves,
    inter_class,
    kde,
    make_grid,
    silverman_bandwidth,
    variance_report,
)


def gaussian_overlap_oracle(mu1, s1, mu2, s2, lo=None, hi=None):
    """Area IoU of two normal pdfs on ``[lo, hi]`` by adaptive quadrature
    (default: effectively the whole line)."""
    if lo is None:
        lo, hi = min(mu1 - 12 * s1, mu2 - 12 * s2), max(mu1 + 12 * s1, mu2 + 12 * s2)
    f = lambda x: norm.pdf(x, mu1, s1)  # noqa: E731
    g = lambda x: norm.pdf(x, mu2, s2)  # noqa: E731
    pts = [mu1, mu2]
    num = integrate.quad(lambda x: min(f(x), g(x)), lo, hi, points=pts, limit=200)[0]
    den = integrate.quad(lambda x: max(f(x), g(x)), lo, hi, points=pts, limit=200)[0]
    return num / den


def two_curves(mu1, s1, mu2, s2, size=256):
    h = max(s1, s2)
    grid = make_grid(min(mu1, mu2) - 3 * h, max(mu1, mu2) + 3 * h, size)
    return kde([mu1], grid, s1), kde([mu2], grid, s2)


def test_silverman_formula():
    # unit spread with a wide IQR: the std branch is taken
    x = np.concatenate([-np.ones(50), np.ones(50)])
    h, degenerate = silverman_bandwidth(x)
    assert not degenerate
    assert h == pytest.approx(0.9 * 100**-0.2, rel=1e-12)
    assert h == pytest.approx(0.3582964534981475, rel=1e-12)


def test_silverman_degenerate_and_scaling(rng):
    h, degenerate = silverman_bandwidth(np.full(10, 3.0))
    assert degenerate and h == pytest.approx(4e-6)
    x = rng.normal(size=200)
    assert silverman_bandwidth(5 * x)[0] == pytest.approx(5 * silverman_bandwidth(x)[0])
    with pytest.raises(ValueError):
        silverman_bandwidth([1.0])


def test_single_sample_peak():
    c = kde([0.0], np.linspace(-4, 4, 257), bandwidth=1.0)
    assert c.density[128] == pytest.approx(1 / math.sqrt(2 * math.pi))


def test_two_far_samples_give_two_half_peaks():
    grid = np.linspace(-20, 20, 401)
    c = kde([-10.0, 10.0], grid, bandwidth=1.0)
    peak = 0.5 / math.sqrt(2 * math.pi)
    assert c.density[100] == pytest.approx(peak, rel=1e-12)
    assert c.density[300] == pytest.approx(peak, rel=1e-12)


def test_kde_matches_double_loop(rng):
    x = rng.normal(size=50)
    grid = np.linspace(-4, 4, 64)
    c = kde(x, grid)
    h = c.bandwidth
    ref = np.zeros_like(grid)
    for i, g in enumerate(grid):
        for xi in x:
            ref[i] += math.exp(-0.5 * ((g - xi) / h) ** 2) / math.sqrt(2 * math.pi)
        ref[i] /= len(x) * h
    np.testing.assert_allclose(c.density, ref, rtol=1e-12)


def test_kde_mass_on_shared_grid(rng):
    curves = class_curves([rng.normal(0, 1, 100), rng.normal(3, 0.5, 80), np.full(5, 2.0)])
    for c in curves:
        assert 0.98 <= c.mass() <= 1.0 + 1e-9


def test_kde_empty_rejected():
    with pytest.raises(ValueError):
        kde([], np.linspace(0, 1, 5))


def test_overlap_identical_disjoint_and_grid_check():
    grid = np.linspace(-10, 10, 256)
    a = kde([-5.0], grid, 0.3)
    b = kde([5.0], grid, 0.3)
    assert inter_class(a, a) == 1.0
    assert inter_class(a, b) < 1e-30
    with pytest.raises(ValueError):
        inter_class(a, kde([0.0], np.linspace(-10, 10, 255), 1.0))


@pytest.mark.parametrize("mu2,s2", [(2.0, 1.0), (0.5, 1.0), (1.0, 2.0), (4.0, 0.7)])
def test_overlap_matches_quadrature(mu2, s2):
    # the overlap is defined on the evaluation grid, so integrate over its span
    a, b = two_curves(0.0, 1.0, mu2, s2)
    ref = gaussian_overlap_oracle(0.0, 1.0, mu2, s2, a.grid[0], a.grid[-1])
    assert abs(inter_class(a, b) - ref) < 1e-3
    # against the whole line the gap is bounded by the clipped tails
    assert abs(inter_class(a, b) - gaussian_overlap_oracle(0.0, 1.0, mu2, s2)) < 5e-3


def test_pointwise_mode_is_unbounded():
    grid = np.linspace(-5, 5, 256)
    a = kde([0.0], grid, 1.0)
    assert inter_class(a, a, "pointwise") == pytest.approx(256)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 5.0), st.floats(0.2, 3.0))
def test_overlap_symmetric_and_bounded(d, s):
    a, b = two_curves(0.0, 1.0, d, s)
    o = inter_class(a, b)
    assert 0.0 <= o <= 1.0
    assert o == inter_class(b, a)


def test_overlap_shrinks_as_classes_separate():
    prev = 1.1
    for d in np.linspace(0, 6, 13):
        grid = make_grid(-3, 9, 256)
        o = inter_class(kde([0.0], grid, 1.0), kde([d], grid, 1.0))
        assert o <= prev + 1e-12
        prev = o


def test_variance_extremes(rng):
    same = [rng.normal(size=(200, 3))] * 4
    assert variance_report(same).variance == pytest.approx(0.0, abs=1e-12)
    apart = [rng.normal(size=(50, 2)) * 0.01 + 100 * c for c in range(4)]
    assert variance_report(apart).variance == pytest.approx(1.0, abs=1e-12)


def test_variance_two_classes_is_one_minus_overlap(rng):
    a, b = rng.normal(0, 1, 300), rng.normal(1.2, 1, 300)
    rep = variance_report([a, b])
    ca, cb = class_curves([a, b])
    assert rep.variance == pytest.approx(1 - inter_class(ca, cb), abs=1e-15)
    assert rep.pairwise[0, 0] == 1.0 and rep.pairwise[0, 1] == rep.pairwise[1, 0]


def test_variance_permutation_invariant(rng):
    feats = [rng.normal(c * 0.5, 1, size=(60, 4)) for c in range(5)]
    base = variance_report(feats).variance
    perm = [feats[i] for i in (3, 0, 4, 1, 2)]
    assert variance_report(perm).variance == base


def test_small_class_is_excluded(rng):
    feats = [rng.normal(size=(30, 2)), rng.normal(size=(1, 2)), rng.normal(2, 1, size=(30, 2))]
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        rep = variance_report(feats)
    assert w and rep.excluded == [1]
    assert np.isnan(rep.pairwise[0, 1])
    doc = json.loads(rep.to_json())
    assert set(doc) == {"pairs", "variance", "D", "grid_size", "overlap_mode"}
    assert [p[:2] for p in doc["pairs"]] == [[0, 2]]
