import numpy as np
import pytest

from freqbias.priority import (
    PriorityMatrix,
    band_gradient,
    band_gradients,
    change_rate_csv,
    gradient_density,
    learning_priority,
    msda_change_rate,
    read_pgm,
    stable_window,
)
from freqbias.smallnet import SmallNet
from freqbias.spectral import density_values, dft2, idft2, make_mask


def band_image(rng, side, k, channels=3):
    """Real image whose spectrum lives on ring k only."""
    return idft2(dft2(rng.normal(size=(channels, side, side))) * make_mask(side, kind="ring", k=k))


def small_net(side=16):
    net = SmallNet(side=side, seed=2)
    net.set_normalization([0.5] * 3, [0.25] * 3)
    return net


def test_all_pass_mask_is_identity(rng):
    g = rng.normal(size=(3, 16, 16))
    np.testing.assert_allclose(band_gradient(g, np.ones((16, 16), bool)), g, atol=1e-14)


def test_band_gradients_sum_to_gradient(rng):
    g = rng.normal(size=(2, 3, 32, 32))
    stack = band_gradients(g)
    assert stack.shape == (17, 2, 3, 32, 32)
    np.testing.assert_allclose(stack.sum(axis=0), g, atol=1e-12)


@pytest.mark.parametrize("k", [1, 3, 6])
def test_directional_derivative_along_band_image(rng, k):
    net = small_net()
    x = rng.random((1, 3, 16, 16))
    y = np.array([4])
    g = net.input_gradients(x, y)[0]
    b = band_image(rng, 16, k)
    eps = 1e-5
    num = (net.loss(x + eps * b, y, "sum") - net.loss(x - eps * b, y, "sum")) / (2 * eps)
    ana = np.sum(band_gradient(g, make_mask(16, kind="ring", k=k)) * b)
    assert abs(num - ana) <= 1e-3 * abs(ana)


def test_band_gradient_is_linear_in_the_loss(rng):
    net = small_net()
    x = rng.random((1, 3, 16, 16))
    _, _, g1 = net.backward(x, [2], "sum")
    _, _, g2 = net.backward(np.concatenate([x, x]), [2, 2], "sum")
    mask = make_mask(16, kind="ring", k=5)
    np.testing.assert_allclose(
        band_gradient(g2[0] + g2[1], mask), 2 * band_gradient(g1[0], mask), rtol=1e-10, atol=1e-14
    )


def test_band_densities_add_up_to_gradient_density(rng):
    g = rng.normal(size=(3, 32, 32))
    parts = band_gradients(g)[:-1]
    total = sum(density_values(p, "none") for p in parts)
    np.testing.assert_allclose(total, density_values(g, "none"), rtol=1e-10)
    for k, p in enumerate(parts):
        d = density_values(p, "none")
        assert np.delete(d, k).max() < 1e-25 * max(d[k], 1)


class ToneNet:
    """Stand-in network whose input gradient is a fixed pattern."""

    def __init__(self, pattern):
        self.pattern = pattern

    def input_gradients(self, x, labels):
        return np.broadcast_to(self.pattern, x.shape).copy()


def test_pure_tone_gradient_row_peaks_at_its_band(rng):
    tone = band_image(rng, 32, 4)
    row = gradient_density(ToneNet(tone), np.zeros((1, 3, 32, 32)), np.zeros(1, int))
    pm = PriorityMatrix(row)
    assert pm.argmax_bands().tolist() == [4]
    assert row[4] > 0.999


def test_identical_epochs_give_identical_rows(rng):
    net = small_net()
    ds = type("T", (), {"images": rng.random((4, 3, 16, 16)), "labels": np.arange(4)})()
    pm = learning_priority([net, net], ds)
    np.testing.assert_array_equal(pm.raw[0], pm.raw[1])
    assert pm.epochs == [1, 2]


def test_priority_is_order_invariant(rng):
    net = small_net()
    x, y = rng.random((6, 3, 16, 16)), np.arange(6) % 10
    perm = rng.permutation(6)
    a = gradient_density(net, x, y, batch_size=4)
    b = gradient_density(net, x[perm], y[perm], batch_size=4)
    np.testing.assert_allclose(a, b, rtol=1e-12)


def test_zero_row_is_rejected():
    with pytest.raises(ValueError, match="epoch 2"):
        PriorityMatrix(np.array([[1.0, 0.5], [0.0, 0.0]]))


def test_serialization(rng):
    raw = rng.random((5, 16))
    pm = PriorityMatrix(raw)
    assert np.allclose(pm.values.max(axis=1), 1.0) and pm.values.min() >= 0
    lines = pm.to_csv().splitlines()
    assert lines[0] == "epoch,band,value" and len(lines) == 1 + 5 * 16
    back = PriorityMatrix.from_csv(pm.to_csv(raw=True))
    np.testing.assert_array_equal(back.raw, raw)
    img = read_pgm(pm.to_pgm())
    assert img.shape == (5, 16)
    np.testing.assert_array_equal(img, np.floor(255 * pm.values + 0.5))


def test_argmax_skips_dc_by_default():
    pm = PriorityMatrix(np.array([[5.0, 1.0, 2.0]]))
    assert pm.argmax_bands().tolist() == [2]
    assert pm.argmax_bands(skip_dc=False).tolist() == [0]


def test_change_rate_cases():
    base = np.array([[1.0, 2.0, 3.0, 4.0]] * 5)
    assert not msda_change_rate(base, base).any()
    doubled = base.copy()
    doubled[:, 2] *= 2
    np.testing.assert_allclose(msda_change_rate(doubled, base), [0, 0, 1, 0])
    halved = base.copy()
    halved[:, 1] *= 0.5
    np.testing.assert_allclose(msda_change_rate(halved, base), [0, -1, 0, 0])
    zero = base.copy()
    zero[:, 0] = 0
    rate = msda_change_rate(doubled, zero)
    assert np.isnan(rate[0]) and np.nanmax(np.abs(rate)) == 1.0
    assert change_rate_csv(rate).splitlines()[0] == "band,value"


def test_window_averages_only_late_epochs():
    base = np.ones((10, 3))
    msda = np.ones((10, 3))
    msda[:8, 1] = 100.0  # early epochs ignored
    msda[8:, 2] = 3.0
    np.testing.assert_allclose(msda_change_rate(msda, base), [0, 0, 1])
    assert stable_window(60) == slice(48, 60)
    assert stable_window(2) == slice(1, 2)


def test_zero_gradient_images_are_left_out(rng):
    tone = band_image(rng, 16, 3)

    class Mixed:
        def input_gradients(self, x, labels):
            g = np.broadcast_to(tone, x.shape).copy()
            g[::2] = 0.0
            return g

    row = gradient_density(Mixed(), np.zeros((4, 3, 16, 16)), np.zeros(4, int))
    assert row.sum() == pytest.approx(1.0)
    assert not gradient_density(ToneNet(np.zeros((3, 16, 16))), np.zeros((2, 3, 16, 16)), np.zeros(2, int)).any()
