import math

import numpy as np
import pytest

from freqbias.data import LabeledDataset, make_rng
from freqbias.smallnet import (
    PARAM_ORDER,
    NumericalError,
    SmallNet,
    TrainConfig,
    cross_entropy,
    evaluate,
    net_for,
    softmax,
    train,
)
from oracles import central_diff


def toy_net(seed=3):
    net = SmallNet(in_channels=2, side=4, widths=(3, 4), hidden=5, classes=3, seed=seed)
    rng = make_rng(seed + 100)
    for k in net.params:
        if k.endswith("_b"):
            net.params[k] = rng.normal(0, 0.1, net.params[k].shape)
    net.set_normalization([0.2, -0.1], [0.7, 1.3])
    return net


def close(analytic, numeric, rtol=1e-4, atol=1e-9):
    return np.all(np.abs(analytic - numeric) <= rtol * np.maximum(np.abs(analytic), np.abs(numeric)) + atol)


def test_ce_gradient_is_softmax_minus_target(rng):
    z = rng.normal(size=(4, 6))
    t = rng.dirichlet(np.ones(6), size=4)
    _, g = cross_entropy(z, t, "sum")
    np.testing.assert_allclose(g, softmax(z) - t, rtol=0, atol=1e-15)


def test_ce_reference_values():
    assert cross_entropy(np.zeros((1, 10)), [3])[0] == pytest.approx(math.log(10))
    soft = cross_entropy(np.array([[0.7, 0.7]]), np.array([[0.5, 0.5]]))[0]
    assert soft == pytest.approx(math.log(2))
    margins = [cross_entropy(np.array([[m, 0.0]]), [0])[0] for m in (0.0, 1.0, 2.0, 4.0)]
    assert np.all(np.diff(margins) < 0)


def test_zero_final_layer_gives_uniform_softmax(rng):
    net = SmallNet(seed=1)
    net.params["fc2_w"][:] = 0
    logits, _ = net.forward(rng.random((2, 3, 32, 32)))
    assert not logits.any()
    assert net.loss(rng.random((2, 3, 32, 32)), [1, 4]) == pytest.approx(math.log(10))


def test_hand_computed_toy_forward():
    net = SmallNet(in_channels=1, side=4, widths=(1, 1), hidden=1, classes=2)
    for k in net.params:
        net.params[k] = np.zeros_like(net.params[k])
    net.params["conv1_w"][0, 0, 1, 1] = 1.0
    net.params["conv2_w"][0, 0, 1, 1] = 1.0
    net.params["fc1_w"][0, 0] = 2.0
    net.params["fc2_w"][0] = [1.0, -1.0]
    x = np.arange(16, dtype=float).reshape(1, 1, 4, 4) / 16
    logits, feats = net.forward(x)
    # identity convs on nonnegative input, two max-pools -> global max 15/16
    np.testing.assert_allclose(feats, [[2 * 15 / 16]])
    np.testing.assert_allclose(logits, [[15 / 8, -15 / 8]])


def test_identical_images_give_identical_rows(rng):
    x = np.repeat(rng.random((1, 3, 32, 32)), 2, axis=0)
    logits, _ = SmallNet(seed=2).forward(x)
    np.testing.assert_array_equal(logits[0], logits[1])


@pytest.mark.parametrize("reduction", ["mean", "sum"])
def test_parameter_gradients_match_finite_differences(rng, reduction):
    net = toy_net()
    x = rng.normal(size=(3, 2, 4, 4))
    t = rng.dirichlet(np.ones(3), size=3)
    _, grads, _ = net.backward(x, t, reduction)
    for name in PARAM_ORDER:
        num = central_diff(lambda: net.loss(x, t, reduction), net.params[name])
        assert close(grads[name], num), name


def test_input_gradient_matches_finite_differences(rng):
    net = toy_net()
    x = rng.normal(size=(2, 2, 4, 4))
    labels = np.array([0, 2])
    _, _, dx = net.backward(x, labels, "sum")
    assert close(dx, central_diff(lambda: net.loss(x, labels, "sum"), x))


def test_input_gradient_full_size_random_pixels(rng):
    net = SmallNet(seed=4)
    net.fit_normalization(rng.random((8, 3, 32, 32)))
    x = rng.random((1, 3, 32, 32))
    g = net.input_gradients(x, np.array([7]))
    eps = 1e-6
    for _ in range(20):
        idx = (0, rng.integers(3), rng.integers(32), rng.integers(32))
        xp, xm = x.copy(), x.copy()
        xp[idx] += eps
        xm[idx] -= eps
        num = (net.loss(xp, [7], "sum") - net.loss(xm, [7], "sum")) / (2 * eps)
        assert close(np.array(g[idx]), np.array(num))


def test_duplicated_batch_keeps_mean_gradients(rng):
    net = toy_net()
    x = rng.normal(size=(2, 2, 4, 4))
    _, g1, _ = net.backward(x, [0, 1])
    _, g2, _ = net.backward(np.concatenate([x, x]), [0, 1, 0, 1])
    for k in PARAM_ORDER:
        np.testing.assert_allclose(g1[k], g2[k], rtol=1e-12, atol=1e-15)


def test_input_gradients_use_each_images_own_loss(rng):
    net = toy_net()
    x = rng.normal(size=(3, 2, 4, 4))
    labels = np.array([1, 0, 2])
    g = net.input_gradients(x, labels)
    for i in range(3):
        _, _, gi = net.backward(x[i : i + 1], labels[i : i + 1], "sum")
        np.testing.assert_allclose(g[i], gi[0], rtol=1e-12)


def separable_toy(seed=0):
    rng = make_rng(seed)
    labels = np.repeat([0, 1], 100)
    x = rng.normal(0, 0.3, size=(200, 1, 8, 8))
    x[labels == 0, :, :, :4] += 1.0
    x[labels == 1, :, :, 4:] += 1.0
    order = rng.permutation(200)
    return LabeledDataset(x[order], labels[order], class_count=2)


def test_separable_toy_reaches_full_train_accuracy():
    ds = separable_toy(seed=0)
    net = net_for(ds, seed=0)
    train(net, ds, TrainConfig(epochs=50, learning_rate=0.05, batch_size=20, seed=0))
    assert evaluate(net, ds) == 1.0


def test_zero_learning_rate_keeps_parameters(rng):
    ds = separable_toy()
    net = net_for(ds, seed=1)
    before = {k: v.copy() for k, v in net.params.items()}
    log = train(net, ds, TrainConfig(epochs=2, learning_rate=0.0, batch_size=50), test_set=ds)
    for k in PARAM_ORDER:
        np.testing.assert_array_equal(net.params[k], before[k])
    assert log.records[0].test_acc == log.records[1].test_acc


def test_training_is_deterministic():
    ds = separable_toy()
    logs = []
    for _ in range(2):
        net = net_for(ds, seed=5)
        logs.append(train(net, ds, TrainConfig(epochs=3, batch_size=32, seed=9), test_set=ds).to_csv())
    assert logs[0] == logs[1]
    assert logs[0].splitlines()[0] == "epoch,train_loss,test_acc"


def test_non_finite_loss_aborts():
    ds = separable_toy()
    net = net_for(ds, seed=0)
    net.params["fc2_w"][:] = np.nan
    with pytest.raises(NumericalError, match="epoch 1"):
        train(net, ds, TrainConfig(epochs=1))


def test_untrained_net_is_at_chance(rng):
    labels = np.repeat(np.arange(10), 100)
    ds = LabeledDataset(rng.random((1000, 3, 32, 32)), labels)
    acc = evaluate(net_for(ds, seed=0), ds)
    assert abs(acc - 0.1) <= 0.03


def test_all_pass_band_filter_keeps_accuracy(rng):
    ds = LabeledDataset(rng.random((40, 3, 32, 32)), np.repeat(np.arange(10), 4))
    net = net_for(ds, seed=0)
    assert evaluate(net, ds, ("low", 23)) == evaluate(net, ds)


def test_blob_round_trip(tmp_path, rng):
    net = toy_net()
    path = tmp_path / "m.bin"
    net.save(path)
    back = SmallNet.load(path)
    assert back.to_bytes() == net.to_bytes()
    x = rng.normal(size=(2, 2, 4, 4))
    np.testing.assert_array_equal(back.forward(x)[0], net.forward(x)[0])
    assert open(path, "rb").read()[:4] == b"FQBN"
    with pytest.raises(ValueError):
        SmallNet.from_bytes(b"XXXX" + net.to_bytes()[4:])
