import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from decompcast.decomposition import Frequency, MixtureOfExperts, MovingAverage
from decompcast.exceptions import ConfigurationError, ShapeError, TrainingDivergenceError
from decompcast.models import BACKBONES, ForecastModel, ModelConfig
from decompcast.training import (AdamState, TrainConfig, adam_step, backward,
                                 finite_difference_check, mae_metric, mse_loss, train)


def tiny(backbone, decomposition, seed=0):
    cfg = ModelConfig(8, 4, 2, backbone, decomposition, trend_hidden=6, rmm_hidden=5,
                      shift_hidden=(4, 6))
    m = ForecastModel(cfg, rng=np.random.default_rng(seed))
    r = np.random.default_rng(seed + 100)
    # move off the identity affine and zero biases so every gradient path is exercised
    m.params["revin.gamma"][...] = r.uniform(0.5, 1.5, 2)
    for k, v in m.params.items():
        if v.ndim == 1 and k != "revin.gamma":
            v[...] = r.normal(0, 0.3, v.shape)
    return m


def test_mse_and_mae_values():
    a, z = np.array([1.0, 2.0]), np.zeros(2)
    assert mse_loss(a, a) == 0 and mae_metric(a, a) == 0
    assert mse_loss(a, z) == 2.5 and mae_metric(a, z) == 1.5
    assert mse_loss(a, z) == mse_loss(z, a)
    assert mae_metric(-3 * a, -3 * z) == pytest.approx(3 * mae_metric(a, z))
    with pytest.raises(ShapeError):
        mse_loss(a, np.zeros(3))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_batch_loss_invariant_to_reordering(seed):
    r = np.random.default_rng(seed)
    m = tiny("rmm", MovingAverage(3))
    x, y = r.normal(size=(5, 8, 2)), r.normal(size=(5, 4, 2))
    perm = r.permutation(5)
    assert backward(m, x[perm], y[perm])[0] == pytest.approx(backward(m, x, y)[0], abs=1e-12)


def test_zero_residual_gives_zero_gradients(rng):
    m = tiny("rmsm", MixtureOfExperts((1, 3)))
    x = rng.normal(size=(2, 8, 2))
    loss, grads = backward(m, x, m.forward(x))
    assert loss == 0
    for g in grads.values():
        np.testing.assert_array_equal(g, 0)


def test_single_linear_weight_gradient():
    # x = [3, -3] is pure frequency-1 content: trend is 0 and the backbone sees x itself
    cfg = ModelConfig(2, 1, 1, "linear", Frequency(1), trend_hidden=2)
    m = ForecastModel(cfg, rng=np.random.default_rng(0))
    for k, v in m.params.items():
        if k != "revin.gamma":
            v[...] = 0
    m.params["backbone.linear.w"][...] = [[1.0], [0.0]]
    loss, grads = backward(m, np.array([3.0, -3.0]).reshape(1, 2, 1), np.zeros((1, 1, 1)))
    assert loss == pytest.approx(9.0)
    np.testing.assert_allclose(grads["backbone.linear.w"].ravel(), [18.0, -18.0], atol=1e-12)


@pytest.mark.parametrize("backbone", BACKBONES)
@pytest.mark.parametrize("decomp", [MovingAverage(3), MixtureOfExperts((1, 3, 5)), Frequency(2)],
                         ids=["ma", "moe", "fd"])
def test_gradients_match_finite_differences(backbone, decomp, rng):
    m = tiny(backbone, decomp)
    x, y = rng.normal(size=(3, 8, 2)), rng.normal(size=(3, 4, 2))
    report = finite_difference_check(m, x, y, step=1e-5, rtol=1e-4, atol=1e-7)
    assert set(report) == set(m.params)
    failed = {k: v for k, v in report.items() if not v[1]}
    assert not failed


def test_frozen_gate_gets_no_update(rng):
    m = tiny("rmm", MixtureOfExperts((1, 3), trainable_gate=False))
    assert "moe.gate.w" not in m.trainable
    x, y = rng.normal(size=(2, 8, 2)), rng.normal(size=(2, 4, 2))
    _, grads = backward(m, x, y)
    np.testing.assert_array_equal(grads["moe.gate.w"], 0)
    before = m.params["moe.gate.w"].copy()
    state = AdamState.zeros_like(m.params, m.trainable, lr=0.1)
    adam_step(m.params, grads, state)
    np.testing.assert_array_equal(m.params["moe.gate.w"], before)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_reports_batch():
    m = tiny("rmm", MovingAverage(3))
    m.params["backbone.rmm.w3"][...] = np.inf
    with pytest.raises(TrainingDivergenceError) as err:
        backward(m, np.ones((1, 8, 2)) + np.arange(8)[None, :, None], np.zeros((1, 4, 2)),
                 batch_index=4)
    assert err.value.batch_index == 4


def test_adam_zero_gradient_is_noop():
    p = {"w": np.array([1.0, -2.0])}
    state = AdamState.zeros_like(p)
    adam_step(p, {"w": np.zeros(2)}, state)
    np.testing.assert_array_equal(p["w"], [1.0, -2.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3).filter(lambda v: abs(v) > 1e-3), min_size=1, max_size=6))
def test_adam_first_step_bounded_by_lr(g):
    g = np.array(g)
    p = {"w": np.zeros_like(g)}
    state = AdamState.zeros_like(p, lr=1e-3)
    adam_step(p, {"w": g}, state)
    step = np.abs(p["w"])
    assert np.all(step > 0) and np.all(step <= 1e-3)
    np.testing.assert_array_equal(np.sign(-p["w"]), np.sign(g))


def test_adam_hand_value():
    p = {"w": np.array([1.0])}
    state = AdamState.zeros_like(p, lr=0.1, beta1=0.9, beta2=0.999, eps_adam=1e-8)
    adam_step(p, {"w": np.array([2.0])}, state)
    assert state.step_count == 1
    assert p["w"][0] == pytest.approx(1 - 0.1 * 2 / (2 + 1e-8), abs=1e-15)


def _linear_data(rng, A, n=400):
    # zero-mean windows mapped linearly: reachable by the linear backbone
    x = rng.normal(size=(n, A.shape[0], 1))
    x -= x.mean(axis=1, keepdims=True)
    return x, np.einsum("nlc,lh->nhc", x, A)


def test_zero_epochs_returns_input_model(rng):
    m = tiny("rmm", MovingAverage(3))
    x, y = rng.normal(size=(10, 8, 2)), rng.normal(size=(10, 4, 2))
    out = train(m, (x, y), (x, y), TrainConfig(max_epochs=0)).model
    for k in m.params:
        np.testing.assert_array_equal(out.params[k], m.params[k])


def test_learns_linear_map_and_is_deterministic(rng):
    A = rng.normal(size=(16, 4)) / 4.0
    x, y = _linear_data(rng, A)
    xv, yv = _linear_data(np.random.default_rng(1), A, n=100)
    cfg = ModelConfig(16, 4, 1, "linear", Frequency(8), trend_hidden=8)

    def run():
        m = ForecastModel(cfg, rng=np.random.default_rng(3))
        # keeping all bins sends the zero-mean windows entirely down the seasonal path
        for k in m.params:
            if k.startswith("trend."):
                m.params[k][...] = 0
        return train(m, (x, y), (xv, yv), TrainConfig(lr=3e-3, batch_size=32, max_epochs=50,
                                                      patience=50, seed=3))

    a, b = run(), run()
    vals = [h["val_loss"] for h in a.history]
    assert vals[-1] < 1e-3
    assert all(later <= earlier for earlier, later in zip(vals, vals[1:]))
    assert a.history == b.history


def test_best_epoch_is_kept(rng):
    x, y = rng.normal(size=(64, 8, 2)), rng.normal(size=(64, 4, 2))
    xv, yv = rng.normal(size=(16, 8, 2)), rng.normal(size=(16, 4, 2))
    res = train(tiny("rmm", MovingAverage(3)), (x, y), (xv, yv),
                TrainConfig(lr=3e-2, max_epochs=8, patience=2))
    best_val = min(h["val_loss"] for h in res.history)
    assert res.history[res.best_epoch - 1]["val_loss"] == best_val
    assert mse_loss(res.model.forward(xv), yv) == pytest.approx(best_val, abs=1e-12)


def test_empty_split_rejected():
    m = tiny("rmm", MovingAverage(3))
    empty = (np.zeros((0, 8, 2)), np.zeros((0, 4, 2)))
    with pytest.raises(ConfigurationError):
        train(m, empty, empty)
    with pytest.raises(ConfigurationError):
        TrainConfig(batch_size=0)
