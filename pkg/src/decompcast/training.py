"""Loss, analytic gradients, Adam and the early-stopping training loop."""
import copy
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError, ShapeError, TrainingDivergenceError
from .models import forward_with_cache, model_backward, model_forward
from .validation import check_same_shape

log = logging.getLogger(__name__)


def mse_loss(pred, target):
    check_same_shape(pred, target, "prediction and target")
    return float(np.mean((np.asarray(pred) - np.asarray(target)) ** 2))


def mae_metric(pred, target):
    check_same_shape(pred, target, "prediction and target")
    return float(np.mean(np.abs(np.asarray(pred) - np.asarray(target))))


def backward(model, batch_x, batch_y, batch_index=None):
    """MSE loss on one batch and its gradient for every parameter."""
    pred, cache = forward_with_cache(batch_x, model)
    batch_y = np.asarray(batch_y, dtype=np.float64)
    if pred.shape != batch_y.shape:
        raise ShapeError(f"targets {batch_y.shape} do not match predictions {pred.shape}")
    resid = pred - batch_y
    loss = float(np.mean(resid ** 2))
    if not np.isfinite(loss):
        raise TrainingDivergenceError(batch_index, loss)
    grads = model_backward(2.0 * resid / resid.size, cache, model)
    return loss, grads


@dataclass
class AdamState:
    m: dict
    v: dict
    step_count: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8

    @classmethod
    def zeros_like(cls, params, names=None, **hyper):
        names = list(params) if names is None else names
        return cls({n: np.zeros_like(params[n]) for n in names},
                   {n: np.zeros_like(params[n]) for n in names}, **hyper)


def adam_step(params, grads, state):
    """One bias-corrected Adam update, in place on ``params`` and ``state``."""
    state.step_count += 1
    t = state.step_count
    corr1 = 1.0 - state.beta1 ** t
    corr2 = 1.0 - state.beta2 ** t
    for name in state.m:
        g = grads[name]
        if g.shape != params[name].shape:
            raise ShapeError(f"gradient {name} has shape {g.shape}, parameter {params[name].shape}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        params[name] -= state.lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps_adam)
    return params, state


@dataclass
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 32
    max_epochs: int = 10
    patience: int = 3
    seed: int = 0
    eval_batch_size: int = 256

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.patience < 1:
            raise ConfigurationError("patience must be >= 1")
        if self.max_epochs < 0:
            raise ConfigurationError("max_epochs must be >= 0")


@dataclass
class TrainResult:
    model: object
    history: list = field(default_factory=list)
    best_epoch: int = 0
    train_ms_per_batch: float = 0.0


def predict(model, inputs, batch_size=256):
    outs = [model_forward(inputs[i:i + batch_size], model)
            for i in range(0, len(inputs), batch_size)]
    return np.concatenate(outs, axis=0)


def evaluate(model, split, batch_size=256):
    """Test-style metrics on a split: ``{"mse": ..., "mae": ...}``."""
    inputs, targets = _arrays(split)
    pred = predict(model, inputs, batch_size)
    return {"mse": mse_loss(pred, targets), "mae": mae_metric(pred, targets)}


def _arrays(split):
    if hasattr(split, "inputs"):
        inputs, targets = split.inputs, split.targets
    else:
        inputs, targets = split
    if len(inputs) == 0:
        raise ConfigurationError("split has no windows")
    return inputs, targets


def train(model, train_split, val_split, cfg=None, rng=None, on_epoch=None):
    """Fit ``model`` with Adam on MSE, keeping the best-validation parameters.

    The input model is not modified. ``on_epoch`` receives each history record.
    """
    cfg = cfg or TrainConfig()
    x_train, y_train = _arrays(train_split)
    x_val, y_val = _arrays(val_split)
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    model = model.copy()
    best = model.copy()
    history = []
    if cfg.max_epochs == 0:
        return TrainResult(best, history, 0)

    state = AdamState.zeros_like(model.params, model.trainable, lr=cfg.lr)
    best_val = np.inf
    best_epoch = 0
    stale = 0
    batch_seconds = 0.0
    n_batches = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(x_train))
        total = 0.0
        for i, start in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            t0 = time.perf_counter()
            loss, grads = backward(model, x_train[idx], y_train[idx], batch_index=i)
            adam_step(model.params, grads, state)
            batch_seconds += time.perf_counter() - t0
            n_batches += 1
            total += loss * len(idx)
        train_loss = total / len(order)
        val_loss = evaluate(model, (x_val, y_val), cfg.eval_batch_size)["mse"]
        record = {"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss}
        history.append(record)
        log.info("epoch %d train %.6f val %.6f", epoch, train_loss, val_loss)
        if on_epoch is not None:
            on_epoch(record)
        if val_loss < best_val:
            best_val, best_epoch, stale = val_loss, epoch, 0
            best = model.copy()
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return TrainResult(best, history, best_epoch, 1000.0 * batch_seconds / max(n_batches, 1))


def finite_difference_check(model, batch_x, batch_y, step=1e-5, rtol=1e-4, atol=1e-7,
                            names=None):
    """Compare analytic gradients with central differences, entry by entry.

    Returns ``{name: (max_abs_error, ok)}``. An entry passes when its error is
    within ``atol`` or within ``rtol`` of the larger of the two magnitudes.
    """
    _, grads = backward(model, batch_x, batch_y)
    probe = copy.copy(model)
    probe.params = {k: v.copy() for k, v in model.params.items()}
    report = {}
    for name in names or model.trainable:
        theta = probe.params[name]
        numeric = np.empty_like(theta)
        for j in np.ndindex(theta.shape):
            orig = theta[j]
            theta[j] = orig + step
            up = mse_loss(model_forward(batch_x, probe), batch_y)
            theta[j] = orig - step
            down = mse_loss(model_forward(batch_x, probe), batch_y)
            theta[j] = orig
            numeric[j] = (up - down) / (2 * step)
        err = np.abs(numeric - grads[name])
        scale = np.maximum(np.abs(numeric), np.abs(grads[name]))
        ok = bool(np.all((err <= atol) | (err <= rtol * scale)))
        report[name] = (float(err.max()) if err.size else 0.0, ok)
    return report
