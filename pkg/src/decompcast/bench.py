"""Wall-clock timing of forward (and optionally backward) passes."""
import time

import numpy as np

from .models import ForecastModel, ModelConfig, model_forward
from .training import backward as loss_and_grads


def time_model(config, batch_size=32, iters=10, warmup=2, with_backward=True, seed=0):
    """Mean and standard deviation in ms of one batch step over ``iters`` runs."""
    rng = np.random.default_rng(seed)
    model = ForecastModel(config, rng=rng)
    x = rng.normal(size=(batch_size, config.seq_len, config.channels))
    y = rng.normal(size=(batch_size, config.horizon, config.channels))
    step = (lambda: loss_and_grads(model, x, y)) if with_backward else (lambda: model_forward(x, model))
    for _ in range(warmup):
        step()
    samples = []
    for _ in range(iters):
        t0 = time.perf_counter()
        step()
        samples.append(1000.0 * (time.perf_counter() - t0))
    samples = np.array(samples)
    return {"seq_len": config.seq_len, "horizon": config.horizon, "mean_ms": float(samples.mean()),
            "std_ms": float(samples.std()), "min_ms": float(samples.min()), "iters": iters}


def bench(backbone="rmm", seq_lens=(96,), horizon=720, channels=1, batch_size=32, iters=10,
          warmup=2, with_backward=True, decomposition=None, **model_kwargs):
    rows = []
    for L in seq_lens:
        kw = dict(model_kwargs)
        if decomposition is not None:
            kw["decomposition"] = decomposition
        cfg = ModelConfig(L, horizon, channels, backbone, **kw)
        rows.append(time_model(cfg, batch_size, iters, warmup, with_backward))
    return rows
