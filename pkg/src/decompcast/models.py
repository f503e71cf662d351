"""Forecasting architectures built on a trend/seasonal split.

Every model is ``Y = trend_head(X^T) + backbone(X^S, X)``. The trend head
wraps a three-layer MLP in reversible instance normalization; backbones see
the raw seasonal component with no normalization of any kind. All heads map
the time axis and share their weights across channels.

Parameters live in one ordered ``dict`` of float64 arrays with stable names
(``trend.w1``, ``revin.gamma``, ``backbone.rmm.w2``, ``moe.gate.w`` ...), which
is what the optimizer, the gradient checker and the checkpoint format see.
"""
from dataclasses import dataclass, field

import numpy as np

from .decomposition import (Frequency, MixtureOfExperts, MovingAverage, method_from_dict,
                            method_to_dict, mix_experts, moe_components,
                            moving_average_decompose, frequency_decompose, Decomposition)
from .exceptions import ParameterError, ShapeError
from .numerics import relu, relu_grad
from .revin import DEFAULT_EPS, RevinAffine, revin_denormalize, revin_normalize
from .validation import check_odd_kernel, check_series, from_rows, to_rows

BACKBONES = ("rmm", "rmsm", "linear")


@dataclass(frozen=True)
class ModelConfig:
    seq_len: int
    horizon: int
    channels: int
    backbone: str = "rmm"
    decomposition: object = field(default_factory=MovingAverage)
    trend_hidden: int = 512
    rmm_hidden: int = 512
    shift_hidden: tuple = (64, 128)
    revin_eps: float = DEFAULT_EPS

    def __post_init__(self):
        if self.backbone not in BACKBONES:
            raise ParameterError(f"unknown backbone {self.backbone!r}; expected one of {BACKBONES}")
        for name in ("seq_len", "horizon", "channels", "trend_hidden", "rmm_hidden"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be positive")
        object.__setattr__(self, "shift_hidden", tuple(int(h) for h in self.shift_hidden))
        if len(self.shift_hidden) != 2:
            raise ParameterError("shift_hidden must hold two widths (first, second)")
        method = self.decomposition
        if isinstance(method, Frequency) and method.k > self.seq_len // 2:
            raise ParameterError(f"top-k {method.k} exceeds seq_len // 2")
        kernels = [method.kernel] if isinstance(method, MovingAverage) else \
            list(getattr(method, "kernels", ()))
        for k in kernels:
            check_odd_kernel(k, self.seq_len)

    def to_dict(self):
        return {
            "seq_len": self.seq_len, "horizon": self.horizon, "channels": self.channels,
            "backbone": self.backbone, "decomposition": method_to_dict(self.decomposition),
            "trend_hidden": self.trend_hidden, "rmm_hidden": self.rmm_hidden,
            "shift_hidden": list(self.shift_hidden), "revin_eps": self.revin_eps,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["decomposition"] = method_from_dict(d["decomposition"])
        d["shift_hidden"] = tuple(d["shift_hidden"])
        return cls(**d)


# Views over the parameter dict, one per head. They hold references, not copies.

@dataclass
class TrendHead:
    affine: RevinAffine
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    eps: float = DEFAULT_EPS


@dataclass
class SeasonalHeadRMM:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray


@dataclass
class SeasonalHeadRMSM:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    def __post_init__(self):
        if self.w2.shape[0] != self.w1.shape[1] + self.w1.shape[0]:
            raise ShapeError(
                f"shift layer expects {self.w1.shape[1] + self.w1.shape[0]} inputs "
                f"(hidden + seq_len), weight has {self.w2.shape[0]}"
            )


@dataclass
class LinearBackbone:
    w: np.ndarray
    b: np.ndarray


def _layer_shapes(cfg):
    L, H = cfg.seq_len, cfg.horizon
    shapes = {}
    d = cfg.trend_hidden
    shapes.update({"trend.w1": (L, d), "trend.b1": (d,), "trend.w2": (d, d), "trend.b2": (d,),
                   "trend.w3": (d, H), "trend.b3": (H,)})
    shapes.update({"revin.gamma": (cfg.channels,), "revin.beta": (cfg.channels,)})
    if cfg.backbone == "rmm":
        d = cfg.rmm_hidden
        shapes.update({"backbone.rmm.w1": (L, d), "backbone.rmm.b1": (d,),
                       "backbone.rmm.w2": (d, d), "backbone.rmm.b2": (d,),
                       "backbone.rmm.w3": (d, H), "backbone.rmm.b3": (H,)})
    elif cfg.backbone == "rmsm":
        d1, d2 = cfg.shift_hidden
        shapes.update({"backbone.rmsm.w1": (L, d1), "backbone.rmsm.b1": (d1,),
                       "backbone.rmsm.w2": (d1 + L, d2), "backbone.rmsm.b2": (d2,),
                       "backbone.rmsm.w3": (d2, H), "backbone.rmsm.b3": (H,)})
    else:
        shapes.update({"backbone.linear.w": (L, H), "backbone.linear.b": (H,)})
    if isinstance(cfg.decomposition, MixtureOfExperts):
        n = len(cfg.decomposition.kernels)
        shapes.update({"moe.gate.w": (L, n), "moe.gate.b": (n,)})
    return shapes


def init_params(cfg, rng):
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases 0; RevIN gamma 1, beta 0."""
    params = {}
    for name, shape in _layer_shapes(cfg).items():
        if name == "revin.gamma":
            params[name] = np.ones(shape)
        elif len(shape) == 2:
            bound = np.sqrt(1.0 / shape[0])
            params[name] = rng.uniform(-bound, bound, size=shape)
        else:
            params[name] = np.zeros(shape)
    return params


class ForecastModel:
    """A decomposition model: config plus a named parameter dict."""

    def __init__(self, config, params=None, rng=None):
        self.config = config
        if params is None:
            params = init_params(config, rng if rng is not None else np.random.default_rng(0))
        expected = _layer_shapes(config)
        if list(params) != list(expected):
            raise ShapeError(f"parameter names {list(params)} do not match {list(expected)}")
        for name, shape in expected.items():
            if np.shape(params[name]) != shape:
                raise ShapeError(f"{name}: expected shape {shape}, got {np.shape(params[name])}")
        self.params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}

    def copy(self):
        return ForecastModel(self.config, {k: v.copy() for k, v in self.params.items()})

    @property
    def trainable(self):
        names = list(self.params)
        if isinstance(self.config.decomposition, MixtureOfExperts) and \
                not self.config.decomposition.trainable_gate:
            names = [n for n in names if not n.startswith("moe.")]
        return names

    @property
    def gate(self):
        if "moe.gate.w" not in self.params:
            return None
        return self.params["moe.gate.w"], self.params["moe.gate.b"]

    @property
    def trend_head(self):
        p = self.params
        return TrendHead(RevinAffine(p["revin.gamma"], p["revin.beta"]),
                         p["trend.w1"], p["trend.b1"], p["trend.w2"], p["trend.b2"],
                         p["trend.w3"], p["trend.b3"], self.config.revin_eps)

    @property
    def backbone(self):
        p = self.params
        kind = self.config.backbone
        if kind == "linear":
            return LinearBackbone(p["backbone.linear.w"], p["backbone.linear.b"])
        cls = SeasonalHeadRMM if kind == "rmm" else SeasonalHeadRMSM
        pre = f"backbone.{kind}."
        return cls(*(p[pre + n] for n in ("w1", "b1", "w2", "b2", "w3", "b3")))

    def forward(self, x):
        return model_forward(x, self)

    def __repr__(self):
        c = self.config
        return (f"ForecastModel(backbone={c.backbone!r}, decomposition={c.decomposition!r}, "
                f"L={c.seq_len}, H={c.horizon}, C={c.channels})")


def flatten_params(params, names=None):
    names = list(params) if names is None else names
    return np.concatenate([params[n].ravel() for n in names])


def unflatten_params(vector, like, names=None):
    names = list(like) if names is None else names
    out = dict(like)
    offset = 0
    for n in names:
        size = like[n].size
        out[n] = vector[offset:offset + size].reshape(like[n].shape).copy()
        offset += size
    if offset != vector.size:
        raise ShapeError(f"vector of length {vector.size} does not match {offset} parameters")
    return out


# ---------------------------------------------------------------------------
# forward passes (each returns output and a cache for the backward pass)

def _mlp3(rows, w1, b1, w2, b2, w3, b3):
    a1 = rows @ w1 + b1
    h1 = relu(a1)
    a2 = h1 @ w2 + b2
    h2 = relu(a2)
    out = h2 @ w3 + b3
    return out, (rows, a1, h1, a2, h2)


def _mlp3_backward(cache, dout, w1, w2, w3, need_input=False):
    rows, a1, h1, a2, h2 = cache
    g = {"w3": h2.T @ dout, "b3": dout.sum(axis=0)}
    da2 = relu_grad(a2, dout @ w3.T)
    g["w2"] = h1.T @ da2
    g["b2"] = da2.sum(axis=0)
    da1 = relu_grad(a1, da2 @ w2.T)
    g["w1"] = rows.T @ da1
    g["b1"] = da1.sum(axis=0)
    drows = da1 @ w1.T if need_input else None
    return g, drows


def _check_input(x, length, channels, name):
    if x.shape[1] != length or x.shape[2] != channels:
        raise ShapeError(
            f"{name} has shape {x.shape}; expected (B, {length}, {channels})"
        )


def _trend_forward(xt, head):
    B, L, C = xt.shape
    if head.w1.shape[0] != L:
        raise ShapeError(f"trend head expects length {head.w1.shape[0]}, got {L}")
    norm, state = revin_normalize(xt, head.affine, head.eps)
    o_rows, mlp_cache = _mlp3(to_rows(norm), head.w1, head.b1, head.w2, head.b2,
                              head.w3, head.b3)
    o = from_rows(o_rows, B, C)
    y = revin_denormalize(o, state, head.affine)
    return y, (xt, norm, state, o, mlp_cache)


def trend_head_forward(xt, head):
    """RevIN -> ReLU MLP over time (L -> H) -> inverse RevIN."""
    return _trend_forward(check_series(xt, "trend"), head)[0]


def _rmm_forward(xs, head):
    B, L, C = xs.shape
    if head.w1.shape[0] != L:
        raise ShapeError(f"RMM head expects length {head.w1.shape[0]}, got {L}")
    out, cache = _mlp3(to_rows(xs), head.w1, head.b1, head.w2, head.b2, head.w3, head.b3)
    return from_rows(out, B, C), cache


def rmm_seasonal_forward(xs, head):
    return _rmm_forward(check_series(xs, "seasonal"), head)[0]


def _rmsm_forward(xs, x_full, head):
    B, L, C = xs.shape
    if x_full.shape != xs.shape:
        raise ShapeError(f"seasonal {xs.shape} and full input {x_full.shape} differ")
    if head.w1.shape[0] != L:
        raise ShapeError(f"RMSM head expects length {head.w1.shape[0]}, got {L}")
    s_rows = to_rows(xs)
    a1 = s_rows @ head.w1 + head.b1
    h1 = relu(a1)
    cat = np.concatenate([h1, to_rows(x_full)], axis=1)
    if cat.shape[1] != head.w2.shape[0]:
        raise ShapeError(f"concat width {cat.shape[1]} != shift layer input {head.w2.shape[0]}")
    a2 = cat @ head.w2 + head.b2
    h2 = relu(a2)
    out = h2 @ head.w3 + head.b3
    return from_rows(out, B, C), (s_rows, a1, cat, a2, h2)


def rmsm_seasonal_forward(xs, x_full, head):
    """Shift-MLP: hidden features of the seasonal part concatenated with the raw input."""
    return _rmsm_forward(check_series(xs, "seasonal"), check_series(x_full, "x_full"), head)[0]


def _linear_forward(xs, head):
    B, L, C = xs.shape
    if head.w.shape[0] != L:
        raise ShapeError(f"linear backbone expects length {head.w.shape[0]}, got {L}")
    rows = to_rows(xs)
    return from_rows(rows @ head.w + head.b, B, C), rows


def _backbone_forward(xs, x_full, spec):
    if isinstance(spec, SeasonalHeadRMM):
        return _rmm_forward(xs, spec)
    if isinstance(spec, SeasonalHeadRMSM):
        return _rmsm_forward(xs, x_full, spec)
    if isinstance(spec, LinearBackbone):
        return _linear_forward(xs, spec)
    raise TypeError(f"unsupported backbone {type(spec).__name__}")


def backbone_forward(xs, x_full, spec):
    xs = check_series(xs, "seasonal")
    x_full = check_series(x_full, "x_full")
    return _backbone_forward(xs, x_full, spec)[0]


def _decompose(x, model):
    method = model.config.decomposition
    if isinstance(method, MovingAverage):
        return moving_average_decompose(x, method.kernel), None
    if isinstance(method, Frequency):
        return frequency_decompose(x, method.k), None
    gate_w, gate_b = model.gate
    experts, weights = moe_components(x, method.kernels, gate_w, gate_b)
    trend = mix_experts(experts, weights)
    return Decomposition(trend, x - trend), (experts, weights)


def _forward(x, model):
    cfg = model.config
    _check_input(x, cfg.seq_len, cfg.channels, "input")
    parts, moe_cache = _decompose(x, model)
    y_trend, trend_cache = _trend_forward(parts.trend, model.trend_head)
    y_season, season_cache = _backbone_forward(parts.seasonal, x, model.backbone)
    return y_trend + y_season, (x, parts, moe_cache, trend_cache, season_cache)


def model_forward(x, model):
    """Full forecast ``(B, H, C)`` for a ``(B, L, C)`` input."""
    return _forward(check_series(x), model)[0]


def forward_with_cache(x, model):
    return _forward(check_series(x), model)


# ---------------------------------------------------------------------------
# backward passes

def _trend_backward(dy, cache, head, need_input):
    xt, norm, state, o, mlp_cache = cache
    B, L, C = xt.shape
    gamma, beta = head.affine.gamma, head.affine.beta
    std = state.std[:, None, :]
    grads = {}
    # inverse RevIN: y = (o - beta) / gamma * std + mean
    do = dy * std / gamma
    dgamma = -(dy * std * (o - beta)).sum(axis=(0, 1)) / gamma ** 2
    dbeta = -(dy * std).sum(axis=(0, 1)) / gamma
    g, dnorm_rows = _mlp3_backward(mlp_cache, to_rows(do), head.w1, head.w2, head.w3,
                                   need_input=True)
    grads.update({"trend." + k: v for k, v in g.items()})
    dnorm = from_rows(dnorm_rows, B, C)
    z = (xt - state.mean[:, None, :]) / std
    dgamma = dgamma + (dnorm * z).sum(axis=(0, 1))
    dbeta = dbeta + dnorm.sum(axis=(0, 1))
    grads["revin.gamma"] = dgamma
    grads["revin.beta"] = dbeta
    if not need_input:
        return grads, None
    # statistics depend on the input: d mean / dx = 1/L, d std / dx = z/L
    dmean = dy.sum(axis=1)[:, None, :]
    dstd = (dy * (o - beta) / gamma).sum(axis=1)[:, None, :]
    dz = dnorm * gamma
    dxt = (dz - dz.mean(axis=1, keepdims=True) - z * (dz * z).mean(axis=1, keepdims=True)) / std
    dxt = dxt + dmean / L + dstd * z / L
    return grads, dxt


def _season_backward(dy, cache, spec, prefix, need_input):
    B, _, C = dy.shape
    drows_out = to_rows(dy)
    if isinstance(spec, SeasonalHeadRMM):
        g, drows = _mlp3_backward(cache, drows_out, spec.w1, spec.w2, spec.w3, need_input)
        grads = {prefix + "rmm." + k: v for k, v in g.items()}
    elif isinstance(spec, SeasonalHeadRMSM):
        s_rows, a1, cat, a2, h2 = cache
        g = {"w3": h2.T @ drows_out, "b3": drows_out.sum(axis=0)}
        da2 = relu_grad(a2, drows_out @ spec.w3.T)
        g["w2"] = cat.T @ da2
        g["b2"] = da2.sum(axis=0)
        hidden = spec.w1.shape[1]
        da1 = relu_grad(a1, (da2 @ spec.w2[:hidden].T))
        g["w1"] = s_rows.T @ da1
        g["b1"] = da1.sum(axis=0)
        drows = da1 @ spec.w1.T if need_input else None
        grads = {prefix + "rmsm." + k: v for k, v in g.items()}
    else:
        rows = cache
        grads = {prefix + "linear.w": rows.T @ drows_out, prefix + "linear.b": drows_out.sum(axis=0)}
        drows = drows_out @ spec.w.T if need_input else None
    dxs = from_rows(drows, B, C) if drows is not None else None
    return grads, dxs


def model_backward(dy, cache, model):
    """Gradients of a scalar loss w.r.t. every parameter, given ``dloss/dY``."""
    x, parts, moe_cache, trend_cache, season_cache = cache
    gate_trainable = moe_cache is not None and "moe.gate.w" in model.trainable
    grads, dxt = _trend_backward(dy, trend_cache, model.trend_head, gate_trainable)
    g_season, dxs = _season_backward(dy, season_cache, model.backbone, "backbone.",
                                     gate_trainable)
    grads.update(g_season)
    if moe_cache is not None:
        if gate_trainable:
            experts, weights = moe_cache
            # seasonal = x - trend, so its gradient flows back with a minus sign
            dtrend = dxt - dxs
            dweights = np.einsum("btc,ebtc->bce", dtrend, experts)
            dlogits = weights * (dweights - (weights * dweights).sum(axis=-1, keepdims=True))
            grads["moe.gate.w"] = np.einsum("btc,bce->te", x, dlogits)
            grads["moe.gate.b"] = dlogits.sum(axis=(0, 1))
        else:
            grads["moe.gate.w"] = np.zeros_like(model.params["moe.gate.w"])
            grads["moe.gate.b"] = np.zeros_like(model.params["moe.gate.b"])
    return {name: grads[name] for name in model.params}
