"""Model checkpoints as ``.npz`` archives.

Layout: one array per parameter under its stable name (``trend.w1``,
``revin.gamma``, ``backbone.rmm.w2``, ``moe.gate.w`` ...), optional
``scaler.mean`` / ``scaler.std`` arrays, and a JSON string under
``__meta__`` holding the format tag, version, model config and parameter
order. Arrays are stored raw, so a save/load round trip is bit-exact.
"""
import json

import numpy as np

from .exceptions import DataFormatError
from .models import ForecastModel, ModelConfig

FORMAT = "decompcast-checkpoint"
VERSION = 1


def save_checkpoint(path, model, scaler=None, extra=None):
    meta = {"format": FORMAT, "version": VERSION, "config": model.config.to_dict(),
            "param_order": list(model.params), "extra": extra or {}}
    arrays = dict(model.params)
    if scaler is not None:
        arrays["scaler.mean"], arrays["scaler.std"] = scaler
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path):
    """Return ``(model, scaler_or_None, meta)``."""
    with np.load(path, allow_pickle=False) as z:
        if "__meta__" not in z.files:
            raise DataFormatError(f"{path}: not a {FORMAT} file (no __meta__ entry)")
        meta = json.loads(str(z["__meta__"]))
        if meta.get("format") != FORMAT or meta.get("version") != VERSION:
            raise DataFormatError(f"{path}: unsupported checkpoint {meta.get('format')} "
                                  f"v{meta.get('version')}")
        params = {name: z[name] for name in meta["param_order"]}
        scaler = (z["scaler.mean"], z["scaler.std"]) if "scaler.mean" in z.files else None
    model = ForecastModel(ModelConfig.from_dict(meta["config"]), params)
    return model, scaler, meta
