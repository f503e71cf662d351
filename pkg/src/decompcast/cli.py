"""Command-line interface: ``decompcast {train,evaluate,decompose,bench}``.

Settings resolve as command-line flag > ``DECOMPCAST_<NAME>`` environment
variable > ``--config`` JSON file entry > built-in default, where ``<NAME>``
is the upper-cased option name with dashes as underscores (for example
``DECOMPCAST_BATCH_SIZE=64``).
"""
import argparse
import csv
import json
import logging
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bench import bench
from .checkpoint import load_checkpoint, save_checkpoint
from .data import (DEFAULT_RATIOS, SyntheticSpec, chronological_split, generate_synthetic,
                   load_csv)
from .decomposition import DEFAULT_MOE_KERNELS, make_method
from .exceptions import ConfigurationError, DecompcastError
from .models import ForecastModel, ModelConfig
from .training import TrainConfig, evaluate, predict, train

log = logging.getLogger("decompcast")

SCHEMA_VERSION = 1
ENV_PREFIX = "DECOMPCAST_"
MODEL_CHOICES = {"rmm": "rmm", "rmsm": "rmsm", "linear-backbone": "linear"}


def _int_list(text):
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


def _float_list(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


def _flag(value):
    if isinstance(value, bool):
        return value
    return str(value).strip().lower() in ("1", "true", "yes", "on")


# name -> (type, default, help); names double as config-file keys
OPTIONS = {
    "data": (str, None, "CSV file: header row, optional leading date column, numeric columns"),
    "no_date_column": (_flag, False, "the CSV has no leading date column"),
    "synthetic": (str, None, "use a synthetic series; optional spec "
                             "'n=5000,c=3,trend_slope=0.001,sinusoids=24:1.0;96:0.5,"
                             "noise_sigma=0.1,seed=0'"),
    "standardize": (_flag, False, "standardize channels with training-segment statistics"),
    "ratios": (_float_list, list(DEFAULT_RATIOS), "train,val,test ratios"),
    "decomp": (str, "ma", "decomposition method: ma, moe or fd"),
    "kernel": (int, 25, "moving-average kernel (odd)"),
    "kernels": (_int_list, list(DEFAULT_MOE_KERNELS), "mixture-of-experts kernels, comma separated"),
    "topk": (int, 5, "number of Fourier bins kept by fd"),
    "freeze_gate": (_flag, False, "keep the MoE gate at uniform mixing"),
    "model": (str, "rmm", "rmm, rmsm or linear-backbone"),
    "seq_len": (int, 96, "input window length L"),
    "horizon": (int, 96, "forecast length H"),
    "hidden": (int, 512, "hidden width of the trend MLP and the RMM backbone"),
    "shift_hidden": (_int_list, [64, 128], "shift-MLP hidden widths"),
    "lr": (float, 1e-4, "Adam learning rate"),
    "batch_size": (int, 32, "minibatch size"),
    "epochs": (int, 10, "maximum epochs"),
    "patience": (int, 3, "early-stopping patience in epochs"),
    "repeats": (int, 3, "independent training runs (seeds seed, seed+1, ...)"),
    "seed": (int, 0, "base random seed"),
    "out": (str, None, "output path (stdout when omitted)"),
    "checkpoint": (str, None, "checkpoint path"),
    "history_out": (str, None, "write per-epoch history as JSON lines"),
    "seq_lens": (_int_list, [96, 192, 384, 768], "bench: input lengths"),
    "iters": (int, 10, "bench: timed runs per length"),
    "warmup": (int, 2, "bench: untimed warmup runs"),
    "channels": (int, 1, "bench: channel count"),
    "backward": (_flag, False, "bench: time forward+backward"),
}

DATA_OPTS = ["data", "no_date_column", "synthetic", "standardize", "ratios"]
DECOMP_OPTS = ["decomp", "kernel", "kernels", "topk", "freeze_gate"]
COMMAND_OPTS = {
    "train": DATA_OPTS + DECOMP_OPTS + ["model", "seq_len", "horizon", "hidden", "shift_hidden",
                                        "lr", "batch_size", "epochs", "patience", "repeats",
                                        "seed", "out", "checkpoint", "history_out"],
    "evaluate": DATA_OPTS + ["checkpoint", "seq_len", "horizon", "out"],
    "decompose": ["data", "no_date_column"] + DECOMP_OPTS + ["out"],
    "bench": DECOMP_OPTS + ["model", "seq_lens", "horizon", "hidden", "shift_hidden",
                            "batch_size", "iters", "warmup", "channels", "backward", "seed",
                            "out"],
}
# per-command overrides of OPTIONS defaults; evaluate takes L and H from the checkpoint
COMMAND_DEFAULTS = {"bench": {"horizon": 720}, "evaluate": {"seq_len": None, "horizon": None}}


def build_parser():
    parser = argparse.ArgumentParser(prog="decompcast", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, names in COMMAND_OPTS.items():
        p = sub.add_parser(command)
        p.add_argument("--config", help="JSON file of option defaults")
        for name in names:
            typ, _, help_text = OPTIONS[name]
            flag = "--" + name.replace("_", "-")
            if typ is _flag:
                p.add_argument(flag, dest=name, action="store_const", const=True,
                               default=argparse.SUPPRESS, help=help_text)
            elif name == "synthetic":
                p.add_argument(flag, dest=name, nargs="?", const="", default=argparse.SUPPRESS,
                               help=help_text)
            else:
                p.add_argument(flag, dest=name, type=typ, default=argparse.SUPPRESS,
                               help=help_text)
    return parser


def resolve_options(command, cli_values, environ=None):
    environ = os.environ if environ is None else environ
    names = COMMAND_OPTS[command]
    resolved = {n: OPTIONS[n][1] for n in names}
    resolved.update(COMMAND_DEFAULTS.get(command, {}))
    config_path = cli_values.get("config") or environ.get(ENV_PREFIX + "CONFIG")
    if config_path:
        with open(config_path, encoding="utf-8") as fh:
            entries = json.load(fh)
        unknown = set(entries) - set(OPTIONS)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        for k, v in entries.items():
            if k in resolved:
                resolved[k] = v if k == "synthetic" and isinstance(v, dict) else _coerce(k, v)
    for n in names:
        env_key = ENV_PREFIX + n.upper()
        if env_key in environ:
            resolved[n] = _coerce(n, environ[env_key])
    for n in names:
        if n in cli_values:
            resolved[n] = cli_values[n]
    return resolved


def _coerce(name, value):
    typ = OPTIONS[name][0]
    if value is None:
        return None
    return typ(value)


def parse_synthetic(spec):
    if isinstance(spec, dict):
        d = dict(spec)
        if "sinusoids" in d:
            d["sinusoids"] = tuple(tuple(p) for p in d["sinusoids"])
        return SyntheticSpec(**d)
    kwargs = {}
    for part in filter(None, (s.strip() for s in spec.split(","))):
        key, _, value = part.partition("=")
        key = key.strip()
        if key == "sinusoids":
            kwargs[key] = tuple(tuple(float(f) for f in pair.split(":"))
                                for pair in value.split(";") if pair)
        elif key in ("n", "c", "seed"):
            kwargs[key] = int(value)
        elif key in ("trend_slope", "noise_sigma"):
            kwargs[key] = float(value)
        else:
            raise ConfigurationError(f"unknown synthetic field {key!r}")
    return SyntheticSpec(**kwargs)


def load_dataset(opts):
    if opts.get("synthetic") is not None:
        spec = parse_synthetic(opts["synthetic"])
        return generate_synthetic(spec), {"synthetic": _spec_dict(spec)}
    if not opts.get("data"):
        raise ConfigurationError("give --data PATH or --synthetic")
    raw = load_csv(opts["data"], has_date_column=not opts.get("no_date_column", False))
    return raw, {"data": opts["data"]}


def _spec_dict(spec):
    return {"n": spec.n, "c": spec.c, "trend_slope": spec.trend_slope,
            "sinusoids": [list(s) for s in spec.sinusoids], "noise_sigma": spec.noise_sigma,
            "seed": spec.seed}


def _method(opts):
    return make_method(opts["decomp"], opts["kernel"], opts["kernels"], opts["topk"],
                       not opts["freeze_gate"])


def _model_config(opts, channels):
    if opts["model"] not in MODEL_CHOICES:
        raise ConfigurationError(f"--model must be one of {sorted(MODEL_CHOICES)}")
    return ModelConfig(opts["seq_len"], opts["horizon"], channels, MODEL_CHOICES[opts["model"]],
                       _method(opts), opts["hidden"], opts["hidden"], tuple(opts["shift_hidden"]))


def _check_positive(opts, *names):
    for n in names:
        if opts[n] < 1:
            raise ConfigurationError(f"--{n.replace('_', '-')} must be >= 1")


def _checkpoint_path(base, repeat, repeats):
    if repeats == 1:
        return base
    p = Path(base)
    return str(p.with_name(f"{p.stem}-r{repeat}{p.suffix}"))


def cmd_train(opts):
    """Run ``repeats`` seeded trainings and return the report dict."""
    _check_positive(opts, "repeats", "seq_len", "horizon")
    raw, source = load_dataset(opts)
    train_s, val_s, test_s = chronological_split(raw, opts["seq_len"], opts["horizon"],
                                                 tuple(opts["ratios"]), opts["standardize"])
    model_cfg = _model_config(opts, raw.n_channels)
    seeds = [opts["seed"] + i for i in range(opts["repeats"])]
    history_fh = open(opts["history_out"], "w", encoding="utf-8") if opts["history_out"] else None
    runs = []
    try:
        for i, seed in enumerate(seeds):
            rng = np.random.default_rng(seed)
            model = ForecastModel(model_cfg, rng=rng)
            tcfg = TrainConfig(opts["lr"], opts["batch_size"], opts["epochs"], opts["patience"],
                               seed)

            def on_epoch(rec, seed=seed):
                if history_fh is not None:
                    history_fh.write(json.dumps({"seed": seed, **rec}) + "\n")
                    history_fh.flush()

            result = train(model, train_s, val_s, tcfg, rng=rng, on_epoch=on_epoch)
            metrics = evaluate(result.model, test_s)
            t0 = time.perf_counter()
            predict(result.model, test_s.inputs, opts["batch_size"])
            n_test_batches = -(-len(test_s) // opts["batch_size"])
            infer_ms = 1000.0 * (time.perf_counter() - t0) / n_test_batches
            if opts["checkpoint"]:
                save_checkpoint(_checkpoint_path(opts["checkpoint"], i, len(seeds)), result.model,
                                train_s.scaler, {"seed": seed, "test": metrics})
            runs.append({"seed": seed, "test_mse": metrics["mse"], "test_mae": metrics["mae"],
                         "best_epoch": result.best_epoch, "history": result.history,
                         "timings": {"train_ms_per_batch": result.train_ms_per_batch,
                                     "inference_ms_per_batch": infer_ms}})
            log.info("seed %d: test mse %.6f mae %.6f", seed, metrics["mse"], metrics["mae"])
    finally:
        if history_fh is not None:
            history_fh.close()
    return {
        "schema_version": SCHEMA_VERSION,
        "command": "train",
        "config": {**opts, "model_config": model_cfg.to_dict(),
                   "source": source},
        "seeds": seeds,
        "dataset": {"rows": raw.n_rows, "channels": raw.n_channels,
                    "windows": {"train": len(train_s), "val": len(val_s), "test": len(test_s)}},
        "repeats": runs,
        "mean": {"test_mse": float(np.mean([r["test_mse"] for r in runs])),
                 "test_mae": float(np.mean([r["test_mae"] for r in runs]))},
        "timings": {
            "train_ms_per_batch": float(np.mean([r["timings"]["train_ms_per_batch"] for r in runs])),
            "inference_ms_per_batch": float(np.mean([r["timings"]["inference_ms_per_batch"]
                                                     for r in runs])),
        },
    }


def cmd_evaluate(opts):
    if not opts.get("checkpoint"):
        raise ConfigurationError("--checkpoint is required")
    model, scaler, meta = load_checkpoint(opts["checkpoint"])
    cfg = model.config
    raw, source = load_dataset(opts)
    if raw.n_channels != cfg.channels:
        raise ConfigurationError(f"checkpoint expects {cfg.channels} channels, "
                                 f"dataset has {raw.n_channels}")
    for name, want in (("seq_len", cfg.seq_len), ("horizon", cfg.horizon)):
        given = opts.get(name)
        if given is not None and given != want:
            raise ConfigurationError(f"checkpoint has {name}={want}, requested {given}")
    _, _, test_s = chronological_split(raw, cfg.seq_len, cfg.horizon, tuple(opts["ratios"]),
                                       scaler=scaler)
    metrics = evaluate(model, test_s)
    return {"schema_version": SCHEMA_VERSION, "command": "evaluate", "checkpoint": opts["checkpoint"],
            "source": source, "test_mse": metrics["mse"], "test_mae": metrics["mae"],
            "test_windows": len(test_s)}


def cmd_decompose(opts):
    """Component table: date column (if any), then ``<name>_trend``, ``<name>_seasonal``."""
    raw, _ = load_dataset(opts)
    method = _method(opts)
    parts = method.decompose(raw.values[None])
    header = [] if raw.timestamps is None else ["date"]
    for name in raw.channel_names:
        header += [f"{name}_trend", f"{name}_seasonal"]
    trend, seasonal = parts.trend[0], parts.seasonal[0]
    rows = []
    for i in range(raw.n_rows):
        row = [] if raw.timestamps is None else [raw.timestamps[i]]
        for c in range(raw.n_channels):
            row += [repr(float(trend[i, c])), repr(float(seasonal[i, c]))]
        rows.append(row)
    return header, rows


def cmd_bench(opts):
    if opts["model"] not in MODEL_CHOICES:
        raise ConfigurationError(f"--model must be one of {sorted(MODEL_CHOICES)}")
    _check_positive(opts, "iters", "batch_size", "channels", "horizon")
    rows = bench(MODEL_CHOICES[opts["model"]], opts["seq_lens"], opts["horizon"], opts["channels"],
                 opts["batch_size"], opts["iters"], opts["warmup"], opts["backward"],
                 decomposition=_method(opts), trend_hidden=opts["hidden"],
                 rmm_hidden=opts["hidden"], shift_hidden=tuple(opts["shift_hidden"]))
    base = rows[0]["mean_ms"]
    for r in rows:
        r["ratio_to_first"] = r["mean_ms"] / base
    return {"schema_version": SCHEMA_VERSION, "command": "bench", "model": opts["model"],
            "backward": opts["backward"], "batch_size": opts["batch_size"],
            "channels": opts["channels"], "results": rows}


def _write_atomic(path, write):
    """Write through a temp file so a failed run never leaves partial output."""
    if path is None or path == "-":
        write(sys.stdout)
        return
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.parent or ".", prefix=f".{target.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            write(fh)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def main(argv=None):
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    logging.basicConfig(level=logging.INFO if args.pop("verbose") else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = resolve_options(command, args)
        if command == "decompose":
            header, rows = cmd_decompose(opts)

            def write(fh):
                w = csv.writer(fh)
                w.writerow(header)
                w.writerows(rows)
        else:
            report = {"train": cmd_train, "evaluate": cmd_evaluate, "bench": cmd_bench}[command](opts)

            def write(fh):
                json.dump(report, fh, indent=2, default=_json_default)
                fh.write("\n")
        _write_atomic(opts.get("out"), write)
    except (DecompcastError, OSError, ValueError) as exc:
        print(f"decompcast {command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
