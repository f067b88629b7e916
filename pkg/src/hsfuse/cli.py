"""Command-line front end: simulate, train, fuse, evaluate, sweep, plot.

Every command writes a ``<command>.manifest.json`` next to its outputs with
the effective configuration, seed, paths and wall-clock duration, so a run
can be reproduced bit-exactly on the same platform. Exit codes: 0 success,
1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .cube import ImageCube, read_cube, write_cube
from .linalg import pca_decompose
from .metrics import MetricsReport, evaluate_pair
from .net import load_model, save_model
from .pipeline import STREAM_NOISE, TrainConfig, fuse, prepare_training_set, train
from .resample import FilterKind
from .simulate import SpectralResponse, add_noise, make_wald_pair
from . import plots

__all__ = ["main", "run_sweep", "write_sweep_csv", "derive_seed"]


class UsageError(Exception):
    """Bad flags, paths or configuration; maps to exit code 2."""


# (flag, type, default, help) per command; argparse gets None defaults so the
# precedence built-ins < config file < flags can be resolved afterwards.
_TRAIN_KNOBS = [
    ("pcs", int, 10, "number of sharpened loading bands (r)"),
    ("patch-size", int, 7, "square training patch size in pixels"),
    ("n-patches", int, 8192, "number of sampled patch pairs"),
    ("epochs", int, 50, "training epochs"),
    ("batch-size", int, 5, "patches per optimizer step"),
    ("noise-variance", float, 0.5, "variance of the train-time noise layers"),
    ("alpha", float, 0.001, "ADAM step size"),
    ("beta1", float, 0.9, "ADAM first-moment decay"),
    ("beta2", float, 0.999, "ADAM second-moment decay"),
    ("epsilon", float, 1e-8, "ADAM stabilizer"),
    ("factor", int, 4, "resolution ratio between the MS and HS grids"),
    ("filter", str, "bicubic", "resampling filter: bicubic | bilinear | nearest"),
]

_COMMANDS = {
    "simulate": [
        ("response", str, "builtin", "response CSV path, or 'builtin' for the R/G/B/NIR blocks"),
        ("factor", int, 4, "decimation factor"),
        ("filter", str, "bicubic", "decimation filter"),
        ("snr", str, "none", "also write a noisy low-res cube at this SNR (dB)"),
    ],
    "train": _TRAIN_KNOBS,
    "fuse": [
        ("mode", str, "full", "reconstruction: full | reduced"),
        ("out", str, "fused.hsc", "output cube file name"),
    ],
    "evaluate": [
        ("ratio", float, 0.25, "resolution ratio (high/low) used by ERGAS"),
        ("label", str, "estimate", "method label written to the CSV row"),
        ("out", str, "metrics.csv", "output CSV file name"),
    ],
    "sweep": _TRAIN_KNOBS
    + [
        ("sweep", str, None, "swept quantity: pcs | snr | filter"),
        ("values", str, None, "comma list or lo:hi:step"),
        ("trials", int, 1, "trials per setting, each with a distinct derived seed"),
        ("response", str, "builtin", "response CSV path or 'builtin'"),
        ("mode", str, "full", "reconstruction used for the fused metric"),
        ("snr", str, "none", "fixed HS noise (dB) applied in non-snr sweeps"),
    ],
    "plot": [
        ("metric", str, "ergas", "sweep metric to plot: ergas | sam_deg | ssim"),
        ("out", str, None, "output image path (default: next to the CSV)"),
    ],
}

_POSITIONALS = {
    "simulate": ["reference"],
    "train": ["ms", "hs"],
    "fuse": ["model", "ms", "hs"],
    "evaluate": ["reference", "estimate"],
    "sweep": ["reference"],
    "plot": ["csv"],
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the message
        return 0 if exc.code in (0, None) else 2
    try:
        opts = _resolve_options(args)
        handler = globals()[f"_cmd_{args.command}"]
        handler(args, opts, argv)
        return 0
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hsfuse",
        description="Fuse a high-resolution MS image with a low-resolution HS cube.",
    )
    parser.add_argument("--version", action="version", version=f"hsfuse {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, options in _COMMANDS.items():
        p = sub.add_parser(command)
        for name in _POSITIONALS[command]:
            p.add_argument(name)
        for flag, typ, default, help_text in options:
            p.add_argument(
                f"--{flag}",
                type=typ if typ is not str else None,
                default=None,
                help=f"{help_text} (default: {default})",
                dest=flag.replace("-", "_"),
            )
        p.add_argument("--seed", type=int, default=None, help="base RNG seed (default: 0)")
        p.add_argument("--out-dir", default=None, help="output directory (default: .)")
        p.add_argument("--config", default=None, help="flat key=value configuration file")
    return parser


def _resolve_options(args: argparse.Namespace) -> dict:
    """Apply the precedence built-in defaults < config file < flags."""
    table = {flag.replace("-", "_"): (typ, default) for flag, typ, default, _ in _COMMANDS[args.command]}
    table["seed"] = (int, 0)
    table["out_dir"] = (str, ".")
    file_values: dict[str, str] = {}
    if args.config is not None:
        file_values = _read_config_file(args.config)
    resolved = {}
    for key, (typ, default) in table.items():
        flag_value = getattr(args, key)
        if flag_value is not None:
            resolved[key] = flag_value
        elif key in file_values:
            try:
                resolved[key] = typ(file_values[key])
            except ValueError:
                raise UsageError(f"config key {key}={file_values[key]!r} is not a valid {typ.__name__}") from None
        else:
            resolved[key] = default
    unknown = set(file_values) - set(table)
    if unknown:
        raise UsageError(f"unknown config keys for {args.command}: {sorted(unknown)}")
    if resolved["seed"] < 0:
        raise UsageError("seed must be >= 0")
    return resolved


def _read_config_file(path: str) -> dict[str, str]:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file not found: {p}")
    values: dict[str, str] = {}
    for ln, line in enumerate(p.read_text().splitlines(), start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise UsageError(f"{p}:{ln}: expected key=value, got {text!r}")
        key, _, value = text.partition("=")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {p}")
    return p


def _out_dir(opts: dict) -> Path:
    d = Path(opts["out_dir"])
    d.mkdir(parents=True, exist_ok=True)
    return d


def _load_response(spec: str, bands: int) -> SpectralResponse:
    if spec == "builtin":
        return SpectralResponse.rgbn(bands)
    response = SpectralResponse.from_csv(_require_file(spec, "response CSV"))
    if response.in_bands != bands:
        raise UsageError(
            f"response has {response.in_bands} columns but the cube has {bands} bands"
        )
    return response


def _parse_snr(text: str) -> float:
    if text.strip().lower() == "none":
        return math.inf
    try:
        return float(text)
    except ValueError:
        raise UsageError(f"--snr must be a dB value or 'none', got {text!r}") from None


def _train_config(opts: dict) -> TrainConfig:
    try:
        return TrainConfig(
            r=opts["pcs"],
            patch_size=opts["patch_size"],
            n_patches=opts["n_patches"],
            epochs=opts["epochs"],
            batch_size=opts["batch_size"],
            noise_variance=opts["noise_variance"],
            adam=(opts["alpha"], opts["beta1"], opts["beta2"], opts["epsilon"]),
            seed=opts["seed"],
            scale_factor=opts["factor"],
            filter=FilterKind.parse(opts["filter"]),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_manifest(out_dir: Path, command: str, config: dict, seed: int,
                    inputs: dict, outputs: dict, started: float, argv: list[str]) -> Path:
    payload = {
        "command": command,
        "argv": argv,
        "config": config,
        "seed": seed,
        "inputs": inputs,
        "outputs": outputs,
        "duration_s": round(time.perf_counter() - started, 3),
        "version": __version__,
    }
    path = out_dir / f"{command}.manifest.json"
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)
    return path


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _cmd_simulate(args, opts, argv) -> None:
    started = time.perf_counter()
    reference = read_cube(_require_file(args.reference, "reference cube"))
    response = _load_response(opts["response"], reference.bands)
    snr_db = _parse_snr(opts["snr"])
    ms, lr = make_wald_pair(reference, response, opts["factor"], opts["filter"])
    out = _out_dir(opts)
    outputs = {"ms": str(out / "ms.hsc"), "lr_hs": str(out / "lr_hs.hsc")}
    write_cube(ms, outputs["ms"])
    write_cube(lr, outputs["lr_hs"])
    if math.isfinite(snr_db):
        noisy = add_noise(lr, snr_db, np.random.default_rng([opts["seed"], STREAM_NOISE]))
        outputs["lr_hs_noisy"] = str(out / "lr_hs_noisy.hsc")
        write_cube(noisy, outputs["lr_hs_noisy"])
    _write_manifest(out, "simulate", dict(opts), opts["seed"],
                    {"reference": str(Path(args.reference))}, outputs, started, argv)
    print(f"simulated ms {ms.rows}x{ms.cols}x{ms.bands}, lr_hs {lr.rows}x{lr.cols}x{lr.bands}")


def _cmd_train(args, opts, argv) -> None:
    started = time.perf_counter()
    ms = read_cube(_require_file(args.ms, "MS cube"))
    hs = read_cube(_require_file(args.hs, "HS cube"))
    cfg = _train_config(opts)
    echo = " ".join(f"{k}={_fmt(v)}" for k, v in cfg.to_dict().items())
    print(f"config: {echo}")
    training_set, _ = prepare_training_set(ms, hs, cfg)
    net, history = train(training_set, cfg)
    out = _out_dir(opts)
    model_path = out / "model.hsnet"
    loss_path = out / "loss.csv"
    save_model(net, model_path, cfg.to_dict())
    with open(loss_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss"])
        for epoch, loss in enumerate(history, start=1):
            writer.writerow([epoch, _fmt(loss)])
    _write_manifest(out, "train", cfg.to_dict(), cfg.seed,
                    {"ms": str(Path(args.ms)), "hs": str(Path(args.hs))},
                    {"model": str(model_path), "loss": str(loss_path)}, started, argv)
    print(f"trained {cfg.epochs} epochs; final mean loss {history[-1]:.6g}")


def _cmd_fuse(args, opts, argv) -> None:
    started = time.perf_counter()
    model_path = _require_file(args.model, "model file")
    ms = read_cube(_require_file(args.ms, "MS cube"))
    hs = read_cube(_require_file(args.hs, "HS cube"))
    if opts["mode"] not in ("full", "reduced"):
        raise UsageError(f"--mode must be full or reduced, got {opts['mode']!r}")
    net, cfg_dict = load_model(model_path)
    if cfg_dict is None:
        raise UsageError(f"{model_path}: model file lacks a training config")
    cfg = TrainConfig.from_mapping(cfg_dict)
    model = pca_decompose(hs)
    result = fuse(net, ms, hs, model, cfg, opts["mode"])
    out = _out_dir(opts)
    fused_path = out / opts["out"]
    write_cube(result.fused, fused_path)
    _write_manifest(out, "fuse", {**cfg.to_dict(), "mode": opts["mode"]}, cfg.seed,
                    {"model": str(model_path), "ms": str(Path(args.ms)), "hs": str(Path(args.hs))},
                    {"fused": str(fused_path)}, started, argv)
    f = result.fused
    print(f"fused cube {f.rows}x{f.cols}x{f.bands} -> {fused_path}")


def _cmd_evaluate(args, opts, argv) -> None:
    started = time.perf_counter()
    reference = read_cube(_require_file(args.reference, "reference cube"))
    estimate = read_cube(_require_file(args.estimate, "estimate cube"))
    report = evaluate_pair(reference, estimate, opts["ratio"])
    out = _out_dir(opts)
    csv_path = out / opts["out"]
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "ergas", "sam_deg", "ssim", "ratio", "sam_skipped"])
        writer.writerow(
            [opts["label"], _fmt(report.ergas), _fmt(report.sam_deg),
             _fmt(report.ssim), _fmt(opts["ratio"]), report.sam_skipped]
        )
    _write_manifest(out, "evaluate", dict(opts), opts["seed"],
                    {"reference": str(Path(args.reference)), "estimate": str(Path(args.estimate))},
                    {"metrics": str(csv_path)}, started, argv)
    print(f"ergas={report.ergas:.6g} sam_deg={report.sam_deg:.6g} ssim={report.ssim:.6g}")


def _cmd_sweep(args, opts, argv) -> None:
    started = time.perf_counter()
    if opts["sweep"] not in ("pcs", "snr", "filter"):
        raise UsageError(f"--sweep must be pcs, snr or filter, got {opts['sweep']!r}")
    if opts["values"] is None:
        raise UsageError("--values is required for sweep")
    if opts["mode"] not in ("full", "reduced"):
        raise UsageError(f"--mode must be full or reduced, got {opts['mode']!r}")
    if opts["trials"] < 1:
        raise UsageError("--trials must be >= 1")
    reference = read_cube(_require_file(args.reference, "reference cube"))
    response = _load_response(opts["response"], reference.bands)
    settings = parse_sweep_values(opts["sweep"], opts["values"])
    base_cfg = _train_config(opts)
    fixed_snr = _parse_snr(opts["snr"])
    rows = run_sweep(
        reference, response, opts["sweep"], settings,
        trials=opts["trials"], base_cfg=base_cfg, mode=opts["mode"], fixed_snr_db=fixed_snr,
    )
    out = _out_dir(opts)
    csv_path = out / f"sweep_{opts['sweep']}.csv"
    write_sweep_csv(csv_path, rows)
    _write_manifest(out, "sweep", {**base_cfg.to_dict(), "sweep": opts["sweep"],
                                   "values": opts["values"], "trials": opts["trials"],
                                   "mode": opts["mode"], "snr": opts["snr"]},
                    opts["seed"], {"reference": str(Path(args.reference))},
                    {"csv": str(csv_path)}, started, argv)
    print(f"swept {len(settings)} settings x {opts['trials']} trials -> {csv_path}")


def _cmd_plot(args, opts, argv) -> None:
    started = time.perf_counter()
    csv_path = _require_file(args.csv, "CSV file")
    metric = opts["metric"]
    if metric not in ("ergas", "sam_deg", "ssim"):
        raise UsageError(f"--metric must be ergas, sam_deg or ssim, got {metric!r}")
    kind = plots.csv_kind(csv_path)
    if opts["out"] is not None:
        out_path = Path(opts["out"])
    elif kind == "loss":
        out_path = csv_path.with_suffix(".png")
    else:
        out_path = csv_path.with_name(f"{csv_path.stem}_{metric}.png")
    if kind == "loss":
        plots.render_loss_plot(csv_path, out_path)
    else:
        plots.render_sweep_plot(csv_path, metric, out_path)
    _write_manifest(out_path.parent, "plot", dict(opts), opts["seed"],
                    {"csv": str(csv_path)}, {"figure": str(out_path)}, started, argv)
    print(f"wrote {out_path}")


# ---------------------------------------------------------------------------
# sweep engine
# ---------------------------------------------------------------------------


def parse_sweep_values(kind: str, text: str) -> list:
    """Comma list ('2,6,10' / 'bicubic,nearest') or inclusive 'lo:hi:step'."""
    text = text.strip()
    if not text:
        raise UsageError("empty sweep values")
    if kind == "filter":
        try:
            return [FilterKind.parse(tok).value for tok in text.split(",") if tok.strip()]
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError(f"range must be lo:hi:step, got {text!r}")
        try:
            lo, hi, step = (float(p) for p in parts)
        except ValueError:
            raise UsageError(f"non-numeric range bound in {text!r}") from None
        if step <= 0 or hi < lo:
            raise UsageError(f"need lo <= hi and step > 0 in {text!r}")
        count = int(math.floor((hi - lo) / step + 1e-9)) + 1
        values = [lo + i * step for i in range(count)]
    else:
        try:
            values = [float(tok) for tok in text.split(",")]
        except ValueError:
            raise UsageError(f"non-numeric sweep value in {text!r}") from None
    if kind == "pcs":
        if any(v != int(v) or v < 1 for v in values):
            raise UsageError(f"pcs settings must be positive integers, got {text!r}")
        return [int(v) for v in values]
    return values


def derive_seed(base_seed: int, setting_index: int, trial: int) -> int:
    """Distinct deterministic seed per (setting, trial)."""
    ss = np.random.SeedSequence([base_seed, setting_index, trial])
    return int(ss.generate_state(1)[0])


def run_sweep(
    reference: ImageCube,
    response: SpectralResponse,
    kind: str,
    settings: list,
    trials: int,
    base_cfg: TrainConfig,
    mode: str = "full",
    fixed_snr_db: float = math.inf,
) -> list[dict]:
    """Retrain and fuse per (setting, trial); one metrics row each."""
    from dataclasses import replace

    rows: list[dict] = []
    ratio = 1.0 / base_cfg.scale_factor
    for si, setting in enumerate(settings):
        cfg = base_cfg
        if kind == "pcs":
            cfg = replace(base_cfg, r=int(setting))
        elif kind == "filter":
            cfg = replace(base_cfg, filter=FilterKind.parse(setting))
        ms, lr = make_wald_pair(reference, response, cfg.scale_factor, cfg.filter)
        for trial in range(trials):
            seed = derive_seed(base_cfg.seed, si, trial)
            cfg_t = replace(cfg, seed=seed)
            lr_t = lr
            snr_db = float(setting) if kind == "snr" else fixed_snr_db
            if math.isfinite(snr_db):
                lr_t = add_noise(lr, snr_db, np.random.default_rng([seed, STREAM_NOISE]))
            training_set, model = prepare_training_set(ms, lr_t, cfg_t)
            net, _ = train(training_set, cfg_t)
            result = fuse(net, ms, lr_t, model, cfg_t, mode)
            report = evaluate_pair(reference, result.fused, ratio)
            rows.append(_sweep_row(kind, setting, trial, seed, report))
    return rows


def _sweep_row(kind: str, setting, trial, seed, report: MetricsReport) -> dict:
    return {
        "sweep": kind,
        "setting": _fmt(setting),
        "trial": trial,
        "seed": seed,
        "ergas": report.ergas,
        "sam_deg": report.sam_deg,
        "ssim": report.ssim,
    }


def write_sweep_csv(path: str | Path, rows: list[dict]) -> None:
    """Long-form trial rows plus mean/std summary rows per setting."""
    by_setting: dict[str, list[dict]] = {}
    for row in rows:
        by_setting.setdefault(row["setting"], []).append(row)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sweep", "setting", "trial", "seed", "ergas", "sam_deg", "ssim"])
        for row in rows:
            writer.writerow(
                [row["sweep"], row["setting"], row["trial"], row["seed"],
                 _fmt(row["ergas"]), _fmt(row["sam_deg"]), _fmt(row["ssim"])]
            )
        for setting, group in by_setting.items():
            kind = group[0]["sweep"]
            for stat, fn in (("mean", np.mean), ("std", np.std)):
                writer.writerow(
                    [kind, setting, stat, "",
                     _fmt(float(fn([g["ergas"] for g in group]))),
                     _fmt(float(fn([g["sam_deg"] for g in group]))),
                     _fmt(float(fn([g["ssim"] for g in group])))]
                )


if __name__ == "__main__":
    sys.exit(main())
