"""Command-line pipeline: data generation, ingestion, calibration,
generation, evaluation and report rendering.

Settings resolve as defaults < config file < ``JUMPBRIDGE_*`` environment
variables < flags. Every run writes ``manifest.json`` next to its outputs;
passing that manifest back as ``--config`` reproduces the run.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
from dataclasses import replace
from importlib import metadata
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .calibrate import Budget, CalibrationGrid, run_full_procedure
from .core import (
    DEFAULT_SUBSTEPS,
    Dataset,
    KernelConfig,
    ReferenceParams,
    RngSpec,
    TimeGrid,
    denormalize,
    load_csv,
    load_dataset,
    normalize,
    save_dataset,
)
from .errors import DataError, JumpBridgeError, StateError, UsageError
from .metrics.report import MetricReport, evaluate, write_tables
from .metrics.scores import NetConfig
from .simulate import SimConfig, jump_table, simulate, to_dataset
from .synthdata import MertonParams, OUParams, gen_merton, gen_ou

ENV_PREFIX = "JUMPBRIDGE_"
SCHEME_CHOICES = ("euler", "jump-adapted", "pure-jump")

_COMMON = {"seed": 0, "out": None, "workers": 1}
_GRID = {"n_intervals": 100, "dt": 1.0 / 252.0, "substeps": DEFAULT_SUBSTEPS, "fine_substeps": 1}
_MODEL = {
    "sigma": 1.0,
    "gamma": 1.0,
    "lambda0": 0.0,
    "c": 0.0,
    "bandwidth": 0.3,
    "markov_order": 1,
    "n_jumps_trunc": None,
    "scheme": "euler",
}
_NET = {"runs": 10, "epochs": 50, "batch_size": 128, "lr": 1e-3, "hidden": None}

DEFAULTS: dict[str, dict] = {
    "simulate-merton": {**_COMMON, **_GRID, "n": 1000, "a": 0.0, "b": 2.0, "lambda_eta": 10.0, "m_J": 0.0, "v_J": 0.8, "y0": 1.0},
    "simulate-ou": {**_COMMON, **_GRID, "n": 1000, "theta": 100.0, "a": 1.0, "b": 10.0, "y0": 1.0},
    "ingest": {
        **_COMMON,
        "data": None,
        "window_len": 24,
        "stride": 1,
        "dt": 1.0 / 252.0,
        "substeps": DEFAULT_SUBSTEPS,
        "skip_first_column": False,
        "normalize": [],
        "scope": "pooled",
    },
    "calibrate": {
        **_COMMON,
        **_NET,
        "data": None,
        "n": 200,
        "scheme": "euler",
        "substeps": None,
        "bandwidth": None,
        "markov_order": None,
        "h_values": [0.1, 0.2, 0.3],
        "k_values": [1, 2],
        "sigma_values": [0.5, 1.0, 2.0, 3.0],
        "gamma_values": [0.5, 0.8, 1.0, 1.5, 2.0, 3.0],
        "lambda0_values": [],
        "lambda0_factors": [1.0, 2.0, 4.0, 8.0],
        "c": 0.0,
        "realizations": 20,
        "n_test": 20,
        "keep_per_component": 2,
    },
    "generate": {**_COMMON, **_MODEL, "data": None, "n": 500, "substeps": None, "record_jumps": False},
    "evaluate": {**_COMMON, **_NET, "real": None, "synth": None, "scores": True},
    "report": {**_COMMON, "metrics": None, "real": None, "synth": None},
}

# keys whose values are paths to inputs; never overwritten by outputs
_INPUT_KEYS = ("data", "real", "synth", "metrics")

log = logging.getLogger("jumpbridge")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _json_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="jumpbridge", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in DEFAULTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config or a manifest from a previous run")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--workers", type=int)
        if name in ("simulate-merton", "simulate-ou", "calibrate", "generate"):
            sp.add_argument("--n", type=int, help="number of series to simulate")
            sp.add_argument("--substeps", type=int)
        if name in ("calibrate", "generate"):
            sp.add_argument("--scheme", choices=SCHEME_CHOICES)
            sp.add_argument("--bandwidth", type=float)
            sp.add_argument("--markov-order", dest="markov_order", type=int)
        if name in ("ingest", "calibrate", "generate"):
            sp.add_argument("--data", help="input dataset")
        if name in ("evaluate", "report"):
            sp.add_argument("--real")
            sp.add_argument("--synth")
        if name == "report":
            sp.add_argument("--metrics")
        if name == "ingest":
            sp.add_argument("--window-len", dest="window_len", type=int)
            sp.add_argument("--stride", type=int)
            sp.add_argument("--normalize", action="append", help="repeatable: base_one, standard, increments_rescale")
        if name == "generate":
            sp.add_argument("--sigma", type=_json_value)
            sp.add_argument("--gamma", type=_json_value)
            sp.add_argument("--lambda0", type=float)
            sp.add_argument("--c", type=_json_value)
            sp.add_argument("--record-jumps", dest="record_jumps", action="store_true", default=None)
        if name in ("evaluate", "calibrate"):
            sp.add_argument("--runs", type=int)
            sp.add_argument("--epochs", type=int)
        if name == "evaluate":
            sp.add_argument("--no-scores", dest="scores", action="store_false", default=None)
    return p


def resolve_config(command: str, args: argparse.Namespace, environ=os.environ) -> dict:
    cfg = dict(DEFAULTS[command])
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise DataError(f"config file {path} does not exist")
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {path} is not valid JSON: {exc}") from None
        if "config" in loaded and "command" in loaded:
            loaded = loaded["config"]
        unknown = set(loaded) - set(cfg)
        if unknown:
            raise UsageError(f"unknown config keys for {command}: {sorted(unknown)}")
        cfg.update(loaded)
    for key in cfg:
        env = environ.get(ENV_PREFIX + key.upper())
        if env is not None:
            cfg[key] = _json_value(env)
    for key, value in vars(args).items():
        if key in ("command", "config") or value is None:
            continue
        cfg[key] = value
    if cfg.get("out") is None:
        raise UsageError("--out is required")
    return cfg


def _require(cfg: dict, *keys: str):
    for key in keys:
        if cfg.get(key) in (None, ""):
            raise UsageError(f"--{key.replace('_', '-')} is required")


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for pkg in ("numpy", "scipy", "numba", "matplotlib"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def _write_manifest(out: Path, command: str, cfg: dict, outputs: Sequence[Path]) -> Path:
    manifest = {
        "command": command,
        "config": cfg,
        "seed": cfg["seed"],
        "versions": _versions(),
        "outputs": sorted(str(p) for p in outputs),
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return path


def _with_substeps(ds: Dataset, substeps) -> Dataset:
    if substeps is None or int(substeps) == ds.grid.substeps:
        return ds
    return replace(ds, grid=TimeGrid(ds.grid.dates, int(substeps)))


def _scheme(name: str) -> str:
    return name.replace("-", "_")


def _grid(cfg: dict) -> TimeGrid:
    return TimeGrid.uniform(int(cfg["n_intervals"]), float(cfg["dt"]), int(cfg["substeps"]))


def cmd_simulate_merton(cfg: dict, out: Path) -> list[Path]:
    p = MertonParams(cfg["a"], cfg["b"], cfg["lambda_eta"], cfg["m_J"], cfg["v_J"], cfg["y0"])
    ds = gen_merton(p, _grid(cfg), int(cfg["n"]), int(cfg["fine_substeps"]), RngSpec(cfg["seed"]))
    return [save_dataset(ds, out / "data.csv")]


def cmd_simulate_ou(cfg: dict, out: Path) -> list[Path]:
    p = OUParams(cfg["theta"], cfg["a"], cfg["b"], cfg["y0"])
    ds = gen_ou(p, _grid(cfg), int(cfg["n"]), int(cfg["fine_substeps"]), RngSpec(cfg["seed"]))
    return [save_dataset(ds, out / "data.csv")]


def cmd_ingest(cfg: dict, out: Path) -> list[Path]:
    _require(cfg, "data")
    ds = load_csv(cfg["data"], "wide", int(cfg["window_len"]), int(cfg["stride"]), float(cfg["dt"]),
                  bool(cfg["skip_first_column"]), int(cfg["substeps"]))
    kinds = cfg["normalize"]
    for kind in [kinds] if isinstance(kinds, str) else kinds:
        ds = normalize(ds, kind, cfg["scope"])
    return [save_dataset(ds, out / "data.csv")]


def cmd_calibrate(cfg: dict, out: Path) -> list[Path]:
    _require(cfg, "data")
    ds = _with_substeps(load_dataset(cfg["data"]), cfg["substeps"])
    h_values = [cfg["bandwidth"]] if cfg["bandwidth"] is not None else cfg["h_values"]
    k_values = [cfg["markov_order"]] if cfg["markov_order"] is not None else cfg["k_values"]
    grid = CalibrationGrid(
        tuple(h_values), tuple(int(k) for k in k_values), tuple(cfg["sigma_values"]), tuple(cfg["gamma_values"]),
        tuple(cfg["lambda0_values"]), tuple(cfg["lambda0_factors"]), float(cfg["c"]),
        initial_h=cfg["bandwidth"], initial_k=cfg["markov_order"],
    )
    budget = Budget(
        n_synth=int(cfg["n"]), disc_runs=int(cfg["runs"]), realizations=int(cfg["realizations"]),
        n_test=int(cfg["n_test"]), scheme=_scheme(cfg["scheme"]), workers=int(cfg["workers"]), seed=int(cfg["seed"]),
        net=NetConfig(int(cfg["epochs"]), int(cfg["batch_size"]), float(cfg["lr"]), hidden=cfg["hidden"]),
    )
    pure = _scheme(cfg["scheme"]) == "pure_jump"
    result = run_full_procedure(ds, grid, budget, pure_jump=pure, keep_per_component=int(cfg["keep_per_component"]))
    sel = result.selected
    print(json.dumps({k: sel[k] for k in ("sigma", "gamma", "lambda0", "h", "k", "disc_mean")}, sort_keys=True))
    paths = [out / "calibration.json", out / "calibration.csv"]
    result.save(*paths)
    gen_cfg = {
        "data": str(cfg["data"]), "sigma": sel["sigma"], "gamma": sel["gamma"], "lambda0": sel["lambda0"],
        "c": sel["c"], "bandwidth": sel["h"], "markov_order": sel["k"], "scheme": cfg["scheme"],
        "seed": int(cfg["seed"]), "workers": int(cfg["workers"]),
    }
    if cfg["substeps"] is not None:
        gen_cfg["substeps"] = cfg["substeps"]
    gen_path = out / "generate.json"
    gen_path.write_text(json.dumps(gen_cfg, indent=1, sort_keys=True) + "\n")
    return [*paths, gen_path]


def model_from_config(cfg: dict, ds: Dataset) -> tuple[KernelConfig, ReferenceParams, str]:
    scheme = _scheme(cfg["scheme"])
    pure = scheme == "pure_jump"
    sigma = 0.0 if pure else cfg["sigma"]
    # scalars apply to every dimension of the data
    sigma, c, gamma = (np.broadcast_to(np.asarray(v, dtype=float), (ds.dim,)) if np.ndim(v) == 0 else v
                       for v in (sigma, cfg["c"], cfg["gamma"]))
    params = ReferenceParams(sigma, float(cfg["lambda0"]), c, gamma, pure_jump=pure)
    params = params.resolved(ds.grid.max_dt, cfg["n_jumps_trunc"])
    kcfg = KernelConfig(float(cfg["bandwidth"]), int(cfg["markov_order"]))
    kcfg.check_grid(ds.n_intervals)
    return kcfg, params, scheme


def _write_denormalized(synth: Dataset, out: Path) -> Path:
    """Undo as many normalizations as the synthetic series allow.

    Per-series records (for instance base-one windows) only invert on the
    series they were fitted on; generation stops at that scale.
    """
    try:
        return save_dataset(denormalize(synth), out / "synthetic_original_scale.csv")
    except StateError as exc:
        kinds = [r.kind for r in synth.norm_meta]
        for kind in reversed(kinds[:-1]):
            try:
                partial = denormalize(synth, stop_at=kind)
            except StateError:
                continue
            log.warning("%s; writing the %s scale instead", exc, kind)
            return save_dataset(partial, out / f"synthetic_{kind}_scale.csv")
        raise


def cmd_generate(cfg: dict, out: Path) -> list[Path]:
    _require(cfg, "data")
    ds = _with_substeps(load_dataset(cfg["data"]), cfg["substeps"])
    kcfg, params, scheme = model_from_config(cfg, ds)
    sim = SimConfig(scheme, int(cfg["n"]), RngSpec(int(cfg["seed"])), bool(cfg["record_jumps"]), workers=int(cfg["workers"]))
    series = simulate(ds, kcfg, params, sim)
    synth = to_dataset(series, ds)
    written = [save_dataset(synth, out / "synthetic.csv")]
    if synth.norm_meta:
        written.append(_write_denormalized(synth, out))
    if cfg["record_jumps"]:
        path = out / "jumps.csv"
        table = jump_table(series)
        header = "series_id,t," + ",".join(f"size_{n}" for n in ds.feature_names)
        with path.open("w") as fh:
            fh.write(header + "\n")
            for row in table:
                fh.write(",".join([str(int(row[0])), *(repr(float(v)) for v in row[1:])]) + "\n")
        written.append(path)
    return written


def cmd_evaluate(cfg: dict, out: Path) -> list[Path]:
    _require(cfg, "real", "synth")
    real, synth = load_dataset(cfg["real"]), load_dataset(cfg["synth"])
    if real.grid.dates != synth.grid.dates or real.dim != synth.dim:
        raise DataError("real and synthetic datasets must share dates and dimension")
    net = NetConfig(int(cfg["epochs"]), int(cfg["batch_size"]), float(cfg["lr"]), hidden=cfg["hidden"])
    rep = evaluate(real, synth, bool(cfg["scores"]), int(cfg["runs"]), net, RngSpec(int(cfg["seed"])), int(cfg["workers"]))
    path = out / "metrics.json"
    rep.save(path)
    return [path, *write_tables(real, synth, rep, out)]


def cmd_report(cfg: dict, out: Path) -> list[Path]:
    from .plotting import render_report

    _require(cfg, "metrics")
    mpath = Path(cfg["metrics"])
    if not mpath.exists():
        raise DataError(f"metrics file {mpath} does not exist")
    metrics = json.loads(mpath.read_text() or "{}")
    if metrics:
        MetricReport.from_json(metrics)
    real = load_dataset(cfg["real"]) if cfg.get("real") else None
    synth = load_dataset(cfg["synth"]) if cfg.get("synth") else None
    return render_report(metrics, out, mpath.parent, real, synth)


COMMANDS: dict[str, Callable[[dict, Path], list[Path]]] = {
    "simulate-merton": cmd_simulate_merton,
    "simulate-ou": cmd_simulate_ou,
    "ingest": cmd_ingest,
    "calibrate": cmd_calibrate,
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def _check_distinct(cfg: dict, out: Path):
    for key in _INPUT_KEYS:
        if cfg.get(key) and Path(cfg[key]).resolve().parent == out.resolve():
            raise UsageError(f"--out must differ from the directory holding --{key}")


def run(argv: Sequence[str] | None = None, environ=os.environ) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args.command, args, environ)
        out = Path(cfg["out"])
        _check_distinct(cfg, out)
        out.mkdir(parents=True, exist_ok=True)
        outputs = COMMANDS[args.command](cfg, out)
        _write_manifest(out, args.command, cfg, outputs)
        return 0
    except JumpBridgeError as exc:
        _report_error(type(exc).__name__, str(exc), exc.exit_code)
        return exc.exit_code
    except (OSError, json.JSONDecodeError) as exc:
        _report_error(type(exc).__name__, str(exc), DataError.exit_code)
        return DataError.exit_code
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        _report_error(type(exc).__name__, str(exc), 3)
        return 3


def _report_error(kind: str, message: str, code: int):
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")


def main() -> None:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    sys.exit(run())
