"""Command line front end: JSON config in, CSV/JSON results out.

    recouple run CONFIG [--out DIR] [--threads N] [--seed S]
    recouple validate CONFIG
    recouple preset NAME [--out DIR] [--threads N] [--seed S]

Exit codes: 0 success, 1 invalid config, 2 runtime failure.  The output
directory defaults to ``$RECOUPLE_OUTPUT_DIR`` and then ``./out``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .aht import average0
from .algebra import LETTERS, OperatorSum
from .experiments import (DEFAULT_DT_FACTOR, DEFAULT_TAU_D, DEFAULT_TAU_DW, fidelity_scan, log_grid,
                          recoupling_check, recoupling_table, selectivity_error,
                          symmetry_order_check)
from .io import (operator_to_json, report_to_json, symmetry_to_json, write_csv, write_json,
                 write_scan_csv)
from .model import Geometry, SpinSystem, build_dipolar, build_zeeman
from .sequence import (PLAIN, SYMMETRIZED, SequenceSyntaxError, build_mrev16, build_super_whh,
                       build_w_cycle, build_whh4, expand_cycle, parse_mansfield)

log = logging.getLogger("recouple")

OUTPUT_ENV = "RECOUPLE_OUTPUT_DIR"
EXPERIMENTS = ("fidelity-scan", "recoupling-check", "selectivity", "symmetry-check", "average")
PRESETS = ("fig2", "table1", "recouple3", "mrev16-offsets")
EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


@dataclass(frozen=True)
class Diagnostic:
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


class ConfigError(ValueError):
    """Config text that is not valid JSON."""


def load_config(text: str) -> dict:
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("line 1, column 1: config must be a JSON object")
    return cfg


def load_preset(name: str) -> dict:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    text = resources.files("recouple").joinpath("presets", f"{name}.json").read_text()
    return load_config(text)


# -- building objects from config ---------------------------------------------

def build_system(spec: dict) -> SpinSystem:
    offsets = spec.get("offsets")
    if "geometry" in spec:
        g = spec["geometry"]
        geom = Geometry(np.asarray(g["positions"], dtype=float),
                        **{k: g[k] for k in ("gamma", "field_axis") if k in g})
        return SpinSystem.from_geometry(geom, offsets)
    if "couplings" in spec:
        return SpinSystem(np.asarray(offsets, dtype=float), np.asarray(spec["couplings"], dtype=float))
    pairs = {(int(k), int(l)): float(d) for k, l, d in spec.get("pairs", [])}
    return SpinSystem.from_pairs(offsets, pairs)


def build_sequence(spec: dict):
    if "mansfield" in spec:
        return expand_cycle(spec["mansfield"], float(spec["tau"]))
    name = spec["builder"]
    if name == "whh4":
        return build_whh4(float(spec["tau"]))
    if name == "mrev16":
        return build_mrev16(float(spec["tau"]))
    if name == "super-whh":
        return build_super_whh(int(spec["k"]), int(spec["l"]), float(spec["T"]),
                               spec.get("mode", PLAIN), spec.get("pi_train_spacing")).sequence
    if name == "w-cycle":
        assign = {int(k): v for k, v in spec["assign"].items()}
        return build_w_cycle(assign, float(spec["T"]), spec.get("pi_train_spacing"))
    raise ValueError(f"unknown sequence builder {name!r}")


def _coeff(value) -> complex:
    if isinstance(value, (list, tuple)):
        return complex(value[0], value[1])
    return complex(value)


def build_operator(spec: dict, system: SpinSystem | None) -> OperatorSum:
    if spec.get("dipolar"):
        return build_dipolar(system)
    if spec.get("zeeman"):
        return build_zeeman(system)
    terms = spec["terms"]
    n = len(next(iter(terms)))
    return OperatorSum(n, {w: _coeff(c) for w, c in terms.items()})


def _axis(spec, default):
    if spec is None:
        return log_grid(*default)
    if isinstance(spec, dict):
        return log_grid(float(spec["min"]), float(spec["max"]), int(spec["num"]))
    return np.asarray(spec, dtype=float)


# -- validation ----------------------------------------------------------------

def validate(cfg: dict) -> list[Diagnostic]:
    """Diagnostics for a parsed config; empty when it can run."""
    out: list[Diagnostic] = []
    exp = cfg.get("experiment")
    if exp not in EXPERIMENTS:
        return [Diagnostic("experiment", f"must be one of {', '.join(EXPERIMENTS)}")]
    params = cfg.get("params", {})
    if not isinstance(params, dict):
        return [Diagnostic("params", "must be an object")]
    if "seed" in cfg and not isinstance(cfg["seed"], int):
        out.append(Diagnostic("seed", "must be an integer"))
    fmt = cfg.get("output", {}).get("format")
    if fmt is not None and fmt not in ("csv", "json"):
        out.append(Diagnostic("output.format", "must be 'csv' or 'json'"))

    system = None
    if "system" in cfg:
        system = _check(out, "system", lambda: build_system(cfg["system"]))
    if exp == "fidelity-scan":
        for key, default in (("tau_D", DEFAULT_TAU_D), ("tau_dw", DEFAULT_TAU_DW)):
            grid = _check(out, f"params.{key}", lambda: _axis(params.get(key), default))
            if grid is not None and (grid.size == 0 or np.any(grid <= 0)):
                out.append(Diagnostic(f"params.{key}", "grid must be nonempty and positive"))
        if int(params.get("seeds", 3)) < 1:
            out.append(Diagnostic("params.seeds", "need at least one seed"))
        if float(params.get("rf_ratio", 0.01)) <= 0:
            out.append(Diagnostic("params.rf_ratio", "must be positive"))
    elif exp == "recoupling-check":
        n = params.get("n")
        if not isinstance(n, int) or n < 2:
            out.append(Diagnostic("params.n", "need an integer spin count >= 2"))
        else:
            for key in ("k", "l"):
                v = params.get(key)
                if not isinstance(v, int) or not 0 <= v < n:
                    out.append(Diagnostic(f"params.{key}", f"spin index {v!r} outside 0..{n - 1}"))
            if params.get("k") == params.get("l"):
                out.append(Diagnostic("params.l", "target spins must differ"))
            if system is not None and system.n != n:
                out.append(Diagnostic("system", f"has {system.n} spins, params.n is {n}"))
        if not float(params.get("T", 0)) > 0:
            out.append(Diagnostic("params.T", "must be positive"))
        if params.get("mode", SYMMETRIZED) not in (PLAIN, SYMMETRIZED):
            out.append(Diagnostic("params.mode", f"must be {PLAIN} or {SYMMETRIZED}"))
    elif exp == "selectivity":
        if float(params.get("omega_rf", 1.0)) <= 0:
            out.append(Diagnostic("params.omega_rf", "must be positive"))
        if not params.get("ratios"):
            out.append(Diagnostic("params.ratios", "need at least one ratio"))
    else:
        if "sequence" not in cfg:
            out.append(Diagnostic("sequence", "required for this experiment"))
        else:
            seq_spec = cfg["sequence"]
            if "mansfield" in seq_spec:
                try:
                    parse_mansfield(seq_spec["mansfield"])
                except SequenceSyntaxError as exc:
                    col = f" (column {exc.column})" if exc.column else ""
                    out.append(Diagnostic("sequence.mansfield", f"{exc}{col}"))
                    return out
            seq = _check(out, "sequence", lambda: build_sequence(seq_spec))
            op_spec = cfg.get("operator")
            if op_spec is None:
                out.append(Diagnostic("operator", "required for this experiment"))
            else:
                if (op_spec.get("dipolar") or op_spec.get("zeeman")) and system is None:
                    out.append(Diagnostic("operator", "needs a system"))
                else:
                    op = _check(out, "operator", lambda: build_operator(op_spec, system))
                    if op is not None and op_spec.get("terms"):
                        bad = [w for w in op_spec["terms"] if set(w) - set(LETTERS)]
                        if bad:
                            out.append(Diagnostic("operator.terms", f"bad words {bad}"))
                    if seq is not None and op is not None:
                        _check_sites(out, seq, op.n)
    return out


def _check(out, path, fn):
    try:
        return fn()
    except SequenceSyntaxError as exc:
        col = f" (column {exc.column})" if exc.column else ""
        out.append(Diagnostic(path, f"{exc}{col}"))
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        out.append(Diagnostic(path, str(exc)))
    return None


def _check_sites(out, seq, n):
    for e in seq.events:
        site = getattr(getattr(e, "rotation", None), "site", None)
        if site is not None and not 0 <= site < n:
            out.append(Diagnostic("sequence", f"pulse on spin {site} outside 0..{n - 1}"))
            return


# -- running -------------------------------------------------------------------

def execute(cfg: dict, outdir: Path, threads: int = 1) -> tuple[list[Path], bool]:
    """Run the experiment; returns written files and whether its checks held."""
    exp = cfg["experiment"]
    params = cfg.get("params", {})
    seed = int(cfg.get("seed", 0))
    system = build_system(cfg["system"]) if "system" in cfg else None
    outdir.mkdir(parents=True, exist_ok=True)
    fmt = cfg.get("output", {}).get("format")
    ok = True
    if exp == "fidelity-scan":
        result = fidelity_scan(
            _axis(params.get("tau_D"), DEFAULT_TAU_D), _axis(params.get("tau_dw"), DEFAULT_TAU_DW),
            seeds=int(params.get("seeds", 3)), phase=float(params.get("phase", 0.7)),
            rf_ratio=float(params.get("rf_ratio", 0.01)), tau=float(params.get("tau", 1e-6)),
            seed=seed, dt_factor=cfg.get("dt_factor", DEFAULT_DT_FACTOR), workers=threads)
        if fmt == "json":
            files = [write_json(outdir / "fidelity_scan.json", {
                "x": result.x.tolist(), "y": result.y.tolist(),
                "values": result.values.tolist(), "metadata": result.metadata})]
        else:
            files = [write_scan_csv(result, outdir / "fidelity_scan.csv")]
    elif exp == "recoupling-check":
        report = recoupling_check(
            int(params["n"]), int(params["k"]), int(params["l"]), float(params["T"]),
            params.get("mode", SYMMETRIZED), system=system,
            simulate=bool(params.get("simulate", True)), duration=params.get("duration"),
            seed=seed)
        body = report_to_json(report)
        if params.get("table"):
            body["table"] = {f"{a},{b}": {"entry": v["entry"], "matches": v["matches"],
                                          "average": operator_to_json(v["average"])}
                             for (a, b), v in recoupling_table().items()}
            ok = all(v["matches"] for v in body["table"].values())
        ok = ok and report.exact
        files = [write_json(outdir / "recoupling.json", body)]
    elif exp == "selectivity":
        w = float(params.get("omega_rf", 1.0))
        rows = [(r, *selectivity_error(r * w, w)) for r in params["ratios"]]
        files = [write_csv(outdir / "selectivity.csv", ["ratio", "predicted", "simulated"], rows)]
    else:
        seq = build_sequence(cfg["sequence"])
        op = build_operator(cfg["operator"], system)
        if exp == "average":
            body = {"sequence": seq.describe(), "average": operator_to_json(average0(seq, op))}
            files = [write_json(outdir / "average.json", body)]
        else:
            rep = symmetry_order_check(seq, op)
            files = [write_json(outdir / "symmetry.json", symmetry_to_json(rep))]
    return files, ok


def _manifest(cfg, files, wall, ok) -> dict:
    return {
        "config": cfg,
        "outputs": [f.name for f in files],
        "seed": cfg.get("seed", 0),
        "checks_passed": ok,
        "wall_time_s": wall,
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "versions": {"recouple": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
    }


def run(cfg: dict, outdir: Path, threads: int = 1) -> int:
    diags = validate(cfg)
    if diags:
        for d in diags:
            print(f"error: {d}", file=sys.stderr)
        return EXIT_INVALID
    start = time.perf_counter()
    try:
        files, ok = execute(cfg, outdir, threads)
    except (OSError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    wall = time.perf_counter() - start
    write_json(outdir / "manifest.json", _manifest(cfg, files, wall, ok))
    for f in files:
        print(f)
    if not ok:
        print("error: experiment checks failed", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _outdir(arg, cfg) -> Path:
    if arg:
        return Path(arg)
    if cfg.get("output", {}).get("dir"):
        return Path(cfg["output"]["dir"])
    return Path(os.environ.get(OUTPUT_ENV, "out"))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="recouple", description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=int, default=1, help="worker processes for scans")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a config file")
    p_run.add_argument("config")
    p_run.add_argument("--out")
    p_val = sub.add_parser("validate", help="check a config file")
    p_val.add_argument("config")
    p_pre = sub.add_parser("preset", help="run a bundled preset")
    p_pre.add_argument("name", choices=PRESETS)
    p_pre.add_argument("--out")
    for p in (p_run, p_pre):
        p.add_argument("--threads", type=int, default=argparse.SUPPRESS)
        p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)

    try:
        if args.command == "preset":
            cfg = load_preset(args.name)
        else:
            cfg = load_config(Path(args.config).read_text(encoding="utf-8"))
    except ConfigError as exc:
        print(f"error: config parse failure at {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    if args.command == "validate":
        diags = validate(cfg)
        for d in diags:
            print(f"error: {d}", file=sys.stderr)
        return EXIT_INVALID if diags else EXIT_OK
    if args.seed is not None:
        cfg["seed"] = args.seed
    return run(cfg, _outdir(args.out, cfg), max(1, args.threads))


if __name__ == "__main__":
    sys.exit(main())
