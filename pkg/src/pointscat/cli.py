"""Command-line front end: ``pointscat <subcommand> [options]``.

Every subcommand can take its parameters from a JSON config file
(``--config``) and/or flags; flags win.  Outputs are written to a temporary
name and renamed into place only after everything succeeded.

Exit status: 0 success, 1 a validation check failed, 2 bad input.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataop import (DataOperator, closed_form_operator, default_lambda, perturb_operator,
                     simulated_operator)
from .errors import ScatteringError
from .forward import default_step, sensor_traces
from .interaction import sup_spectrum_estimate
from .music import DEFAULT_RANK_TOL, reconstruct
from .scene import GridSpec, load_scene, pairwise_distances, validate_scene

__all__ = ["ExperimentConfig", "main", "run"]

THREADS_ENV = "POINTSCAT_THREADS"


class InputError(Exception):
    """Bad command-line or config input (exit status 2)."""


@dataclass
class ExperimentConfig:
    scene: str | None = None
    lam: float | None = None
    grid: dict | None = None
    T: float | None = None
    h: float | None = None
    epsilon: float | None = None
    noise: float | None = None
    seed: int | None = None
    rank_tol: float | None = None
    tol: float | None = None
    mode: str | None = None
    count: str | int | None = None
    min_separation: float | None = None
    threads: int | None = None
    extra: dict = field(default_factory=dict, repr=False)

    _POSITIVE = ("lam", "T", "h", "epsilon", "rank_tol", "tol", "min_separation", "threads")

    @classmethod
    def from_file(cls, path):
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except OSError as exc:
            raise InputError(f"cannot read config {path}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise InputError(f"config {path} is not valid JSON: {exc.msg} (line {exc.lineno})") from exc
        if not isinstance(data, dict):
            raise InputError(f"config {path} must be a JSON object")
        data = dict(data)
        if "lambda" in data:
            data["lam"] = data.pop("lambda")
        known = {k for k in cls.__dataclass_fields__ if k != "extra"}
        unknown = sorted(set(data) - known)
        if unknown:
            raise InputError(f"unknown config keys: {', '.join(unknown)}")
        cfg = cls(**data)
        if cfg.scene is not None and not Path(cfg.scene).is_absolute():
            cfg.scene = str(path.parent / cfg.scene)
        return cfg

    def merge(self, args):
        for name in self.__dataclass_fields__:
            value = getattr(args, name, None)
            if value is not None:
                setattr(self, name, value)
        return self

    def check(self):
        for name in self._POSITIVE:
            value = getattr(self, name)
            if value is not None and not (isinstance(value, (int, float)) and value > 0):
                raise InputError(f"{name} must be a positive number, got {value!r}")
        if self.noise is not None and not (isinstance(self.noise, (int, float))
                                           and self.noise >= 0):
            raise InputError(f"noise must be a nonnegative number, got {self.noise!r}")
        if self.scene is not None and not Path(self.scene).is_file():
            raise InputError(f"scene file not found: {self.scene}")
        return self

    def resolved(self, **defaults):
        out = {k: v for k, v in asdict(self).items() if k != "extra"}
        out["lambda"] = out.pop("lam")
        out.update(defaults)
        return out


# ---------------------------------------------------------------------------
# output helpers

def _dump_json(obj):
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([f"{v:.17g}" for v in row])
    return buf.getvalue()


def _write_outputs(outputs):
    """Write ``{path: text}`` atomically: all temp files first, then rename."""
    staged = []
    try:
        for path, text in outputs.items():
            if path is None or path == "-":
                continue
            path = Path(path)
            fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
            with os.fdopen(fd, "w") as fh:
                fh.write(text)
            staged.append((tmp, path))
    except BaseException:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, path in staged:
        os.replace(tmp, path)
    for path, text in outputs.items():
        if path is None or path == "-":
            sys.stdout.write(text)


def _load_scene(cfg, require_scatterers=True):
    if cfg.scene is None:
        raise InputError("no scene given (use --scene or the config 'scene' key)")
    try:
        return load_scene(cfg.scene, require_scatterers=require_scatterers)
    except json.JSONDecodeError as exc:
        raise InputError(f"scene {cfg.scene} is not valid JSON: {exc.msg} (line {exc.lineno})") from exc
    except OSError as exc:
        raise InputError(f"cannot read scene {cfg.scene}: {exc.strerror}") from exc


def _grid(cfg, args):
    g = dict(cfg.grid or {})
    if args.grid_lower is not None:
        g["lower"] = args.grid_lower
    if args.grid_upper is not None:
        g["upper"] = args.grid_upper
    if args.spacing is not None:
        g["spacing"] = args.spacing
    missing = {"lower", "upper", "spacing"} - set(g)
    if missing:
        raise InputError(f"grid needs {', '.join(sorted(missing))}")
    cfg.grid = g
    try:
        return GridSpec(g["lower"], g["upper"], g["spacing"])
    except (TypeError, ValueError) as exc:
        raise InputError(f"bad grid: {exc}") from exc


# ---------------------------------------------------------------------------
# subcommands

def cmd_spectrum(cfg, args):
    scatterers, sensors, _ = _load_scene(cfg)
    tol = cfg.tol or 1e-10
    rep = sup_spectrum_estimate(scatterers, tol=tol)
    out = rep.to_dict()
    out["resolved_config"] = cfg.resolved(tol=tol)
    _write_outputs({args.out: _dump_json(out)})
    return 0


def _default_horizon(scatterers, sensors, lam):
    _, r = pairwise_distances(scatterers, sensors)
    return float((r[:, None, :] + r[None, :, :]).max()) + 10.0 / np.sqrt(lam)


def cmd_forward(cfg, args):
    scatterers, sensors, weights = _load_scene(cfg)
    validate_scene(scatterers, sensors)
    lam = cfg.lam or default_lambda(scatterers, sensors)
    T = cfg.T or _default_horizon(scatterers, sensors, lam)
    h = cfg.h or default_step(scatterers, sensors, lam)
    tr = sensor_traces(scatterers, sensors, weights, T=T, h=h, epsilon=cfg.epsilon)
    header = ["t"] + [f"s{k + 1}" for k in range(len(sensors))]
    rows = np.column_stack([tr.times, tr.values.T])
    _write_outputs({args.out: _csv_text(header, rows)})
    return 0


def cmd_data_op(cfg, args):
    scatterers, sensors, _ = _load_scene(cfg)
    validate_scene(scatterers, sensors)
    mode = cfg.mode or "closed"
    if mode not in ("closed", "simulated"):
        raise InputError(f"mode must be 'closed' or 'simulated', got {mode!r}")
    lam = cfg.lam or default_lambda(scatterers, sensors)
    resolved = {"mode": mode, "lambda": lam}
    if mode == "closed":
        op = closed_form_operator(scatterers, sensors, lam)
    else:
        h = cfg.h or default_step(scatterers, sensors, lam)
        op = simulated_operator(scatterers, sensors, lam, T=cfg.T, h=h, epsilon=cfg.epsilon)
        resolved.update(h=h, T=op.provenance["T"])
    if cfg.noise:
        seed = cfg.seed if cfg.seed is not None else 0
        op = perturb_operator(op, cfg.noise, seed)
        resolved["seed"] = seed
    out = op.to_dict()
    out["resolved_config"] = cfg.resolved(**resolved)
    _write_outputs({args.out: _dump_json(out)})
    return 0


def _parse_count(value):
    if value is None or value == "rank":
        return "rank"
    if value in ("auto", "threshold"):
        return None
    try:
        count = int(value)
    except (TypeError, ValueError):
        raise InputError(f"count must be 'rank', 'auto' or a positive integer, got {value!r}")
    if count < 1:
        raise InputError(f"count must be positive, got {count}")
    return count


def cmd_invert(cfg, args):
    if args.operator is None:
        raise InputError("invert needs --operator")
    try:
        op = DataOperator.from_dict(json.loads(Path(args.operator).read_text()))
    except OSError as exc:
        raise InputError(f"cannot read operator {args.operator}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"operator {args.operator} is not valid JSON: {exc.msg}") from exc
    _, sensors, _ = _load_scene(cfg, require_scatterers=False)
    grid = _grid(cfg, args)
    rank_tol = cfg.rank_tol or DEFAULT_RANK_TOL
    lam = cfg.lam or op.lam
    count = _parse_count(cfg.count)
    rec = reconstruct(op, sensors, grid, lam=lam, rank_tol=rank_tol, count=count,
                      min_separation=cfg.min_separation, workers=cfg.threads)
    nodes = grid.nodes()
    field_csv = _csv_text(["x", "y", "z", "value"], np.column_stack([nodes, rec.field.values]))
    peaks = rec.to_dict()
    peaks["resolved_config"] = cfg.resolved(**{"lambda": lam, "rank_tol": rank_tol,
                                               "count": cfg.count or "rank",
                                               "operator": str(args.operator)})
    _write_outputs({args.field_out: field_csv, args.peaks_out: _dump_json(peaks)})
    return 0


def cmd_validate(cfg, args):
    from .validation import run_all
    results = run_all(quick=args.quick)
    width = max(len(r.name) for r in results)
    lines = [f"{'check'.ljust(width)}  result  details"]
    for r in results:
        lines.append(f"{r.name.ljust(width)}  {'PASS' if r.passed else 'FAIL'}    {r.summary}")
    sys.stdout.write("\n".join(lines) + "\n")
    return 0 if all(r.passed for r in results) else 1


COMMANDS = {"spectrum": cmd_spectrum, "forward": cmd_forward, "data-op": cmd_data_op,
            "invert": cmd_invert, "validate": cmd_validate}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--scene", help="scene JSON (scatterers, sensors, weights)")
    common.add_argument("--threads", type=int, help=f"worker cap (default ${THREADS_ENV} or 1)")
    common.add_argument("--seed", type=int, help="seed for operator noise")
    common.add_argument("--lambda", dest="lam", type=float, help="spectral parameter")

    p = argparse.ArgumentParser(prog="pointscat", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("spectrum", parents=[common], help="discrete spectrum report (JSON)")
    sp.add_argument("--tol", type=float, help="bisection tolerance in lambda")
    sp.add_argument("-o", "--out", default="-")

    sp = sub.add_parser("forward", parents=[common], help="sensor traces (CSV)")
    sp.add_argument("--T", type=float, help="horizon")
    sp.add_argument("--h", type=float, help="time step")
    sp.add_argument("--epsilon", type=float, help="mollifier radius")
    sp.add_argument("-o", "--out", default="-")

    sp = sub.add_parser("data-op", parents=[common], help="data operator (JSON)")
    sp.add_argument("--mode", choices=["closed", "simulated"])
    sp.add_argument("--T", type=float)
    sp.add_argument("--h", type=float)
    sp.add_argument("--epsilon", type=float)
    sp.add_argument("--noise", type=float, help="relative Frobenius noise level")
    sp.add_argument("-o", "--out", default="-")

    sp = sub.add_parser("invert", parents=[common], help="imaging field (CSV) and peaks (JSON)")
    sp.add_argument("--operator", help="operator JSON from data-op")
    sp.add_argument("--grid-lower", type=float, nargs=3)
    sp.add_argument("--grid-upper", type=float, nargs=3)
    sp.add_argument("--spacing", type=float)
    sp.add_argument("--rank-tol", dest="rank_tol", type=float)
    sp.add_argument("--count", help="'rank' (default), 'auto' or an integer")
    sp.add_argument("--min-separation", dest="min_separation", type=float)
    sp.add_argument("--field-out", default="field.csv")
    sp.add_argument("--peaks-out", default="peaks.json")

    sp = sub.add_parser("validate", parents=[common], help="run the oracle cross-checks")
    sp.add_argument("--quick", action="store_true", help="smaller randomised sweeps")
    return p


def run(argv=None):
    args = build_parser().parse_args(argv)
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    cfg.merge(args).check()
    if cfg.threads is None and os.environ.get(THREADS_ENV):
        cfg.threads = int(os.environ[THREADS_ENV])
    return COMMANDS[args.command](cfg, args)


def main(argv=None):
    try:
        return run(argv)
    except (InputError, ScatteringError) as exc:
        msg = " ".join(str(exc).split())
        print(f"pointscat: error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
