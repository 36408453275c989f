"""Command-line front end.

Usage::

    pivotpend <command> --config exp.json [--out DIR] [--workers N] [--rtol X] [--atol Y]

Each run writes ``result.json`` into the output directory, plus
``trajectory.csv`` (simulate, find-periodic) or ``sweep.csv`` (sweep).
Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 config error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Optional

import numpy as np

from pivotpend import __version__
from pivotpend.config import (
    ConfigError,
    digest,
    integrator_of,
    load_config,
    params_of,
    pivot_of,
)
from pivotpend.dynamics import PendulumState, integrate
from pivotpend.errors import NumericalFailure, ValidationError
from pivotpend.periodic import (
    IndexConfig,
    NewtonConfig,
    build_segment,
    euler_characteristic_index,
    find_periodic_orbit,
    fixed_point_index,
    validate_segment,
)
from pivotpend.pivot_profiles import ANY_PERIOD, period_of
from pivotpend.shooting import Exited, escape_map, find_nonfalling

log = logging.getLogger("pivotpend")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_CONFIG = 0, 2, 3, 4
COMMANDS = ("simulate", "find-nonfalling", "validate-segment", "find-periodic", "index", "sweep")


def _fmt(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _csv_text(header: list[str], rows: list[list[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _state_dict(s: Optional[PendulumState]):
    return None if s is None else {"t": s.t, "phi": s.phi, "p": s.p}


def _period_for(T: Optional[float], pivot) -> float:
    if T is not None:
        return float(T)
    period = period_of(pivot)
    if period is None or period is ANY_PERIOD:
        raise ValidationError("pivot has no definite period; set T explicitly")
    return period


# -- commands ------------------------------------------------------------------
# Each returns (outputs, files) where files maps file name to text content.


def cmd_simulate(cfg, workers=1):
    sim = cfg["simulate"]
    params, pivot, icfg = params_of(cfg), pivot_of(cfg), integrator_of(cfg)
    s0 = PendulumState(sim["t0"], sim["phi0"], sim["p0"])
    res = integrate(params, pivot, s0, sim["t_end"], icfg, watch_exit=sim["watch_exit"])
    traj = res.trajectory
    samples = ()
    if sim["sample_dt"]:
        n = int(math.floor((traj.t_end - traj.t0) / sim["sample_dt"] + 1e-9))
        samples = [traj.t0 + k * sim["sample_dt"] for k in range(n + 1)]
    outputs = {
        "final_state": _state_dict(res.final),
        "crossing": _state_dict(res.crossing),
        "steps": len(traj) - 1,
    }
    return outputs, {"trajectory.csv": traj.to_csv(samples)}


def cmd_find_nonfalling(cfg, workers=1):
    nf = cfg["nonfalling"]
    cert = find_nonfalling(
        params_of(cfg), pivot_of(cfg), nf["horizon"], nf["tol_phi"], integrator_of(cfg), p0=nf["p0"]
    )
    return cert.to_dict(), {}


def _segment_for(cfg):
    per = cfg["periodic"]
    params, pivot = params_of(cfg), pivot_of(cfg)
    T = _period_for(per["T"], pivot)
    seg = build_segment(params, pivot, T, per["safety"], per["p_floor"])
    return seg, validate_segment(seg, per["grid_n"])


def cmd_validate_segment(cfg, workers=1):
    seg, report = _segment_for(cfg)
    outputs = {"T": seg.T, "p_prime": seg.p_prime, "report": report.to_dict()}
    if report.valid:
        outputs["euler_characteristic_index"] = euler_characteristic_index(seg)
    return outputs, {}


def cmd_find_periodic(cfg, workers=1):
    per = cfg["periodic"]
    params, pivot, icfg = params_of(cfg), pivot_of(cfg), integrator_of(cfg)
    seg, report = _segment_for(cfg)
    if not report.valid:
        raise ValidationError(f"segment is not a valid block: {report.to_dict()}")
    orbit = find_periodic_orbit(
        params,
        pivot,
        seg.T,
        seg,
        NewtonConfig(tol=per["newton_tol"]),
        grid=tuple(per["seeds"]),
        cfg=icfg,
        workers=workers,
    )
    outputs = {
        "T": seg.T,
        "p_prime": seg.p_prime,
        "segment": report.to_dict(),
        "orbit": orbit.to_dict(),
        "euler_characteristic_index": euler_characteristic_index(seg),
    }
    if per["index_check"]:
        hw = per["index_halfwidth"]
        x = orbit.x0
        region = [x[0] - hw, x[0] + hw, x[1] - hw, x[1] + hw]
        idx = fixed_point_index(params, pivot, seg.T, region, integ_cfg=icfg, workers=workers)
        outputs["index_check"] = {
            "region": region,
            **idx.to_dict(),
            "agrees": idx.winding == outputs["euler_characteristic_index"],
        }
    return outputs, {"trajectory.csv": orbit.trajectory.to_csv()}


def cmd_index(cfg, workers=1):
    ix = cfg["index"]
    params, pivot, icfg = params_of(cfg), pivot_of(cfg), integrator_of(cfg)
    T = _period_for(ix["T"], pivot)
    icfg_index = IndexConfig(ix["min_disp"], ix["max_samples"], ix["initial_per_edge"])
    res = fixed_point_index(params, pivot, T, ix["region"], icfg_index, icfg, workers=workers)
    return {"T": T, "region": list(ix["region"]), **res.to_dict()}, {}


_SWEEP_COLUMNS = {
    "escape": ["side", "t_star", "phi_exit", "p_exit"],
    "find-nonfalling": ["phi_lo", "phi_hi", "witness_phi", "witness_survived", "bisection_steps"],
    "find-periodic": [
        "phi0", "p0", "residual", "max_abs_phi", "mu1_re", "mu1_im", "mu2_re", "mu2_im", "contained",
    ],
    "validate-segment": ["p_prime", "valid", "min_exit_margin", "min_entry_margin", "tangency_min"],
}


def _sweep_command(sw) -> str:
    cmd = sw["command"] or ("escape" if sw["axis"] in ("phi0", "p0") else "find-periodic")
    if (cmd == "escape") != (sw["axis"] in ("phi0", "p0")):
        raise ValidationError(f"sweep command {cmd!r} incompatible with axis {sw['axis']!r}")
    return cmd


def _point_config(cfg, value):
    sw = cfg["sweep"]
    pc = copy.deepcopy(cfg)
    if sw["axis"] in ("amplitude", "omega"):
        pivot = pc["pivot"]
        if pivot["kind"] != "harmonic_sum" or sw["term"] >= len(pivot["terms"]):
            raise ValidationError("amplitude/omega sweeps need a harmonic_sum pivot with the chosen term")
        if sw["axis"] == "amplitude" and pc["periodic"]["T"] is None:
            pc["periodic"]["T"] = _period_for(None, pivot_of(cfg))
        key = "amplitude" if sw["axis"] == "amplitude" else "omega"
        pivot["terms"][sw["term"]][key] = value
    return pc


def _sweep_point(args):
    cfg, value = args
    sw = cfg["sweep"]
    cmd = _sweep_command(sw)
    blank = [None] * len(_SWEEP_COLUMNS[cmd])
    try:
        pc = _point_config(cfg, value)
        if cmd == "escape":
            nf, sim = pc["nonfalling"], pc["simulate"]
            phi0, p0 = (value, nf["p0"]) if sw["axis"] == "phi0" else (sim["phi0"], value)
            r = escape_map(params_of(pc), pivot_of(pc), phi0, p0, nf["horizon"], integrator_of(pc))
            if isinstance(r, Exited):
                vals = [r.side.value, r.t_star, r.state.phi, r.state.p]
            else:
                vals = ["Survived", None, r.final_state.phi, r.final_state.p]
        elif cmd == "find-nonfalling":
            out, _ = cmd_find_nonfalling(pc)
            vals = [out[k] for k in _SWEEP_COLUMNS[cmd]]
        elif cmd == "find-periodic":
            pc["periodic"]["index_check"] = False
            out, _ = cmd_find_periodic(pc)
            o = out["orbit"]
            (m1r, m1i), (m2r, m2i) = o["multipliers"]
            vals = [o["x0"][0], o["x0"][1], o["residual"], o["max_abs_phi"], m1r, m1i, m2r, m2i, o["contained"]]
        else:
            out, _ = cmd_validate_segment(pc)
            rep = out["report"]
            vals = [
                out["p_prime"],
                rep["valid"],
                rep["min_exit_margin"],
                rep["min_entry_margin"],
                min(rep["tangency_margins"].values()),
            ]
        return [value, "ok", *vals]
    except (ValueError, NumericalFailure) as exc:
        return [value, type(exc).__name__, *blank]


def sweep(cfg, workers: int = 1) -> tuple[list[str], list[list[Any]]]:
    """Evaluate the sweep command over the axis grid; rows follow axis order."""
    sw = cfg["sweep"]
    cmd = _sweep_command(sw)
    a, b = sw["range"]
    values = [float(v) for v in np.linspace(a, b, sw["count"])] if sw["count"] else []
    jobs = [(cfg, v) for v in values]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]
    return [sw["axis"], "status", *_SWEEP_COLUMNS[cmd]], rows


def cmd_sweep(cfg, workers=1):
    if "sweep" not in cfg:
        raise ValidationError("config has no sweep block")
    header, rows = sweep(cfg, workers)
    failed = sum(1 for r in rows if r[1] != "ok")
    outputs = {"command": _sweep_command(cfg["sweep"]), "points": len(rows), "failed_points": failed}
    return outputs, {"sweep.csv": _csv_text(header, rows)}


HANDLERS: dict[str, Callable] = {
    "simulate": cmd_simulate,
    "find-nonfalling": cmd_find_nonfalling,
    "validate-segment": cmd_validate_segment,
    "find-periodic": cmd_find_periodic,
    "index": cmd_index,
    "sweep": cmd_sweep,
}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def run(command: str, cfg: dict, out_dir: Optional[str] = None, workers: Optional[int] = None) -> int:
    """Execute ``command`` on a resolved config, write files, return the exit code."""
    workers = cfg["workers"] if workers is None else workers
    out_dir = out_dir or cfg["output"]["dir"]
    record = {
        "command": command,
        "tool_version": __version__,
        "config": cfg,
        "input_digest": digest(cfg),
    }
    files: dict[str, str] = {}
    started = time.perf_counter()
    code = EXIT_OK
    try:
        outputs, files = HANDLERS[command](cfg, workers)
        record["status"] = "ok"
        record["outputs"] = outputs
        if command == "validate-segment" and not outputs["report"]["valid"]:
            record["status"] = "invalid"
            code = EXIT_VALIDATION
    except NumericalFailure as exc:
        record["status"], record["error"] = type(exc).__name__, str(exc)
        code = EXIT_NUMERICAL
    except ValueError as exc:
        record["status"], record["error"] = type(exc).__name__, str(exc)
        code = EXIT_VALIDATION
    record["wall_clock_s"] = time.perf_counter() - started
    if code != EXIT_OK:
        print(f"pivotpend {command}: {record['status']}: {record.get('error', '')}", file=sys.stderr)

    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "result.json"), "w", encoding="utf-8") as fh:
        json.dump(_jsonable(record), fh, indent=2)
        fh.write("\n")
    for name, text in files.items():
        with open(os.path.join(out_dir, name), "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return code


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON experiment config")
    common.add_argument("--out", default=None, help="output directory (overrides output.dir)")
    common.add_argument("--workers", type=int, default=None, help="worker processes")
    common.add_argument("--rtol", type=float, default=None)
    common.add_argument("--atol", type=float, default=None)
    parser = argparse.ArgumentParser(prog="pivotpend", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.rtol is not None:
            cfg["integrator"]["rtol"] = args.rtol
        if args.atol is not None:
            cfg["integrator"]["atol"] = args.atol
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError("--workers must be at least 1")
            cfg["workers"] = args.workers
        if args.out is not None:
            cfg["output"]["dir"] = args.out
        integrator_of(cfg)
    except ConfigError as exc:
        print(f"pivotpend: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"pivotpend: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(args.command, cfg)


if __name__ == "__main__":
    sys.exit(main())
