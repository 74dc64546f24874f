"""Delimited-text record files with a versioned header block.

Every file starts with `# proxdock <kind> v<version>` followed by the full
resolved configuration (one `# config:` line per key), its digest, optional
`# meta:` entries, a `# columns:` manifest, then whitespace-delimited data
rows printed with %.17g so reads round-trip bit-exactly.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from . import kos as koslib
from .kos import Circle, HalfEllipse, KosConfig, KosState
from .dynamics import TargetState
from .nlp import SolverStats
from .optimizer import PlannedTrajectory

FORMAT_VERSION = 1

TRAJECTORY_COLUMNS = ["t", "x", "y", "theta", "vx", "vy", "omega",
                      "Fx", "Fy", "tau", "kos_state", "g_min"]
RUN_COLUMNS = ["t", "x", "y", "theta", "vx", "vy", "omega", "rel_vx", "rel_vy", "g"]


class RecordError(ValueError):
    """Malformed or wrong-kind record file."""


def config_digest(config_lines) -> str:
    blob = "\n".join(config_lines).encode()
    return hashlib.sha256(blob).hexdigest()


def _fmt(v) -> str:
    return "%.17g" % float(v)


def _header(kind: str, config_lines, meta: dict, columns) -> list[str]:
    out = [f"# proxdock {kind} v{FORMAT_VERSION}"]
    out.append(f"# config_digest: {config_digest(config_lines)}")
    out += [f"# config: {line}" for line in config_lines]
    for k, v in meta.items():
        out.append(f"# meta: {k} = {v}")
    out.append("# columns: " + " ".join(columns))
    return out


def _parse_header(lines, kind: str):
    if not lines or not lines[0].startswith(f"# proxdock {kind} v"):
        raise RecordError(f"not a proxdock {kind} record")
    version = int(lines[0].rsplit("v", 1)[1])
    if version > FORMAT_VERSION:
        raise RecordError(f"unsupported {kind} format version {version}")
    meta, config, columns = {}, [], None
    for ln in lines[1:]:
        if not ln.startswith("#"):
            break
        body = ln[1:].strip()
        if body.startswith("config: "):
            config.append(body[len("config: "):])
        elif body.startswith("meta: "):
            k, _, v = body[len("meta: "):].partition(" = ")
            meta[k.strip()] = v.strip()
        elif body.startswith("columns: "):
            columns = body[len("columns: "):].split()
    if columns is None:
        raise RecordError("missing columns manifest")
    return meta, config, columns


def _primitive_lines(region, t: float) -> list[str]:
    out = []
    for p in region.primitives:
        if isinstance(p, Circle):
            out.append(f"# kos_primitive: t={_fmt(t)} state={region.state.value} "
                       f"circle {_fmt(p.center[0])} {_fmt(p.center[1])} {_fmt(p.radius)}")
        else:
            out.append(f"# kos_primitive: t={_fmt(t)} state={region.state.value} "
                       f"half_ellipse {_fmt(p.center[0])} {_fmt(p.center[1])} {_fmt(p.theta)} "
                       f"{_fmt(p.semi_major)} {_fmt(p.semi_minor)} {p.side:+d}")
    return out


def write_trajectory(path, plan: PlannedTrajectory, config_lines,
                     target: TargetState, kos_cfg: KosConfig | None) -> None:
    sched = plan.kos_states
    if kos_cfg is not None:
        th = target.theta0 + target.omega * plan.times
        g = koslib.signed_distance_batch(plan.states[:, :2], th, sched,
                                         target.position, kos_cfg)
    else:
        g = np.full(len(plan.times), np.inf)
    meta = {
        "objective_value": _fmt(plan.objective_value),
        "objective_goal": _fmt(plan.objective_breakdown[0]),
        "objective_kinetic": _fmt(plan.objective_breakdown[1]),
        "objective_effort": _fmt(plan.objective_breakdown[2]),
        "theta_finish": _fmt(plan.theta_finish),
        "x_goal": " ".join(_fmt(v) for v in plan.x_goal),
        "dt": _fmt(plan.dt),
        "converged": int(plan.converged),
        "kkt_residual": _fmt(plan.solver_stats.kkt_residual),
        "constraint_violation": _fmt(plan.solver_stats.constraint_violation),
    }
    lines = _header("trajectory", config_lines, meta, TRAJECTORY_COLUMNS)
    if kos_cfg is not None:
        lines += _primitive_lines(
            koslib.build_region(sched[0], target.theta0, target.position, kos_cfg), 0.0)
        t_end = float(plan.times[-1])
        lines += _primitive_lines(
            koslib.build_region(sched[-1], target.theta0 + target.omega * t_end,
                                target.position, kos_cfg), t_end)
    for k, t in enumerate(plan.times):
        if k < plan.N:
            w = plan.wrenches[k]
        else:
            w = [math.nan] * 3
        row = [t, *plan.states[k], *w, sched[k].value, g[k]]
        lines.append(" ".join(_fmt(v) if i != 10 else str(int(v))
                              for i, v in enumerate(row)))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_trajectory(path) -> tuple[PlannedTrajectory, dict]:
    with open(path) as f:
        lines = f.read().splitlines()
    meta, config, columns = _parse_header(lines, "trajectory")
    if columns != TRAJECTORY_COLUMNS:
        raise RecordError(f"unexpected trajectory columns: {columns}")
    data = np.array([[float(v) for v in ln.split()]
                     for ln in lines if ln and not ln.startswith("#")])
    if data.ndim != 2 or data.shape[1] != len(TRAJECTORY_COLUMNS):
        raise RecordError("trajectory data block malformed")
    times = data[:, 0]
    states = data[:, 1:7]
    wrenches = data[:-1, 7:10]
    if np.any(~np.isfinite(wrenches)):
        raise RecordError("non-finite wrench rows before the final knot")
    kos_states = [KosState(int(v)) for v in data[:, 10]]
    stats = SolverStats(kkt_residual=float(meta.get("kkt_residual", "inf")),
                        constraint_violation=float(meta.get("constraint_violation", "inf")),
                        message="loaded from file")
    plan = PlannedTrajectory(
        times=times, states=states, wrenches=wrenches,
        objective_value=float(meta["objective_value"]),
        objective_breakdown=(float(meta["objective_goal"]),
                             float(meta["objective_kinetic"]),
                             float(meta["objective_effort"])),
        kos_states=kos_states,
        converged=bool(int(meta["converged"])),
        solver_stats=stats,
        x_goal=np.array([float(v) for v in meta["x_goal"].split()]),
        theta_finish=float(meta["theta_finish"]),
        dt=float(meta["dt"]),
    )
    return plan, {"meta": meta, "config": config}


def write_run_record(path, result, config_lines) -> None:
    meta = {
        "terminal_position_error": _fmt(result.terminal_position_error),
        "terminal_attitude_error": _fmt(result.terminal_attitude_error),
        "terminal_relative_speed": _fmt(result.terminal_relative_speed),
        "min_kos_distance": _fmt(result.min_kos_distance),
    }
    lines = _header("run", config_lines, meta, RUN_COLUMNS)
    for i, t in enumerate(result.times):
        row = [t, *result.states[i], *result.relative_velocity[i], result.kos_distance[i]]
        lines.append(" ".join(_fmt(v) for v in row))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_run_record(path):
    with open(path) as f:
        lines = f.read().splitlines()
    meta, config, columns = _parse_header(lines, "run")
    if columns != RUN_COLUMNS:
        raise RecordError(f"unexpected run columns: {columns}")
    data = np.array([[float(v) for v in ln.split()]
                     for ln in lines if ln and not ln.startswith("#")])
    if data.ndim != 2 or data.shape[1] != len(RUN_COLUMNS):
        raise RecordError("run data block malformed")
    return {"times": data[:, 0], "states": data[:, 1:7],
            "relative_velocity": data[:, 7:9], "g": data[:, 9],
            "meta": meta, "config": config}


def write_firing_sequence(path, result, config_lines) -> None:
    cols = ["t_slot"] + [f"u{i+1}" for i in range(8)]
    lines = _header("firing", config_lines, {}, cols)
    for i, t in enumerate(result.slot_times):
        lines.append(_fmt(t) + " " + " ".join(str(int(v)) for v in result.firings[:, i]))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def write_table(path, kind: str, columns, rows, config_lines, meta=None) -> None:
    """Generic sweep table: rows are sequences aligned with columns."""
    lines = _header(kind, config_lines, meta or {}, list(columns))
    for row in rows:
        parts = []
        for v in row:
            if isinstance(v, (int, np.integer)):
                parts.append(str(int(v)))
            elif isinstance(v, str):
                parts.append(v if v else "-")
            else:
                parts.append(_fmt(v))
        lines.append(" ".join(parts))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_table(path, kind: str):
    with open(path) as f:
        lines = f.read().splitlines()
    meta, config, columns = _parse_header(lines, kind)
    rows = [ln.split() for ln in lines if ln and not ln.startswith("#")]
    return {"columns": columns, "rows": rows, "meta": meta, "config": config}
