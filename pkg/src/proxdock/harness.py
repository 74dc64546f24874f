"""Command-line front end: config ingestion, plan/track pipeline, sweeps.

Config files are flat `key = value` text with dotted section names (full
schema in DEFAULTS below and in the README); an empty or missing file yields
the nominal scenario.  Subcommands: plan, track, sweep1, sweep2, audit.
"""
from __future__ import annotations

import argparse
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import records
from .controller import PdGains
from .dynamics import (BodyParams, BodyState, TargetState, default_layout,
                       wrap_angle)
from .kos import KosConfig, KosState, r_safe
from .optimizer import (AllCandidatesFailed, OptProblem, plan)
from .sim import SimConfig, audit_safety, run


class ConfigError(ValueError):
    """One or more invalid config entries; message lists every violation."""


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "1", "yes", "on"):
        return True
    if v in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_float_or_none(s: str):
    return None if s.strip().lower() == "none" else float(s)


def _parse_float_or_auto(s: str):
    return "auto" if s.strip().lower() == "auto" else float(s)


def _parse_float_list(s: str):
    return tuple(float(v) for v in s.split(",") if v.strip())


# key -> (default value, parser).  Defaults reproduce the nominal scenario:
# 0.3 m cubes, chaser from (1, 0) m, target spinning at 0.1 rad/s, approach
# attitude 3*pi/4, weights 100/10, 0.01 s physics at 10 Hz control.
DEFAULTS = {
    "seed": (0, int),
    "body.mass": (10.0, float),
    "body.inertia": (None, _parse_float_or_none),   # none -> mass*side^2/6
    "body.side_length": (0.3, float),
    "layout.f_thr": (0.03, float),
    "target.side_length": (0.3, float),
    "target.omega": (0.1, float),
    "target.theta0": (0.0, float),
    "target.x": (0.0, float),
    "target.y": (0.0, float),
    "init.x": (1.0, float),
    "init.y": (0.0, float),
    "init.theta": (0.0, float),
    "init.vx": (0.0, float),
    "init.vy": (0.0, float),
    "init.omega": (0.0, float),
    "kos.margin_fraction": (0.10, float),
    "kos.dist_threshold_factor": (1.5, float),
    "kos.angle_threshold": (None, _parse_float_or_none),  # none -> corner-safe gate
    "opt.dt": (0.1, float),
    "opt.w_goal": (100.0, float),
    "opt.w_u": (10.0, float),
    "opt.w_kin": (1.0, float),
    "opt.theta_approach": (3.0 * math.pi / 4.0, float),
    "opt.max_candidates": (2, int),
    "opt.min_duration": (5.0, _parse_float_or_auto),
    "opt.static_durations": ((20.0, 40.0, 60.0, 80.0), _parse_float_list),
    "opt.capture_offset": (0.05, float),
    "opt.goal_corotate": (False, _parse_bool),
    "opt.latch_delay": ("auto", _parse_float_or_auto),
    "opt.force_bound": (None, _parse_float_or_none),   # none -> f_thr
    "opt.torque_bound": (None, _parse_float_or_none),  # none -> 0.8*l_s*f_thr
    "gains.kp_pos": (2.0, float),
    "gains.kd_pos": (8.0, float),
    "gains.kp_att": (0.4, float),
    "gains.kd_att": (1.2, float),
    "ctrl.n_slots": (10, int),
    "ctrl.feed_forward": (True, _parse_bool),
    "sim.physics_dt": (0.01, float),
    "sim.control_hz": (10.0, float),
    "sim.tail": (5.0, float),
    "sim.duration": (None, _parse_float_or_none),
    "sim.mismatch_fraction": (0.0, float),
    "sim.disturbance_accel": (0.0, float),
    "sweep1.omega_start": (0.035, float),
    "sweep1.omega_step": (0.025, float),
    "sweep1.omega_stop": (2.0, float),
    "sweep1.f_start": (0.03, float),
    "sweep1.f_step": (0.03, float),
    "sweep1.f_stop": (1.02, float),
    "sweep1.max_candidates": (2, int),
    "sweep1.min_duration": ("auto", _parse_float_or_auto),
    "sweep1.goal_corotate": (True, _parse_bool),
    "sweep2.theta_start_deg": (0.0, float),
    "sweep2.theta_step_deg": (30.0, float),
    "sweep2.theta_stop_deg": (330.0, float),
    "sweep2.omega_start": (0.05, float),
    "sweep2.omega_step": (0.05, float),
    "sweep2.omega_stop": (2.0, float),
    "sweep2.f_thr": (0.03, float),
    "sweep2.max_candidates": (2, int),
    "sweep2.min_duration": ("auto", _parse_float_or_auto),
    "sweep2.goal_corotate": (True, _parse_bool),
}


@dataclass
class RunConfig:
    """Fully resolved scenario; built by load_config."""

    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def resolved_lines(self) -> list[str]:
        out = []
        for key in DEFAULTS:
            v = self.values[key]
            if isinstance(v, tuple):
                s = ",".join("%g" % x for x in v)
            elif v is None:
                s = "none"
            elif isinstance(v, bool):
                s = "true" if v else "false"
            elif isinstance(v, float):
                s = "%.17g" % v
            else:
                s = str(v)
            out.append(f"{key} = {s}")
        return out

    # ---- object builders -------------------------------------------------
    def body(self) -> BodyParams:
        m = self["body.mass"]
        side = self["body.side_length"]
        inertia = self["body.inertia"]
        if inertia is None:
            inertia = m * side**2 / 6.0
        return BodyParams(mass=m, inertia=inertia, side_length=side)

    def layout(self, f_thr: float | None = None):
        return default_layout(self["body.side_length"],
                              f_thr if f_thr is not None else self["layout.f_thr"])

    def target(self, omega: float | None = None) -> TargetState:
        return TargetState(side_length=self["target.side_length"],
                           omega=omega if omega is not None else self["target.omega"],
                           theta0=self["target.theta0"],
                           x=self["target.x"], y=self["target.y"])

    def kos_config(self) -> KosConfig:
        return KosConfig(l_s=self["body.side_length"], l_t=self["target.side_length"],
                         margin_fraction=self["kos.margin_fraction"],
                         dist_threshold_factor=self["kos.dist_threshold_factor"],
                         angle_threshold=self["kos.angle_threshold"])

    def init_state(self) -> BodyState:
        return BodyState(self["init.x"], self["init.y"], self["init.theta"],
                         self["init.vx"], self["init.vy"], self["init.omega"])

    def gains(self) -> PdGains:
        return PdGains(self["gains.kp_pos"], self["gains.kd_pos"],
                       self["gains.kp_att"], self["gains.kd_att"])

    def wrench_bounds(self, f_thr: float | None = None):
        from .dynamics import Wrench
        f = f_thr if f_thr is not None else self["layout.f_thr"]
        fb = self["opt.force_bound"]
        tb = self["opt.torque_bound"]
        if fb is None:
            fb = f  # half the 2*f_thr per-axis max: reserve for rotation + torque
        if tb is None:
            tb = 0.8 * self["body.side_length"] * f  # half the pure-couple max
        return Wrench(-fb, -fb, -tb), Wrench(fb, fb, tb)

    def opt_template(self, f_thr: float | None = None,
                     omega: float | None = None) -> OptProblem:
        lo, hi = self.wrench_bounds(f_thr)
        return OptProblem(
            N=2, dt=self["opt.dt"], x_init=self.init_state(),
            theta_finish=0.0, x_goal=BodyState(),
            target=self.target(omega), body=self.body(), kos_cfg=self.kos_config(),
            w_goal=self["opt.w_goal"], w_u=self["opt.w_u"], w_kin=self["opt.w_kin"],
            wrench_min=lo, wrench_max=hi,
        )

    def sim_config(self, f_thr: float | None = None, seed: int | None = None) -> SimConfig:
        return SimConfig(
            body=self.body(), layout=self.layout(f_thr), gains=self.gains(),
            physics_dt=self["sim.physics_dt"], control_hz=self["sim.control_hz"],
            n_slots=self["ctrl.n_slots"], duration=self["sim.duration"],
            tail=self["sim.tail"], feed_forward=self["ctrl.feed_forward"],
            mismatch_fraction=self["sim.mismatch_fraction"],
            disturbance_accel=self["sim.disturbance_accel"],
            seed=seed if seed is not None else self["seed"],
            kos_cfg=self.kos_config(),
        )

    def auto_min_duration(self, f_thr: float | None = None) -> float:
        """Reachability floor: direct bang-bang time over the start distance."""
        body = self.body()
        lo, hi = self.wrench_bounds(f_thr)
        init = self.init_state()
        d = math.hypot(init.x - self["target.x"], init.y - self["target.y"])
        return 2.0 * math.sqrt(d * body.mass / hi.fx)

    def plan_kwargs(self) -> dict:
        return dict(
            max_candidates=self["opt.max_candidates"],
            min_duration=self.auto_min_duration() if self["opt.min_duration"] == "auto"
            else self["opt.min_duration"],
            static_durations=self["opt.static_durations"],
            capture_offset=self["opt.capture_offset"],
            goal_corotate=self["opt.goal_corotate"],
            latch_delay=self["opt.latch_delay"],
        )


def load_config(path: str | None) -> RunConfig:
    """Parse and validate a config file; None or empty means all defaults."""
    values = {k: d for k, (d, _) in DEFAULTS.items()}
    errors = []
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as ex:
            raise ConfigError(f"cannot read config: {ex}") from ex
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                errors.append(f"line {lineno}: expected 'key = value', got {raw!r}")
                continue
            key, _, val = line.partition("=")
            key = key.strip()
            if key not in DEFAULTS:
                errors.append(f"line {lineno}: unknown key {key!r}")
                continue
            try:
                values[key] = DEFAULTS[key][1](val.strip())
            except ValueError as ex:
                errors.append(f"line {lineno}: bad value for {key}: {ex}")
    if errors:
        raise ConfigError("config parse errors:\n  " + "\n  ".join(errors))

    cfg = RunConfig(values)
    _validate(cfg, errors)
    if errors:
        raise ConfigError("config validation errors:\n  " + "\n  ".join(errors))
    return cfg


def _validate(cfg: RunConfig, errors: list) -> None:
    v = cfg.values
    for key in ("body.mass", "body.side_length", "layout.f_thr",
                "target.side_length", "opt.dt", "sim.physics_dt",
                "sim.control_hz"):
        if v[key] <= 0:
            errors.append(f"{key} must be positive (got {v[key]})")
    if v["body.inertia"] is not None and v["body.inertia"] <= 0:
        errors.append("body.inertia must be positive")
    if v["opt.w_goal"] < 0 or v["opt.w_u"] < 0 or v["opt.w_kin"] < 0:
        errors.append("objective weights must be non-negative")
    if v["kos.margin_fraction"] < 0:
        errors.append("kos.margin_fraction must be non-negative")
    if v["kos.dist_threshold_factor"] < 1.0:
        errors.append("kos.dist_threshold_factor must be >= 1")
    at = v["kos.angle_threshold"]
    if at is not None and not (0.0 < at < math.pi / 2):
        errors.append("kos.angle_threshold must lie in (0, pi/2)")
    if v["ctrl.n_slots"] < 1:
        errors.append("ctrl.n_slots must be >= 1")
    if v["opt.max_candidates"] < 1:
        errors.append("opt.max_candidates must be >= 1")
    for sweep in ("sweep1", "sweep2"):
        for axis in ("omega",) + (("f",) if sweep == "sweep1" else ("theta",)):
            prefix = f"{sweep}.{axis}" if axis != "theta" else f"{sweep}.theta"
            step = v.get(f"{prefix}_step", v.get(f"{prefix}_step_deg"))
            start = v.get(f"{prefix}_start", v.get(f"{prefix}_start_deg"))
            stop = v.get(f"{prefix}_stop", v.get(f"{prefix}_stop_deg"))
            if step is not None and step <= 0:
                errors.append(f"{prefix}_step must be positive")
            if None not in (start, stop) and stop < start:
                errors.append(f"{prefix}_stop must be >= {prefix}_start")
    try:
        cfg.sim_config().steps_per_period()
    except Exception as ex:
        errors.append(str(ex))


def grid_values(start: float, step: float, stop: float) -> np.ndarray:
    """Integer-indexed grid start + i*step up to stop (inclusive, no drift)."""
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(n)


# ---------------------------------------------------------------------------
# subcommands

def cmd_plan(config_path, out_dir, seed=None):
    cfg = load_config(config_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    template = cfg.opt_template()
    t0 = time.perf_counter()
    best, all_results = plan(cfg["opt.theta_approach"], template,
                             collect_all=True, **cfg.plan_kwargs())
    wall = time.perf_counter() - t0
    traj_path = out / "trajectory.txt"
    records.write_trajectory(traj_path, best, cfg.resolved_lines(),
                             cfg.target(), cfg.kos_config())

    switch = next((float(t) for t, s in zip(best.times, best.kos_states)
                   if s == KosState.STATE_II), None)
    goal, kinetic, effort = best.objective_breakdown
    pos_err = float(np.hypot(best.states[-1, 0] - best.x_goal[0],
                             best.states[-1, 1] - best.x_goal[1]))
    lines = [
        "proxdock plan summary",
        f"  chosen duration      : {best.times[-1]:.2f} s "
        f"(of {len(all_results)} converged candidates)",
        f"  objective            : {best.objective_value:.6g}",
        f"    goal term          : {goal:.6g}",
        f"    kinetic term       : {kinetic:.6g}",
        f"    effort term        : {effort:.6g}",
        f"  KOS switch to II     : {'%.2f s' % switch if switch is not None else 'never'}",
        f"  terminal pos error   : {pos_err:.6g} m",
        f"  terminal att residual: {abs(best.states[-1, 2] - best.theta_finish):.3g} rad",
        f"  solver               : {best.solver_stats.outer_iterations} outer / "
        f"{best.solver_stats.newton_iterations} newton, "
        f"kkt {best.solver_stats.kkt_residual:.2e}, "
        f"viol {best.solver_stats.constraint_violation:.2e}",
        f"  wall time            : {wall:.2f} s",
        "  candidates:",
    ]
    for r in all_results:
        lines.append(f"    T={r.times[-1]:8.2f} s  J={r.objective_value:.6g}")
    summary = out / "plan_summary.txt"
    summary.write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    print(f"wrote {traj_path} and {summary}")
    return traj_path


def cmd_track(traj_path, config_path, out_dir, seed=None):
    cfg = load_config(config_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    loaded, info = records.read_trajectory(traj_path)
    if records.config_digest(cfg.resolved_lines()) != records.config_digest(info["config"]):
        print("warning: tracking config differs from the planning config", file=sys.stderr)
    sim_cfg = cfg.sim_config(seed=seed)
    result = run(loaded, sim_cfg, cfg.target())
    records.write_run_record(out / "run_record.txt", result, cfg.resolved_lines())
    records.write_firing_sequence(out / "firing_sequence.txt", result, cfg.resolved_lines())
    lines = [
        "proxdock track summary",
        f"  terminal position error : {result.terminal_position_error:.6g} m",
        f"  terminal attitude error : {result.terminal_attitude_error:.6g} rad",
        f"  terminal relative speed : {result.terminal_relative_speed:.6g} m/s",
        f"  min KOS distance        : {result.min_kos_distance:.6g} m",
        f"  rms position error      : "
        f"{float(np.sqrt(np.mean(result.errors[:, 0]**2 + result.errors[:, 1]**2))):.6g} m",
        f"  thruster-on fraction    : {float(result.firings.mean()):.4f}",
    ]
    (out / "track_summary.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return result


def _sweep_point(args):
    """One grid point, run in a worker process; returns a plain record dict."""
    values, theta_approach, omega, f_thr, max_candidates, min_duration, corotate = args
    cfg = RunConfig(values)
    template = cfg.opt_template(f_thr=f_thr, omega=omega)
    kw = cfg.plan_kwargs()
    kw["max_candidates"] = max_candidates
    kw["min_duration"] = min_duration
    kw["goal_corotate"] = corotate
    t0 = time.perf_counter()
    try:
        best = plan(theta_approach, template, **kw)
        goal, kinetic, effort = best.objective_breakdown
        rec = dict(converged=1, duration=float(best.times[-1]),
                   objective=best.objective_value, goal=goal, kinetic=kinetic,
                   effort=effort,
                   pos_err=float(np.hypot(best.states[-1, 0] - best.x_goal[0],
                                          best.states[-1, 1] - best.x_goal[1])),
                   att_err=abs(wrap_angle(best.states[-1, 2] - best.theta_finish)),
                   reason="")
    except AllCandidatesFailed as ex:
        rec = dict(converged=0, duration=math.nan, objective=math.nan,
                   goal=math.nan, kinetic=math.nan, effort=math.nan,
                   pos_err=math.nan, att_err=math.nan,
                   reason=str(ex.reasons[0])[:60].replace(" ", "_") if ex.reasons else "failed")
    rec["wall_time"] = time.perf_counter() - t0
    return rec


def _run_points(tasks, parallel: int):
    if parallel <= 1:
        return [_sweep_point(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=parallel) as pool:
        return list(pool.map(_sweep_point, tasks))


_POINT_COLUMNS = ["converged", "duration", "objective", "goal", "kinetic",
                  "effort", "pos_err", "att_err", "wall_time", "reason"]


def cmd_sweep1(config_path, out_dir, parallel=1):
    """Target-spin x thrust-force sweep; aggregates error stats per omega."""
    cfg = load_config(config_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    omegas = grid_values(cfg["sweep1.omega_start"], cfg["sweep1.omega_step"],
                         cfg["sweep1.omega_stop"])
    forces = grid_values(cfg["sweep1.f_start"], cfg["sweep1.f_step"],
                         cfg["sweep1.f_stop"])
    theta_approach = cfg["opt.theta_approach"]
    tasks = []
    for i, om in enumerate(omegas):
        for j, f in enumerate(forces):
            md = cfg["sweep1.min_duration"]
            md = cfg.auto_min_duration(f_thr=f) if md == "auto" else md
            tasks.append((cfg.values, theta_approach, float(om), float(f),
                          cfg["sweep1.max_candidates"], md, cfg["sweep1.goal_corotate"]))
    recs = _run_points(tasks, parallel)

    rows = []
    idx = 0
    for i, om in enumerate(omegas):
        for j, f in enumerate(forces):
            r = recs[idx]; idx += 1
            rows.append([i, j, float(om), float(f)] + [r[c] for c in _POINT_COLUMNS])
    records.write_table(out / "sweep1_points.txt", "sweep1-points",
                        ["i_omega", "j_f", "omega", "f_thr"] + _POINT_COLUMNS,
                        rows, cfg.resolved_lines())

    srows = []
    for i, om in enumerate(omegas):
        sub = [recs[i * len(forces) + j] for j in range(len(forces))]
        ok = [r for r in sub if r["converged"]]
        if ok:
            errs = np.array([r["pos_err"] for r in ok])
            terms = np.array([[r["goal"], r["kinetic"], r["effort"]] for r in ok])
            mean_terms = terms.mean(axis=0)
            dominant = ("goal", "kinetic", "effort")[int(np.argmax(mean_terms))]
            srows.append([i, float(om), len(ok), len(sub) - len(ok),
                          errs.mean(), errs.std(), *mean_terms, dominant])
        else:
            srows.append([i, float(om), 0, len(sub), math.nan, math.nan,
                          math.nan, math.nan, math.nan, "-"])
    records.write_table(out / "sweep1_summary.txt", "sweep1-summary",
                        ["i_omega", "omega", "n_converged", "n_failed",
                         "pos_err_mean", "pos_err_std", "goal_mean",
                         "kinetic_mean", "effort_mean", "dominant_term"],
                        srows, cfg.resolved_lines())
    print(f"sweep1: {len(rows)} points -> {out/'sweep1_points.txt'}, {out/'sweep1_summary.txt'}")
    return srows


def cmd_sweep2(config_path, out_dir, parallel=1):
    """Approach-attitude polar sweep at fixed thrust; stats per sector."""
    cfg = load_config(config_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    thetas = grid_values(cfg["sweep2.theta_start_deg"], cfg["sweep2.theta_step_deg"],
                         cfg["sweep2.theta_stop_deg"])
    omegas = grid_values(cfg["sweep2.omega_start"], cfg["sweep2.omega_step"],
                         cfg["sweep2.omega_stop"])
    f_thr = cfg["sweep2.f_thr"]
    md_cfg = cfg["sweep2.min_duration"]
    md = cfg.auto_min_duration(f_thr=f_thr) if md_cfg == "auto" else md_cfg
    tasks = []
    for i, th in enumerate(thetas):
        for j, om in enumerate(omegas):
            tasks.append((cfg.values, math.radians(float(th)), float(om), float(f_thr),
                          cfg["sweep2.max_candidates"], md, cfg["sweep2.goal_corotate"]))
    recs = _run_points(tasks, parallel)

    rows = []
    idx = 0
    for i, th in enumerate(thetas):
        for j, om in enumerate(omegas):
            r = recs[idx]; idx += 1
            rows.append([i, j, float(th), float(om)] + [r[c] for c in _POINT_COLUMNS])
    records.write_table(out / "sweep2_points.txt", "sweep2-points",
                        ["i_theta", "j_omega", "theta_deg", "omega"] + _POINT_COLUMNS,
                        rows, cfg.resolved_lines())

    srows = []
    for i, th in enumerate(thetas):
        sub = [recs[i * len(omegas) + j] for j in range(len(omegas))]
        ok = [r for r in sub if r["converged"]]
        if ok:
            errs = np.array([r["pos_err"] for r in ok])
            srows.append([i, float(th), len(ok), len(sub) - len(ok),
                          errs.mean(), errs.std(), errs.max()])
        else:
            srows.append([i, float(th), 0, len(sub), math.nan, math.nan, math.nan])
    records.write_table(out / "sweep2_summary.txt", "sweep2-summary",
                        ["i_theta", "theta_deg", "n_converged", "n_failed",
                         "pos_err_mean", "pos_err_std", "pos_err_max"],
                        srows, cfg.resolved_lines())
    print(f"sweep2: {len(rows)} points -> {out/'sweep2_points.txt'}, {out/'sweep2_summary.txt'}")
    return srows


def cmd_audit(record_path, config_path, fail_below=None):
    cfg = load_config(config_path)
    rec = records.read_run_record(record_path)
    g_min = audit_safety(rec["states"], rec["times"], cfg.target(), cfg.kos_config())
    print(f"min KOS signed distance: {g_min:.6g} m "
          f"(recorded: {rec['meta'].get('min_kos_distance', 'n/a')})")
    if fail_below is not None and g_min < fail_below:
        print(f"audit FAILED: {g_min:.6g} < {fail_below}", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="proxdock",
                                 description="close-range rendezvous planning and tracking")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override config seed")

    p = sub.add_parser("plan", help="generate a trajectory")
    common(p)
    p = sub.add_parser("track", help="track a trajectory file in the simulator")
    common(p)
    p.add_argument("trajectory", help="trajectory file from `plan`")
    p = sub.add_parser("sweep1", help="target-spin x thrust sweep (case study 1)")
    common(p)
    p.add_argument("--parallel", type=int, default=1)
    p = sub.add_parser("sweep2", help="approach-attitude polar sweep (case study 2)")
    common(p)
    p.add_argument("--parallel", type=int, default=1)
    p = sub.add_parser("audit", help="safety re-check of a run record")
    p.add_argument("record", help="run record file from `track`")
    p.add_argument("--config", default=None)
    p.add_argument("--fail-below", type=float, default=None)

    args = ap.parse_args(argv)
    try:
        if args.command == "plan":
            cmd_plan(args.config, args.out, args.seed)
        elif args.command == "track":
            cmd_track(args.trajectory, args.config, args.out, args.seed)
        elif args.command == "sweep1":
            cmd_sweep1(args.config, args.out, args.parallel)
        elif args.command == "sweep2":
            cmd_sweep2(args.config, args.out, args.parallel)
        elif args.command == "audit":
            return cmd_audit(args.record, args.config, args.fail_below)
    except (ConfigError, records.RecordError) as ex:
        print(f"error: {ex}", file=sys.stderr)
        return 2
    except AllCandidatesFailed as ex:
        print(f"error: {ex}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
