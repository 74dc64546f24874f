"""Deterministic closed-loop simulator.

Propagates the chaser at the physics step under binary PWM firings, runs the
controller at the control rate against the planned knots (zero-order hold),
and evaluates tracking, terminal and safety metrics.  Optional seeded model
mismatch (mass/inertia/thrust) and bounded disturbance accelerations emulate
plant/controller discrepancies; everything is reproducible from the seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kos as koslib
from .controller import (PdGains, Wrench, body_to_world, continuous_duty,
                         pwm_schedule, tracking_error)
from .dynamics import (BodyParams, BodyState, TargetState, ThrusterLayout,
                       default_layout, euler_step, target_state_at, total_wrench,
                       wrap_angle)
from .kos import KosConfig
from .optimizer import PlannedTrajectory


class ConfigMisaligned(ValueError):
    """physics_dt, control rate and PWM slots do not divide evenly."""


@dataclass(frozen=True)
class SimConfig:
    body: BodyParams = field(default_factory=BodyParams)
    layout: ThrusterLayout = field(default_factory=default_layout)
    gains: PdGains = field(default_factory=PdGains)
    physics_dt: float = 0.01
    control_hz: float = 10.0
    n_slots: int = 10
    duration: float | None = None     # None -> plan horizon + tail
    tail: float = 5.0                 # station-keeping time after the horizon [s]
    feed_forward: bool = True
    pwm: bool = True                  # False: apply the continuous duty directly
    mismatch_fraction: float = 0.0    # +-fraction on mass, inertia, f_max
    disturbance_accel: float = 0.0    # bound on random accelerations [m/s^2, rad/s^2]
    seed: int = 0
    kos_cfg: KosConfig | None = None  # None -> built from body/target sides

    def steps_per_period(self) -> int:
        period = 1.0 / self.control_hz
        n = period / self.physics_dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ConfigMisaligned(f"control period {period} not a multiple of physics_dt")
        n = int(round(n))
        if n % self.n_slots != 0:
            raise ConfigMisaligned(f"n_slots={self.n_slots} does not divide {n} steps/period")
        return n


@dataclass
class SimResult:
    times: np.ndarray            # physics-rate stamps, (n_steps+1,)
    states: np.ndarray           # (n_steps+1, 6)
    slot_times: np.ndarray       # start time of each PWM slot
    firings: np.ndarray          # (8, n_slots_total) of 0/1
    error_times: np.ndarray      # control-rate stamps
    errors: np.ndarray           # (n_periods, 6) tracking errors
    relative_velocity: np.ndarray  # (n_steps+1, 2) target-frame
    kos_distance: np.ndarray     # (n_steps+1,) exact signed distance
    terminal_position_error: float
    terminal_attitude_error: float
    terminal_relative_speed: float
    min_kos_distance: float


def relative_velocity_target_frame(chaser: BodyState, target_theta: float,
                                   target_omega: float, target_pos) -> np.ndarray:
    """Chaser velocity seen by an observer rotating with the target."""
    pos = np.asarray(target_pos, dtype=float)
    rel = chaser.position - pos
    v = chaser.velocity - target_omega * np.array([-rel[1], rel[0]])
    c, s = math.cos(target_theta), math.sin(target_theta)
    return np.array([c * v[0] + s * v[1], -s * v[0] + c * v[1]])


def _relative_velocity_series(states, times, target: TargetState) -> np.ndarray:
    th = target.theta0 + target.omega * times
    rel = states[:, :2] - target.position
    vx = states[:, 3] + target.omega * rel[:, 1]
    vy = states[:, 4] - target.omega * rel[:, 0]
    c, s = np.cos(th), np.sin(th)
    return np.column_stack([c * vx + s * vy, -s * vx + c * vy])


def kos_distance_series(states, times, target: TargetState, cfg: KosConfig) -> np.ndarray:
    """Exact signed distance at every step.

    The final-approach classification latches: once the State II conditions
    have held, later steps keep the relaxed region (the mission does not
    re-inflate the zone mid-capture while the chaser sits at the dock point).
    """
    th = target.theta0 + target.omega * np.asarray(times, dtype=float)
    pts = np.asarray(states, dtype=float)[:, :2]
    sv = koslib.classify_batch(pts, th, target.position, cfg)
    latched = np.maximum.accumulate(sv == koslib.KosState.STATE_II.value)
    sv = np.where(latched, koslib.KosState.STATE_II.value, koslib.KosState.STATE_I.value)
    return koslib.signed_distance_batch(pts, th, sv, target.position, cfg)


def audit_safety(states, times, target: TargetState, cfg: KosConfig) -> float:
    """Minimum exact keep-out distance over a state history."""
    return float(np.min(kos_distance_series(states, times, target, cfg)))


def run(plan: PlannedTrajectory, cfg: SimConfig, target: TargetState) -> SimResult:
    """Track a converged plan with PWM thrusters; deterministic for a seed."""
    if not plan.converged:
        raise ValueError("refusing to track a non-converged plan")
    spp = cfg.steps_per_period()
    steps_per_slot = spp // cfg.n_slots
    period = 1.0 / cfg.control_hz
    horizon = float(plan.times[-1])
    duration = cfg.duration if cfg.duration is not None else horizon + cfg.tail
    n_periods = max(1, int(round(duration * cfg.control_hz)))
    n_steps = n_periods * spp

    rng = np.random.default_rng(cfg.seed)
    if cfg.mismatch_fraction:
        fm, fi, ft = 1.0 + cfg.mismatch_fraction * rng.uniform(-1.0, 1.0, 3)
    else:
        fm = fi = ft = 1.0
    body_true = BodyParams(cfg.body.mass * fm, cfg.body.inertia * fi, cfg.body.side_length)
    layout_true = ThrusterLayout(cfg.layout.positions, cfg.layout.directions,
                                 cfg.layout.f_max * ft)

    kos_cfg = cfg.kos_cfg or KosConfig(l_s=cfg.body.side_length, l_t=target.side_length)

    times = np.arange(n_steps + 1) * cfg.physics_dt
    states = np.empty((n_steps + 1, 6))
    firings = np.zeros((8, n_periods * cfg.n_slots), dtype=np.int8)
    slot_times = np.arange(n_periods * cfg.n_slots) * (period / cfg.n_slots)
    errors = np.empty((n_periods, 6))

    state = plan.state_at(0)
    states[0] = state.as_array()
    step = 0
    final_pose = plan.states[-1].copy()
    for j in range(n_periods):
        t = j * period
        if t <= horizon + 1e-9:
            kref = min(int(math.floor(t / plan.dt + 1e-9)), plan.N)
            ref = plan.state_at(kref)
            ff = plan.wrench_at(kref) if (cfg.feed_forward and kref < plan.N) else None
        else:
            # tail: hold the final pose at rest so station-keeping settles
            ref = BodyState(final_pose[0], final_pose[1], final_pose[2], 0.0, 0.0, 0.0)
            ff = None
        errors[j] = tracking_error(ref, state).as_array()
        duty = continuous_duty(ref, state, cfg.gains, cfg.layout, feed_forward=ff)
        schedule = pwm_schedule(duty, cfg.n_slots)
        if cfg.disturbance_accel:
            da = rng.uniform(-cfg.disturbance_accel, cfg.disturbance_accel, 3)
            dist_w = Wrench(body_true.mass * da[0], body_true.mass * da[1],
                            body_true.inertia * da[2])
        else:
            dist_w = None
        for s in range(cfg.n_slots):
            u_bin = schedule.pattern[:, s]
            firings[:, j * cfg.n_slots + s] = u_bin
            # pwm=False applies the unquantized duty (paired-run experiments);
            # the firing record still logs the schedule that would have flown
            u_applied = u_bin.astype(float) if cfg.pwm else duty
            w_body = total_wrench(u_applied, layout_true)
            for _ in range(steps_per_slot):
                w_world = body_to_world(w_body, state.theta)
                if dist_w is not None:
                    w_world = Wrench(w_world.fx + dist_w.fx, w_world.fy + dist_w.fy,
                                     w_world.tau + dist_w.tau)
                state = euler_step(state, w_world, body_true, cfg.physics_dt)
                step += 1
                states[step] = state.as_array()

    relvel = _relative_velocity_series(states, times, target)
    g = kos_distance_series(states, times, target, kos_cfg)
    return SimResult(
        times=times,
        states=states,
        slot_times=slot_times,
        firings=firings,
        error_times=np.arange(n_periods) * period,
        errors=errors,
        relative_velocity=relvel,
        kos_distance=g,
        terminal_position_error=float(np.hypot(states[-1, 0] - plan.x_goal[0],
                                               states[-1, 1] - plan.x_goal[1])),
        terminal_attitude_error=abs(wrap_angle(states[-1, 2] - plan.theta_finish)),
        terminal_relative_speed=float(np.hypot(*relvel[-1])),
        min_kos_distance=float(np.min(g)),
    )
