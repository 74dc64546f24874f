"""Trajectory-tracking control with ON/OFF thrusters.

Pipeline per control period: 6-state PD error -> inertial wrench (plus the
planned feed-forward wrench when enabled) -> body frame -> box-constrained
least-squares duty allocation over the 8 thrusters -> PWM ON/OFF pattern.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import lsq_linear

from .dynamics import (NUM_THRUSTERS, BodyState, ThrusterLayout, Wrench,
                       wrap_angle)

RIDGE = 1e-9  # relative tie-break toward minimum-norm duty (the 3x8 system is wide)


def effective_ridge(A: np.ndarray) -> float:
    """Ridge weight scaled by the allocation matrix so the wrench-residual
    bias stays below the tie-break's own magnitude regardless of f_max."""
    return RIDGE * np.linalg.norm(A, 2) ** 2


@dataclass(frozen=True)
class PdGains:
    """PD gains; defaults tuned for the 10 kg / 0.15 kg m^2 chaser."""

    kp_pos: float = 2.0
    kd_pos: float = 8.0
    kp_att: float = 0.4
    kd_att: float = 1.2

    def __post_init__(self):
        g = (self.kp_pos, self.kd_pos, self.kp_att, self.kd_att)
        if any(v < 0 for v in g):
            raise ValueError("gains must be non-negative")
        if all(v == 0 for v in g):
            raise ValueError("at least one gain must be positive")


@dataclass(frozen=True)
class TrackingError:
    e_x: float
    e_y: float
    e_theta: float   # wrapped to (-pi, pi]
    e_vx: float
    e_vy: float
    e_omega: float

    def as_array(self) -> np.ndarray:
        return np.array([self.e_x, self.e_y, self.e_theta, self.e_vx, self.e_vy, self.e_omega])


@dataclass(frozen=True)
class PwmSchedule:
    """Binary firing pattern over the sub-slots of one control period."""

    n_slots: int
    pattern: np.ndarray   # (8, n_slots) of 0/1

    def __post_init__(self):
        pat = np.asarray(self.pattern)
        object.__setattr__(self, "pattern", pat)
        if pat.shape != (NUM_THRUSTERS, self.n_slots):
            raise ValueError("pattern must be 8 x n_slots")

    def delivered_duty(self) -> np.ndarray:
        return self.pattern.sum(axis=1) / self.n_slots


def tracking_error(ref: BodyState, actual: BodyState) -> TrackingError:
    d = ref.as_array() - actual.as_array()
    return TrackingError(d[0], d[1], wrap_angle(d[2]), d[3], d[4], d[5])


def pd_wrench(e: TrackingError, gains: PdGains) -> Wrench:
    """Inertial-frame wrench request from the tracking error."""
    return Wrench(
        gains.kp_pos * e.e_x + gains.kd_pos * e.e_vx,
        gains.kp_pos * e.e_y + gains.kd_pos * e.e_vy,
        gains.kp_att * e.e_theta + gains.kd_att * e.e_omega,
    )


def world_to_body(w: Wrench, theta: float) -> Wrench:
    """Rotate the force pair by R(theta)^T; torque is frame-invariant about z."""
    c, s = math.cos(theta), math.sin(theta)
    return Wrench(c * w.fx + s * w.fy, -s * w.fx + c * w.fy, w.tau)


def body_to_world(w: Wrench, theta: float) -> Wrench:
    c, s = math.cos(theta), math.sin(theta)
    return Wrench(c * w.fx - s * w.fy, s * w.fx + c * w.fy, w.tau)


def allocate_duty(w_body: Wrench, layout: ThrusterLayout) -> tuple[np.ndarray, Wrench]:
    """Duty ratios minimizing |B u f_max - w|^2 over the box [0,1]^8.

    Among exact minimizers the minimum-norm duty is returned (interior
    solutions via the pseudoinverse, otherwise active-set BVLS with a tiny
    ridge).  Returns (u, residual wrench = B u f_max - w).
    """
    A = layout.effectiveness_matrix() * layout.f_max
    w = w_body.as_array()
    u = np.linalg.pinv(A) @ w
    if np.all(u >= -1e-12) and np.all(u <= 1.0 + 1e-12):
        u = np.clip(u, 0.0, 1.0)
    else:
        aug = np.vstack([A, math.sqrt(effective_ridge(A)) * np.eye(NUM_THRUSTERS)])
        rhs = np.concatenate([w, np.zeros(NUM_THRUSTERS)])
        res = lsq_linear(aug, rhs, bounds=(0.0, 1.0), method="bvls")
        u = np.clip(res.x, 0.0, 1.0)
    return u, Wrench.from_array(A @ u - w)


def pwm_schedule(u: np.ndarray, n_slots: int) -> PwmSchedule:
    """Leading-edge PWM: round(u*n_slots) ON slots from the start of the period."""
    u = np.asarray(u, dtype=float)
    if n_slots < 1:
        raise ValueError("n_slots must be >= 1")
    if np.any(u < -1e-12) or np.any(u > 1.0 + 1e-12):
        raise ValueError("duty ratios must lie in [0, 1]")
    k = np.rint(np.clip(u, 0.0, 1.0) * n_slots).astype(int)
    pattern = (np.arange(n_slots)[None, :] < k[:, None]).astype(np.int8)
    return PwmSchedule(n_slots, pattern)


def continuous_duty(ref: BodyState, actual: BodyState, gains: PdGains,
                    layout: ThrusterLayout,
                    feed_forward: Wrench | None = None) -> np.ndarray:
    """Duty vector before PWM: error -> PD (+feed-forward) -> body frame -> allocate."""
    e = tracking_error(ref, actual)
    w = pd_wrench(e, gains)
    if feed_forward is not None:
        w = Wrench(w.fx + feed_forward.fx, w.fy + feed_forward.fy, w.tau + feed_forward.tau)
    w_body = world_to_body(w, actual.theta)
    u, _ = allocate_duty(w_body, layout)
    return u


def control_step(ref: BodyState, actual: BodyState, gains: PdGains,
                 layout: ThrusterLayout, n_slots: int,
                 feed_forward: Wrench | None = None) -> PwmSchedule:
    """Full tracking step: error -> PD (+feed-forward) -> body frame -> duty -> PWM."""
    return pwm_schedule(continuous_duty(ref, actual, gains, layout, feed_forward), n_slots)
