"""Driving output representation and the controllers that consume it.

The output contract is a set of space-conditioned path points for lateral
control and time-conditioned waypoints for longitudinal control, tracked by
two separate PID controllers. An entangled baseline that derives steering
from the time-conditioned waypoints alone is kept for comparison; its
steering collapses to zero when the waypoints do (standstill), which is the
failure mode the path representation removes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfigError, InvalidInputError, PathDegenerateError

MAX_STEER = 1.22
ACCEL_LIMITS = (-8.0, 2.0)

WAYPOINT_DT = 0.25  # s between time-conditioned waypoints
COLLAPSE_EPS = 0.05  # m; below this the first waypoint counts as collapsed

LOOKAHEAD_GAIN = 1.0  # s; lookahead distance = gain * speed, clamped
LOOKAHEAD_MIN = 2.4
LOOKAHEAD_MAX = 10.0
TARGET_SPEED_SEGMENTS = 2  # waypoint gaps averaged into the speed target


@dataclass
class DrivingOutput:
    """Model/expert output: path points, waypoints, optional commentary."""

    path: np.ndarray  # (N, 2) ego frame, fixed arc spacing
    waypoints: np.ndarray  # (M, 2) ego frame, fixed time spacing
    commentary: str | None = None

    def __post_init__(self):
        self.path = np.asarray(self.path, dtype=float)
        self.waypoints = np.asarray(self.waypoints, dtype=float)
        for name, arr in (("path", self.path), ("waypoints", self.waypoints)):
            if arr.ndim != 2 or arr.shape[1] != 2:
                raise InvalidInputError(f"{name} must have shape (K, 2)")
            if not np.all(np.isfinite(arr)):
                raise InvalidInputError(f"{name} must be finite")


@dataclass(frozen=True)
class ControlCommand:
    steer: float  # rad front-wheel angle
    accel: float  # m/s^2, negative = brake


@dataclass
class PidState:
    """Single-channel PID with anti-windup and output clamping."""

    kp: float
    ki: float = 0.0
    kd: float = 0.0
    integral_limit: float = 2.0
    output_limits: tuple[float, float] = (-math.inf, math.inf)
    integral: float = 0.0
    prev_error: float | None = None

    def update(self, error: float, dt: float) -> float:
        self.integral += error * dt
        self.integral = min(max(self.integral, -self.integral_limit), self.integral_limit)
        d_term = 0.0
        if self.prev_error is not None and dt > 0.0:
            d_term = self.kd * (error - self.prev_error) / dt
        out = self.kp * error + self.ki * self.integral + d_term
        self.prev_error = error
        lo, hi = self.output_limits
        return min(max(out, lo), hi)

    def reset(self) -> None:
        self.integral = 0.0
        self.prev_error = None


def default_lateral_pid() -> PidState:
    return PidState(kp=1.2, ki=0.0, kd=0.3, output_limits=(-MAX_STEER, MAX_STEER))


def default_longitudinal_pid() -> PidState:
    return PidState(kp=1.0, ki=0.05, kd=0.0, output_limits=ACCEL_LIMITS)


@dataclass
class StopPolicy:
    """Deliberate route-ending rule: stop after a distance threshold, but
    only while steering is near zero and outside intersections."""

    distance_threshold: float
    steer_epsilon: float = 0.0175  # rad, ~1 degree
    distance_travelled: float = 0.0
    stopped: bool = False


def cumsum_waypoints(deltas) -> np.ndarray:
    """Integrate per-step displacement vectors into waypoint positions."""
    d = np.asarray(deltas, dtype=float)
    if d.ndim != 2 or d.shape[1] != 2 or len(d) < 1:
        raise InvalidInputError("deltas must have shape (M, 2) with M >= 1")
    if not np.all(np.isfinite(d)):
        raise InvalidInputError("deltas must be finite")
    return np.cumsum(d, axis=0)


def diff_waypoints(points) -> np.ndarray:
    """Exact inverse of :func:`cumsum_waypoints`."""
    p = np.asarray(points, dtype=float)
    if p.ndim != 2 or p.shape[1] != 2 or len(p) < 1:
        raise InvalidInputError("points must have shape (M, 2) with M >= 1")
    if not np.all(np.isfinite(p)):
        raise InvalidInputError("points must be finite")
    return np.diff(p, axis=0, prepend=np.zeros((1, 2)))


def mse_loss(pred: DrivingOutput, target: DrivingOutput) -> tuple[float, float]:
    """Mean squared error over path points and waypoints, separately."""
    if pred.path.shape != target.path.shape or pred.waypoints.shape != target.waypoints.shape:
        raise InvalidInputError("prediction/target shapes must match")
    loss_path = float(np.mean((pred.path - target.path) ** 2))
    loss_wp = float(np.mean((pred.waypoints - target.waypoints) ** 2))
    return loss_path, loss_wp


def _lookahead_point(path: np.ndarray, distance: float) -> np.ndarray:
    """Point at the given arc distance from the ego origin along the path."""
    full = np.vstack([np.zeros((1, 2)), path])
    seg = np.diff(full, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate(([0.0], np.cumsum(seg_len)))
    if cum[-1] <= 1e-12:
        raise PathDegenerateError("path carries no geometry")
    s = min(distance, cum[-1])
    i = min(int(np.searchsorted(cum, s, side="right")) - 1, len(seg) - 1)
    i = max(i, 0)
    t = (s - cum[i]) / seg_len[i] if seg_len[i] > 0 else 0.0
    return full[i] + t * seg[i]


def lateral_pid(output: DrivingOutput, speed: float, pid: PidState, dt: float = 0.05) -> float:
    """Steering from the space-conditioned path: PID on the bearing to a
    speed-scheduled lookahead point. Well defined at standstill (minimum
    lookahead applies)."""
    if len(output.path) < 2:
        raise InvalidInputError("path needs at least 2 points")
    if float(np.ptp(output.path, axis=0).max()) < 1e-12 and float(np.abs(output.path).max()) < 1e-12:
        raise PathDegenerateError("all path points identical at the origin")
    d_la = min(max(LOOKAHEAD_GAIN * speed, LOOKAHEAD_MIN), LOOKAHEAD_MAX)
    target = _lookahead_point(output.path, d_la)
    error = math.atan2(target[1], target[0])
    steer = pid.update(error, dt)
    return min(max(steer, -MAX_STEER), MAX_STEER)


def _waypoint_target_speed(waypoints: np.ndarray, dt_wp: float = WAYPOINT_DT,
                           segments: int = TARGET_SPEED_SEGMENTS) -> float:
    gaps = np.hypot(*np.diff(waypoints, axis=0).T)
    k = min(segments, len(gaps))
    if k == 0:
        return float(np.hypot(*waypoints[0])) / dt_wp
    return float(np.mean(gaps[:k])) / dt_wp


def longitudinal_pid(output: DrivingOutput, speed: float, pid: PidState, dt: float = 0.05) -> float:
    """Acceleration from the time-conditioned waypoints: PID on the error
    between the waypoint-implied target speed and the current speed. The
    brake saturates once the target collapses below 0.1 m/s."""
    if len(output.waypoints) < 2:
        raise InvalidInputError("waypoints need at least 2 points")
    target_speed = _waypoint_target_speed(output.waypoints)
    if target_speed < 0.1:
        pid.update(-speed, dt)  # keep controller state consistent
        return pid.output_limits[0]
    accel = pid.update(target_speed - speed, dt)
    return min(max(accel, ACCEL_LIMITS[0]), ACCEL_LIMITS[1])


def entangled_control(waypoints, speed: float, lat_pid: PidState, lon_pid: PidState,
                      dt: float = 0.05) -> ControlCommand:
    """Baseline controller driving both channels from time-conditioned
    waypoints. When the first waypoint collapses toward the origin the
    steering falls back to zero; this is the representation's documented
    failure mode at standstill."""
    wp = np.asarray(waypoints, dtype=float)
    if wp.ndim != 2 or len(wp) < 2:
        raise InvalidInputError("waypoints need at least 2 points")
    anchor = wp[1]
    if float(np.hypot(anchor[0], anchor[1])) < COLLAPSE_EPS:
        steer = 0.0
        lat_pid.update(0.0, dt)
    else:
        error = math.atan2(anchor[1], anchor[0])
        steer = min(max(lat_pid.update(error, dt), -MAX_STEER), MAX_STEER)
    output = DrivingOutput(path=wp, waypoints=wp)
    accel = longitudinal_pid(output, speed, lon_pid, dt)
    return ControlCommand(steer=steer, accel=accel)


def early_stop_filter(policy: StopPolicy, steer: float, ego_s: float, in_intersection: bool) -> str:
    """Decide whether to keep driving or deliberately stop.

    ``ego_s`` is the distance travelled so far. Returns "stop" once the
    distance threshold is crossed while steering is near zero and the ego is
    outside intersections; the decision is sticky.
    """
    policy.distance_travelled = max(policy.distance_travelled, ego_s)
    if policy.stopped:
        return "stop"
    if (policy.distance_travelled >= policy.distance_threshold
            and abs(steer) < policy.steer_epsilon and not in_intersection):
        policy.stopped = True
        return "stop"
    return "continue"


def compute_token_budget(image_w: int, image_h: int, tile: int = 336, patch: int = 14,
                         downsample: int = 2, include_global: bool = False) -> tuple[int, int, int]:
    """Vision token arithmetic for tiled high-resolution encoding.

    The image is covered by ``tile``-sized squares encoded independently
    (plus one optional low-resolution global tile); each tile yields
    ``(tile/patch)**2`` tokens, then the adapter downsamples the total token
    count by an exact integer factor.
    """
    if min(image_w, image_h, tile, patch, downsample) <= 0:
        raise InvalidConfigError("all sizes must be positive")
    if tile % patch != 0:
        raise InvalidConfigError(f"tile {tile} not divisible by patch {patch}")
    tiles = math.ceil(image_w / tile) * math.ceil(image_h / tile)
    if include_global:
        tiles += 1
    tokens_pre = tiles * (tile // patch) ** 2
    if tokens_pre % downsample != 0:
        raise InvalidConfigError(
            f"{tokens_pre} tokens not divisible by downsample factor {downsample}"
        )
    return tiles, tokens_pre, tokens_pre // downsample
