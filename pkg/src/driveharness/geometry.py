"""Planar geometry primitives: poses, polylines, and frame transforms.

Conventions used everywhere in the harness:
  - yaw is counter-clockwise in radians, 0 along +x, normalized to (-pi, pi]
  - lateral offsets are signed, positive to the LEFT of the local tangent
  - polylines are immutable after construction and cache arc length
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidGeometryError, InvalidInputError

TWO_PI = 2.0 * math.pi


def normalize_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = (angle + math.pi) % TWO_PI - math.pi
    if a == -math.pi:
        return math.pi
    return a


@dataclass(frozen=True)
class Pose2D:
    """Planar pose; yaw normalized to (-pi, pi] on construction."""

    x: float
    y: float
    yaw: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.yaw)):
            raise InvalidInputError("pose components must be finite")
        object.__setattr__(self, "yaw", normalize_angle(float(self.yaw)))
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)


def pose_compose(a: Pose2D, b: Pose2D) -> Pose2D:
    """Pose of ``b`` (expressed in ``a``'s frame) in the world frame."""
    ca, sa = math.cos(a.yaw), math.sin(a.yaw)
    return Pose2D(a.x + ca * b.x - sa * b.y, a.y + sa * b.x + ca * b.y, a.yaw + b.yaw)


def pose_inverse(a: Pose2D) -> Pose2D:
    """Pose such that pose_compose(a, pose_inverse(a)) is the identity."""
    ca, sa = math.cos(a.yaw), math.sin(a.yaw)
    return Pose2D(-(ca * a.x + sa * a.y), -(-sa * a.x + ca * a.y), -a.yaw)


@dataclass(frozen=True)
class FramedPoints:
    """Points expressed in a local frame, together with that frame."""

    frame: Pose2D
    points: np.ndarray  # (K, 2), local coordinates (x forward, y left)


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1 and pts.shape[0] == 2:
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InvalidInputError(f"expected (K, 2) points, got shape {pts.shape}")
    return pts


def world_to_local(points, frame: Pose2D) -> np.ndarray:
    """Express world points in ``frame`` coordinates."""
    pts = _as_points(points)
    c, s = math.cos(frame.yaw), math.sin(frame.yaw)
    dx = pts[:, 0] - frame.x
    dy = pts[:, 1] - frame.y
    return np.column_stack((c * dx + s * dy, -s * dx + c * dy))


def local_to_world(points, frame: Pose2D) -> np.ndarray:
    """Express ``frame``-local points in world coordinates."""
    pts = _as_points(points)
    c, s = math.cos(frame.yaw), math.sin(frame.yaw)
    return np.column_stack(
        (frame.x + c * pts[:, 0] - s * pts[:, 1], frame.y + s * pts[:, 0] + c * pts[:, 1])
    )


def to_frame(points, frame: Pose2D) -> FramedPoints:
    """Bundle world points re-expressed in a local frame."""
    return FramedPoints(frame=frame, points=world_to_local(points, frame))


def to_world(framed: FramedPoints) -> np.ndarray:
    """Inverse of :func:`to_frame`."""
    return local_to_world(framed.points, framed.frame)


class Polyline:
    """Immutable ordered point chain with cached cumulative arc length."""

    __slots__ = ("_pts", "_cum", "_seg", "_seg_len")

    def __init__(self, points):
        pts = _as_points(points).copy()
        if len(pts) < 2:
            raise InvalidGeometryError("polyline needs at least 2 points")
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("polyline points must be finite")
        seg = np.diff(pts, axis=0)
        seg_len = np.hypot(seg[:, 0], seg[:, 1])
        cum = np.concatenate(([0.0], np.cumsum(seg_len)))
        if cum[-1] <= 0.0:
            raise InvalidGeometryError("polyline has zero total length")
        pts.setflags(write=False)
        cum.setflags(write=False)
        self._pts = pts
        self._cum = cum
        self._seg = seg
        self._seg_len = seg_len

    @property
    def points(self) -> np.ndarray:
        return self._pts

    @property
    def cumulative_arclength(self) -> np.ndarray:
        return self._cum

    @property
    def length(self) -> float:
        return float(self._cum[-1])

    def __len__(self) -> int:
        return len(self._pts)

    def _segment_index(self, s: float) -> int:
        i = int(np.searchsorted(self._cum, s, side="right")) - 1
        return min(max(i, 0), len(self._seg) - 1)

    def point_at(self, s, extrapolate: bool = False) -> np.ndarray:
        """Point at arc length ``s``; clamped to the ends unless ``extrapolate``.

        Extrapolation continues along the first/last segment tangent, which
        keeps fixed-spacing sampling well defined near the ends.
        """
        s_arr = np.atleast_1d(np.asarray(s, dtype=float))
        if extrapolate:
            s_clamped = np.clip(s_arr, 0.0, self.length)
        else:
            s_clamped = np.clip(s_arr, 0.0, self.length)
        idx = np.clip(np.searchsorted(self._cum, s_clamped, side="right") - 1, 0, len(self._seg) - 1)
        seg_len = self._seg_len[idx]
        t = np.where(seg_len > 0.0, (s_clamped - self._cum[idx]) / np.where(seg_len > 0, seg_len, 1.0), 0.0)
        out = self._pts[idx] + t[:, None] * self._seg[idx]
        if extrapolate:
            over = s_arr > self.length
            under = s_arr < 0.0
            if np.any(over):
                tan = self.tangent_at(self.length)
                out[over] = self._pts[-1] + (s_arr[over] - self.length)[:, None] * tan
            if np.any(under):
                tan = self.tangent_at(0.0)
                out[under] = self._pts[0] + s_arr[under][:, None] * tan
        if np.isscalar(s) or np.asarray(s).ndim == 0:
            return out[0]
        return out

    def tangent_at(self, s: float) -> np.ndarray:
        """Unit tangent of the segment containing arc length ``s``."""
        i = self._segment_index(float(np.clip(s, 0.0, self.length)))
        # skip zero-length segments if any
        j = i
        while self._seg_len[j] <= 0.0 and j + 1 < len(self._seg):
            j += 1
        while self._seg_len[j] <= 0.0 and j > 0:
            j -= 1
        return self._seg[j] / self._seg_len[j]

    def heading_at(self, s: float) -> float:
        t = self.tangent_at(s)
        return math.atan2(t[1], t[0])

    def project(self, point) -> tuple[float, float]:
        """Project a point onto the polyline.

        Returns ``(s, d)``: arc length of the closest point (ties broken
        toward smaller ``s``) and the signed lateral offset, positive when
        the point lies left of the local tangent.
        """
        p = np.asarray(point, dtype=float)
        a = self._pts[:-1]
        seg = self._seg
        len2 = self._seg_len**2
        safe = np.where(len2 > 0.0, len2, 1.0)
        t = np.clip(((p - a) * seg).sum(axis=1) / safe, 0.0, 1.0)
        t = np.where(len2 > 0.0, t, 0.0)
        q = a + t[:, None] * seg
        d2 = ((p - q) ** 2).sum(axis=1)
        i = int(np.argmin(d2))
        s = float(self._cum[i] + t[i] * self._seg_len[i])
        tan = self.tangent_at(s if self._seg_len[i] > 0 else self._cum[i])
        dx, dy = p[0] - q[i, 0], p[1] - q[i, 1]
        d = float(tan[0] * dy - tan[1] * dx)
        return s, d

    def slice(self, s0: float, s1: float) -> "Polyline":
        """Sub-polyline between arc lengths ``s0 < s1`` (clamped to ends)."""
        s0 = float(np.clip(s0, 0.0, self.length))
        s1 = float(np.clip(s1, 0.0, self.length))
        if not s1 > s0:
            raise InvalidGeometryError("slice needs s1 > s0 after clamping")
        inner = self._pts[(self._cum > s0 + 1e-9) & (self._cum < s1 - 1e-9)]
        pts = np.vstack([self.point_at(s0)[None, :], inner, self.point_at(s1)[None, :]])
        return Polyline(pts)


def resample_by_arclength(line: Polyline, spacing: float | None = None, count: int | None = None) -> np.ndarray:
    """Resample a polyline at equal arc-length steps.

    Exactly one of ``spacing`` / ``count`` must be given. The first sample is
    the line start. In spacing mode the line end is appended when the length
    is not an exact multiple (so the final gap may be shorter); in count mode
    the samples split the full length evenly, end included.
    """
    if (spacing is None) == (count is None):
        raise InvalidInputError("give exactly one of spacing or count")
    length = line.length
    if spacing is not None:
        if spacing <= 0:
            raise InvalidInputError("spacing must be positive")
        n_full = int(math.floor(length / spacing + 1e-9))
        s_vals = np.arange(n_full + 1, dtype=float) * spacing
        if length - n_full * spacing > 1e-9:
            s_vals = np.append(s_vals, length)
    else:
        if count < 2:
            raise InvalidInputError("count must be at least 2")
        s_vals = np.linspace(0.0, length, int(count))
    return line.point_at(s_vals)


def project_onto_polyline(line: Polyline, point) -> tuple[float, float]:
    """Module-level alias of :meth:`Polyline.project`."""
    return line.project(point)


class ArcTracker:
    """Incremental projection onto a polyline for monotone-progress motion.

    Searches only a window of segments around the previous arc length, so
    per-tick projection cost is independent of route length. Results match
    the full projection as long as the tracked point advances less than the
    forward window per update and the line does not loop back on itself
    within the window.
    """

    __slots__ = ("line", "_s", "back", "ahead")

    def __init__(self, line: Polyline, back: float = 8.0, ahead: float = 25.0):
        self.line = line
        self._s = 0.0
        self.back = back
        self.ahead = ahead

    @property
    def s(self) -> float:
        return self._s

    def update(self, point) -> tuple[float, float]:
        line = self.line
        cum = line.cumulative_arclength
        lo = int(np.searchsorted(cum, self._s - self.back, side="right")) - 1
        hi = int(np.searchsorted(cum, self._s + self.ahead, side="left"))
        lo = max(lo, 0)
        hi = min(max(hi, lo + 1), len(line.points) - 1)
        p = np.asarray(point, dtype=float)
        a = line.points[lo:hi]
        seg = line.points[lo + 1 : hi + 1] - a
        len2 = (seg**2).sum(axis=1)
        safe = np.where(len2 > 0.0, len2, 1.0)
        t = np.clip(((p - a) * seg).sum(axis=1) / safe, 0.0, 1.0)
        t = np.where(len2 > 0.0, t, 0.0)
        q = a + t[:, None] * seg
        d2 = ((p - q) ** 2).sum(axis=1)
        i = int(np.argmin(d2))
        s = float(cum[lo + i] + t[i] * math.sqrt(len2[i]))
        tan = line.tangent_at(s)
        dx, dy = p[0] - q[i, 0], p[1] - q[i, 1]
        d = float(tan[0] * dy - tan[1] * dx)
        self._s = s
        return s, d
