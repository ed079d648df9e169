"""Intelligent Driver Model car-following law.

Used by the privileged expert for longitudinal planning and by scripted
vehicle actors so rear-end interactions behave plausibly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

from .errors import InvalidInputError

logger = logging.getLogger(__name__)

HAZARD_KINDS = ("leading_vehicle", "walker", "red_light", "stop_sign", "none")
SOURCE_DIRECTIONS = ("front", "left", "right", "oncoming")


@dataclass(frozen=True)
class Hazard:
    """Nearest object governing longitudinal behavior.

    gap is the bumper-to-bumper distance along the planned path,
    closing_speed is ego speed minus the leader's along-path speed, and
    source_direction record where the object came from (for bucketing).
    """

    kind: str = "none"
    gap: float = math.inf
    closing_speed: float = 0.0
    source_direction: str = "front"

    def __post_init__(self):
        if self.kind not in HAZARD_KINDS:
            raise InvalidInputError(f"unknown hazard kind {self.kind!r}")
        if self.source_direction not in SOURCE_DIRECTIONS:
            raise InvalidInputError(f"unknown source direction {self.source_direction!r}")
        if self.kind != "none" and not math.isfinite(self.gap):
            raise InvalidInputError("hazard gap must be finite when a hazard is present")


NO_HAZARD = Hazard()


@dataclass(frozen=True)
class IdmParams:
    """IDM parameters; defaults target an urban desired speed of 8.3 m/s."""

    v0: float = 8.3
    T: float = 1.0
    s0: float = 4.0
    a_max: float = 2.0
    b: float = 4.0
    delta: float = 4.0
    b_emergency: float = 8.0

    def __post_init__(self):
        for name in ("v0", "T", "s0", "a_max", "b", "b_emergency"):
            if getattr(self, name) <= 0.0:
                raise InvalidInputError(f"IdmParams.{name} must be positive")
        if self.delta < 1.0:
            raise InvalidInputError("IdmParams.delta must be >= 1")


def idm_acceleration(v: float, hazard: Hazard, params: IdmParams) -> float:
    """Acceleration command for speed ``v`` facing ``hazard``.

    Free road uses only the desired-speed term; with a hazard the standard
    interaction term applies with desired gap
    s* = s0 + v*T + v*dv / (2*sqrt(a_max*b)).
    A non-positive gap with a hazard present returns emergency deceleration.
    Output is clamped to [-b_emergency, a_max].
    """
    if not math.isfinite(v) or v < 0.0:
        raise InvalidInputError("speed must be finite and non-negative")
    free = 1.0 - (v / params.v0) ** params.delta
    if hazard is None or hazard.kind == "none":
        accel = params.a_max * free
    else:
        if hazard.gap <= 0.0:
            logger.debug("hazard gap %.3f <= 0; emergency braking", hazard.gap)
            return -params.b_emergency
        s_star = params.s0 + v * params.T + v * hazard.closing_speed / (
            2.0 * math.sqrt(params.a_max * params.b)
        )
        accel = params.a_max * (free - (s_star / hazard.gap) ** 2)
    return min(max(accel, -params.b_emergency), params.a_max)
