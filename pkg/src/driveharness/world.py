"""Deterministic fixed-tick kinematic world: ego, scripted actors, infractions.

Stands in for a full driving simulator at desk scale. Vehicles use a
kinematic bicycle model with a rear-axle reference point; scripted vehicles
car-follow with the IDM so rear-end interactions behave plausibly; traffic
lights are deterministic functions of simulation time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidInputError, InvalidSpecError
from .geometry import ArcTracker, Pose2D, Polyline, normalize_angle
from .idm import Hazard, IdmParams, idm_acceleration

SIM_DT = 0.05  # 20 Hz base tick
RECORD_EVERY = 4  # decimate to 5 fps for dataset recording

MAX_STEER = 1.22  # rad, front-wheel angle limit
WHEELBASE = 2.9
VEHICLE_HALF_EXTENTS = (2.45, 1.05)  # half length, half width
VEHICLE_CENTER_OFFSET = 1.45  # footprint center forward of the rear axle
WALKER_HALF_EXTENTS = (0.35, 0.35)

STOP_SPEED = 0.1  # below this the vehicle counts as stopped
ROUTE_DEVIATION_LIMIT = 30.0  # m of lateral offset that ends the episode
BLOCKED_TIMEOUT = 90.0  # s of standstill outside intended stops

SCENARIO_KINDS = (
    "lead_vehicle",
    "crossing_walker",
    "red_light",
    "stop_sign",
    "static_obstacle_swerve",
    "merge_from_left",
    "merge_from_right",
    "oncoming_vehicle",
    "opening_door",
)

# nominal distance_param per scenario kind, meters (perturbed +-10% at build)
NOMINAL_DISTANCE_PARAM = {
    "lead_vehicle": 18.0,  # initial gap ahead of the trigger point
    "crossing_walker": 6.0,  # lateral start offset of the walker
    "red_light": 20.0,  # intersection zone length past the stop line
    "stop_sign": 10.0,  # stop zone length
    "static_obstacle_swerve": 1.0,  # obstacle half width
    "merge_from_left": 10.0,  # lateral offset of the merge approach
    "merge_from_right": 10.0,
    "oncoming_vehicle": 2.5,  # lateral offset of the oncoming lane
    "opening_door": 2.3,  # lateral offset of the parked vehicle
}

INFRACTION_KINDS = (
    "collision_pedestrian",
    "collision_vehicle",
    "collision_static",
    "red_light",
    "stop_sign",
    "route_deviation",
    "agent_blocked",
)
TERMINAL_KINDS = frozenset({"route_deviation", "agent_blocked"})


@dataclass
class VehicleState:
    """Ego vehicle state; pose is the rear-axle reference point."""

    pose: Pose2D
    speed: float
    wheelbase: float = WHEELBASE
    half_extents: tuple[float, float] = VEHICLE_HALF_EXTENTS
    center_offset: float = VEHICLE_CENTER_OFFSET

    def __post_init__(self):
        if self.speed < 0.0:
            raise InvalidInputError("speed must be non-negative")
        if self.wheelbase <= 0.0:
            raise InvalidInputError("wheelbase must be positive")

    @property
    def footprint_pose(self) -> Pose2D:
        c, s = math.cos(self.pose.yaw), math.sin(self.pose.yaw)
        return Pose2D(
            self.pose.x + c * self.center_offset,
            self.pose.y + s * self.center_offset,
            self.pose.yaw,
        )

    @property
    def front_overhang(self) -> float:
        """Distance from the reference point to the front bumper."""
        return self.center_offset + self.half_extents[0]


def step_vehicle(state: VehicleState, accel: float, steer: float, dt: float,
                 max_steer: float = MAX_STEER) -> VehicleState:
    """Advance one kinematic bicycle step (forward Euler, rear axle)."""
    if not (math.isfinite(accel) and math.isfinite(steer) and math.isfinite(dt)):
        raise InvalidInputError("controls and dt must be finite")
    if dt <= 0.0:
        raise InvalidInputError("dt must be positive")
    steer = min(max(steer, -max_steer), max_steer)
    p = state.pose
    x = p.x + state.speed * math.cos(p.yaw) * dt
    y = p.y + state.speed * math.sin(p.yaw) * dt
    yaw = normalize_angle(p.yaw + state.speed / state.wheelbase * math.tan(steer) * dt)
    speed = max(0.0, state.speed + accel * dt)
    return replace(state, pose=Pose2D(x, y, yaw), speed=speed)


@dataclass
class Actor:
    """Scripted scenario participant: vehicle, walker, or static obstacle."""

    actor_id: str
    kind: str  # 'vehicle' | 'walker' | 'static'
    pose: Pose2D
    speed: float = 0.0
    half_extents: tuple[float, float] = VEHICLE_HALF_EXTENTS
    center_offset: float = 0.0
    # activation: script starts once ego route-arclength passes this value
    activation_s: float | None = None
    active: bool = False
    # vehicles follow a path with IDM
    path: Polyline | None = None
    path_s: float = 0.0
    desired_speed: float = 5.5
    idm: IdmParams | None = None
    ignore_ego_before_s: float = -math.inf  # merge actors commit to the gap
    # walkers move straight for a fixed distance then stop
    travel_limit: float = math.inf
    travelled: float = 0.0

    @property
    def footprint_pose(self) -> Pose2D:
        if self.center_offset == 0.0:
            return self.pose
        c, s = math.cos(self.pose.yaw), math.sin(self.pose.yaw)
        return Pose2D(
            self.pose.x + c * self.center_offset,
            self.pose.y + s * self.center_offset,
            self.pose.yaw,
        )


@dataclass
class TrafficLight:
    """Stop line on the route with a deterministic phase schedule."""

    light_id: str
    stop_line_s: float
    schedule: tuple[tuple[str, float], ...]  # (phase, duration) played once; last runs forever

    def phase_at(self, t: float) -> str:
        acc = 0.0
        for phase, dur in self.schedule:
            acc += dur
            if t < acc:
                return phase
        return self.schedule[-1][0]


@dataclass
class StopSign:
    """Stop zone along the route; the vehicle must come to rest inside it."""

    sign_id: str
    zone_start_s: float
    zone_end_s: float


@dataclass
class RectZone:
    """Oriented rectangular map zone (intersections)."""

    center: Pose2D
    half_extents: tuple[float, float]

    def contains(self, x: float, y: float) -> bool:
        c, s = math.cos(self.center.yaw), math.sin(self.center.yaw)
        dx, dy = x - self.center.x, y - self.center.y
        lx = c * dx + s * dy
        ly = -s * dx + c * dy
        return abs(lx) <= self.half_extents[0] and abs(ly) <= self.half_extents[1]


@dataclass
class MapFeatures:
    route: Polyline
    lights: list[TrafficLight] = field(default_factory=list)
    stop_signs: list[StopSign] = field(default_factory=list)
    intersections: list[RectZone] = field(default_factory=list)


@dataclass(frozen=True)
class ScenarioSpec:
    """One scenario instance anchored to a route."""

    kind: str
    trigger_distance: float
    distance_param: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise InvalidSpecError(f"unknown scenario kind {self.kind!r}")
        if self.distance_param <= 0.0:
            raise InvalidSpecError("distance_param must be positive")


@dataclass(frozen=True)
class InfractionEvent:
    kind: str
    tick: int
    route_s: float
    actor_id: str = ""


@dataclass
class _StopZoneTracker:
    inside: bool = False
    min_speed: float = math.inf
    satisfied: bool = False
    scored: bool = False


@dataclass
class WorldState:
    """Full mutable simulation state, owned by exactly one episode run."""

    ego: VehicleState
    actors: list[Actor]
    features: MapFeatures
    sim_dt: float = SIM_DT
    tick: int = 0
    # per-tick derived quantities
    ego_route_s: float = 0.0
    ego_route_d: float = 0.0
    route_s_max: float = 0.0
    odometer: float = 0.0
    terminated: bool = False
    termination_kind: str = ""
    # infraction bookkeeping
    _tracker: ArcTracker | None = None
    _contacts: set = field(default_factory=set)
    _stop_zones: dict = field(default_factory=dict)
    _blocked_time: float = 0.0
    _front_s_prev: float = 0.0

    def __post_init__(self):
        if self._tracker is None:
            self._tracker = ArcTracker(self.features.route)
        s, d = self._tracker.update(self.ego.pose.xy)
        self.ego_route_s = s
        self.ego_route_d = d
        self.route_s_max = s
        self._front_s_prev = s + self.ego.front_overhang
        for sign in self.features.stop_signs:
            self._stop_zones.setdefault(sign.sign_id, _StopZoneTracker())

    @property
    def time(self) -> float:
        return self.tick * self.sim_dt

    def stop_zone_state(self, sign_id: str) -> _StopZoneTracker:
        return self._stop_zones.setdefault(sign_id, _StopZoneTracker())

    def in_intersection(self) -> bool:
        x, y = self.ego.pose.x, self.ego.pose.y
        return any(z.contains(x, y) for z in self.features.intersections)


def _rect_corners(pose: Pose2D, half_extents) -> np.ndarray:
    hl, hw = half_extents
    c, s = math.cos(pose.yaw), math.sin(pose.yaw)
    local = np.array([[hl, hw], [hl, -hw], [-hl, -hw], [-hl, hw]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([pose.x, pose.y])


def obb_overlap(pose_a: Pose2D, half_a, pose_b: Pose2D, half_b) -> bool:
    """Oriented-rectangle overlap via the separating-axis test."""
    ca = _rect_corners(pose_a, half_a)
    cb = _rect_corners(pose_b, half_b)
    for yaw in (pose_a.yaw, pose_b.yaw):
        c, s = math.cos(yaw), math.sin(yaw)
        for axis in ((c, s), (-s, c)):
            pa = ca @ axis
            pb = cb @ axis
            if pa.max() < pb.min() or pb.max() < pa.min():
                return False
    return True


def _actor_leader(actor: Actor, world: WorldState) -> Hazard:
    """Nearest blocking object ahead on the actor's own path."""
    assert actor.path is not None
    best_gap = math.inf
    best_closing = 0.0
    candidates = [(world.ego.footprint_pose, world.ego.speed, world.ego.pose.yaw,
                   world.ego.half_extents[0], "ego")]
    for other in world.actors:
        if other.actor_id == actor.actor_id:
            continue
        candidates.append((other.footprint_pose, other.speed, other.pose.yaw,
                           other.half_extents[0], other.actor_id))
    for pose, speed, yaw, half_len, obj_id in candidates:
        if obj_id == "ego" and actor.path_s < actor.ignore_ego_before_s:
            continue
        s_o, d_o = actor.path.project((pose.x, pose.y))
        if abs(d_o) > 1.5:
            continue
        ahead = s_o - actor.path_s
        if ahead <= 0.0 or ahead > 60.0:
            continue
        gap = ahead - actor.half_extents[0] - half_len
        if gap < best_gap:
            tangent_yaw = actor.path.heading_at(s_o)
            v_along = speed * math.cos(yaw - tangent_yaw)
            best_gap = gap
            best_closing = actor.speed - v_along
    if not math.isfinite(best_gap):
        return Hazard()
    return Hazard(kind="leading_vehicle", gap=max(best_gap, 0.0), closing_speed=best_closing)


def _advance_actor(actor: Actor, world: WorldState, dt: float) -> None:
    if actor.kind == "static" or not actor.active:
        return
    if actor.kind == "walker":
        if actor.travelled >= actor.travel_limit:
            actor.speed = 0.0
            return
        step = actor.speed * dt
        actor.pose = Pose2D(
            actor.pose.x + step * math.cos(actor.pose.yaw),
            actor.pose.y + step * math.sin(actor.pose.yaw),
            actor.pose.yaw,
        )
        actor.travelled += step
        return
    # vehicle: IDM along its path
    assert actor.path is not None
    params = actor.idm or IdmParams(v0=actor.desired_speed)
    hazard = _actor_leader(actor, world)
    accel = idm_acceleration(actor.speed, hazard, params)
    actor.path_s = min(actor.path_s + actor.speed * dt, actor.path.length)
    actor.speed = max(0.0, actor.speed + accel * dt)
    point = actor.path.point_at(actor.path_s)
    actor.pose = Pose2D(point[0], point[1], actor.path.heading_at(actor.path_s))


def detect_infractions(world: WorldState) -> list[InfractionEvent]:
    """Detect infractions for the current tick, with contact de-duplication.

    Stateful across calls through trackers stored on the world; call exactly
    once per simulation step (step_world does).
    """
    events: list[InfractionEvent] = []
    ego = world.ego
    ego_fp = ego.footprint_pose

    collision_kind = {"walker": "collision_pedestrian", "vehicle": "collision_vehicle",
                      "static": "collision_static"}
    live_contacts = set()
    for actor in world.actors:
        if abs(actor.pose.x - ego.pose.x) > 25.0 or abs(actor.pose.y - ego.pose.y) > 25.0:
            continue
        if obb_overlap(ego_fp, ego.half_extents, actor.footprint_pose, actor.half_extents):
            kind = collision_kind[actor.kind]
            key = (kind, actor.actor_id)
            live_contacts.add(key)
            if key not in world._contacts:
                events.append(InfractionEvent(kind, world.tick, world.ego_route_s, actor.actor_id))
    world._contacts = live_contacts

    front_s = world.ego_route_s + ego.front_overhang
    for light in world.features.lights:
        if world._front_s_prev < light.stop_line_s <= front_s:
            if light.phase_at(world.time) == "red":
                events.append(InfractionEvent("red_light", world.tick, world.ego_route_s, light.light_id))
    world._front_s_prev = front_s

    for sign in world.features.stop_signs:
        state = world.stop_zone_state(sign.sign_id)
        inside = sign.zone_start_s <= world.ego_route_s <= sign.zone_end_s
        if inside:
            state.inside = True
            state.min_speed = min(state.min_speed, ego.speed)
            if ego.speed < STOP_SPEED:
                state.satisfied = True
        elif state.inside and world.ego_route_s > sign.zone_end_s and not state.scored:
            state.scored = True
            if not state.satisfied:
                events.append(InfractionEvent("stop_sign", world.tick, world.ego_route_s, sign.sign_id))

    if abs(world.ego_route_d) > ROUTE_DEVIATION_LIMIT and not world.terminated:
        events.append(InfractionEvent("route_deviation", world.tick, world.ego_route_s))

    if ego.speed < STOP_SPEED:
        if not _intended_stop(world, front_s):
            world._blocked_time += world.sim_dt
            if world._blocked_time > BLOCKED_TIMEOUT and not world.terminated:
                events.append(InfractionEvent("agent_blocked", world.tick, world.ego_route_s))
    else:
        world._blocked_time = 0.0

    for event in events:
        if event.kind in TERMINAL_KINDS:
            world.terminated = True
            world.termination_kind = event.kind
    return events


def _intended_stop(world: WorldState, front_s: float) -> bool:
    for light in world.features.lights:
        if light.phase_at(world.time) == "red" and 0.0 <= light.stop_line_s - front_s <= 20.0:
            return True
    for sign in world.features.stop_signs:
        state = world.stop_zone_state(sign.sign_id)
        if state.satisfied:
            continue
        if world.ego_route_s <= sign.zone_end_s and sign.zone_start_s - world.ego_route_s <= 20.0:
            return True
    return False


def step_world(world: WorldState, ego_accel: float, ego_steer: float) -> tuple[WorldState, list[InfractionEvent]]:
    """Advance one tick: ego, actor scripts, then infraction detection."""
    dt = world.sim_dt
    speed_before = world.ego.speed
    world.ego = step_vehicle(world.ego, ego_accel, ego_steer, dt)
    world.odometer += speed_before * dt
    s, d = world._tracker.update(world.ego.pose.xy)
    world.ego_route_s = s
    world.ego_route_d = d
    world.route_s_max = max(world.route_s_max, s)
    for actor in world.actors:
        if not actor.active and actor.activation_s is not None and s >= actor.activation_s:
            actor.active = True
        _advance_actor(actor, world, dt)
    world.tick += 1
    events = detect_infractions(world)
    return world, events


# ---------------------------------------------------------------------------
# scenario construction


def _route_frame(route: Polyline, s: float, lateral: float = 0.0) -> Pose2D:
    point = route.point_at(s, extrapolate=True)
    heading = route.heading_at(min(max(s, 0.0), route.length))
    nx, ny = -math.sin(heading), math.cos(heading)
    return Pose2D(point[0] + nx * lateral, point[1] + ny * lateral, heading)


def _extended_route(route: Polyline, extra: float = 80.0) -> Polyline:
    tan = route.tangent_at(route.length)
    tail = route.points[-1] + tan * extra
    return Polyline(np.vstack([route.points, tail]))


def _offset_path(route: Polyline, s_vals: np.ndarray, lateral: float, reverse: bool = False) -> Polyline:
    pts = []
    for s in s_vals:
        pose = _route_frame(route, float(s), lateral)
        pts.append((pose.x, pose.y))
    if reverse:
        pts = pts[::-1]
    return Polyline(np.asarray(pts))


def make_plain_world(route: Polyline, *, start_speed: float = 0.0) -> WorldState:
    """World with only the ego on the route; used for hazard-free runs."""
    ego = VehicleState(pose=_route_frame(route, 0.0), speed=start_speed)
    return WorldState(ego=ego, actors=[], features=MapFeatures(route=route))


def build_scenario(spec: ScenarioSpec, route: Polyline, rng_seed: int) -> WorldState:
    """Construct the deterministic initial world for a scenario instance.

    The scenario's distance parameter is perturbed uniformly in
    [0.9, 1.1] x nominal using the seed; actor placement follows so the
    scenario engages as the ego reaches the trigger distance.
    """
    if not 0.0 <= spec.trigger_distance <= route.length:
        raise InvalidSpecError(
            f"trigger {spec.trigger_distance:.1f} m outside route of {route.length:.1f} m"
        )
    rng = np.random.default_rng(rng_seed)
    d_param = spec.distance_param * rng.uniform(0.9, 1.1)
    trigger = spec.trigger_distance

    actors: list[Actor] = []
    features = MapFeatures(route=route)
    kind = spec.kind

    if kind == "lead_vehicle":
        path = _extended_route(route)
        s_spawn = trigger + d_param
        actors.append(Actor(
            actor_id="lead", kind="vehicle", pose=_route_frame(route, s_spawn),
            speed=0.0, activation_s=trigger, path=path, path_s=s_spawn,
            desired_speed=5.5, idm=IdmParams(v0=5.5),
        ))
    elif kind == "crossing_walker":
        side = 1.0 if rng.integers(0, 2) == 0 else -1.0
        s_walk = trigger + 22.0
        anchor = _route_frame(route, s_walk, side * d_param)
        heading = normalize_angle(anchor.yaw + (-side) * math.pi / 2.0)
        actors.append(Actor(
            actor_id="walker", kind="walker",
            pose=Pose2D(anchor.x, anchor.y, heading), speed=1.4,
            half_extents=WALKER_HALF_EXTENTS, activation_s=trigger,
            travel_limit=2.0 * d_param, active=False,
        ))
        actors[-1].speed = 1.4
    elif kind == "red_light":
        arrival = trigger / 8.3
        features.lights.append(TrafficLight(
            light_id="tl0", stop_line_s=trigger,
            schedule=(("red", arrival + 10.0), ("green", math.inf)),
        ))
        zone_len = d_param
        features.intersections.append(RectZone(
            center=_route_frame(route, trigger + 2.0 + zone_len / 2.0),
            half_extents=(zone_len / 2.0, 7.0),
        ))
    elif kind == "stop_sign":
        features.stop_signs.append(StopSign(
            sign_id="ss0", zone_start_s=trigger, zone_end_s=trigger + d_param,
        ))
    elif kind == "static_obstacle_swerve":
        jitter = rng.uniform(-0.3, 0.3)
        actors.append(Actor(
            actor_id="obstacle", kind="static",
            pose=_route_frame(route, trigger + 20.0, jitter),
            half_extents=(1.5, d_param), active=True,
        ))
    elif kind in ("merge_from_left", "merge_from_right"):
        side = 1.0 if kind == "merge_from_left" else -1.0
        s_join = trigger + 35.0
        approach = 25.0
        lam = np.linspace(0.0, 1.0, 26)
        s_vals = s_join - approach * (1.0 - lam)
        pts = []
        for s_i, l_i in zip(s_vals, lam):
            offset = side * d_param * 0.5 * (1.0 + math.cos(math.pi * l_i))
            pose = _route_frame(route, float(s_i), offset)
            pts.append((pose.x, pose.y))
        tail = _extended_route(route)
        tail_s = np.arange(math.ceil(s_join) + 2.0, tail.length, 5.0)
        for s_i in tail_s:
            p = tail.point_at(float(s_i))
            pts.append((p[0], p[1]))
        path = Polyline(np.asarray(pts))
        actors.append(Actor(
            actor_id="merger", kind="vehicle", pose=_route_frame(route, s_join - approach, side * d_param),
            speed=0.0, activation_s=trigger, path=path, path_s=0.0,
            desired_speed=6.0, idm=IdmParams(v0=6.0),
            ignore_ego_before_s=approach - 3.0,
        ))
    elif kind == "oncoming_vehicle":
        s_spawn = trigger + 120.0
        s_vals = np.arange(max(s_spawn, 0.0), -30.0, -4.0)
        path = _offset_path(route, s_vals, d_param)
        actors.append(Actor(
            actor_id="oncoming", kind="vehicle",
            pose=Pose2D(*path.point_at(0.0), path.heading_at(0.0)),
            speed=0.0, activation_s=trigger, path=path, path_s=0.0,
            desired_speed=7.0, idm=IdmParams(v0=7.0),
        ))
    elif kind == "opening_door":
        actors.append(Actor(
            actor_id="parked_door", kind="static",
            pose=_route_frame(route, trigger + 20.0, -d_param),
            half_extents=(2.45, 1.35), active=True,
        ))
    else:  # pragma: no cover - guarded by ScenarioSpec
        raise InvalidSpecError(f"unhandled scenario kind {kind!r}")

    ego = VehicleState(pose=_route_frame(route, 0.0), speed=0.0)
    return WorldState(ego=ego, actors=actors, features=features)
