"""Ground-truth world: object representation, ego state, route geometry and
the parameterized scenario catalog (TC1-TC5)."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping

from . import kernels

MAX_OBJECT_SPEED = 70.0
ACCEL_MIN = -8.0
ACCEL_MAX = 4.0

VEHICLE_DIMS = (4.5, 1.8, 1.5)
PEDESTRIAN_DIMS = (0.5, 0.5, 1.8)


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    if -math.pi < a <= math.pi:
        return a
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


class ObjectClass(str, enum.Enum):
    VEHICLE = "Vehicle"
    PEDESTRIAN = "Pedestrian"

    @property
    def dims(self) -> tuple[float, float, float]:
        return VEHICLE_DIMS if self is ObjectClass.VEHICLE else PEDESTRIAN_DIMS


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float = 0.0
    length: float = 4.5
    width: float = 1.8
    height: float = 1.5

    def __post_init__(self):
        if not (self.length > 0 and self.width > 0 and self.height > 0):
            raise ValueError(f"pose dimensions must be positive: {self.length}x{self.width}x{self.height}")
        if not (-math.pi < self.heading <= math.pi):
            raise ValueError(f"heading {self.heading} outside (-pi, pi]")

    @classmethod
    def make(cls, x: float, y: float, heading: float, dims: tuple[float, float, float]) -> "Pose":
        return cls(x, y, wrap_angle(heading), *dims)

    def moved_to(self, x: float, y: float) -> "Pose":
        return Pose(x, y, self.heading, self.length, self.width, self.height)


@dataclass(frozen=True)
class GroundTruthObject:
    id: int
    pose: Pose
    cls: ObjectClass
    velocity: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if math.hypot(*self.velocity) > MAX_OBJECT_SPEED:
            raise ValueError(f"object {self.id}: speed above {MAX_OBJECT_SPEED} m/s")


@dataclass(frozen=True)
class Route:
    """Reference polyline the ego follows, with the lane width around it."""

    points: tuple[tuple[float, float], ...]
    lane_width: float = 3.5
    cum_s: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.points) < 2:
            raise ValueError("route needs at least two points")
        cum = [0.0]
        for (x0, y0), (x1, y1) in zip(self.points, self.points[1:]):
            seg = math.hypot(x1 - x0, y1 - y0)
            if seg <= 0:
                raise ValueError("route has a zero-length segment")
            cum.append(cum[-1] + seg)
        object.__setattr__(self, "cum_s", tuple(cum))

    @classmethod
    def straight(cls, length: float, lane_width: float = 3.5) -> "Route":
        return cls(((0.0, 0.0), (float(length), 0.0)), lane_width)

    @property
    def length(self) -> float:
        return self.cum_s[-1]

    def point_at(self, s: float) -> tuple[float, float, float]:
        """Position and tangent heading at arc length ``s`` (extrapolates past the ends)."""
        cum = self.cum_s
        i = 0
        while i < len(cum) - 2 and s > cum[i + 1]:
            i += 1
        (x0, y0), (x1, y1) = self.points[i], self.points[i + 1]
        seg = cum[i + 1] - cum[i]
        t = (s - cum[i]) / seg
        return x0 + t * (x1 - x0), y0 + t * (y1 - y0), math.atan2(y1 - y0, x1 - x0)

    def to_world(self, s: float, lateral: float) -> tuple[float, float, float]:
        x, y, h = self.point_at(s)
        return x - lateral * math.sin(h), y + lateral * math.cos(h), h

    def project(self, x: float, y: float) -> tuple[float, float]:
        """(arc length, signed lateral offset; left positive)."""
        return kernels.project(self.points, self.cum_s, x, y)


@dataclass(frozen=True)
class EgoState:
    pose: Pose
    speed: float
    acceleration: float
    route: Route
    s: float = 0.0

    def __post_init__(self):
        if self.speed < 0:
            raise ValueError("ego speed must be non-negative")
        if not (ACCEL_MIN <= self.acceleration <= ACCEL_MAX):
            raise ValueError(f"ego acceleration {self.acceleration} outside actuator envelope")

    @classmethod
    def on_route(cls, route: Route, s: float, speed: float, acceleration: float = 0.0,
                 dims: tuple[float, float, float] = VEHICLE_DIMS) -> "EgoState":
        x, y, h = route.point_at(s)
        return cls(Pose.make(x, y, h, dims), speed, acceleration, route, s)

    @property
    def front_s(self) -> float:
        return self.s + 0.5 * self.pose.length


@dataclass(frozen=True)
class WorldFrame:
    time: float
    ego: EgoState
    objects: tuple[GroundTruthObject, ...]

    def __post_init__(self):
        if self.time < 0:
            raise ValueError("frame time must be non-negative")
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError("object ids must be unique within a frame")


def relative_polar(ego: EgoState, obj_pose: Pose) -> tuple[float, float]:
    """Range and azimuth of an object in the ego frame (CCW positive)."""
    dx = obj_pose.x - ego.pose.x
    dy = obj_pose.y - ego.pose.y
    d = math.hypot(dx, dy)
    if d == 0.0:
        return 0.0, 0.0
    return d, wrap_angle(math.atan2(dy, dx) - ego.pose.heading)


def from_polar(ego: EgoState, d: float, theta: float) -> tuple[float, float]:
    """Inverse of :func:`relative_polar`: world position of a polar offset."""
    a = ego.pose.heading + theta
    return ego.pose.x + d * math.cos(a), ego.pose.y + d * math.sin(a)


def footprint(pose: Pose) -> tuple[tuple[float, float], ...]:
    """Oriented rectangle corners, counterclockwise from the rear-right corner."""
    c = math.cos(pose.heading)
    s = math.sin(pose.heading)
    hl = 0.5 * pose.length
    hw = 0.5 * pose.width
    return tuple(
        (pose.x + lx * c - ly * s, pose.y + lx * s + ly * c)
        for lx, ly in ((-hl, -hw), (hl, -hw), (hl, hw), (-hl, hw))
    )


# --------------------------------------------------------------------------
# Scenario catalog
# --------------------------------------------------------------------------

class ScenarioId(str, enum.Enum):
    TC1 = "TC1"
    TC2 = "TC2"
    TC3 = "TC3"
    TC4 = "TC4"
    TC5 = "TC5"


LEAD_SPEEDS = (7.0, 10.0, 15.0)
_DEFAULT_LEAD_SPEED = {ScenarioId.TC1: 7.0, ScenarioId.TC2: 10.0, ScenarioId.TC3: 15.0}


@dataclass(frozen=True)
class LeadVehicleScript:
    """Constant cruise, then constant deceleration to rest with the front
    bumper on the stop line. Positions are closed-form in time."""

    id: int
    start_s: float
    speed: float
    decel: float
    stop_s: float
    lateral: float = 0.0
    cls: ObjectClass = ObjectClass.VEHICLE

    @property
    def brake_start_s(self) -> float:
        return self.stop_s - self.speed ** 2 / (2.0 * self.decel)

    def state(self, t: float) -> tuple[float, float]:
        """(arc length of the centre, speed) at time ``t``."""
        t1 = (self.brake_start_s - self.start_s) / self.speed
        if t <= t1:
            return self.start_s + self.speed * t, self.speed
        tau = t - t1
        t_stop = self.speed / self.decel
        if tau >= t_stop:
            return self.stop_s, 0.0
        return self.brake_start_s + self.speed * tau - 0.5 * self.decel * tau * tau, self.speed - self.decel * tau


@dataclass(frozen=True)
class PedestrianScript:
    """Pedestrian that stands at ``start_lateral`` and, once triggered, walks
    perpendicular to the route towards ``end_lateral`` where it stops.

    ``trigger_distance`` is measured from the ego front bumper to the
    pedestrian's arc position; ``None`` means the pedestrian never moves.
    """

    id: int
    s: float
    start_lateral: float
    end_lateral: float = 0.0
    walk_speed: float = 0.0
    trigger_distance: float | None = None
    cls: ObjectClass = ObjectClass.PEDESTRIAN

    def triggered(self, ego_front_s: float) -> bool:
        return self.trigger_distance is not None and self.s - ego_front_s <= self.trigger_distance

    def lateral_at(self, frames_since_trigger: int | None, dt: float) -> tuple[float, float]:
        """(lateral offset, signed lateral speed)."""
        if frames_since_trigger is None or self.walk_speed <= 0:
            return self.start_lateral, 0.0
        span = self.end_lateral - self.start_lateral
        direction = 1.0 if span >= 0 else -1.0
        walked = self.walk_speed * frames_since_trigger * dt
        if walked >= abs(span):
            return self.end_lateral, 0.0
        return self.start_lateral + direction * walked, direction * self.walk_speed


ActorScript = LeadVehicleScript | PedestrianScript


@dataclass(frozen=True)
class GoalCondition:
    """``stop``: ego at rest for ``hold_s``; ``pass``: ego front beyond ``pass_s``.
    Either satisfied condition ends the episode with goal_reached."""

    hold_s: float | None = 2.0
    pass_s: float | None = None


@dataclass(frozen=True)
class ScenarioDefinition:
    scenario_id: ScenarioId
    road_length: float
    lane_width: float
    stop_line_s: float | None
    actors: tuple[ActorScript, ...]
    ego_start_s: float
    ego_cruise_speed: float
    max_duration_s: float
    goal: GoalCondition
    params: tuple[tuple[str, float], ...] = ()

    @property
    def route(self) -> Route:
        return Route.straight(self.road_length, self.lane_width)


SCENARIO_DEFAULTS: dict[str, dict[str, float]] = {
    "following": {
        "lead_speed": 10.0,
        "lead_gap": 150.0,
        "lead_decel": 2.0,
        "stop_line": 0.0,  # 0: derived from the lead's travel time
        "lane_width": 3.5,
        "ego_speed": 13.9,
        "follow_time": 60.0,
    },
    "TC4": {
        "lateral_offset": 0.0,
        "ped_distance": 80.0,
        "lane_width": 3.5,
        "ego_speed": 13.9,
    },
    "TC5": {
        "walk_speed": 1.5,
        "trigger_distance": 20.0,
        "start_offset": 4.0,
        "end_offset": -3.5,
        "ped_distance": 80.0,
        "lane_width": 3.5,
        "ego_speed": 13.9,
    },
}

# Documented family ranges: (low, high) inclusive.
SCENARIO_RANGES: dict[str, dict[str, tuple[float, float]]] = {
    "following": {
        "lead_gap": (20.0, 500.0),
        "lead_decel": (0.5, 6.0),
        "stop_line": (0.0, 5000.0),
        "lane_width": (2.5, 5.0),
        "ego_speed": (5.0, 30.0),
        "follow_time": (0.0, 300.0),
    },
    "TC4": {
        "lateral_offset": (-6.0, 6.0),
        "ped_distance": (20.0, 250.0),
        "lane_width": (2.5, 5.0),
        "ego_speed": (5.0, 30.0),
    },
    "TC5": {
        "walk_speed": (0.5, 3.0),
        "trigger_distance": (5.0, 150.0),
        "start_offset": (2.0, 15.0),
        "end_offset": (-15.0, -2.0),
        "ped_distance": (30.0, 250.0),
        "lane_width": (2.5, 5.0),
        "ego_speed": (5.0, 30.0),
    },
}

EGO_START_S = 10.0
LEAD_ID = 1
PED_ID = 1


def _family(sid: ScenarioId) -> str:
    return "following" if sid in (ScenarioId.TC1, ScenarioId.TC2, ScenarioId.TC3) else sid.value


def scenario_defaults(scenario_id: ScenarioId | str) -> dict[str, float]:
    sid = ScenarioId(scenario_id)
    d = dict(SCENARIO_DEFAULTS[_family(sid)])
    if sid in _DEFAULT_LEAD_SPEED:
        d["lead_speed"] = _DEFAULT_LEAD_SPEED[sid]
    return d


def _resolve_params(sid: ScenarioId, params: Mapping[str, float] | None) -> dict[str, float]:
    fam = _family(sid)
    p = scenario_defaults(sid)
    for key, value in (params or {}).items():
        if key not in p:
            raise ValueError(f"{sid.value}: unknown scenario parameter {key!r}")
        p[key] = float(value)
    if fam == "following" and p["lead_speed"] not in LEAD_SPEEDS:
        raise ValueError(f"{sid.value}: lead_speed must be one of {LEAD_SPEEDS}, got {p['lead_speed']}")
    for key, (lo, hi) in SCENARIO_RANGES[fam].items():
        if not (lo <= p[key] <= hi):
            raise ValueError(f"{sid.value}: {key}={p[key]} outside [{lo}, {hi}]")
    return p


def build_scenario(scenario_id: ScenarioId | str, params: Mapping[str, float] | None = None) -> ScenarioDefinition:
    """Concrete, fully deterministic scenario for a catalog id and parameter set.

    Unknown ids raise ``ValueError`` (via the enum); parameters outside the
    family's documented range raise ``ValueError``.
    """
    sid = ScenarioId(scenario_id)
    p = _resolve_params(sid, params)
    ego_speed = p["ego_speed"]
    frozen = tuple(sorted(p.items()))

    if _family(sid) == "following":
        v = p["lead_speed"]
        lead_start = EGO_START_S + p["lead_gap"]
        stop_line = p["stop_line"]
        if stop_line <= 0.0:
            # ego closes the gap at the cruise-speed difference, then follows
            closing = max(ego_speed - v, 0.0)
            catch_up = (p["lead_gap"] / closing) if closing > 0 else 0.0
            stop_line = lead_start + v * (catch_up + p["follow_time"]) + v * v / (2 * p["lead_decel"])
        stop_line = round(stop_line, 1)
        lead = LeadVehicleScript(LEAD_ID, lead_start, v, p["lead_decel"],
                                 stop_line - 0.5 * VEHICLE_DIMS[0])
        road = stop_line + 50.0
        ego_travel = stop_line - EGO_START_S
        duration = math.ceil(ego_travel / min(v, ego_speed) + 60.0)
        return ScenarioDefinition(sid, road, p["lane_width"], stop_line, (lead,), EGO_START_S,
                                  ego_speed, float(duration), GoalCondition(hold_s=2.0), frozen)

    ped_s = EGO_START_S + 0.5 * VEHICLE_DIMS[0] + p["ped_distance"]
    road = ped_s + 60.0
    if sid is ScenarioId.TC4:
        ped = PedestrianScript(PED_ID, ped_s, p["lateral_offset"], p["lateral_offset"])
        duration = math.ceil(road / ego_speed + 30.0)
        return ScenarioDefinition(sid, road, p["lane_width"], None, (ped,), EGO_START_S, ego_speed,
                                  float(duration), GoalCondition(hold_s=2.0, pass_s=ped_s + 20.0), frozen)

    ped = PedestrianScript(PED_ID, ped_s, p["start_offset"], p["end_offset"], p["walk_speed"],
                           p["trigger_distance"])
    duration = math.ceil(road / ego_speed + 40.0)
    return ScenarioDefinition(sid, road, p["lane_width"], None, (ped,), EGO_START_S, ego_speed,
                              float(duration), GoalCondition(hold_s=None, pass_s=ped_s + 20.0), frozen)


def list_scenarios() -> list[tuple[str, str, dict[str, float]]]:
    blurbs = {
        ScenarioId.TC1: "follow a lead vehicle to a red light (lead 7 m/s)",
        ScenarioId.TC2: "follow a lead vehicle to a red light (lead 10 m/s)",
        ScenarioId.TC3: "follow a lead vehicle to a red light (lead 15 m/s)",
        ScenarioId.TC4: "pedestrian standing on the road",
        ScenarioId.TC5: "pedestrian jaywalking across the ego lane",
    }
    return [(sid.value, blurbs[sid], scenario_defaults(sid)) for sid in ScenarioId]
