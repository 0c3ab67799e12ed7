"""Driving policy DP: track management, velocity estimation, conflict
prediction and the longitudinal acceleration command.

The policy only ever sees object maps, its own ego state and route metadata
(route polyline, lane width, stop line). It has no handle on ground truth.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

from . import kernels
from .pem import ObjectMap
from .world import ACCEL_MAX, ACCEL_MIN, EgoState, ObjectClass, Route


@dataclass(frozen=True)
class PolicyConfig:
    """Tunables of the stand-in driving policy.

    ``cruise_speed=None`` takes the scenario's target cruise speed.
    """

    cruise_speed: float | None = None
    comfort_decel: float = 3.0
    emergency_decel: float = 8.0
    max_accel: float = ACCEL_MAX
    speed_gain: float = 0.5
    horizon_s: float = 4.0
    corridor_margin: float = 0.5
    headway_s: float = 2.0
    standoff: float = 5.0
    coast_limit: int = 5
    velocity_window: int = 5
    min_lookahead: float = 10.0
    gap_gain: float = 0.25
    lead_min_speed: float = 1.0
    dt: float = 0.1

    def __post_init__(self):
        positive = ("comfort_decel", "emergency_decel", "max_accel", "speed_gain", "horizon_s",
                    "headway_s", "standoff", "min_lookahead", "gap_gain", "lead_min_speed", "dt")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"policy {name} must be positive")
        if self.cruise_speed is not None and self.cruise_speed <= 0:
            raise ValueError("policy cruise_speed must be positive")
        if self.corridor_margin < 0:
            raise ValueError("policy corridor_margin must be non-negative")
        if self.emergency_decel < self.comfort_decel:
            raise ValueError("emergency_decel must be at least comfort_decel")
        if self.emergency_decel > -ACCEL_MIN or self.max_accel > ACCEL_MAX:
            raise ValueError("policy limits exceed the actuator envelope")
        if self.coast_limit < 0 or self.velocity_window < 2:
            raise ValueError("coast_limit must be >= 0 and velocity_window >= 2")


# --------------------------------------------------------------------------
# Tracks
# --------------------------------------------------------------------------

@dataclass
class Track:
    """Policy-side track. ``age`` counts observations, so a velocity exists
    exactly when ``age >= 2``."""

    track_id: int
    x: float
    y: float
    heading: float
    length: float
    width: float
    cls: ObjectClass
    history: deque = field(default_factory=deque)
    age: int = 1
    misses: int = 0
    velocity: tuple[float, float] | None = None

    @property
    def coasting(self) -> bool:
        return self.misses > 0


def estimate_velocity(history) -> tuple[float, float] | None:
    """Least-squares slope of position against time; ``None`` with < 2 samples."""
    n = len(history)
    if n < 2:
        return None
    ts = [h[0] for h in history]
    t_mean = sum(ts) / n
    x_mean = sum(h[1] for h in history) / n
    y_mean = sum(h[2] for h in history) / n
    stt = sxt = syt = 0.0
    for t, x, y in history:
        dt = t - t_mean
        stt += dt * dt
        sxt += dt * (x - x_mean)
        syt += dt * (y - y_mean)
    if stt <= 0.0:
        return None
    return sxt / stt, syt / stt


def update_tracks(tracks: dict[int, Track], om: ObjectMap, cfg: PolicyConfig) -> dict[int, Track]:
    """Associate by track id only, coast the unmatched, drop the stale.

    Mutates and returns ``tracks``.
    """
    t = om.time
    seen = set()
    for obj in om.objects:
        tid = obj.track_id
        seen.add(tid)
        p = obj.pose
        trk = tracks.get(tid)
        if trk is None:
            trk = Track(tid, p.x, p.y, p.heading, p.length, p.width, obj.cls,
                        deque(maxlen=cfg.velocity_window))
            tracks[tid] = trk
        else:
            trk.age += 1
            trk.misses = 0
            trk.x, trk.y, trk.heading = p.x, p.y, p.heading
            trk.length, trk.width, trk.cls = p.length, p.width, obj.cls
        trk.history.append((t, p.x, p.y))
        trk.velocity = estimate_velocity(trk.history)
    for tid in list(tracks):
        if tid in seen:
            continue
        trk = tracks[tid]
        trk.misses += 1
        if trk.misses > cfg.coast_limit:
            del tracks[tid]
        elif trk.velocity is not None:
            trk.x += trk.velocity[0] * cfg.dt
            trk.y += trk.velocity[1] * cfg.dt
    return tracks


# --------------------------------------------------------------------------
# Conflicts and planning
# --------------------------------------------------------------------------

STOP = "stop"
LEAD = "lead"


@dataclass(frozen=True)
class Conflict:
    """``stop``: come to rest ``stop_distance`` metres ahead of the front bumper.
    ``lead``: follow a moving object ``gap`` metres ahead at ``lead_speed``."""

    kind: str
    stop_distance: float
    source: int | str
    gap: float = math.inf
    lead_speed: float = 0.0


@dataclass(frozen=True)
class RouteInfo:
    """Route metadata the policy may read."""

    route: Route
    stop_line_s: float | None = None
    cruise_speed: float = 13.9


def corridor_half_width(route: Route, cfg: PolicyConfig) -> float:
    return 0.5 * route.lane_width + cfg.corridor_margin


def lookahead(ego: EgoState, cfg: PolicyConfig) -> float:
    return max(ego.speed * cfg.horizon_s, cfg.min_lookahead) + cfg.standoff


def predict_conflict(ego: EgoState, track: Track, cfg: PolicyConfig) -> Conflict | None:
    """Constant-velocity sweep of a track against the ego corridor.

    Unknown velocity is treated as stationary. Coasting tracks are checked at
    their current (extrapolated) position only: their motion estimate is
    stale, so it is not projected further.
    """
    route = ego.route
    route_heading = ego.pose.heading
    rel = track.heading - route_heading
    half_along = 0.5 * (track.length * abs(math.cos(rel)) + track.width * abs(math.sin(rel)))
    half_across = 0.5 * (track.length * abs(math.sin(rel)) + track.width * abs(math.cos(rel)))
    front = ego.front_s
    s_lo = ego.s
    s_hi = front + lookahead(ego, cfg) + half_along
    hw = corridor_half_width(route, cfg) + half_across
    vx, vy = track.velocity if track.velocity is not None else (0.0, 0.0)
    steps = 0 if track.coasting else int(round(cfg.horizon_s / cfg.dt))
    first, s_min = kernels.corridor_scan(route.points, route.cum_s, track.x, track.y, vx, vy,
                                         steps, cfg.dt, hw, s_lo, s_hi)
    if first < 0:
        return None
    incursion = s_min - half_along
    if first == 0 and track.velocity is not None:
        c = math.cos(route_heading)
        s = math.sin(route_heading)
        v_along = vx * c + vy * s
        if v_along >= cfg.lead_min_speed:
            gap = incursion - front
            return Conflict(LEAD, gap - cfg.standoff, track.track_id, gap, v_along)
    return Conflict(STOP, incursion - front - cfg.standoff, track.track_id)


def stop_line_conflict(ego: EgoState, info: RouteInfo, cfg: PolicyConfig) -> Conflict | None:
    if info.stop_line_s is None:
        return None
    front = ego.front_s
    ahead = info.stop_line_s - front
    if ahead < 0.0 or ahead > lookahead(ego, cfg):
        return None
    return Conflict(STOP, ahead - cfg.standoff, "stop_line")


def braking_command(speed: float, stop_distance: float, cfg: PolicyConfig) -> float:
    """Comfort-floored braking needed to stop within ``stop_distance``."""
    a_req = speed * speed / (2.0 * max(stop_distance, 0.1))
    return -min(max(a_req, cfg.comfort_decel), cfg.emergency_decel)


def following_command(speed: float, c: Conflict, cfg: PolicyConfig) -> float:
    """Gap/speed tracking behind a moving lead.

    Falls back to :func:`braking_command` towards the lead's predicted stop
    point (less any headway shortfall) whenever that needs more than comfort
    braking.
    """
    shortfall = max(0.0, cfg.headway_s * speed - c.gap)
    s_eff = c.gap + c.lead_speed ** 2 / (2.0 * cfg.comfort_decel) - cfg.standoff - shortfall
    a_req = speed * speed / (2.0 * max(s_eff, 0.1))
    if a_req > cfg.comfort_decel:
        return -min(a_req, cfg.emergency_decel)
    a = cfg.speed_gain * (c.lead_speed - speed) + cfg.gap_gain * (c.gap - cfg.standoff - cfg.headway_s * speed)
    return min(max(a, -cfg.comfort_decel), cfg.max_accel)


def plan_acceleration(ego: EgoState, conflicts, cfg: PolicyConfig, cruise: float) -> float:
    v = ego.speed
    a = min(max(cfg.speed_gain * (cruise - v), -cfg.comfort_decel), cfg.max_accel)
    for c in conflicts:
        if c.kind == LEAD:
            a = min(a, following_command(v, c, cfg))
        else:
            a = min(a, braking_command(v, c.stop_distance, cfg))
    return a


@dataclass(frozen=True)
class PolicyOutput:
    command: float
    conflicts: tuple[Conflict, ...]
    velocity_known: tuple[tuple[int, bool], ...]


class DrivingPolicy:
    """Stateful per-episode policy instance."""

    def __init__(self, cfg: PolicyConfig, info: RouteInfo):
        self.cfg = cfg
        self.info = info
        self.cruise = cfg.cruise_speed if cfg.cruise_speed is not None else info.cruise_speed
        self.tracks: dict[int, Track] = {}

    def step(self, om: ObjectMap, ego: EgoState) -> PolicyOutput:
        cfg = self.cfg
        update_tracks(self.tracks, om, cfg)
        conflicts = []
        for tid in sorted(self.tracks):
            c = predict_conflict(ego, self.tracks[tid], cfg)
            if c is not None:
                conflicts.append(c)
        c = stop_line_conflict(ego, self.info, cfg)
        if c is not None:
            conflicts.append(c)
        cmd = plan_acceleration(ego, conflicts, cfg, self.cruise)
        known = tuple((o.track_id, self.tracks[o.track_id].velocity is not None) for o in om.objects)
        return PolicyOutput(cmd, tuple(conflicts), known)
