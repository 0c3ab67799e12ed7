"""Per-episode safety metrics, perception-error statistics and aggregation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from . import kernels
from .sim import EpisodeLog, Outcome
from .world import footprint

TEMPORAL_CAP_S = 60.0
MIN_SPEED = 0.1


def spatial_clearance(ego_fp, actor_fp) -> float:
    return kernels.polygon_distance(ego_fp, actor_fp)


def temporal_clearance(gap: float, ego_speed: float) -> float:
    """Time headway ``gap / max(speed, 0.1)``, capped at 60 s."""
    if gap < 0:
        raise ValueError("gap must be non-negative")
    return min(gap / max(ego_speed, MIN_SPEED), TEMPORAL_CAP_S)


def time_to_collision(gap: float, closing_speed: float) -> float:
    if closing_speed <= 0.0:
        return TEMPORAL_CAP_S
    return min(gap / closing_speed, TEMPORAL_CAP_S)


def detection_stats(log: EpisodeLog, actor_id: int) -> tuple[float | None, float]:
    """(detection frequency, longest non-detection run in seconds) over the
    frames where the actor was inside zone coverage."""
    seen_actor = False
    in_cov = det = 0
    run = longest = 0
    for f in log.frames:
        for oid, zone, detected, _ in f.pem_status:
            if oid != actor_id:
                continue
            seen_actor = True
            if zone is None:
                continue
            in_cov += 1
            if detected:
                det += 1
                run = 0
            else:
                run += 1
                longest = max(longest, run)
    if not seen_actor:
        raise KeyError(f"actor {actor_id} not in log")
    if in_cov == 0:
        return None, 0.0
    return det / in_cov, longest * log.dt


def velocity_unknown_fraction(log: EpisodeLog, actor_id: int) -> float | None:
    """Share of the actor's detected frames in which the policy had no
    velocity estimate for the track the actor was published under."""
    n = unknown = 0
    for f in log.frames:
        tid = next((s[3] for s in f.pem_status if s[0] == actor_id and s[2]), None)
        if tid is None:
            continue
        known = dict(f.velocity_known).get(tid)
        if known is None:
            continue
        n += 1
        unknown += not known
    return unknown / n if n else None


# --------------------------------------------------------------------------
# Polygon area / IoU
# --------------------------------------------------------------------------

def polygon_area(poly) -> float:
    n = len(poly)
    acc = 0.0
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        acc += x0 * y1 - x1 * y0
    return 0.5 * acc


def _ccw(poly):
    return list(poly) if polygon_area(poly) >= 0 else list(reversed(poly))


def _clip(subject, clipper):
    """Sutherland-Hodgman clip of a polygon against a convex CCW clipper."""
    out = subject
    n = len(clipper)
    for i in range(n):
        if not out:
            break
        ax, ay = clipper[i]
        bx, by = clipper[(i + 1) % n]
        inp, out = out, []

        def side(p):
            return (bx - ax) * (p[1] - ay) - (by - ay) * (p[0] - ax)

        for j in range(len(inp)):
            p, q = inp[j], inp[(j + 1) % len(inp)]
            sp, sq = side(p), side(q)
            if sp >= 0:
                out.append(p)
            if (sp >= 0) != (sq >= 0):
                t = sp / (sp - sq)
                out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def iou(box_a, box_b) -> float:
    """Intersection over union of two convex polygons."""
    a = _ccw(box_a)
    b = _ccw(box_b)
    area_a = polygon_area(a)
    area_b = polygon_area(b)
    if area_a <= 0 or area_b <= 0:
        raise ValueError("degenerate polygon with zero area")
    inter = _clip(a, b)
    ai = abs(polygon_area(inter)) if len(inter) >= 3 else 0.0
    ai = min(ai, area_a, area_b)
    return ai / (area_a + area_b - ai)


# --------------------------------------------------------------------------
# Episode metrics
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ActorMetrics:
    min_spatial_clearance: float
    min_temporal_clearance: float
    min_ttc: float
    detection_frequency: float | None
    max_nondetection_interval: float
    velocity_unknown_fraction: float | None


@dataclass(frozen=True)
class EpisodeMetrics:
    min_spatial_clearance: float
    min_temporal_clearance: float
    min_ttc: float
    collided: bool
    detection_frequency: float | None
    max_nondetection_interval: float
    velocity_unknown_fraction: float | None
    outcome: str
    per_actor: Mapping[int, ActorMetrics] = field(default_factory=dict)


def _route_gap(ego, pose, route):
    """Along-route gap from the ego front to an actor occupying the ego lane
    ahead, or ``None`` when the actor is outside the lane or behind."""
    s, lat = route.project(pose.x, pose.y)
    rel = pose.heading - ego.pose.heading
    half_along = 0.5 * (pose.length * abs(math.cos(rel)) + pose.width * abs(math.sin(rel)))
    half_across = 0.5 * (pose.length * abs(math.sin(rel)) + pose.width * abs(math.cos(rel)))
    if abs(lat) - half_across > 0.5 * route.lane_width:
        return None
    if s + half_along < ego.s - 0.5 * ego.pose.length:
        return None
    return max(s - half_along - ego.front_s, 0.0)


def episode_metrics(log: EpisodeLog) -> EpisodeMetrics:
    """Safety and perception statistics of one episode, computed from the log.

    Clearances use the state the collision check saw: the integrated ego
    against the actors one step later.
    """
    spatial: dict[int, float] = {}
    temporal: dict[int, float] = {}
    ttc: dict[int, float] = {}
    for f in log.frames:
        ego = f.ego_after
        efp = footprint(ego.pose)
        route = ego.route
        c, s = math.cos(ego.pose.heading), math.sin(ego.pose.heading)
        for o in f.actors_after:
            d = spatial_clearance(efp, footprint(o.pose))
            if d < spatial.get(o.id, math.inf):
                spatial[o.id] = d
            gap = _route_gap(ego, o.pose, route)
            if gap is None:
                tc = tt = TEMPORAL_CAP_S
            else:
                tc = temporal_clearance(gap, ego.speed)
                tt = time_to_collision(gap, ego.speed - (o.velocity[0] * c + o.velocity[1] * s))
            temporal[o.id] = min(temporal.get(o.id, TEMPORAL_CAP_S), tc)
            ttc[o.id] = min(ttc.get(o.id, TEMPORAL_CAP_S), tt)

    per_actor = {}
    for aid in sorted(spatial):
        freq, gap_s = detection_stats(log, aid)
        per_actor[aid] = ActorMetrics(spatial[aid], temporal[aid], ttc[aid], freq, gap_s,
                                      velocity_unknown_fraction(log, aid))
    collided = log.outcome is Outcome.COLLISION
    if not per_actor:
        return EpisodeMetrics(math.inf, TEMPORAL_CAP_S, TEMPORAL_CAP_S, collided, None, 0.0, None,
                              log.outcome.value, {})
    primary = per_actor[min(per_actor)]
    return EpisodeMetrics(
        min(a.min_spatial_clearance for a in per_actor.values()),
        min(a.min_temporal_clearance for a in per_actor.values()),
        min(a.min_ttc for a in per_actor.values()),
        collided,
        primary.detection_frequency,
        primary.max_nondetection_interval,
        primary.velocity_unknown_fraction,
        log.outcome.value,
        per_actor,
    )


# --------------------------------------------------------------------------
# Aggregation
# --------------------------------------------------------------------------

def nearest_rank(sorted_values: Sequence[float], q: float) -> float:
    """Nearest-rank percentile (``q`` in [0, 1]) of an ascending sequence."""
    n = len(sorted_values)
    if n == 0:
        raise ValueError("empty sequence")
    rank = max(1, math.ceil(q * n))
    return sorted_values[rank - 1]


@dataclass(frozen=True)
class Distribution:
    min: float
    q1: float
    median: float
    q3: float
    max: float
    count: int

    @classmethod
    def of(cls, values: Iterable[float | None]) -> "Distribution | None":
        vals = sorted(v for v in values if v is not None and not math.isnan(v))
        if not vals:
            return None
        return cls(vals[0], nearest_rank(vals, 0.25), nearest_rank(vals, 0.5),
                   nearest_rank(vals, 0.75), vals[-1], len(vals))


SUMMARY_FIELDS = ("min_spatial_clearance", "min_temporal_clearance", "min_ttc",
                  "detection_frequency", "max_nondetection_interval", "velocity_unknown_fraction")


@dataclass(frozen=True)
class ExperimentSummary:
    cell_params: Mapping[str, object]
    run_count: int
    success_rate: float
    collisions: int
    anomalies: int
    distributions: Mapping[str, Distribution | None]


def aggregate(metrics: Sequence[EpisodeMetrics] | Mapping[int, EpisodeMetrics],
              cell_params: Mapping[str, object] | None = None, anomalies: int = 0) -> ExperimentSummary:
    """Summary over runs. A mapping is read as ``{run_index: metrics}`` and
    sorted by run index first, so the result never depends on input order."""
    if isinstance(metrics, Mapping):
        runs = [metrics[k] for k in sorted(metrics)]
    else:
        runs = list(metrics)
    if not runs:
        raise ValueError("cannot aggregate an empty collection of runs")
    n = len(runs)
    collisions = sum(1 for m in runs if m.collided)
    dists = {name: Distribution.of(getattr(m, name) for m in runs) for name in SUMMARY_FIELDS}
    return ExperimentSummary(dict(cell_params or {}), n, 1.0 - collisions / n, collisions, anomalies, dists)
