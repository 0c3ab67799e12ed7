"""Perception Error Model: zones (Z), per-zone error generators (T) keyed by
an environmental condition (C), and the per-frame transform from ground truth
to object map."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .world import (
    GroundTruthObject,
    ObjectClass,
    Pose,
    WorldFrame,
    from_polar,
    relative_polar,
    wrap_angle,
)

CLASSES = (ObjectClass.VEHICLE, ObjectClass.PEDESTRIAN)
MAX_SOJOURN_S = 10.0
FRESH_ID_BASE = 1_000_000


# --------------------------------------------------------------------------
# Zones
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Zone:
    """Polar cell in the ego frame. Intervals are closed at the minimum and
    open at the maximum, except that ``theta_max >= pi`` includes pi itself."""

    zone_id: str
    theta_min: float
    theta_max: float
    d_min: float = 0.0
    d_max: float = math.inf

    def __post_init__(self):
        if not (0.0 <= self.d_min < self.d_max):
            raise ValueError(f"zone {self.zone_id}: need 0 <= d_min < d_max")
        if not (-math.pi <= self.theta_min < self.theta_max <= math.pi):
            raise ValueError(f"zone {self.zone_id}: need -pi <= theta_min < theta_max <= pi")

    def contains(self, d: float, theta: float) -> bool:
        if not (self.d_min <= d < self.d_max):
            return False
        if theta < self.theta_min:
            return False
        return theta < self.theta_max or (self.theta_max >= math.pi and theta <= math.pi)

    def overlaps(self, other: "Zone") -> bool:
        return (self.d_min < other.d_max and other.d_min < self.d_max
                and self.theta_min < other.theta_max and other.theta_min < self.theta_max)


FULL_COVERAGE = Zone("all", -math.pi, math.pi, 0.0, math.inf)


def validate_zones(zones: Iterable[Zone]) -> tuple[Zone, ...]:
    zones = tuple(zones)
    ids = [z.zone_id for z in zones]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate zone ids")
    for i, a in enumerate(zones):
        for b in zones[i + 1:]:
            if a.overlaps(b):
                raise ValueError(f"zones {a.zone_id} and {b.zone_id} overlap")
    return zones


def zone_of(zones: Iterable[Zone], d: float, theta: float) -> str | None:
    """Id of the zone containing ``(d, theta)``, or ``None`` for a blind spot."""
    for z in zones:
        if z.contains(d, theta):
            return z.zone_id
    return None


# --------------------------------------------------------------------------
# Error generators
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FalseNegativeConfig:
    steady_state_p: float
    mean_sojourn_s: float

    def __post_init__(self):
        if not (0.0 <= self.steady_state_p <= 1.0):
            raise ValueError(f"steady_state_p={self.steady_state_p} outside [0, 1]")
        if not (0.0 < self.mean_sojourn_s <= MAX_SOJOURN_S):
            raise ValueError(f"mean_sojourn_s={self.mean_sojourn_s} outside (0.0s,10s]")


@dataclass(frozen=True)
class PositionNoiseConfig:
    sigma_d: float = 0.0
    sigma_theta: float = 0.0

    def __post_init__(self):
        if self.sigma_d < 0 or self.sigma_theta < 0:
            raise ValueError("noise standard deviations must be non-negative")


@dataclass(frozen=True)
class TrackingLossConfig:
    p_tl: float

    def __post_init__(self):
        if not (0.0 <= self.p_tl <= 1.0):
            raise ValueError(f"p_tl={self.p_tl} outside [0, 1]")


def _check_distribution(row: Mapping[ObjectClass, float], what: str) -> None:
    if any(v < 0 or v > 1 for v in row.values()):
        raise ValueError(f"{what}: probabilities must lie in [0, 1]")
    if abs(sum(row.values()) - 1.0) > 1e-9:
        raise ValueError(f"{what}: probabilities must sum to 1")


@dataclass(frozen=True)
class MisclassificationConfig:
    """Row-stochastic confusion matrix: ``matrix[true][perceived]``."""

    matrix: Mapping[ObjectClass, Mapping[ObjectClass, float]]

    def __post_init__(self):
        for cls in CLASSES:
            row = self.matrix.get(cls)
            if row is None:
                raise ValueError(f"confusion matrix lacks a row for {cls.value}")
            _check_distribution(row, f"confusion row {cls.value}")

    @classmethod
    def flip(cls, ped_to_vehicle: float = 0.0, vehicle_to_ped: float = 0.0) -> "MisclassificationConfig":
        V, P = ObjectClass.VEHICLE, ObjectClass.PEDESTRIAN
        return cls({V: {V: 1.0 - vehicle_to_ped, P: vehicle_to_ped},
                    P: {V: ped_to_vehicle, P: 1.0 - ped_to_vehicle}})


@dataclass(frozen=True)
class FalsePositiveConfig:
    rate_per_frame: float
    class_probs: Mapping[ObjectClass, float] = field(
        default_factory=lambda: {ObjectClass.VEHICLE: 0.5, ObjectClass.PEDESTRIAN: 0.5})

    def __post_init__(self):
        if self.rate_per_frame < 0:
            raise ValueError("false-positive rate must be non-negative")
        _check_distribution(self.class_probs, "false-positive class distribution")


@dataclass(frozen=True)
class ErrorGeneratorConfig:
    """Generators for one zone under one condition. ``None`` disables a kind."""

    false_negative: FalseNegativeConfig | None = None
    position_noise: PositionNoiseConfig | None = None
    tracking_loss: TrackingLossConfig | None = None
    misclassification: MisclassificationConfig | None = None
    false_positive: FalsePositiveConfig | None = None


PERFECT = ErrorGeneratorConfig()


@dataclass(frozen=True)
class PemConfig:
    zones: tuple[Zone, ...]
    table: Mapping[tuple[str, str], ErrorGeneratorConfig]
    condition: str = "daylight"
    name: str = "pem"

    def __post_init__(self):
        object.__setattr__(self, "zones", validate_zones(self.zones))
        for z in self.zones:
            if (z.zone_id, self.condition) not in self.table:
                raise ValueError(f"no generator for zone {z.zone_id!r} under condition {self.condition!r}")

    def generator(self, zone_id: str) -> ErrorGeneratorConfig:
        return self.table[(zone_id, self.condition)]

    @classmethod
    def uniform(cls, gen: ErrorGeneratorConfig = PERFECT, zones: Iterable[Zone] = (FULL_COVERAGE,),
                condition: str = "daylight", name: str = "pem") -> "PemConfig":
        zones = tuple(zones)
        return cls(zones, {(z.zone_id, condition): gen for z in zones}, condition, name)

    def descriptor(self) -> dict:
        """JSON-friendly description used in logs."""
        return {
            "name": self.name,
            "condition": self.condition,
            "zones": [[z.zone_id, z.theta_min, z.theta_max, z.d_min,
                       None if math.isinf(z.d_max) else z.d_max] for z in self.zones],
            "generators": {z.zone_id: _gen_descriptor(self.generator(z.zone_id)) for z in self.zones},
        }


def _gen_descriptor(gen: ErrorGeneratorConfig) -> dict:
    out = {}
    if gen.false_negative:
        out["false_negative"] = [gen.false_negative.steady_state_p, gen.false_negative.mean_sojourn_s]
    if gen.position_noise:
        out["position_noise"] = [gen.position_noise.sigma_d, gen.position_noise.sigma_theta]
    if gen.tracking_loss:
        out["tracking_loss"] = gen.tracking_loss.p_tl
    if gen.misclassification:
        out["misclassification"] = {t.value: {o.value: p for o, p in row.items()}
                                    for t, row in gen.misclassification.matrix.items()}
    if gen.false_positive:
        out["false_positive"] = gen.false_positive.rate_per_frame
    return out


# --------------------------------------------------------------------------
# Generator primitives
# --------------------------------------------------------------------------

def markov_params(steady_state_p: float, mean_sojourn_s: float, dt: float) -> tuple[float, float]:
    """Transition probabilities ``(a, b)`` = (P(det->undet), P(undet->det)).

    ``mean_sojourn_s`` is the mean time spent undetected; the detected-state
    sojourn follows from the steady-state constraint. Both probabilities are
    clamped to [0, 1], which breaks stationarity when the requested detected
    sojourn is shorter than one frame.
    """
    if steady_state_p >= 1.0:
        return 0.0, min(1.0, dt / mean_sojourn_s)
    if steady_state_p <= 0.0:
        return 1.0, 0.0
    b = min(1.0, dt / mean_sojourn_s)
    a = min(1.0, b * (1.0 - steady_state_p) / steady_state_p)
    return a, b


def markov_step(detected: bool, a: float, b: float, rng: np.random.Generator) -> bool:
    u = rng.random()
    if detected:
        return not (u < a)
    return u < b


def polar_noise(d: float, theta: float, sigma_d: float, sigma_theta: float,
                rng: np.random.Generator) -> tuple[float, float]:
    """Multiplicative range noise and additive azimuth noise (two normal draws)."""
    eps_d, eps_t = rng.standard_normal(2).tolist()
    d_new = d * (1.0 + sigma_d * eps_d)
    if d_new < 0.0:
        d_new = 0.0
    return d_new, wrap_angle(theta + sigma_theta * eps_t)


class IdAllocator:
    """Hands out track ids that were never used before in the episode."""

    def __init__(self, start: int = FRESH_ID_BASE):
        self._next = start

    def __call__(self) -> int:
        i = self._next
        self._next += 1
        return i


def tracking_loss_id(current_id: int, p_tl: float, rng: np.random.Generator,
                     allocate: IdAllocator) -> int:
    if rng.random() < p_tl:
        return allocate()
    return current_id


def _sample_class(row: Mapping[ObjectClass, float], u: float) -> ObjectClass:
    acc = 0.0
    for cls in CLASSES:
        acc += row.get(cls, 0.0)
        if u < acc:
            return cls
    # rounding residue: fall back to the last class with mass
    return next(c for c in reversed(CLASSES) if row.get(c, 0.0) > 0.0)


def misclassify(cls: ObjectClass, confusion: MisclassificationConfig, rng: np.random.Generator) -> ObjectClass:
    return _sample_class(confusion.matrix[cls], rng.random())


@dataclass(frozen=True)
class PerceivedObject:
    track_id: int
    pose: Pose
    cls: ObjectClass


@dataclass(frozen=True)
class ObjectMap:
    time: float
    objects: tuple[PerceivedObject, ...]

    def __post_init__(self):
        ids = [o.track_id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError("track ids must be unique within an object map")


def spawn_false_positives(zone: Zone, cfg: FalsePositiveConfig, rng: np.random.Generator,
                          allocate: IdAllocator, ego=None, d_cap: float = 100.0) -> list[PerceivedObject]:
    """Poisson number of ghosts placed uniformly over the zone's (theta, d) cell.

    Unbounded zones are capped at ``d_cap`` metres. Without an ego state the
    ghost pose is returned in ego-frame coordinates.
    """
    n = int(rng.poisson(cfg.rate_per_frame))
    d_hi = min(zone.d_max, max(d_cap, zone.d_min + 1.0))
    ghosts = []
    for _ in range(n):
        u_t, u_d, u_c = rng.random(3).tolist()
        theta = zone.theta_min + u_t * (zone.theta_max - zone.theta_min)
        d = zone.d_min + u_d * (d_hi - zone.d_min)
        if d >= zone.d_max:
            d = zone.d_min
        cls = _sample_class(cfg.class_probs, u_c)
        if ego is None:
            x, y, heading = d * math.cos(theta), d * math.sin(theta), 0.0
        else:
            x, y = from_polar(ego, d, theta)
            heading = ego.pose.heading
        ghosts.append(PerceivedObject(allocate(), Pose.make(x, y, heading, cls.dims), cls))
    return ghosts


# --------------------------------------------------------------------------
# Per-episode state and the frame transform
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TruthStatus:
    """What the PEM did with one ground-truth object in one frame."""

    zone: str | None
    detected: bool
    track_id: int | None


STREAMS = ("false_negative", "position_noise", "misclassification", "tracking_loss", "false_positive")


class PemState:
    """Episode-local PEM state: Markov chain states, published track ids and
    one random stream per generator kind (so enabling one kind never shifts
    the draws of another)."""

    def __init__(self, seed: int, dt: float = 0.1):
        self.dt = dt
        children = np.random.SeedSequence(seed).spawn(len(STREAMS))
        self.rng = {name: np.random.Generator(np.random.PCG64(ss)) for name, ss in zip(STREAMS, children)}
        self.detected: dict[int, bool] = {}
        self.track_ids: dict[int, int] = {}
        self.allocate = IdAllocator()
        self.last_status: dict[int, TruthStatus] = {}


def apply_pem(config: PemConfig, state: PemState, frame: WorldFrame) -> ObjectMap:
    """Turn one world frame into an object map, advancing ``state`` in place.

    Objects are handled in ascending ground-truth id; zone false positives are
    appended last, in zone order.
    """
    ego = frame.ego
    out: list[PerceivedObject] = []
    status: dict[int, TruthStatus] = {}
    rng = state.rng
    for obj in sorted(frame.objects, key=lambda o: o.id):
        d, theta = relative_polar(ego, obj.pose)
        zid = zone_of(config.zones, d, theta)
        if zid is None:
            status[obj.id] = TruthStatus(None, False, None)
            continue
        gen = config.generator(zid)

        fn = gen.false_negative
        if fn is not None:
            a, b = markov_params(fn.steady_state_p, fn.mean_sojourn_s, state.dt)
            prev = state.detected.get(obj.id)
            if prev is None:
                now = bool(rng["false_negative"].random() < fn.steady_state_p)
            else:
                now = markov_step(prev, a, b, rng["false_negative"])
            state.detected[obj.id] = now
            if not now:
                status[obj.id] = TruthStatus(zid, False, None)
                continue

        pose = obj.pose
        pn = gen.position_noise
        if pn is not None:
            d_n, t_n = polar_noise(d, theta, pn.sigma_d, pn.sigma_theta, rng["position_noise"])
            x, y = from_polar(ego, d_n, t_n)
            pose = pose.moved_to(x, y)

        cls = obj.cls
        if gen.misclassification is not None:
            cls = misclassify(cls, gen.misclassification, rng["misclassification"])
            if cls is not obj.cls:
                pose = Pose(pose.x, pose.y, pose.heading, *cls.dims)

        tid = state.track_ids.get(obj.id, obj.id)
        if gen.tracking_loss is not None and obj.id in state.track_ids:
            tid = tracking_loss_id(tid, gen.tracking_loss.p_tl, rng["tracking_loss"], state.allocate)
        state.track_ids[obj.id] = tid

        out.append(PerceivedObject(tid, pose, cls))
        status[obj.id] = TruthStatus(zid, True, tid)

    for z in config.zones:
        fp = config.generator(z.zone_id).false_positive
        if fp is not None:
            out.extend(spawn_false_positives(z, fp, rng["false_positive"], state.allocate, ego))

    state.last_status = status
    return ObjectMap(frame.time, tuple(out))
