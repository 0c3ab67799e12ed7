"""Fixed-step closed-loop episode executor and the episode log."""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass

from . import kernels
from .pem import ObjectMap, PemConfig, PemState, apply_pem
from .policy import DrivingPolicy, PolicyConfig, RouteInfo
from .world import (
    ACCEL_MAX,
    ACCEL_MIN,
    EgoState,
    GroundTruthObject,
    LeadVehicleScript,
    PedestrianScript,
    Pose,
    ScenarioDefinition,
    WorldFrame,
    footprint,
    wrap_angle,
)

DT = 0.1


class Outcome(str, enum.Enum):
    GOAL_REACHED = "goal_reached"
    COLLISION = "collision"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class SimClock:
    frame_index: int
    dt: float = DT

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.frame_index < 0:
            raise ValueError("frame index must be non-negative")

    @property
    def time(self) -> float:
        return self.frame_index * self.dt

    def tick(self) -> "SimClock":
        return SimClock(self.frame_index + 1, self.dt)


def integrate_ego(state: EgoState, accel_command: float, dt: float) -> EgoState:
    """Point-mass step along the route.

    Uses the trapezoid displacement while the speed stays non-negative; if the
    ego comes to rest inside the step, the displacement is the exact stopping
    distance ``v**2 / (2|a|)``.
    """
    a = min(max(accel_command, ACCEL_MIN), ACCEL_MAX)
    v = state.speed
    v_new = v + a * dt
    if v_new >= 0.0:
        ds = 0.5 * (v + v_new) * dt
    else:
        ds = v * v / (-2.0 * a)
        v_new = 0.0
    return EgoState.on_route(state.route, state.s + ds, v_new, a,
                             (state.pose.length, state.pose.width, state.pose.height))


def check_collision(ego_fp, actor_fps) -> tuple[bool, int | None]:
    """``actor_fps`` is a sequence of ``(actor_id, polygon)`` pairs."""
    for aid, fp in actor_fps:
        if kernels.sat_overlap(ego_fp, fp):
            return True, aid
    return False, None


@dataclass(frozen=True)
class FrameRecord:
    index: int
    time: float
    world: WorldFrame
    object_map: ObjectMap
    command: float
    ego_after: EgoState
    actors_after: tuple[GroundTruthObject, ...]
    pem_status: tuple[tuple[int, str | None, bool, int | None], ...]
    velocity_known: tuple[tuple[int, bool], ...]
    collision_with: int | None = None


@dataclass(frozen=True)
class EpisodeLog:
    scenario_id: str
    scenario_params: tuple[tuple[str, float], ...]
    pem: dict
    seed: int
    dt: float
    frames: tuple[FrameRecord, ...]
    outcome: Outcome

    @property
    def duration(self) -> float:
        return len(self.frames) * self.dt

    def header_line(self) -> str:
        return json.dumps({"scenario_id": self.scenario_id, "params": dict(self.scenario_params),
                           "pem": self.pem, "seed": self.seed, "dt": self.dt,
                           "frames": len(self.frames), "outcome": self.outcome.value},
                          sort_keys=True, separators=(",", ":"))

    def frame_lines(self) -> list[str]:
        return [json.dumps(_frame_dict(f), separators=(",", ":")) for f in self.frames]

    def to_jsonl(self) -> str:
        return "\n".join([self.header_line(), *self.frame_lines()]) + "\n"


def _pose_list(p: Pose) -> list[float]:
    return [p.x, p.y, p.heading, p.length, p.width, p.height]


def _ego_list(e: EgoState) -> list[float]:
    return [e.s, e.speed, e.acceleration, *_pose_list(e.pose)]


def _frame_dict(f: FrameRecord) -> dict:
    return {
        "k": f.index,
        "t": f.time,
        "ego": _ego_list(f.world.ego),
        "gt": [[o.id, o.cls.value, *_pose_list(o.pose), *o.velocity] for o in f.world.objects],
        "om": [[o.track_id, o.cls.value, *_pose_list(o.pose)] for o in f.object_map.objects],
        "cmd": f.command,
        "ego_after": _ego_list(f.ego_after),
        "gt_after": [[o.id, *_pose_list(o.pose)] for o in f.actors_after],
        "pem": [list(s) for s in f.pem_status],
        "vel_known": [list(v) for v in f.velocity_known],
        "collision": f.collision_with,
    }


# --------------------------------------------------------------------------
# Actor scripts
# --------------------------------------------------------------------------

class _Actors:
    """Evaluates actor scripts frame by frame (pedestrian triggers are the only
    state: the frame index at which the ego crossed the trigger distance)."""

    def __init__(self, scenario: ScenarioDefinition, dt: float):
        self.scenario = scenario
        self.route = scenario.route
        self.dt = dt
        self.trigger_frame: dict[int, int] = {}

    def objects(self, k: int, ego_front_s: float) -> tuple[GroundTruthObject, ...]:
        out = []
        route = self.route
        for script in self.scenario.actors:
            if isinstance(script, LeadVehicleScript):
                s, v = script.state(k * self.dt)
                x, y, h = route.to_world(s, script.lateral)
                pose = Pose.make(x, y, h, script.cls.dims)
                out.append(GroundTruthObject(script.id, pose, script.cls, (v * math.cos(h), v * math.sin(h))))
            elif isinstance(script, PedestrianScript):
                if script.id not in self.trigger_frame and script.triggered(ego_front_s):
                    self.trigger_frame[script.id] = k
                start = self.trigger_frame.get(script.id)
                lat, v_lat = script.lateral_at(None if start is None else k - start, self.dt)
                x, y, h = route.to_world(script.s, lat)
                facing = 1.0 if script.end_lateral >= script.start_lateral else -1.0
                pose = Pose.make(x, y, wrap_angle(h + facing * 0.5 * math.pi), script.cls.dims)
                out.append(GroundTruthObject(script.id, pose, script.cls,
                                             (-v_lat * math.sin(h), v_lat * math.cos(h))))
            else:  # pragma: no cover - closed set of script types
                raise TypeError(f"unknown actor script {type(script).__name__}")
        return tuple(out)


# --------------------------------------------------------------------------
# Episode loop
# --------------------------------------------------------------------------

def run_episode(scenario: ScenarioDefinition, pem: PemConfig, policy: PolicyConfig,
                seed: int, dt: float = DT) -> EpisodeLog:
    """One closed-loop realization.

    Per frame: build the world frame, apply the PEM, step the policy,
    integrate the ego, then check the integrated ego against the actors at
    the next time step.
    """
    if abs(policy.dt - dt) > 1e-12:
        raise ValueError(f"policy dt {policy.dt} does not match simulation dt {dt}")
    route = scenario.route
    actors = _Actors(scenario, dt)
    dp = DrivingPolicy(policy, RouteInfo(route, scenario.stop_line_s, scenario.ego_cruise_speed))
    pem_state = PemState(seed, dt)

    ego = EgoState.on_route(route, scenario.ego_start_s, scenario.ego_cruise_speed)
    objects = actors.objects(0, ego.front_s)
    n_max = int(round(scenario.max_duration_s / dt))
    hold_frames = None if scenario.goal.hold_s is None else int(round(scenario.goal.hold_s / dt))
    pass_s = scenario.goal.pass_s

    frames: list[FrameRecord] = []
    outcome = Outcome.TIMEOUT
    stopped = 0
    for k in range(n_max):
        t = k * dt
        world = WorldFrame(t, ego, objects)
        om = apply_pem(pem, pem_state, world)
        out = dp.step(om, ego)
        ego_next = integrate_ego(ego, out.command, dt)
        objects_next = actors.objects(k + 1, ego_next.front_s)
        hit, who = check_collision(footprint(ego_next.pose), [(o.id, footprint(o.pose)) for o in objects_next])
        status = tuple((oid, s.zone, s.detected, s.track_id)
                       for oid, s in sorted(pem_state.last_status.items()))
        frames.append(FrameRecord(k, t, world, om, ego_next.acceleration, ego_next, objects_next,
                                  status, out.velocity_known, who))
        ego, objects = ego_next, objects_next
        if hit:
            outcome = Outcome.COLLISION
            break
        stopped = stopped + 1 if ego.speed == 0.0 else 0
        if hold_frames is not None and stopped >= hold_frames:
            outcome = Outcome.GOAL_REACHED
            break
        if pass_s is not None and ego.front_s >= pass_s:
            outcome = Outcome.GOAL_REACHED
            break

    return EpisodeLog(scenario.scenario_id.value, scenario.params, pem.descriptor(), seed, dt,
                      tuple(frames), outcome)
