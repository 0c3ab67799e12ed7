from __future__ import annotations

import dataclasses
import math
import random
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pemsim.metrics import (
    TEMPORAL_CAP_S,
    EpisodeMetrics,
    aggregate,
    detection_stats,
    episode_metrics,
    iou,
    nearest_rank,
    spatial_clearance,
    temporal_clearance,
)
from pemsim.pem import ErrorGeneratorConfig, FalseNegativeConfig, PemConfig
from pemsim.policy import PolicyConfig
from pemsim.sim import Outcome, run_episode
from pemsim.world import EgoState, GoalCondition, GroundTruthObject, ObjectClass, Pose, Route, build_scenario, footprint


def square(cx, cy, side=1.0, h=0.0):
    return footprint(Pose(cx, cy, h, side, side, 1.0))


def boundary_samples(poly, n=400):
    pts = []
    for i in range(len(poly)):
        (x0, y0), (x1, y1) = poly[i], poly[(i + 1) % len(poly)]
        for t in np.linspace(0.0, 1.0, n, endpoint=False):
            pts.append((x0 + t * (x1 - x0), y0 + t * (y1 - y0)))
    return np.array(pts)


def seg_point_dist(p, a, b):
    a, b, p = np.asarray(a), np.asarray(b), np.asarray(p)
    ab = b - a
    t = np.clip(((p - a) @ ab) / (ab @ ab), 0.0, 1.0)
    return float(np.hypot(*(a + t * ab - p)))


def pair_min(p, q):
    """Exact vertex-to-edge minimisation in both directions."""
    best = math.inf
    for poly, other in ((p, q), (q, p)):
        for v in poly:
            for i in range(len(other)):
                best = min(best, seg_point_dist(v, other[i], other[(i + 1) % len(other)]))
    return best


class TestSpatialClearance:
    def test_touching(self):
        assert spatial_clearance(square(0, 0), square(1, 0)) == 0.0

    def test_gap(self):
        assert spatial_clearance(square(0, 0), square(3, 0)) == pytest.approx(2.0)

    def test_overlap(self):
        assert spatial_clearance(square(0, 0), square(0.3, 0.2)) == 0.0

    def test_random_poses_vs_oracles(self):
        rng = np.random.default_rng(4)
        for _ in range(300):
            a = footprint(Pose(*rng.uniform(-5, 5, 2), float(rng.uniform(-math.pi, math.pi)),
                               *rng.uniform(0.3, 5, 2), 1.0))
            b = footprint(Pose(*rng.uniform(-5, 5, 2), float(rng.uniform(-math.pi, math.pi)),
                               *rng.uniform(0.3, 5, 2), 1.0))
            d = spatial_clearance(a, b)
            exact = pair_min(a, b)
            if d == 0.0:
                continue  # overlapping; checked via the collision oracle elsewhere
            assert d == pytest.approx(exact, abs=1e-6)
            # dense boundary sampling upper-bounds the true distance
            sa, sb = boundary_samples(a, 200), boundary_samples(b, 200)
            dense = np.min(np.hypot(sa[:, None, 0] - sb[None, :, 0], sa[:, None, 1] - sb[None, :, 1]))
            assert d <= dense + 1e-9
            assert dense - d < 0.05


class TestTemporalClearance:
    def test_definition(self):
        assert temporal_clearance(20.0, 10.0) == 2.0

    def test_cap(self):
        assert temporal_clearance(20.0, 0.0) == TEMPORAL_CAP_S
        assert temporal_clearance(1000.0, 1.0) == TEMPORAL_CAP_S

    def test_negative_gap(self):
        with pytest.raises(ValueError):
            temporal_clearance(-1.0, 5.0)

    def test_closing_gap_log_minimum(self):
        """Ego at 10 m/s behind a 6 m/s lead, 40 m gap, 8 s: headway bottoms
        out at the final frame, (40 - 4 * 8) / 10 s."""
        route = Route.straight(500.0)
        frames = []
        n = 80
        for k in range(1, n + 1):
            t = k * 0.1
            ego = EgoState.on_route(route, 10.0 + 10.0 * t, 10.0)
            lead_x = ego.front_s + 40.0 - 4.0 * t + 2.25
            lead = GroundTruthObject(1, Pose(lead_x, 0.0), ObjectClass.VEHICLE, (6.0, 0.0))
            frames.append(SimpleNamespace(ego_after=ego, actors_after=(lead,),
                                          pem_status=((1, "all", True, 1),), velocity_known=((1, True),)))
        log = SimpleNamespace(frames=frames, dt=0.1, outcome=Outcome.TIMEOUT)
        m = episode_metrics(log)
        g_min = 40.0 - 4.0 * n * 0.1
        assert m.min_temporal_clearance == pytest.approx(g_min / 10.0)
        assert m.min_ttc == pytest.approx(g_min / 4.0)
        assert m.min_spatial_clearance == pytest.approx(g_min)


def status_log(pattern, actor=1, dt=0.1, zone="all"):
    frames = []
    for d in pattern:
        if d is None:
            frames.append(SimpleNamespace(pem_status=((actor, None, False, None),)))
        else:
            frames.append(SimpleNamespace(pem_status=((actor, zone, bool(d), actor if d else None),)))
    return SimpleNamespace(frames=frames, dt=dt)


class TestDetectionStats:
    def test_perfect(self):
        assert detection_stats(status_log([1] * 50), 1) == (1.0, 0.0)

    def test_alternating(self):
        freq, gap = detection_stats(status_log([1, 0] * 25), 1)
        assert freq == 0.5 and gap == pytest.approx(0.1)

    def test_out_of_coverage_ignored(self):
        freq, gap = detection_stats(status_log([1, None, None, None, 0, 0, 1]), 1)
        assert freq == pytest.approx(0.5) and gap == pytest.approx(0.2)

    def test_never_in_coverage(self):
        assert detection_stats(status_log([None] * 5), 1) == (None, 0.0)

    def test_absent_actor(self):
        with pytest.raises(KeyError):
            detection_stats(status_log([1, 1]), 2)

    @given(st.lists(st.sampled_from([None, 0, 1]), max_size=200))
    def test_bounds(self, pattern):
        if not pattern:
            return
        freq, gap = detection_stats(status_log(pattern), 1)
        in_cov = [p for p in pattern if p is not None]
        if in_cov:
            assert 0.0 <= freq <= 1.0
            assert freq + in_cov.count(0) / len(in_cov) == pytest.approx(1.0)
        assert 0.0 <= gap <= len(pattern) * 0.1 + 1e-12

    @pytest.mark.slow
    def test_markov_long_run_frequency(self):
        base = build_scenario("TC4", {"lateral_offset": 5.0})
        sc = dataclasses.replace(base, stop_line_s=base.road_length - 10.0, max_duration_s=60.0,
                                 goal=GoalCondition(hold_s=None, pass_s=None))
        pem = PemConfig.uniform(ErrorGeneratorConfig(false_negative=FalseNegativeConfig(0.75, 1.0)))
        freqs = []
        for seed in range(30):
            log = run_episode(sc, pem, PolicyConfig(), 1000 + seed)
            assert log.outcome is Outcome.TIMEOUT and len(log.frames) == 600
            freqs.append(detection_stats(log, 1)[0])
        assert np.mean(freqs) == pytest.approx(0.75, abs=0.05)


def em(collided, spatial=1.0, freq=1.0):
    return EpisodeMetrics(0.0 if collided else spatial, 1.0, 2.0, collided, freq, 0.0, None,
                          "collision" if collided else "goal_reached")


class TestAggregate:
    def test_all_collide(self):
        assert aggregate([em(True)] * 30).success_rate == 0.0

    def test_none_collide(self):
        assert aggregate([em(False)] * 30).success_rate == 1.0

    def test_six_of_thirty(self):
        s = aggregate([em(i < 6) for i in range(30)])
        assert s.success_rate == pytest.approx(0.8) and s.collisions == 6 and s.run_count == 30

    def test_empty(self):
        with pytest.raises(ValueError):
            aggregate([])

    def test_nearest_rank(self):
        vals = [15, 20, 35, 40, 50]
        assert nearest_rank(vals, 0.05) == 15
        assert nearest_rank(vals, 0.3) == 20
        assert nearest_rank(vals, 0.4) == 20
        assert nearest_rank(vals, 0.5) == 35
        assert nearest_rank(vals, 1.0) == 50

    def test_quartiles(self):
        s = aggregate([em(False, spatial=float(v)) for v in range(1, 11)])
        d = s.distributions["min_spatial_clearance"]
        assert (d.min, d.q1, d.median, d.q3, d.max) == (1.0, 3.0, 5.0, 8.0, 10.0)
        assert s.distributions["velocity_unknown_fraction"] is None

    @given(st.lists(st.tuples(st.booleans(), st.floats(0, 50)), min_size=1, max_size=40), st.randoms())
    def test_permutation_invariant(self, runs, rnd):
        ms = {i: em(c, sp) for i, (c, sp) in enumerate(runs)}
        keys = list(ms)
        rnd.shuffle(keys)
        shuffled = {k: ms[k] for k in keys}
        assert aggregate(ms) == aggregate(shuffled)
        lst = list(ms.values())
        random.Random(0).shuffle(lst)
        assert aggregate(lst).success_rate == aggregate(list(ms.values())).success_rate
        assert aggregate(lst).distributions == aggregate(list(ms.values())).distributions


class TestIoU:
    def test_identical(self):
        assert iou(square(0, 0), square(0, 0)) == 1.0

    def test_disjoint(self):
        assert iou(square(0, 0), square(5, 0)) == 0.0

    def test_half_overlap(self):
        assert iou(square(0, 0), square(0.5, 0)) == pytest.approx(1.0 / 3.0, abs=1e-12)

    def test_degenerate(self):
        with pytest.raises(ValueError):
            iou(((0, 0), (1, 0), (2, 0)), square(0, 0))

    @settings(max_examples=200)
    @given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3.1, 3.1), st.floats(0.2, 4), st.floats(0.2, 4))
    def test_symmetry(self, x, y, h, length, width):
        a = footprint(Pose(0, 0, 0.3, 2.0, 1.0, 1.0))
        b = footprint(Pose(x, y, h, length, width, 1.0))
        ab, ba = iou(a, b), iou(b, a)
        assert abs(ab - ba) <= 1e-12
        assert 0.0 <= ab <= 1.0
        assert iou(b, b) == pytest.approx(1.0, abs=1e-12)


def test_collided_implies_zero_clearance():
    sc = build_scenario("TC1", {"lead_speed": 7.0})
    pem = PemConfig.uniform(ErrorGeneratorConfig(false_negative=FalseNegativeConfig(0.25, 5.0)))
    seen = 0
    for seed in range(12):
        m = episode_metrics(run_episode(sc, pem, PolicyConfig(), seed))
        if m.collided:
            seen += 1
            assert m.min_spatial_clearance == 0.0
        else:
            assert m.min_spatial_clearance > 0.0
    assert seen > 0


@settings(max_examples=50)
@given(st.floats(-6, 6), st.floats(-6, 6), st.floats(-3.1, 3.1), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_clearance_non_increasing_under_inflation(x, y, h, m1, m2):
    lo, hi = sorted((m1, m2))

    def inflated(margin):
        a = footprint(Pose(0, 0, 0, 4.5 + 2 * margin, 1.8 + 2 * margin, 1))
        b = footprint(Pose(x, y, h, 0.5 + 2 * margin, 0.5 + 2 * margin, 1))
        return spatial_clearance(a, b)

    assert inflated(hi) <= inflated(lo) + 1e-12
