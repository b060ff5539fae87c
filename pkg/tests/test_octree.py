import math

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from voxbench.grid import GridSpec
from voxbench.octree_map import OctreeMap, log_odds, morton_decode, morton_encode

SPEC = GridSpec(resolution=0.1)


def make_map(**kwargs):
    return OctreeMap(SPEC, extent=(1.6, 1.6, 1.6), **kwargs)


def test_log_odds_values():
    assert log_odds(0.5) == 0.0
    assert log_odds(0.7) == pytest.approx(0.8473, abs=1e-4)
    assert log_odds(0.4) == pytest.approx(-0.4055, abs=1e-4)
    assert log_odds(1.0) == math.inf


def test_log_odds_rejects_nonpositive():
    with pytest.raises(ValueError):
        log_odds(0.0)
    with pytest.raises(ValueError):
        log_odds(-0.2)
    with pytest.raises(ValueError):
        log_odds(1.2)


def test_morton_roundtrip():
    rng = np.random.default_rng(0)
    ijk = rng.integers(0, 2**20, size=(2000, 3))
    assert np.array_equal(morton_decode(morton_encode(ijk)), ijk)


def test_morton_order_matches_octant_bits():
    assert int(morton_encode(np.array([[0, 0, 1]]))[0]) == 1
    assert int(morton_encode(np.array([[0, 1, 0]]))[0]) == 2
    assert int(morton_encode(np.array([[1, 0, 0]]))[0]) == 4


def test_empty_cloud_is_noop():
    m = make_map()
    m.integrate_cloud((0.05, 0.05, 0.05), np.empty((0, 3)))
    assert m.occupied_voxels() == set()


def test_single_point_hit_and_traversed_misses():
    m = make_map()
    m.integrate_cloud((0.05, 0.05, 0.05), [(0.75, 0.05, 0.05)])
    assert m.log_odds_at((7, 0, 0)) == m.clamp_max
    for ix in range(7):
        assert m.log_odds_at((ix, 0, 0)) == pytest.approx(math.log(0.4 / 0.6))
    assert m.occupied_voxels() == {(7, 0, 0)}


def test_hit_then_miss_net_log_odds():
    # One hit at p=0.7 followed by one miss at p=0.4 stays occupied.
    m = make_map(hit_prob=0.7, miss_prob=0.4)
    m.integrate_cloud((0.05, 0.05, 0.05), [(0.35, 0.05, 0.05)])
    m.integrate_cloud((0.05, 0.05, 0.05), [(0.75, 0.05, 0.05)])
    net = m.log_odds_at((3, 0, 0))
    assert net == pytest.approx(math.log(0.7 / 0.3) + math.log(0.4 / 0.6))
    assert net == pytest.approx(0.4418, abs=1e-4)
    assert (3, 0, 0) in m.occupied_voxels()


def test_per_call_dedup_hit_wins_over_miss():
    # Second point's ray passes through the first point's voxel.
    m = make_map(hit_prob=0.7)
    m.integrate_cloud(
        (0.05, 0.05, 0.05),
        [(0.35, 0.05, 0.05), (0.75, 0.05, 0.05)],
    )
    assert m.log_odds_at((3, 0, 0)) == pytest.approx(math.log(0.7 / 0.3))


def test_per_call_dedup_single_miss_for_overlapping_rays():
    m = make_map(hit_prob=0.7)
    m.integrate_cloud(
        (0.05, 0.05, 0.05),
        [(0.75, 0.05, 0.05), (0.75, 0.08, 0.05)],
    )
    # Both rays traverse (1,0,0); the miss applies once.
    assert m.log_odds_at((1, 0, 0)) == pytest.approx(math.log(0.4 / 0.6))


def test_hit_probability_half_never_occupies():
    m = make_map(hit_prob=0.5)
    rng = np.random.default_rng(1)
    for _ in range(20):
        pts = rng.uniform(0.1, 1.5, size=(30, 3))
        m.integrate_cloud((0.05, 0.05, 0.05), pts)
    assert m.occupied_voxels() == set()


def test_occupied_on_fresh_map_is_empty():
    assert make_map().occupied_voxels() == set()


def test_occupied_matches_walk_oracle_random_maps():
    rng = np.random.default_rng(2)
    for trial in range(10):
        m = make_map(hit_prob=0.9)
        for _ in range(5):
            pts = rng.uniform(0.05, 1.55, size=(40, 3))
            m.integrate_cloud((0.85, 0.85, 0.85), pts)
        assert {int(c) for c in m.occupied_by_walk()} == m._occupied


def test_sensor_origin_out_of_bounds_rejected():
    m = make_map()
    with pytest.raises(ValueError):
        m.integrate_cloud((-1.0, 0.05, 0.05), [(0.5, 0.05, 0.05)])


def test_points_outside_bounds_skipped():
    m = make_map()
    m.integrate_cloud((0.05, 0.05, 0.05), [(25.0, 0.05, 0.05), (0.05, 0.05, -3.0)])
    assert m.occupied_voxels() == set()


def test_clamping_bounds_hold():
    m = make_map(hit_prob=0.9, miss_prob=0.2)
    target = [(0.35, 0.05, 0.05)]
    for _ in range(30):
        m.integrate_cloud((0.05, 0.05, 0.05), target)
    assert m.log_odds_at((3, 0, 0)) == m.clamp_max
    far = [(0.75, 0.05, 0.05)]
    for _ in range(30):
        m.integrate_cloud((0.05, 0.05, 0.05), far)
    assert m.log_odds_at((3, 0, 0)) == m.clamp_min


def test_update_commutativity_within_clamp():
    a = make_map(hit_prob=0.7, miss_prob=0.4)
    b = make_map(hit_prob=0.7, miss_prob=0.4)
    a.update_voxel((1, 1, 1), log_odds(0.7))
    a.update_voxel((1, 1, 1), log_odds(0.4))
    b.update_voxel((1, 1, 1), log_odds(0.4))
    b.update_voxel((1, 1, 1), log_odds(0.7))
    assert a.log_odds_at((1, 1, 1)) == pytest.approx(b.log_odds_at((1, 1, 1)))


def test_prune_merges_equal_siblings():
    m = make_map()
    for i in range(2):
        for j in range(2):
            for k in range(2):
                m.update_voxel((i, j, k), math.inf)
    m.prune()
    # The first octant of the lowest-level parent collapsed to a float.
    node = m._root
    for _ in range(m.depth - 1):
        assert isinstance(node, list)
        node = node[0]
    assert node == m.clamp_max


def test_prune_keeps_mixed_siblings():
    m = make_map()
    m.update_voxel((0, 0, 0), math.inf)
    m.update_voxel((1, 1, 1), -0.5)
    m.prune()
    assert m.log_odds_at((0, 0, 0)) == m.clamp_max
    assert m.log_odds_at((1, 1, 1)) == pytest.approx(-0.5)


def test_prune_preserves_occupied_set():
    rng = np.random.default_rng(3)
    for trial in range(20):
        m = make_map(hit_prob=0.85, miss_prob=0.35)
        for _ in range(4):
            pts = rng.uniform(0.05, 1.55, size=(25, 3))
            m.integrate_cloud((0.85, 0.85, 0.05), pts)
        before = m.occupied_voxels()
        m.prune()
        assert m.occupied_voxels() == before
        assert {int(c) for c in m.occupied_by_walk()} == m._occupied


def test_updates_after_prune_expand_collapsed_nodes():
    m = make_map()
    for i in range(2):
        for j in range(2):
            for k in range(2):
                m.update_voxel((i, j, k), math.inf)
    m.prune()
    m.update_voxel((0, 0, 0), m.clamp_min - m.clamp_max - 1.0)
    assert m.log_odds_at((0, 0, 0)) == m.clamp_min
    assert m.log_odds_at((1, 0, 0)) == m.clamp_max
    assert m.occupied_voxels() == {
        (i, j, k) for i in range(2) for j in range(2) for k in range(2)
    } - {(0, 0, 0)}


@settings(deadline=None, max_examples=25)
@given(st.integers(0, 2**32 - 1))
def test_random_sequences_stay_clamped(seed):
    rng = np.random.default_rng(seed)
    m = make_map(
        hit_prob=float(rng.uniform(0.55, 1.0)),
        miss_prob=float(rng.uniform(0.05, 0.45)),
    )
    for _ in range(3):
        pts = rng.uniform(0.05, 1.55, size=(rng.integers(1, 25), 3))
        origin = rng.uniform(0.1, 1.5, size=3)
        m.integrate_cloud(origin, pts)
    for _, value in m.walk_leaves():
        assert m.clamp_min <= value <= m.clamp_max


def test_reset_clears_everything():
    m = make_map()
    m.integrate_cloud((0.05, 0.05, 0.05), [(0.75, 0.05, 0.05)])
    m.reset()
    assert m.occupied_voxels() == set()
    assert m.log_odds_at((7, 0, 0)) is None


def test_occupied_packed_matches_sets():
    m = make_map()
    m.integrate_cloud((0.05, 0.05, 0.05), [(0.75, 0.05, 0.05), (0.05, 0.75, 0.05)])
    from voxbench.grid import keys_to_set

    assert keys_to_set(m.occupied_packed()) == m.occupied_voxels()
