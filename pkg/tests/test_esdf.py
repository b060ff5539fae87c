import math

import numpy as np
import pytest

from voxbench.esdf import EsdfField, esdf_from_tsdf
from voxbench.grid import GridSpec
from voxbench.tsdf_map import TsdfMap

SPEC = GridSpec(resolution=0.1)


def make_field(n=5):
    return EsdfField(SPEC, (0, 0, 0), (n - 1, n - 1, n - 1))


def brute_force_distances(field: EsdfField) -> np.ndarray:
    """All-pairs nearest-obstacle search over the domain."""
    shape = field.shape
    obstacles = np.array(field.occupied_keys(), dtype=float)
    out = np.full(shape, math.inf)
    if len(obstacles) == 0:
        return out
    lo = np.array(field.lo, dtype=float)
    grid = np.stack(
        np.meshgrid(*[np.arange(s) for s in shape], indexing="ij"), axis=-1
    ).reshape(-1, 3) + lo
    diffs = grid[:, None, :] - obstacles[None, :, :]
    dists = np.sqrt((diffs**2).sum(axis=2)).min(axis=1) * field.spec.resolution
    return dists.reshape(shape)


def test_single_obstacle_neighbor_distances():
    f = make_field(5)
    f.update(added=[(2, 2, 2)])
    assert f.distance((2, 2, 2)) == 0.0
    assert f.distance((3, 2, 2)) == pytest.approx(0.1)
    assert f.distance((3, 3, 2)) == pytest.approx(0.1 * math.sqrt(2))
    assert f.distance((3, 3, 3)) == pytest.approx(0.1 * math.sqrt(3))
    assert f.query((3, 2, 2)).parent == (2, 2, 2)


def test_no_obstacles_all_infinite():
    f = make_field(4)
    assert np.all(np.isinf(f.distances()))


def test_zero_distance_iff_occupied():
    f = make_field(5)
    f.update(added=[(1, 1, 1), (3, 3, 3)])
    dist = f.distances()
    zero = set(zip(*np.nonzero(dist == 0.0)))
    assert zero == {(1, 1, 1), (3, 3, 3)}


def test_field_matches_brute_force_on_random_grids():
    rng = np.random.default_rng(0)
    exact_total = 0
    count_total = 0
    for _ in range(5):
        f = EsdfField(SPEC, (0, 0, 0), (11, 11, 11))
        mask = rng.random(f.shape) < 0.06
        keys = list(zip(*np.nonzero(mask)))
        if not keys:
            continue
        f.update(added=[tuple(int(v) for v in k) for k in keys])
        got = f.distances()
        want = brute_force_distances(f)
        diff = np.abs(got - want)
        assert np.all(diff <= SPEC.resolution * math.sqrt(3) + 1e-12)
        exact_total += int((diff <= 1e-12).sum())
        count_total += got.size
    assert exact_total / count_total >= 0.95


def test_lower_bound_chebyshev_property():
    rng = np.random.default_rng(1)
    f = EsdfField(SPEC, (0, 0, 0), (9, 9, 9))
    mask = rng.random(f.shape) < 0.08
    keys = [tuple(int(v) for v in k) for k in zip(*np.nonzero(mask))]
    if not keys:
        keys = [(4, 4, 4)]
    f.update(added=keys)
    obstacles = np.array(keys)
    for flat in range(0, f.shape[0] * f.shape[1] * f.shape[2], 7):
        key = f._key_of(flat)
        cheb = np.abs(obstacles - np.array(key)).max(axis=1).min()
        assert f.distance(key) >= cheb * SPEC.resolution - 1e-12


def test_incremental_add_then_remove_equals_batch():
    f = make_field(6)
    f.update(added=[(1, 1, 1)])
    f.update(added=[(4, 4, 4)])
    f.update(removed=[(1, 1, 1)])
    batch = f.rebuild()
    assert np.array_equal(f.distances(), batch.distances())


def test_incremental_random_sequences_equal_batch():
    rng = np.random.default_rng(2)
    for trial in range(15):
        f = EsdfField(SPEC, (0, 0, 0), (9, 9, 9))
        alive: list[tuple] = []
        for op in range(12):
            if alive and rng.random() < 0.4:
                idx = rng.integers(len(alive))
                key = alive.pop(int(idx))
                f.update(removed=[key])
            else:
                key = tuple(int(v) for v in rng.integers(0, 10, size=3))
                if key not in alive:
                    f.update(added=[key])
                    alive.append(key)
            batch = f.rebuild()
            assert np.array_equal(f.distances(), batch.distances()), (
                f"trial {trial} op {op} diverged"
            )


def test_apply_occupancy_diffs():
    f = make_field(6)
    f.apply_occupancy([(0, 0, 0), (5, 5, 5)])
    f.apply_occupancy([(5, 5, 5), (2, 2, 2)])
    assert set(f.occupied_keys()) == {(2, 2, 2), (5, 5, 5)}
    assert np.array_equal(f.distances(), f.rebuild().distances())


def test_update_rejects_bad_removals():
    f = make_field(4)
    with pytest.raises(ValueError):
        f.update(removed=[(1, 1, 1)])
    with pytest.raises(KeyError):
        f.update(added=[(99, 0, 0)])


def test_esdf_from_tsdf_marks_unknown():
    m = TsdfMap(SPEC, truncation_distance=0.1)
    m.integrate_cloud((0.05, 0.45, 0.45), [(1.0, 0.45, 0.45)])
    field = esdf_from_tsdf(m, (0, 0, 0), (14, 9, 9))
    assert field.distance((10, 4, 4)) == 0.0
    # A voxel the scan observed but did not occupy has a finite distance.
    q = field.query((9, 4, 4))
    assert not q.unknown and math.isfinite(q.distance)
    # A voxel never touched by any ray reports the sentinel.
    far = field.query((0, 9, 9))
    assert far.unknown and math.isinf(far.distance)
