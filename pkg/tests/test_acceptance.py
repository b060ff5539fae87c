"""Acceptance criteria for the benchmark, one test per criterion.

Each test prints a single PASS line once its assertions hold. The trend
criteria run on the standard episode (96 s, default sensors, seed 0) shared
through session fixtures; a failed criterion shows up as a normal pytest
failure.
"""
import bisect
import csv
import io
import math
import random
import time

import numpy as np
import pytest

from voxbench.cli import main as cli_main
from voxbench.config import CSV_COLUMNS
from voxbench.esdf import EsdfField
from voxbench.evaluate import f_beta
from voxbench.geometry import (
    Cylinder,
    Prism,
    convex_hull,
    points_in_cylinder,
    points_in_hull,
    points_in_prism,
    rotation_z,
)
from voxbench.grid import GridSpec, quantize, quantize_points, traverse_ray
from voxbench.octree_map import OctreeMap
from voxbench.skiplist_map import SkipList

pytestmark = pytest.mark.acceptance

GRID = GridSpec(resolution=0.1)


def _passed(num: int, label: str) -> None:
    print(f"\nACCEPTANCE {num:2d} {label}: PASS")


# ---------------------------------------------------------------------------
# Criterion 1: F-score formula fidelity
# ---------------------------------------------------------------------------

def test_criterion_01_fscore_formula_fidelity():
    for p, r, f1, f2, f3 in [
        (0.650, 0.477, 0.550, 0.504, 0.490),
        (0.544, 0.698, 0.612, 0.661, 0.679),
    ]:
        assert abs(f_beta(p, r, 1) - f1) <= 1e-3
        assert abs(f_beta(p, r, 2) - f2) <= 1e-3
        assert abs(f_beta(p, r, 3) - f3) <= 1e-3
    _passed(1, "F-score formula fidelity")


# ---------------------------------------------------------------------------
# Criterion 2: geometry oracles
# ---------------------------------------------------------------------------

def _canonical_frame(axis):
    ref = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(axis, ref)
    u /= np.linalg.norm(u)
    v = np.cross(axis, u)
    return np.stack([u, v, axis])


def test_criterion_02_geometry_oracles():
    rng = np.random.default_rng(2024)
    n = 100_000

    bottom = np.array([0.3, -0.4, 0.2])
    top = np.array([-0.5, 0.8, 1.7])
    cyl = Cylinder(bottom=bottom, top=top, radius=0.45)
    pts = rng.uniform(-1.5, 2.5, size=(n, 3))
    axis = top - bottom
    height = np.linalg.norm(axis)
    frame = _canonical_frame(axis / height)
    local = (pts - bottom) @ frame.T
    want = (
        (local[:, 2] >= -1e-9 * height)
        & (local[:, 2] <= height + 1e-9 * height)
        & (np.hypot(local[:, 0], local[:, 1]) <= cyl.radius + 1e-9)
    )
    assert np.array_equal(points_in_cylinder(pts, cyl), want)

    rot = rotation_z(0.7) @ np.array(
        [[math.cos(0.3), 0, math.sin(0.3)], [0, 1, 0], [-math.sin(0.3), 0, math.cos(0.3)]]
    )
    prism = Prism((0.2, 0.1, 0.9), rot, (0.8, 1.3, 0.5))
    pts = rng.uniform(-1.5, 2.5, size=(n, 3))
    local = (pts - prism.center) @ prism.axes.T
    want = np.all(np.abs(local) <= prism.sizes / 2 + 1e-9, axis=1)
    assert np.array_equal(points_in_prism(pts, prism), want)

    hulls = 0
    for _ in range(1000):
        count = int(rng.integers(8, 24))
        cloud = rng.normal(size=(count, 3)) * rng.uniform(0.2, 2.0)
        hull = convex_hull(cloud)
        assert points_in_hull(cloud, hull).all()
        hulls += 1
    assert hulls == 1000
    _passed(2, "geometry oracles (1e5 queries, 1e3 hulls)")


# ---------------------------------------------------------------------------
# Criterion 3: skiplist equivalence
# ---------------------------------------------------------------------------

class _SortedArray:
    def __init__(self):
        self.keys = []
        self.values = []

    def insert(self, k, v):
        i = bisect.bisect_left(self.keys, k)
        if i < len(self.keys) and self.keys[i] == k:
            self.values[i] = v
        else:
            self.keys.insert(i, k)
            self.values.insert(i, v)

    def search(self, k):
        i = bisect.bisect_left(self.keys, k)
        if i < len(self.keys) and self.keys[i] == k:
            return self.values[i]
        return None

    def delete(self, k):
        i = bisect.bisect_left(self.keys, k)
        if i < len(self.keys) and self.keys[i] == k:
            del self.keys[i]
            del self.values[i]
            return True
        return False


def test_criterion_03_skiplist_equivalence():
    t0 = time.perf_counter()
    total_ops = 0
    for seed in range(10):
        rng = random.Random(seed)
        sl = SkipList(random.Random(seed * 7 + 1))
        oracle = _SortedArray()
        for step in range(10_000):
            op = rng.random()
            key = rng.randrange(500)
            if op < 0.5:
                value = rng.getrandbits(30)
                sl.insert(key, value)
                oracle.insert(key, value)
            elif op < 0.8:
                assert sl.search(key) == oracle.search(key)
            else:
                assert sl.delete(key) == oracle.delete(key)
            if step % 250 == 0:
                assert [k for k, _ in sl.items()] == oracle.keys
            total_ops += 1
        assert list(sl.items()) == list(zip(oracle.keys, oracle.values))
    assert total_ops == 100_000
    assert time.perf_counter() - t0 < 30.0
    _passed(3, "skiplist equals sorted-array oracle (1e5 ops, 10 seeds)")


# ---------------------------------------------------------------------------
# Criterion 4: ray traversal vs fine sampling
# ---------------------------------------------------------------------------

def test_criterion_04_ray_traversal_sampling_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    for _ in range(1000):
        a = rng.uniform(-2.0, 2.0, size=3)
        b = rng.uniform(-2.0, 2.0, size=3)
        if np.all(quantize_points(a.reshape(1, 3), GRID) == quantize_points(b.reshape(1, 3), GRID)):
            continue
        traversed = set(traverse_ray(a, b, GRID))
        length = float(np.linalg.norm(b - a))
        steps = max(2, int(length / (GRID.resolution * 0.01)))
        t = np.linspace(0.0, 1.0, steps, endpoint=False)
        samples = a + t[:, None] * (b - a)
        sampled = set(map(tuple, quantize_points(samples, GRID).tolist()))
        sampled.discard(quantize(b, GRID))
        assert sampled <= traversed
        assert len(traversed - sampled) <= 2
    assert time.perf_counter() - t0 < 10.0
    _passed(4, "ray traversal matches fine-step sampling oracle")


# ---------------------------------------------------------------------------
# Criterion 5: ESDF correctness
# ---------------------------------------------------------------------------

def test_criterion_05_esdf_correctness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    exact = 0
    total = 0
    diag = GRID.resolution * math.sqrt(3)
    coords = np.stack(np.meshgrid(*[np.arange(20)] * 3, indexing="ij"), -1).reshape(-1, 3)
    for _ in range(50):
        field = EsdfField(GRID, (0, 0, 0), (19, 19, 19))
        mask = rng.random(field.shape) < rng.uniform(0.01, 0.08)
        keys = [tuple(int(v) for v in k) for k in zip(*np.nonzero(mask))]
        if not keys:
            keys = [tuple(int(v) for v in rng.integers(0, 20, size=3))]
        field.update(added=keys)
        got = field.distances().reshape(-1)
        obstacles = np.array(keys, dtype=float)
        want = np.sqrt(
            ((coords[:, None, :] - obstacles[None, :, :]) ** 2).sum(axis=2)
        ).min(axis=1) * GRID.resolution
        diff = np.abs(got - want)
        assert np.all(diff <= diag + 1e-12)
        exact += int((diff <= 1e-12).sum())
        total += got.size
    assert exact / total >= 0.95

    for trial in range(8):
        field = EsdfField(GRID, (0, 0, 0), (11, 11, 11))
        alive = []
        for _ in range(10):
            if alive and rng.random() < 0.45:
                key = alive.pop(int(rng.integers(len(alive))))
                field.update(removed=[key])
            else:
                key = tuple(int(v) for v in rng.integers(0, 12, size=3))
                if key not in alive:
                    field.update(added=[key])
                    alive.append(key)
            assert np.array_equal(field.distances(), field.rebuild().distances())
    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0
    _passed(5, f"ESDF exact vs brute force and incremental==batch ({elapsed:.0f}s)")


# ---------------------------------------------------------------------------
# Criterion 6: octree pruning invariance
# ---------------------------------------------------------------------------

def test_criterion_06_octree_pruning_invariance():
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    for _ in range(100):
        m = OctreeMap(
            GRID,
            extent=(1.6, 1.6, 1.6),
            hit_prob=float(rng.uniform(0.55, 1.0)),
            miss_prob=float(rng.uniform(0.1, 0.45)),
        )
        for _ in range(int(rng.integers(1, 5))):
            pts = rng.uniform(0.05, 1.55, size=(int(rng.integers(5, 60)), 3))
            origin = rng.uniform(0.2, 1.4, size=3)
            m.integrate_cloud(origin, pts)
        before = m.occupied_voxels()
        m.prune()
        assert m.occupied_voxels() == before
    assert time.perf_counter() - t0 < 30.0
    _passed(6, "octree occupied set invariant under pruning (100 sequences)")


# ---------------------------------------------------------------------------
# Criteria 7-12: trends on the standard episode
# ---------------------------------------------------------------------------

LENGTH_VALUES = "0.05,0.075,0.1,0.125,0.15,0.175,0.2"


def _run_length_sweep(episode, out_path):
    code = cli_main([
        "sweep",
        "--episode", str(episode),
        "--backend", "octree",
        "--param", "minimum_voxel_length",
        "--values", LENGTH_VALUES,
        "--out", str(out_path),
    ])
    assert code == 0
    return out_path


@pytest.fixture(scope="session")
def octree_length_sweep(standard_episode, tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep") / "octree_length_1.csv"
    return _run_length_sweep(standard_episode, out)


def _read_rows(csv_path):
    text = csv_path.read_text(encoding="utf-8").strip().splitlines()
    assert text[0] == ",".join(CSV_COLUMNS)
    rows = []
    for line in text[1:]:
        rows.append(dict(zip(CSV_COLUMNS, next(csv.reader(io.StringIO(line))))))
    return rows


def _spearman_rho(xs, ys):
    def ranks(vals):
        order = sorted(range(len(vals)), key=lambda i: vals[i])
        out = [0.0] * len(vals)
        for rank, idx in enumerate(order):
            out[idx] = float(rank)
        return out

    rx, ry = ranks(xs), ranks(ys)
    n = len(xs)
    d2 = sum((a - b) ** 2 for a, b in zip(rx, ry))
    return 1.0 - 6.0 * d2 / (n * (n * n - 1))


def test_criterion_07_voxel_length_trend(octree_length_sweep):
    rows = _read_rows(octree_length_sweep)
    assert len(rows) == 7
    lengths = [0.05, 0.075, 0.1, 0.125, 0.15, 0.175, 0.2]
    precisions = [float(r["precision"]) for r in rows]
    recalls = [float(r["recall"]) for r in rows]
    assert all(b > a for a, b in zip(precisions, precisions[1:])), precisions
    assert _spearman_rho(lengths, precisions) == pytest.approx(1.0)
    argmax = recalls.index(max(recalls))
    assert 0 < argmax < len(recalls) - 1, (
        f"recall argmax at boundary value {lengths[argmax]}: {recalls}"
    )
    _passed(7, "octree precision rises strictly with voxel length; recall peaks inside")


def test_criterion_08_hit_probability_trend(octree_length_sweep, run_cache):
    rows = _read_rows(octree_length_sweep)
    recall_hit_1 = float(rows[2]["recall"])  # 0.1 m row of the default sweep
    recall_hit_07 = run_cache.report("octree", hit_probability=0.7).recall
    recall_hit_05 = run_cache.report("octree", hit_probability=0.5).recall
    assert recall_hit_05 < 0.05
    assert recall_hit_1 > recall_hit_07 > recall_hit_05
    assert recall_hit_1 >= 5.0 * recall_hit_05
    _passed(8, "octree hit-probability recall chain 1 > 0.7 > 0.5")


def test_criterion_09_truncation_ratio_trend(run_cache):
    r_005 = run_cache.report("tsdf", truncation_distance=0.05).recall
    r_010 = run_cache.report("tsdf", truncation_distance=0.1).recall
    r_020 = run_cache.report("tsdf", truncation_distance=0.2).recall
    assert r_005 >= 3.0 * r_010, (r_005, r_010)
    assert r_005 >= 5.0 * r_020, (r_005, r_020)
    r_len_015 = run_cache.report(
        "tsdf", truncation_distance=0.1, minimum_voxel_length=0.15
    ).recall
    assert r_len_015 >= 2.0 * r_010, (r_len_015, r_010)
    _passed(9, "tsdf recall collapses as truncation/voxel ratio grows")


def test_criterion_10_constant_weight_trend(run_cache):
    constant = run_cache.report("tsdf", truncation_distance=0.1, constant_weight=True)
    default = run_cache.report("tsdf", truncation_distance=0.1)
    assert constant.recall < default.recall, (constant.recall, default.recall)
    _passed(10, "tsdf constant-weight recall strictly below default")


def test_criterion_11_stale_voxel_reproduction(run_cache):
    skiplist_end = run_cache.end_count("skiplist")
    octree_end = run_cache.end_count("octree")
    assert skiplist_end >= 3 * octree_end, (skiplist_end, octree_end)
    _passed(11, f"skiplist keeps {skiplist_end} voxels vs octree {octree_end} (>= 3x)")


def test_criterion_12_pipeline_determinism(standard_episode, octree_length_sweep, tmp_path_factory):
    second = tmp_path_factory.mktemp("sweep") / "octree_length_2.csv"
    _run_length_sweep(standard_episode, second)
    assert second.read_bytes() == octree_length_sweep.read_bytes()
    _passed(12, "voxel-length sweep byte-identical across two full runs")
