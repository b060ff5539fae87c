"""Probabilistic occupancy octree with log-odds updates and raycast carving.

The tree has a fixed depth chosen so leaves match the grid resolution, with
the root spanning the mapped bounds rounded up to the next power-of-two voxel
count. Nodes are plain 8-slot lists; a slot holds either a child list, a
float (a leaf, possibly a collapsed uniform subtree), or ``None`` for unknown
space. Single writer at a time; reads may run concurrently between updates.
"""
from __future__ import annotations

import math

import numpy as np

from .grid import GridSpec, VoxelKey, VoxelSet, pack_keys, traverse_segments, unpack_keys

_DEF_CLAMP_MIN = -2.0
_DEF_CLAMP_MAX = 3.5


def log_odds(p: float) -> float:
    """Log-odds of a probability; p = 1 saturates to +inf."""
    if p <= 0.0:
        raise ValueError("probability must be positive")
    if p > 1.0:
        raise ValueError("probability must not exceed 1")
    if p == 1.0:
        return math.inf
    return math.log(p / (1.0 - p))


# Bit-spreading for Morton interleaving (x gets the highest of each bit triple).

def _spread_bits(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.int64)
    x = (x | (x << 32)) & 0x1F00000000FFFF
    x = (x | (x << 16)) & 0x1F0000FF0000FF
    x = (x | (x << 8)) & 0x100F00F00F00F00F
    x = (x | (x << 4)) & 0x10C30C30C30C30C3
    x = (x | (x << 2)) & 0x1249249249249249
    return x


def _compact_bits(x: np.ndarray) -> np.ndarray:
    x = x & 0x1249249249249249
    x = (x | (x >> 2)) & 0x10C30C30C30C30C3
    x = (x | (x >> 4)) & 0x100F00F00F00F00F
    x = (x | (x >> 8)) & 0x1F0000FF0000FF
    x = (x | (x >> 16)) & 0x1F00000000FFFF
    x = (x | (x >> 32)) & 0x1FFFFF
    return x


def morton_encode(ijk: np.ndarray) -> np.ndarray:
    ijk = np.asarray(ijk, dtype=np.int64)
    return (
        (_spread_bits(ijk[..., 0]) << 2)
        | (_spread_bits(ijk[..., 1]) << 1)
        | _spread_bits(ijk[..., 2])
    )


def morton_decode(codes: np.ndarray) -> np.ndarray:
    codes = np.asarray(codes, dtype=np.int64)
    return np.stack(
        [_compact_bits(codes >> 2), _compact_bits(codes >> 1), _compact_bits(codes)],
        axis=-1,
    )


class OctreeMap:
    """OccupancyBackend over a probabilistic octree."""

    def __init__(
        self,
        spec: GridSpec,
        extent=(4.0, 2.8, 2.29),
        hit_prob: float = 1.0,
        miss_prob: float = 0.4,
        occupancy_threshold: float = 0.5,
        clamp_min: float = _DEF_CLAMP_MIN,
        clamp_max: float = _DEF_CLAMP_MAX,
    ):
        if not (0.0 < hit_prob <= 1.0):
            raise ValueError("hit probability must be in (0, 1]")
        if not (0.0 < miss_prob < 1.0):
            raise ValueError("miss probability must be in (0, 1)")
        if clamp_max <= clamp_min:
            raise ValueError("clamp_max must exceed clamp_min")
        self.spec = spec
        self.hit_prob = hit_prob
        self.miss_prob = miss_prob
        self.occupancy_threshold = occupancy_threshold
        self.clamp_min = float(clamp_min)
        self.clamp_max = float(clamp_max)
        self._hit_delta = log_odds(hit_prob)
        self._miss_delta = log_odds(miss_prob)
        self._threshold = log_odds(occupancy_threshold)

        cells = max(1, max(int(math.ceil(e / spec.resolution)) for e in extent))
        self.depth = max(1, (cells - 1).bit_length())
        self.size = 1 << self.depth  # leaf voxels per axis

        self._root: list | float | None = [None] * 8
        self._occupied: set[int] = set()  # morton codes of occupied leaves

    # -- core update ---------------------------------------------------------

    def _apply_codes(self, codes: np.ndarray, delta: float) -> None:
        """Add ``delta`` (clamped) to each leaf named by sorted morton codes."""
        if len(codes) == 0:
            return
        depth = self.depth
        if type(self._root) is not list:
            val = self._root
            self._root = [None] * 8 if val is None else [val] * 8
        cmin = self.clamp_min
        cmax = self.clamp_max
        thr = self._threshold
        occupied = self._occupied
        shifts = [3 * (depth - 1 - lvl) for lvl in range(depth)]
        stack: list = [self._root]
        prev = -1
        for code in codes.tolist():
            if prev < 0:
                level = 0
            else:
                # bit_length-1 is the top differing bit; dividing by 3 maps
                # bit positions to tree levels, so the stack prefix up to
                # that level stays valid.
                level = depth - 1 - ((code ^ prev).bit_length() - 1) // 3
                del stack[level + 1 :]
            node = stack[level]
            for lvl in range(level, depth - 1):
                oct_idx = (code >> shifts[lvl]) & 7
                child = node[oct_idx]
                if type(child) is not list:
                    child = [None] * 8 if child is None else [child] * 8
                    node[oct_idx] = child
                node = child
                stack.append(child)
            oct_idx = code & 7
            old = node[oct_idx]
            base = old if type(old) is float else 0.0
            new = base + delta
            if new > cmax:
                new = cmax
            elif new < cmin:
                new = cmin
            node[oct_idx] = new
            if (new > thr) != (base > thr):
                if new > thr:
                    occupied.add(code)
                else:
                    occupied.discard(code)
            prev = code

    def update_voxel(self, key: VoxelKey, delta: float) -> None:
        """Single-voxel clamped log-odds update (test and tooling hook)."""
        ijk = np.array([key], dtype=np.int64)
        self._check_bounds(ijk)
        self._apply_codes(morton_encode(ijk), delta)

    def _check_bounds(self, ijk: np.ndarray) -> np.ndarray:
        return np.all((ijk >= 0) & (ijk < self.size), axis=-1)

    # -- backend contract ----------------------------------------------------

    def integrate_cloud(self, sensor_origin, points) -> None:
        """One hit update per endpoint voxel, at most one miss update per
        traversed voxel; a voxel hit in this call is never also missed."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if len(pts) == 0:
            return
        origin = np.asarray(sensor_origin, dtype=np.float64).reshape(3)
        origin_key = np.floor((origin - self.spec.origin_array()) / self.spec.resolution)
        if not self._check_bounds(origin_key.astype(np.int64)):
            raise ValueError("sensor origin lies outside the mapped bounds")

        keys = np.floor((pts - self.spec.origin_array()) / self.spec.resolution).astype(np.int64)
        inside = self._check_bounds(keys)
        pts = pts[inside]
        keys = keys[inside]
        if len(pts) == 0:
            return

        hits = np.unique(morton_encode(keys))
        packed, _ = traverse_segments(origin, pts, self.spec)
        if len(packed):
            miss_keys = unpack_keys(np.unique(packed))
            misses = morton_encode(miss_keys)
            misses = np.setdiff1d(np.sort(misses), hits, assume_unique=False)
        else:
            misses = np.empty(0, dtype=np.int64)

        self._apply_codes(hits, self._hit_delta)
        self._apply_codes(misses, self._miss_delta)

    def occupied_voxels(self) -> VoxelSet:
        if not self._occupied:
            return set()
        ijk = morton_decode(np.fromiter(self._occupied, dtype=np.int64))
        return set(map(tuple, ijk.tolist()))

    def occupied_packed(self) -> np.ndarray:
        if not self._occupied:
            return np.empty(0, dtype=np.int64)
        ijk = morton_decode(np.fromiter(self._occupied, dtype=np.int64))
        return np.sort(pack_keys(ijk))

    def occupied_count(self) -> int:
        return len(self._occupied)

    def reset(self) -> None:
        self._root = [None] * 8
        self._occupied.clear()

    # -- tree maintenance ----------------------------------------------------

    def prune(self) -> None:
        """Merge nodes whose eight children hold identical values; the
        occupied set is unchanged."""
        self._root = self._prune_node(self._root)

    def _prune_node(self, node):
        if type(node) is not list:
            return node
        all_none = True
        all_float = True
        for i in range(8):
            child = node[i]
            if type(child) is list:
                child = self._prune_node(child)
                node[i] = child
            if child is not None:
                all_none = False
            if type(child) is not float:
                all_float = False
        if all_none:
            return None
        if all_float:
            first = node[0]
            if all(node[i] == first for i in range(1, 8)):
                return first
        return node

    def log_odds_at(self, key: VoxelKey) -> float | None:
        """Stored log-odds of a leaf, descending through collapsed nodes."""
        ijk = np.array(key, dtype=np.int64)
        if not self._check_bounds(ijk):
            return None
        code = int(morton_encode(ijk.reshape(1, 3))[0])
        node = self._root
        for lvl in range(self.depth):
            if type(node) is float:
                return node
            if node is None:
                return None
            node = node[(code >> (3 * (self.depth - 1 - lvl))) & 7]
        return node if type(node) is float else None

    def walk_leaves(self):
        """Yield (morton_code, log_odds) for every known leaf voxel,
        expanding collapsed subtrees. Exhaustive; intended for verification."""
        yield from self._walk(self._root, 0, 0)

    def _walk(self, node, code, level):
        if node is None:
            return
        if type(node) is float:
            span = 1 << (3 * (self.depth - level))
            base = code << (3 * (self.depth - level))
            for off in range(span):
                yield base + off, node
            return
        for i in range(8):
            yield from self._walk(node[i], (code << 3) | i, level + 1)

    def occupied_by_walk(self) -> set[int]:
        thr = self._threshold
        return {code for code, value in self.walk_leaves() if value > thr}
