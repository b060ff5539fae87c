"""Skiplist ordered map and the x->y->z tree of skiplists with voxel weights.

Voxel coordinates are recovered from the traversal path (x key, then y key,
then z key), so leaf containers store only an integer weight. A voxel is
occupied once its weight reaches the minimum voxel weight; weights never go
negative. Single writer at a time; readers may run between integrations.
"""
from __future__ import annotations

import random

import numpy as np

from .grid import GridSpec, VoxelKey, VoxelSet, pack_keys, quantize_points, traverse_segments, unpack_keys

MAX_LEVEL = 16
PROMOTE_P = 0.5

# Node layout: [key, value, forward_0, forward_1, ...]
_KEY = 0
_VAL = 1
_FWD = 2


class SkipList:
    """Ordered map over comparable keys with expected log-time search."""

    __slots__ = ("_head", "_level", "_rng", "_len")

    def __init__(self, rng: random.Random | None = None):
        self._head = [None, None] + [None] * MAX_LEVEL
        self._level = 1
        self._rng = rng if rng is not None else random.Random()
        self._len = 0

    def __len__(self) -> int:
        return self._len

    def _random_level(self) -> int:
        level = 1
        while level < MAX_LEVEL and self._rng.random() < PROMOTE_P:
            level += 1
        return level

    def _find_prev(self, key, update: list) -> list:
        node = self._head
        for lvl in range(self._level - 1, -1, -1):
            nxt = node[_FWD + lvl]
            while nxt is not None and nxt[_KEY] < key:
                node = nxt
                nxt = node[_FWD + lvl]
            update[lvl] = node
        return node

    def search(self, key):
        node = self._head
        for lvl in range(self._level - 1, -1, -1):
            nxt = node[_FWD + lvl]
            while nxt is not None and nxt[_KEY] < key:
                node = nxt
                nxt = node[_FWD + lvl]
        node = node[_FWD]
        if node is not None and node[_KEY] == key:
            return node[_VAL]
        return None

    def insert(self, key, value) -> None:
        update = [None] * MAX_LEVEL
        node = self._find_prev(key, update)[_FWD]
        if node is not None and node[_KEY] == key:
            node[_VAL] = value
            return
        self._insert_after(key, value, update)

    def get_or_create(self, key, factory):
        """Existing value for ``key``, or insert ``factory()`` and return it."""
        update = [None] * MAX_LEVEL
        node = self._find_prev(key, update)[_FWD]
        if node is not None and node[_KEY] == key:
            return node[_VAL]
        value = factory()
        self._insert_after(key, value, update)
        return value

    def _insert_after(self, key, value, update: list) -> None:
        level = self._random_level()
        if level > self._level:
            for lvl in range(self._level, level):
                update[lvl] = self._head
            self._level = level
        node = [key, value] + [None] * level
        for lvl in range(level):
            prev = update[lvl]
            node[_FWD + lvl] = prev[_FWD + lvl]
            prev[_FWD + lvl] = node
        self._len += 1

    def delete(self, key) -> bool:
        update = [None] * MAX_LEVEL
        node = self._find_prev(key, update)[_FWD]
        if node is None or node[_KEY] != key:
            return False
        for lvl in range(self._level):
            prev = update[lvl]
            if _FWD + lvl < len(node) and prev[_FWD + lvl] is node:
                prev[_FWD + lvl] = node[_FWD + lvl]
        while self._level > 1 and self._head[_FWD + self._level - 1] is None:
            self._level -= 1
        self._len -= 1
        return True

    def items(self):
        node = self._head[_FWD]
        while node is not None:
            yield node[_KEY], node[_VAL]
            node = node[_FWD]

    def keys(self):
        for k, _ in self.items():
            yield k


class _WeightCell:
    __slots__ = ("weight",)

    def __init__(self):
        self.weight = 0


class SkiMapTree:
    """OccupancyBackend over nested skiplists with integer voxel weights."""

    def __init__(
        self,
        spec: GridSpec,
        min_voxel_weight: int = 1,
        decrement_mode: str = "none",
        seed: int = 0,
    ):
        if min_voxel_weight < 1:
            raise ValueError("minimum voxel weight must be >= 1")
        if decrement_mode not in ("none", "raycast"):
            raise ValueError("decrement mode must be 'none' or 'raycast'")
        self.spec = spec
        self.min_voxel_weight = int(min_voxel_weight)
        self.decrement_mode = decrement_mode
        self._rng = random.Random(seed)
        self._x = SkipList(self._rng)
        self._occupied: set[int] = set()  # packed keys

    # -- weight plumbing -----------------------------------------------------

    def _cell(self, ix: int, iy: int, iz: int, create: bool) -> _WeightCell | None:
        if create:
            ylist = self._x.get_or_create(ix, lambda: SkipList(self._rng))
            zlist = ylist.get_or_create(iy, lambda: SkipList(self._rng))
            return zlist.get_or_create(iz, _WeightCell)
        ylist = self._x.search(ix)
        if ylist is None:
            return None
        zlist = ylist.search(iy)
        if zlist is None:
            return None
        return zlist.search(iz)

    def voxel_weight(self, key: VoxelKey) -> int:
        cell = self._cell(int(key[0]), int(key[1]), int(key[2]), create=False)
        return 0 if cell is None else cell.weight

    def _bump(self, ijk_rows, packed, delta: int) -> None:
        threshold = self.min_voxel_weight
        occupied = self._occupied
        for (ix, iy, iz), code in zip(ijk_rows, packed):
            cell = self._cell(ix, iy, iz, create=delta > 0)
            if cell is None:
                continue
            old = cell.weight
            new = old + delta
            if new < 0:
                new = 0
            cell.weight = new
            if new >= threshold:
                if old < threshold:
                    occupied.add(code)
            elif old >= threshold:
                occupied.discard(code)

    # -- backend contract ----------------------------------------------------

    def integrate_cloud(self, sensor_origin, points) -> None:
        """Each endpoint voxel's weight rises by one (once per call). In
        ``raycast`` mode, traversed voxels that were not hit in this call are
        decremented, saturating at zero."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if len(pts) == 0:
            return
        keys = quantize_points(pts, self.spec)
        hits = np.unique(pack_keys(keys))
        self._bump(unpack_keys(hits).tolist(), hits.tolist(), +1)

        if self.decrement_mode == "raycast":
            origin = np.asarray(sensor_origin, dtype=np.float64).reshape(3)
            packed, _ = traverse_segments(origin, pts, self.spec)
            if len(packed):
                misses = np.setdiff1d(np.unique(packed), hits, assume_unique=True)
                self._bump(unpack_keys(misses).tolist(), misses.tolist(), -1)

    def occupied_voxels(self) -> VoxelSet:
        if not self._occupied:
            return set()
        return set(map(tuple, unpack_keys(np.fromiter(self._occupied, dtype=np.int64)).tolist()))

    def occupied_packed(self) -> np.ndarray:
        if not self._occupied:
            return np.empty(0, dtype=np.int64)
        return np.sort(np.fromiter(self._occupied, dtype=np.int64))

    def occupied_count(self) -> int:
        return len(self._occupied)

    def reset(self) -> None:
        self._x = SkipList(self._rng)
        self._occupied.clear()

    # -- verification helpers --------------------------------------------------

    def walk(self):
        """Yield (voxel key, weight) by traversing the x, y, z skiplists;
        coordinates come purely from the path keys."""
        for ix, ylist in self._x.items():
            for iy, zlist in ylist.items():
                for iz, cell in zlist.items():
                    yield (ix, iy, iz), cell.weight

    def occupied_by_walk(self) -> VoxelSet:
        return {key for key, w in self.walk() if w >= self.min_voxel_weight}
