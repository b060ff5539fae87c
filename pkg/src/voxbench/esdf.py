"""Euclidean distance field over a bounded voxel box, updated by wavefronts.

Occupied voxels carry distance zero and reference themselves; every other
voxel carries the Euclidean distance to the obstacle referenced by its
parent, propagated over the 26-neighborhood. Removing obstacles invalidates
the cells that reference them (raise step); lowering re-propagates from the
surviving frontier and from new obstacles until no cell can improve.

Ties are broken lexicographically on (distance, parent key) so batch builds
and incremental updates settle on the same field. Derivation runs
exclusively; no concurrent writes.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .grid import GridSpec, VoxelKey, pack_keys, unpack_keys

_NO_PARENT = -1

_NEIGHBORS = [
    (di, dj, dk)
    for di in (-1, 0, 1)
    for dj in (-1, 0, 1)
    for dk in (-1, 0, 1)
    if (di, dj, dk) != (0, 0, 0)
]


@dataclass(frozen=True)
class EsdfVoxel:
    distance: float
    parent: VoxelKey | None
    unknown: bool = False


class EsdfField:
    """Distance field over the axis-aligned key box [lo_key, hi_key]."""

    def __init__(self, spec: GridSpec, lo_key: VoxelKey, hi_key: VoxelKey):
        self.spec = spec
        self.lo = tuple(int(v) for v in lo_key)
        self.hi = tuple(int(v) for v in hi_key)
        if any(h < l for l, h in zip(self.lo, self.hi)):
            raise ValueError("hi_key must not precede lo_key")
        self.shape = tuple(h - l + 1 for l, h in zip(self.lo, self.hi))
        size = self.shape[0] * self.shape[1] * self.shape[2]
        self._dist = np.full(size, math.inf)
        self._parent = np.full(size, _NO_PARENT, dtype=np.int64)
        self._occupied: set[int] = set()  # flat indices
        self._known: np.ndarray | None = None

    # -- indexing ---------------------------------------------------------------

    def _flat(self, key: VoxelKey) -> int:
        i = key[0] - self.lo[0]
        j = key[1] - self.lo[1]
        k = key[2] - self.lo[2]
        ny, nz = self.shape[1], self.shape[2]
        if not (0 <= i < self.shape[0] and 0 <= j < ny and 0 <= k < nz):
            raise KeyError(f"voxel {key} outside the field domain")
        return (i * ny + j) * nz + k

    def _coords(self, flat: int) -> tuple[int, int, int]:
        ny, nz = self.shape[1], self.shape[2]
        i, rem = divmod(flat, ny * nz)
        j, k = divmod(rem, nz)
        return i, j, k

    def contains(self, key: VoxelKey) -> bool:
        return all(l <= v <= h for v, l, h in zip(key, self.lo, self.hi))

    # -- updates ------------------------------------------------------------------

    def update(self, added=(), removed=()) -> None:
        """Apply obstacle insertions and removals, then re-propagate."""
        removed_flat = []
        for key in removed:
            f = self._flat(key)
            if f not in self._occupied:
                raise ValueError(f"voxel {key} is not an obstacle")
            self._occupied.discard(f)
            removed_flat.append(f)

        heap: list[tuple[float, int, int]] = []

        if removed_flat:
            # Raise step: every cell referencing a vanished obstacle is
            # invalidated. A direct scan is used because influence regions
            # need not stay connected to the removed cell.
            removed_parents = np.array(removed_flat, dtype=np.int64)
            invalid = np.isin(self._parent, removed_parents)
            self._dist[invalid] = math.inf
            self._parent[invalid] = _NO_PARENT
            # Valid cells bordering the invalidated region seed the lower
            # wavefront with their current values.
            inv_mask = invalid.reshape(self.shape)
            frontier = self._dilate(inv_mask) & (self._parent.reshape(self.shape) != _NO_PARENT)
            for f in np.flatnonzero(frontier.reshape(-1)).tolist():
                heapq.heappush(heap, (self._dist[f], int(self._parent[f]), f))

        for key in added:
            f = self._flat(key)
            if f in self._occupied:
                continue
            self._occupied.add(f)
            self._dist[f] = 0.0
            self._parent[f] = f
            heapq.heappush(heap, (0.0, f, f))

        self._propagate(heap)

    @staticmethod
    def _dilate(mask: np.ndarray) -> np.ndarray:
        out = np.zeros_like(mask)
        for di, dj, dk in _NEIGHBORS:
            src = mask[
                max(-di, 0) : mask.shape[0] - max(di, 0),
                max(-dj, 0) : mask.shape[1] - max(dj, 0),
                max(-dk, 0) : mask.shape[2] - max(dk, 0),
            ]
            out[
                max(di, 0) : mask.shape[0] + min(di, 0),
                max(dj, 0) : mask.shape[1] + min(dj, 0),
                max(dk, 0) : mask.shape[2] + min(dk, 0),
            ] |= src
        return out

    def _propagate(self, heap: list) -> None:
        res = self.spec.resolution
        dist = self._dist
        parent = self._parent
        nx, ny, nz = self.shape
        nynz = ny * nz
        sqrt = math.sqrt
        while heap:
            d, p, f = heapq.heappop(heap)
            if d != dist[f] or p != parent[f]:
                continue  # stale entry
            fi, rem = divmod(f, nynz)
            fj, fk = divmod(rem, nz)
            pi, rem = divmod(p, nynz)
            pj, pk = divmod(rem, nz)
            for di, dj, dk in _NEIGHBORS:
                ni = fi + di
                nj = fj + dj
                nk = fk + dk
                if ni < 0 or ni >= nx or nj < 0 or nj >= ny or nk < 0 or nk >= nz:
                    continue
                nf = (ni * ny + nj) * nz + nk
                cand = res * sqrt((ni - pi) ** 2 + (nj - pj) ** 2 + (nk - pk) ** 2)
                nd = dist[nf]
                if cand < nd or (cand == nd and p < parent[nf]):
                    dist[nf] = cand
                    parent[nf] = p
                    heapq.heappush(heap, (cand, p, nf))

    def rebuild(self) -> "EsdfField":
        """Fresh field over the same domain built from the current obstacles."""
        fresh = EsdfField(self.spec, self.lo, self.hi)
        keys = [self._key_of(f) for f in sorted(self._occupied)]
        fresh.update(added=keys)
        fresh._known = None if self._known is None else self._known.copy()
        return fresh

    def _key_of(self, flat: int) -> VoxelKey:
        i, j, k = self._coords(flat)
        return (i + self.lo[0], j + self.lo[1], k + self.lo[2])

    # -- queries --------------------------------------------------------------------

    def set_known_mask(self, known: np.ndarray) -> None:
        """Mark which cells were ever observed; unknown cells report +inf."""
        if known.shape != self.shape:
            raise ValueError("known mask shape must match the field domain")
        self._known = known.astype(bool)

    def query(self, key: VoxelKey) -> EsdfVoxel:
        f = self._flat(key)
        if self._known is not None:
            i, j, k = self._coords(f)
            if not self._known[i, j, k]:
                return EsdfVoxel(math.inf, None, unknown=True)
        p = int(self._parent[f])
        return EsdfVoxel(
            float(self._dist[f]),
            None if p == _NO_PARENT else self._key_of(p),
        )

    def distance(self, key: VoxelKey) -> float:
        return self.query(key).distance

    def distances(self) -> np.ndarray:
        """Copy of the raw propagated distances, shaped like the domain."""
        return self._dist.reshape(self.shape).copy()

    def occupied_keys(self) -> list[VoxelKey]:
        return [self._key_of(f) for f in sorted(self._occupied)]

    def apply_occupancy(self, occupied_keys) -> None:
        """Diff the given obstacle set against the current one and update."""
        target = {self._flat(k) for k in occupied_keys}
        added = [self._key_of(f) for f in sorted(target - self._occupied)]
        removed = [self._key_of(f) for f in sorted(self._occupied - target)]
        self.update(added=added, removed=removed)


def esdf_from_tsdf(tsdf, lo_key: VoxelKey, hi_key: VoxelKey) -> EsdfField:
    """Distance field derived from a TSDF map's occupied voxels.

    Cells inside the domain that the TSDF never observed keep an unknown
    flag and report the +inf sentinel.
    """
    field = EsdfField(tsdf.spec, lo_key, hi_key)
    occupied = [k for k in sorted(tsdf.occupied_voxels()) if field.contains(k)]
    field.update(added=occupied)

    known = np.zeros(field.shape, dtype=bool)
    observed = tsdf.observed_packed()
    if len(observed):
        ijk = unpack_keys(observed)
        lo = np.array(field.lo)
        local = ijk - lo
        ok = np.all((local >= 0) & (local < np.array(field.shape)), axis=1)
        local = local[ok]
        known[local[:, 0], local[:, 1], local[:, 2]] = True
    field.set_known_mask(known)
    return field
