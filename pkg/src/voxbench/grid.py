"""Voxel lattice: quantization, key packing, and 3-D integer ray traversal.

A voxel key is the integer triple ``floor((p - origin) / resolution)``. Keys
are packed into a single int64 (21 bits per axis, biased) for fast set
arithmetic; the packed form round-trips for keys within +/-10^6 per axis.
All functions are pure; concurrent use is unrestricted.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VoxelKey = tuple[int, int, int]
VoxelSet = set

KEY_BITS = 21
KEY_BIAS = 1 << 20
_KEY_MASK = (1 << KEY_BITS) - 1


@dataclass(frozen=True)
class GridSpec:
    """Lattice definition: corner of voxel (0,0,0) plus the edge length."""

    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    resolution: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "resolution", float(self.resolution))
        if not (self.resolution > 0.0):
            raise ValueError("grid resolution must be positive")

    def origin_array(self) -> np.ndarray:
        return np.array(self.origin, dtype=np.float64)


def pack_keys(ijk: np.ndarray) -> np.ndarray:
    """Pack an (N, 3) int array of voxel keys into int64 scalars."""
    ijk = np.asarray(ijk, dtype=np.int64)
    if np.any(np.abs(ijk) >= KEY_BIAS):
        raise OverflowError("voxel key out of packable range (+/-2^20)")
    return (
        ((ijk[..., 0] + KEY_BIAS) << (2 * KEY_BITS))
        | ((ijk[..., 1] + KEY_BIAS) << KEY_BITS)
        | (ijk[..., 2] + KEY_BIAS)
    )


def unpack_keys(packed: np.ndarray) -> np.ndarray:
    packed = np.asarray(packed, dtype=np.int64)
    i = (packed >> (2 * KEY_BITS)) - KEY_BIAS
    j = ((packed >> KEY_BITS) & _KEY_MASK) - KEY_BIAS
    k = (packed & _KEY_MASK) - KEY_BIAS
    return np.stack([i, j, k], axis=-1)


def pack_key(key: VoxelKey) -> int:
    return int(pack_keys(np.array(key, dtype=np.int64)))


def unpack_key(packed: int) -> VoxelKey:
    i, j, k = unpack_keys(np.int64(packed))
    return int(i), int(j), int(k)


def keys_to_set(packed: np.ndarray) -> VoxelSet:
    return set(map(tuple, unpack_keys(packed).tolist()))


def quantize_points(points, spec: GridSpec) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    return np.floor((pts - spec.origin_array()) / spec.resolution).astype(np.int64)


def quantize(p, spec: GridSpec) -> VoxelKey:
    i, j, k = quantize_points(np.asarray(p, dtype=np.float64).reshape(1, 3), spec)[0]
    return int(i), int(j), int(k)


def voxel_centers(ijk, spec: GridSpec) -> np.ndarray:
    ijk = np.asarray(ijk, dtype=np.float64)
    return spec.origin_array() + (ijk + 0.5) * spec.resolution


def voxel_center(key: VoxelKey, spec: GridSpec) -> np.ndarray:
    return voxel_centers(np.array(key, dtype=np.float64).reshape(1, 3), spec)[0]


def voxelize_packed(points, spec: GridSpec) -> np.ndarray:
    """Sorted unique packed keys of the voxels containing the points."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        return np.empty(0, dtype=np.int64)
    return np.unique(pack_keys(quantize_points(pts, spec)))


def voxelize(points, spec: GridSpec) -> VoxelSet:
    return keys_to_set(voxelize_packed(points, spec))


# ---------------------------------------------------------------------------
# Ray traversal
# ---------------------------------------------------------------------------

def traverse_ray(origin, end, spec: GridSpec) -> list[VoxelKey]:
    """Voxels crossed by the segment, from the origin voxel up to but
    excluding the voxel containing ``end``.

    Consecutive keys differ in exactly one component by +/-1. Exact corner
    crossings step x first, then y, then z, so the output is deterministic.
    """
    o = (np.asarray(origin, dtype=np.float64) - spec.origin_array()) / spec.resolution
    e = (np.asarray(end, dtype=np.float64) - spec.origin_array()) / spec.resolution
    if np.array_equal(o, e):
        raise ValueError("segment endpoints must differ")
    cur = np.floor(o).astype(np.int64)
    last = np.floor(e).astype(np.int64)
    if np.array_equal(cur, last):
        return []

    d = e - o
    step = np.sign(d).astype(np.int64)
    remaining = np.abs(last - cur)
    t_max = np.full(3, np.inf)
    t_delta = np.full(3, np.inf)
    for ax in range(3):
        if d[ax] > 0:
            t_max[ax] = (cur[ax] + 1.0 - o[ax]) / d[ax]
            t_delta[ax] = 1.0 / d[ax]
        elif d[ax] < 0:
            t_max[ax] = (o[ax] - cur[ax]) / -d[ax]
            t_delta[ax] = -1.0 / d[ax]

    out = [(int(cur[0]), int(cur[1]), int(cur[2]))]
    while True:
        best_ax = -1
        best_t = np.inf
        for ax in range(3):
            if remaining[ax] > 0 and t_max[ax] < best_t:
                best_t = t_max[ax]
                best_ax = ax
        cur[best_ax] += step[best_ax]
        remaining[best_ax] -= 1
        t_max[best_ax] += t_delta[best_ax]
        if remaining[0] == 0 and remaining[1] == 0 and remaining[2] == 0:
            break
        out.append((int(cur[0]), int(cur[1]), int(cur[2])))
    return out


def traverse_segments(
    origins,
    ends,
    spec: GridSpec,
    include_end: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`traverse_ray` over many segments.

    ``origins`` may be a single point shared by every segment or one point per
    segment. Returns packed voxel keys plus the segment index of each key,
    ordered along each ray. With ``include_end`` the end voxel is appended
    per segment (and a zero-length segment yields just its voxel).
    """
    res = spec.resolution
    org = spec.origin_array()
    e = (np.asarray(ends, dtype=np.float64) - org) / res
    o = (np.asarray(origins, dtype=np.float64) - org) / res
    if o.ndim == 1:
        o = np.broadcast_to(o, e.shape)
    n = len(e)
    if n == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)

    cur = np.floor(o).astype(np.int64)
    last = np.floor(e).astype(np.int64)
    d = e - o
    step = np.sign(d).astype(np.int64)
    remaining = np.abs(last - cur)

    with np.errstate(divide="ignore", invalid="ignore"):
        t_pos = (cur + 1.0 - o) / d
        t_neg = (o - cur) / -d
        t_delta = np.abs(1.0 / d)
    t_max = np.where(d > 0, t_pos, np.where(d < 0, t_neg, np.inf))
    t_delta = np.where(d != 0, t_delta, np.inf)

    def pack(ijk):
        return (
            ((ijk[:, 0] + KEY_BIAS) << (2 * KEY_BITS))
            | ((ijk[:, 1] + KEY_BIAS) << KEY_BITS)
            | (ijk[:, 2] + KEY_BIAS)
        )

    keys_out: list[np.ndarray] = []
    idx_out: list[np.ndarray] = []
    all_idx = np.arange(n, dtype=np.int64)

    # Axes with no voxel boundary left to cross never compete in the argmin.
    t_max[remaining == 0] = np.inf
    total = remaining.sum(axis=1)

    emit = total > 0
    if emit.any():
        keys_out.append(pack(cur[emit]))
        idx_out.append(all_idx[emit])

    active = np.flatnonzero(emit)
    while active.size:
        rows = active
        ax = np.argmin(t_max[rows], axis=1)  # ties pick x, then y, then z
        cur[rows, ax] += step[rows, ax]
        rem = remaining[rows, ax] - 1
        remaining[rows, ax] = rem
        t_max[rows, ax] = np.where(rem > 0, t_max[rows, ax] + t_delta[rows, ax], np.inf)
        total[rows] -= 1
        rows = rows[total[rows] > 0]
        if rows.size:
            keys_out.append(pack(cur[rows]))
            idx_out.append(rows)
        active = rows

    if include_end:
        keys_out.append(pack(last))
        idx_out.append(all_idx)

    if not keys_out:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    return np.concatenate(keys_out), np.concatenate(idx_out)
