"""Truncated signed distance field integration over a sparse voxel store.

Each measured point updates the voxels whose centers project onto the ray
within one truncation distance of the measured range. Projective distances
are averaged with per-point weights that fall off quadratically with sensor
range and linearly behind the surface. Occupancy: a stored distance below a
fraction of the voxel size marks the voxel occupied. Single writer per map.
"""
from __future__ import annotations

import numpy as np

from .grid import (
    GridSpec,
    VoxelKey,
    VoxelSet,
    pack_key,
    pack_keys,
    traverse_segments,
    unpack_keys,
    voxel_centers,
)

# Cap on accumulated observation weight. Bounds the averaging inertia of
# long-observed voxels so a dynamic obstacle can still flip them; see the
# benchmark notes for the calibration.
DEFAULT_MAX_WEIGHT = 100.0
DEFAULT_OCCUPIED_FACTOR = 0.5


def point_weight(z_sensor: float, d_signed: float, truncation: float, constant: bool = False) -> float:
    """Observation weight for a voxel at signed distance ``d_signed`` from a
    surface measured at range ``z_sensor``.

    The weight falls off quadratically with the sensor range and, behind the
    surface (negative distances), linearly down to zero at the truncation
    distance; in front of the surface the ramp is 1. Constant mode drops the
    sensor-range term only, keeping the behind-surface ramp.
    """
    if z_sensor <= 0.0:
        raise ValueError("sensor range must be positive")
    base = 1.0 if constant else 1.0 / (z_sensor * z_sensor)
    if d_signed < 0.0:
        ramp = (truncation + d_signed) / truncation
        ramp = min(max(ramp, 0.0), 1.0)
        return base * ramp
    return base


class TsdfMap:
    """OccupancyBackend over a truncated signed distance field."""

    def __init__(
        self,
        spec: GridSpec,
        truncation_distance: float = 0.1,
        constant_weight: bool = False,
        max_weight: float = DEFAULT_MAX_WEIGHT,
        occupied_distance_factor: float = DEFAULT_OCCUPIED_FACTOR,
        space_carving: bool = True,
    ):
        if truncation_distance <= 0.0:
            raise ValueError("truncation distance must be positive")
        if max_weight <= 0.0:
            raise ValueError("max weight must be positive")
        if occupied_distance_factor <= 0.0:
            raise ValueError("occupied distance factor must be positive")
        self.spec = spec
        self.truncation_distance = float(truncation_distance)
        self.constant_weight = bool(constant_weight)
        self.max_weight = float(max_weight)
        self.occupied_distance_factor = float(occupied_distance_factor)
        self.space_carving = bool(space_carving)
        self._occupied_limit = self.occupied_distance_factor * spec.resolution
        # packed key -> [distance, weight]; only weighted voxels are stored.
        self._voxels: dict[int, list[float]] = {}
        self._occupied: set[int] = set()

    # -- integration -----------------------------------------------------------

    def integrate_cloud(self, sensor_origin, points) -> None:
        """Update voxels along each measurement ray with truncated projective
        distances. With space carving (the default) the whole segment from
        the sensor is updated, so free space accumulates truncated positive
        distances; otherwise only the band within one truncation distance of
        the endpoint is touched."""
        origin = np.asarray(sensor_origin, dtype=np.float64).reshape(3)
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if len(pts) == 0:
            return
        delta = pts - origin
        ranges = np.linalg.norm(delta, axis=1)
        ok = ranges > 1e-9
        pts, delta, ranges = pts[ok], delta[ok], ranges[ok]
        if len(pts) == 0:
            return
        dirs = delta / ranges[:, None]
        trunc = self.truncation_distance

        if self.space_carving:
            near = np.zeros_like(ranges)
        else:
            near = np.clip(ranges - trunc, 0.0, None)
        far = ranges + trunc
        starts = origin + dirs * near[:, None]
        ends = origin + dirs * far[:, None]
        packed, ray = traverse_segments(starts, ends, self.spec, include_end=True)
        if len(packed) == 0:
            return
        centers = voxel_centers(unpack_keys(packed), self.spec)
        along = np.einsum("ij,ij->i", centers - origin, dirs[ray])
        dist = ranges[ray] - along
        if self.space_carving:
            # Voxels in front of the band carry the truncated distance.
            keep = dist >= -trunc
            dist = np.minimum(dist, trunc)
        else:
            keep = np.abs(dist) <= trunc
        packed, ray, dist = packed[keep], ray[keep], dist[keep]
        if len(packed) == 0:
            return

        ramp = np.where(dist < 0.0, np.clip((trunc + dist) / trunc, 0.0, 1.0), 1.0)
        if self.constant_weight:
            weights = ramp
        else:
            base = 1.0 / (ranges * ranges)
            weights = base[ray] * ramp
        keep = weights > 0.0
        packed, ray, dist, weights = packed[keep], ray[keep], dist[keep], weights[keep]
        if len(packed) == 0:
            return

        # Deduplicate (voxel, ray) pairs introduced by include_end.
        pair_order = np.lexsort((ray, packed))
        packed, ray = packed[pair_order], ray[pair_order]
        dist, weights = dist[pair_order], weights[pair_order]
        pair_dup = np.zeros(len(packed), dtype=bool)
        pair_dup[1:] = (packed[1:] == packed[:-1]) & (ray[1:] == ray[:-1])
        packed, dist, weights = packed[~pair_dup], dist[~pair_dup], weights[~pair_dup]

        # Group per voxel; the grouped update equals applying the running
        # weighted average sequentially while the weight stays unclamped.
        boundaries = np.flatnonzero(np.r_[True, packed[1:] != packed[:-1]])
        sum_w = np.add.reduceat(weights, boundaries)
        sum_wd = np.add.reduceat(weights * dist, boundaries)
        unique_keys = packed[boundaries]
        counts = np.diff(np.r_[boundaries, len(packed)])

        voxels = self._voxels
        occupied = self._occupied
        limit = self._occupied_limit
        max_w = self.max_weight
        for pos, key, sw, swd, cnt in zip(
            boundaries.tolist(), unique_keys.tolist(), sum_w.tolist(), sum_wd.tolist(), counts.tolist()
        ):
            cell = voxels.get(key)
            if cell is None:
                cell = [0.0, 0.0]
                voxels[key] = cell
            d0, w0 = cell
            if w0 + sw <= max_w:
                new_d = (w0 * d0 + swd) / (w0 + sw)
                new_w = w0 + sw
            else:
                # Replay this voxel's updates one by one so the weight clamp
                # applies at the same step it would in a sequential pass.
                new_d, new_w = d0, w0
                for idx in range(pos, pos + cnt):
                    w = weights[idx]
                    new_d = (new_w * new_d + w * dist[idx]) / (new_w + w)
                    new_w = min(new_w + w, max_w)
            cell[0] = new_d
            cell[1] = new_w
            if new_d < limit:
                occupied.add(key)
            else:
                occupied.discard(key)

    # -- queries ----------------------------------------------------------------

    def voxel_state(self, key: VoxelKey) -> tuple[float, float] | None:
        """(distance, weight) for a stored voxel, else None."""
        cell = self._voxels.get(pack_key(key))
        if cell is None:
            return None
        return cell[0], cell[1]

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

    def observed_packed(self) -> np.ndarray:
        """Packed keys of every voxel carrying weight."""
        if not self._voxels:
            return np.empty(0, dtype=np.int64)
        return np.fromiter(self._voxels.keys(), dtype=np.int64)

    def reset(self) -> None:
        self._voxels.clear()
        self._occupied.clear()

    def occupied_by_scan(self) -> VoxelSet:
        """Exhaustive store scan applying the occupancy rule (verification)."""
        limit = self._occupied_limit
        out = set()
        for key, (d, w) in self._voxels.items():
            if w > 0.0 and d < limit:
                out.add(key)
        return set(map(tuple, unpack_keys(np.fromiter(out, dtype=np.int64)).tolist())) if out else set()
