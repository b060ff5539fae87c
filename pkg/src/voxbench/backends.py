"""Common contract over the three occupancy backends plus a factory.

Every backend integrates one cloud from one sensor origin per call and
reports its occupied voxels, either as a set of keys or as a sorted packed
array for bulk consumers. ``reset`` returns the map to its initial state.
"""
from __future__ import annotations

from typing import Protocol, runtime_checkable

import numpy as np

from .grid import GridSpec, VoxelSet
from .octree_map import OctreeMap
from .skiplist_map import SkiMapTree
from .tsdf_map import TsdfMap

BACKEND_NAMES = ("octree", "skiplist", "tsdf")


@runtime_checkable
class OccupancyBackend(Protocol):
    spec: GridSpec

    def integrate_cloud(self, sensor_origin, points) -> None: ...

    def occupied_voxels(self) -> VoxelSet: ...

    def occupied_packed(self) -> np.ndarray: ...

    def occupied_count(self) -> int: ...

    def reset(self) -> None: ...


def create_backend(
    name: str,
    spec: GridSpec,
    params: dict,
    cell_size=(4.0, 2.8, 2.29),
    seed: int = 0,
):
    """Instantiate a backend by name with already-validated parameters."""
    if name == "octree":
        return OctreeMap(
            spec,
            extent=cell_size,
            hit_prob=params.get("hit_probability", 1.0),
            miss_prob=params.get("miss_probability", 0.4),
            occupancy_threshold=params.get("occupancy_threshold", 0.5),
            clamp_min=params.get("clamp_min", -2.0),
            clamp_max=params.get("clamp_max", 3.5),
        )
    if name == "skiplist":
        return SkiMapTree(
            spec,
            min_voxel_weight=params.get("minimum_voxel_weight", 1),
            decrement_mode=params.get("decrement_mode", "none"),
            seed=seed,
        )
    if name == "tsdf":
        return TsdfMap(
            spec,
            truncation_distance=params.get("truncation_distance", 0.1),
            constant_weight=params.get("constant_weight", False),
            max_weight=params.get("max_weight", 100.0),
            occupied_distance_factor=params.get("occupied_distance_factor", 0.5),
            space_carving=params.get("space_carving", True),
        )
    raise ValueError(f"unknown backend {name!r}; expected one of {BACKEND_NAMES}")
