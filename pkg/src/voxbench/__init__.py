"""voxbench: volumetric occupancy detection benchmark.

Three interchangeable voxel-mapping backends (probabilistic octree, tree of
skiplists, TSDF with an ESDF query surface), a deterministic synthetic cell
simulator with a moving humanoid, and an automated ground-truth plus
precision/recall evaluation pipeline.
"""
from .backends import BACKEND_NAMES, OccupancyBackend, create_backend
from .esdf import EsdfField, EsdfVoxel, esdf_from_tsdf
from .evaluate import (
    ApproximateTimeSync,
    ClassifiedVoxels,
    FrameEvaluation,
    FusedFrame,
    MetricsReport,
    aggregate,
    align_map_output,
    classify_voxels,
    evaluate_episode,
    evaluate_frame,
    f_beta,
    precision,
    recall,
    run_pipeline,
)
from .grid import GridSpec, VoxelKey, quantize, traverse_ray, voxel_center, voxelize
from .octree_map import OctreeMap, log_odds
from .simulate import (
    EpisodeConfig,
    SensorModel,
    default_scene,
    default_sensors,
    ground_truth_points,
    mean_pool_downsample,
    record_episode,
    render_sensor,
)
from .skiplist_map import SkipList, SkiMapTree
from .tsdf_map import TsdfMap, point_weight

__version__ = "0.1.0"

__all__ = [
    "ApproximateTimeSync",
    "BACKEND_NAMES",
    "ClassifiedVoxels",
    "EpisodeConfig",
    "EsdfField",
    "EsdfVoxel",
    "FusedFrame",
    "GridSpec",
    "MetricsReport",
    "OccupancyBackend",
    "OctreeMap",
    "SensorModel",
    "SkiMapTree",
    "SkipList",
    "TsdfMap",
    "VoxelKey",
    "aggregate",
    "align_map_output",
    "classify_voxels",
    "create_backend",
    "default_scene",
    "default_sensors",
    "esdf_from_tsdf",
    "evaluate_episode",
    "evaluate_frame",
    "f_beta",
    "ground_truth_points",
    "log_odds",
    "mean_pool_downsample",
    "point_weight",
    "precision",
    "quantize",
    "recall",
    "record_episode",
    "render_sensor",
    "run_pipeline",
    "traverse_ray",
    "voxel_center",
    "voxelize",
]
