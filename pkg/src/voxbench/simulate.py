"""Synthetic collaborative cell: static scene, range sensors, episode recording.

The cell is a 4.0 x 2.8 x 2.29 m workspace with a floor, a central plate,
and a gantry frame, all axis-aligned boxes. Three rotating lidars and one
downward depth camera sample the scene and the moving actor; range noise is
Gaussian along the ray and seeded, so identical configurations produce
byte-identical recordings. Rendering different sensors or timesteps is
side-effect free; the recording writer is sequential.
"""
from __future__ import annotations

import functools
import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .actor import ActorSkeleton, actor_pose_at
from .episode import EpisodeHeader, EpisodeWriter, SensorFrame, SkeletonPose
from .geometry import Aabb, Cylinder, Prism, raycast_scene, rotation_y, rotation_z
from .grid import GridSpec

CELL_SIZE = (4.0, 2.8, 2.29)
SKELETON_RATE_HZ = 30.0


# ---------------------------------------------------------------------------
# Scene
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Scene:
    cell: tuple[float, float, float]
    boxes: tuple[Aabb, ...]

    def primitives(self) -> tuple[Aabb, ...]:
        return self.boxes


def default_scene() -> Scene:
    cx, cy = CELL_SIZE[0] / 2.0, CELL_SIZE[1] / 2.0
    boxes = [
        # Floor slab; the top face is the walking plane z = 0.
        Aabb((0.0, 0.0, -0.05), (CELL_SIZE[0], CELL_SIZE[1], 0.0)),
        # Central occlusion plate: 0.8 long x 0.6 wide x 1.0 high.
        Aabb((cx - 0.4, cy - 0.3, 0.0), (cx + 0.4, cy + 0.3, 1.0)),
    ]
    # Gantry: four legs plus two top beams along the cell length.
    for lx in (0.35, CELL_SIZE[0] - 0.35):
        for ly in (0.35, CELL_SIZE[1] - 0.35):
            boxes.append(Aabb((lx - 0.04, ly - 0.04, 0.0), (lx + 0.04, ly + 0.04, 2.2)))
    for by in (0.35, CELL_SIZE[1] - 0.35):
        boxes.append(Aabb((0.31, by - 0.04, 2.12), (3.69, by + 0.04, 2.2)))
    return Scene(cell=CELL_SIZE, boxes=tuple(boxes))


def scene_hash(scene: Scene) -> str:
    payload = {
        "cell": list(scene.cell),
        "boxes": [[list(b.lo), list(b.hi)] for b in scene.boxes],
    }
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Sensors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SensorModel:
    """Raycast range sensor: a rotating lidar or an organized depth camera."""

    sensor_id: int
    name: str
    kind: str  # "lidar" | "depth"
    position: tuple[float, float, float]
    yaw_deg: float
    pitch_deg: float  # positive pitches the forward axis down
    rate_hz: float
    max_range: float = 10.0
    noise_sigma: float = 0.0
    # lidar geometry
    rings: int = 16
    azimuth_steps: int = 180
    vfov_deg: float = 40.0
    # depth-camera geometry
    width: int = 80
    height: int = 60
    hfov_deg: float = 60.0
    vfov_cam_deg: float = 45.0
    pool_factor: int = 2

    def __post_init__(self):
        if self.rate_hz <= 0:
            raise ValueError("sensor rate must be positive")
        if self.kind not in ("lidar", "depth"):
            raise ValueError(f"unknown sensor kind {self.kind!r}")
        if self.kind == "depth" and not (
            0.0 < self.hfov_deg < 180.0 and 0.0 < self.vfov_cam_deg < 180.0
        ):
            raise ValueError("depth camera FOV must lie in (0, 180) degrees")

    def frame_count(self, duration_s: float) -> int:
        return max(0, math.ceil(duration_s * self.rate_hz - 1e-9))

    def directions(self) -> np.ndarray:
        return _sensor_directions(self)

    def origin(self) -> np.ndarray:
        return np.array(self.position, dtype=np.float64)


@functools.lru_cache(maxsize=32)
def _sensor_directions(sensor: SensorModel) -> np.ndarray:
    mount = rotation_z(math.radians(sensor.yaw_deg)) @ rotation_y(
        math.radians(sensor.pitch_deg)
    )
    if sensor.kind == "lidar":
        half = math.radians(sensor.vfov_deg) / 2.0
        elevations = np.linspace(-half, half, sensor.rings)
        azimuths = np.linspace(0.0, 2.0 * math.pi, sensor.azimuth_steps, endpoint=False)
        el, az = np.meshgrid(elevations, azimuths, indexing="ij")
        dirs = np.stack(
            [np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)], axis=-1
        ).reshape(-1, 3)
    else:
        # Pixel-center tangent grid; forward is +x, u right (-y), v down (-z).
        tan_u = math.tan(math.radians(sensor.hfov_deg) / 2.0)
        tan_v = math.tan(math.radians(sensor.vfov_cam_deg) / 2.0)
        u = tan_u * ((2.0 * np.arange(sensor.width) + 1.0) / sensor.width - 1.0)
        v = tan_v * ((2.0 * np.arange(sensor.height) + 1.0) / sensor.height - 1.0)
        vv, uu = np.meshgrid(v, u, indexing="ij")
        dirs = np.stack([np.ones_like(uu), -uu, -vv], axis=-1).reshape(-1, 3)
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    out = dirs @ mount.T
    out.setflags(write=False)
    return out


def default_sensors(noise_sigma: float = 0.005, max_range: float = 10.0) -> list[SensorModel]:
    """Three lidars at top corners/edge pitched down 25 degrees plus one
    depth camera at the cell top center looking straight down.

    The lidar ring fan is 40 degrees tall so the beams blanket the actor at
    cell-scale distances instead of skipping over it."""
    common = dict(noise_sigma=noise_sigma, max_range=max_range)
    return [
        SensorModel(0, "lidar_a", "lidar", (0.08, 0.08, 2.2), 45.0, 25.0, 10.0, **common),
        SensorModel(1, "lidar_b", "lidar", (3.92, 2.72, 2.2), 225.0, 25.0, 10.0, **common),
        SensorModel(2, "lidar_c", "lidar", (2.0, 0.08, 2.2), 90.0, 25.0, 10.0, **common),
        SensorModel(3, "camera", "depth", (2.0, 1.4, 2.25), 0.0, 90.0, 30.0, **common),
    ]


def sensor_meta(sensor: SensorModel) -> dict:
    meta = {
        "id": sensor.sensor_id,
        "name": sensor.name,
        "kind": sensor.kind,
        "position": list(sensor.position),
        "yaw_deg": sensor.yaw_deg,
        "pitch_deg": sensor.pitch_deg,
        "rate_hz": sensor.rate_hz,
        "max_range": sensor.max_range,
    }
    if sensor.kind == "lidar":
        meta.update(rings=sensor.rings, azimuth_steps=sensor.azimuth_steps, vfov_deg=sensor.vfov_deg)
    else:
        meta.update(
            width=sensor.width,
            height=sensor.height,
            hfov_deg=sensor.hfov_deg,
            vfov_deg=sensor.vfov_cam_deg,
            pool_factor=sensor.pool_factor,
        )
    return meta


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def _ranges(sensor: SensorModel, primitives, rng: np.random.Generator | None) -> np.ndarray:
    dirs = sensor.directions()
    t = raycast_scene(sensor.origin(), dirs, primitives)
    if sensor.noise_sigma > 0.0 and rng is not None:
        t = t + rng.normal(0.0, sensor.noise_sigma, size=len(t))
    t[~np.isfinite(t) | (t > sensor.max_range)] = np.inf
    return t


def render_sensor(
    sensor: SensorModel,
    scene: Scene,
    skeleton: ActorSkeleton | None,
    t_ns: int,
    rng: np.random.Generator | None = None,
) -> SensorFrame:
    """One point per ray that hits scene or actor geometry within range."""
    primitives = list(scene.primitives())
    if skeleton is not None:
        primitives.extend(skeleton.primitives())
    t = _ranges(sensor, primitives, rng)
    hit = np.isfinite(t)
    points = sensor.origin() + sensor.directions()[hit] * t[hit, None]
    return SensorFrame(sensor_id=sensor.sensor_id, t_ns=t_ns, points=points)


def render_depth_organized(
    sensor: SensorModel,
    scene: Scene,
    skeleton: ActorSkeleton | None,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Organized (H, W, 3) cloud plus validity mask for a depth camera."""
    if sensor.kind != "depth":
        raise ValueError("organized rendering requires a depth camera")
    primitives = list(scene.primitives())
    if skeleton is not None:
        primitives.extend(skeleton.primitives())
    t = _ranges(sensor, primitives, rng)
    valid = np.isfinite(t)
    points = sensor.origin() + sensor.directions() * np.where(valid, t, 0.0)[:, None]
    shape = (sensor.height, sensor.width)
    return points.reshape(*shape, 3), valid.reshape(shape)


def mean_pool_downsample(points: np.ndarray, valid: np.ndarray, factor: int) -> np.ndarray:
    """Mean-pool an organized cloud: every factor x factor block of valid
    points collapses to their componentwise mean; empty blocks emit nothing."""
    if factor < 1:
        raise ValueError("pooling factor must be >= 1")
    h, w = valid.shape
    if h % factor or w % factor:
        raise ValueError(f"pooling factor {factor} must divide {w}x{h}")
    pts = np.where(valid[..., None], points, 0.0)
    blocks = pts.reshape(h // factor, factor, w // factor, factor, 3)
    sums = blocks.sum(axis=(1, 3))
    counts = valid.reshape(h // factor, factor, w // factor, factor).sum(axis=(1, 3))
    keep = counts > 0
    return sums[keep] / counts[keep][:, None]


def ground_truth_points(points: np.ndarray, skeleton: ActorSkeleton) -> np.ndarray:
    """Subset of the points lying inside any actor segment volume."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        return pts
    return pts[actor_membership_mask(pts, skeleton)]


def actor_membership_mask(points: np.ndarray, skeleton: ActorSkeleton) -> np.ndarray:
    from .geometry import points_in_cylinder, points_in_prism

    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    mask = np.zeros(len(pts), dtype=bool)
    for prim in skeleton.primitives():
        todo = ~mask
        if not todo.any():
            break
        if isinstance(prim, Cylinder):
            mask[todo] |= points_in_cylinder(pts[todo], prim)
        else:
            mask[todo] |= points_in_prism(pts[todo], prim)
    return mask


# ---------------------------------------------------------------------------
# Episode recording
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EpisodeConfig:
    duration_s: float = 96.0
    seed: int = 0
    noise_sigma: float = 0.005
    grid_resolution: float = 0.1
    sensors: tuple[SensorModel, ...] = field(default_factory=tuple)

    def resolved_sensors(self) -> list[SensorModel]:
        sensors = list(self.sensors) or default_sensors(noise_sigma=self.noise_sigma)
        return [replace(s, noise_sigma=self.noise_sigma) for s in sensors]


def time_ns(frame_index: int, rate_hz: float) -> int:
    return int(round(frame_index * 1_000_000_000 / rate_hz))


def record_episode(config: EpisodeConfig, path) -> EpisodeHeader:
    """Render and write a full episode; identical config and seed produce
    byte-identical files."""
    scene = default_scene()
    sensors = config.resolved_sensors()
    grid = GridSpec(origin=(0.0, 0.0, 0.0), resolution=config.grid_resolution)

    header = EpisodeHeader(
        grid_origin=grid.origin,
        grid_resolution=grid.resolution,
        cell_size=scene.cell,
        sensors=[sensor_meta(s) for s in sensors],
        scene_hash=scene_hash(scene),
        seed=config.seed,
        duration_s=config.duration_s,
        noise_sigma=config.noise_sigma,
        extras={"skeleton_rate_hz": SKELETON_RATE_HZ},
    )

    # Schedule: skeleton poses at a fixed rate plus every sensor frame,
    # ordered by time with poses written before frames at equal stamps.
    events: list[tuple[int, int, int]] = []
    n_skel = max(1, math.ceil(config.duration_s * SKELETON_RATE_HZ - 1e-9))
    for k in range(n_skel):
        events.append((time_ns(k, SKELETON_RATE_HZ), 0, -1))
    for s_idx, sensor in enumerate(sensors):
        for k in range(sensor.frame_count(config.duration_s)):
            events.append((time_ns(k, sensor.rate_hz), 1, s_idx))
    events.sort()

    rng = np.random.default_rng(config.seed)
    pose_cache: dict[int, ActorSkeleton] = {}

    def skeleton_at(t_ns: int) -> ActorSkeleton:
        pose = pose_cache.get(t_ns)
        if pose is None:
            pose = actor_pose_at(t_ns / 1e9, duration_s=max(config.duration_s, t_ns / 1e9))
            pose_cache.clear()
            pose_cache[t_ns] = pose
        return pose

    with EpisodeWriter(path, header) as writer:
        if config.duration_s <= 0:
            return header
        for t_ns, etype, s_idx in events:
            if etype == 0:
                pose = skeleton_at(t_ns)
                writer.write_skeleton(
                    SkeletonPose(
                        t_ns=t_ns,
                        joints={
                            name: tuple(float(v) for v in xyz)
                            for name, xyz in pose.joints.items()
                        },
                    )
                )
            else:
                sensor = sensors[s_idx]
                pose = skeleton_at(t_ns)
                if sensor.kind == "depth":
                    organized, valid = render_depth_organized(sensor, scene, pose, rng)
                    points = mean_pool_downsample(organized, valid, sensor.pool_factor)
                    frame = SensorFrame(sensor.sensor_id, t_ns, points)
                else:
                    frame = render_sensor(sensor, scene, pose, t_ns, rng)
                writer.write_frame(frame)
    return header
