"""Episode recording format: a binary stream of sensor frames and actor poses.

Layout (all integers little-endian):

* magic bytes ``VOEP``, then format version as u32
* one UTF-8 JSON header line terminated by ``\\n`` (grid spec, sensor list,
  scene hash, seed, duration)
* records, each: type u8 (0 = sensor frame, 1 = skeleton pose),
  timestamp u64 in nanoseconds, payload length u32, payload bytes

Sensor frame payload: sensor id u16, point count u32, then xyz float32
triplets. Skeleton payload: joint count u16, then per joint a u8 name
length, the UTF-8 name, and xyz float32.

Writing the same configuration and seed twice produces byte-identical files.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"VOEP"
FORMAT_VERSION = 1

RECORD_SENSOR_FRAME = 0
RECORD_SKELETON_POSE = 1

_RECORD_HEAD = struct.Struct("<BQI")
_FRAME_HEAD = struct.Struct("<HI")
_U16 = struct.Struct("<H")


@dataclass(frozen=True)
class SensorFrame:
    """One point cloud in the cell frame, tagged with its source sensor."""

    sensor_id: int
    t_ns: int
    points: np.ndarray  # (N, 3) float32

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float32).reshape(-1, 3)
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class SkeletonPose:
    t_ns: int
    joints: dict[str, tuple[float, float, float]]


@dataclass
class EpisodeHeader:
    grid_origin: tuple[float, float, float]
    grid_resolution: float
    cell_size: tuple[float, float, float]
    sensors: list[dict]
    scene_hash: str
    seed: int
    duration_s: float
    noise_sigma: float
    extras: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "cell_size": list(self.cell_size),
            "duration_s": self.duration_s,
            "grid": {"origin": list(self.grid_origin), "resolution": self.grid_resolution},
            "noise_sigma": self.noise_sigma,
            "scene_hash": self.scene_hash,
            "seed": self.seed,
            "sensors": self.sensors,
        }
        payload.update(self.extras)
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "EpisodeHeader":
        data = json.loads(text)
        known = {
            "cell_size",
            "duration_s",
            "grid",
            "noise_sigma",
            "scene_hash",
            "seed",
            "sensors",
        }
        return cls(
            grid_origin=tuple(data["grid"]["origin"]),
            grid_resolution=float(data["grid"]["resolution"]),
            cell_size=tuple(data["cell_size"]),
            sensors=list(data["sensors"]),
            scene_hash=str(data["scene_hash"]),
            seed=int(data["seed"]),
            duration_s=float(data["duration_s"]),
            noise_sigma=float(data["noise_sigma"]),
            extras={k: v for k, v in data.items() if k not in known},
        )


class EpisodeWriter:
    """Sequential, order-preserving writer for episode files."""

    def __init__(self, path: str | Path, header: EpisodeHeader):
        self._fh = open(path, "wb")
        self._fh.write(MAGIC)
        self._fh.write(struct.pack("<I", FORMAT_VERSION))
        self._fh.write(header.to_json().encode("utf-8"))
        self._fh.write(b"\n")

    def write_frame(self, frame: SensorFrame) -> None:
        pts = np.ascontiguousarray(frame.points, dtype="<f4")
        payload = _FRAME_HEAD.pack(frame.sensor_id, len(pts)) + pts.tobytes()
        self._write_record(RECORD_SENSOR_FRAME, frame.t_ns, payload)

    def write_skeleton(self, pose: SkeletonPose) -> None:
        parts = [_U16.pack(len(pose.joints))]
        for name, xyz in pose.joints.items():
            encoded = name.encode("utf-8")
            parts.append(struct.pack("<B", len(encoded)))
            parts.append(encoded)
            parts.append(struct.pack("<3f", *xyz))
        self._write_record(RECORD_SKELETON_POSE, pose.t_ns, b"".join(parts))

    def _write_record(self, rtype: int, t_ns: int, payload: bytes) -> None:
        self._fh.write(_RECORD_HEAD.pack(rtype, t_ns, len(payload)))
        self._fh.write(payload)

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_header(path: str | Path) -> EpisodeHeader:
    with open(path, "rb") as fh:
        _check_magic(fh)
        return EpisodeHeader.from_json(_read_header_line(fh))


def _check_magic(fh) -> None:
    magic = fh.read(4)
    if magic != MAGIC:
        raise ValueError(f"not an episode file (magic {magic!r})")
    (version,) = struct.unpack("<I", fh.read(4))
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported episode format version {version}")


def _read_header_line(fh) -> str:
    raw = bytearray()
    while True:
        b = fh.read(1)
        if not b:
            raise ValueError("truncated episode header")
        if b == b"\n":
            break
        raw.extend(b)
    return raw.decode("utf-8")


def read_records(path: str | Path):
    """Yield SensorFrame and SkeletonPose records in file order."""
    with open(path, "rb") as fh:
        _check_magic(fh)
        _read_header_line(fh)
        while True:
            head = fh.read(_RECORD_HEAD.size)
            if not head:
                return
            if len(head) < _RECORD_HEAD.size:
                raise ValueError("truncated record header")
            rtype, t_ns, length = _RECORD_HEAD.unpack(head)
            payload = fh.read(length)
            if len(payload) < length:
                raise ValueError("truncated record payload")
            if rtype == RECORD_SENSOR_FRAME:
                sensor_id, count = _FRAME_HEAD.unpack_from(payload)
                pts = np.frombuffer(
                    payload, dtype="<f4", count=count * 3, offset=_FRAME_HEAD.size
                ).reshape(count, 3)
                yield SensorFrame(sensor_id=sensor_id, t_ns=t_ns, points=pts.copy())
            elif rtype == RECORD_SKELETON_POSE:
                (count,) = _U16.unpack_from(payload)
                offset = _U16.size
                joints = {}
                for _ in range(count):
                    name_len = payload[offset]
                    offset += 1
                    name = payload[offset : offset + name_len].decode("utf-8")
                    offset += name_len
                    xyz = struct.unpack_from("<3f", payload, offset)
                    offset += 12
                    joints[name] = xyz
                yield SkeletonPose(t_ns=t_ns, joints=joints)
            else:
                raise ValueError(f"unknown record type {rtype}")


def load_episode(path: str | Path) -> tuple[EpisodeHeader, list]:
    return read_header(path), list(read_records(path))
