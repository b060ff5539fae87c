import struct

import numpy as np
import pytest

from voxbench.episode import (
    FORMAT_VERSION,
    MAGIC,
    EpisodeHeader,
    EpisodeWriter,
    SensorFrame,
    SkeletonPose,
    load_episode,
    read_header,
    read_records,
)


def make_header(**overrides):
    fields = dict(
        grid_origin=(0.0, 0.0, 0.0),
        grid_resolution=0.1,
        cell_size=(4.0, 2.8, 2.29),
        sensors=[{"id": 0, "name": "lidar_a", "kind": "lidar", "position": [0, 0, 2]}],
        scene_hash="abc123",
        seed=7,
        duration_s=1.0,
        noise_sigma=0.0,
    )
    fields.update(overrides)
    return EpisodeHeader(**fields)


def test_roundtrip(tmp_path):
    path = tmp_path / "ep.voep"
    pts = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]], dtype=np.float32)
    with EpisodeWriter(path, make_header()) as writer:
        writer.write_skeleton(SkeletonPose(t_ns=0, joints={"Head": (0.0, 0.0, 1.75)}))
        writer.write_frame(SensorFrame(sensor_id=0, t_ns=5, points=pts))

    header, records = load_episode(path)
    assert header.seed == 7
    assert header.scene_hash == "abc123"
    assert len(records) == 2
    pose, frame = records
    assert isinstance(pose, SkeletonPose)
    assert pose.joints["Head"] == pytest.approx((0.0, 0.0, 1.75))
    assert isinstance(frame, SensorFrame)
    assert frame.sensor_id == 0 and frame.t_ns == 5
    assert np.array_equal(frame.points, pts)


def test_binary_layout_is_exact(tmp_path):
    path = tmp_path / "ep.voep"
    pts = np.array([[1.5, -2.0, 0.25]], dtype=np.float32)
    header = make_header()
    with EpisodeWriter(path, header) as writer:
        writer.write_frame(SensorFrame(sensor_id=3, t_ns=123456789, points=pts))

    blob = path.read_bytes()
    assert blob[:4] == MAGIC == b"VOEP"
    (version,) = struct.unpack_from("<I", blob, 4)
    assert version == FORMAT_VERSION
    newline = blob.index(b"\n", 8)
    json_header = blob[8:newline].decode("utf-8")
    assert json_header == header.to_json()

    offset = newline + 1
    rtype, t_ns, length = struct.unpack_from("<BQI", blob, offset)
    assert rtype == 0
    assert t_ns == 123456789
    offset += 13
    sensor_id, count = struct.unpack_from("<HI", blob, offset)
    assert sensor_id == 3 and count == 1
    xyz = struct.unpack_from("<3f", blob, offset + 6)
    assert xyz == pytest.approx((1.5, -2.0, 0.25))
    assert length == 6 + 12
    assert offset + length == len(blob)


def test_skeleton_payload_layout(tmp_path):
    path = tmp_path / "ep.voep"
    with EpisodeWriter(path, make_header()) as writer:
        writer.write_skeleton(SkeletonPose(t_ns=42, joints={"Hip": (1.0, 2.0, 3.0)}))
    blob = path.read_bytes()
    offset = blob.index(b"\n") + 1
    rtype, t_ns, length = struct.unpack_from("<BQI", blob, offset)
    assert rtype == 1 and t_ns == 42
    offset += 13
    (count,) = struct.unpack_from("<H", blob, offset)
    assert count == 1
    name_len = blob[offset + 2]
    assert name_len == 3
    assert blob[offset + 3 : offset + 6] == b"Hip"
    xyz = struct.unpack_from("<3f", blob, offset + 6)
    assert xyz == pytest.approx((1.0, 2.0, 3.0))


def test_header_json_stable_and_sorted(tmp_path):
    header = make_header(extras={"skeleton_rate_hz": 30.0})
    text = header.to_json()
    assert text == EpisodeHeader.from_json(text).to_json()
    keys = list(__import__("json").loads(text))
    assert keys == sorted(keys)


def test_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.voep"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(ValueError, match="magic"):
        read_header(path)


def test_rejects_bad_version(tmp_path):
    path = tmp_path / "bad.voep"
    path.write_bytes(MAGIC + struct.pack("<I", 99) + b"{}\n")
    with pytest.raises(ValueError, match="version"):
        read_header(path)


def test_rejects_truncated_record(tmp_path):
    path = tmp_path / "trunc.voep"
    with EpisodeWriter(path, make_header()) as writer:
        writer.write_frame(SensorFrame(0, 1, np.zeros((2, 3), dtype=np.float32)))
    blob = path.read_bytes()
    path.write_bytes(blob[:-4])
    with pytest.raises(ValueError, match="truncated"):
        list(read_records(path))
