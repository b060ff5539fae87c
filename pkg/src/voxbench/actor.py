"""Parametric humanoid skeleton and its elliptical walk through the cell.

The skeleton is rigid (no gait articulation): joints are fixed in a local
frame facing +x and get rotated to face the path tangent, then translated so
the root follows an ellipse centered in the cell. Limb segments are bounded
by cylinders, the torso by rectangular prisms whose sideways axis follows
the hip line.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Cylinder, Prism, rotation_z

STANDING_HEIGHT = 1.75
LIMB_RADIUS = 0.1
TORSO_DEPTH = 0.2  # fore-aft
TORSO_BREADTH = 0.3  # along the hip line

# Local frame: x forward, y left, z up, origin at the floor under the pelvis.
_LOCAL_JOINTS: dict[str, tuple[float, float, float]] = {
    "Head": (0.0, 0.0, 1.75),
    "Neck": (0.0, 0.0, 1.50),
    "Spine": (0.0, 0.0, 1.25),
    "LowerBack": (0.0, 0.0, 1.05),
    "LeftShoulder": (0.0, 0.20, 1.45),
    "RightShoulder": (0.0, -0.20, 1.45),
    "LeftElbow": (0.0, 0.25, 1.12),
    "RightElbow": (0.0, -0.25, 1.12),
    "LeftWrist": (0.0, 0.27, 0.82),
    "RightWrist": (0.0, -0.27, 0.82),
    "LeftHip": (0.0, 0.12, 0.95),
    "RightHip": (0.0, -0.12, 0.95),
    "LeftKnee": (0.0, 0.13, 0.50),
    "RightKnee": (0.0, -0.13, 0.50),
    "LeftAnkle": (0.0, 0.13, 0.08),
    "RightAnkle": (0.0, -0.13, 0.08),
}

JOINT_NAMES = tuple(_LOCAL_JOINTS)

_CYLINDER_SEGMENTS = (
    ("Neck", "Head"),
    ("LeftShoulder", "LeftElbow"),
    ("LeftElbow", "LeftWrist"),
    ("RightShoulder", "RightElbow"),
    ("RightElbow", "RightWrist"),
    ("LeftHip", "LeftKnee"),
    ("LeftKnee", "LeftAnkle"),
    ("RightHip", "RightKnee"),
    ("RightKnee", "RightAnkle"),
)

_PRISM_SEGMENTS = (
    ("Neck", "Spine"),
    ("Spine", "LowerBack"),
)


@dataclass(frozen=True)
class ActorSkeleton:
    """Named joint positions in the cell frame."""

    joints: dict[str, np.ndarray]

    def primitives(self) -> list:
        """Bounding volumes for every segment: limb cylinders plus torso
        prisms, each fully containing its joint-to-joint line."""
        j = self.joints
        prims: list = [
            Cylinder(bottom=j[a], top=j[b], radius=LIMB_RADIUS)
            for a, b in _CYLINDER_SEGMENTS
        ]
        hip_axis = j["LeftHip"] - j["RightHip"]
        hip_axis = hip_axis / np.linalg.norm(hip_axis)
        for a, b in _PRISM_SEGMENTS + (("LowerBack", None),):
            top = j[a]
            bottom = j[b] if b is not None else (j["LeftHip"] + j["RightHip"]) / 2.0
            up = top - bottom
            height = float(np.linalg.norm(up))
            up = up / height
            fore = np.cross(hip_axis, up)
            fore = fore / np.linalg.norm(fore)
            side = np.cross(up, fore)
            prims.append(
                Prism(
                    center=(top + bottom) / 2.0,
                    axes=np.stack([fore, side, up]),
                    sizes=(TORSO_DEPTH, TORSO_BREADTH, height),
                )
            )
        return prims

    def points(self) -> np.ndarray:
        return np.stack([self.joints[name] for name in JOINT_NAMES])


@dataclass(frozen=True)
class EllipsePath:
    """Root trajectory: an ellipse around the cell center, one lap per period."""

    center: tuple[float, float] = (2.0, 1.4)
    semi_major: float = 2.0
    semi_minor: float = 1.0
    period_s: float = 48.0

    def root_at(self, t: float) -> tuple[np.ndarray, float]:
        theta = 2.0 * math.pi * t / self.period_s
        pos = np.array(
            [
                self.center[0] + self.semi_major * math.cos(theta),
                self.center[1] + self.semi_minor * math.sin(theta),
                0.0,
            ]
        )
        heading = math.atan2(
            self.semi_minor * math.cos(theta), -self.semi_major * math.sin(theta)
        )
        return pos, heading


def actor_pose_at(
    t: float,
    duration_s: float = 96.0,
    path: EllipsePath = EllipsePath(),
) -> ActorSkeleton:
    """Skeleton pose at time ``t``: root on the ellipse, facing the tangent."""
    if not (0.0 <= t <= duration_s):
        raise ValueError(f"time {t} outside the episode [0, {duration_s}]")
    root, heading = path.root_at(t)
    rot = rotation_z(heading)
    joints = {
        name: root + rot @ np.array(local)
        for name, local in _LOCAL_JOINTS.items()
    }
    return ActorSkeleton(joints=joints)
