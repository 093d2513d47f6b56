"""Robot-aware re-ranking of grasp proposals.

Each grasp gets a direction score: the sigmoid of the cosine between the
base-plane direction from the robot origin to the grasp and the base-plane
direction in which the gripper travels onto the object. The final ranking
score is that direction score times the network confidence.

Grasp frames here put the gripper base at ``c + d a``, so the approach axis
``a`` points away from the object and the gripper travels along ``-a``. A
grasp reached straight out from the robot therefore scores above 0.5.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError
from .grasp import GraspPose

DEGENERATE_NORM = 1e-6


@dataclass(frozen=True)
class RobotFrame:
    origin: np.ndarray = np.zeros(3)
    z_axis: np.ndarray = np.array([0.0, 0.0, 1.0])
    R_cr: np.ndarray = np.eye(3)  # camera -> robot rotation

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=np.float64).reshape(3)
        z = np.asarray(self.z_axis, dtype=np.float64).reshape(3)
        R = np.asarray(self.R_cr, dtype=np.float64).reshape(3, 3)
        if abs(np.linalg.norm(z) - 1.0) > 1e-9:
            raise ValidationError("robot z-axis must be a unit vector")
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-9 or abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ValidationError("R_cr must be a proper rotation")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "z_axis", z)
        object.__setattr__(self, "R_cr", R)

    def to_json(self) -> dict:
        return {"origin": self.origin.tolist(), "z_axis": self.z_axis.tolist(), "R_cr": self.R_cr.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "RobotFrame":
        return cls(np.array(obj["origin"]), np.array(obj["z_axis"]), np.array(obj["R_cr"]))

    @classmethod
    def load(cls, path) -> "RobotFrame":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def project_to_base_plane(v, z_axis) -> tuple[np.ndarray, bool]:
    """Unit in-plane direction of ``v`` and a flag that is True when the projection degenerates."""
    v = np.asarray(v, dtype=np.float64)
    z = np.asarray(z_axis, dtype=np.float64)
    resid = v - (v @ z) * z
    n = np.linalg.norm(resid)
    if n < DEGENERATE_NORM:
        return np.zeros(3), True
    return resid / n, False


def _sigmoid(x: float) -> float:
    return 1.0 / (1.0 + np.exp(-x)) if x >= 0 else np.exp(x) / (1.0 + np.exp(x))


def travel_direction(grasp: GraspPose) -> np.ndarray:
    """Direction the gripper moves to close on its contact (camera frame)."""
    return -grasp.approach


def direction_score(grasp: GraspPose, frame: RobotFrame) -> float:
    """Sigmoid of the base-plane cosine; 0.5 when either direction degenerates."""
    g_robot = frame.R_cr @ grasp.t
    A, bad_a = project_to_base_plane(g_robot - frame.origin, frame.z_axis)
    a, bad_b = project_to_base_plane(frame.R_cr @ travel_direction(grasp), frame.z_axis)
    if bad_a or bad_b:
        return 0.5
    return float(_sigmoid(float(A @ a)))


def apply_filter(grasps, frame: RobotFrame) -> list[GraspPose]:
    """Copies of ``grasps`` with ``filtered_score`` set, sorted by it (descending, stable)."""
    out = [replace(g, filtered_score=direction_score(g, frame) * g.score) for g in grasps]
    out.sort(key=lambda g: -g.filtered_score)
    return out
