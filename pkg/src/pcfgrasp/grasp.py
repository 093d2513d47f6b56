"""Contact-based parallel-jaw grasp representation.

A grasp is anchored at a contact point ``c`` on the object with a unit
baseline ``b`` (finger to finger), a unit approach ``a`` and an opening width
``w``. The gripper frame has columns ``[b, a x b, a]`` and origin
``t = c + (w/2) b + d a`` where ``d`` is the base-to-baseline offset.

Approach vectors point from the object towards the gripper base, so the
fingers reach along ``-a`` (negative gripper-frame z).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .cloud import Cloud
from .errors import DegenerateRotationError, ValidationError

N_WIDTH_BINS = 10


@dataclass(frozen=True)
class GripperModel:
    d: float = 0.1034
    w_max: float = 0.08
    finger_length: float = 0.046
    finger_thickness: float = 0.01
    finger_height: float = 0.02
    plate_thickness: float = 0.01

    def __post_init__(self):
        if self.d <= 0 or self.w_max <= 0 or self.finger_length <= 0:
            raise ValidationError("gripper dimensions must be positive")

    @property
    def control_points(self) -> np.ndarray:
        """Five gripper-frame points: base, two shoulders, two fingertips."""
        h = self.w_max / 2.0
        d, f = self.d, self.finger_length
        return np.array(
            [
                [0.0, 0.0, 0.0],
                [h, 0.0, -d],
                [-h, 0.0, -d],
                [h, 0.0, -(d + f)],
                [-h, 0.0, -(d + f)],
            ]
        )

    @property
    def flipped_control_points(self) -> np.ndarray:
        # 180 degrees about the approach axis: (x, y, z) -> (-x, -y, z)
        return self.control_points * np.array([-1.0, -1.0, 1.0])


@dataclass(frozen=True)
class ContactGrasp:
    c: np.ndarray
    a: np.ndarray
    b: np.ndarray
    width: float

    def __post_init__(self):
        for name in ("c", "a", "b"):
            v = np.asarray(getattr(self, name), dtype=np.float64).reshape(3)
            object.__setattr__(self, name, v)
        if abs(np.linalg.norm(self.a) - 1.0) > 1e-9 or abs(np.linalg.norm(self.b) - 1.0) > 1e-9:
            raise ValidationError("approach and baseline must be unit vectors")
        if abs(float(self.a @ self.b)) >= 1e-6:
            raise ValidationError(f"approach and baseline are not orthogonal (a.b={self.a @ self.b:.3g})")
        if self.width < 0:
            raise ValidationError(f"negative grasp width {self.width}")

    def to_json(self) -> dict:
        return {"c": self.c.tolist(), "a": self.a.tolist(), "b": self.b.tolist(), "width": float(self.width)}

    @classmethod
    def from_json(cls, obj: dict) -> "ContactGrasp":
        return cls(np.array(obj["c"]), np.array(obj["a"]), np.array(obj["b"]), float(obj["width"]))


@dataclass
class GraspPose:
    R: np.ndarray
    t: np.ndarray
    width: float
    score: float = 1.0
    filtered_score: float | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(3)
        if np.max(np.abs(self.R.T @ self.R - np.eye(3))) > 1e-9 or abs(np.linalg.det(self.R) - 1.0) > 1e-9:
            raise ValidationError("grasp rotation is not a proper rotation matrix")

    @property
    def approach(self) -> np.ndarray:
        return self.R[:, 2]

    @property
    def baseline(self) -> np.ndarray:
        return self.R[:, 0]

    def to_json(self) -> dict:
        out = {"R": self.R.tolist(), "t": self.t.tolist(), "width": float(self.width), "score": float(self.score)}
        if self.filtered_score is not None:
            out["filtered_score"] = float(self.filtered_score)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "GraspPose":
        if not {"R", "t", "width", "score"} <= set(obj):
            raise ValidationError(f"grasp record missing keys: {sorted({'R', 't', 'width', 'score'} - set(obj))}")
        return cls(np.array(obj["R"]), np.array(obj["t"]), float(obj["width"]), float(obj["score"]),
                   obj.get("filtered_score"))


def dump_poses(poses, path=None, **meta) -> str:
    text = json.dumps([p.to_json() for p in poses] if not meta else {**meta, "grasps": [p.to_json() for p in poses]},
                      indent=1)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def load_poses(path) -> list[GraspPose]:
    with open(path) as fh:
        obj = json.load(fh)
    records = obj["grasps"] if isinstance(obj, dict) else obj
    return [GraspPose.from_json(r) for r in records]


# ---------------------------------------------------------------------------
def orthonormalize(z1, z2) -> tuple[np.ndarray, np.ndarray]:
    """Baseline from ``z1`` and approach from the Gram-Schmidt residual of ``z2``.

    Returns ``(b_hat, a_hat)``. The residual is normalised by its own length
    so ``a_hat`` is always a unit vector.
    """
    z1 = np.asarray(z1, dtype=np.float64).reshape(3)
    z2 = np.asarray(z2, dtype=np.float64).reshape(3)
    n1 = np.linalg.norm(z1)
    if not n1 > 1e-9:
        raise DegenerateRotationError(f"baseline vector too short (|z1|={n1:.3g})")
    b = z1 / n1
    resid = z2 - (b @ z2) * b
    n2 = np.linalg.norm(z2)
    nr = np.linalg.norm(resid)
    if not (n2 > 0 and nr > np.sin(1e-6) * n2):
        raise DegenerateRotationError("approach vector is parallel to the baseline")
    return b, resid / nr


def orthonormalize_batch(z1: np.ndarray, z2: np.ndarray):
    """Vectorised :func:`orthonormalize`; returns ``(b, a, ok)`` with ``ok`` false on degenerate rows."""
    z1 = np.asarray(z1, dtype=np.float64)
    z2 = np.asarray(z2, dtype=np.float64)
    n1 = np.linalg.norm(z1, axis=1)
    ok = n1 > 1e-9
    b = z1 / np.where(ok, n1, 1.0)[:, None]
    resid = z2 - np.einsum("ij,ij->i", b, z2)[:, None] * b
    n2 = np.linalg.norm(z2, axis=1)
    nr = np.linalg.norm(resid, axis=1)
    ok &= (n2 > 0) & (nr > np.sin(1e-6) * n2)
    a = resid / np.where(ok, nr, 1.0)[:, None]
    return b, a, ok


def rotation_from_axes(b: np.ndarray, a: np.ndarray) -> np.ndarray:
    return np.column_stack([b, np.cross(a, b), a])


def contact_to_pose(g: ContactGrasp, gripper: GripperModel | None = None, score: float = 1.0) -> GraspPose:
    gripper = gripper or GripperModel()
    # labels may carry a.b up to the validation tolerance; R must be exact
    b, a = orthonormalize(g.b, g.a)
    t = g.c + 0.5 * g.width * b + gripper.d * a
    return GraspPose(rotation_from_axes(b, a), t, float(g.width), score)


def control_points_world(pose: GraspPose, gripper: GripperModel | None = None) -> np.ndarray:
    gripper = gripper or GripperModel()
    return gripper.control_points @ pose.R.T + pose.t


def flip_pose(pose: GraspPose) -> GraspPose:
    """The same grasp with the fingers swapped (180 degrees about the approach axis)."""
    return GraspPose(pose.R * np.array([-1.0, -1.0, 1.0]), pose.t.copy(), pose.width, pose.score)


def _point_distance(p: np.ndarray, q: np.ndarray, reduction: str) -> float:
    if reduction == "sum":
        return float(np.linalg.norm(p - q, axis=1).sum())
    if reduction == "stacked":
        return float(np.linalg.norm((p - q).ravel()))
    raise ValidationError(f"unknown pose-distance reduction {reduction!r}")


def adds_distance(pred: GraspPose, gt: GraspPose, gripper: GripperModel | None = None,
                  reduction: str = "sum") -> float:
    """Control-point distance to ``gt`` or its finger-swapped twin, whichever is closer."""
    gripper = gripper or GripperModel()
    vp = control_points_world(pred, gripper)
    vg = control_points_world(gt, gripper)
    vf = gripper.flipped_control_points @ gt.R.T + gt.t
    return min(_point_distance(vp, vg, reduction), _point_distance(vp, vf, reduction))


def width_to_bin(w: float, gripper: GripperModel | None = None) -> int:
    gripper = gripper or GripperModel()
    if not 0.0 <= w <= gripper.w_max:
        raise ValidationError(f"width {w} outside [0, {gripper.w_max}]")
    return min(int(np.floor(w / (gripper.w_max / N_WIDTH_BINS))), N_WIDTH_BINS - 1)


def bin_to_width(index: int, gripper: GripperModel | None = None) -> float:
    gripper = gripper or GripperModel()
    if not 0 <= index < N_WIDTH_BINS:
        raise ValidationError(f"width bin {index} outside [0, {N_WIDTH_BINS - 1}]")
    return (index + 0.5) * gripper.w_max / N_WIDTH_BINS


def rotation_angle(R1: np.ndarray, R2: np.ndarray) -> float:
    """Geodesic angle in radians between two rotations."""
    c = (np.trace(R1.T @ R2) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def gripper_collides(pose: GraspPose, cloud, gripper: GripperModel | None = None) -> bool:
    """True when any cloud point falls inside the fingers or the back plate.

    Coarse three-box model in the gripper frame: each finger spans
    ``w/2 < |x| <= w/2 + finger_thickness`` over depths ``d +- finger_length``
    below the base; the plate sits just above the fingers across the full
    span. The corridor ``|x| <= w/2`` between the fingers is free space.
    """
    gripper = gripper or GripperModel()
    pts = cloud.points if isinstance(cloud, Cloud) else np.asarray(cloud, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        return False
    local = (pts - pose.t) @ pose.R
    x, y, z = local[:, 0], local[:, 1], local[:, 2]
    half_open = pose.width / 2.0
    outer = half_open + gripper.finger_thickness
    in_y = np.abs(y) <= gripper.finger_height / 2.0
    z_lo = -(gripper.d + gripper.finger_length)
    z_hi = -(gripper.d - gripper.finger_length)
    fingers = in_y & (np.abs(x) > half_open) & (np.abs(x) <= outer) & (z >= z_lo) & (z <= z_hi)
    plate = in_y & (np.abs(x) <= outer) & (z > z_hi) & (z <= z_hi + gripper.plate_thickness)
    return bool(np.any(fingers | plate))
