"""Offline proposal quality against label grasps."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .grasp import GraspPose, GripperModel, contact_to_pose, flip_pose, gripper_collides, rotation_angle

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Thresholds:
    translation: float = 0.02
    rotation_deg: float = 15.0
    k: int = 20


def poses_match(p: GraspPose, q: GraspPose, th: Thresholds) -> bool:
    if np.linalg.norm(p.t - q.t) > th.translation:
        return False
    limit = np.deg2rad(th.rotation_deg)
    return rotation_angle(p.R, q.R) <= limit or rotation_angle(p.R, flip_pose(q).R) <= limit


def match_matrix(proposals, labels, th: Thresholds) -> np.ndarray:
    """Vectorised :func:`poses_match` over every (proposal, label) pair."""
    if not proposals or not labels:
        return np.zeros((len(proposals), len(labels)), dtype=bool)
    tp = np.array([p.t for p in proposals])
    tl = np.array([q.t for q in labels])
    Rp = np.array([p.R for p in proposals])
    Rl = np.array([q.R for q in labels])
    close = np.linalg.norm(tp[:, None, :] - tl[None, :, :], axis=2) <= th.translation
    # trace(Rp^T Rl) per column; the flipped label negates the first two columns
    cols = np.einsum("pic,lic->plc", Rp, Rl)
    cos_lim = np.cos(np.deg2rad(th.rotation_deg))
    direct = (cols.sum(axis=2) - 1.0) / 2.0
    flipped = (cols[:, :, 2] - cols[:, :, 0] - cols[:, :, 1] - 1.0) / 2.0
    return close & ((direct >= cos_lim) | (flipped >= cos_lim))


def evaluate(proposals, labels, cloud=None, thresholds: Thresholds | None = None,
             gripper: GripperModel | None = None) -> dict:
    """precision@k over the top-k proposals by score, label coverage, and collision rate.

    ``labels`` may hold :class:`GraspPose` or contact grasps (converted with
    ``gripper``).
    """
    th = thresholds or Thresholds()
    gripper = gripper or GripperModel()
    label_poses = [lab if isinstance(lab, GraspPose) else contact_to_pose(lab, gripper) for lab in labels]
    if not proposals:
        log.warning("evaluate: no proposals")
        return {"precision_at_k": 0.0, "coverage": 0.0, "collision_rate": 0.0, "k": th.k,
                "n_proposals": 0, "n_labels": len(label_poses)}
    order = sorted(range(len(proposals)), key=lambda i: -proposals[i].score)
    top = order[: th.k]
    m = match_matrix(proposals, label_poses, th)
    precision = float(m[top].any(axis=1).mean()) if len(label_poses) else 0.0
    coverage = float(m.any(axis=0).mean()) if len(label_poses) else 0.0
    if cloud is not None:
        collide = float(np.mean([gripper_collides(p, cloud, gripper) for p in proposals]))
    else:
        collide = 0.0
    return {"precision_at_k": precision, "coverage": coverage, "collision_rate": collide, "k": th.k,
            "n_proposals": len(proposals), "n_labels": len(label_poses)}
