"""Training objective for the grasp network.

``total = alpha * L_bce + beta * L_adds + gamma * L_width``

* ``L_bce``: binary cross entropy of the confidence, averaged over the
  ``topk`` points with the largest absolute score error (ties to the lowest
  index); only those points receive gradient.
* ``L_adds``: over positive points, predicted confidence times the
  control-point distance between the decoded pose and the matched label pose,
  minimised over the label's finger-swapped twin.
* ``L_width``: multi-label binary cross entropy of the width-bin logits
  against the one-hot label bin, positives only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .grasp import ContactGrasp, GripperModel, N_WIDTH_BINS, contact_to_pose, width_to_bin
from .kernels import LABEL_RADIUS, associate_labels
from .net import NetConfig, PerPointPrediction
from .tensor import (
    Tensor,
    add,
    bce,
    cross3,
    expand,
    minimum,
    mul,
    normalize_rows,
    row_norm,
    sigmoid,
    sqrt,
    sub,
    take,
    tsum,
)

log = logging.getLogger(__name__)


@dataclass
class GraspLabels:
    """Per-point supervision, aligned with the network's input points."""

    positive: np.ndarray  # (N,) bool
    R: np.ndarray  # (N, 3, 3) matched label rotation (identity where negative)
    t: np.ndarray  # (N, 3)
    width: np.ndarray  # (N,)

    @property
    def n_positive(self) -> int:
        return int(self.positive.sum())

    def permuted(self, perm: np.ndarray) -> "GraspLabels":
        return GraspLabels(self.positive[perm], self.R[perm], self.t[perm], self.width[perm])


def make_labels(points: np.ndarray, grasps: list[ContactGrasp], gripper: GripperModel | None = None,
                radius: float = LABEL_RADIUS, both_contacts: bool = True) -> GraspLabels:
    """Associate points with label grasps whose contact lies within ``radius``.

    With ``both_contacts`` each label also contributes its second finger
    contact ``c + w b`` (same physical grasp, fingers swapped).
    """
    gripper = gripper or GripperModel()
    contacts, Rs, ts, ws = [], [], [], []
    for g in grasps:
        pose = contact_to_pose(g, gripper)
        contacts.append(g.c)
        Rs.append(pose.R)
        ts.append(pose.t)
        ws.append(g.width)
        if both_contacts:
            twin = ContactGrasp(g.c + g.width * g.b, g.a, -g.b, g.width)
            tp = contact_to_pose(twin, gripper)
            contacts.append(twin.c)
            Rs.append(tp.R)
            ts.append(tp.t)
            ws.append(g.width)
    N = len(points)
    positive, matched = associate_labels(points, np.array(contacts).reshape(-1, 3), radius)
    R = np.tile(np.eye(3), (N, 1, 1))
    t = np.zeros((N, 3))
    w = np.zeros(N)
    if positive.any():
        sel = matched[positive]
        R[positive] = np.array(Rs)[sel]
        t[positive] = np.array(ts)[sel]
        w[positive] = np.array(ws)[sel]
    return GraspLabels(positive, R, t, w)


def hard_point_indices(score: np.ndarray, target: np.ndarray, k: int) -> np.ndarray:
    err = np.abs(score - target)
    return np.argsort(-err, kind="stable")[: min(k, len(err))]


def _control_points(b: Tensor, a: Tensor, t: Tensor, gripper: GripperModel) -> list[Tensor]:
    n = cross3(a, b)
    out = []
    for vx, vy, vz in gripper.control_points:
        p = t
        for coeff, axis in ((vx, b), (vy, n), (vz, a)):
            if coeff != 0.0:
                p = add(p, mul(axis, float(coeff)))
        out.append(p)
    return out


def _pose_distance(pred_pts: list[Tensor], target: np.ndarray, reduction: str) -> Tensor:
    # target: (P, 5, 3)
    if reduction == "sum":
        total = None
        for k, p in enumerate(pred_pts):
            d = row_norm(sub(p, Tensor(target[:, k, :])))
            total = d if total is None else add(total, d)
        return total
    sq = None
    for k, p in enumerate(pred_pts):
        diff = sub(p, Tensor(target[:, k, :]))
        s = tsum(mul(diff, diff), axis=1, keepdims=True)
        sq = s if sq is None else add(sq, s)
    return sqrt(sq)


def loss_total(pred: PerPointPrediction, points: np.ndarray, labels: GraspLabels, cfg: NetConfig,
               gripper: GripperModel | None = None) -> tuple[Tensor, dict[str, float]]:
    """Weighted training loss and a float breakdown of its terms."""
    gripper = gripper or GripperModel()
    N = len(pred)
    y = labels.positive.astype(np.float64)

    per_point = bce(pred.score, y, reduction="none")
    hard = hard_point_indices(pred.score.data, y, cfg.topk)
    l_bce = tsum(take(per_point, hard)) * (1.0 / len(hard))

    pos = np.flatnonzero(labels.positive)
    if len(pos) == 0:
        log.warning("no positive points: pose and width terms contribute 0")
        l_adds = Tensor(0.0)
        l_width = Tensor(0.0)
    else:
        P = len(pos)
        b = normalize_rows(take(pred.z1, pos))
        z2 = take(pred.z2, pos)
        along = tsum(mul(b, z2), axis=1, keepdims=True)
        a = normalize_rows(sub(z2, mul(expand(along, (P, 3)), b)))
        half_w = np.repeat(0.5 * labels.width[pos][:, None], 3, axis=1)
        t = add(add(Tensor(points[pos]), mul(b, Tensor(half_w))), mul(a, gripper.d))
        pred_pts = _control_points(b, a, t, gripper)

        R, tt = labels.R[pos], labels.t[pos]
        gt = np.einsum("kj,pij->pki", gripper.control_points, R) + tt[:, None, :]
        gt_flip = np.einsum("kj,pij->pki", gripper.flipped_control_points, R) + tt[:, None, :]
        dist = minimum(_pose_distance(pred_pts, gt, cfg.pose_distance),
                       _pose_distance(pred_pts, gt_flip, cfg.pose_distance))
        s_pos = take(pred.score, pos)
        if cfg.stop_score_grad:
            s_pos = s_pos.detach()
        l_adds = tsum(mul(s_pos, dist.reshape(P))) * (1.0 / P)

        onehot = np.zeros((P, N_WIDTH_BINS))
        bins = [width_to_bin(min(w, gripper.w_max), gripper) for w in labels.width[pos]]
        onehot[np.arange(P), bins] = 1.0
        l_width = bce(sigmoid(take(pred.width_logits, pos)), onehot, reduction="mean")

    total = add(add(mul(l_bce, cfg.alpha), mul(l_adds, cfg.beta)), mul(l_width, cfg.gamma))
    terms = {
        "l_bce": float(l_bce.data),
        "l_adds": float(l_adds.data),
        "l_width": float(l_width.data),
        "l_total": float(total.data),
        "n_positive": int(len(pos)),
    }
    if N and not np.isfinite(terms["l_total"]):
        bad = [k for k in ("l_bce", "l_adds", "l_width") if not np.isfinite(terms[k])]
        terms["non_finite"] = bad
    return total, terms
