"""Grasp prediction network: set-abstraction encoder, feature propagation, four heads.

The encoder groups the visible points around farthest-point centroids
(two multi-scale set-abstraction levels), propagates the coarse features back
to every point by inverse-distance interpolation, and a shared trunk feeds
four per-point heads: grasp confidence, width-bin logits and the two
direction vectors that become the baseline and approach.

All neighbourhood structure depends only on point positions, so it is
computed once per cloud (:func:`build_geometry`) and reused across training
steps.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .cloud import Cloud
from .errors import DimensionError, ValidationError
from .grasp import GraspPose, GripperModel, N_WIDTH_BINS, bin_to_width, orthonormalize_batch, rotation_from_axes
from .kernels import fps, knn, knn_distances, query_ball
from .layers import Params, init_linear, init_mlp, mlp
from .tensor import Tensor, add, concat, linear, matmul, max_pool_groups, relu, reshape, sigmoid, take

log = logging.getLogger(__name__)

HEADS = {"score": 1, "width": N_WIDTH_BINS, "z1": 3, "z2": 3}


@dataclass(frozen=True)
class NetConfig:
    n_points: int = 1024
    feature_channels: int = 320
    sa_centroids: tuple[int, ...] = (512, 128)
    sa_radii: tuple[tuple[float, ...], ...] = ((0.04, 0.08, 0.16), (0.08, 0.16, 0.32))
    sa_fanouts: tuple[tuple[int, ...], ...] = ((64, 64, 128), (64, 64, 128))
    sa_mlps: tuple[tuple[tuple[int, ...], ...], ...] = (
        ((32, 32, 64), (64, 64, 128), (64, 96, 128)),
        ((64, 64, 128), (128, 128, 256), (128, 128, 256)),
    )
    fp_mlps: tuple[tuple[int, ...], ...] = ((256, 256), (128, 128))
    trunk_width: int = 128
    head_width: int = 128
    interp_k: int = 3
    fps_start: int | str = 0  # index, or "farthest" (farthest from the cloud centroid)
    alpha: float = 1.0
    beta: float = 10.0
    gamma: float = 1.0
    topk: int = 108
    lr: float = 1e-4
    weight_decay: float = 5e-4
    pose_distance: str = "sum"
    stop_score_grad: bool = False

    def __post_init__(self):
        levels = len(self.sa_centroids)
        if not (len(self.sa_radii) == len(self.sa_fanouts) == len(self.sa_mlps) == len(self.fp_mlps) == levels):
            raise ValidationError("set-abstraction and propagation settings must cover every level")
        for radii in self.sa_radii:
            if any(b <= a for a, b in zip(radii, radii[1:])):
                raise ValidationError(f"radii must be strictly increasing, got {radii}")
        if self.topk < 1 or self.topk > self.n_points:
            raise ValidationError(f"topk={self.topk} must lie in [1, {self.n_points}]")
        if min(self.alpha, self.beta, self.gamma) <= 0:
            raise ValidationError("loss weights must be positive")
        if self.pose_distance not in ("sum", "stacked"):
            raise ValidationError(f"unknown pose distance {self.pose_distance!r}")


def init_net_params(cfg: NetConfig, rng: np.random.Generator) -> Params:
    params: Params = {}
    in_ch = cfg.feature_channels
    level_out = [in_ch]
    for lvl, mlps in enumerate(cfg.sa_mlps):
        for s, widths in enumerate(mlps):
            prefix = f"net.sa{lvl}.s{s}"
            # first layer split into a coordinate part and a feature part
            std = np.sqrt(2.0 / (3 + in_ch))
            params[f"{prefix}.l0.Wxyz"] = Tensor(rng.normal(0.0, std, (3, widths[0])), requires_grad=True)
            params[f"{prefix}.l0.W"] = Tensor(rng.normal(0.0, std, (in_ch, widths[0])), requires_grad=True)
            params[f"{prefix}.l0.b"] = Tensor(np.zeros(widths[0]), requires_grad=True)
            fan_in = widths[0]
            for i, w in enumerate(widths[1:], start=1):
                init_linear(params, f"{prefix}.l{i}", fan_in, w, rng)
                fan_in = w
        in_ch = sum(w[-1] for w in mlps)
        level_out.append(in_ch)
    # propagate from the deepest level back to the input points
    coarse = level_out[-1]
    for j, widths in enumerate(cfg.fp_mlps):
        skip = level_out[-2 - j]
        init_mlp(params, f"net.fp{j}", coarse + skip, widths, rng)
        coarse = widths[-1]
    init_linear(params, "net.trunk", coarse, cfg.trunk_width, rng)
    for head, out in HEADS.items():
        init_linear(params, f"net.head.{head}.l0", cfg.trunk_width, cfg.head_width, rng)
        init_linear(params, f"net.head.{head}.l1", cfg.head_width, out, rng)
    return params


@dataclass
class _Level:
    centroid_idx: np.ndarray  # indices into the previous level's points
    points: np.ndarray
    neighbor_idx: list[np.ndarray] = field(default_factory=list)  # per scale, flattened (M*K,)
    relative: list[np.ndarray] = field(default_factory=list)  # per scale, (M*K, 3), in ball radii
    fanouts: list[int] = field(default_factory=list)


@dataclass
class NetGeometry:
    points: np.ndarray
    levels: list[_Level]
    interp: list[np.ndarray]  # dense weights mapping level l+1 features onto level l points


def _fps_start(points: np.ndarray, policy) -> int:
    if policy == "farthest":
        d = np.linalg.norm(points - points.mean(axis=0), axis=1)
        return int(np.argmax(d))
    return int(policy)


def _interp_matrix(dense: np.ndarray, coarse: np.ndarray, k: int) -> np.ndarray:
    k = min(k, len(coarse))
    g = knn(coarse, dense, k)
    dist = knn_distances(coarse, dense, g)
    w = 1.0 / (dist + 1e-8)
    w /= w.sum(axis=1, keepdims=True)
    W = np.zeros((len(dense), len(coarse)))
    np.add.at(W, (np.repeat(np.arange(len(dense)), k), g.neighbor_idx.ravel()), w.ravel())
    return W


def build_geometry(points: np.ndarray, cfg: NetConfig) -> NetGeometry:
    points = np.asarray(points, dtype=np.float64)
    levels: list[_Level] = []
    cur = points
    for lvl, m in enumerate(cfg.sa_centroids):
        m = min(m, len(cur))
        cidx = fps(cur, m, _fps_start(cur, cfg.fps_start))
        ctr = cur[cidx]
        level = _Level(cidx, ctr)
        for r, k in zip(cfg.sa_radii[lvl], cfg.sa_fanouts[lvl]):
            g = query_ball(cur, ctr, r, k, center_idx=cidx)
            level.neighbor_idx.append(g.neighbor_idx.ravel())
            level.relative.append(((cur[g.neighbor_idx] - ctr[:, None, :]) / r).reshape(-1, 3))
            level.fanouts.append(k)
        levels.append(level)
        cur = ctr
    interp = []
    dense = points
    for level in levels:
        interp.append(_interp_matrix(dense, level.points, cfg.interp_k))
        dense = level.points
    return NetGeometry(points, levels, interp)


@dataclass
class PerPointPrediction:
    score: Tensor  # (N,) in (0, 1)
    width_logits: Tensor  # (N, 10)
    z1: Tensor  # (N, 3)
    z2: Tensor  # (N, 3)

    def __len__(self) -> int:
        return self.score.shape[0]


def forward(original, F, cfg: NetConfig, params: Params, geometry: NetGeometry | None = None) -> PerPointPrediction:
    pts = original.points if isinstance(original, Cloud) else np.asarray(original, dtype=np.float64)
    F = F if isinstance(F, Tensor) else Tensor(F)
    if F.ndim != 2 or F.shape[0] != len(pts):
        raise DimensionError(f"feature matrix {F.shape} is not row-aligned with {len(pts)} points")
    if F.shape[1] != cfg.feature_channels:
        raise DimensionError(f"feature matrix has {F.shape[1]} channels, config expects {cfg.feature_channels}")
    geometry = geometry or build_geometry(pts, cfg)

    feats = [F]
    x = F
    for lvl, level in enumerate(geometry.levels):
        M = len(level.points)
        pooled = []
        for s, widths in enumerate(cfg.sa_mlps[lvl]):
            prefix = f"net.sa{lvl}.s{s}"
            # (rel_xyz ++ feat[idx]) @ W == rel_xyz @ Wxyz + (feat @ W)[idx]
            proj = linear(x, params[f"{prefix}.l0.W"], params[f"{prefix}.l0.b"])
            h = add(take(proj, level.neighbor_idx[s]), matmul(Tensor(level.relative[s]), params[f"{prefix}.l0.Wxyz"]))
            h = relu(h)
            h = mlp(h, params, prefix, len(widths), final_relu=True, start=1)
            pooled.append(max_pool_groups(reshape(h, (M, level.fanouts[s], widths[-1]))))
        x = concat(pooled, axis=1)
        feats.append(x)

    up = feats[-1]
    for j, widths in enumerate(cfg.fp_mlps):
        target = len(geometry.levels) - 1 - j
        h = matmul(Tensor(geometry.interp[target]), up)
        h = concat([h, feats[target]], axis=1)
        up = mlp(h, params, f"net.fp{j}", len(widths), final_relu=True)

    trunk = relu(linear(up, params["net.trunk.W"], params["net.trunk.b"]))
    out = {}
    for head in HEADS:
        h = relu(linear(trunk, params[f"net.head.{head}.l0.W"], params[f"net.head.{head}.l0.b"]))
        out[head] = linear(h, params[f"net.head.{head}.l1.W"], params[f"net.head.{head}.l1.b"])
    score = sigmoid(reshape(out["score"], (len(pts),)))
    return PerPointPrediction(score, out["width"], out["z1"], out["z2"])


@dataclass
class DecodedGrasps:
    poses: list[GraspPose]
    point_index: np.ndarray
    degenerate: int


def decode_grasps(pred: PerPointPrediction, original, gripper: GripperModel | None = None) -> DecodedGrasps:
    """One pose per point whose direction vectors are not degenerate."""
    gripper = gripper or GripperModel()
    pts = original.points if isinstance(original, Cloud) else np.asarray(original, dtype=np.float64)
    b, a, ok = orthonormalize_batch(pred.z1.data, pred.z2.data)
    finite = np.all(np.isfinite(pred.z1.data), axis=1) & np.all(np.isfinite(pred.z2.data), axis=1)
    ok &= finite
    bins = np.argmax(pred.width_logits.data, axis=1)
    poses = []
    keep = np.flatnonzero(ok)
    for i in keep:
        w = bin_to_width(int(bins[i]), gripper)
        t = pts[i] + 0.5 * w * b[i] + gripper.d * a[i]
        poses.append(GraspPose(rotation_from_axes(b[i], a[i]), t, w, float(pred.score.data[i])))
    return DecodedGrasps(poses, keep, int(len(pts) - len(keep)))
