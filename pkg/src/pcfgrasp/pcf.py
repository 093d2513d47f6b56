"""Point-completion-to-feature layer.

The visible points and a completion of the object are concatenated; around
every visible point three balls of increasing radius gather neighbours from
the concatenated cloud. Each ball's relative coordinates pass through its own
MLP and are max-pooled, and the three pooled vectors are concatenated into a
per-point shape feature (1024 x 320 with the default configuration).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cloud import Cloud
from .errors import DimensionError, FormatError, ValidationError
from .kernels import NeighborGroup, query_ball
from .layers import Params, init_mlp, mlp
from .tensor import Tensor, concat, expand, max_pool_groups, mul, reshape


@dataclass(frozen=True)
class PcfConfig:
    radii: tuple[float, ...] = (0.04, 0.08, 0.16)
    fanouts: tuple[int, ...] = (64, 64, 128)
    mlp_widths: tuple[tuple[int, ...], ...] = ((32, 32, 64), (64, 64, 128), (64, 64, 128))

    def __post_init__(self):
        if not len(self.radii) == len(self.fanouts) == len(self.mlp_widths):
            raise ValidationError("radii, fanouts and mlp_widths must have equal length")
        if any(r <= 0 for r in self.radii) or any(k < 1 for k in self.fanouts):
            raise ValidationError("radii must be positive and fanouts at least 1")

    @property
    def out_channels(self) -> int:
        return sum(w[-1] for w in self.mlp_widths)


def concat_points(original: Cloud, completion: Cloud) -> Cloud:
    if original.frame != completion.frame:
        raise ValidationError(f"frame mismatch: {original.frame} vs {completion.frame}")
    if len(original) != len(completion):
        raise ValidationError(f"point count mismatch: {len(original)} vs {len(completion)}")
    return Cloud(np.vstack([original.points, completion.points]), original.frame)


def init_pcf_params(cfg: PcfConfig, rng: np.random.Generator) -> Params:
    params: Params = {}
    for s, widths in enumerate(cfg.mlp_widths):
        init_mlp(params, f"pcf.s{s}", 3, widths, rng)
    return params


@dataclass
class PcfGroups:
    """Per-scale neighbourhoods and relative coordinates; constant for a given cloud pair.

    Offsets are divided by the ball radius so every scale sees inputs in
    ``[-1, 1]`` regardless of the metric size of the object.
    """

    groups: list[NeighborGroup]
    relative: list[np.ndarray] = field(default_factory=list)  # each (M*K, 3)


def pcf_groups(original: Cloud, concat_cloud: Cloud, cfg: PcfConfig) -> PcfGroups:
    orig = original.points
    src = concat_cloud.points
    groups, rel = [], []
    for r, k in zip(cfg.radii, cfg.fanouts):
        g = query_ball(src, orig, r, k)
        groups.append(g)
        rel.append(((src[g.neighbor_idx] - orig[:, None, :]) / r).reshape(-1, 3))
    return PcfGroups(groups, rel)


def pcf_forward(original: Cloud, concat_cloud: Cloud, cfg: PcfConfig, params: Params,
                groups: PcfGroups | None = None) -> Tensor:
    """Shape feature with one row per original point and ``cfg.out_channels`` columns."""
    if groups is None:
        groups = pcf_groups(original, concat_cloud, cfg)
    M = len(original)
    feats = []
    for s, widths in enumerate(cfg.mlp_widths):
        g = groups.groups[s]
        if g.neighbor_idx.shape[0] != M:
            raise DimensionError(f"group for scale {s} has {g.neighbor_idx.shape[0]} centers, expected {M}")
        h = mlp(Tensor(groups.relative[s]), params, f"pcf.s{s}", len(widths), final_relu=False)
        pooled = max_pool_groups(reshape(h, (M, g.fanout, widths[-1])))
        empty = g.valid_count == 0
        if np.any(empty):
            keep = np.repeat((~empty).astype(np.float64)[:, None], widths[-1], axis=1)
            pooled = mul(pooled, Tensor(keep))
        feats.append(pooled)
    return concat(feats, axis=1)


def dump_features(path, values) -> None:
    arr = np.asarray(values.data if isinstance(values, Tensor) else values, dtype="<f8", order="C")
    if arr.ndim != 2:
        raise DimensionError(f"feature matrix must be 2-D, got shape {arr.shape}")
    Path(path).write_bytes(struct.pack("<II", *arr.shape) + arr.tobytes())


def load_features(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    if len(buf) < 8:
        raise FormatError(f"{path}: truncated feature header")
    rows, cols = struct.unpack_from("<II", buf, 0)
    if len(buf) != 8 + 8 * rows * cols:
        raise FormatError(f"{path}: expected {rows}x{cols} values")
    return np.frombuffer(buf, dtype="<f8", offset=8).reshape(rows, cols).copy()
