"""Sources of "complete object" points for the feature layer.

No learned completion network ships with the package. ``load_completion``
reads one computed elsewhere; ``mirror_complete`` is a geometric stand-in
that reflects the visible surface through a plane behind it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .cloud import Cloud, read_ply
from .errors import ValidationError
from .kernels import fps

N_COMPLETION = 1024


@dataclass(frozen=True)
class CompletionRequest:
    partial: Cloud
    view_dir: np.ndarray
    n_points: int = N_COMPLETION

    def __post_init__(self):
        v = np.asarray(self.view_dir, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(v) - 1.0) > 1e-9:
            raise ValidationError("view direction must be a unit vector")
        object.__setattr__(self, "view_dir", v)
        if len(self.partial) != self.n_points:
            raise ValidationError(f"partial cloud has {len(self.partial)} points, expected {self.n_points}")


CompletionProvider = Callable[[CompletionRequest], Cloud]


def load_completion(path, n_points: int = N_COMPLETION) -> Cloud:
    cloud = read_ply(path)
    if len(cloud) < n_points:
        raise ValidationError(f"{path}: completion has {len(cloud)} points, need at least {n_points}")
    if len(cloud) == n_points:
        return cloud
    return cloud.subset(fps(cloud, n_points))


def reflect(points: np.ndarray, center: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """Mirror ``points`` across the plane through ``center`` with unit ``normal``."""
    return points + 2.0 * ((center - points) @ normal)[:, None] * normal


def mirror_complete(req: CompletionRequest) -> Cloud:
    p = req.partial.points
    mirrored = reflect(p, p.mean(axis=0), req.view_dir)
    union = np.vstack([p, mirrored])
    return Cloud(union[fps(union, req.n_points)], req.partial.frame)


def file_provider(path) -> CompletionProvider:
    def provide(req: CompletionRequest) -> Cloud:
        return load_completion(path, req.n_points)

    return provide


def make_provider(spec: str) -> CompletionProvider:
    """``"mirror"`` or ``"file:<path>"``."""
    if spec == "mirror":
        return mirror_complete
    if spec.startswith("file:"):
        return file_provider(spec[5:])
    raise ValidationError(f"unknown completion provider {spec!r}")
