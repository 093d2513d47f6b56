"""Glue from a rendered view to network inputs and supervision."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import Cloud
from .completion import CompletionProvider, CompletionRequest, mirror_complete
from .errors import ArgumentError
from .grasp import ContactGrasp, GripperModel
from .kernels import fps
from .losses import GraspLabels, make_labels
from .net import NetConfig, NetGeometry, build_geometry
from .pcf import PcfConfig, PcfGroups, concat_points, pcf_groups


def sample_original(cloud: Cloud, n: int) -> Cloud:
    """``n`` points by FPS from index 0; short clouds are padded by cycling their indices."""
    if len(cloud) == 0:
        raise ArgumentError("cannot sample from an empty cloud")
    if len(cloud) >= n:
        return cloud.subset(fps(cloud, n, 0))
    return cloud.subset(np.resize(np.arange(len(cloud)), n))


def view_direction(cloud: Cloud) -> np.ndarray:
    """Unit direction from the camera origin towards the cloud centroid (camera frame)."""
    c = cloud.points.mean(axis=0)
    n = np.linalg.norm(c)
    return c / n if n > 0 else np.array([0.0, 0.0, 1.0])


def complete(original: Cloud, provider: CompletionProvider = mirror_complete) -> Cloud:
    return provider(CompletionRequest(original, view_direction(original), len(original)))


@dataclass
class TrainingExample:
    scene_id: str
    original: Cloud
    concat: Cloud
    labels: GraspLabels
    groups: PcfGroups
    geometry: NetGeometry

    @property
    def points(self) -> np.ndarray:
        return self.original.points


def prepare_example(scene_id: str, view_cloud: Cloud, label_grasps: list[ContactGrasp], pcf_cfg: PcfConfig,
                    net_cfg: NetConfig, gripper: GripperModel | None = None,
                    provider: CompletionProvider = mirror_complete) -> TrainingExample:
    """Sample, complete, group and label one camera-frame view."""
    original = sample_original(view_cloud, net_cfg.n_points)
    completion = complete(original, provider)
    cat = concat_points(original, completion)
    labels = make_labels(original.points, label_grasps, gripper)
    return TrainingExample(scene_id, original, cat, labels, pcf_groups(original, cat, pcf_cfg),
                           build_geometry(original.points, net_cfg))
