"""Synthetic single-object scenes built from primitive meshes.

Scenes live in a world frame with the table plane at ``z = 0``. Objects are
triangle meshes (box, cylinder, sphere) with outward-facing winding, placed
at a stable resting pose with a random yaw.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cloud import Cloud
from .errors import ArgumentError, ValidationError
from .grasp import ContactGrasp, GripperModel

log = logging.getLogger(__name__)

KINDS = ("box", "cylinder", "sphere")


def _rot_z(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def box_mesh(size) -> tuple[np.ndarray, np.ndarray]:
    sx, sy, sz = (0.5 * float(v) for v in size)
    v = np.array([[x, y, z] for x in (-sx, sx) for y in (-sy, sy) for z in (-sz, sz)])
    # vertex index = 4*ix + 2*iy + iz
    f = np.array([
        [0, 1, 3], [0, 3, 2],  # -x
        [4, 6, 7], [4, 7, 5],  # +x
        [0, 4, 5], [0, 5, 1],  # -y
        [2, 3, 7], [2, 7, 6],  # +y
        [0, 2, 6], [0, 6, 4],  # -z
        [1, 5, 7], [1, 7, 3],  # +z
    ])
    return v, f


def cylinder_mesh(radius: float, height: float, segments: int = 48) -> tuple[np.ndarray, np.ndarray]:
    ang = 2 * np.pi * np.arange(segments) / segments
    ring = np.column_stack([radius * np.cos(ang), radius * np.sin(ang)])
    h = 0.5 * height
    bottom = np.column_stack([ring, np.full(segments, -h)])
    top = np.column_stack([ring, np.full(segments, h)])
    v = np.vstack([bottom, top, [[0, 0, -h], [0, 0, h]]])
    cb, ct = 2 * segments, 2 * segments + 1
    faces = []
    for i in range(segments):
        j = (i + 1) % segments
        faces += [[i, j, segments + j], [i, segments + j, segments + i]]
        faces += [[cb, j, i], [ct, segments + i, segments + j]]
    return v, np.array(faces)


def sphere_mesh(radius: float, stacks: int = 24, slices: int = 48) -> tuple[np.ndarray, np.ndarray]:
    verts = [[0.0, 0.0, radius]]
    for i in range(1, stacks):
        phi = np.pi * i / stacks
        for j in range(slices):
            th = 2 * np.pi * j / slices
            verts.append([radius * np.sin(phi) * np.cos(th), radius * np.sin(phi) * np.sin(th), radius * np.cos(phi)])
    verts.append([0.0, 0.0, -radius])
    south = len(verts) - 1
    faces = []

    def vid(i, j):
        return 1 + (i - 1) * slices + (j % slices)

    for j in range(slices):
        faces.append([0, vid(1, j), vid(1, j + 1)])
    for i in range(1, stacks - 1):
        for j in range(slices):
            faces.append([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)])
            faces.append([vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)])
    for j in range(slices):
        faces.append([south, vid(stacks - 1, j + 1), vid(stacks - 1, j)])
    return np.array(verts), np.array(faces)


@dataclass
class SceneObject:
    kind: str
    params: dict
    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown primitive {self.kind!r}")
        self.R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(3)
        if np.max(np.abs(self.R.T @ self.R - np.eye(3))) > 1e-9 or abs(np.linalg.det(self.R) - 1) > 1e-9:
            raise ValidationError("object pose is not a rigid transform")

    def local_mesh(self):
        p = self.params
        if self.kind == "box":
            return box_mesh(p["size"])
        if self.kind == "cylinder":
            return cylinder_mesh(p["radius"], p["height"], int(p.get("segments", 48)))
        return sphere_mesh(p["radius"], int(p.get("stacks", 24)), int(p.get("slices", 48)))

    def mesh(self):
        v, f = self.local_mesh()
        return v @ self.R.T + self.t, f

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": self.params, "pose": {"R": self.R.tolist(), "t": self.t.tolist()}}

    @classmethod
    def from_json(cls, obj: dict) -> "SceneObject":
        return cls(obj["kind"], dict(obj["params"]), np.array(obj["pose"]["R"]), np.array(obj["pose"]["t"]))


@dataclass
class Scene:
    objects: list[SceneObject]
    labels: list[tuple[ContactGrasp, float]] = field(default_factory=list)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.objects:
            raise ArgumentError("scene has no objects")
        verts, faces, offset = [], [], 0
        for obj in self.objects:
            v, f = obj.mesh()
            verts.append(v)
            faces.append(f + offset)
            offset += len(v)
        return np.vstack(verts), np.vstack(faces)

    def center(self) -> np.ndarray:
        return np.mean([o.t for o in self.objects], axis=0)

    def to_json(self) -> dict:
        return {
            "objects": [o.to_json() for o in self.objects],
            "labels": [{"contact": g.to_json(), "quality": float(q)} for g, q in self.labels],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Scene":
        labels = [(ContactGrasp.from_json(r["contact"]), float(r["quality"])) for r in obj.get("labels", [])]
        return cls([SceneObject.from_json(o) for o in obj["objects"]], labels)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def load(cls, path) -> "Scene":
        return cls.from_json(json.loads(Path(path).read_text()))


def resting_object(kind: str, params: dict, rng: np.random.Generator) -> SceneObject:
    """Primitive resting on the table (upright for cylinders) with a random yaw."""
    R = _rot_z(rng.uniform(0.0, 2 * np.pi))
    if kind == "box":
        z = 0.5 * params["size"][2]
    elif kind == "cylinder":
        z = 0.5 * params["height"]
    else:
        z = params["radius"]
    xy = rng.uniform(-0.05, 0.05, size=2)
    return SceneObject(kind, params, R, np.array([xy[0], xy[1], z]))


DEFAULT_PARAMS = {
    "box": {"size": [0.05, 0.12, 0.08]},
    "cylinder": {"radius": 0.02, "height": 0.12},
    "sphere": {"radius": 0.035},
}


def make_scene(kind: str, rng: np.random.Generator, params: dict | None = None) -> Scene:
    if kind not in KINDS:
        raise ArgumentError(f"unknown primitive {kind!r}; expected one of {KINDS}")
    return Scene([resting_object(kind, dict(params or DEFAULT_PARAMS[kind]), rng)])


# ---------------------------------------------------------------------------
def sample_triangles(vertices: np.ndarray, faces: np.ndarray, n: int,
                     rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Area-weighted uniform samples and their face normals."""
    if n < 1:
        raise ArgumentError(f"sample count must be positive, got {n}")
    tri = vertices[faces]
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    area = 0.5 * np.linalg.norm(cross, axis=1)
    if area.sum() <= 0:
        raise ArgumentError("mesh has zero surface area")
    face = rng.choice(len(faces), size=n, p=area / area.sum())
    u = rng.random(n)
    v = rng.random(n)
    flip = u + v > 1.0
    u[flip], v[flip] = 1.0 - u[flip], 1.0 - v[flip]
    t = tri[face]
    pts = t[:, 0] + u[:, None] * (t[:, 1] - t[:, 0]) + v[:, None] * (t[:, 2] - t[:, 0])
    normals = cross[face] / np.linalg.norm(cross[face], axis=1, keepdims=True)
    return pts, normals


def sample_surface(scene: Scene, n: int, rng: np.random.Generator) -> Cloud:
    if not scene.objects:
        raise ArgumentError("cannot sample an empty scene")
    v, f = scene.mesh()
    pts, nrm = sample_triangles(v, f, n, rng)
    return Cloud(pts, "robot", nrm)


# ---------------------------------------------------------------------------
@dataclass
class ViewSpec:
    """Pinhole camera; ``R``/``t`` map camera coordinates into the world (camera looks along +z)."""

    R: np.ndarray
    t: np.ndarray
    focal: float = 300.0
    width: int = 240
    height: int = 240
    cx: float | None = None
    cy: float | None = None
    near: float = 0.05
    far: float = 3.0

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(3)
        if self.focal <= 0:
            raise ValidationError("focal length must be positive")
        if self.width < 16 or self.height < 16:
            raise ValidationError("resolution must be at least 16 x 16")
        if self.cx is None:
            self.cx = (self.width - 1) / 2.0
        if self.cy is None:
            self.cy = (self.height - 1) / 2.0

    def world_to_camera(self, pts: np.ndarray) -> np.ndarray:
        return (pts - self.t) @ self.R

    def to_json(self) -> dict:
        return {"R": self.R.tolist(), "t": self.t.tolist(), "focal": self.focal, "width": self.width,
                "height": self.height, "cx": self.cx, "cy": self.cy, "near": self.near, "far": self.far}

    @classmethod
    def from_json(cls, obj: dict) -> "ViewSpec":
        return cls(**obj)


def look_at(eye, target, up=(0.0, 0.0, 1.0), **kw) -> ViewSpec:
    eye = np.asarray(eye, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - eye
    z /= np.linalg.norm(z)
    x = np.cross(z, up)
    if np.linalg.norm(x) < 1e-9:
        x = np.cross(z, [1.0, 0.0, 0.0])
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return ViewSpec(np.column_stack([x, y, z]), eye, **kw)


def random_view(scene: Scene, rng: np.random.Generator, distance=(0.45, 0.6), elevation_deg=(20.0, 60.0),
                **kw) -> ViewSpec:
    center = scene.center()
    az = rng.uniform(0, 2 * np.pi)
    el = np.deg2rad(rng.uniform(*elevation_deg))
    r = rng.uniform(*distance)
    eye = center + r * np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])
    return look_at(eye, center, **kw)


def render_view(scene: Scene, view: ViewSpec, rng: np.random.Generator, n_samples: int = 200_000,
                occlusion_margin: float = 0.02) -> Cloud:
    """Single-view cloud in the camera frame via a z-buffer over dense surface samples.

    Samples facing away from the camera are culled; each pixel keeps its
    nearest sample, and the kept samples are returned unchanged. A kept
    sample lying more than ``occlusion_margin`` behind the nearest depth in
    its 3 x 3 pixel neighbourhood is dropped, which closes sampling holes in
    occluding surfaces.
    """
    samples = sample_surface(scene, n_samples, rng)
    pts_c = view.world_to_camera(samples.points)
    nrm_c = samples.normals @ view.R
    facing = np.einsum("ij,ij->i", nrm_c, pts_c) < 0.0
    z = pts_c[:, 2]
    ok = facing & (z > view.near) & (z < view.far)
    u = np.floor(view.focal * pts_c[:, 0] / np.where(ok, z, 1.0) + view.cx + 0.5).astype(np.int64)
    v = np.floor(view.focal * pts_c[:, 1] / np.where(ok, z, 1.0) + view.cy + 0.5).astype(np.int64)
    ok &= (u >= 0) & (u < view.width) & (v >= 0) & (v < view.height)
    idx = np.flatnonzero(ok)
    if len(idx) == 0:
        log.warning("render_view: no visible surface")
        return Cloud(np.zeros((0, 3)), "camera", np.zeros((0, 3)))
    pix = v[idx] * view.width + u[idx]
    order = np.lexsort((z[idx], pix))
    first = np.ones(len(order), dtype=bool)
    first[1:] = pix[order][1:] != pix[order][:-1]
    keep = idx[order[first]]
    # a pixel the front surface missed by chance must not show what lies behind it
    depth = np.full((view.height + 2, view.width + 2), np.inf)
    depth[v[keep] + 1, u[keep] + 1] = z[keep]
    nearest = np.min([depth[1 + dy : view.height + 1 + dy, 1 + dx : view.width + 1 + dx]
                      for dy in (-1, 0, 1) for dx in (-1, 0, 1)], axis=0)
    keep = np.sort(keep[z[keep] <= nearest[v[keep], u[keep]] + occlusion_margin])
    return Cloud(pts_c[keep], "camera", nrm_c[keep] / np.linalg.norm(nrm_c[keep], axis=1, keepdims=True))


def transform_contact(g: ContactGrasp, R: np.ndarray, t: np.ndarray) -> ContactGrasp:
    """Apply ``x -> R x + t`` to a contact grasp."""
    return ContactGrasp(R @ g.c + t, R @ g.a, R @ g.b, g.width)


def labels_in_camera(scene: Scene, view: ViewSpec) -> list[ContactGrasp]:
    return [transform_contact(g, view.R.T, -view.R.T @ view.t) for g, _ in scene.labels]


# ---------------------------------------------------------------------------
def _outward_approach(offset: np.ndarray, b: np.ndarray, rng: np.random.Generator, jitter: float):
    n = np.linalg.norm(offset)
    o = np.array([0.0, 0.0, 1.0]) + (0.5 * offset / n if n > 1e-3 else 0.0)
    if jitter > 0:
        o = o + rng.normal(0.0, jitter, size=3)
    a = o - (o @ b) * b
    if np.linalg.norm(a) < 1e-6:
        r = rng.normal(size=3)
        a = r - (r @ b) * b
        if np.linalg.norm(a) < 1e-6:
            return None
    return a / np.linalg.norm(a)


def gen_antipodal_labels(scene: Scene, count: int, rng: np.random.Generator, friction_half_angle: float = 21.8,
                         gripper: GripperModel | None = None, n_surface: int = 6000,
                         budget_factor: int = 30, approach_jitter: float = 0.0) -> list[tuple[ContactGrasp, float]]:
    """Rejection-sample antipodal contact pairs on the scene surface.

    A pair (p1, p2) is kept when the segment between them lies inside both
    friction cones and is no longer than the gripper opening. The approach is
    the direction perpendicular to the baseline closest to "outward": away
    from the object center and up from the table, optionally perturbed by
    Gaussian noise of scale ``approach_jitter``. Quality is the cosine of the
    normals' misalignment.
    """
    if not 0.0 < friction_half_angle <= 45.0:
        raise ArgumentError(f"friction half-angle must lie in (0, 45] degrees, got {friction_half_angle}")
    gripper = gripper or GripperModel()
    surf = sample_surface(scene, n_surface, rng)
    P, Nrm = surf.points, surf.normals
    cos_cone = np.cos(np.deg2rad(friction_half_angle))
    center = scene.center()
    labels: list[tuple[ContactGrasp, float]] = []
    for i in rng.permutation(len(P))[: count * budget_factor]:
        if len(labels) >= count:
            break
        d = P - P[i]
        sep = np.linalg.norm(d, axis=1)
        cand = (sep > 1e-4) & (sep <= gripper.w_max)
        if not cand.any():
            continue
        u = d[cand] / sep[cand][:, None]
        c1 = u @ -Nrm[i]
        c2 = np.einsum("ij,ij->i", u, Nrm[cand])
        good = (c1 >= cos_cone) & (c2 >= cos_cone)
        if not good.any():
            continue
        choice = np.flatnonzero(cand)[good][np.argmax(np.minimum(c1, c2)[good])]
        b = P[choice] - P[i]
        width = float(np.linalg.norm(b))
        b /= width
        a = _outward_approach(0.5 * (P[i] + P[choice]) - center, b, rng, approach_jitter)
        if a is None:
            continue
        quality = float(-Nrm[i] @ Nrm[choice])
        labels.append((ContactGrasp(P[i], a, b, width), quality))
    if not labels:
        log.warning("gen_antipodal_labels: no antipodal pairs found")
    return labels
