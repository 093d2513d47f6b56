"""Point clouds and their ASCII PLY representation."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError

FRAMES = ("camera", "robot")


@dataclass(frozen=True)
class Cloud:
    """``N x 3`` points in meters, tagged with the frame they live in."""

    points: np.ndarray
    frame: str = "camera"
    normals: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "points", pts)
        if self.frame not in FRAMES:
            raise ValidationError(f"unknown frame {self.frame!r}; expected one of {FRAMES}")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("cloud has non-finite coordinates")
        if self.normals is not None:
            nrm = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
            if nrm.shape != pts.shape:
                raise ValidationError(f"normals shape {nrm.shape} != points shape {pts.shape}")
            if len(nrm) and np.max(np.abs(np.linalg.norm(nrm, axis=1) - 1.0)) > 1e-6:
                raise ValidationError("normals must have unit length")
            object.__setattr__(self, "normals", nrm)

    def __len__(self) -> int:
        return len(self.points)

    def subset(self, idx) -> "Cloud":
        idx = np.asarray(idx, dtype=np.int64)
        nrm = None if self.normals is None else self.normals[idx]
        return Cloud(self.points[idx], self.frame, nrm)


def write_ply(path, cloud: Cloud) -> None:
    has_normals = cloud.normals is not None
    lines = [
        "ply",
        "format ascii 1.0",
        f"comment frame {cloud.frame}",
        f"element vertex {len(cloud)}",
        "property float x",
        "property float y",
        "property float z",
    ]
    if has_normals:
        lines += ["property float nx", "property float ny", "property float nz"]
    lines.append("end_header")
    data = np.hstack([cloud.points, cloud.normals]) if has_normals else cloud.points
    body = "\n".join(" ".join(repr(float(v)) for v in row) for row in data)
    Path(path).write_text("\n".join(lines) + "\n" + body + ("\n" if len(data) else ""))


def read_ply(path) -> Cloud:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from None
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise FormatError(f"{path}: not a PLY file")
    frame = "camera"
    count = None
    props: list[str] = []
    in_vertex = False
    for i, line in enumerate(lines[1:], start=1):
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "format" and tok[1] != "ascii":
            raise FormatError(f"{path}: only ASCII PLY is supported")
        if tok[0] == "comment" and len(tok) >= 3 and tok[1] == "frame":
            frame = tok[2]
        elif tok[0] == "element":
            in_vertex = tok[1] == "vertex"
            if in_vertex:
                count = int(tok[2])
        elif tok[0] == "property" and in_vertex:
            props.append(tok[-1])
        elif tok[0] == "end_header":
            header_end = i
            break
    else:
        raise FormatError(f"{path}: missing end_header")
    if count is None or props[:3] != ["x", "y", "z"]:
        raise FormatError(f"{path}: vertex element must start with x, y, z")
    rows = lines[header_end + 1 : header_end + 1 + count]
    if len(rows) != count:
        raise FormatError(f"{path}: expected {count} vertices, found {len(rows)}")
    try:
        data = np.array([[float(v) for v in r.split()[: len(props)]] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{path}: bad vertex row ({exc})") from None
    data = data.reshape(count, len(props))
    normals = None
    if all(n in props for n in ("nx", "ny", "nz")):
        normals = data[:, [props.index("nx"), props.index("ny"), props.index("nz")]]
    return Cloud(data[:, :3], frame, normals)
