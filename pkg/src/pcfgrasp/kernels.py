"""Point-cloud kernels: farthest-point sampling, ball query, k-NN, label association.

All kernels take either a :class:`~pcfgrasp.cloud.Cloud` or an ``N x 3``
array. Squared distances are always formed as ``dx*dx + dy*dy + dz*dz`` in
float64, so the fast paths and the brute-force oracles at the bottom of this
module agree bit for bit, including tie-breaking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .cloud import Cloud
from .errors import ArgumentError

GRID_MIN_POINTS = 256
FPS_BLOCK = 64
LABEL_RADIUS = 0.002


def _points(x) -> np.ndarray:
    if isinstance(x, Cloud):
        return x.points
    pts = np.asarray(x, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ArgumentError(f"expected an N x 3 point array, got shape {pts.shape}")
    return pts


@dataclass(frozen=True)
class NeighborGroup:
    centers: np.ndarray  # (M,) indices into the query cloud
    neighbor_idx: np.ndarray  # (M, K) indices into the source cloud
    valid_count: np.ndarray  # (M,)

    @property
    def fanout(self) -> int:
        return self.neighbor_idx.shape[1]


# ---------------------------------------------------------------------------
# farthest-point sampling
# ---------------------------------------------------------------------------
@numba.njit(cache=True, boundscheck=False)
def _fps_linear(x, y, z, n, start):
    N = x.shape[0]
    d = np.full(N, np.inf)
    out = np.empty(n, np.int64)
    cur = start
    for i in range(n):
        out[i] = cur
        cx, cy, cz = x[cur], y[cur], z[cur]
        d[cur] = -1.0
        for j in range(N):
            dx = x[j] - cx
            dy = y[j] - cy
            dz = z[j] - cz
            dd = dx * dx + dy * dy + dz * dz
            if dd < d[j]:
                d[j] = dd
        cur = np.argmax(d)
    return out


@numba.njit(cache=True, boundscheck=False)
def _fps_blocked(x, y, z, orig, bstart, bend, n, start_pos):
    # x, y, z are in spatially sorted order; orig maps back to input indices.
    N = x.shape[0]
    nb = bstart.shape[0]
    d = np.full(N, np.inf)
    lo = np.empty((nb, 3))
    hi = np.empty((nb, 3))
    bd = np.full(nb, np.inf)  # running max of d within each block
    bi = np.empty(nb, np.int64)  # position attaining it (lowest original index on ties)
    blk = np.empty(N, np.int64)
    for b in range(nb):
        s = bstart[b]
        lo[b, 0] = hi[b, 0] = x[s]
        lo[b, 1] = hi[b, 1] = y[s]
        lo[b, 2] = hi[b, 2] = z[s]
        best = s
        for j in range(s, bend[b]):
            blk[j] = b
            lo[b, 0] = min(lo[b, 0], x[j])
            hi[b, 0] = max(hi[b, 0], x[j])
            lo[b, 1] = min(lo[b, 1], y[j])
            hi[b, 1] = max(hi[b, 1], y[j])
            lo[b, 2] = min(lo[b, 2], z[j])
            hi[b, 2] = max(hi[b, 2], z[j])
            if orig[j] < orig[best]:
                best = j
        bi[b] = best

    out = np.empty(n, np.int64)
    cur = start_pos
    for i in range(n):
        out[i] = orig[cur]
        cx, cy, cz = x[cur], y[cur], z[cur]
        d[cur] = -1.0
        cb = blk[cur]
        for b in range(nb):
            # squared distance from the new pick to the block's bounding box;
            # no point in the block can shrink its distance when gap >= block max
            gap = 0.0
            t = lo[b, 0] - cx
            if t > 0.0:
                gap += t * t
            else:
                t = cx - hi[b, 0]
                if t > 0.0:
                    gap += t * t
            t = lo[b, 1] - cy
            if t > 0.0:
                gap += t * t
            else:
                t = cy - hi[b, 1]
                if t > 0.0:
                    gap += t * t
            t = lo[b, 2] - cz
            if t > 0.0:
                gap += t * t
            else:
                t = cz - hi[b, 2]
                if t > 0.0:
                    gap += t * t
            if gap >= bd[b] and b != cb:
                continue
            s = bstart[b]
            m = -np.inf
            mi = s
            for j in range(s, bend[b]):
                dx = x[j] - cx
                dy = y[j] - cy
                dz = z[j] - cz
                dd = dx * dx + dy * dy + dz * dz
                if dd < d[j]:
                    d[j] = dd
                v = d[j]
                if v > m or (v == m and orig[j] < orig[mi]):
                    m = v
                    mi = j
            bd[b] = m
            bi[b] = mi
        m = -np.inf
        mb = 0
        for b in range(nb):
            v = bd[b]
            if v > m or (v == m and orig[bi[b]] < orig[bi[mb]]):
                m = v
                mb = b
        cur = bi[mb]
    return out


def _spread_bits(v: np.ndarray) -> np.ndarray:
    v = v & np.uint64(0x3FF)
    v = (v | (v << np.uint64(16))) & np.uint64(0x30000FF)
    v = (v | (v << np.uint64(8))) & np.uint64(0x300F00F)
    v = (v | (v << np.uint64(4))) & np.uint64(0x30C30C3)
    v = (v | (v << np.uint64(2))) & np.uint64(0x9249249)
    return v


def morton_order(points: np.ndarray, bits: int = 10) -> np.ndarray:
    """Stable permutation sorting points along a Z-order curve."""
    lo = points.min(axis=0)
    span = np.maximum(points.max(axis=0) - lo, 1e-12)
    g = 1 << bits
    cell = np.minimum(((points - lo) / span * g).astype(np.uint64), np.uint64(g - 1))
    key = _spread_bits(cell[:, 0]) | (_spread_bits(cell[:, 1]) << np.uint64(1))
    key |= _spread_bits(cell[:, 2]) << np.uint64(2)
    return np.argsort(key, kind="stable")


def fps(cloud, n: int, start: int = 0) -> np.ndarray:
    """Greedy farthest-point sampling; returns ``n`` indices, the first being ``start``.

    Each subsequent pick maximises the distance to the already-picked set,
    ties going to the lowest index.
    """
    pts = _points(cloud)
    N = len(pts)
    if N == 0:
        raise ArgumentError("fps: empty cloud")
    if not 1 <= n <= N:
        raise ArgumentError(f"fps: cannot pick {n} points from {N}")
    if not 0 <= start < N:
        raise ArgumentError(f"fps: start index {start} out of range for {N} points")
    if N < GRID_MIN_POINTS:
        x, y, z = (np.ascontiguousarray(pts[:, i]) for i in range(3))
        return _fps_linear(x, y, z, n, start)
    order = morton_order(pts)
    sorted_pts = pts[order]
    nb = (N + FPS_BLOCK - 1) // FPS_BLOCK
    bstart = np.arange(nb, dtype=np.int64) * FPS_BLOCK
    bend = np.minimum(bstart + FPS_BLOCK, N)
    pos = np.empty(N, dtype=np.int64)
    pos[order] = np.arange(N)
    x, y, z = (np.ascontiguousarray(sorted_pts[:, i]) for i in range(3))
    return _fps_blocked(x, y, z, order.astype(np.int64), bstart, bend, n, pos[start])


# ---------------------------------------------------------------------------
# ball query
# ---------------------------------------------------------------------------
@numba.njit(cache=True, boundscheck=False)
def _ball_linear(src, ctr, r2, k, pad_self):
    M = ctr.shape[0]
    N = src.shape[0]
    idx = np.empty((M, k), np.int64)
    cnt = np.zeros(M, np.int64)
    for m in range(M):
        cx, cy, cz = ctr[m, 0], ctr[m, 1], ctr[m, 2]
        c = 0
        for j in range(N):
            dx = src[j, 0] - cx
            dy = src[j, 1] - cy
            dz = src[j, 2] - cz
            if dx * dx + dy * dy + dz * dz <= r2:
                idx[m, c] = j
                c += 1
                if c == k:
                    break
        cnt[m] = c
        fill = idx[m, 0] if c > 0 else pad_self[m]
        for s in range(c, k):
            idx[m, s] = fill
    return idx, cnt


@numba.njit(cache=True, boundscheck=False)
def _ball_grid(src, ctr, r2, k, pad_self, order, cell_start, cell_end, lo, cell, dims):
    M = ctr.shape[0]
    idx = np.empty((M, k), np.int64)
    cnt = np.zeros(M, np.int64)
    heads = np.empty(27, np.int64)
    tails = np.empty(27, np.int64)
    for m in range(M):
        cx, cy, cz = ctr[m, 0], ctr[m, 1], ctr[m, 2]
        gx = int(np.floor((cx - lo[0]) / cell))
        gy = int(np.floor((cy - lo[1]) / cell))
        gz = int(np.floor((cz - lo[2]) / cell))
        nl = 0
        for ox in range(-1, 2):
            ix = gx + ox
            if ix < 0 or ix >= dims[0]:
                continue
            for oy in range(-1, 2):
                iy = gy + oy
                if iy < 0 or iy >= dims[1]:
                    continue
                for oz in range(-1, 2):
                    iz = gz + oz
                    if iz < 0 or iz >= dims[2]:
                        continue
                    key = (ix * dims[1] + iy) * dims[2] + iz
                    if cell_end[key] > cell_start[key]:
                        heads[nl] = cell_start[key]
                        tails[nl] = cell_end[key]
                        nl += 1
        # k-way merge of per-cell index lists (each ascending) in global index order
        c = 0
        while c < k:
            best = -1
            bl = -1
            for l in range(nl):
                if heads[l] < tails[l]:
                    v = order[heads[l]]
                    if best < 0 or v < best:
                        best = v
                        bl = l
            if bl < 0:
                break
            heads[bl] += 1
            dx = src[best, 0] - cx
            dy = src[best, 1] - cy
            dz = src[best, 2] - cz
            if dx * dx + dy * dy + dz * dz <= r2:
                idx[m, c] = best
                c += 1
        cnt[m] = c
        fill = idx[m, 0] if c > 0 else pad_self[m]
        for s in range(c, k):
            idx[m, s] = fill
    return idx, cnt


def query_ball(src, centers, radius: float, k: int, center_idx=None) -> NeighborGroup:
    """Up to ``k`` source points within ``radius`` of each center, in source index order.

    Slots beyond the valid count repeat the first valid neighbour. A center
    with no neighbour at all is padded with its own index (``center_idx[m]``
    when given, else ``m``) and reports ``valid_count == 0``.
    """
    if radius <= 0:
        raise ArgumentError(f"query_ball: radius must be positive, got {radius}")
    if k < 1:
        raise ArgumentError(f"query_ball: fan-out must be >= 1, got {k}")
    s = _points(src)
    c = _points(centers)
    M = len(c)
    pad = np.arange(M, dtype=np.int64) if center_idx is None else np.asarray(center_idx, dtype=np.int64)
    r2 = float(radius) * float(radius)
    if len(s) == 0:
        idx = np.repeat(pad[:, None], k, axis=1)
        return NeighborGroup(np.arange(M), idx, np.zeros(M, dtype=np.int64))
    if len(s) < GRID_MIN_POINTS:
        idx, cnt = _ball_linear(s, c, r2, int(k), pad)
    else:
        idx, cnt = _ball_grid(s, c, r2, int(k), pad, *_build_grid(s, float(radius)))
    return NeighborGroup(np.arange(M), idx, cnt)


def _build_grid(pts: np.ndarray, cell: float):
    lo = pts.min(axis=0)
    dims = np.maximum(np.floor((pts.max(axis=0) - lo) / cell).astype(np.int64) + 1, 1)
    # very fine grids over large extents would waste memory; coarsen instead
    while np.prod(dims.astype(np.float64)) > 4 * len(pts) + 4096:
        cell *= 2.0
        dims = np.maximum(np.floor((pts.max(axis=0) - lo) / cell).astype(np.int64) + 1, 1)
    g = np.floor((pts - lo) / cell).astype(np.int64)
    g = np.minimum(g, dims - 1)
    keys = (g[:, 0] * dims[1] + g[:, 1]) * dims[2] + g[:, 2]
    order = np.argsort(keys, kind="stable").astype(np.int64)
    ncell = int(np.prod(dims))
    sorted_keys = keys[order]
    cell_start = np.searchsorted(sorted_keys, np.arange(ncell), side="left").astype(np.int64)
    cell_end = np.searchsorted(sorted_keys, np.arange(ncell), side="right").astype(np.int64)
    return order, cell_start, cell_end, lo, cell, dims


# ---------------------------------------------------------------------------
# k nearest neighbours and label association
# ---------------------------------------------------------------------------
def _sqdist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    dx = a[:, None, 0] - b[None, :, 0]
    dy = a[:, None, 1] - b[None, :, 1]
    dz = a[:, None, 2] - b[None, :, 2]
    return dx * dx + dy * dy + dz * dz


def knn(src, centers, k: int, chunk: int = 1024) -> NeighborGroup:
    """Exact ``k`` nearest source points per center, nearest first, ties by lowest index."""
    s = _points(src)
    c = _points(centers)
    if k < 1 or k > len(s):
        raise ArgumentError(f"knn: k={k} invalid for {len(s)} source points")
    out = np.empty((len(c), k), dtype=np.int64)
    for lo in range(0, len(c), chunk):
        d = _sqdist(c[lo : lo + chunk], s)
        out[lo : lo + chunk] = np.argsort(d, axis=1, kind="stable")[:, :k]
    return NeighborGroup(np.arange(len(c)), out, np.full(len(c), k, dtype=np.int64))


def knn_distances(src, centers, group: NeighborGroup) -> np.ndarray:
    s = _points(src)
    c = _points(centers)
    diff = s[group.neighbor_idx] - c[:, None, :]
    return np.sqrt(np.einsum("mkd,mkd->mk", diff, diff))


def associate_labels(contacts, label_points, radius: float = LABEL_RADIUS, chunk: int = 1024):
    """Mark each contact positive when a label point lies within ``radius``.

    Returns ``(positive, matched)`` where ``matched`` holds the nearest label
    index for positives and -1 elsewhere.
    """
    if radius <= 0:
        raise ArgumentError(f"associate_labels: radius must be positive, got {radius}")
    c = _points(contacts)
    if not isinstance(label_points, Cloud) and np.asarray(label_points).size == 0:
        label_points = np.zeros((0, 3))
    labels = _points(label_points)
    positive = np.zeros(len(c), dtype=bool)
    matched = np.full(len(c), -1, dtype=np.int64)
    if len(labels) == 0 or len(c) == 0:
        return positive, matched
    r2 = float(radius) * float(radius)
    for lo in range(0, len(c), chunk):
        d = _sqdist(c[lo : lo + chunk], labels)
        nearest = np.argmin(d, axis=1)
        best = d[np.arange(len(d)), nearest]
        hit = best <= r2
        positive[lo : lo + chunk] = hit
        matched[lo : lo + chunk] = np.where(hit, nearest, -1)
    return positive, matched


# ---------------------------------------------------------------------------
# brute-force oracles (independent of the fast paths above; used by tests)
# ---------------------------------------------------------------------------
@numba.njit(cache=True)
def _fps_brute(pts, n, start):
    picked = np.full(n, -1, dtype=np.int64)
    taken = np.zeros(len(pts), dtype=np.bool_)
    picked[0] = start
    taken[start] = True
    for s in range(1, n):
        best, best_i = -1.0, -1
        for i in range(len(pts)):
            if taken[i]:
                continue
            dmin = np.inf
            for q in range(s):
                j = picked[q]
                dx = pts[i, 0] - pts[j, 0]
                dy = pts[i, 1] - pts[j, 1]
                dz = pts[i, 2] - pts[j, 2]
                dmin = min(dmin, dx * dx + dy * dy + dz * dz)
            if dmin > best:
                best, best_i = dmin, i
        picked[s] = best_i
        taken[best_i] = True
    return picked


def fps_bruteforce(cloud, n: int, start: int = 0) -> np.ndarray:
    """O(n^2 N) max-min selection recomputing every distance from scratch."""
    return _fps_brute(_points(cloud), int(n), int(start))


@numba.njit(cache=True)
def _ball_brute(s, c, r2, k):
    out = np.full((len(c), k), -1, dtype=np.int64)
    for m in range(len(c)):
        hits = 0
        for j in range(len(s)):
            dx = s[j, 0] - c[m, 0]
            dy = s[j, 1] - c[m, 1]
            dz = s[j, 2] - c[m, 2]
            if dx * dx + dy * dy + dz * dz <= r2:
                out[m, hits] = j
                hits += 1
                if hits == k:
                    break
    return out


def query_ball_bruteforce(src, centers, radius: float, k: int):
    """Naive all-pairs ball query; returns the list of valid index lists per center."""
    r2 = float(radius) * float(radius)
    rows = _ball_brute(_points(src), _points(centers), r2, int(k))
    return [[int(j) for j in row if j >= 0] for row in rows]


@numba.njit(cache=True)
def _knn_brute(s, c, k):
    out = np.empty((len(c), k), dtype=np.int64)
    d = np.empty(len(s))
    for m in range(len(c)):
        for j in range(len(s)):
            dx = s[j, 0] - c[m, 0]
            dy = s[j, 1] - c[m, 1]
            dz = s[j, 2] - c[m, 2]
            d[j] = dx * dx + dy * dy + dz * dz
        used = np.zeros(len(s), dtype=np.bool_)
        # repeated selection of the smallest (distance, index) pair
        for q in range(k):
            best, best_j = np.inf, -1
            for j in range(len(s)):
                if not used[j] and (best_j < 0 or d[j] < best):
                    best, best_j = d[j], j
            out[m, q] = best_j
            used[best_j] = True
    return out


def knn_bruteforce(src, centers, k: int) -> np.ndarray:
    return _knn_brute(_points(src), _points(centers), int(k))
