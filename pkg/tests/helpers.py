"""Shared test utilities: finite-difference gradient checks and small fixtures."""

from __future__ import annotations

import numpy as np

from pcfgrasp.tensor import Tensor

FD_STEP = 1e-5
FD_TOL = 1e-4


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if scale < 1e-12:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / scale)


def gradcheck(fn, inputs: dict[str, np.ndarray], h: float = FD_STEP) -> dict[str, float]:
    """Compare backward() against central differences for every named input.

    ``fn`` receives a dict of Tensors and returns a scalar Tensor. Returns
    the relative error per input.
    """
    inputs = {k: np.array(v, dtype=np.float64) for k, v in inputs.items()}
    leaves = {k: Tensor(v.copy(), requires_grad=True) for k, v in inputs.items()}
    out = fn(leaves)
    out.backward()
    errors = {}
    for name, x in inputs.items():
        analytic = leaves[name].grad if leaves[name].grad is not None else np.zeros_like(x)
        numeric = np.zeros_like(x)
        flat = numeric.reshape(-1)
        for i in range(x.size):
            plus = {k: v.copy() for k, v in inputs.items()}
            minus = {k: v.copy() for k, v in inputs.items()}
            plus[name].reshape(-1)[i] += h
            minus[name].reshape(-1)[i] -= h
            fp = fn({k: Tensor(v) for k, v in plus.items()}).data
            fm = fn({k: Tensor(v) for k, v in minus.items()}).data
            flat[i] = (float(fp) - float(fm)) / (2 * h)
        errors[name] = relative_error(analytic, numeric)
    return errors


def away_from_zero(rng: np.random.Generator, shape, margin: float = 0.05) -> np.ndarray:
    """Uniform in [-1, 1] with |x| >= margin, so kinks at zero stay outside the FD stencil."""
    x = rng.uniform(margin, 1.0, size=shape)
    return x * rng.choice([-1.0, 1.0], size=shape)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_frame(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Random orthonormal (a, b) pair."""
    R = random_rotation(rng)
    return R[:, 2], R[:, 0]
