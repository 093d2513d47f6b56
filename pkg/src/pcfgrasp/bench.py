"""Wall-clock timing of the point kernels and the feature layer."""

from __future__ import annotations

import os
import platform
import time

import numba
import numpy as np

from .cloud import Cloud
from .errors import ArgumentError
from .kernels import fps, query_ball
from .pcf import PcfConfig, init_pcf_params, pcf_forward

KERNELS = ("fps", "query_ball", "pcf_forward")


def hardware_note() -> dict:
    cpu = platform.processor() or platform.machine()
    try:
        with open("/proc/cpuinfo") as fh:
            for line in fh:
                if line.startswith("model name"):
                    cpu = line.split(":", 1)[1].strip()
                    break
    except OSError:
        pass
    return {"cpu": cpu, "logical_cores": os.cpu_count(), "python": platform.python_version(),
            "numpy": np.__version__, "numba": numba.__version__, "system": platform.system()}


def _time(fn, repeats: int, warmup: int) -> np.ndarray:
    for _ in range(warmup):
        fn()
    out = np.empty(repeats)
    for i in range(repeats):
        t0 = time.perf_counter()
        fn()
        out[i] = (time.perf_counter() - t0) * 1e3
    return out


def run(kernel: str, n: int, m: int, repeats: int = 10, threads: int = 1, seed: int = 0,
        radius: float = 0.04, k: int = 64, warmup: int = 1) -> dict:
    """Time one kernel on a random cloud in a 0.3 m cube.

    ``n`` is the source cloud size; ``m`` the sample count (fps), center count
    (query_ball) or original-point count (pcf_forward, whose concatenated cloud
    then has ``n`` points).
    """
    if kernel not in KERNELS:
        raise ArgumentError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")
    if repeats < 1 or threads < 1:
        raise ArgumentError("repeats and threads must be at least 1")
    if not 1 <= m <= n:
        raise ArgumentError(f"need 1 <= m <= n, got m={m}, n={n}")
    numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.0, 0.3, size=(n, 3))
    if kernel == "fps":
        fn = lambda: fps(pts, m, 0)  # noqa: E731
        params = {"m": m, "start": 0}
    elif kernel == "query_ball":
        centers = pts[fps(pts, m, 0)]
        fn = lambda: query_ball(pts, centers, radius, k)  # noqa: E731
        params = {"m": m, "radius": radius, "k": k}
    else:
        cfg = PcfConfig()
        weights = init_pcf_params(cfg, rng)
        original = Cloud(pts[:m])
        concat = Cloud(pts)
        fn = lambda: pcf_forward(original, concat, cfg, weights)  # noqa: E731
        params = {"m": m, "radii": list(cfg.radii), "fanouts": list(cfg.fanouts)}
    ms = _time(fn, repeats, warmup)
    return {
        "kernel": kernel,
        "n": n,
        "params": params,
        "repeats": repeats,
        "mean_ms": float(ms.mean()),
        "p95_ms": float(np.percentile(ms, 95)),
        "threads": numba.get_num_threads(),
        "hardware": hardware_note(),
    }
