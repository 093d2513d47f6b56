"""Check the fast point kernels against their naive oracles, then time them.

Run:  python demos/kernel_timing.py
"""

import json

import numpy as np

from pcfgrasp import bench
from pcfgrasp.kernels import fps, fps_bruteforce, query_ball, query_ball_bruteforce

rng = np.random.default_rng(0)
pts = rng.uniform(0, 0.3, size=(2000, 3))

same = np.array_equal(fps(pts, 128), fps_bruteforce(pts, 128))
print(f"fps 128 of 2000 agrees with the max-min oracle: {same}")

group = query_ball(pts, pts[:200], 0.03, 32)
oracle = query_ball_bruteforce(pts, pts[:200], 0.03, 32)
agree = all(set(group.neighbor_idx[m, : group.valid_count[m]].tolist()) == set(hits)
            for m, hits in enumerate(oracle))
print(f"ball query agrees with all-pairs search: {agree}")

for kernel, n, m in (("fps", 20_000, 2048), ("query_ball", 20_000, 2048), ("pcf_forward", 2048, 1024)):
    rec = bench.run(kernel, n, m, repeats=5)
    print(json.dumps({k: rec[k] for k in ("kernel", "n", "mean_ms", "p95_ms")}))
