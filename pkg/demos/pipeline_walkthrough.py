"""Walk one synthetic scene through the whole grasp pipeline with the library API.

Run:  python demos/pipeline_walkthrough.py

The checkpoint is a random initialisation, so the grasps are not meant to be
good; the point is to show each stage and the shape of what it hands on.
"""

import numpy as np

from pcfgrasp.evaluate import evaluate
from pcfgrasp.net import NetConfig, decode_grasps, forward
from pcfgrasp.pcf import PcfConfig, concat_points, pcf_forward
from pcfgrasp.pipeline import complete, sample_original
from pcfgrasp.scene import gen_antipodal_labels, labels_in_camera, make_scene, random_view, render_view
from pcfgrasp.score_filter import RobotFrame, apply_filter
from pcfgrasp.train import init_params

rng = np.random.default_rng(0)

# 1. a cylinder on the table, with antipodal label grasps sampled from its mesh
scene = make_scene("cylinder", rng)
scene.labels = gen_antipodal_labels(scene, 200, rng)
print(f"scene: {scene.objects[0].kind} {scene.objects[0].params}, {len(scene.labels)} label grasps")

# 2. a single depth view; only the side facing the camera survives
view = random_view(scene, rng)
cloud = render_view(scene, view, rng)
print(f"view: {len(cloud)} visible points in the camera frame")

# 3. keep 1024 points and add the same number of completion points behind them
pcf_cfg, net_cfg = PcfConfig(), NetConfig()
original = sample_original(cloud, net_cfg.n_points)
completion = complete(original)
both = concat_points(original, completion)
print(f"completion: {len(original)} observed + {len(completion)} completed = {len(both)} points")

# 4. the shape feature: one 320-wide row per observed point
params = init_params(pcf_cfg, net_cfg, seed=0)
F = pcf_forward(original, both, pcf_cfg, params)
print(f"shape feature: {F.shape}")

# 5. per-point predictions decoded into 6-DoF poses
pred = forward(original, F, net_cfg, params)
poses = decode_grasps(pred, original).poses
print(f"proposals: {len(poses)}, score range {min(p.score for p in poses):.3f}..{max(p.score for p in poses):.3f}")

# 6. re-rank by how well each grasp faces a robot standing at (-0.6, 0, 0) in the world
frame = RobotFrame(np.array([-0.6, 0.0, 0.0]) - view.t, np.array([0.0, 0.0, 1.0]), view.R)
ranked = apply_filter(poses, frame)
best = ranked[0]
print(f"best after filtering: score {best.score:.3f} -> {best.filtered_score:.3f}, t = {np.round(best.t, 3)}")

# 7. compare against the labels seen from the same camera
metrics = evaluate(ranked, labels_in_camera(scene, view), cloud)
print("metrics:", {k: round(v, 3) if isinstance(v, float) else v for k, v in metrics.items()})
