"""Fit the network to a single rendered cylinder and watch the loss fall.

Run:  python demos/overfit_one_scene.py [steps]

Uses a narrower feature stage and 256 points so a few hundred steps take
about a minute on one core.
"""

import sys

import numpy as np

from pcfgrasp.net import NetConfig
from pcfgrasp.pcf import PcfConfig
from pcfgrasp.pipeline import prepare_example
from pcfgrasp.scene import gen_antipodal_labels, labels_in_camera, make_scene, random_view, render_view
from pcfgrasp.train import fit, init_params

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 300
rng = np.random.default_rng(0)

scene = make_scene("cylinder", rng)
scene.labels = gen_antipodal_labels(scene, 1800, rng, n_surface=8000)
view = random_view(scene, rng)
cloud = render_view(scene, view, rng)

pcf = PcfConfig(fanouts=(16, 16, 32))
net = NetConfig(n_points=256, sa_centroids=(64, 16), sa_fanouts=((16, 16, 32), (16, 16, 32)),
                trunk_width=256, head_width=256)
example = prepare_example("cylinder-0", cloud, labels_in_camera(scene, view), pcf, net)
print(f"{example.labels.n_positive} of {net.n_points} points lie on a label contact")

history = fit([example], init_params(pcf, net, 0), steps, pcf, net, log_every=0)
for rec in history[:: max(1, steps // 10)] + [history[-1]]:
    print(f"step {rec['step']:4d}  total {rec['l_total']:.4f}  bce {rec['l_bce']:.4f}  "
          f"adds {rec['l_adds']:.4f}  width {rec['l_width']:.4f}")
print(f"loss ratio last/first: {history[-1]['l_total'] / history[0]['l_total']:.3f}")
