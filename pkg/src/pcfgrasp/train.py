"""Parameter initialisation, single training steps and a small training loop."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .errors import ArgumentError, TrainingError
from .grasp import GripperModel
from .layers import Params
from .losses import loss_total
from .net import NetConfig, PerPointPrediction, forward, init_net_params
from .optim import OptimizerState, adamw_step, step_decay
from .pcf import PcfConfig, init_pcf_params, pcf_forward
from .pipeline import TrainingExample
from .tensor import Tensor

log = logging.getLogger(__name__)


def init_params(pcf_cfg: PcfConfig, net_cfg: NetConfig, seed: int = 0) -> Params:
    rng = np.random.default_rng(seed)
    params = init_pcf_params(pcf_cfg, rng)
    params.update(init_net_params(net_cfg, rng))
    return params


def params_from_checkpoint(path) -> Params:
    return {k: Tensor(v, requires_grad=True, name=k) for k, v in load_checkpoint(path).items()}


def predict(example: TrainingExample, params: Params, pcf_cfg: PcfConfig, net_cfg: NetConfig) -> PerPointPrediction:
    F = pcf_forward(example.original, example.concat, pcf_cfg, params, example.groups)
    return forward(example.original, F, net_cfg, params, example.geometry)


def example_loss(example: TrainingExample, params: Params, pcf_cfg: PcfConfig, net_cfg: NetConfig,
                 gripper: GripperModel | None = None):
    pred = predict(example, params, pcf_cfg, net_cfg)
    return loss_total(pred, example.points, example.labels, net_cfg, gripper)


def train_step(batch: list[TrainingExample], params: Params, opt: OptimizerState, pcf_cfg: PcfConfig,
               net_cfg: NetConfig, gripper: GripperModel | None = None, lr: float | None = None) -> dict:
    """Forward, loss, backward and one AdamW update over the mean batch loss."""
    if not batch:
        raise ArgumentError("train_step needs at least one example")
    for p in params.values():
        p.zero_grad()
    terms_sum: dict[str, float] = {}
    scale = 1.0 / len(batch)
    for ex in batch:
        total, terms = example_loss(ex, params, pcf_cfg, net_cfg, gripper)
        if not np.isfinite(terms["l_total"]):
            raise TrainingError(f"non-finite loss in scene {ex.scene_id!r} (terms: {terms.get('non_finite')})")
        (total * scale).backward()
        for k in ("l_bce", "l_adds", "l_width", "l_total"):
            terms_sum[k] = terms_sum.get(k, 0.0) + terms[k] * scale
    adamw_step(params, None, opt, lr=lr)
    return terms_sum


def fit(examples: list[TrainingExample], params: Params, steps: int, pcf_cfg: PcfConfig, net_cfg: NetConfig,
        gripper: GripperModel | None = None, opt: OptimizerState | None = None, metrics_path=None,
        checkpoint_path=None, decay_every: int = 0, decay_factor: float = 1.0, log_every: int = 50) -> list[dict]:
    """Run ``steps`` full-batch updates; optionally append JSON-lines metrics and save a checkpoint."""
    opt = opt or OptimizerState(net_cfg.lr, net_cfg.weight_decay)
    history = []
    fh = open(metrics_path, "a") if metrics_path else None
    try:
        for step in range(steps):
            lr = step_decay(opt.learning_rate, step, decay_every, decay_factor)
            terms = train_step(examples, params, opt, pcf_cfg, net_cfg, gripper, lr=lr)
            record = {"step": step, **terms}
            history.append(record)
            if fh:
                fh.write(json.dumps(record) + "\n")
            if log_every and step % log_every == 0:
                log.info("step %d  total %.4f  bce %.4f  adds %.4f  width %.4f", step, terms["l_total"],
                         terms["l_bce"], terms["l_adds"], terms["l_width"])
    finally:
        if fh:
            fh.close()
    if checkpoint_path:
        Path(checkpoint_path).parent.mkdir(parents=True, exist_ok=True)
        save_checkpoint(checkpoint_path, params)
    return history
