"""Shared MLP plumbing over :mod:`pcfgrasp.tensor`."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .tensor import Tensor, linear, relu

Params = dict[str, Tensor]


def init_linear(params: Params, name: str, fan_in: int, fan_out: int, rng: np.random.Generator) -> None:
    std = np.sqrt(2.0 / fan_in)
    params[f"{name}.W"] = Tensor(rng.normal(0.0, std, size=(fan_in, fan_out)), requires_grad=True, name=f"{name}.W")
    params[f"{name}.b"] = Tensor(np.zeros(fan_out), requires_grad=True, name=f"{name}.b")


def init_mlp(params: Params, prefix: str, fan_in: int, widths: Sequence[int], rng: np.random.Generator) -> None:
    for i, w in enumerate(widths):
        init_linear(params, f"{prefix}.l{i}", fan_in, w, rng)
        fan_in = w


def mlp(x: Tensor, params: Params, prefix: str, n_layers: int, final_relu: bool, start: int = 0) -> Tensor:
    """Apply layers ``start .. n_layers-1`` of an MLP initialised by :func:`init_mlp`."""
    for i in range(start, n_layers):
        x = linear(x, params[f"{prefix}.l{i}.W"], params[f"{prefix}.l{i}.b"])
        if i < n_layers - 1 or final_relu:
            x = relu(x)
    return x
