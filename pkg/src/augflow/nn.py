"""MLP construction on top of the autodiff tape.

Networks are plain weight/bias lists; ``mlp_forward`` records the tape for
training while ``mlp_apply`` runs the identical arithmetic on raw arrays for
rollouts and evaluation, so both paths produce bit-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from augflow.backend import kernels as K
from augflow import tensor as T


@dataclass(frozen=True)
class MlpSpec:
    """Fully-connected network shape: linear layers with a leaky rectifier
    between them and a linear final layer."""

    layer_sizes: tuple[int, ...]
    negative_slope: float = 0.01

    def __post_init__(self):
        if len(self.layer_sizes) < 2:
            raise ValueError("MlpSpec needs at least input and output sizes")
        if any(s <= 0 for s in self.layer_sizes):
            raise ValueError("layer sizes must be positive")
        if not 0.0 < self.negative_slope < 1.0:
            raise ValueError("negative slope must be in (0, 1)")


@dataclass
class Mlp:
    spec: MlpSpec
    weights: list[T.Tensor] = field(default_factory=list)
    biases: list[T.Tensor] = field(default_factory=list)

    def parameters(self) -> list[T.Tensor]:
        return list(self.weights) + list(self.biases)

    @property
    def in_width(self) -> int:
        return self.spec.layer_sizes[0]

    @property
    def out_width(self) -> int:
        return self.spec.layer_sizes[-1]


def seed_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def gaussian_init(
    rng: np.random.Generator, spec: MlpSpec, requires_grad: bool = True
) -> Mlp:
    """Weights ~ N(0, 1/fan_in), biases zero."""
    net = Mlp(spec)
    sizes = spec.layer_sizes
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))
        net.weights.append(T.Tensor(w, requires_grad=requires_grad))
        net.biases.append(T.Tensor(np.zeros(fan_out), requires_grad=requires_grad))
    return net


def mlp_forward(net: Mlp, x: T.Tensor) -> T.Tensor:
    """Tape-recorded forward pass for a [N, in_width] batch."""
    if x.data.ndim != 2 or x.data.shape[1] != net.in_width:
        raise ValueError(
            f"input width {x.data.shape} incompatible with spec {net.spec.layer_sizes}"
        )
    h = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        hw = T.matmul(h, w)
        h = T.bias_add(hw, b) if i == last else T.bias_leaky(hw, b, net.spec.negative_slope)
    return h


def mlp_apply(net: Mlp, x: np.ndarray) -> np.ndarray:
    """Raw forward pass (no tape); same arithmetic as mlp_forward."""
    if x.ndim != 2 or x.shape[1] != net.in_width:
        raise ValueError(
            f"input width {x.shape} incompatible with spec {net.spec.layer_sizes}"
        )
    h = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        hw = h @ w.data
        h = K.bias_add_fwd(hw, b.data) if i == last else K.bias_leaky_fwd(
            hw, b.data, net.spec.negative_slope
        )
    return h


def named_parameters(prefix: str, net: Mlp) -> list[tuple[str, T.Tensor]]:
    out = []
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        out.append((f"{prefix}.w{i}", w))
        out.append((f"{prefix}.b{i}", b))
    return out
