"""Hypernetwork predicting a domain vector from a text/CLIP-style embedding.

Structure: an input projection to the hidden width, a shared backbone of
residual blocks, then one head per feature convolution of the target
generator. Each head is a short stack of residual blocks followed by an
output affine whose weight starts at zero and whose bias starts at one,
so a freshly initialized network maps every embedding to the identity
(all-ones) domain vector and adaptation starts exactly at the source
generator.

Each residual block computes

    x + W2 @ lrelu(W1 @ (standardize(x) * scale + shift) + b1) + b2

where standardize removes the mean and variance across features.

Parameters live in a flat name -> tensor dict, which keeps the optimizer
and the checkpoint format generic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import torch
from torch.nn import functional as F

from .errors import ConfigError, ShapeError
from .generator import GeneratorConfig, LayerLayout

__all__ = [
    "HDNConfig",
    "HDNParams",
    "init_hdn_params",
    "hdn_forward",
    "hdn_param_shapes",
    "hdn_parameter_count",
    "count_hdn_parameters",
]

_LEAK = 0.2
_STANDARDIZE_EPS = 1e-8

HDNParams = dict[str, torch.Tensor]


@dataclass(frozen=True)
class HDNConfig:
    """Shape description: embedding input, hidden width, per-layer head widths."""

    layer_widths: tuple[int, ...]
    embed_dim: int = 64
    hidden_dim: int = 512
    backbone_blocks: int = 10
    head_blocks: int = 5

    def __post_init__(self) -> None:
        if not self.layer_widths:
            raise ConfigError("layer_widths must not be empty")
        if any(w < 1 for w in self.layer_widths):
            raise ConfigError(f"layer widths must be positive, got {self.layer_widths}")
        for name in ("embed_dim", "hidden_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("backbone_blocks", "head_blocks"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        object.__setattr__(self, "layer_widths", tuple(self.layer_widths))

    @classmethod
    def for_generator(
        cls,
        gen_config: GeneratorConfig,
        embed_dim: int,
        hidden_dim: int = 512,
        backbone_blocks: int = 10,
        head_blocks: int = 5,
    ) -> "HDNConfig":
        layout = LayerLayout.from_config(gen_config)
        return cls(
            layer_widths=layout.in_channels,
            embed_dim=embed_dim,
            hidden_dim=hidden_dim,
            backbone_blocks=backbone_blocks,
            head_blocks=head_blocks,
        )

    @property
    def output_dim(self) -> int:
        return sum(self.layer_widths)

    @property
    def num_heads(self) -> int:
        return len(self.layer_widths)

    def layout(self) -> LayerLayout:
        return LayerLayout(in_channels=self.layer_widths)


def _block_keys(prefix: str) -> tuple[str, ...]:
    return tuple(f"{prefix}.{part}" for part in ("scale", "shift", "w1", "b1", "w2", "b2"))


def init_hdn_params(config: HDNConfig, seed: int = 0) -> HDNParams:
    """Fresh parameters; head outputs are pinned to the identity domain vector."""
    rng = torch.Generator().manual_seed(seed)
    hidden = config.hidden_dim
    params: HDNParams = {}

    def normal(shape, std: float) -> torch.Tensor:
        return torch.randn(shape, generator=rng, dtype=torch.float64) * std

    def add_block(prefix: str) -> None:
        std = 1.0 / math.sqrt(hidden)
        params[f"{prefix}.scale"] = torch.ones(hidden, dtype=torch.float64)
        params[f"{prefix}.shift"] = torch.zeros(hidden, dtype=torch.float64)
        params[f"{prefix}.w1"] = normal((hidden, hidden), std)
        params[f"{prefix}.b1"] = torch.zeros(hidden, dtype=torch.float64)
        params[f"{prefix}.w2"] = normal((hidden, hidden), std)
        params[f"{prefix}.b2"] = torch.zeros(hidden, dtype=torch.float64)

    params["input.weight"] = normal((hidden, config.embed_dim), 1.0 / math.sqrt(config.embed_dim))
    params["input.bias"] = torch.zeros(hidden, dtype=torch.float64)
    for i in range(config.backbone_blocks):
        add_block(f"backbone.{i}")
    for k, width in enumerate(config.layer_widths):
        for j in range(config.head_blocks):
            add_block(f"head.{k}.block.{j}")
        params[f"head.{k}.out.weight"] = torch.zeros((width, hidden), dtype=torch.float64)
        params[f"head.{k}.out.bias"] = torch.ones(width, dtype=torch.float64)
    return params


def _standardize(x: torch.Tensor) -> torch.Tensor:
    mean = x.mean(dim=-1, keepdim=True)
    var = x.var(dim=-1, unbiased=False, keepdim=True)
    return (x - mean) * torch.rsqrt(var + _STANDARDIZE_EPS)


def _resblock(x: torch.Tensor, params: HDNParams, prefix: str) -> torch.Tensor:
    scale, shift, w1, b1, w2, b2 = (params[k] for k in _block_keys(prefix))
    h = _standardize(x) * scale + shift
    h = F.leaky_relu(h @ w1.T + b1, _LEAK)
    return x + h @ w2.T + b2


def hdn_forward(config: HDNConfig, params: HDNParams, embeddings: torch.Tensor) -> torch.Tensor:
    """Predict flat domain vectors: (n, embed_dim) -> (n, output_dim).

    A single (embed_dim,) vector is accepted and returns (output_dim,).
    """
    squeeze = embeddings.ndim == 1
    if squeeze:
        embeddings = embeddings.unsqueeze(0)
    if embeddings.ndim != 2 or embeddings.shape[1] != config.embed_dim:
        raise ShapeError(
            f"embeddings must be (n, {config.embed_dim}), got {tuple(embeddings.shape)}"
        )
    x = embeddings.to(torch.float64) @ params["input.weight"].T + params["input.bias"]
    for i in range(config.backbone_blocks):
        x = _resblock(x, params, f"backbone.{i}")
    pieces = []
    for k in range(config.num_heads):
        h = x
        for j in range(config.head_blocks):
            h = _resblock(h, params, f"head.{k}.block.{j}")
        pieces.append(h @ params[f"head.{k}.out.weight"].T + params[f"head.{k}.out.bias"])
    out = torch.cat(pieces, dim=1)
    return out.squeeze(0) if squeeze else out


def hdn_param_shapes(config: HDNConfig) -> dict[str, tuple[int, ...]]:
    """Name -> shape map matching init_hdn_params, without allocating tensors."""
    hidden = config.hidden_dim
    shapes: dict[str, tuple[int, ...]] = {}

    def add_block(prefix: str) -> None:
        shapes[f"{prefix}.scale"] = (hidden,)
        shapes[f"{prefix}.shift"] = (hidden,)
        shapes[f"{prefix}.w1"] = (hidden, hidden)
        shapes[f"{prefix}.b1"] = (hidden,)
        shapes[f"{prefix}.w2"] = (hidden, hidden)
        shapes[f"{prefix}.b2"] = (hidden,)

    shapes["input.weight"] = (hidden, config.embed_dim)
    shapes["input.bias"] = (hidden,)
    for i in range(config.backbone_blocks):
        add_block(f"backbone.{i}")
    for k, width in enumerate(config.layer_widths):
        for j in range(config.head_blocks):
            add_block(f"head.{k}.block.{j}")
        shapes[f"head.{k}.out.weight"] = (width, hidden)
        shapes[f"head.{k}.out.bias"] = (width,)
    return shapes


def hdn_parameter_count(config: HDNConfig) -> int:
    """Closed-form parameter count for the given shape."""
    hidden = config.hidden_dim
    per_block = 2 * hidden * hidden + 4 * hidden
    total = hidden * config.embed_dim + hidden
    total += config.backbone_blocks * per_block
    for width in config.layer_widths:
        total += config.head_blocks * per_block
        total += width * hidden + width
    return total


def count_hdn_parameters(params: HDNParams) -> int:
    return sum(t.numel() for t in params.values())
