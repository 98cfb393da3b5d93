"""Style-modulated convolution with channel-wise domain scaling.

A convolution weight tensor has shape (out_channels, in_channels, k, k).
Three reversible transforms are applied to it before the actual convolution:

  modulate:        w'[j, i, :, :] = style[i] * w[j, i, :, :]
  domain_modulate: w'[j, i, :, :] = domain[i] * w[j, i, :, :]
  demodulate:      w''[j] = w'[j] / sqrt(sum(w'[j]**2) + eps)

Demodulation runs last so that the domain scaling participates in the
per-output-channel normalization instead of rescaling the output directly.
A domain vector of all ones therefore reproduces the unmodified operator
bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch.nn import functional as F

from .errors import ShapeError

__all__ = [
    "ModConvConfig",
    "modulate",
    "domain_modulate",
    "demodulate",
    "mod_conv_forward",
]

_ALLOWED_KERNELS = (1, 3)


@dataclass(frozen=True)
class ModConvConfig:
    """Settings for one modulated convolution.

    demodulate: apply per-output-channel weight normalization (feature
        convolutions use this; RGB projections do not).
    eps: additive guard inside the demodulation square root.
    """

    demodulate: bool = True
    eps: float = 1e-8

    def __post_init__(self) -> None:
        if self.eps <= 0.0:
            raise ShapeError(f"eps must be positive, got {self.eps}")


def _check_weight(weight: torch.Tensor) -> None:
    if weight.ndim != 4:
        raise ShapeError(f"weight must be 4-d (out, in, k, k), got shape {tuple(weight.shape)}")
    if weight.shape[2] != weight.shape[3]:
        raise ShapeError(f"kernel must be square, got {tuple(weight.shape[2:])}")
    if weight.shape[2] not in _ALLOWED_KERNELS:
        raise ShapeError(f"kernel size must be one of {_ALLOWED_KERNELS}, got {weight.shape[2]}")


def _check_channel_vector(vec: torch.Tensor, in_channels: int, name: str) -> None:
    if vec.ndim != 1:
        raise ShapeError(f"{name} must be 1-d, got shape {tuple(vec.shape)}")
    if vec.shape[0] != in_channels:
        raise ShapeError(
            f"{name} length {vec.shape[0]} does not match in_channels {in_channels}"
        )


def modulate(weight: torch.Tensor, styles: torch.Tensor) -> torch.Tensor:
    """Scale each input-channel slice of the weight by the style value."""
    _check_weight(weight)
    _check_channel_vector(styles, weight.shape[1], "styles")
    return weight * styles.reshape(1, -1, 1, 1)


def domain_modulate(weight: torch.Tensor, domain: torch.Tensor) -> torch.Tensor:
    """Scale each input-channel slice of the weight by the domain value.

    Algebraically identical to style modulation; kept separate because the
    domain vector is the trainable object during adaptation and is sliced
    out of a longer flat vector per layer.
    """
    _check_weight(weight)
    _check_channel_vector(domain, weight.shape[1], "domain")
    return weight * domain.reshape(1, -1, 1, 1)


def demodulate(weight: torch.Tensor, eps: float = 1e-8) -> torch.Tensor:
    """Normalize each output-channel slice to (nearly) unit L2 norm.

    Every slice weight[j] is divided by sqrt(sum(weight[j]**2) + eps), so
    the squared norm of a demodulated slice is norm2 / (norm2 + eps): just
    below one for any non-degenerate slice, and an all-zero slice stays
    zero instead of producing NaNs.
    """
    _check_weight(weight)
    if eps <= 0.0:
        raise ShapeError(f"eps must be positive, got {eps}")
    sq = weight.square().sum(dim=(1, 2, 3), keepdim=True)
    return weight * torch.rsqrt(sq + eps)


def _check_input_map(x: torch.Tensor, in_channels: int) -> None:
    if x.ndim != 4:
        raise ShapeError(f"input must be 4-d (n, c, h, w), got shape {tuple(x.shape)}")
    if x.shape[1] != in_channels:
        raise ShapeError(
            f"input has {x.shape[1]} channels but weight expects {in_channels}"
        )
    h, w = x.shape[2], x.shape[3]
    for extent in (h, w):
        if extent < 1 or (extent & (extent - 1)) != 0:
            raise ShapeError(f"spatial extents must be powers of two, got {h}x{w}")


def mod_conv_forward(
    x: torch.Tensor,
    weight: torch.Tensor,
    styles: torch.Tensor,
    domain: torch.Tensor | None = None,
    config: ModConvConfig = ModConvConfig(),
) -> torch.Tensor:
    """Run one style-modulated (optionally domain-modulated) convolution.

    The style vector and optional domain vector are shared by every sample
    in the batch; callers that need per-sample vectors invoke this once per
    sample. Padding is k//2 with stride 1, so spatial size is preserved.
    """
    _check_weight(weight)
    _check_channel_vector(styles, weight.shape[1], "styles")
    _check_input_map(x, weight.shape[1])

    w = modulate(weight, styles)
    if domain is not None:
        w = domain_modulate(w, domain)
    if config.demodulate:
        w = demodulate(w, config.eps)
    return F.conv2d(x, w, padding=weight.shape[2] // 2)
