"""Style-based convolutional image generator with per-layer domain scaling.

The generator has four parameter groups:

  mapping:   an MLP that turns a latent vector z into an intermediate
             latent w (leaky-ReLU slope 0.2 between layers),
  affine:    one linear map per style slot producing the per-channel
             style vector for that convolution,
  synthesis: the feature convolutions (kernel 3, demodulated) plus the
             learned constant input at 4x4,
  torgb:     one 1x1 projection to image channels per resolution, summed
             into the output through nearest-neighbor upsampled skips.

Resolutions go 4, 8, ..., max; resolution 4 has one feature convolution
and every later resolution has two (the first one upsamples its input),
so a generator spanning R resolutions has 1 + 2*(R-1) feature
convolutions. A flat domain vector holds one scale per input channel of
each feature convolution, concatenated in generation order; toRGB
projections are never domain-scaled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import torch
from torch.nn import functional as F

from .errors import ConfigError, ShapeError
from .modulated_conv import ModConvConfig, mod_conv_forward

__all__ = [
    "FULL_SCALE_CHANNELS",
    "TOY_CHANNELS",
    "GeneratorConfig",
    "full_scale_config",
    "toy_config",
    "ConvSpec",
    "build_conv_specs",
    "LayerLayout",
    "GeneratorParams",
    "init_generator_params",
    "Generator",
    "style_mix",
    "parameter_counts",
    "count_parameters",
]

DTYPE = torch.float64
LEAK = 0.2

# Channel widths of the production-scale synthesis network.
FULL_SCALE_CHANNELS: dict[int, int] = {
    4: 512,
    8: 512,
    16: 512,
    32: 512,
    64: 512,
    128: 256,
    256: 128,
    512: 64,
    1024: 32,
}

# Small widths used by the test fixtures; everything runs on CPU in seconds.
TOY_CHANNELS: dict[int, int] = {4: 64, 8: 64, 16: 32, 32: 16}


@dataclass(frozen=True)
class GeneratorConfig:
    """Static architecture description; all parameter shapes derive from it."""

    resolution_channels: Mapping[int, int] = field(
        default_factory=lambda: dict(TOY_CHANNELS)
    )
    latent_dim: int = 64
    mapping_layers: int = 2
    rgb_channels: int = 3

    def __post_init__(self) -> None:
        table = dict(self.resolution_channels)
        if not table:
            raise ConfigError("resolution_channels must not be empty")
        for res, ch in table.items():
            if not isinstance(res, int) or isinstance(res, bool):
                raise ConfigError(f"resolution keys must be ints, got {res!r}")
            if not isinstance(ch, int) or isinstance(ch, bool) or ch < 1:
                raise ConfigError(f"channel count for {res} must be a positive int, got {ch!r}")
        resolutions = sorted(table)
        if resolutions[0] != 4:
            raise ConfigError(f"lowest resolution must be 4, got {resolutions[0]}")
        for prev, cur in zip(resolutions, resolutions[1:]):
            if cur != prev * 2:
                raise ConfigError(
                    f"resolutions must double without gaps, got {prev} then {cur}"
                )
        if self.latent_dim < 1:
            raise ConfigError(f"latent_dim must be >= 1, got {self.latent_dim}")
        if self.mapping_layers < 0:
            raise ConfigError(f"mapping_layers must be >= 0, got {self.mapping_layers}")
        if self.rgb_channels < 1:
            raise ConfigError(f"rgb_channels must be >= 1, got {self.rgb_channels}")
        object.__setattr__(self, "resolution_channels", {r: table[r] for r in resolutions})

    @property
    def resolutions(self) -> tuple[int, ...]:
        return tuple(self.resolution_channels)

    @property
    def max_resolution(self) -> int:
        return self.resolutions[-1]


def full_scale_config() -> GeneratorConfig:
    """Production-scale architecture (1024x1024, 512-d latents)."""
    return GeneratorConfig(
        resolution_channels=dict(FULL_SCALE_CHANNELS),
        latent_dim=512,
        mapping_layers=8,
    )


def toy_config(**overrides) -> GeneratorConfig:
    """Small CPU-friendly architecture used throughout the test suite."""
    base = dict(
        resolution_channels=dict(TOY_CHANNELS),
        latent_dim=64,
        mapping_layers=2,
    )
    base.update(overrides)
    return GeneratorConfig(**base)


@dataclass(frozen=True)
class ConvSpec:
    """One convolution in generation order (feature conv or toRGB)."""

    resolution: int
    in_channels: int
    out_channels: int
    kernel: int
    upsample: bool
    is_rgb: bool
    feature_index: int | None


def build_conv_specs(config: GeneratorConfig) -> tuple[ConvSpec, ...]:
    """Enumerate all convolutions (and thus style slots) in generation order."""
    specs: list[ConvSpec] = []
    feature_index = 0
    prev_channels = config.resolution_channels[4]
    for res in config.resolutions:
        channels = config.resolution_channels[res]
        if res == 4:
            specs.append(ConvSpec(res, channels, channels, 3, False, False, feature_index))
            feature_index += 1
        else:
            specs.append(ConvSpec(res, prev_channels, channels, 3, True, False, feature_index))
            feature_index += 1
            specs.append(ConvSpec(res, channels, channels, 3, False, False, feature_index))
            feature_index += 1
        specs.append(ConvSpec(res, channels, config.rgb_channels, 1, False, True, None))
        prev_channels = channels
    return tuple(specs)


@dataclass(frozen=True)
class LayerLayout:
    """Maps a flat domain vector onto per-layer slices.

    Entry k covers the input channels of feature convolution k (generation
    order); toRGB projections take no slice.
    """

    in_channels: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.in_channels:
            raise ConfigError("layout needs at least one layer")
        if any(c < 1 for c in self.in_channels):
            raise ConfigError(f"layer widths must be positive, got {self.in_channels}")

    @classmethod
    def from_config(cls, config: GeneratorConfig) -> "LayerLayout":
        widths = tuple(
            spec.in_channels for spec in build_conv_specs(config) if not spec.is_rgb
        )
        return cls(in_channels=widths)

    @property
    def layer_count(self) -> int:
        return len(self.in_channels)

    @property
    def total_dim(self) -> int:
        return sum(self.in_channels)

    @property
    def offsets(self) -> tuple[int, ...]:
        out = [0]
        for c in self.in_channels:
            out.append(out[-1] + c)
        return tuple(out)

    @property
    def entries(self) -> tuple[tuple[int, int], ...]:
        return tuple(enumerate(self.in_channels))

    def _check_vector(self, domain: torch.Tensor) -> None:
        if domain.ndim != 1:
            raise ShapeError(f"domain vector must be 1-d, got shape {tuple(domain.shape)}")
        if domain.shape[0] != self.total_dim:
            raise ShapeError(
                f"domain vector has {domain.shape[0]} entries, layout expects {self.total_dim}"
            )

    def slice(self, domain: torch.Tensor, layer_index: int) -> torch.Tensor:
        """View of the domain entries belonging to one feature convolution."""
        self._check_vector(domain)
        if not 0 <= layer_index < self.layer_count:
            raise ShapeError(
                f"layer_index {layer_index} out of range for {self.layer_count} layers"
            )
        offsets = self.offsets
        return domain[offsets[layer_index] : offsets[layer_index + 1]]

    def split(self, domain: torch.Tensor) -> list[torch.Tensor]:
        self._check_vector(domain)
        return list(torch.split(domain, list(self.in_channels)))

    def concat(self, slices: Sequence[torch.Tensor]) -> torch.Tensor:
        if len(slices) != self.layer_count:
            raise ShapeError(
                f"expected {self.layer_count} slices, got {len(slices)}"
            )
        for piece, width in zip(slices, self.in_channels):
            if piece.ndim != 1 or piece.shape[0] != width:
                raise ShapeError(
                    f"slice of shape {tuple(piece.shape)} does not match width {width}"
                )
        return torch.cat(list(slices))

    def ones(self) -> torch.Tensor:
        """Identity domain vector: reproduces the source generator exactly."""
        return torch.ones(self.total_dim, dtype=DTYPE)


@dataclass
class GeneratorParams:
    """All trainable tensors, aligned with build_conv_specs order.

    mapping: (weight, bias) per mapping layer.
    affine:  (weight, bias) per style slot.
    conv:    weight per style slot (feature 3x3 or RGB 1x1).
    bias:    per-slot output bias.
    const:   learned 4x4 input block.
    """

    mapping: list[tuple[torch.Tensor, torch.Tensor]]
    affine: list[tuple[torch.Tensor, torch.Tensor]]
    conv: list[torch.Tensor]
    bias: list[torch.Tensor]
    const: torch.Tensor


def init_generator_params(config: GeneratorConfig, seed: int = 0) -> GeneratorParams:
    """Draw a fresh parameter set; the same seed always gives the same draws."""
    rng = torch.Generator().manual_seed(seed)
    dim = config.latent_dim

    def normal(shape, std: float) -> torch.Tensor:
        return torch.randn(shape, generator=rng, dtype=DTYPE) * std

    mapping = []
    mapping_std = math.sqrt(2.0 / (1.0 + LEAK**2)) / math.sqrt(dim)
    for _ in range(config.mapping_layers):
        mapping.append((normal((dim, dim), mapping_std), torch.zeros(dim, dtype=DTYPE)))

    affine: list[tuple[torch.Tensor, torch.Tensor]] = []
    conv: list[torch.Tensor] = []
    bias: list[torch.Tensor] = []
    affine_std = 0.2 / math.sqrt(dim)
    for spec in build_conv_specs(config):
        affine.append(
            (normal((spec.in_channels, dim), affine_std), torch.ones(spec.in_channels, dtype=DTYPE))
        )
        fan_in = spec.in_channels * spec.kernel * spec.kernel
        conv.append(
            normal((spec.out_channels, spec.in_channels, spec.kernel, spec.kernel), 1.0 / math.sqrt(fan_in))
        )
        bias.append(torch.zeros(spec.out_channels, dtype=DTYPE))

    const = torch.randn(
        (config.resolution_channels[4], 4, 4), generator=rng, dtype=DTYPE
    )
    return GeneratorParams(mapping=mapping, affine=affine, conv=conv, bias=bias, const=const)


def _upsample2x(x: torch.Tensor) -> torch.Tensor:
    return F.interpolate(x, scale_factor=2, mode="nearest")


class Generator:
    """Bundles a config, its conv layout, and one parameter set.

    Images come out in raw network range; mapping to [0, 1] happens only
    when files are written.
    """

    def __init__(
        self,
        config: GeneratorConfig,
        params: GeneratorParams | None = None,
        seed: int = 0,
    ) -> None:
        self.config = config
        self.specs = build_conv_specs(config)
        self.layout = LayerLayout.from_config(config)
        self.params = params if params is not None else init_generator_params(config, seed)
        if len(self.params.conv) != len(self.specs):
            raise ShapeError(
                f"params carry {len(self.params.conv)} convolutions, "
                f"architecture has {len(self.specs)}"
            )
        expected_const = (config.resolution_channels[4], 4, 4)
        if tuple(self.params.const.shape) != expected_const:
            raise ShapeError(
                f"const input has shape {tuple(self.params.const.shape)}, "
                f"expected {expected_const}"
            )

    @property
    def num_style_slots(self) -> int:
        return len(self.specs)

    def with_params(self, params: GeneratorParams) -> "Generator":
        return Generator(self.config, params=params)

    def map_latent(self, z: torch.Tensor) -> torch.Tensor:
        """Run the mapping MLP; zero mapping layers means identity."""
        squeeze = z.ndim == 1
        if squeeze:
            z = z.unsqueeze(0)
        if z.ndim != 2 or z.shape[1] != self.config.latent_dim:
            raise ShapeError(
                f"latents must be (n, {self.config.latent_dim}), got {tuple(z.shape)}"
            )
        w = z.to(DTYPE)
        for k, (weight, bias_vec) in enumerate(self.params.mapping):
            w = w @ weight.T + bias_vec
            if k < len(self.params.mapping) - 1:
                w = F.leaky_relu(w, LEAK)
        return w.squeeze(0) if squeeze else w

    def style(self, w: torch.Tensor, slot_index: int) -> torch.Tensor:
        """Affine style values for one slot; w is (latent_dim,) or (n, latent_dim)."""
        if not 0 <= slot_index < self.num_style_slots:
            raise ShapeError(
                f"slot_index {slot_index} out of range for {self.num_style_slots} slots"
            )
        weight, bias_vec = self.params.affine[slot_index]
        return w.to(DTYPE) @ weight.T + bias_vec

    def styles_from_slot_latents(self, w_slots: torch.Tensor) -> list[torch.Tensor]:
        """Per-slot styles from per-slot latents (n, num_slots, latent_dim)."""
        if w_slots.ndim != 3 or w_slots.shape[1] != self.num_style_slots:
            raise ShapeError(
                f"w_slots must be (n, {self.num_style_slots}, {self.config.latent_dim}), "
                f"got {tuple(w_slots.shape)}"
            )
        return [self.style(w_slots[:, k, :], k) for k in range(self.num_style_slots)]

    def broadcast_styles(self, w: torch.Tensor) -> list[torch.Tensor]:
        """Same latent for every slot (no mixing); w is (n, latent_dim)."""
        if w.ndim == 1:
            w = w.unsqueeze(0)
        return [self.style(w, k) for k in range(self.num_style_slots)]

    def _check_domain(self, domain: torch.Tensor | None, n: int) -> None:
        if domain is None:
            return
        if domain.ndim == 1:
            if domain.shape[0] != self.layout.total_dim:
                raise ShapeError(
                    f"domain vector has {domain.shape[0]} entries, "
                    f"layout expects {self.layout.total_dim}"
                )
        elif domain.ndim == 2:
            if domain.shape != (n, self.layout.total_dim):
                raise ShapeError(
                    f"batched domain must be ({n}, {self.layout.total_dim}), "
                    f"got {tuple(domain.shape)}"
                )
        else:
            raise ShapeError(f"domain must be 1-d or 2-d, got shape {tuple(domain.shape)}")

    def synthesize(
        self,
        styles: Sequence[torch.Tensor],
        domain: torch.Tensor | None = None,
    ) -> torch.Tensor:
        """Render a batch from per-slot style vectors.

        styles: one (n, channels) tensor per style slot.
        domain: None for the source generator, a flat (total_dim,) vector
            shared by the batch, or (n, total_dim) with one vector per sample.
        """
        if len(styles) != self.num_style_slots:
            raise ShapeError(
                f"expected {self.num_style_slots} style tensors, got {len(styles)}"
            )
        n = styles[0].shape[0]
        for spec, vec in zip(self.specs, styles):
            if vec.ndim != 2 or vec.shape != (n, spec.in_channels):
                raise ShapeError(
                    f"style tensor for a {spec.in_channels}-channel slot must be "
                    f"({n}, {spec.in_channels}), got {tuple(vec.shape)}"
                )
        self._check_domain(domain, n)

        outputs = []
        for i in range(n):
            row = domain if domain is None or domain.ndim == 1 else domain[i]
            outputs.append(self._synthesize_one([vec[i] for vec in styles], row))
        return torch.cat(outputs, dim=0)

    def _synthesize_one(
        self, style_rows: list[torch.Tensor], domain: torch.Tensor | None
    ) -> torch.Tensor:
        slices = self.layout.split(domain) if domain is not None else None
        x = self.params.const.unsqueeze(0).to(DTYPE)
        skip: torch.Tensor | None = None
        feature_cfg = ModConvConfig(demodulate=True)
        rgb_cfg = ModConvConfig(demodulate=False)
        for slot, spec in enumerate(self.specs):
            weight = self.params.conv[slot]
            bias_vec = self.params.bias[slot].reshape(1, -1, 1, 1)
            if spec.is_rgb:
                y = mod_conv_forward(x, weight, style_rows[slot], None, rgb_cfg) + bias_vec
                skip = y if skip is None else _upsample2x(skip) + y
            else:
                if spec.upsample:
                    x = _upsample2x(x)
                layer_domain = None if slices is None else slices[spec.feature_index]
                x = mod_conv_forward(x, weight, style_rows[slot], layer_domain, feature_cfg)
                x = F.leaky_relu(x + bias_vec, LEAK)
        assert skip is not None
        return skip

    def generate(self, z: torch.Tensor, domain: torch.Tensor | None = None) -> torch.Tensor:
        """Map latents and render without style mixing."""
        w = self.map_latent(z if z.ndim == 2 else z.unsqueeze(0))
        return self.synthesize(self.broadcast_styles(w), domain)


def style_mix(
    w_a: torch.Tensor,
    w_b: torch.Tensor,
    num_slots: int,
    prob: float,
    rng: torch.Generator,
) -> torch.Tensor:
    """Stack per-slot latents, splicing w_b in at a random crossover slot.

    With probability prob (and at least two slots) a crossover index t in
    [1, num_slots-1] is drawn; slots before t take w_a and the rest take
    w_b, so a mixed stack always contains both latents. Otherwise every
    slot takes w_a.
    """
    if w_a.shape != w_b.shape or w_a.ndim != 1:
        raise ShapeError(
            f"latents must be two 1-d vectors of equal length, "
            f"got {tuple(w_a.shape)} and {tuple(w_b.shape)}"
        )
    if num_slots < 1:
        raise ShapeError(f"num_slots must be >= 1, got {num_slots}")
    if not 0.0 <= prob <= 1.0:
        raise ConfigError(f"mixing probability must be in [0, 1], got {prob}")
    stack = w_a.unsqueeze(0).repeat(num_slots, 1)
    if num_slots >= 2 and prob > 0.0:
        u = torch.rand((), generator=rng, dtype=torch.float64).item()
        if u < prob:
            t = int(torch.randint(1, num_slots, (), generator=rng).item())
            stack[t:] = w_b
    return stack


def parameter_counts(config: GeneratorConfig) -> dict[str, int]:
    """Closed-form parameter counts per component (no tensors allocated)."""
    dim = config.latent_dim
    counts = {
        "mapping": config.mapping_layers * (dim * dim + dim),
        "affine": 0,
        "synthesis": config.resolution_channels[4] * 16,
        "torgb": 0,
    }
    for spec in build_conv_specs(config):
        counts["affine"] += spec.in_channels * dim + spec.in_channels
        weight_and_bias = (
            spec.out_channels * spec.in_channels * spec.kernel * spec.kernel
            + spec.out_channels
        )
        if spec.is_rgb:
            counts["torgb"] += weight_and_bias
        else:
            counts["synthesis"] += weight_and_bias
    counts["total"] = sum(counts.values())
    return counts


def count_parameters(params: GeneratorParams) -> dict[str, int]:
    """Parameter counts by enumerating an actual parameter set."""
    counts = {
        "mapping": sum(w.numel() + b.numel() for w, b in params.mapping),
        "affine": sum(w.numel() + b.numel() for w, b in params.affine),
        "synthesis": params.const.numel(),
        "torgb": 0,
    }
    for weight, bias_vec in zip(params.conv, params.bias):
        group = "torgb" if weight.shape[2] == 1 else "synthesis"
        counts[group] += weight.numel() + bias_vec.numel()
    counts["total"] = sum(counts.values())
    return counts
