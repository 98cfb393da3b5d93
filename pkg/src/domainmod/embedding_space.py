"""Joint image/text embedding space: encoders, directional losses, metrics.

All losses operate on unit-norm embeddings produced by an encoder (or an
ensemble of encoders, in which case the loss is averaged over members).
Cosines are guarded by an epsilon added inside each norm, so a loss fed
two identical image batches (difference vector zero) evaluates to exactly
one instead of dividing by zero.

The mock encoder is a deterministic, differentiable stand-in used by the
test suite: images are average-pooled to a fixed grid and pushed through
a seeded random projection; text is hashed to a seeded random unit
vector. Two mocks with different seeds behave like two unrelated
embedding spaces, which is exactly what ensemble-averaged training needs.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

import numpy as np
import torch
from torch.nn import functional as F

from .errors import ConfigError, InputError, ShapeError

__all__ = [
    "COSINE_EPS",
    "Encoder",
    "MockEncoder",
    "Ensemble",
    "mock_ensemble",
    "mock_eval_encoder",
    "members_of",
    "register_encoder",
    "create_encoder",
    "available_encoders",
    "DomainDescriptor",
    "LossWeights",
    "text_direction",
    "image_direction",
    "guarded_cosine",
    "direction_loss",
    "clip_across_loss",
    "indomain_angle_loss",
    "tt_direction_loss",
    "domain_norm_loss",
    "quality_metric",
    "diversity_metric",
]

COSINE_EPS = 1e-8
_UNIT_GUARD = 1e-24  # keeps unit normalization well within 1e-6 of exact


class Encoder(Protocol):
    """Anything that embeds images and text into one unit-sphere space."""

    embed_dim: int

    def encode_image(self, images: torch.Tensor) -> torch.Tensor: ...

    def encode_text(self, text: str) -> torch.Tensor: ...


def _check_image_batch(images: torch.Tensor) -> None:
    if images.ndim != 4:
        raise ShapeError(f"images must be (n, c, h, w), got shape {tuple(images.shape)}")
    if images.shape[1] != 3:
        raise ShapeError(f"images must have 3 channels, got {images.shape[1]}")
    if images.shape[0] < 1:
        raise ShapeError("image batch is empty")
    if not torch.isfinite(images).all():
        raise InputError("image batch contains non-finite values")


class MockEncoder:
    """Deterministic differentiable encoder for tests and offline runs.

    Images: average-pool to grid x grid, flatten the 3*grid*grid values,
    apply a fixed seeded projection, normalize. Text: SHA-256 of the
    string seeds a random unit vector, so equal strings always agree and
    different strings are effectively random directions.
    """

    def __init__(self, embed_dim: int = 64, seed: int = 0, grid: int = 16) -> None:
        if embed_dim < 2:
            raise ConfigError(f"embed_dim must be >= 2, got {embed_dim}")
        if grid < 1:
            raise ConfigError(f"grid must be >= 1, got {grid}")
        self.embed_dim = embed_dim
        self.seed = seed
        self.grid = grid
        features = 3 * grid * grid
        rng = np.random.default_rng([seed, 0xA11CE])
        matrix = rng.standard_normal((embed_dim, features)) / np.sqrt(features)
        self._image_proj = torch.from_numpy(matrix).to(torch.float64)

    def __repr__(self) -> str:
        return f"MockEncoder(embed_dim={self.embed_dim}, seed={self.seed}, grid={self.grid})"

    def encode_image(self, images: torch.Tensor) -> torch.Tensor:
        _check_image_batch(images)
        pooled = F.adaptive_avg_pool2d(images.to(torch.float64), (self.grid, self.grid))
        flat = pooled.reshape(images.shape[0], -1)
        raw = flat @ self._image_proj.T
        return _unit_rows(raw)

    def encode_text(self, text: str) -> torch.Tensor:
        if not isinstance(text, str):
            raise InputError(f"text must be a string, got {type(text).__name__}")
        if not text.strip():
            raise InputError("text must not be empty")
        digest = hashlib.sha256(text.encode("utf-8")).digest()
        tag = int.from_bytes(digest[:8], "little")
        rng = np.random.default_rng([self.seed, tag])
        vec = rng.standard_normal(self.embed_dim)
        vec = vec / np.linalg.norm(vec)
        return torch.from_numpy(vec).to(torch.float64)


def _unit_rows(x: torch.Tensor) -> torch.Tensor:
    norms = torch.sqrt(x.square().sum(dim=-1, keepdim=True) + _UNIT_GUARD)
    return x / norms


@dataclass(frozen=True)
class Ensemble:
    """A fixed tuple of encoders whose losses are averaged member-wise."""

    members: tuple[Encoder, ...]

    def __post_init__(self) -> None:
        if not self.members:
            raise ConfigError("ensemble needs at least one encoder")
        dims = {m.embed_dim for m in self.members}
        if len(dims) != 1:
            raise ConfigError(f"ensemble members disagree on embed_dim: {sorted(dims)}")

    @property
    def embed_dim(self) -> int:
        return self.members[0].embed_dim


def mock_ensemble(embed_dim: int = 64, seeds: Sequence[int] = (101, 202)) -> Ensemble:
    """Training ensemble of independently seeded mock encoders."""
    return Ensemble(tuple(MockEncoder(embed_dim=embed_dim, seed=s) for s in seeds))


def mock_eval_encoder(embed_dim: int = 64, seed: int = 777) -> MockEncoder:
    """Held-out mock encoder for metrics; keep its seed out of the ensemble."""
    return MockEncoder(embed_dim=embed_dim, seed=seed)


def members_of(enc) -> tuple[Encoder, ...]:
    """Coerce a single encoder, an Ensemble, or a sequence into a member tuple."""
    if isinstance(enc, Ensemble):
        return enc.members
    if hasattr(enc, "encode_image") and hasattr(enc, "encode_text"):
        return (enc,)
    if isinstance(enc, (list, tuple)):
        return tuple(enc)
    raise ConfigError(f"expected an encoder, an ensemble, or a sequence, got {type(enc).__name__}")



# --- encoder registry ------------------------------------------------------

_ENCODER_REGISTRY: dict[str, type] = {}


def register_encoder(name: str, factory=None):
    """Register an encoder factory under a name; usable as a decorator."""

    def _register(f):
        if name in _ENCODER_REGISTRY:
            raise ConfigError(f"encoder {name!r} is already registered")
        _ENCODER_REGISTRY[name] = f
        return f

    return _register(factory) if factory is not None else _register


def create_encoder(name: str, **kwargs) -> Encoder:
    if name not in _ENCODER_REGISTRY:
        raise ConfigError(
            f"unknown encoder {name!r}; available: {sorted(_ENCODER_REGISTRY)}"
        )
    return _ENCODER_REGISTRY[name](**kwargs)


def available_encoders() -> list[str]:
    return sorted(_ENCODER_REGISTRY)


register_encoder("mock", MockEncoder)


# --- descriptors and weights ------------------------------------------------


@dataclass(frozen=True)
class DomainDescriptor:
    """One target domain given by exactly one of text, image, or embedding."""

    text: str | None = None
    image: torch.Tensor | None = None
    embedding: torch.Tensor | None = None
    source_text: str | None = None

    def __post_init__(self) -> None:
        payloads = [p is not None for p in (self.text, self.image, self.embedding)]
        if sum(payloads) != 1:
            raise ConfigError(
                "descriptor must carry exactly one of text, image, or embedding"
            )
        if self.text is not None and not self.text.strip():
            raise ConfigError("descriptor text must not be empty")

    @property
    def kind(self) -> str:
        if self.text is not None:
            return "text"
        if self.image is not None:
            return "image"
        return "embedding"


@dataclass(frozen=True)
class LossWeights:
    """Per-term loss multipliers; a weight of zero disables its term entirely.

    The three reconstruction slots are reserved for pixel-, feature-, and
    latent-space terms used by some one-shot baselines; this package keeps
    them at zero and raises if asked otherwise.
    """

    direction: float = 0.0
    clip_across: float = 0.0
    indomain_angle: float = 0.0
    tt_direction: float = 0.0
    domain_norm: float = 0.0
    reconstruction_pixel: float = 0.0
    reconstruction_perceptual: float = 0.0
    reconstruction_latent: float = 0.0

    def __post_init__(self) -> None:
        for name, value in self.as_dict().items():
            if value < 0.0:
                raise ConfigError(f"loss weight {name} must be >= 0, got {value}")
        for name in ("reconstruction_pixel", "reconstruction_perceptual", "reconstruction_latent"):
            if getattr(self, name) != 0.0:
                raise ConfigError(f"{name} is reserved and must stay 0.0")

    def as_dict(self) -> dict[str, float]:
        return {
            "direction": self.direction,
            "clip_across": self.clip_across,
            "indomain_angle": self.indomain_angle,
            "tt_direction": self.tt_direction,
            "domain_norm": self.domain_norm,
            "reconstruction_pixel": self.reconstruction_pixel,
            "reconstruction_perceptual": self.reconstruction_perceptual,
            "reconstruction_latent": self.reconstruction_latent,
        }


# --- direction primitives and losses ----------------------------------------


def text_direction(enc: Encoder, target_text: str, source_text: str) -> torch.Tensor:
    """Embedding-space direction from the source caption to the target caption."""
    return enc.encode_text(target_text) - enc.encode_text(source_text)


def image_direction(enc: Encoder, target_images: torch.Tensor, source_images: torch.Tensor) -> torch.Tensor:
    """Per-sample embedding direction from source renders to target renders."""
    if target_images.shape != source_images.shape:
        raise ShapeError(
            f"image batches must align, got {tuple(target_images.shape)} "
            f"vs {tuple(source_images.shape)}"
        )
    return enc.encode_image(target_images) - enc.encode_image(source_images)


def guarded_cosine(a: torch.Tensor, b: torch.Tensor, eps: float = COSINE_EPS) -> torch.Tensor:
    """Cosine similarity with eps added inside each norm.

    A zero vector on either side gives cosine 0 (not NaN). For vectors of
    norm well above sqrt(eps) the result matches the exact cosine to
    better than 1e-6, so positive rescaling of either argument leaves the
    value essentially unchanged.
    """
    dot = (a * b).sum(dim=-1)
    norm_a = torch.sqrt(a.square().sum(dim=-1) + eps)
    norm_b = torch.sqrt(b.square().sum(dim=-1) + eps)
    return dot / (norm_a * norm_b)


def direction_loss(
    delta_image: torch.Tensor, delta_text: torch.Tensor, eps: float = COSINE_EPS
) -> torch.Tensor:
    """1 - cos between an image-space direction and a reference direction.

    Accepts broadcastable (..., dim) inputs and reduces nothing; a zero
    image direction yields exactly 1.
    """
    return 1.0 - guarded_cosine(delta_image, delta_text, eps)


def clip_across_loss(
    enc,
    adapted_images: torch.Tensor,
    source_images: torch.Tensor,
    style_image: torch.Tensor,
    projected_image: torch.Tensor,
) -> torch.Tensor:
    """Direction loss against the (style - projected-style) reference.

    The reference direction compares the style exemplar with its
    projection back into the source domain, so it isolates what the
    adaptation should add. Returns one member-averaged value per sample.
    """
    losses = []
    for member in members_of(enc):
        reference = image_direction(member, style_image, projected_image).squeeze(0)
        moved = image_direction(member, adapted_images, source_images)
        losses.append(direction_loss(moved, reference))
    return torch.stack(losses).mean(dim=0)


def indomain_angle_loss(enc, adapted_images: torch.Tensor, source_images: torch.Tensor) -> torch.Tensor:
    """Squared change of pairwise embedding angles between source and adapted.

    For each ordered pair (i, j), i != j, the difference of inner products
    <src_i, src_j> - <adp_i, adp_j> is squared and summed; diagonal terms
    contribute nothing. Preserving this Gram structure keeps the adapted
    samples as mutually distinct as their source counterparts.
    """
    if adapted_images.shape != source_images.shape:
        raise ShapeError(
            f"image batches must align, got {tuple(adapted_images.shape)} "
            f"vs {tuple(source_images.shape)}"
        )
    n = adapted_images.shape[0]
    if n < 2:
        raise ShapeError(f"angle preservation needs a batch of >= 2 images, got {n}")
    total = None
    members = members_of(enc)
    for member in members:
        src = member.encode_image(source_images)
        adp = member.encode_image(adapted_images)
        gram_delta = src @ src.T - adp @ adp.T
        mask = 1.0 - torch.eye(n, dtype=gram_delta.dtype)
        value = (gram_delta.square() * mask).sum()
        total = value if total is None else total + value
    return total / len(members)


def tt_direction_loss(
    enc,
    images_a: torch.Tensor,
    images_b: torch.Tensor,
    text_a: str,
    text_b: str,
) -> torch.Tensor:
    """Direction loss between two adapted domains.

    Aligns the image-space direction from domain-b renders to domain-a
    renders with the text direction from caption b to caption a; one
    member-averaged value per sample pair. Keeping these cross-domain
    directions aligned stops distinct domains from collapsing together.
    """
    losses = []
    for member in members_of(enc):
        delta_text = member.encode_text(text_a) - member.encode_text(text_b)
        delta_image = image_direction(member, images_a, images_b)
        losses.append(direction_loss(delta_image, delta_text))
    return torch.stack(losses).mean(dim=0)


def domain_norm_loss(domain: torch.Tensor) -> torch.Tensor:
    """Squared distance from the identity (all-ones) domain vector."""
    if domain.ndim == 1:
        return (domain - 1.0).square().sum()
    if domain.ndim == 2:
        return (domain - 1.0).square().sum(dim=-1)
    raise ShapeError(f"domain must be 1-d or 2-d, got shape {tuple(domain.shape)}")


# --- metrics ----------------------------------------------------------------


def quality_metric(eval_enc: Encoder, images: torch.Tensor, text: str) -> float:
    """Mean inner product between the caption embedding and each image embedding.

    Use an encoder that did not train the checkpoint being measured;
    scoring with a training member rewards its own blind spots.
    """
    embeddings = eval_enc.encode_image(images)
    caption = eval_enc.encode_text(text)
    return float((embeddings @ caption).mean().item())


def diversity_metric(eval_enc: Encoder, images: torch.Tensor) -> float:
    """Mean pairwise embedding distance 1 - <e_i, e_j> over unordered pairs."""
    if images.shape[0] < 2:
        raise ShapeError(f"diversity needs >= 2 images, got {images.shape[0]}")
    embeddings = eval_enc.encode_image(images)
    n = embeddings.shape[0]
    gram = embeddings @ embeddings.T
    upper = torch.triu_indices(n, n, offset=1)
    distances = 1.0 - gram[upper[0], upper[1]]
    return float(distances.sum().item()) * 2.0 / (n * (n - 1))
