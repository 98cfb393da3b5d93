"""Sampling target domains for multi-domain training.

Three layers, composable and individually testable:

  1. prompt combinations: fill templates like "{style} {type}" from a
     vocabulary file, giving a fixed pool of text domains;
  2. sphere resampling: jitter a unit anchor embedding to a new unit
     vector at an exact angle gamma from it;
  3. convex-hull mixing: Dirichlet-weighted combinations of the base
     embeddings, staying inside their convex hull.

A batch is drawn by first resampling every base embedding once, then
drawing one Dirichlet weight row per sample over the resampled bases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from string import Formatter
from typing import Iterable, Sequence

import numpy as np
import torch

from .embedding_space import DomainDescriptor
from .errors import ConfigError, InputError, ShapeError

__all__ = [
    "DEFAULT_TEMPLATES",
    "PromptVocabulary",
    "default_vocabulary",
    "load_vocabulary",
    "generate_combinations",
    "load_domain_pairs",
    "default_domain_pairs",
    "sample_dirichlet_weights",
    "mix_embeddings",
    "sample_convex_hull",
    "resample_with_direction",
    "resample_on_sphere",
    "SamplerConfig",
    "DomainSampler",
]

DEFAULT_TEMPLATES = ("{style} {type}", "{type} in the style of {artist}")

_TEMPLATE_FIELDS = ("style", "type", "artist")


@dataclass(frozen=True)
class PromptVocabulary:
    """Word lists plus the templates that combine them into prompts."""

    styles: tuple[str, ...]
    types: tuple[str, ...]
    artists: tuple[str, ...]
    templates: tuple[str, ...] = DEFAULT_TEMPLATES

    def __post_init__(self) -> None:
        if not self.templates:
            raise ConfigError("vocabulary needs at least one template")
        for template in self.templates:
            for fieldname in _template_fields(template):
                if not getattr(self, fieldname + "s"):
                    raise ConfigError(
                        f"template {template!r} uses {fieldname!r} but the "
                        f"{fieldname} list is empty"
                    )

    def words(self, fieldname: str) -> tuple[str, ...]:
        return getattr(self, fieldname + "s")


def _template_fields(template: str) -> list[str]:
    """Field names in order of first appearance; validates the template."""
    fields: list[str] = []
    try:
        parsed = list(Formatter().parse(template))
    except ValueError as exc:
        raise ConfigError(f"template {template!r} is malformed: {exc}") from None
    for _, fieldname, _, _ in parsed:
        if fieldname is None:
            continue
        if fieldname not in _TEMPLATE_FIELDS:
            raise ConfigError(
                f"template {template!r} references unknown slot {fieldname!r}; "
                f"allowed: {_TEMPLATE_FIELDS}"
            )
        if fieldname not in fields:
            fields.append(fieldname)
    if not fields:
        raise ConfigError(f"template {template!r} references no slots")
    return fields


def generate_combinations(vocab: PromptVocabulary) -> list[str]:
    """All filled templates, duplicates removed keeping the first occurrence.

    Each template enumerates the cartesian product of its word lists, the
    last-appearing slot varying fastest, so output order is deterministic.
    """
    prompts: dict[str, None] = {}
    for template in vocab.templates:
        fields = _template_fields(template)
        counts = [len(vocab.words(f)) for f in fields]
        indices = [0] * len(fields)
        total = math.prod(counts)
        for _ in range(total):
            values = {f: vocab.words(f)[indices[k]] for k, f in enumerate(fields)}
            prompts.setdefault(template.format(**values))
            for k in reversed(range(len(fields))):
                indices[k] += 1
                if indices[k] < counts[k]:
                    break
                indices[k] = 0
    return list(prompts)


def _read_data_text(filename: str) -> str:
    return resources.files("domainmod.data").joinpath(filename).read_text("utf-8")


def _parse_vocabulary(text: str, origin: str) -> PromptVocabulary:
    sections: dict[str, list[str]] = {"styles": [], "types": [], "artists": [], "templates": []}
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in sections:
                raise InputError(
                    f"{origin}:{lineno}: unknown section [{name}]; "
                    f"expected one of {sorted(sections)}"
                )
            current = name
            continue
        if current is None:
            raise InputError(f"{origin}:{lineno}: entry before any [section] header")
        sections[current].append(line)
    templates = tuple(sections["templates"]) or DEFAULT_TEMPLATES
    return PromptVocabulary(
        styles=tuple(sections["styles"]),
        types=tuple(sections["types"]),
        artists=tuple(sections["artists"]),
        templates=templates,
    )


def load_vocabulary(path) -> PromptVocabulary:
    """Parse a vocabulary file with [styles]/[types]/[artists]/[templates] sections."""
    try:
        text = open(path, "r", encoding="utf-8").read()
    except OSError as exc:
        raise InputError(f"cannot read vocabulary file {path}: {exc}") from None
    return _parse_vocabulary(text, str(path))


def default_vocabulary() -> PromptVocabulary:
    """The vocabulary shipped with the package (494 distinct prompts)."""
    return _parse_vocabulary(_read_data_text("vocabulary.txt"), "<package data>")


def _parse_domain_pairs(text: str, origin: str) -> list[DomainDescriptor]:
    pairs: list[DomainDescriptor] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "|" not in line:
            raise InputError(
                f"{origin}:{lineno}: expected 'target text | source text', got {line!r}"
            )
        target, _, source = line.partition("|")
        target, source = target.strip(), source.strip()
        if not target or not source:
            raise InputError(f"{origin}:{lineno}: empty target or source text")
        pairs.append(DomainDescriptor(text=target, source_text=source))
    if not pairs:
        raise InputError(f"{origin}: no domain pairs found")
    return pairs


def load_domain_pairs(path) -> list[DomainDescriptor]:
    """Parse a domains file with one 'target text | source text' per line."""
    try:
        text = open(path, "r", encoding="utf-8").read()
    except OSError as exc:
        raise InputError(f"cannot read domains file {path}: {exc}") from None
    return _parse_domain_pairs(text, str(path))


def default_domain_pairs() -> list[DomainDescriptor]:
    """The 20 text domains shipped with the package."""
    return _parse_domain_pairs(_read_data_text("domains_20.txt"), "<package data>")


# --- convex-hull sampling ----------------------------------------------------


def sample_dirichlet_weights(
    num_bases: int, n: int, beta: float, rng: np.random.Generator
) -> torch.Tensor:
    """Draw n rows of Dirichlet(beta, ..., beta) weights over num_bases bases.

    Small beta concentrates mass near the corners (samples hug individual
    bases); the rows are used exactly as drawn. Degenerate rows from
    numerical underflow at very small beta are redrawn.
    """
    if num_bases < 1:
        raise ShapeError(f"num_bases must be >= 1, got {num_bases}")
    if n < 1:
        raise ShapeError(f"n must be >= 1, got {n}")
    if beta <= 0.0:
        raise ConfigError(f"beta must be positive, got {beta}")
    if num_bases == 1:
        return torch.ones((n, 1), dtype=torch.float64)
    alphas = rng.dirichlet(np.full(num_bases, beta), size=n)
    for _ in range(100):
        rows = np.asarray(alphas)
        bad = ~np.isfinite(rows).all(axis=1) | (rows.sum(axis=1) <= 0.5)
        if not bad.any():
            break
        alphas[bad] = rng.dirichlet(np.full(num_bases, beta), size=int(bad.sum()))
    else:
        raise ConfigError(f"could not draw valid Dirichlet weights with beta={beta}")
    return torch.from_numpy(alphas).to(torch.float64)


def mix_embeddings(base_embeddings: torch.Tensor, alphas: torch.Tensor) -> torch.Tensor:
    """Convex combinations alphas @ bases; results stay inside the hull."""
    if base_embeddings.ndim != 2:
        raise ShapeError(f"bases must be (m, dim), got {tuple(base_embeddings.shape)}")
    if alphas.ndim != 2 or alphas.shape[1] != base_embeddings.shape[0]:
        raise ShapeError(
            f"alphas must be (n, {base_embeddings.shape[0]}), got {tuple(alphas.shape)}"
        )
    return alphas.to(base_embeddings.dtype) @ base_embeddings


def sample_convex_hull(
    base_embeddings: torch.Tensor,
    n: int,
    beta: float | None,
    rng: np.random.Generator,
) -> torch.Tensor:
    """Sample n hull points; beta defaults to 1/n when not given."""
    if base_embeddings.ndim != 2 or base_embeddings.shape[0] < 1:
        raise ShapeError(f"bases must be (m, dim), got {tuple(base_embeddings.shape)}")
    resolved_beta = (1.0 / n) if beta is None else beta
    alphas = sample_dirichlet_weights(base_embeddings.shape[0], n, resolved_beta, rng)
    return mix_embeddings(base_embeddings, alphas)


# --- sphere resampling -------------------------------------------------------


def _check_unit_anchor(anchor: torch.Tensor) -> None:
    if anchor.ndim != 1:
        raise ShapeError(f"anchor must be 1-d, got shape {tuple(anchor.shape)}")
    norm = float(anchor.norm().item())
    if abs(norm - 1.0) > 1e-6:
        raise ShapeError(f"anchor must have unit norm, got {norm:.8f}")


def resample_with_direction(
    anchor: torch.Tensor, direction: torch.Tensor, gamma: float
) -> torch.Tensor:
    """Rotate a unit anchor by angle gamma toward an explicit direction.

    The direction is made orthogonal to the anchor and normalized by the
    norm of that residual, so the result anchor*cos(gamma) + u*sin(gamma)
    is a unit vector whose cosine with the anchor is exactly cos(gamma).
    A direction (nearly) parallel to the anchor has no usable residual
    and is rejected.
    """
    _check_unit_anchor(anchor)
    if direction.shape != anchor.shape:
        raise ShapeError(
            f"direction shape {tuple(direction.shape)} must match anchor "
            f"{tuple(anchor.shape)}"
        )
    residual = direction - anchor * (anchor @ direction)
    residual_norm = torch.linalg.vector_norm(residual)
    if float(residual_norm.item()) < 1e-9:
        raise InputError("direction is parallel to the anchor; redraw it")
    unit_residual = residual / residual_norm
    return anchor * math.cos(gamma) + unit_residual * math.sin(gamma)


def resample_on_sphere(
    anchor: torch.Tensor,
    gamma: float,
    rng: np.random.Generator,
    max_tries: int = 16,
) -> torch.Tensor:
    """Resample a unit embedding at exact angle gamma from the anchor.

    gamma = 0 returns the anchor unchanged; the random tangent direction
    is drawn from a standard normal and redrawn in the (measure-zero)
    event it is parallel to the anchor.
    """
    _check_unit_anchor(anchor)
    if not 0.0 <= gamma <= math.pi:
        raise ConfigError(f"gamma must be in [0, pi], got {gamma}")
    if gamma == 0.0:
        return anchor.clone()
    for _ in range(max_tries):
        direction = torch.from_numpy(rng.standard_normal(anchor.shape[0]))
        direction = direction.to(anchor.dtype)
        try:
            return resample_with_direction(anchor, direction, gamma)
        except InputError:
            continue
    raise InputError(f"no usable tangent direction after {max_tries} draws")


@dataclass(frozen=True)
class SamplerConfig:
    """Knobs for batch sampling: resample angle and Dirichlet concentration."""

    gamma: float = 0.35
    beta: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma <= math.pi:
            raise ConfigError(f"gamma must be in [0, pi], got {self.gamma}")
        if self.beta is not None and self.beta <= 0.0:
            raise ConfigError(f"beta must be positive, got {self.beta}")


class DomainSampler:
    """Draws batches of target-domain embeddings around fixed base prompts."""

    def __init__(self, base_embeddings: torch.Tensor, config: SamplerConfig = SamplerConfig()):
        if base_embeddings.ndim != 2 or base_embeddings.shape[0] < 1:
            raise ShapeError(
                f"base embeddings must be (m, dim), got {tuple(base_embeddings.shape)}"
            )
        norms = base_embeddings.norm(dim=1)
        if not torch.all((norms - 1.0).abs() < 1e-4):
            raise ShapeError("base embeddings must be unit vectors")
        self.base_embeddings = base_embeddings.to(torch.float64)
        self.config = config

    @property
    def num_bases(self) -> int:
        return self.base_embeddings.shape[0]

    def resample_bases(self, rng: np.random.Generator) -> torch.Tensor:
        """One sphere-resample of every base embedding."""
        return torch.stack(
            [
                resample_on_sphere(self.base_embeddings[k], self.config.gamma, rng)
                for k in range(self.num_bases)
            ]
        )

    def sample_batch(self, n: int, rng: np.random.Generator) -> torch.Tensor:
        """Resample the bases once, then draw n hull points over them."""
        bases = self.resample_bases(rng)
        return sample_convex_hull(bases, n, self.config.beta, rng)
