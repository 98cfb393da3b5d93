"""Training loops for domain adaptation.

Three regimes share one machinery:

  text:      optimize a single flat domain vector toward a text caption
             (direction loss plus pairwise-angle preservation);
  one-shot:  optimize a single domain vector toward one style exemplar
             (direction against the exemplar-minus-projection reference);
  hdn:       optimize a hypernetwork that maps domain embeddings to
             domain vectors, either over a fixed list of text domains or
             over an open set sampled around a prompt vocabulary.

The source generator is never touched: only the domain vector (or the
hypernetwork, or an explicit copy of the synthesis weights in the full
fine-tuning baseline) receives gradients. The optimizer is a pure
functional Adam over name -> tensor dicts: each step returns fresh leaf
tensors and a new state, which keeps runs exactly reproducible.

History is a list of per-iteration dicts holding the raw (unweighted)
value of every active loss term plus the weighted "total".
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import torch

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .embedding_space import (
    DomainDescriptor,
    LossWeights,
    members_of,
    direction_loss,
    domain_norm_loss,
    indomain_angle_loss,
    text_direction,
)
from .errors import ConfigError, ShapeError
from .generator import Generator, GeneratorParams, style_mix
from .hyperdomainnet import HDNConfig, hdn_forward, hdn_param_shapes, init_hdn_params
from .domain_sampler import DomainSampler, resample_with_direction, sample_dirichlet_weights

__all__ = [
    "AdamState",
    "adam_init",
    "adam_step",
    "TrainingConfig",
    "training_config",
    "MODE_DEFAULTS",
    "AdaptResult",
    "adapt_single_domain_text",
    "adapt_one_shot",
    "naive_invert",
    "train_hdn",
    "generator_with_synthesis",
    "write_history_csv",
    "moving_average",
    "domain_vector_checkpoint",
    "hdn_checkpoint",
    "synthesis_checkpoint",
    "domain_vector_from_checkpoint",
    "hdn_params_from_checkpoint",
    "synthesis_params_from_checkpoint",
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
]


# --- functional Adam ---------------------------------------------------------


@dataclass(frozen=True)
class AdamState:
    """Optimizer state; step counts completed updates."""

    lr: float
    betas: tuple[float, float]
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: dict[str, torch.Tensor] = field(default_factory=dict)
    v: dict[str, torch.Tensor] = field(default_factory=dict)


def adam_init(
    params: dict[str, torch.Tensor],
    lr: float,
    betas: tuple[float, float],
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> AdamState:
    if lr <= 0.0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    for i, beta in enumerate(betas):
        if not 0.0 <= beta < 1.0:
            raise ConfigError(f"beta{i + 1} must be in [0, 1), got {beta}")
    if eps <= 0.0:
        raise ConfigError(f"adam eps must be positive, got {eps}")
    if weight_decay < 0.0:
        raise ConfigError(f"weight decay must be >= 0, got {weight_decay}")
    zeros = {k: torch.zeros_like(p) for k, p in params.items()}
    return AdamState(
        lr=lr,
        betas=(float(betas[0]), float(betas[1])),
        eps=eps,
        weight_decay=weight_decay,
        step=0,
        m=zeros,
        v={k: torch.zeros_like(p) for k, p in params.items()},
    )


def adam_step(
    state: AdamState,
    params: dict[str, torch.Tensor],
    grads: dict[str, torch.Tensor],
) -> tuple[dict[str, torch.Tensor], AdamState]:
    """One bias-corrected update with decoupled weight decay.

    Returns new parameter tensors (detached from any graph) and the
    advanced state; inputs are left untouched.
    """
    if set(params) != set(state.m) or set(grads) != set(params):
        raise ShapeError("params, grads, and optimizer state must share the same keys")
    beta1, beta2 = state.betas
    t = state.step + 1
    new_params: dict[str, torch.Tensor] = {}
    new_m: dict[str, torch.Tensor] = {}
    new_v: dict[str, torch.Tensor] = {}
    for key, p in params.items():
        g = grads[key]
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape {tuple(g.shape)} != param shape {tuple(p.shape)} for {key}")
        g = g.detach()
        m = beta1 * state.m[key] + (1.0 - beta1) * g
        v = beta2 * state.v[key] + (1.0 - beta2) * g.square()
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        update = m_hat / (v_hat.sqrt() + state.eps)
        if state.weight_decay != 0.0:
            update = update + state.weight_decay * p.detach()
        new_params[key] = p.detach() - state.lr * update
        new_m[key] = m
        new_v[key] = v
    return new_params, replace(state, step=t, m=new_m, v=new_v)


# --- configuration -----------------------------------------------------------

MODE_DEFAULTS: dict[str, dict] = {
    "text": dict(
        iterations=600,
        batch_size=4,
        learning_rate=2e-3,
        betas=(0.0, 0.999),
        loss_weights=LossWeights(direction=1.0, indomain_angle=0.5),
    ),
    "one-shot": dict(
        iterations=600,
        batch_size=4,
        learning_rate=2e-3,
        betas=(0.0, 0.999),
        loss_weights=LossWeights(clip_across=1.0, indomain_angle=2.0),
    ),
    "hdn-fixed": dict(
        iterations=1000,
        batch_size=24,
        learning_rate=5e-5,
        betas=(0.9, 0.999),
        loss_weights=LossWeights(direction=1.0, tt_direction=0.4, domain_norm=0.8),
    ),
    "hdn-open": dict(
        iterations=10000,
        batch_size=96,
        learning_rate=5e-5,
        betas=(0.9, 0.999),
        loss_weights=LossWeights(direction=1.0, tt_direction=0.4, domain_norm=0.8),
    ),
}


@dataclass(frozen=True)
class TrainingConfig:
    """Fully resolved settings for one run; build with training_config()."""

    mode: str
    iterations: int
    batch_size: int
    learning_rate: float
    betas: tuple[float, float]
    loss_weights: LossWeights
    mixing_prob: float = 0.9
    weight_decay: float = 0.0
    adam_eps: float = 1e-8
    seed: int = 0
    param_space: str = "domain"  # "domain" or "synthesis" (full fine-tune baseline)
    source_text: str = "Photo"

    def __post_init__(self) -> None:
        if self.mode not in MODE_DEFAULTS:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {sorted(MODE_DEFAULTS)}")
        if self.iterations < 0:
            raise ConfigError(f"iterations must be >= 0, got {self.iterations}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.mixing_prob <= 1.0:
            raise ConfigError(f"mixing_prob must be in [0, 1], got {self.mixing_prob}")
        if self.learning_rate <= 0.0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.loss_weights.indomain_angle > 0.0 and self.batch_size < 2:
            raise ConfigError("angle preservation needs batch_size >= 2")
        if self.loss_weights.tt_direction > 0.0 and self.batch_size < 2:
            raise ConfigError("cross-domain direction needs batch_size >= 2")
        if self.param_space not in ("domain", "synthesis"):
            raise ConfigError(f"param_space must be 'domain' or 'synthesis', got {self.param_space!r}")
        if self.param_space == "synthesis" and self.mode not in ("text", "one-shot"):
            raise ConfigError("full fine-tuning applies only to single-domain modes")
        if self.mode.startswith("hdn") and self.loss_weights.clip_across > 0.0:
            raise ConfigError("clip_across applies only to one-shot adaptation")
        if not self.source_text.strip():
            raise ConfigError("source_text must not be empty")

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "iterations": self.iterations,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "betas": list(self.betas),
            "loss_weights": self.loss_weights.as_dict(),
            "mixing_prob": self.mixing_prob,
            "weight_decay": self.weight_decay,
            "adam_eps": self.adam_eps,
            "seed": self.seed,
            "param_space": self.param_space,
            "source_text": self.source_text,
        }


def training_config(mode: str, **overrides) -> TrainingConfig:
    """Per-mode defaults merged with explicit overrides."""
    if mode not in MODE_DEFAULTS:
        raise ConfigError(f"unknown mode {mode!r}; expected one of {sorted(MODE_DEFAULTS)}")
    merged = dict(MODE_DEFAULTS[mode])
    merged.update(overrides)
    return TrainingConfig(mode=mode, **merged)


# --- shared loop machinery ----------------------------------------------------


@dataclass
class AdaptResult:
    """What a training loop hands back.

    domain_vector is set by single-domain runs in domain space; params is
    set by hypernetwork runs and by full fine-tuning (named tensors).
    """

    history: list[dict[str, float]]
    domain_vector: torch.Tensor | None = None
    params: dict[str, torch.Tensor] | None = None
    final_state: AdamState | None = None


def _draw_slot_latents(
    gen: Generator, n: int, mixing_prob: float, rng: torch.Generator
) -> torch.Tensor:
    """Per-sample per-slot latents with style mixing: (n, num_slots, latent_dim)."""
    dim = gen.config.latent_dim
    z_a = torch.randn((n, dim), generator=rng, dtype=torch.float64)
    z_b = torch.randn((n, dim), generator=rng, dtype=torch.float64)
    w_a = gen.map_latent(z_a)
    w_b = gen.map_latent(z_b)
    rows = [
        style_mix(w_a[i], w_b[i], gen.num_style_slots, mixing_prob, rng)
        for i in range(n)
    ]
    return torch.stack(rows)


def _synthesis_train_params(gen: Generator) -> dict[str, torch.Tensor]:
    """Trainable copies of the synthesis component (feature convs + const)."""
    out: dict[str, torch.Tensor] = {}
    for slot, spec in enumerate(gen.specs):
        if spec.is_rgb:
            continue
        out[f"synthesis/conv.{spec.feature_index}"] = (
            gen.params.conv[slot].clone().requires_grad_(True)
        )
        out[f"synthesis/bias.{spec.feature_index}"] = (
            gen.params.bias[slot].clone().requires_grad_(True)
        )
    out["synthesis/const"] = gen.params.const.clone().requires_grad_(True)
    return out


def generator_with_synthesis(gen: Generator, train_params: dict[str, torch.Tensor]) -> Generator:
    conv = list(gen.params.conv)
    bias = list(gen.params.bias)
    for slot, spec in enumerate(gen.specs):
        if spec.is_rgb:
            continue
        conv[slot] = train_params[f"synthesis/conv.{spec.feature_index}"]
        bias[slot] = train_params[f"synthesis/bias.{spec.feature_index}"]
    params = GeneratorParams(
        mapping=gen.params.mapping,
        affine=gen.params.affine,
        conv=conv,
        bias=bias,
        const=train_params["synthesis/const"],
    )
    return gen.with_params(params)


def _as_leaves(params: dict[str, torch.Tensor]) -> dict[str, torch.Tensor]:
    return {k: v.detach().clone().requires_grad_(True) for k, v in params.items()}


def _grad_dict(total: torch.Tensor, params: dict[str, torch.Tensor]) -> dict[str, torch.Tensor]:
    keys = list(params)
    grads = torch.autograd.grad(total, [params[k] for k in keys], allow_unused=True)
    out = {}
    for key, grad in zip(keys, grads):
        out[key] = torch.zeros_like(params[key]) if grad is None else grad
    return out


def moving_average(values: Sequence[float], window: int) -> float:
    """Mean of the trailing window (or of everything if shorter)."""
    if not values:
        raise ShapeError("moving_average needs at least one value")
    tail = list(values)[-window:]
    return sum(tail) / len(tail)


def write_history_csv(history: Sequence[dict[str, float]], path) -> None:
    """One row per iteration; columns are the union of recorded terms."""
    columns: list[str] = []
    for entry in history:
        for key in entry:
            if key not in columns:
                columns.append(key)
    if "total" in columns:  # keep the combined value last
        columns = [c for c in columns if c != "total"] + ["total"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration"] + columns)
        for it, entry in enumerate(history):
            writer.writerow([it] + [f"{entry.get(c, 0.0):.10g}" for c in columns])


def _mean_over_members(values: list[torch.Tensor]) -> torch.Tensor:
    return torch.stack(values).mean(dim=0) if len(values) > 1 else values[0]


def _run_single_domain(
    gen: Generator,
    cfg: TrainingConfig,
    members,
    direction_refs: list[torch.Tensor] | None,
    across_refs: list[torch.Tensor] | None,
) -> AdaptResult:
    weights = cfg.loss_weights
    if weights.direction > 0.0 and direction_refs is None:
        raise ConfigError("direction weight is set but no text reference is available")
    if weights.clip_across > 0.0 and across_refs is None:
        raise ConfigError("clip_across weight is set but no exemplar reference is available")
    if weights.tt_direction > 0.0:
        raise ConfigError("tt_direction applies only to multi-domain training")

    rng = torch.Generator().manual_seed(cfg.seed)
    if cfg.param_space == "domain":
        train_params = {"domain_vector": gen.layout.ones().requires_grad_(True)}
    else:
        train_params = _synthesis_train_params(gen)
    state = adam_init(
        train_params, cfg.learning_rate, cfg.betas, cfg.adam_eps, cfg.weight_decay
    )

    history: list[dict[str, float]] = []
    for _ in range(cfg.iterations):
        w_slots = _draw_slot_latents(gen, cfg.batch_size, cfg.mixing_prob, rng)
        styles = gen.styles_from_slot_latents(w_slots)
        source_images = gen.synthesize(styles, None)
        if cfg.param_space == "domain":
            adapted_images = gen.synthesize(styles, train_params["domain_vector"])
        else:
            adapted_images = generator_with_synthesis(gen, train_params).synthesize(styles, None)

        entry: dict[str, float] = {}
        total = None

        def accumulate(name: str, raw: torch.Tensor, weight: float):
            nonlocal total
            entry[name] = float(raw.item())
            term = weight * raw
            total = term if total is None else total + term

        if weights.direction > 0.0 or weights.clip_across > 0.0:
            adapted_embs = [m.encode_image(adapted_images) for m in members]
            source_embs = [m.encode_image(source_images) for m in members]
        if weights.direction > 0.0:
            per_member = [
                direction_loss(adapted_embs[k] - source_embs[k], direction_refs[k]).sum()
                for k in range(len(members))
            ]
            accumulate("direction", _mean_over_members(per_member), weights.direction)
        if weights.clip_across > 0.0:
            per_member = [
                direction_loss(adapted_embs[k] - source_embs[k], across_refs[k]).sum()
                for k in range(len(members))
            ]
            accumulate("clip_across", _mean_over_members(per_member), weights.clip_across)
        if weights.indomain_angle > 0.0:
            accumulate(
                "indomain_angle",
                indomain_angle_loss(members, adapted_images, source_images),
                weights.indomain_angle,
            )
        if weights.domain_norm > 0.0 and cfg.param_space == "domain":
            accumulate("domain_norm", domain_norm_loss(train_params["domain_vector"]), weights.domain_norm)

        if total is None:
            history.append({"total": 0.0})
            continue
        entry["total"] = float(total.item())
        history.append(entry)
        grads = _grad_dict(total, train_params)
        new_params, state = adam_step(state, train_params, grads)
        train_params = _as_leaves(new_params)

    detached = {k: v.detach() for k, v in train_params.items()}
    if cfg.param_space == "domain":
        return AdaptResult(
            history=history, domain_vector=detached["domain_vector"], final_state=state
        )
    return AdaptResult(history=history, params=detached, final_state=state)


# --- single-domain entry points ------------------------------------------------


def adapt_single_domain_text(
    gen: Generator,
    descriptor: DomainDescriptor,
    source_text: str,
    cfg: TrainingConfig,
    encoders,
) -> AdaptResult:
    """Adapt toward a text domain; the source generator stays frozen.

    The reference direction per ensemble member is the embedding of the
    target caption minus the embedding of the source caption.
    """
    if descriptor.kind != "text":
        raise ConfigError(f"text adaptation needs a text descriptor, got kind {descriptor.kind!r}")
    if cfg.mode != "text":
        raise ConfigError(f"config mode is {cfg.mode!r}, expected 'text'")
    members = members_of(encoders)
    refs = [text_direction(m, descriptor.text, source_text) for m in members]
    return _run_single_domain(gen, cfg, members, direction_refs=refs, across_refs=None)


def naive_invert(
    gen: Generator,
    image: torch.Tensor,
    steps: int = 300,
    lr: float = 0.02,
    encoders=None,
    seed: int = 0,
) -> torch.Tensor:
    """Descend a latent toward an image by squared embedding distance.

    Starts at the mean mapped latent over 1000 seeded samples and runs
    Adam on the latent alone. This is a deliberately simple projector:
    good enough to give one-shot adaptation a source-domain anchor.
    """
    if encoders is None:
        raise ConfigError("naive_invert needs the training encoders")
    if steps < 0:
        raise ConfigError(f"steps must be >= 0, got {steps}")
    members = members_of(encoders)
    rng = torch.Generator().manual_seed(seed)
    z = torch.randn((1000, gen.config.latent_dim), generator=rng, dtype=torch.float64)
    with torch.no_grad():
        start = gen.map_latent(z).mean(dim=0)
    targets = [m.encode_image(image).squeeze(0).detach() for m in members]

    latent = {"latent": start.clone().requires_grad_(True)}
    state = adam_init(latent, lr, (0.9, 0.999))
    for _ in range(steps):
        rendered = gen.synthesize(gen.broadcast_styles(latent["latent"].unsqueeze(0)), None)
        total = None
        for member, target in zip(members, targets):
            dist = (member.encode_image(rendered).squeeze(0) - target).square().sum()
            total = dist if total is None else total + dist
        total = total / len(members)
        grads = _grad_dict(total, latent)
        new_params, state = adam_step(state, latent, grads)
        latent = _as_leaves(new_params)
    return latent["latent"].detach()


def adapt_one_shot(
    gen: Generator,
    style_image: torch.Tensor,
    cfg: TrainingConfig,
    encoders,
    projection_image: torch.Tensor | None = None,
    invert_steps: int = 300,
    invert_lr: float = 0.02,
) -> AdaptResult:
    """Adapt toward one style exemplar.

    The reference direction per member is the exemplar embedding minus
    the embedding of its projection into the source domain; when no
    projection image is supplied one is rendered via naive_invert.
    """
    if cfg.mode != "one-shot":
        raise ConfigError(f"config mode is {cfg.mode!r}, expected 'one-shot'")
    if style_image.ndim != 4 or style_image.shape[0] != 1:
        raise ShapeError(
            f"style image must be a single (1, c, h, w) batch, got {tuple(style_image.shape)}"
        )
    members = members_of(encoders)
    if projection_image is None:
        latent = naive_invert(
            gen, style_image, steps=invert_steps, lr=invert_lr, encoders=members, seed=cfg.seed
        )
        with torch.no_grad():
            projection_image = gen.synthesize(gen.broadcast_styles(latent.unsqueeze(0)), None)
    refs = [
        (m.encode_image(style_image).squeeze(0) - m.encode_image(projection_image).squeeze(0)).detach()
        for m in members
    ]
    return _run_single_domain(gen, cfg, members, direction_refs=None, across_refs=refs)


# --- multi-domain (hypernetwork) training --------------------------------------


def _fixed_domain_embeddings(members, domains: Sequence[DomainDescriptor]):
    """Per-member target embeddings and per-member direction references."""
    targets = []  # targets[k][i]: member k, domain i
    refs = []
    for member in members:
        row_t, row_r = [], []
        for desc in domains:
            if desc.kind != "text":
                raise ConfigError("fixed-domain training needs text descriptors")
            source = desc.source_text
            if source is None:
                raise ConfigError(f"domain {desc.text!r} is missing its source text")
            target = member.encode_text(desc.text)
            row_t.append(target)
            row_r.append(target - member.encode_text(source))
        targets.append(row_t)
        refs.append(row_r)
    return targets, refs


def train_hdn(
    gen: Generator,
    cfg: TrainingConfig,
    encoders,
    domains: Sequence[DomainDescriptor] | None = None,
    sampler: DomainSampler | None = None,
    samplers: Sequence[DomainSampler] | None = None,
    hdn_config: HDNConfig | None = None,
) -> AdaptResult:
    """Train the hypernetwork over many domains at once.

    hdn-fixed: domains is a list of text descriptors; batch elements take
    domains round-robin, so every domain is visited equally often.

    hdn-open: one sampler per ensemble member (samplers), built over the
    same prompts member-by-member; each iteration resamples the base
    embeddings once per member with shared randomness and draws one
    Dirichlet mixture row per batch element. A single sampler is accepted
    and reused when the ensemble has one member.

    The hypernetwork always consumes the first member's embeddings; the
    losses still average over every member.
    """
    members = members_of(encoders)
    if cfg.mode not in ("hdn-fixed", "hdn-open"):
        raise ConfigError(f"config mode is {cfg.mode!r}, expected 'hdn-fixed' or 'hdn-open'")
    if hdn_config is None:
        hdn_config = HDNConfig.for_generator(gen.config, embed_dim=members[0].embed_dim)
    if hdn_config.output_dim != gen.layout.total_dim:
        raise ConfigError(
            f"hypernetwork predicts {hdn_config.output_dim} values but the "
            f"generator layout needs {gen.layout.total_dim}"
        )
    if hdn_config.embed_dim != members[0].embed_dim:
        raise ConfigError(
            f"hypernetwork expects {hdn_config.embed_dim}-d embeddings, "
            f"encoders produce {members[0].embed_dim}-d"
        )

    weights = cfg.loss_weights
    if cfg.mode == "hdn-fixed":
        if not domains:
            raise ConfigError("hdn-fixed needs a non-empty domain list")
        if weights.tt_direction > 0.0 and len(domains) < 2:
            raise ConfigError("cross-domain direction needs at least two domains")
        targets, refs = _fixed_domain_embeddings(members, domains)
        target_texts = [d.text for d in domains]
    else:
        if samplers is None:
            if sampler is None:
                raise ConfigError("hdn-open needs a sampler per ensemble member")
            samplers = [sampler] * len(members)
        if len(samplers) != len(members):
            raise ConfigError(
                f"got {len(samplers)} samplers for {len(members)} ensemble members"
            )
        base_counts = {s.num_bases for s in samplers}
        if len(base_counts) != 1:
            raise ConfigError("samplers must cover the same prompt set")
        source_embs = [m.encode_text(cfg.source_text) for m in members]

    torch_rng = torch.Generator().manual_seed(cfg.seed)
    np_rng = np.random.default_rng(cfg.seed)
    params = {k: v.requires_grad_(True) for k, v in init_hdn_params(hdn_config, seed=cfg.seed).items()}
    state = adam_init(params, cfg.learning_rate, cfg.betas, cfg.adam_eps, cfg.weight_decay)

    history: list[dict[str, float]] = []
    cursor = 0
    n = cfg.batch_size
    for _ in range(cfg.iterations):
        if cfg.mode == "hdn-fixed":
            domain_ids = [(cursor + i) % len(domains) for i in range(n)]
            cursor = (cursor + n) % len(domains)
            inputs = torch.stack([targets[0][i] for i in domain_ids])
            batch_refs = [torch.stack([refs[k][i] for i in domain_ids]) for k in range(len(members))]
            distinct = [
                (a, b)
                for a in range(n)
                for b in range(a + 1, n)
                if domain_ids[a] != domain_ids[b]
            ]
            tt_text_refs = [
                torch.stack(
                    [
                        members[k].encode_text(target_texts[domain_ids[a]])
                        - members[k].encode_text(target_texts[domain_ids[b]])
                        for a, b in distinct
                    ]
                )
                if distinct
                else None
                for k in range(len(members))
            ]
        else:
            num_bases = samplers[0].num_bases
            gamma = samplers[0].config.gamma
            tangents = torch.from_numpy(
                np_rng.standard_normal((num_bases, members[0].embed_dim))
            ).to(torch.float64)
            alphas = sample_dirichlet_weights(
                num_bases, n, samplers[0].config.beta or 1.0 / n, np_rng
            )
            member_embs = []
            for k, smp in enumerate(samplers):
                bases = torch.stack(
                    [
                        resample_with_direction(smp.base_embeddings[j], tangents[j], gamma)
                        for j in range(num_bases)
                    ]
                )
                member_embs.append(alphas @ bases)
            inputs = member_embs[0]
            batch_refs = [member_embs[k] - source_embs[k] for k in range(len(members))]
            distinct = [(a, b) for a in range(n) for b in range(a + 1, n)]
            tt_text_refs = [
                torch.stack([member_embs[k][a] - member_embs[k][b] for a, b in distinct])
                if distinct
                else None
                for k in range(len(members))
            ]

        domain_batch = hdn_forward(hdn_config, params, inputs)
        w_slots = _draw_slot_latents(gen, n, cfg.mixing_prob, torch_rng)
        styles = gen.styles_from_slot_latents(w_slots)
        source_images = gen.synthesize(styles, None)
        adapted_images = gen.synthesize(styles, domain_batch)

        adapted_embs = [m.encode_image(adapted_images) for m in members]
        source_img_embs = [m.encode_image(source_images) for m in members]

        entry: dict[str, float] = {}
        total = None

        def accumulate(name: str, raw: torch.Tensor, weight: float):
            nonlocal total
            entry[name] = float(raw.item())
            term = weight * raw
            total = term if total is None else total + term

        if weights.direction > 0.0:
            per_member = [
                direction_loss(adapted_embs[k] - source_img_embs[k], batch_refs[k]).sum()
                for k in range(len(members))
            ]
            accumulate("direction", _mean_over_members(per_member), weights.direction)
        if weights.tt_direction > 0.0 and distinct:
            per_member = []
            for k in range(len(members)):
                pair_deltas = torch.stack(
                    [adapted_embs[k][a] - adapted_embs[k][b] for a, b in distinct]
                )
                per_member.append(direction_loss(pair_deltas, tt_text_refs[k]).mean())
            accumulate("tt_direction", _mean_over_members(per_member), weights.tt_direction)
        if weights.indomain_angle > 0.0:
            accumulate(
                "indomain_angle",
                indomain_angle_loss(members, adapted_images, source_images),
                weights.indomain_angle,
            )
        if weights.domain_norm > 0.0:
            accumulate("domain_norm", domain_norm_loss(domain_batch).sum(), weights.domain_norm)

        if total is None:
            history.append({"total": 0.0})
            continue
        entry["total"] = float(total.item())
        history.append(entry)
        grads = _grad_dict(total, params)
        new_params, state = adam_step(state, params, grads)
        params = _as_leaves(new_params)

    return AdaptResult(
        history=history,
        params={k: v.detach() for k, v in params.items()},
        final_state=state,
    )


# --- checkpoint bridges ---------------------------------------------------------


def _base_meta(cfg: TrainingConfig, extra: dict | None = None) -> dict:
    meta = {"step": cfg.iterations, "seed": cfg.seed}
    if extra:
        meta.update(extra)
    return meta


def domain_vector_checkpoint(
    domain_vector: torch.Tensor, mode: str, run_config: dict, meta: dict | None = None
) -> Checkpoint:
    payloads = {"domain_vector": domain_vector.detach().cpu().numpy().astype("<f4")}
    return Checkpoint(mode=mode, config=run_config, payloads=payloads, meta=meta or {})


def hdn_checkpoint(
    params: dict[str, torch.Tensor], mode: str, run_config: dict, meta: dict | None = None
) -> Checkpoint:
    payloads = {
        f"hdn/{name}": tensor.detach().cpu().numpy().astype("<f4")
        for name, tensor in params.items()
    }
    return Checkpoint(mode=mode, config=run_config, payloads=payloads, meta=meta or {})


def synthesis_checkpoint(
    params: dict[str, torch.Tensor], mode: str, run_config: dict, meta: dict | None = None
) -> Checkpoint:
    payloads = {
        name: tensor.detach().cpu().numpy().astype("<f4") for name, tensor in params.items()
    }
    return Checkpoint(mode=mode, config=run_config, payloads=payloads, meta=meta or {})


def domain_vector_from_checkpoint(ckpt: Checkpoint, layout) -> torch.Tensor:
    if "domain_vector" not in ckpt.payloads:
        raise ConfigError("checkpoint carries no domain vector")
    flat = ckpt.payloads["domain_vector"].reshape(-1)
    if flat.size != layout.total_dim:
        raise ConfigError(
            f"checkpoint domain vector has {flat.size} entries, "
            f"layout expects {layout.total_dim}"
        )
    return torch.from_numpy(flat.astype(np.float64))


def hdn_params_from_checkpoint(ckpt: Checkpoint, hdn_config: HDNConfig) -> dict[str, torch.Tensor]:
    shapes = hdn_param_shapes(hdn_config)
    out: dict[str, torch.Tensor] = {}
    for name, shape in shapes.items():
        key = f"hdn/{name}"
        if key not in ckpt.payloads:
            raise ConfigError(f"checkpoint is missing hypernetwork tensor {name!r}")
        flat = ckpt.payloads[key].reshape(-1)
        want = int(np.prod(shape))
        if flat.size != want:
            raise ConfigError(
                f"hypernetwork tensor {name!r} has {flat.size} values, expected {want}"
            )
        out[name] = torch.from_numpy(flat.astype(np.float64)).reshape(shape)
    return out


def synthesis_params_from_checkpoint(gen: Generator, ckpt: Checkpoint) -> GeneratorParams:
    """Generator parameters with the synthesis component replaced from a checkpoint."""
    conv = list(gen.params.conv)
    bias = list(gen.params.bias)
    for slot, spec in enumerate(gen.specs):
        if spec.is_rgb:
            continue
        for kind, store, shape in (
            ("conv", conv, tuple(gen.params.conv[slot].shape)),
            ("bias", bias, tuple(gen.params.bias[slot].shape)),
        ):
            key = f"synthesis/{kind}.{spec.feature_index}"
            if key not in ckpt.payloads:
                raise ConfigError(f"checkpoint is missing section {key!r}")
            flat = ckpt.payloads[key].reshape(-1)
            want = int(np.prod(shape))
            if flat.size != want:
                raise ConfigError(f"section {key!r} has {flat.size} values, expected {want}")
            store[slot] = torch.from_numpy(flat.astype(np.float64)).reshape(shape)
    if "synthesis/const" not in ckpt.payloads:
        raise ConfigError("checkpoint is missing section 'synthesis/const'")
    const_flat = ckpt.payloads["synthesis/const"].reshape(-1)
    const_shape = tuple(gen.params.const.shape)
    if const_flat.size != int(np.prod(const_shape)):
        raise ConfigError("section 'synthesis/const' does not match the generator")
    const = torch.from_numpy(const_flat.astype(np.float64)).reshape(const_shape)
    return GeneratorParams(
        mapping=gen.params.mapping,
        affine=gen.params.affine,
        conv=conv,
        bias=bias,
        const=const,
    )
