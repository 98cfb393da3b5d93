"""Command-line interface: adapt, train, generate, evaluate, inspect.

Runs are described by a JSON config file with sections generator /
encoder / training / sampler / hdn / output; every value has a default,
flags override the config, and the fully resolved config is echoed into
each checkpoint so later commands can rebuild the exact setup. Unknown
sections or keys are rejected rather than ignored.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from . import __version__
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .embedding_space import (
    DomainDescriptor,
    Ensemble,
    LossWeights,
    create_encoder,
    diversity_metric,
    quality_metric,
)
from .errors import CheckpointError, ConfigError, InputError, ShapeError
from .generator import Generator, GeneratorConfig
from .hyperdomainnet import HDNConfig, count_hdn_parameters, hdn_forward, hdn_parameter_count
from .domain_sampler import (
    DomainSampler,
    SamplerConfig,
    default_domain_pairs,
    default_vocabulary,
    generate_combinations,
    load_domain_pairs,
    load_vocabulary,
)
from .trainer import (
    adapt_one_shot,
    generator_with_synthesis,
    adapt_single_domain_text,
    domain_vector_checkpoint,
    domain_vector_from_checkpoint,
    hdn_checkpoint,
    hdn_params_from_checkpoint,
    synthesis_checkpoint,
    synthesis_params_from_checkpoint,
    train_hdn,
    training_config,
    write_history_csv,
)

OUTPUT_DIR_ENV = "DOMAINMOD_OUTPUT_DIR"

DEFAULT_CONFIG: dict = {
    "generator": {
        "resolution_channels": {"4": 64, "8": 64, "16": 32, "32": 16},
        "latent_dim": 64,
        "mapping_layers": 2,
        "rgb_channels": 3,
        "seed": 0,
    },
    "encoder": {
        "kind": "mock",
        "embed_dim": 64,
        "seeds": [101, 202],
        "eval_seed": 777,
        "grid": 16,
    },
    "training": {
        "iterations": None,
        "batch_size": None,
        "learning_rate": None,
        "betas": None,
        "loss_weights": None,
        "mixing_prob": 0.9,
        "weight_decay": 0.0,
        "adam_eps": 1e-8,
        "seed": 0,
        "param_space": "domain",
        "source_text": "Photo",
        "invert_steps": 300,
        "invert_lr": 0.02,
    },
    "sampler": {
        "gamma": 0.35,
        "beta": None,
        "vocabulary": None,
        "max_prompts": 32,
    },
    "hdn": {
        "hidden_dim": 64,
        "backbone_blocks": 10,
        "head_blocks": 5,
    },
    "output": {
        "grid_cols": 4,
    },
}


class UsageError(Exception):
    """Raised for bad flags so main() can exit with code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit(2); we want exit(1)
        raise UsageError(message)


# --- configuration handling ---------------------------------------------------


def _merge_section(base: dict, override: dict, section: str) -> dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if key not in merged:
            raise ConfigError(f"unknown key {key!r} in config section {section!r}")
        if key in ("resolution_channels", "loss_weights") and isinstance(value, dict):
            merged[key] = copy.deepcopy(value) if merged[key] is None else {**(merged[key] or {}), **value}
        else:
            merged[key] = value
    return merged


def load_run_config(path: str | None) -> dict:
    """Defaults overlaid with the user's JSON config; unknown keys rejected."""
    config = copy.deepcopy(DEFAULT_CONFIG)
    if path is None:
        return config
    try:
        with open(path, "r", encoding="utf-8") as fh:
            user = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(user, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    for section, values in user.items():
        if section not in config:
            raise ConfigError(
                f"unknown config section {section!r}; expected one of {sorted(config)}"
            )
        if not isinstance(values, dict):
            raise ConfigError(f"config section {section!r} must be an object")
        config[section] = _merge_section(config[section], values, section)
    return config


def build_generator_config(section: dict) -> GeneratorConfig:
    channels: dict[int, int] = {}
    for key, value in section["resolution_channels"].items():
        try:
            res = int(key)
        except (TypeError, ValueError):
            raise ConfigError(f"resolution key {key!r} is not an integer") from None
        channels[res] = value
    return GeneratorConfig(
        resolution_channels=channels,
        latent_dim=section["latent_dim"],
        mapping_layers=section["mapping_layers"],
        rgb_channels=section["rgb_channels"],
    )


def build_generator(config: dict) -> Generator:
    section = config["generator"]
    return Generator(build_generator_config(section), seed=section["seed"])


def build_ensemble(config: dict) -> Ensemble:
    section = config["encoder"]
    members = tuple(
        create_encoder(
            section["kind"],
            embed_dim=section["embed_dim"],
            seed=seed,
            grid=section["grid"],
        )
        for seed in section["seeds"]
    )
    if not members:
        raise ConfigError("encoder.seeds must list at least one seed")
    return Ensemble(members)


def build_eval_encoder(config: dict):
    section = config["encoder"]
    if section["eval_seed"] in section["seeds"]:
        raise ConfigError(
            "encoder.eval_seed must differ from the training seeds; "
            "scoring with a training encoder rewards its own blind spots"
        )
    return create_encoder(
        section["kind"],
        embed_dim=section["embed_dim"],
        seed=section["eval_seed"],
        grid=section["grid"],
    )


def build_training_config(config: dict, mode: str):
    section = config["training"]
    overrides: dict = {}
    for key in ("iterations", "batch_size", "learning_rate"):
        if section[key] is not None:
            overrides[key] = section[key]
    if section["betas"] is not None:
        betas = section["betas"]
        if not (isinstance(betas, (list, tuple)) and len(betas) == 2):
            raise ConfigError(f"training.betas must be a two-element list, got {betas!r}")
        overrides["betas"] = (float(betas[0]), float(betas[1]))
    if section["loss_weights"] is not None:
        from .trainer import MODE_DEFAULTS

        base = MODE_DEFAULTS[mode]["loss_weights"].as_dict()
        for key, value in section["loss_weights"].items():
            if key not in base:
                raise ConfigError(f"unknown loss weight {key!r}")
            base[key] = value
        overrides["loss_weights"] = LossWeights(**base)
    for key in ("mixing_prob", "weight_decay", "adam_eps", "seed", "param_space", "source_text"):
        overrides[key] = section[key]
    return training_config(mode, **overrides)


def build_hdn_config(config: dict, gen: Generator) -> HDNConfig:
    section = config["hdn"]
    return HDNConfig(
        layer_widths=gen.layout.in_channels,
        embed_dim=config["encoder"]["embed_dim"],
        hidden_dim=section["hidden_dim"],
        backbone_blocks=section["backbone_blocks"],
        head_blocks=section["head_blocks"],
    )


def resolved_config_echo(config: dict, tc, mode: str, run_info: dict) -> dict:
    echo = copy.deepcopy(config)
    echo["training"] = {
        **tc.as_dict(),
        "invert_steps": config["training"]["invert_steps"],
        "invert_lr": config["training"]["invert_lr"],
    }
    echo["run"] = dict(run_info, mode=mode, version=__version__)
    return echo


# --- image I/O ----------------------------------------------------------------


def images_to_uint8(images: torch.Tensor) -> np.ndarray:
    """Map raw generator output to display range: clamp to [-1, 1], then [0, 255]."""
    arr = images.detach().to(torch.float64).clamp(-1.0, 1.0).numpy()
    arr = (arr + 1.0) / 2.0
    return np.rint(arr * 255.0).astype(np.uint8).transpose(0, 2, 3, 1)


def assemble_grid(images: torch.Tensor, cols: int) -> Image.Image:
    """Tile a batch into a rows*h by cols*w image; empty cells stay black."""
    if cols < 1:
        raise ConfigError(f"grid columns must be >= 1, got {cols}")
    tiles = images_to_uint8(images)
    n, h, w, c = tiles.shape
    rows = math.ceil(n / cols)
    canvas = np.zeros((rows * h, cols * w, c), dtype=np.uint8)
    for idx in range(n):
        r, col = divmod(idx, cols)
        canvas[r * h : (r + 1) * h, col * w : (col + 1) * w] = tiles[idx]
    return Image.fromarray(canvas.squeeze(-1) if c == 1 else canvas)


def write_grid(images: torch.Tensor, path: Path, cols: int) -> None:
    assemble_grid(images, cols).save(path, format="PNG")


def load_image(path: str) -> torch.Tensor:
    """Read an image file into the raw network range [-1, 1], shape (1, 3, h, w)."""
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB")
            arr = np.asarray(rgb, dtype=np.float64)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read image {path}: {exc}") from None
    tensor = torch.from_numpy(arr / 255.0 * 2.0 - 1.0).permute(2, 0, 1).unsqueeze(0)
    return tensor


def _out_dir(args) -> Path:
    out = Path(args.out if args.out is not None else os.environ.get(OUTPUT_DIR_ENV, "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _preview_latents(gen: Generator, n: int, seed: int) -> torch.Tensor:
    rng = torch.Generator().manual_seed(seed)
    return torch.randn((n, gen.config.latent_dim), generator=rng, dtype=torch.float64)


# --- subcommands ----------------------------------------------------------------


def _apply_common_overrides(config: dict, args) -> None:
    if getattr(args, "seed", None) is not None:
        config["training"]["seed"] = args.seed
    if getattr(args, "iterations", None) is not None:
        config["training"]["iterations"] = args.iterations
    if getattr(args, "batch_size", None) is not None:
        config["training"]["batch_size"] = args.batch_size


def cmd_adapt_text(args) -> int:
    config = load_run_config(args.config)
    _apply_common_overrides(config, args)
    source_text = args.source_text or config["training"]["source_text"]
    gen = build_generator(config)
    ensemble = build_ensemble(config)
    tc = build_training_config(config, "text")
    result = adapt_single_domain_text(
        gen, DomainDescriptor(text=args.text), source_text, tc, ensemble
    )

    out = _out_dir(args)
    echo = resolved_config_echo(
        config, tc, "text", {"command": "adapt-text", "target_text": args.text, "source_text": source_text}
    )
    meta = {"step": tc.iterations, "seed": tc.seed}
    if tc.param_space == "domain":
        ckpt = domain_vector_checkpoint(result.domain_vector, "text", echo, meta)
    else:
        ckpt = synthesis_checkpoint(result.params, "text", echo, meta)
    ckpt_path = out / "domain.ckpt"
    save_checkpoint(ckpt, ckpt_path)
    write_history_csv(result.history, out / "history.csv")

    z = _preview_latents(gen, config["output"]["grid_cols"], tc.seed)
    source_images = gen.generate(z, None)
    if tc.param_space == "domain":
        adapted_images = gen.generate(z, result.domain_vector)
    else:
        adapted_images = generator_with_synthesis(gen, result.params).generate(z, None)
    write_grid(torch.cat([source_images, adapted_images]), out / "preview.png", config["output"]["grid_cols"])

    final = result.history[-1] if result.history else {"total": 0.0}
    print(f"adapted toward {args.text!r} (source {source_text!r}) in {tc.iterations} iterations")
    print("final losses: " + ", ".join(f"{k}={v:.4f}" for k, v in final.items()))
    print(f"wrote {ckpt_path}, {out / 'history.csv'}, {out / 'preview.png'}")
    return 0


def cmd_adapt_image(args) -> int:
    config = load_run_config(args.config)
    _apply_common_overrides(config, args)
    gen = build_generator(config)
    ensemble = build_ensemble(config)
    tc = build_training_config(config, "one-shot")
    style_image = load_image(args.style_image)
    projection = load_image(args.projection_image) if args.projection_image else None
    result = adapt_one_shot(
        gen,
        style_image,
        tc,
        ensemble,
        projection_image=projection,
        invert_steps=config["training"]["invert_steps"],
        invert_lr=config["training"]["invert_lr"],
    )

    out = _out_dir(args)
    echo = resolved_config_echo(
        config,
        tc,
        "one-shot",
        {"command": "adapt-image", "style_image": str(args.style_image)},
    )
    meta = {"step": tc.iterations, "seed": tc.seed}
    if tc.param_space == "domain":
        ckpt = domain_vector_checkpoint(result.domain_vector, "one-shot", echo, meta)
    else:
        ckpt = synthesis_checkpoint(result.params, "one-shot", echo, meta)
    ckpt_path = out / "domain.ckpt"
    save_checkpoint(ckpt, ckpt_path)
    write_history_csv(result.history, out / "history.csv")

    z = _preview_latents(gen, config["output"]["grid_cols"], tc.seed)
    source_images = gen.generate(z, None)
    if tc.param_space == "domain":
        adapted_images = gen.generate(z, result.domain_vector)
    else:
        adapted_images = generator_with_synthesis(gen, result.params).generate(z, None)
    write_grid(torch.cat([source_images, adapted_images]), out / "preview.png", config["output"]["grid_cols"])

    final = result.history[-1] if result.history else {"total": 0.0}
    print(f"adapted toward exemplar {args.style_image} in {tc.iterations} iterations")
    print("final losses: " + ", ".join(f"{k}={v:.4f}" for k, v in final.items()))
    print(f"wrote {ckpt_path}, {out / 'history.csv'}, {out / 'preview.png'}")
    return 0


def _open_set_samplers(config: dict, ensemble: Ensemble):
    section = config["sampler"]
    vocab = (
        load_vocabulary(section["vocabulary"])
        if section["vocabulary"]
        else default_vocabulary()
    )
    prompts = generate_combinations(vocab)
    limit = section["max_prompts"]
    if limit is not None:
        if limit < 1:
            raise ConfigError(f"sampler.max_prompts must be >= 1, got {limit}")
        prompts = prompts[:limit]
    sampler_cfg = SamplerConfig(gamma=section["gamma"], beta=section["beta"])
    samplers = []
    for member in ensemble.members:
        bases = torch.stack([member.encode_text(p) for p in prompts])
        samplers.append(DomainSampler(bases, sampler_cfg))
    return samplers, prompts


def cmd_train_hdn(args) -> int:
    config = load_run_config(args.config)
    _apply_common_overrides(config, args)
    gen = build_generator(config)
    ensemble = build_ensemble(config)
    hdn_config = build_hdn_config(config, gen)

    if args.open_set:
        mode = "hdn-open"
        tc = build_training_config(config, mode)
        samplers, prompts = _open_set_samplers(config, ensemble)
        result = train_hdn(gen, tc, ensemble, samplers=samplers, hdn_config=hdn_config)
        run_info = {"command": "train-hdn", "prompts": len(prompts)}
        preview_texts = prompts[: min(4, len(prompts))]
    else:
        mode = "hdn-fixed"
        tc = build_training_config(config, mode)
        domains = load_domain_pairs(args.domains) if args.domains else default_domain_pairs()
        result = train_hdn(gen, tc, ensemble, domains=domains, hdn_config=hdn_config)
        run_info = {"command": "train-hdn", "domains": [d.text for d in domains]}
        preview_texts = [d.text for d in domains[: min(4, len(domains))]]

    out = _out_dir(args)
    echo = resolved_config_echo(config, tc, mode, run_info)
    ckpt = hdn_checkpoint(result.params, mode, echo, {"step": tc.iterations, "seed": tc.seed})
    ckpt_path = out / "hdn.ckpt"
    save_checkpoint(ckpt, ckpt_path)
    write_history_csv(result.history, out / "history.csv")

    cols = config["output"]["grid_cols"]
    z = _preview_latents(gen, cols, tc.seed)
    rows = [gen.generate(z, None)]
    member0 = ensemble.members[0]
    with torch.no_grad():
        for text in preview_texts:
            domain = hdn_forward(hdn_config, result.params, member0.encode_text(text))
            rows.append(gen.generate(z, domain))
    write_grid(torch.cat(rows), out / "preview.png", cols)

    final = result.history[-1] if result.history else {"total": 0.0}
    print(f"trained {mode} for {tc.iterations} iterations "
          f"({count_hdn_parameters(result.params)} hypernetwork parameters)")
    print("final losses: " + ", ".join(f"{k}={v:.4f}" for k, v in final.items()))
    print(f"wrote {ckpt_path}, {out / 'history.csv'}, {out / 'preview.png'}")
    return 0


def _checkpoint_kind(ckpt: Checkpoint) -> str:
    names = set(ckpt.payloads)
    if "domain_vector" in names:
        return "domain"
    if any(name.startswith("hdn/") for name in names):
        return "hdn"
    if any(name.startswith("synthesis/") for name in names):
        return "synthesis"
    raise CheckpointError(f"unrecognized payload sections: {sorted(names)}")


def _restore_run(ckpt: Checkpoint):
    """Rebuild the generator (and config) recorded in a checkpoint."""
    config = ckpt.config
    for section in ("generator", "encoder"):
        if section not in config:
            raise CheckpointError(f"checkpoint config is missing the {section!r} section")
    gen = build_generator(config)
    return config, gen


def _domain_for_generation(ckpt: Checkpoint, gen: Generator, config: dict, text: str | None):
    """Resolve what to render with: a domain vector, replaced params, or neither."""
    kind = _checkpoint_kind(ckpt)
    if kind == "domain":
        return domain_vector_from_checkpoint(ckpt, gen.layout), None
    if kind == "synthesis":
        return None, synthesis_params_from_checkpoint(gen, ckpt)
    if text is None:
        raise ConfigError("a hypernetwork checkpoint needs --text to pick the domain")
    hdn_config = build_hdn_config(config, gen)
    params = hdn_params_from_checkpoint(ckpt, hdn_config)
    member0 = build_ensemble(config).members[0]
    with torch.no_grad():
        domain = hdn_forward(hdn_config, params, member0.encode_text(text))
    return domain, None


def cmd_generate(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    config, gen = _restore_run(ckpt)
    domain, replaced = _domain_for_generation(ckpt, gen, config, args.text)
    if replaced is not None:
        gen = gen.with_params(replaced)

    rng = torch.Generator().manual_seed(args.seed)
    z = torch.randn((args.num, gen.config.latent_dim), generator=rng, dtype=torch.float64)
    with torch.no_grad():
        images = gen.generate(z, domain)

    out = _out_dir(args)
    cols = args.cols if args.cols is not None else config["output"]["grid_cols"]
    grid_path = out / "grid.png"
    write_grid(images, grid_path, cols)
    print(f"rendered {args.num} samples from {args.checkpoint} (mode {ckpt.mode})")
    print(f"wrote {grid_path}")
    return 0


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    config, gen = _restore_run(ckpt)
    text = args.text or ckpt.config.get("run", {}).get("target_text")
    if text is None:
        raise ConfigError("no caption available: pass --text or use a checkpoint that records one")
    domain, replaced = _domain_for_generation(ckpt, gen, config, text)
    if replaced is not None:
        gen = gen.with_params(replaced)

    rng = torch.Generator().manual_seed(args.seed)
    z = torch.randn((args.num, gen.config.latent_dim), generator=rng, dtype=torch.float64)
    with torch.no_grad():
        images = gen.generate(z, domain)
    eval_enc = build_eval_encoder(config)
    report = {
        "checkpoint": str(args.checkpoint),
        "mode": ckpt.mode,
        "caption": text,
        "num_samples": args.num,
        "seed": args.seed,
        "quality": quality_metric(eval_enc, images, text),
        "diversity": diversity_metric(eval_enc, images),
    }

    out = _out_dir(args)
    report_path = out / "report.json"
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"quality: {report['quality']:.6f}")
    print(f"diversity: {report['diversity']:.6f}")
    print(f"wrote {report_path}")
    return 0


def cmd_inspect(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    print(f"checkpoint: {args.checkpoint}")
    print(f"mode: {ckpt.mode}")
    print(f"step: {ckpt.meta.get('step', 'unknown')}  seed: {ckpt.meta.get('seed', 'unknown')}")
    gen_section = ckpt.config.get("generator", {})
    print(
        "generator: resolutions "
        + ",".join(sorted(gen_section.get("resolution_channels", {}), key=int))
        + f"  latent_dim {gen_section.get('latent_dim')}"
    )
    total = 0
    for name in sorted(ckpt.payloads):
        size = int(ckpt.payloads[name].size)
        total += size
        print(f"  section {name}: {size} float32 values")
    print(f"total parameters: {total}")
    if _checkpoint_kind(ckpt) == "hdn" and "hdn" in ckpt.config:
        gen = build_generator(ckpt.config)
        hdn_config = build_hdn_config(ckpt.config, gen)
        print(f"hypernetwork closed-form count: {hdn_parameter_count(hdn_config)}")
    return 0


# --- entry point ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="domainmod", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"domainmod {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")

    def add_common(p, training: bool):
        p.add_argument("--config", help="JSON run configuration", default=None)
        p.add_argument("--out", help=f"output directory (default ${OUTPUT_DIR_ENV} or .)", default=None)
        if training:
            p.add_argument("--seed", type=int, default=None, help="training seed override")
            p.add_argument("--iterations", type=int, default=None)
            p.add_argument("--batch-size", dest="batch_size", type=int, default=None)

    p = sub.add_parser("adapt-text", help="adapt toward a text domain")
    p.add_argument("--text", required=True, help="target caption")
    p.add_argument("--source-text", default=None, help="source caption (default from config)")
    add_common(p, training=True)
    p.set_defaults(func=cmd_adapt_text)

    p = sub.add_parser("adapt-image", help="adapt toward one exemplar image")
    p.add_argument("--style-image", required=True)
    p.add_argument("--projection-image", default=None, help="precomputed source-domain projection")
    add_common(p, training=True)
    p.set_defaults(func=cmd_adapt_image)

    p = sub.add_parser("train-hdn", help="train the multi-domain hypernetwork")
    p.add_argument("--domains", default=None, help="domains file (default: packaged 20 domains)")
    p.add_argument("--open", dest="open_set", action="store_true", help="open set sampled from the vocabulary")
    add_common(p, training=True)
    p.set_defaults(func=cmd_train_hdn)

    p = sub.add_parser("generate", help="render a sample grid from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--text", default=None, help="domain caption (hypernetwork checkpoints)")
    p.add_argument("--num", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cols", type=int, default=None)
    add_common(p, training=False)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", help="quality/diversity report for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--text", default=None, help="caption to score against")
    p.add_argument("--num", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    add_common(p, training=False)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", help="describe a checkpoint file")
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "command", None) is None:
            parser.print_usage(sys.stderr)
            return 1
        if getattr(args, "num", None) is not None and args.num < 1:
            raise UsageError("--num must be >= 1")
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (CheckpointError, ShapeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
