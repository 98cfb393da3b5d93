"""Binary checkpoint format for adapted parameters.

Everything is little-endian. A file starts with the header

    magic  b"HDNC"
    u32    format version (currently 1)
    u16    length of the mode tag, then that many UTF-8 bytes
    u16    length of the config digest, then that many UTF-8 bytes

where the digest is the SHA-256 hex digest of the canonical JSON encoding
(sorted keys, compact separators) of the run configuration. After the
header come named sections until end of file:

    u16    length of the section name, then that many UTF-8 bytes
    u64    payload length in bytes, then the payload

Two sections carry UTF-8 JSON: "config/json" (the full resolved run
configuration, which must hash to the header digest) and "meta/json"
(step counter, seed, optimizer step, RNG state). Every other section is a
flat array of float32 values; its shape is not stored but derived from
the configuration when loading, so a payload whose length disagrees with
the configured architecture is rejected. Section order is fixed (the two
JSON sections, then parameter sections sorted by name), which makes
writing the same checkpoint twice produce identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError, ConfigError

__all__ = [
    "MAGIC",
    "FORMAT_VERSION",
    "MODES",
    "canonical_json",
    "config_digest",
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
]

MAGIC = b"HDNC"
FORMAT_VERSION = 1
MODES = ("text", "one-shot", "hdn-fixed", "hdn-open")

_JSON_SECTIONS = ("config/json", "meta/json")


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_digest(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


@dataclass
class Checkpoint:
    """In-memory image of a checkpoint file.

    payloads maps section names to float32 arrays; meta holds small
    JSON-able bookkeeping (step, seed, RNG state).
    """

    mode: str
    config: dict
    payloads: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"unknown checkpoint mode {self.mode!r}; expected one of {MODES}")
        if not self.payloads:
            raise ConfigError("checkpoint carries no parameter payloads")
        converted = {}
        for name, arr in self.payloads.items():
            if name in _JSON_SECTIONS:
                raise ConfigError(f"payload name {name!r} collides with a JSON section")
            converted[name] = np.ascontiguousarray(arr, dtype="<f4")
        self.payloads = converted

    @property
    def step(self) -> int:
        return int(self.meta.get("step", 0))


def _pack_str(text: str) -> bytes:
    raw = text.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ConfigError(f"string too long for checkpoint header ({len(raw)} bytes)")
    return struct.pack("<H", len(raw)) + raw


def _pack_section(name: str, payload: bytes) -> bytes:
    return _pack_str(name) + struct.pack("<Q", len(payload)) + payload


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    """Write atomically: assemble in memory, write to a temp file, rename."""
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", FORMAT_VERSION)
    blob += _pack_str(ckpt.mode)
    blob += _pack_str(config_digest(ckpt.config))
    blob += _pack_section("config/json", canonical_json(ckpt.config).encode("utf-8"))
    blob += _pack_section("meta/json", canonical_json(ckpt.meta).encode("utf-8"))
    for name in sorted(ckpt.payloads):
        blob += _pack_section(name, ckpt.payloads[name].ravel().tobytes())
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(bytes(blob))
    os.replace(tmp, path)


class _Reader:
    def __init__(self, data: bytes, origin: str) -> None:
        self.data = data
        self.offset = 0
        self.origin = origin

    def take(self, count: int, what: str) -> bytes:
        if self.offset + count > len(self.data):
            raise CheckpointError(
                f"{self.origin}: truncated while reading {what} "
                f"(need {count} bytes at offset {self.offset}, file has {len(self.data)})"
            )
        chunk = self.data[self.offset : self.offset + count]
        self.offset += count
        return chunk

    def take_str(self, what: str) -> str:
        (length,) = struct.unpack("<H", self.take(2, f"{what} length"))
        raw = self.take(length, what)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError(f"{self.origin}: {what} is not valid UTF-8: {exc}") from None

    @property
    def exhausted(self) -> bool:
        return self.offset >= len(self.data)


def load_checkpoint(path, expected_shapes=None) -> Checkpoint:
    """Read and validate a checkpoint file.

    expected_shapes, when given, maps section names to tuple shapes; the
    loader then rejects unknown sections and payloads whose sizes do not
    match, and reshapes the arrays. Without it payloads come back flat.
    """
    origin = os.fspath(path)
    try:
        with open(origin, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {origin}: {exc}") from None

    reader = _Reader(data, origin)
    magic = reader.take(4, "magic")
    if magic != MAGIC:
        raise CheckpointError(
            f"{origin}: bad magic {magic!r}, not a checkpoint file (expected {MAGIC!r})"
        )
    (version,) = struct.unpack("<I", reader.take(4, "format version"))
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{origin}: unsupported format version {version} (supported: {FORMAT_VERSION})"
        )
    mode = reader.take_str("mode tag")
    if mode not in MODES:
        raise CheckpointError(f"{origin}: unknown mode tag {mode!r}")
    digest = reader.take_str("config digest")

    sections: dict[str, bytes] = {}
    while not reader.exhausted:
        name = reader.take_str("section name")
        if name in sections:
            raise CheckpointError(f"{origin}: duplicate section {name!r}")
        (length,) = struct.unpack("<Q", reader.take(8, f"length of section {name!r}"))
        sections[name] = reader.take(length, f"section {name!r}")

    for required in _JSON_SECTIONS:
        if required not in sections:
            raise CheckpointError(f"{origin}: missing section {required!r}")

    def parse_json(name: str) -> dict:
        try:
            value = json.loads(sections[name].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{origin}: section {name!r} is not valid JSON: {exc}") from None
        if not isinstance(value, dict):
            raise CheckpointError(f"{origin}: section {name!r} must hold a JSON object")
        return value

    config = parse_json("config/json")
    meta = parse_json("meta/json")
    if config_digest(config) != digest:
        raise CheckpointError(
            f"{origin}: config digest mismatch; header says {digest[:12]}..., "
            f"config hashes to {config_digest(config)[:12]}..."
        )

    payloads: dict[str, np.ndarray] = {}
    for name, raw in sections.items():
        if name in _JSON_SECTIONS:
            continue
        if len(raw) % 4 != 0:
            raise CheckpointError(
                f"{origin}: section {name!r} holds {len(raw)} bytes, not a float32 array"
            )
        payloads[name] = np.frombuffer(raw, dtype="<f4").copy()

    if expected_shapes is not None:
        unknown = sorted(set(payloads) - set(expected_shapes))
        if unknown:
            raise CheckpointError(f"{origin}: unexpected sections {unknown}")
        missing = sorted(set(expected_shapes) - set(payloads))
        if missing:
            raise CheckpointError(f"{origin}: missing sections {missing}")
        for name, shape in expected_shapes.items():
            want = int(np.prod(shape)) if shape else 1
            have = payloads[name].size
            if have != want:
                raise CheckpointError(
                    f"{origin}: section {name!r} holds {have} values but the "
                    f"configured architecture expects {want} (shape {shape})"
                )
            payloads[name] = payloads[name].reshape(shape)

    return Checkpoint(mode=mode, config=config, payloads=payloads, meta=meta)
