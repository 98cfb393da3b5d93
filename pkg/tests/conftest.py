"""Shared fixtures and oracles used across the test suite.

Heavy objects (generators, ensembles) are session-scoped; tests must treat
them as read-only and take copies before mutating anything.
"""

from __future__ import annotations

import numpy as np
import pytest
import torch

import domainmod as dm


@pytest.fixture(scope="session")
def toy_cfg() -> dm.GeneratorConfig:
    return dm.toy_config()


@pytest.fixture(scope="session")
def toy_gen(toy_cfg) -> dm.Generator:
    return dm.Generator(toy_cfg, seed=7)


@pytest.fixture(scope="session")
def ensemble() -> dm.Ensemble:
    return dm.mock_ensemble(embed_dim=64)


@pytest.fixture(scope="session")
def eval_encoder():
    return dm.mock_eval_encoder(embed_dim=64)


# --- independent convolution oracle -----------------------------------------


def conv2d_oracle(x: np.ndarray, weight: np.ndarray) -> np.ndarray:
    """Reference same-padding stride-1 convolution written with plain loops.

    Follows the cross-correlation convention used by the library: the
    kernel is slid without flipping. x is (n, c_in, h, w), weight is
    (c_out, c_in, k, k) with odd k.
    """
    n, c_in, h, w = x.shape
    c_out, c_in_w, k, _ = weight.shape
    assert c_in == c_in_w and k % 2 == 1
    pad = k // 2
    padded = np.zeros((n, c_in, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
    padded[:, :, pad : pad + h, pad : pad + w] = x
    out = np.zeros((n, c_out, h, w), dtype=x.dtype)
    for b in range(n):
        for o in range(c_out):
            for i in range(h):
                for j in range(w):
                    patch = padded[b, :, i : i + k, j : j + k]
                    out[b, o, i, j] = float((patch * weight[o]).sum())
    return out


# --- finite-difference helpers ----------------------------------------------


def fd_derivative(fn, vec: torch.Tensor, index: int, step: float = 1e-4) -> float:
    """Central-difference derivative of scalar fn at vec[index]."""
    plus = vec.detach().clone()
    plus[index] += step
    minus = vec.detach().clone()
    minus[index] -= step
    with torch.no_grad():
        return (float(fn(plus)) - float(fn(minus))) / (2.0 * step)


def rel_err(a: float, b: float) -> float:
    """Relative error with an absolute floor so near-zero pairs compare sanely."""
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


def check_grad(fn, vec: torch.Tensor, indices, tol: float, step: float = 1e-4) -> None:
    """Assert analytic and finite-difference gradients agree at each index."""
    leaf = vec.detach().clone().requires_grad_(True)
    value = fn(leaf)
    (analytic,) = torch.autograd.grad(value, leaf)
    for idx in indices:
        numeric = fd_derivative(fn, vec, idx, step)
        err = rel_err(float(analytic[idx]), numeric)
        assert err < tol, (
            f"gradient mismatch at index {idx}: analytic {float(analytic[idx]):.6g}, "
            f"finite-difference {numeric:.6g}, rel err {err:.3g} >= {tol}"
        )


# --- deterministic stand-in encoder -----------------------------------------


class KeyedStubEncoder:
    """Test double whose embeddings are chosen by the caller.

    Image batches are looked up row-by-row via the integer stamped in the
    top-left pixel, so a test can hand specific embeddings to specific
    images and compute every loss by hand.
    """

    def __init__(self, image_table: dict[int, list[float]], text_table: dict[str, list[float]] | None = None):
        self.image_table = {
            k: torch.as_tensor(v, dtype=torch.float64) for k, v in image_table.items()
        }
        self.text_table = {
            k: torch.as_tensor(v, dtype=torch.float64) for k, v in (text_table or {}).items()
        }
        some_row = next(iter(self.image_table.values()))
        self.embed_dim = some_row.shape[0]

    def encode_image(self, images: torch.Tensor) -> torch.Tensor:
        keys = images[:, 0, 0, 0].round().to(torch.int64)
        return torch.stack([self.image_table[int(k)] for k in keys])

    def encode_text(self, text: str) -> torch.Tensor:
        return self.text_table[text].clone()


def marker_images(*keys: int, resolution: int = 4) -> torch.Tensor:
    """Images recognized by KeyedStubEncoder: constant maps holding the key."""
    return torch.stack(
        [torch.full((3, resolution, resolution), float(k), dtype=torch.float64) for k in keys]
    )


@pytest.fixture()
def np_rng() -> np.random.Generator:
    return np.random.default_rng(1234)
