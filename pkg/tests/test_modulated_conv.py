"""Modulated convolution: algebra, identity behavior, oracle match, gradients."""

import numpy as np
import pytest
import torch

from domainmod import ShapeError
from domainmod.modulated_conv import (
    ModConvConfig,
    demodulate,
    domain_modulate,
    mod_conv_forward,
    modulate,
)

from conftest import check_grad, conv2d_oracle


def rand_weight(c_out, c_in, k, seed=0):
    g = torch.Generator().manual_seed(seed)
    return torch.randn((c_out, c_in, k, k), generator=g, dtype=torch.float64)


class TestModulate:
    def test_scales_columns_by_style(self):
        weight = torch.tensor([[[[2.0]], [[1.0]]], [[[0.0]], [[3.0]]]], dtype=torch.float64)
        styles = torch.tensor([0.5, 2.0], dtype=torch.float64)
        out = modulate(weight, styles)
        expected = torch.tensor([[[[1.0]], [[2.0]]], [[[0.0]], [[6.0]]]], dtype=torch.float64)
        assert torch.equal(out, expected)

    def test_domain_modulate_is_same_algebra(self):
        weight = rand_weight(4, 3, 3, seed=1)
        vec = torch.linspace(0.5, 1.5, 3, dtype=torch.float64)
        assert torch.equal(modulate(weight, vec), domain_modulate(weight, vec))

    def test_ones_style_is_identity(self):
        weight = rand_weight(4, 3, 3, seed=2)
        assert torch.equal(modulate(weight, torch.ones(3, dtype=torch.float64)), weight)

    def test_wrong_style_length_raises(self):
        weight = rand_weight(4, 3, 3)
        with pytest.raises(ShapeError):
            modulate(weight, torch.ones(4, dtype=torch.float64))
        with pytest.raises(ShapeError):
            domain_modulate(weight, torch.ones((1, 3), dtype=torch.float64))


class TestDemodulate:
    def test_rows_become_unit_norm(self):
        weight = rand_weight(64, 16, 3, seed=3)
        out = demodulate(weight)
        sums = out.square().sum(dim=(1, 2, 3))
        assert float(sums.min()) >= 1.0 - 1e-4
        assert float(sums.max()) <= 1.0 + 1e-12

    def test_zero_row_stays_finite(self):
        weight = rand_weight(3, 4, 3, seed=4)
        weight[1] = 0.0
        out = demodulate(weight)
        assert torch.isfinite(out).all()
        assert torch.equal(out[1], torch.zeros_like(out[1]))

    def test_guard_shifts_tiny_rows_below_one(self):
        weight = torch.full((1, 1, 1, 1), 1e-5, dtype=torch.float64)
        sums = demodulate(weight).square().sum()
        assert float(sums) < 1.0


class TestForward:
    def test_matches_loop_oracle_k3(self):
        g = torch.Generator().manual_seed(10)
        x = torch.randn((2, 3, 8, 8), generator=g, dtype=torch.float64)
        weight = rand_weight(5, 3, 3, seed=11)
        styles = torch.rand(3, generator=g, dtype=torch.float64) + 0.5
        domain = torch.rand(3, generator=g, dtype=torch.float64) + 0.5

        out = mod_conv_forward(x, weight, styles, domain)

        w = modulate(weight, styles)
        w = domain_modulate(w, domain)
        w = demodulate(w)
        expected = conv2d_oracle(x.numpy(), w.numpy())
        np.testing.assert_allclose(out.numpy(), expected, rtol=1e-10, atol=1e-12)

    def test_matches_loop_oracle_k1_no_demod(self):
        g = torch.Generator().manual_seed(20)
        x = torch.randn((1, 4, 4, 4), generator=g, dtype=torch.float64)
        weight = rand_weight(3, 4, 1, seed=21)
        styles = torch.rand(4, generator=g, dtype=torch.float64) + 0.5

        out = mod_conv_forward(x, weight, styles, None, ModConvConfig(demodulate=False))
        expected = conv2d_oracle(x.numpy(), modulate(weight, styles).numpy())
        np.testing.assert_allclose(out.numpy(), expected, rtol=1e-10, atol=1e-12)

    def test_ones_domain_is_bitwise_identity(self):
        g = torch.Generator().manual_seed(30)
        x = torch.randn((2, 6, 8, 8), generator=g, dtype=torch.float64)
        weight = rand_weight(4, 6, 3, seed=31)
        styles = torch.rand(6, generator=g, dtype=torch.float64) + 0.5

        plain = mod_conv_forward(x, weight, styles, None)
        with_ones = mod_conv_forward(x, weight, styles, torch.ones(6, dtype=torch.float64))
        assert torch.equal(plain, with_ones)

    def test_domain_rescaling_is_absorbed_by_demodulation(self):
        # A uniform domain c*ones changes the weight rows only by a
        # constant factor, which the per-row normalization removes up to
        # the eps guard; the output must therefore be nearly unchanged.
        g = torch.Generator().manual_seed(40)
        x = torch.randn((1, 6, 8, 8), generator=g, dtype=torch.float64)
        weight = rand_weight(4, 6, 3, seed=41)
        styles = torch.rand(6, generator=g, dtype=torch.float64) + 0.5

        base = mod_conv_forward(x, weight, styles, torch.ones(6, dtype=torch.float64))
        scaled = mod_conv_forward(x, weight, styles, torch.full((6,), 2.0, dtype=torch.float64))
        assert torch.allclose(base, scaled, rtol=1e-6, atol=1e-8)

    def test_normalization_happens_after_domain_scaling(self):
        # If rows were demodulated before the domain step, a non-uniform
        # domain would survive as a per-column scale on unit-norm rows.
        # Verify the composed-forward rows carry norm 1, not the domain.
        weight = rand_weight(4, 6, 3, seed=51)
        styles = torch.rand(6, generator=torch.Generator().manual_seed(50), dtype=torch.float64) + 0.5
        domain = torch.linspace(0.2, 2.0, 6, dtype=torch.float64)

        composed = demodulate(domain_modulate(modulate(weight, styles), domain))
        sums = composed.square().sum(dim=(1, 2, 3))
        assert torch.allclose(sums, torch.ones(4, dtype=torch.float64), atol=1e-6)

        wrong_order = domain_modulate(demodulate(modulate(weight, styles)), domain)
        assert not torch.allclose(composed, wrong_order, atol=1e-3)

    def test_output_shape_preserved(self):
        x = torch.zeros((3, 2, 16, 16), dtype=torch.float64)
        weight = rand_weight(5, 2, 3)
        out = mod_conv_forward(x, weight, torch.ones(2, dtype=torch.float64))
        assert out.shape == (3, 5, 16, 16)


class TestValidation:
    def test_rejects_even_or_large_kernels(self):
        for k in (2, 5):
            weight = torch.zeros((2, 2, k, k), dtype=torch.float64)
            with pytest.raises(ShapeError):
                mod_conv_forward(
                    torch.zeros((1, 2, 4, 4), dtype=torch.float64),
                    weight,
                    torch.ones(2, dtype=torch.float64),
                )

    def test_rejects_non_square_kernel(self):
        weight = torch.zeros((2, 2, 1, 3), dtype=torch.float64)
        with pytest.raises(ShapeError):
            mod_conv_forward(
                torch.zeros((1, 2, 4, 4), dtype=torch.float64),
                weight,
                torch.ones(2, dtype=torch.float64),
            )

    def test_rejects_non_power_of_two_maps(self):
        weight = rand_weight(2, 2, 3)
        with pytest.raises(ShapeError):
            mod_conv_forward(
                torch.zeros((1, 2, 5, 5), dtype=torch.float64),
                weight,
                torch.ones(2, dtype=torch.float64),
            )

    def test_rejects_channel_mismatch(self):
        weight = rand_weight(2, 3, 3)
        with pytest.raises(ShapeError):
            mod_conv_forward(
                torch.zeros((1, 2, 4, 4), dtype=torch.float64),
                weight,
                torch.ones(3, dtype=torch.float64),
            )

    def test_config_rejects_bad_eps(self):
        with pytest.raises(ShapeError):
            ModConvConfig(eps=0.0)


class TestGradients:
    def test_domain_gradient_matches_finite_differences(self):
        g = torch.Generator().manual_seed(60)
        x = torch.randn((1, 5, 8, 8), generator=g, dtype=torch.float64)
        weight = rand_weight(4, 5, 3, seed=61)
        styles = torch.rand(5, generator=g, dtype=torch.float64) + 0.5
        probe = torch.randn((1, 4, 8, 8), generator=g, dtype=torch.float64)
        base_domain = torch.rand(5, generator=g, dtype=torch.float64) + 0.5

        def objective(domain):
            return (mod_conv_forward(x, weight, styles, domain) * probe).sum()

        check_grad(objective, base_domain, indices=range(5), tol=1e-3)

    def test_style_gradient_matches_finite_differences(self):
        g = torch.Generator().manual_seed(70)
        x = torch.randn((1, 4, 4, 4), generator=g, dtype=torch.float64)
        weight = rand_weight(3, 4, 3, seed=71)
        probe = torch.randn((1, 3, 4, 4), generator=g, dtype=torch.float64)
        base_styles = torch.rand(4, generator=g, dtype=torch.float64) + 0.5

        def objective(styles):
            return (mod_conv_forward(x, weight, styles, None) * probe).sum()

        check_grad(objective, base_styles, indices=range(4), tol=1e-3)
