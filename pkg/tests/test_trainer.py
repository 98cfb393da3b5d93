"""Training: Adam correctness, loop determinism, frozen source, all modes."""

import csv

import pytest
import torch

import domainmod as dm
from domainmod import ConfigError, ShapeError
from domainmod.hyperdomainnet import HDNConfig, hdn_forward, init_hdn_params
from domainmod.trainer import (
    MODE_DEFAULTS,
    TrainingConfig,
    adam_init,
    adam_step,
    adapt_one_shot,
    adapt_single_domain_text,
    generator_with_synthesis,
    moving_average,
    naive_invert,
    train_hdn,
    training_config,
    write_history_csv,
)


class TestAdam:
    def test_first_step_closed_form(self):
        # with beta1 = 0 the first update is g / (sqrt(g^2) + eps) ~= 1,
        # so the parameter moves by almost exactly -lr
        params = {"x": torch.tensor([1.0], dtype=torch.float64)}
        grads = {"x": torch.tensor([4.0], dtype=torch.float64)}
        state = adam_init(params, lr=0.002, betas=(0.0, 0.999))
        new_params, new_state = adam_step(state, params, grads)
        delta = float(new_params["x"][0]) - 1.0
        assert abs(delta + 0.002) < 1e-9
        assert new_state.step == 1

    def test_matches_reference_implementation(self):
        # torch.optim.AdamW implements the same bias-corrected update with
        # decoupled weight decay; ten steps on shared gradients must agree
        g = torch.Generator().manual_seed(0)
        init = torch.randn(6, generator=g, dtype=torch.float64)

        mine = {"p": init.clone()}
        state = adam_init(mine, lr=0.01, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.04)

        theirs = init.clone().requires_grad_(True)
        reference = torch.optim.AdamW(
            [theirs], lr=0.01, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.04
        )

        for step in range(10):
            grad = torch.randn(6, generator=g, dtype=torch.float64)
            mine, state = adam_step(state, mine, {"p": grad})
            theirs.grad = grad.clone()
            reference.step()
            assert torch.allclose(mine["p"], theirs.detach(), atol=1e-12), f"diverged at step {step}"

    def test_zero_gradient_is_a_no_op(self):
        params = {"x": torch.tensor([3.0, -1.0], dtype=torch.float64)}
        state = adam_init(params, lr=0.1, betas=(0.9, 0.999))
        new_params, _ = adam_step(state, params, {"x": torch.zeros(2, dtype=torch.float64)})
        assert torch.equal(new_params["x"], params["x"])

    def test_inputs_left_untouched(self):
        params = {"x": torch.tensor([1.0], dtype=torch.float64)}
        grads = {"x": torch.tensor([2.0], dtype=torch.float64)}
        state = adam_init(params, lr=0.1, betas=(0.5, 0.9))
        adam_step(state, params, grads)
        assert float(params["x"][0]) == 1.0
        assert state.step == 0
        assert float(state.m["x"][0]) == 0.0

    def test_key_and_shape_validation(self):
        params = {"x": torch.ones(2, dtype=torch.float64)}
        state = adam_init(params, lr=0.1, betas=(0.9, 0.999))
        with pytest.raises(ShapeError):
            adam_step(state, params, {"y": torch.ones(2, dtype=torch.float64)})
        with pytest.raises(ShapeError):
            adam_step(state, params, {"x": torch.ones(3, dtype=torch.float64)})

    def test_hyperparameter_validation(self):
        params = {"x": torch.ones(1, dtype=torch.float64)}
        with pytest.raises(ConfigError):
            adam_init(params, lr=0.0, betas=(0.9, 0.999))
        with pytest.raises(ConfigError):
            adam_init(params, lr=0.1, betas=(1.0, 0.999))
        with pytest.raises(ConfigError):
            adam_init(params, lr=0.1, betas=(0.9, 0.999), weight_decay=-0.1)


class TestTrainingConfig:
    def test_mode_defaults(self):
        text = training_config("text")
        assert text.iterations == 600
        assert text.batch_size == 4
        assert text.learning_rate == 0.002
        assert text.betas == (0.0, 0.999)
        assert text.loss_weights.direction == 1.0
        assert text.loss_weights.indomain_angle == 0.5

        fixed = training_config("hdn-fixed")
        assert fixed.iterations == 1000
        assert fixed.batch_size == 24
        assert fixed.learning_rate == 5e-5
        assert fixed.betas == (0.9, 0.999)
        assert fixed.loss_weights.tt_direction == 0.4
        assert fixed.loss_weights.domain_norm == 0.8

        open_set = training_config("hdn-open")
        assert open_set.iterations == 10_000
        assert open_set.batch_size == 96

        one_shot = training_config("one-shot")
        assert one_shot.loss_weights.clip_across == 1.0
        assert one_shot.loss_weights.indomain_angle == 2.0
        assert one_shot.betas == (0.0, 0.999)

    def test_mixing_prob_default(self):
        assert training_config("text").mixing_prob == 0.9

    def test_overrides(self):
        cfg = training_config("text", iterations=5, batch_size=2, seed=3)
        assert cfg.iterations == 5 and cfg.batch_size == 2 and cfg.seed == 3

    def test_unknown_mode_rejected(self):
        with pytest.raises(ConfigError):
            training_config("finetune")

    def test_pairwise_terms_need_batches(self):
        with pytest.raises(ConfigError):
            training_config("text", batch_size=1)  # indomain term is active by default
        cfg = training_config(
            "text", batch_size=1, loss_weights=dm.LossWeights(direction=1.0)
        )
        assert cfg.batch_size == 1

    def test_synthesis_space_only_for_single_domain_modes(self):
        training_config("text", param_space="synthesis")
        with pytest.raises(ConfigError):
            training_config("hdn-fixed", param_space="synthesis")

    def test_as_dict_round_trips_weights(self):
        cfg = training_config("text", iterations=7)
        d = cfg.as_dict()
        assert d["iterations"] == 7
        assert d["loss_weights"]["direction"] == 1.0


class TestSingleDomainText:
    def _cfg(self, **kw):
        base = dict(iterations=4, batch_size=2, seed=0)
        base.update(kw)
        return training_config("text", **base)

    def test_runs_and_reports_history(self, toy_gen, ensemble):
        res = adapt_single_domain_text(
            toy_gen, dm.DomainDescriptor(text="Anime Painting"), "Photo", self._cfg(), ensemble
        )
        assert len(res.history) == 4
        assert res.domain_vector is not None
        assert res.domain_vector.shape == (336,)
        for entry in res.history:
            assert "total" in entry and "direction" in entry and "indomain_angle" in entry

    def test_first_iteration_direction_equals_batch_size(self, toy_gen, ensemble):
        # before any update the adapted render equals the source render,
        # so every sample contributes a guarded-cosine loss of exactly 1
        res = adapt_single_domain_text(
            toy_gen,
            dm.DomainDescriptor(text="Anime Painting"),
            "Photo",
            self._cfg(iterations=1, batch_size=3),
            ensemble,
        )
        assert res.history[0]["direction"] == 3.0

    def test_same_seed_is_bitwise_deterministic(self, toy_gen, ensemble):
        a = adapt_single_domain_text(
            toy_gen, dm.DomainDescriptor(text="Sketch"), "Photo", self._cfg(seed=5), ensemble
        )
        b = adapt_single_domain_text(
            toy_gen, dm.DomainDescriptor(text="Sketch"), "Photo", self._cfg(seed=5), ensemble
        )
        assert torch.equal(a.domain_vector, b.domain_vector)
        assert a.history == b.history

    def test_different_seed_differs(self, toy_gen, ensemble):
        a = adapt_single_domain_text(
            toy_gen, dm.DomainDescriptor(text="Sketch"), "Photo", self._cfg(seed=5), ensemble
        )
        b = adapt_single_domain_text(
            toy_gen, dm.DomainDescriptor(text="Sketch"), "Photo", self._cfg(seed=6), ensemble
        )
        assert not torch.equal(a.domain_vector, b.domain_vector)

    def test_source_generator_stays_frozen(self, toy_gen, ensemble):
        before = {
            "const": toy_gen.params.const.clone(),
            "conv0": toy_gen.params.conv[0].clone(),
            "mapping0": toy_gen.params.mapping[0][0].clone(),
        }
        adapt_single_domain_text(
            toy_gen, dm.DomainDescriptor(text="Sketch"), "Photo", self._cfg(), ensemble
        )
        assert torch.equal(toy_gen.params.const, before["const"])
        assert torch.equal(toy_gen.params.conv[0], before["conv0"])
        assert torch.equal(toy_gen.params.mapping[0][0], before["mapping0"])

    def test_all_zero_weights_leave_identity_untouched(self, toy_gen, ensemble):
        cfg = self._cfg(iterations=3, loss_weights=dm.LossWeights())
        res = adapt_single_domain_text(
            toy_gen, dm.DomainDescriptor(text="Sketch"), "Photo", cfg, ensemble
        )
        assert torch.equal(res.domain_vector, toy_gen.layout.ones())
        assert all(entry == {"total": 0.0} for entry in res.history)

    def test_disabled_term_never_appears_in_history(self, toy_gen, ensemble):
        cfg = self._cfg(loss_weights=dm.LossWeights(direction=1.0))
        res = adapt_single_domain_text(
            toy_gen, dm.DomainDescriptor(text="Sketch"), "Photo", cfg, ensemble
        )
        for entry in res.history:
            assert "indomain_angle" not in entry

    def test_mode_and_descriptor_validated(self, toy_gen, ensemble):
        with pytest.raises(ConfigError):
            adapt_single_domain_text(
                toy_gen,
                dm.DomainDescriptor(embedding=torch.zeros(64, dtype=torch.float64)),
                "Photo",
                self._cfg(),
                ensemble,
            )
        with pytest.raises(ConfigError):
            adapt_single_domain_text(
                toy_gen,
                dm.DomainDescriptor(text="Sketch"),
                "Photo",
                training_config("hdn-fixed", iterations=1, batch_size=2),
                ensemble,
            )

    def test_iterations_zero_returns_identity(self, toy_gen, ensemble):
        res = adapt_single_domain_text(
            toy_gen, dm.DomainDescriptor(text="Sketch"), "Photo", self._cfg(iterations=0), ensemble
        )
        assert res.history == []
        assert torch.equal(res.domain_vector, toy_gen.layout.ones())


class TestSynthesisSpace:
    def test_full_fine_tune_updates_copies_not_source(self, toy_gen, ensemble):
        cfg = training_config(
            "text", iterations=2, batch_size=2, seed=1, param_space="synthesis"
        )
        before_conv = toy_gen.params.conv[0].clone()
        res = adapt_single_domain_text(
            toy_gen, dm.DomainDescriptor(text="Sketch"), "Photo", cfg, ensemble
        )
        assert res.params is not None
        assert res.domain_vector is None
        assert torch.equal(toy_gen.params.conv[0], before_conv), "source weights must stay frozen"
        assert not torch.equal(res.params["synthesis/conv.0"], before_conv)

        adapted = generator_with_synthesis(toy_gen, res.params)
        z = torch.randn((1, toy_gen.config.latent_dim), generator=torch.Generator().manual_seed(0), dtype=torch.float64)
        assert not torch.equal(adapted.generate(z), toy_gen.generate(z))
        # mapping and affine stages are shared with the source
        assert adapted.params.mapping is toy_gen.params.mapping
        assert adapted.params.affine is toy_gen.params.affine


class TestOneShot:
    def test_runs_from_style_exemplar(self, toy_gen, toy_cfg, ensemble):
        donor = dm.Generator(toy_cfg, seed=99)
        z = torch.randn((1, toy_cfg.latent_dim), generator=torch.Generator().manual_seed(55), dtype=torch.float64)
        style_image = donor.generate(z)

        cfg = training_config("one-shot", iterations=3, batch_size=2, seed=2)
        res = adapt_one_shot(toy_gen, style_image, cfg, ensemble, invert_steps=5)
        assert len(res.history) == 3
        assert res.domain_vector is not None
        assert not torch.equal(res.domain_vector, toy_gen.layout.ones())
        assert "clip_across" in res.history[0]

    def test_explicit_projection_skips_inversion(self, toy_gen, toy_cfg, ensemble):
        donor = dm.Generator(toy_cfg, seed=98)
        z = torch.randn((1, toy_cfg.latent_dim), generator=torch.Generator().manual_seed(56), dtype=torch.float64)
        style_image = donor.generate(z)
        projection = toy_gen.generate(z)

        cfg = training_config("one-shot", iterations=2, batch_size=2, seed=3)
        a = adapt_one_shot(toy_gen, style_image, cfg, ensemble, projection_image=projection)
        b = adapt_one_shot(toy_gen, style_image, cfg, ensemble, projection_image=projection)
        assert torch.equal(a.domain_vector, b.domain_vector)

    def test_mode_validated(self, toy_gen, ensemble):
        cfg = training_config("text", iterations=1, batch_size=2)
        with pytest.raises(ConfigError):
            adapt_one_shot(toy_gen, torch.zeros((1, 3, 32, 32), dtype=torch.float64), cfg, ensemble)


class TestNaiveInvert:
    def test_moves_toward_the_target_embedding(self, toy_gen, ensemble):
        z = torch.randn((1, toy_gen.config.latent_dim), generator=torch.Generator().manual_seed(77), dtype=torch.float64)
        target = toy_gen.generate(z)
        members = dm.members_of(ensemble)

        def distance(latent):
            render = toy_gen.synthesize(toy_gen.broadcast_styles(latent.unsqueeze(0)))
            total = 0.0
            for m in members:
                total += float((m.encode_image(render) - m.encode_image(target)).square().sum())
            return total

        w0 = toy_gen.map_latent(torch.randn((1000, toy_gen.config.latent_dim), generator=torch.Generator().manual_seed(0), dtype=torch.float64)).mean(dim=0)
        w = naive_invert(toy_gen, target, steps=8, lr=0.02, encoders=ensemble, seed=0)
        assert w.shape == (toy_gen.config.latent_dim,)
        assert distance(w) < distance(w0), "descent must improve on the mean-latent start"

    def test_deterministic(self, toy_gen, ensemble):
        z = torch.randn((1, toy_gen.config.latent_dim), generator=torch.Generator().manual_seed(78), dtype=torch.float64)
        target = toy_gen.generate(z)
        a = naive_invert(toy_gen, target, steps=4, encoders=ensemble, seed=1)
        b = naive_invert(toy_gen, target, steps=4, encoders=ensemble, seed=1)
        assert torch.equal(a, b)


class TestTrainHDNFixed:
    def _cfg(self, **kw):
        base = dict(iterations=3, batch_size=3, seed=4)
        base.update(kw)
        return training_config("hdn-fixed", **base)

    def _domains(self):
        return dm.default_domain_pairs()[:3]

    def test_runs_and_predicts_non_identity(self, toy_gen, toy_cfg, ensemble):
        hdn_cfg = HDNConfig.for_generator(toy_cfg, embed_dim=64, hidden_dim=32)
        res = train_hdn(toy_gen, self._cfg(), ensemble, domains=self._domains(), hdn_config=hdn_cfg)
        assert len(res.history) == 3
        assert res.params is not None

        emb = dm.members_of(ensemble)[0].encode_text("Anime Painting")
        predicted = hdn_forward(hdn_cfg, res.params, emb)
        assert predicted.shape == (336,)
        assert not torch.equal(predicted, torch.ones(336, dtype=torch.float64))

    def test_deterministic(self, toy_gen, toy_cfg, ensemble):
        hdn_cfg = HDNConfig.for_generator(toy_cfg, embed_dim=64, hidden_dim=32)
        a = train_hdn(toy_gen, self._cfg(), ensemble, domains=self._domains(), hdn_config=hdn_cfg)
        b = train_hdn(toy_gen, self._cfg(), ensemble, domains=self._domains(), hdn_config=hdn_cfg)
        assert a.history == b.history
        assert all(torch.equal(a.params[k], b.params[k]) for k in a.params)

    def test_history_terms(self, toy_gen, toy_cfg, ensemble):
        hdn_cfg = HDNConfig.for_generator(toy_cfg, embed_dim=64, hidden_dim=32)
        res = train_hdn(toy_gen, self._cfg(iterations=1), ensemble, domains=self._domains(), hdn_config=hdn_cfg)
        entry = res.history[0]
        assert {"direction", "tt_direction", "domain_norm", "total"} <= set(entry)

    def test_needs_domains(self, toy_gen, toy_cfg, ensemble):
        hdn_cfg = HDNConfig.for_generator(toy_cfg, embed_dim=64, hidden_dim=32)
        with pytest.raises(ConfigError):
            train_hdn(toy_gen, self._cfg(), ensemble, hdn_config=hdn_cfg)

    def test_tt_term_needs_two_domains(self, toy_gen, toy_cfg, ensemble):
        hdn_cfg = HDNConfig.for_generator(toy_cfg, embed_dim=64, hidden_dim=32)
        with pytest.raises(ConfigError):
            train_hdn(
                toy_gen, self._cfg(), ensemble, domains=self._domains()[:1], hdn_config=hdn_cfg
            )

    def test_output_width_must_match_generator(self, toy_gen, ensemble):
        bad = HDNConfig(layer_widths=(8, 8), embed_dim=64, hidden_dim=16)
        with pytest.raises(ConfigError):
            train_hdn(toy_gen, self._cfg(), ensemble, domains=self._domains(), hdn_config=bad)


class TestTrainHDNOpen:
    def test_runs_with_per_member_samplers(self, toy_gen, toy_cfg, ensemble):
        hdn_cfg = HDNConfig.for_generator(toy_cfg, embed_dim=64, hidden_dim=32)
        prompts = dm.generate_combinations(dm.default_vocabulary())[:6]
        samplers = []
        for member in dm.members_of(ensemble):
            bases = torch.stack([member.encode_text(p) for p in prompts])
            samplers.append(dm.DomainSampler(bases, dm.SamplerConfig(gamma=0.35)))
        cfg = training_config("hdn-open", iterations=2, batch_size=3, seed=9, source_text="Photo")
        res = train_hdn(toy_gen, cfg, ensemble, samplers=samplers, hdn_config=hdn_cfg)
        assert len(res.history) == 2
        assert res.params is not None

    def test_sampler_count_must_match_members(self, toy_gen, toy_cfg, ensemble):
        hdn_cfg = HDNConfig.for_generator(toy_cfg, embed_dim=64, hidden_dim=32)
        bases = torch.eye(64, dtype=torch.float64)[:4]
        cfg = training_config("hdn-open", iterations=1, batch_size=2, seed=0)
        with pytest.raises(ConfigError):
            train_hdn(
                toy_gen, cfg, ensemble,
                samplers=[dm.DomainSampler(bases)],
                hdn_config=hdn_cfg,
            )


class TestHistoryTools:
    def test_moving_average_trailing_window(self):
        values = [4.0, 3.0, 2.0, 1.0]
        assert moving_average(values, 2) == 1.5
        assert moving_average(values, 10) == 2.5
        with pytest.raises(ShapeError):
            moving_average([], 3)

    def test_history_csv_layout(self, tmp_path):
        history = [
            {"direction": 1.0, "total": 1.5, "domain_norm": 0.5},
            {"direction": 0.8, "total": 1.2, "domain_norm": 0.4},
        ]
        path = tmp_path / "history.csv"
        write_history_csv(history, path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0][0] == "iteration"
        assert rows[0][-1] == "total", "combined value stays in the last column"
        assert rows[1][0] == "0" and rows[2][0] == "1"
        assert float(rows[2][rows[0].index("direction")]) == 0.8
