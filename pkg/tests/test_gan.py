"""Adversarial-training helpers: spec construction, loss formulas against
direct recomputation, split-step identities, synthetic sampling."""
import numpy as np
import pytest

from fedsynth.encoders import (
    GmmParams,
    LabelEncoder,
    build_layout,
    encode_table,
    fit_gmm,
)
from fedsynth.gan import (
    GanConfig,
    apply_generator_feedback,
    build_gan,
    discriminator_spec,
    discriminator_update,
    draw_generator_batch,
    generator_feedback,
    generator_spec,
    sample_synthetic,
    train_local,
)
from fedsynth.seeding import derived_rng

from conftest import MIXED_SCHEMA


def small_cfg(**kwargs):
    defaults = dict(
        noise_dim=8,
        gen_hidden=(16,),
        disc_hidden=(16,),
        batch_size=32,
        gumbel_tau=0.8,
        seed=5,
    )
    defaults.update(kwargs)
    return GanConfig(**defaults)


@pytest.fixture(scope="module")
def setup(mixed_table):
    encoders = {
        "color": LabelEncoder("color", ("blue", "green", "red")),
        "size": LabelEncoder("size", ("l", "m", "s", "xl", "xxl")),
        "amount": fit_gmm(mixed_table.column("amount"), seed=1),
        "rate": fit_gmm(mixed_table.column("rate"), seed=2),
    }
    layout = build_layout(mixed_table.schema, encoders)
    encoded = encode_table(mixed_table, layout, encoders)
    return encoders, layout, encoded


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            GanConfig(noise_dim=0)
        with pytest.raises(ValueError):
            GanConfig(batch_size=0)
        with pytest.raises(ValueError):
            GanConfig(lr=0.0)
        with pytest.raises(ValueError):
            GanConfig(gumbel_tau=-1.0)
        with pytest.raises(ValueError):
            GanConfig(label_smoothing=0.0)
        with pytest.raises(ValueError):
            GanConfig(label_smoothing=1.2)


class TestSpecs:
    def test_generator_segments_mirror_layout(self, setup):
        _, layout, _ = setup
        cfg = small_cfg()
        spec = generator_spec(layout, cfg)
        assert spec.input_width == cfg.noise_dim
        assert spec.output_width == layout.width
        assert spec.gumbel_tau == cfg.gumbel_tau
        # continuous columns: tanh scalar then mode block; categoricals one block
        acts = [s.activation for s in spec.outputs]
        assert acts.count("tanh") == 2
        assert acts.count("gumbel") == 4
        assert all(h.activation == "relu" for h in spec.hidden)

    def test_discriminator_is_single_logit(self, setup):
        _, layout, _ = setup
        spec = discriminator_spec(layout, small_cfg())
        assert spec.input_width == layout.width
        assert spec.output_width == 1
        assert spec.outputs[0].activation == "identity"
        assert all(h.activation == "leaky_relu" for h in spec.hidden)


class TestBuild:
    def test_deterministic_per_seed(self, setup):
        _, layout, _ = setup
        a = build_gan(layout, small_cfg())
        b = build_gan(layout, small_cfg())
        np.testing.assert_array_equal(a.gen.flat, b.gen.flat)
        np.testing.assert_array_equal(a.disc.flat, b.disc.flat)
        c = build_gan(layout, small_cfg(seed=6))
        assert not np.array_equal(a.gen.flat, c.gen.flat)

    def test_optimizer_state_starts_at_zero(self, setup):
        _, layout, _ = setup
        model = build_gan(layout, small_cfg())
        assert model.gen_opt.t == 0
        assert (model.gen_opt.m == 0).all()
        assert (model.disc_opt.v == 0).all()


class TestSteps:
    def test_fake_batch_shape_and_hard_blocks(self, setup):
        _, layout, _ = setup
        cfg = small_cfg()
        model = build_gan(layout, cfg)
        fake, tape = draw_generator_batch(model, cfg, 10, derived_rng(0, "t"))
        assert fake.shape == (10, layout.width)
        for seg, spec_seg in zip(tape.spec.outputs, model.gen_spec.outputs):
            assert seg is spec_seg
        offset = 0
        for seg in model.gen_spec.outputs:
            block = fake[:, offset : offset + seg.width]
            if seg.activation == "gumbel":
                assert set(np.unique(block)) <= {0.0, 1.0}
                np.testing.assert_array_equal(block.sum(axis=1), np.ones(10))
            else:
                assert (np.abs(block) <= 1.0).all()
            offset += seg.width

    def test_fake_batch_reproducible_from_stream(self, setup):
        _, layout, _ = setup
        cfg = small_cfg()
        model = build_gan(layout, cfg)
        f1, _ = draw_generator_batch(model, cfg, 6, derived_rng(3, "x"))
        f2, _ = draw_generator_batch(model, cfg, 6, derived_rng(3, "x"))
        np.testing.assert_array_equal(f1, f2)

    def test_discriminator_loss_matches_formula(self, setup):
        _, layout, encoded = setup
        cfg = small_cfg()
        model = build_gan(layout, cfg)
        real = encoded[:16]
        fake, _ = draw_generator_batch(model, cfg, 16, derived_rng(1, "n"))
        from fedsynth.nn import forward

        lr_ = forward(model.disc, model.disc_spec, real)[0][:, 0]
        lf_ = forward(model.disc, model.disc_spec, fake)[0][:, 0]
        expected = float(
            (np.logaddexp(0.0, lr_) - cfg.label_smoothing * lr_).mean()
            + np.logaddexp(0.0, lf_).mean()
        )
        gen_before = model.gen.flat.copy()
        disc_before = model.disc.flat.copy()
        loss = discriminator_update(model, real, fake, cfg)
        assert loss == pytest.approx(expected, rel=1e-12)
        assert not np.array_equal(model.disc.flat, disc_before)
        np.testing.assert_array_equal(model.gen.flat, gen_before)

    def test_generator_feedback_matches_formula_and_is_pure(self, setup):
        _, layout, _ = setup
        cfg = small_cfg()
        model = build_gan(layout, cfg)
        fake, _ = draw_generator_batch(model, cfg, 12, derived_rng(2, "n"))
        from fedsynth.nn import forward

        lf_ = forward(model.disc, model.disc_spec, fake)[0][:, 0]
        expected = float(np.logaddexp(0.0, -lf_).mean())
        disc_before = model.disc.flat.copy()
        gen_before = model.gen.flat.copy()
        loss, d_fake = generator_feedback(model, fake, cfg)
        assert loss == pytest.approx(expected, rel=1e-12)
        assert d_fake.shape == fake.shape
        np.testing.assert_array_equal(model.disc.flat, disc_before)
        np.testing.assert_array_equal(model.gen.flat, gen_before)

    def test_apply_feedback_updates_generator_only(self, setup):
        _, layout, _ = setup
        cfg = small_cfg()
        model = build_gan(layout, cfg)
        fake, tape = draw_generator_batch(model, cfg, 12, derived_rng(2, "n"))
        _, d_fake = generator_feedback(model, fake, cfg)
        disc_before = model.disc.flat.copy()
        gen_before = model.gen.flat.copy()
        apply_generator_feedback(model, tape, d_fake, cfg)
        assert not np.array_equal(model.gen.flat, gen_before)
        np.testing.assert_array_equal(model.disc.flat, disc_before)
        assert model.gen_opt.t == 1


class TestTrainLocal:
    def test_epoch_grouping_is_invisible(self, setup):
        _, layout, encoded = setup
        cfg = small_cfg()
        once = build_gan(layout, cfg)
        twice = build_gan(layout, cfg)
        train_local(once, encoded[:96], 2, cfg)
        train_local(twice, encoded[:96], 1, cfg, epoch_offset=0)
        train_local(twice, encoded[:96], 1, cfg, epoch_offset=1)
        np.testing.assert_array_equal(once.gen.flat, twice.gen.flat)
        np.testing.assert_array_equal(once.disc.flat, twice.disc.flat)

    def test_clients_draw_distinct_streams(self, setup):
        _, layout, encoded = setup
        cfg = small_cfg()
        a = build_gan(layout, cfg)
        b = build_gan(layout, cfg)
        train_local(a, encoded[:96], 1, cfg, client_id=0)
        train_local(b, encoded[:96], 1, cfg, client_id=1)
        assert not np.array_equal(a.gen.flat, b.gen.flat)

    def test_history_and_small_shard_rejection(self, setup):
        _, layout, encoded = setup
        cfg = small_cfg()
        model = build_gan(layout, cfg)
        history = train_local(model, encoded[:70], 3, cfg)
        assert len(history) == 3
        assert all(np.isfinite([h.gen, h.disc]).all() for h in history)
        with pytest.raises(ValueError):
            train_local(model, encoded[:10], 1, cfg)


class TestSampleSynthetic:
    def test_rows_schema_and_determinism(self, setup, mixed_table):
        encoders, layout, _ = setup
        cfg = small_cfg()
        model = build_gan(layout, cfg)
        synth = sample_synthetic(model, 40, layout, encoders, cfg, seed=11)
        assert synth.n_rows == 40
        assert [c.name for c in synth.schema] == [c.name for c in MIXED_SCHEMA]
        again = sample_synthetic(model, 40, layout, encoders, cfg, seed=11)
        for col in ("color", "size"):
            np.testing.assert_array_equal(synth.column(col), again.column(col))
            assert set(np.unique(synth.column(col))) <= set(
                np.unique(mixed_table.column(col))
            )
        for col in ("amount", "rate"):
            np.testing.assert_array_equal(synth.column(col), again.column(col))
            assert np.isfinite(synth.column(col)).all()

    def test_chunked_draw_is_contiguous(self, setup):
        encoders, layout, _ = setup
        cfg = small_cfg()
        model = build_gan(layout, cfg)
        big = sample_synthetic(model, 4100, layout, encoders, cfg, seed=4)
        assert big.n_rows == 4100

    def test_rejects_non_positive_n(self, setup):
        encoders, layout, _ = setup
        cfg = small_cfg()
        model = build_gan(layout, cfg)
        with pytest.raises(ValueError):
            sample_synthetic(model, 0, layout, encoders, cfg, seed=4)
