import numpy as np
import pytest

from flowsculpt.dit.hooks import CacheMissError, StepKind, ValueCache, ValueHook, mask_fuse
from flowsculpt.dit.model import DiTConfig, PromptTokens, VelocityTransformer, text_embed
from flowsculpt.errors import DataError, InputError, ShapeError
from flowsculpt.tensor.rng import Rng


def fuse_loops(target, source, mask):
    out = np.empty_like(target)
    for i in range(target.shape[0]):
        for c in range(target.shape[1]):
            out[i, c] = mask[i] * target[i, c] + (1.0 - mask[i]) * source[i, c]
    return out


class TestTextEmbed:
    def test_deterministic_bitwise(self):
        a = text_embed("a portrait photo", seed=0)
        b = text_embed("a portrait photo", seed=0)
        assert np.array_equal(a.tokens, b.tokens)
        assert a.prompt_id == b.prompt_id

    def test_rows_are_unit_vectors(self):
        emb = text_embed("bright red lips", seed=0)
        norms = np.linalg.norm(emb.tokens, axis=1)
        assert np.allclose(norms, 1.0, atol=1e-5)

    def test_prompts_and_seeds_separate(self):
        base = text_embed("a portrait photo", seed=0)
        other = text_embed("a portrait sketch", seed=0)
        reseeded = text_embed("a portrait photo", seed=1)
        assert base.prompt_id != other.prompt_id
        assert not np.array_equal(base.tokens, other.tokens)
        assert not np.array_equal(base.tokens, reseeded.tokens)

    def test_shared_words_share_rows(self):
        a = text_embed("red lips", seed=0)
        b = text_embed("red hair", seed=0)
        assert np.array_equal(a.tokens[0], b.tokens[0])
        assert not np.array_equal(a.tokens[1], b.tokens[1])

    def test_long_prompt_truncates_to_window(self):
        words = " ".join(f"w{i}" for i in range(20))
        emb = text_embed(words, seed=0, text_len=8)
        assert emb.tokens.shape == (8, 64)

    def test_empty_prompt_rejected(self):
        with pytest.raises(InputError):
            text_embed("   ", seed=0)


class TestPatchProjection:
    def test_round_trip_is_exact(self, dit, portrait):
        tokens = dit.patchify(portrait.image)
        back = dit.unpatchify(tokens, portrait.image.shape[1:])
        assert back.shape == portrait.image.shape
        assert np.max(np.abs(back - portrait.image)) < 1e-5

    def test_projector_columns_orthonormal(self, dit):
        w = dit.weights["patch.w"]
        gram = w.T @ w
        assert np.max(np.abs(gram - np.eye(gram.shape[0]))) < 1e-5

    def test_patchify_rejects_bad_layout(self, dit):
        with pytest.raises(ShapeError):
            dit.patchify(np.zeros((64, 64, 3), dtype=np.float32))
        with pytest.raises(ShapeError):
            dit.patchify(np.zeros((3, 63, 64), dtype=np.float32))


class TestFrozenModel:
    def test_same_config_builds_identical_weights(self, dit):
        other = VelocityTransformer(DiTConfig())
        assert sorted(other.weights) == sorted(dit.weights)
        for name in dit.weights:
            assert np.array_equal(other.weights[name], dit.weights[name]), name

    def test_evaluate_bitwise_repeatable(self, dit):
        z = Rng(11).normal((16, 64)).astype(np.float32)
        prompt = dit.text_embed("a portrait photo")
        a = dit.evaluate(z, 0.25, prompt)
        b = dit.evaluate(z, 0.25, prompt)
        assert a.shape == (16, 64)
        assert np.array_equal(a, b)

    def test_save_load_round_trip(self, dit, tmp_path):
        dit.save(tmp_path / "weights")
        loaded = VelocityTransformer.load(tmp_path / "weights")
        for name in dit.weights:
            assert np.array_equal(loaded.weights[name], dit.weights[name]), name
        z = Rng(12).normal((8, 64)).astype(np.float32)
        prompt = dit.text_embed("x")
        assert np.array_equal(loaded.evaluate(z, 0.5, prompt), dit.evaluate(z, 0.5, prompt))

    def test_load_missing_manifest(self, tmp_path):
        with pytest.raises(DataError):
            VelocityTransformer.load(tmp_path)

    def test_config_validation(self):
        with pytest.raises(InputError):
            DiTConfig(width=65, heads=4)
        with pytest.raises(InputError):
            DiTConfig(m=7, depth=6)

    def test_hooked_blocks_are_the_last_m(self):
        cfg = DiTConfig(depth=6, m=2)
        assert list(cfg.hooked_blocks) == [4, 5]
        assert list(DiTConfig(m=0).hooked_blocks) == []

    def test_forward_input_contracts(self, dit):
        prompt = dit.text_embed("x")
        with pytest.raises(ShapeError):
            dit.forward(np.zeros((4, 32), dtype=np.float32), 0.5, prompt)
        with pytest.raises(InputError):
            dit.forward(np.zeros((4, 64), dtype=np.float32), 0.5, "not tokens")
        with pytest.raises(InputError):
            dit.forward(np.zeros((4, 64), dtype=np.float32), 1.5, prompt)


class TestValueCache:
    def test_put_get_round_trip(self):
        cache = ValueCache()
        vals = Rng(1).normal((10, 64))
        cache.put((3, StepKind.MAIN), 4, vals)
        assert cache.has((3, StepKind.MAIN), 4)
        assert np.array_equal(cache.get((3, StepKind.MAIN), 4), vals)
        assert len(cache) == 1

    def test_miss_raises_named_key(self):
        cache = ValueCache()
        with pytest.raises(CacheMissError, match="step 2 .midpoint., block 5"):
            cache.get((2, StepKind.MIDPOINT), 5)

    def test_bad_kind_rejected(self):
        with pytest.raises(InputError):
            ValueCache().put((0, "forward"), 0, np.zeros(2))


class TestMaskFuse:
    def test_matches_scalar_oracle(self):
        rng = Rng(7)
        target = rng.normal((40, 8))
        source = rng.normal((40, 8))
        mask = rng.uniform(0.0, 1.0, (40,))
        fused = mask_fuse(target, source, mask)
        assert np.max(np.abs(fused - fuse_loops(target, source, mask))) < 1e-7

    def test_binary_mask_selects_bitwise(self):
        rng = Rng(9)
        target = rng.normal((12, 4))
        source = rng.normal((12, 4))
        ones = mask_fuse(target, source, np.ones(12))
        zeros = mask_fuse(target, source, np.zeros(12))
        assert np.array_equal(ones, target)
        assert np.array_equal(zeros, source)

    def test_shape_contracts(self):
        with pytest.raises(ShapeError):
            mask_fuse(np.zeros((3, 2)), np.zeros((4, 2)), np.zeros(3))
        with pytest.raises(ShapeError):
            mask_fuse(np.zeros((3, 2)), np.zeros((3, 2)), np.zeros((3, 2)))


class TestValueHook:
    def test_mode_validated(self):
        with pytest.raises(InputError):
            ValueHook(mode="replay", store=ValueCache(), step_key=(0, StepKind.MAIN))

    def test_record_stores_a_copy(self):
        cache = ValueCache()
        hook = ValueHook(mode="record", store=cache, step_key=(1, StepKind.MAIN))
        vals = np.ones((6, 4))
        out = hook.apply(0, vals, text_len=2)
        assert out is vals
        vals[:] = 7.0
        assert np.array_equal(cache.get((1, StepKind.MAIN), 0), np.ones((6, 4)))

    def test_inject_never_touches_text_rows(self):
        rng = Rng(13)
        current = rng.normal((10, 8))
        cached = rng.normal((10, 8))
        cache = ValueCache()
        cache.put((0, StepKind.MAIN), 2, cached)
        mask = rng.uniform(0.0, 1.0, (7,))
        hook = ValueHook(mode="inject", store=cache, step_key=(0, StepKind.MAIN), mask=mask)
        out = hook.apply(2, current, text_len=3)
        assert np.array_equal(out[:3], current[:3])
        assert np.max(np.abs(out[3:] - fuse_loops(current[3:], cached[3:], mask))) < 1e-7

    def test_inject_without_mask_replaces_image_rows(self):
        rng = Rng(14)
        current = rng.normal((5, 4))
        cached = rng.normal((5, 4))
        cache = ValueCache()
        cache.put((2, StepKind.MIDPOINT), 0, cached)
        hook = ValueHook(mode="inject", store=cache, step_key=(2, StepKind.MIDPOINT))
        out = hook.apply(0, current, text_len=1)
        assert np.array_equal(out[0], current[0])
        assert np.array_equal(out[1:], cached[1:])

    def test_inject_shape_mismatch(self):
        cache = ValueCache()
        cache.put((0, StepKind.MAIN), 0, np.zeros((4, 4)))
        hook = ValueHook(mode="inject", store=cache, step_key=(0, StepKind.MAIN))
        with pytest.raises(ShapeError):
            hook.apply(0, np.zeros((5, 4)), text_len=1)


class TestModelInjection:
    """Hook behavior observed through full forward passes."""

    def test_record_does_not_perturb_output(self, dit):
        z = Rng(20).normal((16, 64)).astype(np.float32)
        prompt = dit.text_embed("a portrait photo")
        plain = dit.forward(z, 0.3, prompt)
        cache = ValueCache()
        hook = ValueHook(mode="record", store=cache, step_key=(0, StepKind.MAIN))
        hooked = dit.forward(z, 0.3, prompt, hook=hook)
        assert np.array_equal(plain, hooked)
        assert len(cache) == dit.config.m

    def test_self_injection_is_identity(self, dit):
        z = Rng(21).normal((16, 64)).astype(np.float32)
        prompt = dit.text_embed("a portrait photo")
        plain = dit.forward(z, 0.6, prompt)
        cache = ValueCache()
        record = ValueHook(mode="record", store=cache, step_key=(0, StepKind.MAIN))
        dit.forward(z, 0.6, prompt, hook=record)
        inject = ValueHook(mode="inject", store=cache, step_key=(0, StepKind.MAIN))
        replayed = dit.forward(z, 0.6, prompt, hook=inject)
        assert np.max(np.abs(replayed - plain)) < 1e-6

    def test_cross_injection_touches_only_hooked_blocks(self, dit):
        rng = Rng(22)
        z = rng.normal((16, 64)).astype(np.float32)
        z_other = rng.normal((16, 64)).astype(np.float32)
        prompt = dit.text_embed("a portrait photo")
        cache = ValueCache()
        record = ValueHook(mode="record", store=cache, step_key=(0, StepKind.MAIN))
        dit.forward(z_other, 0.4, prompt, hook=record)

        plain_cap: dict = {}
        plain = dit.forward(z, 0.4, prompt, capture=plain_cap)
        inject = ValueHook(mode="inject", store=cache, step_key=(0, StepKind.MAIN))
        inj_cap: dict = {}
        injected = dit.forward(z, 0.4, prompt, hook=inject, capture=inj_cap)

        first_hooked = dit.config.depth - dit.config.m
        for l in range(first_hooked + 1):
            assert np.array_equal(plain_cap[f"block{l}.in"], inj_cap[f"block{l}.in"]), l
        assert not np.array_equal(
            plain_cap[f"block{first_hooked + 1}.in"], inj_cap[f"block{first_hooked + 1}.in"]
        )
        assert not np.array_equal(plain, injected)

    def test_injection_missing_step_raises(self, dit):
        z = Rng(23).normal((16, 64)).astype(np.float32)
        prompt = dit.text_embed("x")
        hook = ValueHook(mode="inject", store=ValueCache(), step_key=(9, StepKind.MAIN))
        with pytest.raises(CacheMissError):
            dit.forward(z, 0.2, prompt, hook=hook)
