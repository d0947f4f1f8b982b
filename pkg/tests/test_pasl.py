import math
import time

import numpy as np
import pytest
from sklearn.base import clone

from flowsculpt import tensor as tc
from flowsculpt.errors import DataError, InputError
from flowsculpt.pasl.complexity import complexity_report, count_model_params, format_report
from flowsculpt.pasl.model import PaslConfig, PaslModel, mask_loss, mask_loss_terms, stub_embed
from flowsculpt.pasl.train import PaslLocator, evaluate_pasl, pool_mask, train_pasl
from flowsculpt.synth.dataset import TextMaskDataset
from flowsculpt.tensor.gradcheck import grad_check
from flowsculpt.tensor.rng import Rng


@pytest.fixture(scope="module")
def small_dataset():
    return TextMaskDataset.generate(24, val_frac=0.25, seed=1)


class TestComplexity:
    def test_paper_component_parameter_counts(self):
        report = complexity_report("paper")
        by_name = {c["name"]: c for c in report["components"]}
        assert by_name["Image Encoder"]["params"] == 6_270_592
        assert by_name["Multi-Modal Projector"]["params"] == 1_312_256

    def test_paper_component_flops(self):
        report = complexity_report("paper")
        by_name = {c["name"]: c for c in report["components"]}
        enc = by_name["Image Encoder"]["flops"]
        proj = by_name["Multi-Modal Projector"]["flops"]
        assert abs(enc - 68.694e9) / 68.694e9 < 0.01
        assert abs(proj - 0.003e9) / 0.003e9 < 0.20

    def test_totals_are_component_sums(self):
        report = complexity_report("paper")
        assert report["trainable_params"] == sum(c["params"] for c in report["components"])
        assert report["trainable_flops"] == sum(c["flops"] for c in report["components"])

    def test_analytic_counts_match_instantiated_toy_model(self):
        report = complexity_report("toy")
        counts = count_model_params(PaslModel(PaslConfig("toy")))
        by_name = {c["name"]: c for c in report["components"]}
        assert by_name["Image Encoder"]["params"] == counts["encoder"]
        assert by_name["Multi-Modal Projector"]["params"] == counts["projector"]

    def test_format_report_prints_table_rows(self):
        text = format_report(complexity_report("paper"))
        assert "6,270,592" in text
        assert "1,312,256" in text
        assert "6.27" in text and "1.31" in text

    def test_unknown_mode_rejected(self):
        with pytest.raises(InputError):
            complexity_report("huge")


class TestPaperEncoderShape:
    def test_512_image_maps_to_64_grid_of_512_channels(self):
        model = PaslModel(PaslConfig("paper"))
        image = Rng(1).uniform(0.0, 1.0, (3, 512, 512))
        t0 = time.monotonic()
        feats = model.encode_image(image)
        elapsed = time.monotonic() - t0
        assert feats.shape == (64, 64, 512)
        assert np.isfinite(feats).all()
        assert elapsed < 120.0


class TestMaskLoss:
    def test_uniform_prediction_gives_log_two_bce(self, lips_mask):
        target = pool_mask(lips_mask, 8)[None, None]
        logits = tc.zeros((1, 1, 8, 8), dtype=np.float64)
        bce, _, _ = mask_loss(logits, target)
        assert abs(bce - math.log(2.0)) < 1e-9

    def test_empty_target_dice_is_constant_one(self):
        logits = tc.Tensor(Rng(2).normal((1, 1, 8, 8)), requires_grad=True)
        _, dice, _ = mask_loss_terms(logits, np.zeros((1, 1, 8, 8)))
        assert float(dice.data) == 1.0
        dice.backward()
        assert np.max(np.abs(logits.grad)) < 1e-12

    def test_perfect_confident_prediction_drives_loss_down(self):
        target = np.zeros((1, 1, 4, 4))
        target[0, 0, :2] = 1.0
        logits = tc.Tensor(np.where(target > 0.5, 30.0, -30.0))
        bce, dice, total = mask_loss(logits, target)
        assert bce < 1e-6 and dice < 1e-6 and total < 2e-6

    def test_target_validation(self):
        logits = tc.zeros((1, 1, 4, 4), dtype=np.float64)
        with pytest.raises(InputError):
            mask_loss(logits, np.full((1, 1, 4, 4), 0.5))
        with pytest.raises(InputError):
            mask_loss(logits, np.zeros((1, 1, 8, 8)))


class TestModelForward:
    def test_zero_image_yields_uncommitted_half_mask(self):
        model = PaslModel(PaslConfig("toy"), seed=0)
        mask = model.predict_mask(np.zeros((3, 64, 64)), "highlight the nose")
        assert mask.shape == (8, 8)
        assert np.array_equal(mask, np.full((8, 8), 0.5))

    def test_predict_mask_values_in_open_unit_interval(self, small_dataset):
        model = PaslModel(PaslConfig("toy"), seed=0)
        mask = model.predict_mask(small_dataset.images["portrait_00000"], "the hair")
        assert mask.shape == (8, 8)
        assert (mask > 0.0).all() and (mask < 1.0).all()

    def test_stub_embed_deterministic_and_word_order_sensitive(self):
        a = stub_embed("red lips", 32)
        assert np.array_equal(a, stub_embed("red lips", 32))
        assert not np.array_equal(a, stub_embed("blue lips", 32))
        assert np.allclose(a, stub_embed("lips red", 32))  # bag of words
        with pytest.raises(InputError):
            stub_embed("  ", 32)

    def test_pool_mask_binarizes_area_average(self):
        mask = np.zeros((16, 16))
        mask[:8, :8] = 1.0  # top-left quadrant fully on
        mask[:8, 8:12] = 1.0  # half of the top-right 8x8 block
        pooled = pool_mask(mask, 2)
        assert np.array_equal(pooled, np.array([[1.0, 1.0], [0.0, 0.0]]))
        with pytest.raises(InputError):
            pool_mask(np.zeros((15, 15)), 2)


class TestGradients:
    def test_loss_gradients_match_central_differences(self):
        # Fixed probe: random images and random binary targets exercise
        # every layer away from saturated activations.
        model = PaslModel(PaslConfig("toy"), seed=5)
        rng = Rng(77)
        imgs = rng.spawn("img").uniform(0.0, 1.0, (2, 3, 64, 64))
        text = np.stack([
            np.stack([stub_embed("the nose", 32), stub_embed("hair region", 32)]),
            np.stack([stub_embed("left eye", 32), stub_embed("select chin", 32)]),
        ])
        gt = (rng.spawn("gt").uniform(0.0, 1.0, (2, 2, 8, 8)) > 0.6).astype(np.float64)

        def loss_fn():
            logits = model.logits(tc.Tensor(imgs), text)
            return mask_loss_terms(logits, gt)[2]

        names = ["conv0.w", "conv2.w", "conv5.w", "conv5.b", "proj.w1", "proj.w2", "proj.b2"]
        sub = {k: model.params[k] for k in names}
        errs = grad_check(loss_fn, sub, eps=1e-6, max_coords=6, rng=Rng(3))
        assert max(errs.values()) < 1e-4, errs


class TestTraining:
    def test_loss_decreases_on_small_run(self, small_dataset):
        result = train_pasl(small_dataset, epochs=8, batch_size=8, seed=0)
        history = result["history"]["total"]
        assert len(history) == 8 * math.ceil(18 / 8)
        assert history[-1] < 0.8 * history[0]
        assert result["steps"] == len(history)

    def test_training_deterministic_for_fixed_seed(self, small_dataset):
        a = train_pasl(small_dataset, epochs=1, batch_size=8, seed=4)
        b = train_pasl(small_dataset, epochs=1, batch_size=8, seed=4)
        assert a["history"]["total"] == b["history"]["total"]
        for name in a["model"].params:
            assert np.array_equal(a["model"].params[name].data, b["model"].params[name].data)

    def test_evaluate_structure_and_range(self, small_dataset):
        model = PaslModel(PaslConfig("toy"), seed=0)
        report = evaluate_pasl(model, small_dataset, split="val")
        assert report["n_portraits"] == 6
        assert report["n_samples"] == 6 * 18
        assert 0.0 <= report["mean_iou"] <= 1.0
        assert set(report["per_region"]) == {s.region for s in small_dataset.samples}

    def test_dataset_size_mismatch_rejected(self, small_dataset):
        with pytest.raises(InputError):
            train_pasl(small_dataset, model=PaslModel(PaslConfig("paper")))


class TestLocatorEstimator:
    def test_sklearn_contract_and_fit_predict(self, small_dataset):
        locator = PaslLocator(epochs=1, seed=0)
        assert clone(locator).get_params() == locator.get_params()
        with pytest.raises(InputError):
            locator.predict(np.zeros((3, 64, 64)), "nose")
        fitted = locator.fit(small_dataset)
        assert fitted is locator
        mask = locator.predict(small_dataset.images["portrait_00001"], "mask the mouth")
        assert mask.shape == (8, 8)
        score = locator.score(small_dataset)
        assert 0.0 <= score <= 1.0

    def test_fit_rejects_non_dataset(self):
        with pytest.raises(InputError):
            PaslLocator(epochs=1).fit(np.zeros((4, 4)))


class TestPersistence:
    def test_save_load_round_trip(self, tmp_path, small_dataset):
        model = PaslModel(PaslConfig("toy"), seed=9)
        model.save(str(tmp_path / "ckpt"))
        loaded = PaslModel.load(str(tmp_path / "ckpt"))
        assert loaded.config.mode == "toy"
        assert loaded.seed == 9
        for name in model.params:
            assert np.array_equal(loaded.params[name].data, model.params[name].data), name
        img = small_dataset.images["portrait_00000"]
        assert np.array_equal(
            loaded.predict_mask(img, "the chin"), model.predict_mask(img, "the chin")
        )

    def test_load_missing_manifest(self, tmp_path):
        with pytest.raises(DataError):
            PaslModel.load(str(tmp_path))
