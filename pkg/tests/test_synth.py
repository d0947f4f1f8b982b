import numpy as np
import pytest

from flowsculpt.errors import DataError, InputError
from flowsculpt.metrics.attributes import classify_attributes
from flowsculpt.synth.dataset import (
    REGION_KEYWORDS,
    TextMaskDataset,
    read_pgm,
    read_ppm,
    write_pgm,
    write_ppm,
)
from flowsculpt.synth.portrait import ATTRIBUTE_NAMES, REGION_NAMES, render_portrait

N_ORACLE_SEEDS = 1000


class TestPortraitRenderer:
    def test_same_seed_bitwise_identical(self):
        a = render_portrait(17)
        b = render_portrait(17)
        assert np.array_equal(a.image, b.image)
        assert a.attributes == b.attributes
        for name in REGION_NAMES:
            assert np.array_equal(a.regions[name], b.regions[name]), name

    def test_different_seeds_differ(self):
        assert not np.array_equal(render_portrait(0).image, render_portrait(1).image)

    def test_image_contract(self, portrait):
        img = portrait.image
        assert img.dtype == np.float32
        assert img.shape == (3, 64, 64)
        assert img.min() >= 0.0 and img.max() <= 1.0

    def test_every_region_present_and_nonempty(self, portrait):
        assert set(portrait.regions) == set(REGION_NAMES)
        for name, mask in portrait.regions.items():
            assert mask.dtype == np.bool_ and mask.shape == (64, 64)
            assert mask.any(), name

    def test_size_validation(self):
        with pytest.raises(InputError):
            render_portrait(0, size=31)
        with pytest.raises(InputError):
            render_portrait(0, size=34)

    def test_larger_canvas_renders(self):
        p = render_portrait(3, size=96)
        assert p.image.shape == (3, 96, 96)
        assert classify_attributes(p.image, p.regions).keys() == set(ATTRIBUTE_NAMES)


class TestAttributeOracle:
    def test_classifier_recovers_generator_flags_across_seeds(self):
        # The analytic pixel classifier must agree with the generating
        # flags on every attribute of every portrait; both flag values
        # must occur so the check cannot pass vacuously.
        seen_true = {k: 0 for k in ATTRIBUTE_NAMES}
        for seed in range(N_ORACLE_SEEDS):
            p = render_portrait(seed)
            scores = classify_attributes(p.image, p.regions)
            for name in ATTRIBUTE_NAMES:
                decided = scores[name] >= 0.5
                assert decided == p.attributes[name], (seed, name, scores[name])
                seen_true[name] += int(p.attributes[name])
        for name, count in seen_true.items():
            assert 0 < count < N_ORACLE_SEEDS, name

    def test_scores_lie_in_unit_interval(self, portrait):
        scores = classify_attributes(portrait.image, portrait.regions)
        assert all(0.0 <= v <= 1.0 for v in scores.values())

    def test_missing_region_rejected(self, portrait):
        partial = {k: v for k, v in portrait.regions.items() if k != "nose"}
        with pytest.raises(InputError):
            classify_attributes(portrait.image, partial)


class TestDatasetGeneration:
    def test_counts_splits_and_prompts(self):
        ds = TextMaskDataset.generate(10, val_frac=0.2, seed=0)
        assert len(ds.samples) == 10 * len(REGION_NAMES)
        val = ds.split_samples("val")
        train = ds.split_samples("train")
        assert len(val) == 2 * len(REGION_NAMES)
        assert {s.portrait_id for s in val}.isdisjoint({s.portrait_id for s in train})
        per_portrait: dict = {}
        for s in ds.samples:
            per_portrait.setdefault(s.portrait_id, set()).add(s.region)
            assert REGION_KEYWORDS[s.region] in s.prompt
        assert all(regions == set(REGION_NAMES) for regions in per_portrait.values())

    def test_generation_deterministic(self):
        a = TextMaskDataset.generate(4, seed=5)
        b = TextMaskDataset.generate(4, seed=5)
        assert [s.sample_id for s in a.samples] == [s.sample_id for s in b.samples]
        assert [s.prompt for s in a.samples] == [s.prompt for s in b.samples]
        assert [s.split for s in a.samples] == [s.split for s in b.samples]
        for sa, sb in zip(a.samples, b.samples):
            assert np.array_equal(sa.mask, sb.mask)
        for pid in a.portrait_ids:
            assert np.array_equal(a.images[pid], b.images[pid])

    def test_seed_changes_dataset(self):
        a = TextMaskDataset.generate(3, seed=0)
        b = TextMaskDataset.generate(3, seed=1)
        assert not np.array_equal(a.images["portrait_00000"], b.images["portrait_00000"])

    def test_parameter_validation(self):
        with pytest.raises(InputError):
            TextMaskDataset.generate(0)
        with pytest.raises(InputError):
            TextMaskDataset.generate(4, val_frac=1.0)
        with pytest.raises(InputError):
            TextMaskDataset.generate(4).split_samples("test")


class TestDatasetSerialization:
    def test_write_load_round_trip(self, tmp_path):
        ds = TextMaskDataset.generate(3, val_frac=0.34, seed=2)
        manifest = ds.write(tmp_path / "ds")
        loaded = TextMaskDataset.load(manifest)
        assert loaded.size == ds.size
        assert loaded.attributes == ds.attributes
        assert [s.sample_id for s in loaded.samples] == [s.sample_id for s in ds.samples]
        for sa, sb in zip(ds.samples, loaded.samples):
            assert (sa.prompt, sa.split, sa.region) == (sb.prompt, sb.split, sb.region)
            assert np.array_equal(sa.mask, sb.mask)
        for pid in ds.portrait_ids:
            assert np.array_equal(loaded.images[pid], ds.images[pid])

    def test_rewrite_is_byte_identical(self, tmp_path):
        m1 = TextMaskDataset.generate(2, seed=3).write(tmp_path / "a")
        m2 = TextMaskDataset.generate(2, seed=3).write(tmp_path / "b")
        with open(m1, "rb") as f1, open(m2, "rb") as f2:
            assert f1.read() == f2.read()
        img = "images/portrait_00000.ppm"
        with open(tmp_path / "a" / img, "rb") as f1, open(tmp_path / "b" / img, "rb") as f2:
            assert f1.read() == f2.read()

    def test_corrupt_manifest_rejected(self, tmp_path):
        path = tmp_path / "manifest.jsonl"
        path.write_text("not json\n")
        with pytest.raises(DataError):
            TextMaskDataset.load(str(path))
        path.write_text('{"id": "x", "region": "nose"}\n')
        with pytest.raises(DataError):
            TextMaskDataset.load(str(path))
        path.write_text("")
        with pytest.raises(DataError):
            TextMaskDataset.load(str(path))


class TestNetpbm:
    def test_ppm_round_trip_within_quantization(self, tmp_path, portrait):
        path = str(tmp_path / "img.ppm")
        write_ppm(path, portrait.image)
        back = read_ppm(path)
        assert back.shape == portrait.image.shape
        assert np.max(np.abs(back - portrait.image)) <= 0.5 / 255.0 + 1e-7

    def test_ppm_write_is_idempotent_after_quantization(self, tmp_path, portrait):
        p1, p2 = str(tmp_path / "a.ppm"), str(tmp_path / "b.ppm")
        write_ppm(p1, portrait.image)
        write_ppm(p2, read_ppm(p1))
        with open(p1, "rb") as f1, open(p2, "rb") as f2:
            assert f1.read() == f2.read()

    def test_pgm_round_trip_exact_for_bool(self, tmp_path, lips_mask):
        path = str(tmp_path / "m.pgm")
        write_pgm(path, lips_mask > 0.5)
        assert np.array_equal(read_pgm(path), lips_mask > 0.5)

    def test_magic_mismatch_rejected(self, tmp_path, lips_mask):
        path = str(tmp_path / "m.pgm")
        write_pgm(path, lips_mask > 0.5)
        with pytest.raises(DataError):
            read_ppm(path)

    def test_truncated_payload_rejected(self, tmp_path, portrait):
        path = str(tmp_path / "img.ppm")
        write_ppm(path, portrait.image)
        with open(path, "rb") as fh:
            raw = fh.read()
        with open(path, "wb") as fh:
            fh.write(raw[:-10])
        with pytest.raises(DataError):
            read_ppm(path)

    def test_header_comments_tolerated(self, tmp_path):
        path = str(tmp_path / "c.pgm")
        body = bytes([255, 0, 0, 255])
        with open(path, "wb") as fh:
            fh.write(b"P5\n# a comment\n2 2\n255\n" + body)
        mask = read_pgm(path)
        assert np.array_equal(mask, np.array([[True, False], [False, True]]))
