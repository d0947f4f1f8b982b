import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from flowsculpt.cli import main, stage_seed
from flowsculpt.synth.dataset import write_pgm, write_ppm
from flowsculpt.synth.portrait import render_portrait
from flowsculpt.tensor.io import load_tensor
from flowsculpt.tensor.rng import Rng


@pytest.fixture
def runner():
    return CliRunner()


def read_report(out_dir) -> dict:
    with open(Path(out_dir) / "report.json", "r", encoding="utf-8") as fh:
        return json.load(fh)


class TestSeedFanout:
    def test_stages_decoupled_and_stable(self):
        a = stage_seed(0, "edit-portrait")
        assert stage_seed(0, "edit-portrait") == a
        assert stage_seed(0, "demo2d") != a
        assert stage_seed(1, "edit-portrait") != a


class TestComplexityCommand:
    def test_paper_table_prints_exact_param_counts(self, runner, tmp_path):
        result = runner.invoke(main, ["complexity", "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        assert "6,270,592" in result.output
        assert "1,312,256" in result.output
        report = read_report(tmp_path)
        assert report["config"]["mode"] == "paper"

    def test_toy_table(self, runner):
        result = runner.invoke(main, ["complexity", "--mode", "toy"])
        assert result.exit_code == 0, result.output


class TestDatasetCommand:
    def test_generate_writes_manifest_and_report(self, runner, tmp_path):
        out = tmp_path / "ds"
        result = runner.invoke(
            main,
            ["dataset", "--n", "4", "--seed", "3", "--val-frac", "0.25", "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        assert (out / "manifest.jsonl").is_file()
        report = read_report(out)
        assert report["n_train"] == 3 and report["n_val"] == 1
        assert report["n_samples"] == 4 * 18

    def test_invalid_count_exits_3(self, runner, tmp_path):
        result = runner.invoke(main, ["dataset", "--n", "0", "--out", str(tmp_path / "x")])
        assert result.exit_code == 3
        assert "at least one portrait" in result.output


class TestLocatorPipeline:
    def test_train_eval_edit_roundtrip(self, runner, tmp_path):
        ds_dir = tmp_path / "ds"
        result = runner.invoke(
            main,
            ["dataset", "--n", "6", "--seed", "1", "--val-frac", "0.34", "--out", str(ds_dir)],
        )
        assert result.exit_code == 0, result.output
        manifest = str(ds_dir / "manifest.jsonl")

        train_dir = tmp_path / "pasl"
        result = runner.invoke(
            main,
            ["train-pasl", "--data", manifest, "--epochs", "1", "--out", str(train_dir)],
        )
        assert result.exit_code == 0, result.output
        report = read_report(train_dir)
        ckpt = report["checkpoint"]
        assert Path(ckpt, "manifest.json").is_file()
        assert report["final_loss"] > 0.0

        eval_dir = tmp_path / "eval"
        result = runner.invoke(
            main,
            ["eval-pasl", "--checkpoint", ckpt, "--data", manifest, "--out", str(eval_dir)],
        )
        assert result.exit_code == 0, result.output
        assert "mean IoU" in result.output
        report = read_report(eval_dir)
        assert report["split"] == "val" and 0.0 <= report["mean_iou"] <= 1.0

        edit_dir = tmp_path / "edit"
        result = runner.invoke(
            main,
            [
                "edit", "--portrait-seed", "4", "--locator", ckpt,
                "--prompt-tgt", "a portrait with a bigger nose",
                "--N", "6", "--T", "2", "--out", str(edit_dir),
            ],
        )
        assert result.exit_code == 0, result.output
        report = read_report(edit_dir)
        assert report["edit"]["mask"]["source"] == "pasl"


class TestEditCommand:
    def test_zero_mask_low_shift_reconstructs_the_source(self, runner, tmp_path):
        # Full source-value injection plus one chord-pinned structuring
        # step should bring the edit close to plain reconstruction.
        mask_path = tmp_path / "empty.pgm"
        write_pgm(str(mask_path), np.zeros((64, 64), dtype=bool))
        out = tmp_path / "edit"
        result = runner.invoke(
            main,
            [
                "edit", "--portrait-seed", "21", "--mask", str(mask_path),
                "--prompt-tgt", "a portrait with bright red lips",
                "--T", "1", "--out", str(out),
            ],
        )
        assert result.exit_code == 0, result.output
        edited = load_tensor(out / "edited.fstn")
        image = render_portrait(21).image
        rel = float(np.linalg.norm(edited - image) / np.linalg.norm(image))
        assert rel < 0.05, rel

    def test_rerun_is_byte_identical(self, runner, tmp_path):
        args = [
            "edit", "--portrait-seed", "21", "--region", "lip_upper,lip_lower,mouth",
            "--prompt-tgt", "a portrait with bright red lips",
            "--N", "8", "--T", "2", "--out",
        ]
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out in (out_a, out_b):
            result = runner.invoke(main, args + [str(out)])
            assert result.exit_code == 0, result.output
        for name in ("edited.fstn", "edited.ppm", "report.json"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name

    def test_region_needs_rendered_portrait_metadata(self, runner, tmp_path):
        img_path = tmp_path / "img.ppm"
        write_ppm(str(img_path), render_portrait(3).image)
        result = runner.invoke(
            main,
            [
                "edit", "--image", str(img_path), "--region", "mouth",
                "--prompt-tgt", "x", "--N", "4", "--out", str(tmp_path / "o"),
            ],
        )
        assert result.exit_code == 3
        assert "--portrait-seed" in result.output

    def test_unknown_region_exits_3(self, runner, tmp_path):
        result = runner.invoke(
            main,
            [
                "edit", "--portrait-seed", "3", "--region", "dimples",
                "--prompt-tgt", "x", "--N", "4", "--out", str(tmp_path / "o"),
            ],
        )
        assert result.exit_code == 3
        assert "unknown region" in result.output

    def test_missing_target_prompt_exits_2(self, runner, tmp_path):
        result = runner.invoke(main, ["edit", "--out", str(tmp_path / "o")])
        assert result.exit_code == 2


class TestSweepCommand:
    def test_small_grid_prints_table(self, runner, tmp_path):
        out = tmp_path / "sweep"
        result = runner.invoke(
            main,
            [
                "sweep", "--n-portraits", "1", "--n-steps", "4",
                "--t-values", "1,2", "--strategies", "s2d,latent_only",
                "--out", str(out),
            ],
        )
        assert result.exit_code == 0, result.output
        assert "strategy" in result.output and "psnr_out" in result.output
        report = read_report(out)
        assert len(report["sweep"]["cells"]) == 4

    def test_bad_t_values_exit_2(self, runner, tmp_path):
        result = runner.invoke(
            main, ["sweep", "--t-values", "1,x", "--out", str(tmp_path / "o")]
        )
        assert result.exit_code == 2


class TestMetricsCommand:
    def test_pair_and_score_tables(self, runner, tmp_path):
        rng = Rng(8)
        source = rng.spawn("a").integers(0, 256, (3, 16, 16)) / 256.0
        edited = np.clip(source + 0.01, 0.0, 1.0)
        write_ppm(str(tmp_path / "src.ppm"), source)
        write_ppm(str(tmp_path / "edit.ppm"), edited)
        region = np.zeros((16, 16), dtype=bool)
        region[:8] = True
        write_pgm(str(tmp_path / "region.pgm"), region)
        scores = {
            "target": [0.2, 0.05, 0.3],
            "preserve": [[0.02, 0.4], [0.01, 0.02], [0.3, 0.01]],
            "labels": [[0, 1], [0, 0], [1, 0]],
        }
        with open(tmp_path / "scores.json", "w", encoding="utf-8") as fh:
            json.dump(scores, fh)
        out = tmp_path / "m"
        result = runner.invoke(
            main,
            [
                "metrics",
                "--source", str(tmp_path / "src.ppm"),
                "--edited", str(tmp_path / "edit.ppm"),
                "--region", str(tmp_path / "region.pgm"),
                "--scores", str(tmp_path / "scores.json"),
                "--out", str(out),
            ],
        )
        assert result.exit_code == 0, result.output
        report = read_report(out)
        assert report["pair"]["psnr"] > 30.0
        assert report["attributes"]["attr_edit"] == pytest.approx(2 / 3)
        assert "attr_preserve" in report["attributes"]

    def test_source_without_edited_exits_2(self, runner, tmp_path):
        img = tmp_path / "src.ppm"
        write_ppm(str(img), np.zeros((3, 16, 16)))
        result = runner.invoke(
            main, ["metrics", "--source", str(img), "--out", str(tmp_path / "o")]
        )
        assert result.exit_code == 2

    def test_no_inputs_exits_2(self, runner, tmp_path):
        result = runner.invoke(main, ["metrics", "--out", str(tmp_path / "o")])
        assert result.exit_code == 2


class TestDemoCommand:
    def test_short_training_run_reports_losses(self, runner, tmp_path):
        out = tmp_path / "demo"
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"steps": 5, "lr": 2e-3}))
        result = runner.invoke(
            main, ["rf-demo2d", "--config", str(cfg), "--steps", "3", "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        report = read_report(out)
        assert report["config"]["steps"] == 3  # flag beats config file
        assert report["config"]["lr"] == 2e-3  # config file beats default
        assert report["final_loss"] > 0.0
        assert "excess_path_length" in report["straightness"]

    @pytest.mark.filterwarnings("ignore:overflow encountered")
    @pytest.mark.filterwarnings("ignore:invalid value encountered")
    def test_divergent_training_exits_4(self, runner, tmp_path):
        result = runner.invoke(
            main,
            ["rf-demo2d", "--steps", "50", "--lr", "1e30", "--out", str(tmp_path / "o")],
        )
        assert result.exit_code == 4

    def test_unknown_config_key_exits_2(self, runner, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"bogus": 1}))
        result = runner.invoke(
            main, ["rf-demo2d", "--config", str(cfg), "--out", str(tmp_path / "o")]
        )
        assert result.exit_code == 2
        assert "unknown keys" in result.output


class TestVersion:
    def test_version_flag(self, runner):
        result = runner.invoke(main, ["--version"])
        assert result.exit_code == 0
        assert "flowsculpt" in result.output
