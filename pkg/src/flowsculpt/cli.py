"""Command-line entry point wiring every stage of the pipeline.

One ``flowsculpt`` command with subcommands for dataset generation,
locator training/evaluation, editing, ablation sweeps, metric tables,
complexity accounting, and the 2-D solver demo.

Configuration: each subcommand accepts ``--config FILE`` (a JSON
object) plus individual flags; explicitly passed flags win over the
file, the file wins over built-in defaults.  Unknown keys in the file
are rejected.  Every report embeds the fully resolved configuration,
the master seed, and the package version, and contains nothing
time-dependent, so rerunning a command with identical arguments
produces byte-identical artifacts.

Seeds: a single master ``--seed`` fans out to per-stage streams via
blake2b hashing of ``"{seed}:{stage}"`` (the same derivation the
tensor Rng uses for child streams), so stages stay decoupled: adding
a stage never changes the draws of another.

Exit codes: 0 success, 2 usage error, 3 invalid input or data,
4 numeric failure.
"""
from __future__ import annotations

import functools
import json
import os
import sys

import click
import numpy as np

from . import __version__
from .errors import DataError, InputError, NumericError
from .tensor.rng import _derive_seed


def stage_seed(master: int, stage: str) -> int:
    """Per-stage seed derived from the master seed; stable across runs."""
    return _derive_seed(int(master), stage)


def _load_config(path, allowed):
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise click.UsageError(f"cannot read config {path}: {exc}")
    if not isinstance(doc, dict):
        raise click.UsageError(f"config {path}: expected a JSON object")
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise click.UsageError(
            f"config {path}: unknown keys {unknown}; allowed: {sorted(allowed)}"
        )
    return doc


def _resolve(defaults: dict, config_path, flags: dict) -> dict:
    """defaults < config file < explicitly passed flags."""
    resolved = dict(defaults)
    resolved.update(_load_config(config_path, set(defaults)))
    resolved.update({k: v for k, v in flags.items() if v is not None})
    return resolved


def _write_json(path, obj) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _report(resolved: dict, seed: int, body: dict) -> dict:
    return {"config": resolved, "seed": seed, "version": __version__, **body}


def guarded(fn):
    """Map module errors onto the documented exit codes."""

    @functools.wraps(fn)
    def inner(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except NumericError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(4)
        except (InputError, DataError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(3)

    return inner


def _load_image(path: str) -> np.ndarray:
    from .synth.dataset import read_ppm

    if path.endswith(".ppm"):
        return read_ppm(path)
    from .tensor.io import load_tensor

    return np.asarray(load_tensor(path), dtype=np.float32)


def _load_mask(path: str) -> np.ndarray:
    from .synth.dataset import read_pgm

    if path.endswith(".pgm"):
        return read_pgm(path)
    from .tensor.io import load_tensor

    return np.asarray(load_tensor(path), dtype=np.float64)


@click.group()
@click.version_option(version=__version__, prog_name="flowsculpt")
def main() -> None:
    """Text-driven portrait editing on synthetic faces."""


# -- dataset ------------------------------------------------------------------


@main.command("dataset")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--n", type=int, default=None, help="Number of portraits.")
@click.option("--size", type=int, default=None, help="Image side length.")
@click.option("--seed", type=int, default=None)
@click.option("--val-frac", type=float, default=None)
@click.option("--out", required=True, type=click.Path())
@guarded
def cmd_dataset(config_path, n, size, seed, val_frac, out) -> None:
    """Generate a synthetic text-to-mask dataset on disk."""
    from .synth.dataset import make_dataset

    resolved = _resolve(
        {"n": 40, "size": 64, "seed": 0, "val_frac": 0.2},
        config_path,
        {"n": n, "size": size, "seed": seed, "val_frac": val_frac},
    )
    ds = make_dataset(
        resolved["n"],
        size=resolved["size"],
        val_frac=resolved["val_frac"],
        seed=resolved["seed"],
        out_dir=out,
    )
    report = _report(
        resolved,
        resolved["seed"],
        {
            "manifest": os.path.join(out, "manifest.jsonl"),
            "n_train": len({s.portrait_id for s in ds.split_samples("train")}),
            "n_val": len({s.portrait_id for s in ds.split_samples("val")}),
            "n_samples": len(ds.samples),
        },
    )
    _write_json(os.path.join(out, "report.json"), report)
    click.echo(
        f"dataset: {resolved['n']} portraits ({report['n_train']} train / "
        f"{report['n_val']} val), {len(ds.samples)} samples -> {out}"
    )


# -- locator training / evaluation -------------------------------------------


@main.command("train-pasl")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--data", required=True, type=click.Path(exists=True), help="Dataset manifest.jsonl.")
@click.option("--epochs", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--weight-decay", type=float, default=None)
@click.option("--mode", type=click.Choice(["toy", "paper"]), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", required=True, type=click.Path())
@guarded
def cmd_train_pasl(config_path, data, epochs, batch_size, lr, weight_decay, mode, seed, out) -> None:
    """Train the locator on a generated dataset and save a checkpoint."""
    from .pasl.model import PaslConfig, PaslModel
    from .pasl.train import train_pasl
    from .synth.dataset import TextMaskDataset

    resolved = _resolve(
        {"epochs": 32, "batch_size": 8, "lr": 3e-3, "weight_decay": 2e-2, "mode": "toy", "seed": 0},
        config_path,
        {
            "epochs": epochs,
            "batch_size": batch_size,
            "lr": lr,
            "weight_decay": weight_decay,
            "mode": mode,
            "seed": seed,
        },
    )
    ds = TextMaskDataset.load(data)
    model = PaslModel(PaslConfig(mode=resolved["mode"]), seed=stage_seed(resolved["seed"], "pasl-init"))
    result = train_pasl(
        ds,
        epochs=resolved["epochs"],
        batch_size=resolved["batch_size"],
        lr=resolved["lr"],
        weight_decay=resolved["weight_decay"],
        seed=stage_seed(resolved["seed"], "pasl-train"),
        model=model,
    )
    ckpt = os.path.join(out, "checkpoint")
    model.save(ckpt)
    history = result["history"]["total"]
    report = _report(
        resolved,
        resolved["seed"],
        {
            "checkpoint": ckpt,
            "steps": result["steps"],
            "first_loss": history[0],
            "final_loss": history[-1],
        },
    )
    _write_json(os.path.join(out, "report.json"), report)
    click.echo(
        f"train-pasl: {result['steps']} steps, loss {history[0]:.4f} -> "
        f"{history[-1]:.4f}, {result['wall_time']:.1f}s -> {ckpt}"
    )


@main.command("eval-pasl")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--data", required=True, type=click.Path(exists=True), help="Dataset manifest.jsonl.")
@click.option("--split", type=click.Choice(["train", "val"]), default=None)
@click.option("--out", required=True, type=click.Path())
@guarded
def cmd_eval_pasl(config_path, checkpoint, data, split, out) -> None:
    """Report held-out mask IoU for a trained locator."""
    from .pasl.model import PaslModel
    from .pasl.train import evaluate_pasl
    from .synth.dataset import TextMaskDataset

    resolved = _resolve({"split": "val"}, config_path, {"split": split})
    model = PaslModel.load(checkpoint)
    ds = TextMaskDataset.load(data)
    result = evaluate_pasl(model, ds, split=resolved["split"])
    report = _report(resolved, model.seed, result)
    _write_json(os.path.join(out, "report.json"), report)
    click.echo(f"eval-pasl: split={result['split']} n={result['n_samples']} mean IoU {result['mean_iou']:.4f}")
    for region, iou in sorted(result["per_region"].items()):
        click.echo(f"  {region:<16}{iou:.4f}")


# -- editing ------------------------------------------------------------------


@main.command("edit")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--image", "image_path", type=click.Path(exists=True), default=None,
              help="Source image (.ppm or .fstn). Omit to render --portrait-seed.")
@click.option("--portrait-seed", type=int, default=None,
              help="Render the source procedurally when --image is not given.")
@click.option("--prompt-src", type=str, default=None)
@click.option("--prompt-tgt", required=True, type=str)
@click.option("--mask", "mask_path", type=click.Path(exists=True), default=None,
              help="Edit-region mask (.pgm or .fstn); omit for a locator or manual region.")
@click.option("--locator", "locator_path", type=click.Path(exists=True), default=None,
              help="Trained locator checkpoint; mask is predicted from --prompt-tgt.")
@click.option("--region", type=str, default=None,
              help="Portrait region name(s), comma separated, as the manual mask "
                   "(requires --portrait-seed).")
@click.option("--T", "t_structure", type=int, default=None, help="Structuring step count.")
@click.option("--N", "n_steps", type=int, default=None, help="Total backward steps.")
@click.option("--m", "hooked", type=int, default=None, help="Hooked tail blocks.")
@click.option("--strategy", type=click.Choice(["s2d", "latent_only", "value_only", "none"]), default=None)
@click.option("--mask-mode", type=click.Choice(["continuous", "binarized"]), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", required=True, type=click.Path())
@guarded
def cmd_edit(config_path, image_path, portrait_seed, prompt_src, prompt_tgt, mask_path,
             locator_path, region, t_structure, n_steps, hooked, strategy, mask_mode,
             seed, out) -> None:
    """Invert a portrait and re-denoise it under the target prompt."""
    from .control.editor import EditConfig, edit
    from .dit.model import DiTConfig, VelocityTransformer
    from .synth.dataset import write_ppm
    from .synth.portrait import render_portrait
    from .tensor.io import save_tensor

    resolved = _resolve(
        {
            "prompt_src": "a portrait photo",
            "t_structure": 3,
            "n_steps": 30,
            "m": 2,
            "strategy": "s2d",
            "mask_mode": "continuous",
            "seed": 0,
            "portrait_seed": None,
            "region": None,
            "dit_seed": 0,
        },
        config_path,
        {
            "prompt_src": prompt_src,
            "t_structure": t_structure,
            "n_steps": n_steps,
            "m": hooked,
            "strategy": strategy,
            "mask_mode": mask_mode,
            "seed": seed,
            "portrait_seed": portrait_seed,
            "region": region,
        },
    )

    portrait = None
    if image_path is not None:
        image = _load_image(image_path)
    else:
        pseed = resolved["portrait_seed"]
        if pseed is None:
            pseed = stage_seed(resolved["seed"], "edit-portrait")
        portrait = render_portrait(pseed)
        image = portrait.image

    mask = None
    locator = None
    if mask_path is not None:
        mask = _load_mask(mask_path)
    elif locator_path is not None:
        from .pasl.model import PaslModel

        locator = PaslModel.load(locator_path)
    elif resolved["region"] is not None:
        if portrait is None:
            raise InputError("edit: --region needs --portrait-seed (regions of a file are unknown)")
        mask = np.zeros(image.shape[1:], dtype=np.float64)
        for name in str(resolved["region"]).split(","):
            name = name.strip()
            if name not in portrait.regions:
                raise InputError(f"edit: unknown region {name!r}; have {sorted(portrait.regions)}")
            mask = np.maximum(mask, portrait.regions[name].astype(np.float64))

    model = VelocityTransformer(DiTConfig(m=resolved["m"], seed=resolved["dit_seed"]))
    config = EditConfig(
        n_steps=resolved["n_steps"],
        t_structure=resolved["t_structure"],
        strategy=resolved["strategy"],
        mask_source="pasl" if locator is not None else "manual",
        mask_mode=resolved["mask_mode"],
        seed=resolved["seed"],
    )
    edited, edit_report, _session = edit(
        image, resolved["prompt_src"], prompt_tgt, config, model, mask=mask, locator=locator
    )

    os.makedirs(out, exist_ok=True)
    save_tensor(os.path.join(out, "edited.fstn"), edited.astype(np.float32))
    write_ppm(os.path.join(out, "edited.ppm"), edited)
    report = _report(resolved, resolved["seed"], {"prompt_tgt": prompt_tgt, "edit": edit_report})
    _write_json(os.path.join(out, "report.json"), report)
    delta = float(np.mean(np.abs(edited - image)))
    click.echo(
        f"edit: strategy={config.strategy} T={config.t_structure} N={config.n_steps} "
        f"mean|delta|={delta:.5f} -> {out}"
    )


# -- ablation sweep -----------------------------------------------------------


@main.command("sweep")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--n-portraits", type=int, default=None)
@click.option("--n-steps", type=int, default=None)
@click.option("--t-values", type=str, default=None, help="Comma-separated stage-shift values.")
@click.option("--strategies", type=str, default=None, help="Comma-separated strategy names.")
@click.option("--mask-mode", type=click.Choice(["continuous", "binarized"]), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", required=True, type=click.Path())
@guarded
def cmd_sweep(config_path, n_portraits, n_steps, t_values, strategies, mask_mode, seed, out) -> None:
    """Run the (strategy, T) ablation grid on rendered portraits."""
    from .control.sweep import SWEEP_STRATEGIES, T_VALUES, ablation_sweep, format_sweep_table
    from .dit.model import DiTConfig, VelocityTransformer
    from .synth.portrait import render_portrait

    resolved = _resolve(
        {
            "n_portraits": 2,
            "n_steps": 30,
            "t_values": ",".join(str(t) for t in T_VALUES),
            "strategies": ",".join(SWEEP_STRATEGIES),
            "mask_mode": "continuous",
            "seed": 0,
            "dit_seed": 0,
        },
        config_path,
        {
            "n_portraits": n_portraits,
            "n_steps": n_steps,
            "t_values": t_values,
            "strategies": strategies,
            "mask_mode": mask_mode,
            "seed": seed,
        },
    )
    try:
        ts = [int(tok) for tok in str(resolved["t_values"]).split(",") if tok.strip()]
    except ValueError:
        raise click.UsageError(f"--t-values: expected integers, got {resolved['t_values']!r}")
    strats = [tok.strip() for tok in str(resolved["strategies"]).split(",") if tok.strip()]

    entries = []
    for i in range(resolved["n_portraits"]):
        portrait = render_portrait(stage_seed(resolved["seed"], f"sweep-portrait-{i}"))
        lips = (
            portrait.regions["lip_upper"]
            | portrait.regions["lip_lower"]
            | portrait.regions["mouth"]
        )
        entries.append(
            {
                "image": portrait.image,
                "mask": lips.astype(np.float64),
                "source_prompt": "a portrait photo",
                "target_prompt": "a portrait with bright red lips",
                "regions": portrait.regions,
                "target_attribute": "lips_red",
            }
        )

    model = VelocityTransformer(DiTConfig(seed=resolved["dit_seed"]))
    sweep = ablation_sweep(
        entries,
        model,
        t_values=ts,
        strategies=strats,
        n_steps=resolved["n_steps"],
        mask_mode=resolved["mask_mode"],
    )
    report = _report(resolved, resolved["seed"], {"sweep": sweep})
    _write_json(os.path.join(out, "report.json"), report)
    click.echo(format_sweep_table(sweep))


# -- metrics ------------------------------------------------------------------


@main.command("metrics")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--source", "source_path", type=click.Path(exists=True), default=None)
@click.option("--edited", "edited_path", type=click.Path(exists=True), default=None)
@click.option("--region", "region_path", type=click.Path(exists=True), default=None,
              help="Optional mask restricting PSNR.")
@click.option("--scores", "scores_path", type=click.Path(exists=True), default=None,
              help="JSON with attribute score arrays.")
@click.option("--tau", type=float, default=None)
@click.option("--out", required=True, type=click.Path())
@guarded
def cmd_metrics(config_path, source_path, edited_path, region_path, scores_path, tau, out) -> None:
    """Fidelity metrics for an image pair and/or attribute score tables.

    The scores JSON holds {"target": [...]} for the edit rate and
    optionally {"preserve": [[...]], "labels": [[...]]} for the
    preservation rate.
    """
    from .metrics.scores import ScoreMatrix, attr_edit, attr_preserve, mask_iou, psnr, ssim

    resolved = _resolve({"tau": 0.1}, config_path, {"tau": tau})
    body = {}
    if (source_path is None) != (edited_path is None):
        raise click.UsageError("--source and --edited must be given together")
    if source_path is not None:
        source = _load_image(source_path).astype(np.float64)
        edited = _load_image(edited_path).astype(np.float64)
        region = None
        if region_path is not None:
            region = _load_mask(region_path) >= 0.5
        body["pair"] = {
            "psnr": psnr(source, edited, region=region),
            "ssim": ssim(source, edited),
        }
        if region is not None:
            change = np.mean(np.abs(edited - source), axis=0) > 0.02
            body["pair"]["change_iou"] = mask_iou(change.astype(np.float64), region.astype(np.float64))
    if scores_path is not None:
        with open(scores_path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        if "target" not in doc:
            raise DataError(f"{scores_path}: missing 'target' score array")
        matrix = ScoreMatrix(
            target=np.asarray(doc["target"], dtype=np.float64),
            preserve=[np.asarray(row, dtype=np.float64) for row in doc.get("preserve", [])],
            labels=[np.asarray(row) for row in doc.get("labels", [])],
            tau=resolved["tau"],
        )
        body["attributes"] = {"attr_edit": attr_edit(matrix)}
        if matrix.preserve:
            body["attributes"]["attr_preserve"] = attr_preserve(matrix)
    if not body:
        raise click.UsageError("nothing to do: pass --source/--edited or --scores")
    _write_json(os.path.join(out, "report.json"), _report(resolved, 0, body))
    for group, table in body.items():
        click.echo(group)
        for name, value in table.items():
            click.echo(f"  {name:<14}{value:.6f}")


# -- complexity ---------------------------------------------------------------


@main.command("complexity")
@click.option("--mode", type=click.Choice(["paper", "toy"]), default="paper")
@click.option("--out", type=click.Path(), default=None)
@guarded
def cmd_complexity(mode, out) -> None:
    """Analytic parameter and FLOP table for the locator."""
    from .pasl.complexity import complexity_report, format_report

    report = complexity_report(mode=mode)
    click.echo(format_report(report))
    if out is not None:
        _write_json(os.path.join(out, "report.json"), _report({"mode": mode}, 0, report))


# -- 2-D demo -----------------------------------------------------------------


@main.command("rf-demo2d")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--steps", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--hidden", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", required=True, type=click.Path())
@guarded
def cmd_rf_demo2d(config_path, steps, lr, hidden, seed, out) -> None:
    """Train the 2-D velocity model and report loss and straightness."""
    from .flow.demo2d import FlowDemo2D

    resolved = _resolve(
        {"steps": 2000, "lr": 1e-4, "hidden": 64, "seed": 0},
        config_path,
        {"steps": steps, "lr": lr, "hidden": hidden, "seed": seed},
    )
    demo = FlowDemo2D(
        hidden=resolved["hidden"],
        steps=resolved["steps"],
        lr=resolved["lr"],
        seed=stage_seed(resolved["seed"], "demo2d"),
    )
    demo.fit()
    losses = demo.loss_curve_
    straightness = demo.straightness_report()
    body = {
        "first_loss": float(losses[0]),
        "final_loss": float(losses[-1]),
        "loss_ratio": float(losses[-1] / losses[0]),
        "straightness": straightness,
    }
    _write_json(os.path.join(out, "report.json"), _report(resolved, resolved["seed"], body))
    click.echo(
        f"rf-demo2d: loss {losses[0]:.4f} -> {losses[-1]:.4f} "
        f"({100 * body['loss_ratio']:.1f}% of initial)"
    )
    for name, value in straightness.items():
        click.echo(f"  {name:<22}{value:.5f}")


if __name__ == "__main__":
    main()
