"""Ablation grid over the stage-shift step count T.

One inversion per image backs every (strategy, T) cell: recording is
forced to the full window so any cell's detailing steps find their
entries.  Cell metrics compare the edited image against the source,
inside and outside the edit mask.
"""

from dataclasses import replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..errors import InputError
from ..metrics.attributes import classify_attributes
from ..metrics.scores import mask_iou, psnr, ssim
from .editor import EditConfig, block_resize, make_session, run_edit

T_VALUES = (1, 3, 5, 7, 9)
SWEEP_STRATEGIES = ("latent_only", "value_only", "s2d")

# Pixel-change threshold used for the changed-area mask: about five
# 8-bit quantization levels.
CHANGE_THRESHOLD = 0.02


def _cell_metrics(source: np.ndarray, edited: np.ndarray, mask_img: np.ndarray) -> Dict[str, float]:
    out_region = ~mask_img
    change = np.abs(edited.astype(np.float64) - source.astype(np.float64)).mean(axis=0)
    row = {
        "psnr_all": psnr(source, edited),
        "ssim": ssim(source, edited),
        "change_iou": mask_iou((change > CHANGE_THRESHOLD).astype(float), mask_img.astype(float)),
    }
    if out_region.any():
        row["psnr_out"] = psnr(source, edited, region=out_region)
        row["change_out"] = float(change[out_region].mean())
    if mask_img.any():
        row["psnr_in"] = psnr(source, edited, region=mask_img)
        row["change_in"] = float(change[mask_img].mean())
    return row


def ablation_sweep(
    entries: Sequence[dict],
    model,
    t_values: Sequence[int] = T_VALUES,
    strategies: Sequence[str] = SWEEP_STRATEGIES,
    n_steps: int = 30,
    mask_mode: str = "continuous",
) -> dict:
    """Run the (strategy, T) edit grid and aggregate per-cell metrics.

    Each entry carries an image [3,H,W] in [0,1], source/target prompts,
    and an edit mask at image resolution.  An entry may also carry the
    synthetic region layout; attribute scores are then tracked too.
    Returns a JSON-ready report with the per-cell table and the two
    monotonicity checks the sweep exists to pin down.
    """
    if not entries:
        raise InputError("ablation_sweep: no entries")
    t_values = [int(t) for t in t_values]
    for t in t_values:
        if not 0 <= t <= n_steps:
            raise InputError(f"ablation_sweep: T={t} outside [0, {n_steps}]")
    for s in strategies:
        if s not in SWEEP_STRATEGIES:
            raise InputError(f"ablation_sweep: unknown strategy {s!r}")

    base = EditConfig(n_steps=n_steps, strategy="s2d", mask_source="manual", mask_mode=mask_mode)
    sessions = []
    for k, entry in enumerate(entries):
        image = np.asarray(entry["image"], dtype=np.float32)
        mask = np.asarray(entry["mask"], dtype=np.float64)
        if mask.shape != image.shape[1:]:
            raise InputError(
                f"ablation_sweep: entry {k} mask {mask.shape} vs image {image.shape[1:]}"
            )
        session = make_session(
            image,
            entry["source_prompt"],
            entry["target_prompt"],
            base,
            model,
            mask=mask,
            record_all=True,
        )
        before = None
        if entry.get("regions") is not None:
            before = classify_attributes(image.astype(np.float64), entry["regions"])
        sessions.append((session, mask >= 0.5, before, entry))

    cells: List[dict] = []
    for strategy in strategies:
        for t in t_values:
            cfg = replace(base, strategy=strategy, t_structure=t)
            per_image = []
            for session, mask_img, before, entry in sessions:
                edited, _ = run_edit(session, model, cfg)
                row = _cell_metrics(session.image, edited, mask_img)
                if before is not None:
                    after = classify_attributes(edited.astype(np.float64), entry["regions"])
                    deltas = {a: after[a] - before[a] for a in before}
                    tgt = entry.get("target_attribute")
                    row["attr_target_delta"] = deltas.get(tgt)
                    others = [abs(d) for a, d in deltas.items() if a != tgt]
                    row["attr_other_mean_abs_delta"] = float(np.mean(others)) if others else 0.0
                per_image.append(row)
            mean = {
                key: float(np.mean([r[key] for r in per_image]))
                for key in per_image[0]
                if all(r.get(key) is not None for r in per_image)
            }
            cells.append({"strategy": strategy, "t": t, "mean": mean, "per_image": per_image})

    report = {
        "n_steps": n_steps,
        "t_values": t_values,
        "strategies": list(strategies),
        "n_images": len(entries),
        "mask_mode": mask_mode,
        "cells": cells,
        "checks": sweep_checks(cells, t_values),
    }
    return report


def _cell(cells, strategy: str, t: int) -> Optional[dict]:
    for c in cells:
        if c["strategy"] == strategy and c["t"] == t:
            return c
    return None


def sweep_checks(cells: List[dict], t_values: Sequence[int]) -> dict:
    """The two pinned sweep observations, computed from the cell table."""
    checks: Dict[str, object] = {}
    lat = [_cell(cells, "latent_only", t) for t in t_values]
    if all(c is not None and "psnr_out" in c["mean"] for c in lat):
        series = [c["mean"]["psnr_out"] for c in lat]
        checks["latent_only_psnr_out"] = series
        checks["latent_only_psnr_out_non_increasing"] = all(
            series[i + 1] <= series[i] + 1e-9 for i in range(len(series) - 1)
        )
    pairs = {}
    ok = True
    for t in t_values:
        cs, cv = _cell(cells, "s2d", t), _cell(cells, "value_only", t)
        if cs is None or cv is None or "change_out" not in cs["mean"]:
            continue
        pairs[str(t)] = {"s2d": cs["mean"]["change_out"], "value_only": cv["mean"]["change_out"]}
        ok = ok and cs["mean"]["change_out"] <= cv["mean"]["change_out"] + 1e-12
    if pairs:
        checks["change_out_by_t"] = pairs
        checks["s2d_change_out_le_value_only"] = ok
    return checks


def format_sweep_table(report: dict) -> str:
    """Fixed-width text rendering of the per-cell means."""
    keys = ["psnr_out", "psnr_in", "psnr_all", "ssim", "change_out", "change_iou"]
    header = f"{'strategy':<13}{'T':>3}" + "".join(f"{k:>12}" for k in keys)
    lines = [header, "-" * len(header)]
    for cell in report["cells"]:
        row = f"{cell['strategy']:<13}{cell['t']:>3}"
        for k in keys:
            v = cell["mean"].get(k)
            row += f"{v:>12.4f}" if v is not None else f"{'-':>12}"
        lines.append(row)
    checks = report.get("checks", {})
    for name in ("latent_only_psnr_out_non_increasing", "s2d_change_out_le_value_only"):
        if name in checks:
            lines.append(f"{name}: {'yes' if checks[name] else 'NO'}")
    return "\n".join(lines)
