"""Locator training on text-mask datasets.

Batches are whole portraits: one encoder forward per image is shared
by all 18 region prompts, which keeps the conv cost (the expensive
part) independent of the region count. Ground truth is area-pooled to
the feature grid and binarized at 0.5; zones survive that pooling,
stroke regions become all-zero targets that teach abstention.
"""
from __future__ import annotations

import math
import time
from typing import Dict, List, Optional

import numpy as np
from sklearn.base import BaseEstimator

from .. import tensor as tc
from ..errors import InputError, NumericError
from ..synth.dataset import TextMaskDataset
from ..synth.portrait import REGION_NAMES
from ..tensor.optim import AdamW, CosineSchedule
from ..tensor.rng import Rng
from .model import PaslConfig, PaslModel, mask_loss_terms, stub_embed


def pool_mask(mask: np.ndarray, grid: int) -> np.ndarray:
    """Area-downsample a [S, S] mask to [grid, grid], binarized at 0.5."""
    mask = np.asarray(mask, dtype=np.float64)
    if mask.ndim != 2 or mask.shape[0] != mask.shape[1]:
        raise InputError(f"pool_mask: mask must be square, got {mask.shape}")
    s = mask.shape[0]
    if s % grid:
        raise InputError(f"pool_mask: size {s} is not a multiple of grid {grid}")
    f = s // grid
    pooled = mask.reshape(grid, f, grid, f).mean(axis=(1, 3))
    return (pooled >= 0.5).astype(np.float64)


def _portrait_tensors(dataset: TextMaskDataset, split: str, text_dim: int, grid: int):
    """Group samples by portrait: images [N,3,S,S], text [N,18,D], gt [N,18,g,g]."""
    by_pid: Dict[str, List] = {}
    for sample in dataset.split_samples(split):
        by_pid.setdefault(sample.portrait_id, []).append(sample)
    pids = sorted(by_pid)
    if not pids:
        raise InputError(f"dataset has no {split!r} portraits")
    images = np.stack([dataset.images[p].astype(np.float64) for p in pids])
    n = len(pids)
    text = np.zeros((n, len(REGION_NAMES), text_dim))
    gt = np.zeros((n, len(REGION_NAMES), grid, grid))
    for i, pid in enumerate(pids):
        ordered = {s.region: s for s in by_pid[pid]}
        if set(ordered) != set(REGION_NAMES):
            raise InputError(f"portrait {pid} does not cover all regions")
        for j, region in enumerate(REGION_NAMES):
            sample = ordered[region]
            text[i, j] = stub_embed(sample.prompt, text_dim)
            gt[i, j] = pool_mask(sample.mask, grid)
    return pids, images, text, gt


def train_pasl(
    dataset: TextMaskDataset,
    epochs: int = 32,
    batch_size: int = 8,
    lr: float = 3e-3,
    weight_decay: float = 2e-2,
    seed: int = 0,
    model: Optional[PaslModel] = None,
    shuffle: bool = True,
) -> Dict:
    """Train a toy locator; returns {model, history, wall_time, ...}."""
    if model is None:
        model = PaslModel(PaslConfig("toy"), seed=seed)
    cfg = model.config
    if dataset.size != cfg.image_size:
        raise InputError(f"dataset size {dataset.size} != model input {cfg.image_size}")
    text_dim = cfg.text_dims[0]
    grid = cfg.grid_size
    _, images, text, gt = _portrait_tensors(dataset, "train", text_dim, grid)
    n = images.shape[0]
    batch_size = min(batch_size, n)
    steps_per_epoch = math.ceil(n / batch_size)
    opt = AdamW(list(model.params.values()), lr=lr, weight_decay=weight_decay)
    schedule = CosineSchedule(lr, max(1, epochs * steps_per_epoch))
    order_rng = Rng(seed).spawn("batch-order")
    history = {"bce": [], "dice": [], "total": []}
    t0 = time.monotonic()
    for _ in range(epochs):
        order = order_rng.permutation(n) if shuffle else np.arange(n)
        for k in range(steps_per_epoch):
            idx = order[k * batch_size : (k + 1) * batch_size]
            logits = model.logits(tc.Tensor(images[idx]), text[idx])
            bce, dice, total = mask_loss_terms(logits, gt[idx])
            if not np.isfinite(total.data):
                raise NumericError(f"train_pasl: non-finite loss at step {opt.step_count}")
            opt.zero_grad()
            total.backward()
            opt.step(lr=schedule.lr(opt.step_count))
            history["bce"].append(float(bce.data))
            history["dice"].append(float(dice.data))
            history["total"].append(float(total.data))
    return {
        "model": model,
        "history": history,
        "wall_time": time.monotonic() - t0,
        "steps": opt.step_count,
        "final_loss": history["total"][-1] if history["total"] else None,
    }


def evaluate_pasl(model: PaslModel, dataset: TextMaskDataset, split: str = "val") -> Dict:
    """Mean mask IoU at the feature grid, thresholding at 0.5.

    Both-empty predictions count as IoU 1 (the locator correctly said
    "nothing here"); this is the convention under which stroke regions
    are scoreable at feature resolution.
    """
    from ..metrics.scores import mask_iou

    cfg = model.config
    grid = cfg.grid_size
    pids, images, text, gt = _portrait_tensors(dataset, split, cfg.text_dims[0], grid)
    with tc.no_grad():
        logits = model.logits(tc.Tensor(images), text)
        pred = tc.sigmoid(logits).data
    per_region: Dict[str, List[float]] = {r: [] for r in REGION_NAMES}
    for i in range(len(pids)):
        for j, region in enumerate(REGION_NAMES):
            per_region[region].append(mask_iou(pred[i, j], gt[i, j]))
    flat = [v for vals in per_region.values() for v in vals]
    return {
        "split": split,
        "n_portraits": len(pids),
        "n_samples": len(flat),
        "mean_iou": float(np.mean(flat)),
        "per_region": {r: float(np.mean(v)) for r, v in per_region.items()},
    }


class PaslLocator(BaseEstimator):
    """Estimator wrapper: fit on a TextMaskDataset, predict soft masks.

    Follows the scikit-learn contract for construction and cloning
    (constructor only stores hyperparameters; fitted state lives in
    trailing-underscore attributes).
    """

    def __init__(self, epochs: int = 32, batch_size: int = 8, lr: float = 3e-3,
                 weight_decay: float = 2e-2, seed: int = 0):
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.weight_decay = weight_decay
        self.seed = seed

    def fit(self, X: TextMaskDataset, y=None) -> "PaslLocator":
        if not isinstance(X, TextMaskDataset):
            raise InputError("PaslLocator.fit expects a TextMaskDataset")
        result = train_pasl(
            X, epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
            weight_decay=self.weight_decay, seed=self.seed,
        )
        self.model_ = result["model"]
        self.history_ = result["history"]
        self.wall_time_ = result["wall_time"]
        return self

    def predict(self, image: np.ndarray, prompt: str) -> np.ndarray:
        self._check_fitted()
        return self.model_.predict_mask(image, prompt)

    def score(self, X: TextMaskDataset, y=None, split: str = "val") -> float:
        self._check_fitted()
        return evaluate_pasl(self.model_, X, split=split)["mean_iou"]

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise InputError("PaslLocator: call fit before predict/score")
