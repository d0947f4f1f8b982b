"""Prompt-aligned segmentation locator: text-conditioned mask prediction.

The locator scores every cell of a convolutional feature grid against
a projected text embedding; the sigmoid of that dot-product grid is
the soft mask. Two size presets exist:

* ``paper``: 512x512 input, six 3x3 conv layers (64..512 channels,
  strides 1,2,2,2,1,1) giving a 64x64 grid of 512-d features, and a
  768->1024->512 projector on top of a frozen text embedding.
* ``toy``: the same topology scaled to 64x64 input (8..64 channels,
  32->48->64 projector, 8x8 feature grid), small enough to train on a
  desk machine.

The pretrained text encoder is replaced by a deterministic hash
embedder: each word maps to a fixed unit vector and a prompt embeds as
the mean over its words. It is frozen by construction, shared by every
model regardless of training seed, and carries no semantics beyond
word identity, which is all the synthetic prompts encode anyway.

Trainable parts run in float64 end to end; masks and losses come out
of one differentiable graph built on the tensor module.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from .. import tensor as tc
from ..errors import DataError, InputError
from ..tensor.rng import Rng
from ..validation import as_float_array, check_rank

PASL_TEXT_SEED = 2749  # fixed: the stub plays the role of a pretrained encoder

_MODES = {
    # channels per conv layer, strides, (text_in, text_hidden), input size
    "paper": ((64, 128, 256, 512, 512, 512), (1, 2, 2, 2, 1, 1), (768, 1024), 512),
    "toy": ((8, 16, 32, 64, 64, 64), (1, 2, 2, 2, 1, 1), (32, 48), 64),
}


@dataclass(frozen=True)
class PaslConfig:
    mode: str = "toy"

    def __post_init__(self):
        if self.mode not in _MODES:
            raise InputError(f"PaslConfig: mode must be one of {sorted(_MODES)}, got {self.mode!r}")

    @property
    def channels(self) -> Tuple[int, ...]:
        return _MODES[self.mode][0]

    @property
    def strides(self) -> Tuple[int, ...]:
        return _MODES[self.mode][1]

    @property
    def text_dims(self) -> Tuple[int, int, int]:
        text_in, hidden = _MODES[self.mode][2]
        return (text_in, hidden, self.channels[-1])

    @property
    def image_size(self) -> int:
        return _MODES[self.mode][3]

    @property
    def grid_size(self) -> int:
        size = self.image_size
        for s in self.strides:
            size //= s
        return size


def stub_embed(prompt: str, dim: int) -> np.ndarray:
    """Frozen bag-of-words embedding: mean of per-word hashed unit vectors."""
    if not isinstance(prompt, str) or not prompt.strip():
        raise InputError("stub_embed: prompt must be a non-empty string")
    vecs = []
    for word in prompt.split():
        digest = hashlib.blake2b(f"{PASL_TEXT_SEED}:word:{word}".encode("utf-8"), digest_size=8)
        g = Rng(int.from_bytes(digest.digest(), "little"))
        v = g.normal((dim,), dtype=np.float64)
        vecs.append(v / np.linalg.norm(v))
    return np.mean(vecs, axis=0)


class PaslModel:
    """Conv image encoder + text projector over a frozen hash embedder."""

    LEAK = 0.01

    def __init__(self, config: PaslConfig = PaslConfig(), seed: int = 0):
        self.config = config
        self.seed = int(seed)
        rng = Rng(self.seed).spawn("pasl-init")
        self.params: Dict[str, tc.Tensor] = {}
        c_in = 3
        for i, c_out in enumerate(config.channels):
            std = float(np.sqrt(2.0 / (c_in * 9)))
            self.params[f"conv{i}.w"] = tc.Tensor(
                rng.spawn(f"conv{i}.w").normal((c_out, c_in, 3, 3), scale=std), requires_grad=True
            )
            self.params[f"conv{i}.b"] = tc.zeros((c_out,), dtype=np.float64, requires_grad=True)
            c_in = c_out
        t_in, t_hid, t_out = config.text_dims
        self.params["proj.w1"] = tc.Tensor(
            rng.spawn("proj.w1").normal((t_in, t_hid), scale=float(np.sqrt(2.0 / t_in))), requires_grad=True
        )
        self.params["proj.b1"] = tc.zeros((t_hid,), dtype=np.float64, requires_grad=True)
        # Tiny last layer: initial logits start near zero so early masks
        # are uncommitted rather than saturated.
        self.params["proj.w2"] = tc.Tensor(
            rng.spawn("proj.w2").normal((t_hid, t_out), scale=0.01), requires_grad=True
        )
        self.params["proj.b2"] = tc.zeros((t_out,), dtype=np.float64, requires_grad=True)

    # -- forward pieces -------------------------------------------------------

    def encode(self, images: tc.Tensor) -> tc.Tensor:
        """[B, 3, H, W] -> feature grid [B, C, h, w]."""
        h = images
        for i, stride in enumerate(self.config.strides):
            h = tc.conv2d(h, self.params[f"conv{i}.w"], self.params[f"conv{i}.b"], stride=stride)
            h = tc.leaky_relu(h, self.LEAK)
        return h

    def project(self, text_vecs: np.ndarray) -> tc.Tensor:
        """[B, R, D_text] -> per-prompt feature queries [B, R, C]."""
        text_vecs = as_float_array(text_vecs, "text_vecs", dtype=np.float64)
        check_rank(text_vecs, "text_vecs", 3)
        b, r, d = text_vecs.shape
        h = tc.linear(tc.Tensor(text_vecs.reshape(b * r, d)), self.params["proj.w1"], self.params["proj.b1"])
        h = tc.relu(h)
        h = tc.linear(h, self.params["proj.w2"], self.params["proj.b2"])
        return tc.reshape(h, (b, r, h.data.shape[-1]))

    def logits(self, images: tc.Tensor, text_vecs: np.ndarray) -> tc.Tensor:
        """[B, 3, H, W] x [B, R, D_text] -> mask logits [B, R, h, w]."""
        feats = self.encode(images)
        queries = self.project(text_vecs)
        return tc.grid_dot(feats, queries)

    # -- public inference -----------------------------------------------------

    def embed_prompt(self, prompt: str) -> np.ndarray:
        return stub_embed(prompt, self.config.text_dims[0])

    def encode_image(self, image: np.ndarray) -> np.ndarray:
        """Single image [3, H, W] -> feature grid as [h, w, C] float64."""
        image = as_float_array(image, "image", dtype=np.float64)
        check_rank(image, "image", 3)
        with tc.no_grad():
            feats = self.encode(tc.Tensor(image[None]))
        return feats.data[0].transpose(1, 2, 0)

    def predict_mask(self, image: np.ndarray, prompt: str) -> np.ndarray:
        """Soft mask [h, w] in (0, 1) for one image and one prompt."""
        image = as_float_array(image, "image", dtype=np.float64)
        check_rank(image, "image", 3)
        vec = self.embed_prompt(prompt)
        with tc.no_grad():
            out = self.logits(tc.Tensor(image[None]), vec[None, None])
            mask = tc.sigmoid(out)
        return mask.data[0, 0]

    # -- persistence ----------------------------------------------------------

    def save(self, directory: str) -> None:
        from ..tensor.io import save_tensor

        os.makedirs(directory, exist_ok=True)
        names = sorted(self.params)
        for name in names:
            save_tensor(os.path.join(directory, name.replace("/", "_") + ".fstn"), self.params[name].data)
        manifest = {"mode": self.config.mode, "seed": self.seed, "weights": names}
        with open(os.path.join(directory, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, directory: str) -> "PaslModel":
        from ..tensor.io import load_tensor

        path = os.path.join(directory, "manifest.json")
        if not os.path.exists(path):
            raise DataError(f"PaslModel.load: no manifest.json under {directory}")
        with open(path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        model = cls(PaslConfig(mode=manifest["mode"]), seed=int(manifest.get("seed", 0)))
        if sorted(model.params) != manifest["weights"]:
            raise DataError("PaslModel.load: weight list does not match the architecture")
        for name in manifest["weights"]:
            data = load_tensor(os.path.join(directory, name.replace("/", "_") + ".fstn"))
            if data.shape != model.params[name].data.shape:
                raise DataError(f"PaslModel.load: {name} has shape {data.shape}, "
                                f"expected {model.params[name].data.shape}")
            model.params[name] = tc.Tensor(data.astype(np.float64), requires_grad=True)
        return model


def mask_loss_terms(logits: tc.Tensor, target: np.ndarray, eps: float = 1e-7):
    """BCE and Dice over soft masks, one graph; returns (bce, dice, total).

    ``logits`` is [B, R, h, w]; ``target`` a {0,1} array of the same
    shape. Dice is computed per (sample, region) then averaged; for an
    empty target it evaluates to a constant 1 with zero gradient, so
    only the BCE term teaches the model to abstain.
    """
    target = np.asarray(target, dtype=np.float64)
    if target.shape != logits.data.shape:
        raise InputError(f"mask_loss: target shape {target.shape} != logits shape {logits.data.shape}")
    if not np.isin(target, (0.0, 1.0)).all():
        raise InputError("mask_loss: target must be binary")
    y = tc.Tensor(target)
    one_minus_y = tc.Tensor(1.0 - target)
    p = tc.clamp(tc.sigmoid(logits), eps, 1.0 - eps)
    bce = -tc.tmean(y * tc.log(p) + one_minus_y * tc.log(1.0 - p))
    inter = tc.tsum(p * y, axis=(2, 3))
    denom = tc.tsum(p, axis=(2, 3)) + tc.tsum(y, axis=(2, 3))
    dice = tc.tmean(1.0 - (2.0 * inter) / denom)
    total = bce + dice
    return bce, dice, total


def mask_loss(logits: tc.Tensor, target: np.ndarray, eps: float = 1e-7) -> Tuple[float, float, float]:
    """Float (bce, dice, total) for reporting; see mask_loss_terms."""
    bce, dice, total = mask_loss_terms(logits, target, eps)
    return float(bce.data), float(dice.data), float(total.data)
