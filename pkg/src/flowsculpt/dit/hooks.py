"""Attention-value recording and injection.

During inversion the solver attaches record-mode hooks, filling a
:class:`ValueCache` with the full [text+image, C] value tensors of the
hooked tail blocks at every (step, main|midpoint) evaluation. During
detailing steps the same keys are replayed through inject-mode hooks,
which blend the cached source values into the current target values on
the image-token slice only; text value tokens always pass through
untouched.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Dict, Optional, Tuple

import numpy as np

from ..errors import CacheMissError, InputError, ShapeError


class StepKind:
    MAIN = "main"
    MIDPOINT = "midpoint"
    ALL = (MAIN, MIDPOINT)


StepKey = Tuple[int, str]


def _check_key(step_key: StepKey) -> StepKey:
    index, kind = step_key
    if kind not in StepKind.ALL:
        raise InputError(f"step key kind must be main|midpoint, got {kind!r}")
    return (int(index), kind)


class ValueCache:
    """Session-local store: (step index, main|midpoint, block) -> values."""

    def __init__(self):
        self._entries: Dict[Tuple[int, str, int], np.ndarray] = {}

    def put(self, step_key: StepKey, block: int, values: np.ndarray) -> None:
        index, kind = _check_key(step_key)
        self._entries[(index, kind, int(block))] = values

    def get(self, step_key: StepKey, block: int) -> np.ndarray:
        index, kind = _check_key(step_key)
        try:
            return self._entries[(index, kind, int(block))]
        except KeyError:
            raise CacheMissError(
                f"value cache miss: step {index} ({kind}), block {block} was never recorded"
            ) from None

    def has(self, step_key: StepKey, block: int) -> bool:
        index, kind = _check_key(step_key)
        return (index, kind, int(block)) in self._entries

    def keys(self):
        return sorted(self._entries.keys())

    def __len__(self):
        return len(self._entries)


def mask_fuse(target: np.ndarray, source: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Per-token convex blend M*target + (1-M)*source.

    ``mask`` has one entry per token (leading axis); trailing axes
    broadcast. The two-product form keeps M=0 and M=1 exact: fused
    entries are bitwise the source/target entries for generic data.
    """
    target = np.asarray(target)
    source = np.asarray(source)
    mask = np.asarray(mask)
    if target.shape != source.shape:
        raise ShapeError(f"mask_fuse: target {target.shape} vs source {source.shape}")
    if mask.ndim != 1 or mask.shape[0] != target.shape[0]:
        raise ShapeError(
            f"mask_fuse: mask shape {mask.shape} does not index {target.shape[0]} tokens"
        )
    m = mask.astype(target.dtype, copy=False)
    while m.ndim < target.ndim:
        m = m[..., None]
    return m * target + (1.0 - m) * source


@dataclass
class ValueHook:
    """One value-tensor interception at one step evaluation.

    mode "record" copies each hooked block's value tensor into the
    store; mode "inject" replaces the image-token slice with the
    mask-weighted blend of current (target) and cached (source) values.
    ``mask`` is per image token; None in inject mode means full source
    replacement (equivalent to an all-zeros mask).
    """

    mode: str
    store: ValueCache
    step_key: StepKey
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.mode not in ("record", "inject"):
            raise InputError(f"ValueHook: mode must be record|inject, got {self.mode!r}")
        self.step_key = _check_key(self.step_key)

    def apply(self, block: int, values: np.ndarray, text_len: int) -> np.ndarray:
        """Called by the model at each hooked block with the full
        [text_len + L, C] value tensor; returns the tensor to use."""
        if self.mode == "record":
            self.store.put(self.step_key, block, values.copy())
            return values
        cached = self.store.get(self.step_key, block)
        if cached.shape != values.shape:
            raise ShapeError(
                f"ValueHook: cached values {cached.shape} vs current {values.shape} "
                f"at step {self.step_key}, block {block}"
            )
        n_img = values.shape[0] - text_len
        if self.mask is None:
            mask = np.zeros(n_img, dtype=values.dtype)
        else:
            mask = np.asarray(self.mask)
            if mask.shape != (n_img,):
                raise ShapeError(
                    f"ValueHook: mask shape {mask.shape} does not match {n_img} image tokens"
                )
        out = values.copy()
        out[text_len:] = mask_fuse(values[text_len:], cached[text_len:], mask)
        return out
