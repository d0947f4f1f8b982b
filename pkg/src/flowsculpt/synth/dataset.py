"""Text-mask dataset generation, serialization, and loading.

A dataset is n portraits x 18 regions = 18n samples, each pairing an
image with one region mask and a prompt that names the region. Prompts
are drawn from a fixed template pool; every template embeds the region
keyword, so the text always identifies its mask.

On disk a dataset is a directory:

    manifest.jsonl            one JSON object per sample
    images/<pid>.ppm|.fstn    image as binary PPM (P6) and float32 tensor
    masks/<pid>_<region>.pgm|.fstn

Manifest rows carry exactly the fields id, image_path, mask_path,
region, prompt, attributes, split; paths are relative to the dataset
root and the tensor twin of any path is found by swapping the
extension for .fstn. Generation is deterministic: the same (n, size,
val_frac, seed) produces byte-identical files, and exactly
floor(val_frac * n) portraits land in the val split with all 18 of
their samples (no portrait straddles the split).
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from ..errors import DataError, InputError
from ..tensor.io import load_tensor, save_tensor
from ..tensor.rng import Rng
from .portrait import ATTRIBUTE_NAMES, REGION_KEYWORDS, REGION_NAMES, render_portrait

PROMPT_TEMPLATES = (
    "highlight the {kw}",
    "select the {kw} region",
    "edit the {kw}",
    "focus on the {kw} of the face",
    "recolor the {kw}",
    "adjust the {kw} area",
    "retouch the {kw}",
    "mask the {kw}",
    "change the {kw} slightly",
    "find the {kw} in this portrait",
    "outline the {kw}",
)


@dataclass
class TextMaskSample:
    sample_id: str
    portrait_id: str
    region: str
    prompt: str
    split: str
    mask: np.ndarray  # bool [S, S]


class TextMaskDataset:
    """In-memory dataset; construct via generate() or load()."""

    def __init__(self, size: int, samples: List[TextMaskSample], images: Dict[str, np.ndarray],
                 attributes: Dict[str, Dict[str, bool]]):
        self.size = size
        self.samples = samples
        self.images = images
        self.attributes = attributes

    def split_samples(self, split: str) -> List[TextMaskSample]:
        if split not in ("train", "val"):
            raise InputError(f"split must be train or val, got {split!r}")
        return [s for s in self.samples if s.split == split]

    @property
    def portrait_ids(self) -> List[str]:
        return sorted(self.images.keys())

    @classmethod
    def generate(cls, n: int, size: int = 64, val_frac: float = 0.2, seed: int = 0) -> "TextMaskDataset":
        if n < 1:
            raise InputError(f"dataset needs at least one portrait, got n={n}")
        if not 0.0 <= val_frac < 1.0:
            raise InputError(f"val_frac must be in [0, 1), got {val_frac}")
        root = Rng(seed)
        n_val = int(math.floor(val_frac * n))
        val_idx = set(int(i) for i in root.spawn("split").permutation(n)[:n_val])
        prompt_rng = root.spawn("prompts")
        portrait_seed = root.spawn("portraits")

        samples: List[TextMaskSample] = []
        images: Dict[str, np.ndarray] = {}
        attributes: Dict[str, Dict[str, bool]] = {}
        for i in range(n):
            pid = f"portrait_{i:05d}"
            portrait = render_portrait(portrait_seed.spawn(pid).seed, size=size)
            images[pid] = portrait.image
            attributes[pid] = {k: bool(portrait.attributes[k]) for k in ATTRIBUTE_NAMES}
            split = "val" if i in val_idx else "train"
            for region in REGION_NAMES:
                template = prompt_rng.spawn(f"{pid}:{region}").choice(PROMPT_TEMPLATES)
                prompt = template.format(kw=REGION_KEYWORDS[region])
                samples.append(TextMaskSample(
                    sample_id=f"{pid}_{region}",
                    portrait_id=pid,
                    region=region,
                    prompt=prompt,
                    split=split,
                    mask=portrait.regions[region],
                ))
        return cls(size, samples, images, attributes)

    def write(self, out_dir: str) -> str:
        """Write images, masks, and manifest; returns the manifest path."""
        img_dir = os.path.join(out_dir, "images")
        mask_dir = os.path.join(out_dir, "masks")
        os.makedirs(img_dir, exist_ok=True)
        os.makedirs(mask_dir, exist_ok=True)
        for pid in self.portrait_ids:
            write_ppm(os.path.join(img_dir, f"{pid}.ppm"), self.images[pid])
            save_tensor(os.path.join(img_dir, f"{pid}.fstn"), self.images[pid])
        manifest_path = os.path.join(out_dir, "manifest.jsonl")
        with open(manifest_path, "w", encoding="utf-8") as fh:
            for sample in self.samples:
                stem = f"{sample.portrait_id}_{sample.region}"
                write_pgm(os.path.join(mask_dir, f"{stem}.pgm"), sample.mask)
                save_tensor(os.path.join(mask_dir, f"{stem}.fstn"), sample.mask.astype(np.float32))
                row = {
                    "id": sample.sample_id,
                    "image_path": f"images/{sample.portrait_id}.ppm",
                    "mask_path": f"masks/{stem}.pgm",
                    "region": sample.region,
                    "prompt": sample.prompt,
                    "attributes": self.attributes[sample.portrait_id],
                    "split": sample.split,
                }
                fh.write(json.dumps(row, sort_keys=True, separators=(",", ":")) + "\n")
        return manifest_path

    @classmethod
    def load(cls, manifest_path: str) -> "TextMaskDataset":
        """Rebuild a dataset from manifest.jsonl, reading the .fstn twins."""
        root = os.path.dirname(os.path.abspath(manifest_path))
        samples: List[TextMaskSample] = []
        images: Dict[str, np.ndarray] = {}
        attributes: Dict[str, Dict[str, bool]] = {}
        size: Optional[int] = None
        with open(manifest_path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    row = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise DataError(f"{manifest_path}:{line_no}: invalid JSON: {exc}") from exc
                missing = {"id", "image_path", "mask_path", "region", "prompt", "attributes", "split"} - set(row)
                if missing:
                    raise DataError(f"{manifest_path}:{line_no}: missing fields {sorted(missing)}")
                pid = row["id"].rsplit("_" + row["region"], 1)[0]
                if pid not in images:
                    tensor_path = os.path.join(root, _fstn_twin(row["image_path"]))
                    images[pid] = load_tensor(tensor_path).astype(np.float32)
                    attributes[pid] = {k: bool(v) for k, v in row["attributes"].items()}
                    if size is None:
                        size = images[pid].shape[1]
                mask = load_tensor(os.path.join(root, _fstn_twin(row["mask_path"]))) > 0.5
                samples.append(TextMaskSample(
                    sample_id=row["id"], portrait_id=pid, region=row["region"],
                    prompt=row["prompt"], split=row["split"], mask=mask,
                ))
        if size is None:
            raise DataError(f"{manifest_path}: manifest is empty")
        return cls(size, samples, images, attributes)


def _fstn_twin(path: str) -> str:
    stem, _ = os.path.splitext(path)
    return stem + ".fstn"


def make_dataset(n: int, size: int = 64, val_frac: float = 0.2, seed: int = 0,
                 out_dir: Optional[str] = None) -> TextMaskDataset:
    """Generate a dataset and, if out_dir is given, write it to disk."""
    ds = TextMaskDataset.generate(n, size=size, val_frac=val_frac, seed=seed)
    if out_dir is not None:
        ds.write(out_dir)
    return ds


def write_ppm(path: str, image: np.ndarray) -> None:
    """Binary PPM (P6, maxval 255) from a [3, H, W] float image in [0, 1]."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] != 3:
        raise InputError(f"write_ppm: expected [3, H, W], got {image.shape}")
    h, w = image.shape[1:]
    data = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.transpose(1, 2, 0).tobytes())


def write_pgm(path: str, mask: np.ndarray) -> None:
    """Binary PGM (P5, maxval 255) from a boolean or [0, 1] float mask."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise InputError(f"write_pgm: expected [H, W], got {mask.shape}")
    data = np.round(np.clip(mask.astype(np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{mask.shape[1]} {mask.shape[0]}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def _read_netpbm(path: str, magic: bytes):
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(magic):
        raise DataError(f"{path}: expected {magic.decode()} header")
    # Header tokens may be separated by any whitespace; # starts a comment.
    tokens, i = [], 2
    while len(tokens) < 3:
        while i < len(raw) and raw[i : i + 1].isspace():
            i += 1
        if i < len(raw) and raw[i : i + 1] == b"#":
            while i < len(raw) and raw[i : i + 1] != b"\n":
                i += 1
            continue
        start = i
        while i < len(raw) and not raw[i : i + 1].isspace():
            i += 1
        if start == i:
            raise DataError(f"{path}: truncated header")
        tokens.append(raw[start:i])
    i += 1  # single whitespace byte after maxval
    w, h, maxval = (int(t) for t in tokens)
    if maxval != 255:
        raise DataError(f"{path}: only maxval 255 is supported, got {maxval}")
    return raw[i:], w, h


def read_ppm(path: str) -> np.ndarray:
    """Read a P6 file back to [3, H, W] float32 in [0, 1]."""
    body, w, h = _read_netpbm(path, b"P6")
    if len(body) != 3 * w * h:
        raise DataError(f"{path}: payload has {len(body)} bytes, expected {3 * w * h}")
    arr = np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3)
    return (arr.astype(np.float32) / 255.0).transpose(2, 0, 1)


def read_pgm(path: str) -> np.ndarray:
    """Read a P5 file back to a boolean [H, W] mask (threshold 127)."""
    body, w, h = _read_netpbm(path, b"P5")
    if len(body) != w * h:
        raise DataError(f"{path}: payload has {len(body)} bytes, expected {w * h}")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w) > 127
