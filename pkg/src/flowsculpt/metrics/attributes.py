"""Analytic attribute classifier for synthetic portraits.

Each attribute score is an affine-clamped pixel measurement:

    score = clamp01(0.5 + (m - theta) / w)

where ``m`` is a documented statistic of the rendered image restricted
by the known region masks, ``theta`` sits between the generator's two
attribute clusters and ``w`` spans the gap. The generator draws its
colors and stroke sizes from bounded uniform ranges, so for portraits
of size >= 48 every measurement falls on the correct side of theta
with a hard margin and thresholding scores at 0.5 recovers the
generating flags exactly.

Measurements per attribute (L is 0.299 R + 0.587 G + 0.114 B):

* hair_dark:   1 - mean L over the hair mask.
* hair_long:   (lowest hair row + 1) / size.
* lips_red:    mean of R - (G + B)/2 over both lip masks.
* thick_lips:  (rows of lip_upper + rows of lip_lower) / (2 size).
* mouth_open:  fraction of mouth-zone rows containing a pixel with
               L < 0.20 (the mouth interior; lips are never that dark).
* has_glasses: fraction of glasses-zone pixels outside the eye zones
               and brow strokes with L < 0.25 (rim color).
* brows_thick: (rows of brow_left + rows of brow_right) / (2 size).
* eyes_open:   fraction of eye-zone pixels with L > 0.85 (sclera).
* rosy_cheeks: mean of R - (G + B)/2 over cheek-zone pixels not
               claimed by hair, glasses, eye, or nose zones (those
               layers may overpaint cheek corners; what remains is
               exactly blush or skin).
* big_nose:    widest run of shaded pixels (L < 0.8 of the skin
               reference) per nose-zone row, divided by size; probe
               rows stop above the upper lip and cheek-zone pixels are
               excluded, so neither lips nor blush ever count.
* wide_face:   bounding-box aspect (width / height) of face_boundary.
* skin_tan:    1 - mean L over neck pixels below the face outline
               (always clean skin, no occluder reaches it).
"""
from __future__ import annotations

from typing import Dict, Mapping

import numpy as np

from ..errors import InputError
from ..validation import check_rank

_LUMA = np.array([0.299, 0.587, 0.114])


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def _score(m: float, theta: float, w: float) -> float:
    return _clamp01(0.5 + (m - theta) / w)


def _rows(mask: np.ndarray) -> int:
    return int(np.count_nonzero(mask.any(axis=1)))


def classify_attributes(image: np.ndarray, regions: Mapping[str, np.ndarray]) -> Dict[str, float]:
    """Score the 12 attributes of a rendered portrait in [0, 1].

    ``image`` is [3, S, S]; ``regions`` maps region names to boolean
    masks as produced by the generator. Scores threshold at 0.5.
    """
    image = np.asarray(image, dtype=np.float64)
    check_rank(image, "image", 3)
    if image.shape[0] != 3 or image.shape[1] != image.shape[2]:
        raise InputError(f"classify_attributes: image must be [3, S, S], got {image.shape}")
    s = image.shape[1]
    needed = (
        "hair", "lip_upper", "lip_lower", "mouth", "glasses", "eye_left", "eye_right",
        "brow_left", "brow_right", "cheek_left", "cheek_right", "nose", "neck", "face_boundary",
    )
    masks = {}
    for name in needed:
        if name not in regions:
            raise InputError(f"classify_attributes: missing region mask {name!r}")
        m = np.asarray(regions[name], dtype=bool)
        if m.shape != (s, s):
            raise InputError(f"classify_attributes: mask {name!r} has shape {m.shape}, expected {(s, s)}")
        if not m.any():
            raise InputError(f"classify_attributes: region mask {name!r} is empty")
        masks[name] = m
    lum = np.tensordot(_LUMA, image, axes=(0, 0))
    red_excess = image[0] - 0.5 * (image[1] + image[2])
    out: Dict[str, float] = {}

    hair = masks["hair"]
    out["hair_dark"] = _score(1.0 - float(lum[hair].mean()), 0.65, 0.12)
    out["hair_long"] = _score((int(np.flatnonzero(hair.any(axis=1)).max()) + 1) / s, 0.60, 0.08)

    lips = masks["lip_upper"] | masks["lip_lower"]
    out["lips_red"] = _score(float(red_excess[lips].mean()), 0.49, 0.12)
    out["thick_lips"] = _score((_rows(masks["lip_upper"]) + _rows(masks["lip_lower"])) / (2.0 * s), 0.027, 0.008)

    mouth = masks["mouth"]
    mouth_rows = np.flatnonzero(mouth.any(axis=1))
    dark_rows = sum(1 for y in mouth_rows if (lum[y][mouth[y]] < 0.20).any())
    out["mouth_open"] = _score(dark_rows / len(mouth_rows), 0.35, 0.10)

    probe = masks["glasses"] & ~(masks["eye_left"] | masks["eye_right"] | masks["brow_left"] | masks["brow_right"])
    if not probe.any():
        raise InputError("classify_attributes: glasses zone is covered by eye and brow masks")
    out["has_glasses"] = _score(float((lum[probe] < 0.25).mean()), 0.30, 0.10)

    out["brows_thick"] = _score((_rows(masks["brow_left"]) + _rows(masks["brow_right"])) / (2.0 * s), 0.0235, 0.008)

    eyes = masks["eye_left"] | masks["eye_right"]
    out["eyes_open"] = _score(float((lum[eyes] > 0.85).mean()), 0.15, 0.08)

    cheeks = (masks["cheek_left"] | masks["cheek_right"]) & ~(
        masks["hair"] | masks["glasses"] | masks["eye_left"] | masks["eye_right"] | masks["nose"]
    )
    if not cheeks.any():
        raise InputError("classify_attributes: cheek zones fully covered by other regions")
    out["rosy_cheeks"] = _score(float(red_excess[cheeks].mean()), 0.34, 0.06)

    boundary = masks["face_boundary"]
    ys = np.flatnonzero(boundary.any(axis=1))
    xs = np.flatnonzero(boundary.any(axis=0))
    out["wide_face"] = _score((xs.max() - xs.min() + 1) / (ys.max() - ys.min() + 1), 0.795, 0.05)

    neck_below = masks["neck"].copy()
    neck_below[: ys.max() + 1] = False
    if not neck_below.any():
        raise InputError("classify_attributes: no neck pixels below the face outline")
    skin_l = float(lum[neck_below].mean())
    out["skin_tan"] = _score(1.0 - skin_l, 0.41, 0.10)

    nose = masks["nose"] & ~(masks["cheek_left"] | masks["cheek_right"])
    nose_rows = np.flatnonzero(nose.any(axis=1))
    lip_top = int(np.flatnonzero(masks["lip_upper"].any(axis=1)).min())
    width = 0
    for y in nose_rows:
        if y > lip_top - 2:
            break
        width = max(width, int((lum[y][nose[y]] < 0.8 * skin_l).sum()))
    out["big_nose"] = _score(width / s, 0.0625, 0.014)

    return out
