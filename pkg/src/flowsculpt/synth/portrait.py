"""Procedural portrait renderer with exact region masks.

Each portrait is a deterministic function of its seed: 12 boolean
attributes are flipped first, then geometry and colors are drawn from
attribute-conditioned uniform ranges whose bounds keep every attribute
analytically classifiable from pixels with a hard margin (the metrics
module's classifier relies on those margins; see its formulas).

Regions come in two kinds. Zone regions (hair, forehead, glasses,
eyes, nose, cheeks, mouth, ears, neck, face outline) are sized so that
area-pooling to an 8x8 feature grid keeps them non-empty for any
placement jitter. Stroke regions (brows, lips, chin) are genuinely
thin; at feature resolution their pooled masks binarize to empty and a
locator is expected to answer "nothing here" for them. Masks are
geometric zones: a later paint layer (hair over forehead, say) does
not erase the zone underneath it, and zones of different parts may
overlap. Only the left/right pairs are guaranteed disjoint.

The layout is anchored in relative units and rasterized at integer
pixels; attribute margins are guaranteed for size >= 48 (integer
rounding gets too coarse below that; the dataset default is 64).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict

import numpy as np

from ..errors import InputError
from ..tensor.rng import Rng

REGION_NAMES = (
    "hair",
    "forehead",
    "brow_left",
    "brow_right",
    "eye_left",
    "eye_right",
    "glasses",
    "nose",
    "cheek_left",
    "cheek_right",
    "lip_upper",
    "lip_lower",
    "mouth",
    "chin",
    "ear_left",
    "ear_right",
    "neck",
    "face_boundary",
)

ATTRIBUTE_NAMES = (
    "hair_dark",
    "hair_long",
    "lips_red",
    "thick_lips",
    "mouth_open",
    "has_glasses",
    "brows_thick",
    "eyes_open",
    "rosy_cheeks",
    "big_nose",
    "wide_face",
    "skin_tan",
)

REGION_KEYWORDS = {
    "hair": "hair",
    "forehead": "forehead",
    "brow_left": "left eyebrow",
    "brow_right": "right eyebrow",
    "eye_left": "left eye",
    "eye_right": "right eye",
    "glasses": "glasses",
    "nose": "nose",
    "cheek_left": "left cheek",
    "cheek_right": "right cheek",
    "lip_upper": "upper lip",
    "lip_lower": "lower lip",
    "mouth": "mouth",
    "chin": "chin",
    "ear_left": "left ear",
    "ear_right": "right ear",
    "neck": "neck",
    "face_boundary": "face outline",
}


@dataclass
class SyntheticPortrait:
    image: np.ndarray  # [3, S, S] float32 in [0, 1]
    regions: Dict[str, np.ndarray]  # name -> bool [S, S]
    attributes: Dict[str, bool]
    layout: Dict[str, int]
    seed: int

    @property
    def size(self) -> int:
        return self.image.shape[1]


def _ellipse(s: int, cx: float, cy: float, rx: float, ry: float) -> np.ndarray:
    y, x = np.ogrid[:s, :s]
    return ((x - cx) / rx) ** 2 + ((y - cy) / ry) ** 2 <= 1.0


def _rect(s: int, x0: int, x1: int, y0: int, y1: int) -> np.ndarray:
    """Inclusive integer bounds, clipped to the canvas."""
    m = np.zeros((s, s), dtype=bool)
    x0, x1 = max(x0, 0), min(x1, s - 1)
    y0, y1 = max(y0, 0), min(y1, s - 1)
    if x0 <= x1 and y0 <= y1:
        m[y0 : y1 + 1, x0 : x1 + 1] = True
    return m


def _paint(img: np.ndarray, mask: np.ndarray, color) -> None:
    img[:, mask] = np.asarray(color, dtype=np.float32)[:, None]


def _jit(rng: Rng, base, spread) -> np.ndarray:
    base = np.asarray(base, dtype=np.float64)
    spread = np.broadcast_to(np.asarray(spread, dtype=np.float64), base.shape)
    return np.clip(base + rng.uniform(-1.0, 1.0, base.shape) * spread, 0.0, 1.0)


def render_portrait(seed: int, size: int = 64) -> SyntheticPortrait:
    """Render one portrait; identical (seed, size) gives identical output."""
    if size < 32 or size % 4:
        raise InputError(f"render_portrait: size must be >= 32 and divisible by 4, got {size}")
    s = size
    rng = Rng(int(seed))
    flag_rng = rng.spawn("flags")
    attrs = {name: flag_rng.spawn(name).coin() for name in ATTRIBUTE_NAMES}
    geom = rng.spawn("geom")
    col = rng.spawn("color")

    def r(rel: float) -> int:
        return int(round(rel * s))

    # -- layout (integer pixel anchors) ---------------------------------------
    cx = r(0.5) + int(geom.integers(-1, 2))
    cy = r(0.5) + int(geom.integers(-1, 2))
    b = r(float(geom.uniform(0.40, 0.42)))
    ratio = float(geom.uniform(0.86, 0.94)) if attrs["wide_face"] else float(geom.uniform(0.68, 0.75))
    a = int(round(ratio * b))
    face_top, face_bot = cy - b, cy + b

    eye_half = max(4, r(0.08))  # 11x11 zones at s=64
    edx = max(eye_half + 3, int(round(0.50 * a)))
    eye_y = cy + r(0.03)
    brow_y = eye_y - eye_half - r(0.045)
    h_b = 2 if attrs["brows_thick"] else 1
    bw = r(0.09)

    nose_zone_top = eye_y + eye_half + r(0.045)
    nose_w = int(geom.choice([5, 7])) if attrs["big_nose"] else 3

    mouth_y = cy + int(round(0.72 * b))
    lip_hw = r(0.095)
    h_u = 2 if attrs["thick_lips"] else 1
    h_l = h_u + (1 if attrs["thick_lips"] else 0)
    gap = 4 if attrs["mouth_open"] else 0
    zone_h = max(3, r(0.047))

    cheek_cx = max(10, min(int(round(0.55 * a)), a - 8))
    cheek_y = eye_y + 6

    # -- colors (uniform jitter with hard bounds) -----------------------------
    skin = _jit(col.spawn("skin"), (0.62, 0.45, 0.30) if attrs["skin_tan"] else (0.87, 0.72, 0.60), 0.03)
    bg = _jit(col.spawn("bg"), (0.55, 0.62, 0.72), 0.02)
    hair_c = _jit(
        col.spawn("hair"),
        (0.08, 0.06, 0.05) if attrs["hair_dark"] else (0.78, 0.62, 0.35),
        (0.02, 0.01, 0.02) if attrs["hair_dark"] else 0.02,
    )
    lip_c = _jit(col.spawn("lip"), (0.80, 0.12, 0.15) if attrs["lips_red"] else (0.72, 0.42, 0.40), 0.03)
    blush = _jit(col.spawn("blush"), (0.90, 0.45, 0.50), 0.02)
    brow_c = _jit(col.spawn("brow"), (0.14, 0.10, 0.08), 0.02)
    sclera = _jit(col.spawn("sclera"), (0.95, 0.95, 0.96), 0.01)
    iris = _jit(col.spawn("iris"), (0.10, 0.15, 0.30), 0.03)
    rim_c = _jit(col.spawn("rim"), (0.06, 0.06, 0.09), 0.02)
    interior_c = _jit(col.spawn("mouth"), (0.08, 0.04, 0.05), 0.02)
    dark_line = np.array((0.10, 0.08, 0.08))

    # -- region masks (geometric zones) ---------------------------------------
    face = _ellipse(s, cx, cy, a, b)
    shrunk = _ellipse(s, cx, cy, max(a - 7, 2), max(b - 7, 2))
    regions: Dict[str, np.ndarray] = {}
    regions["face_boundary"] = face & ~shrunk

    fringe_bot = face_top + r(0.10)
    cap = _ellipse(s, cx, cy, int(round(1.12 * a)), int(round(1.08 * b))) & ~face
    cap &= _rect(s, 0, s - 1, 0, face_top + r(0.19))
    hair = (face & _rect(s, 0, s - 1, 0, fringe_bot)) | cap
    if attrs["hair_long"]:
        strand_bot = r(float(geom.uniform(0.80, 0.88))) - 1
        for side in (-1, 1):
            x_in = cx + side * (a + 1)
            x_out = cx + side * (a + 6)
            hair |= _rect(s, min(x_in, x_out), max(x_in, x_out), face_top + r(0.16), strand_bot)
    regions["hair"] = hair

    regions["forehead"] = face & _rect(s, 0, s - 1, fringe_bot + 2, brow_y - h_b - 1)

    regions["brow_left"] = _rect(s, cx - edx - bw, cx - edx + bw, brow_y - h_b + 1, brow_y)
    regions["brow_right"] = _rect(s, cx + edx - bw, cx + edx + bw, brow_y - h_b + 1, brow_y)

    regions["eye_left"] = _rect(s, cx - edx - eye_half, cx - edx + eye_half, eye_y - eye_half, eye_y + eye_half)
    regions["eye_right"] = _rect(s, cx + edx - eye_half, cx + edx + eye_half, eye_y - eye_half, eye_y + eye_half)

    glass_zone = _rect(
        s,
        cx - edx - eye_half - r(0.06),
        cx + edx + eye_half + r(0.06),
        eye_y - eye_half - 2,
        eye_y + eye_half + 2,
    ) & face
    regions["glasses"] = glass_zone

    regions["nose"] = _rect(s, cx - 5, cx + 5, nose_zone_top, nose_zone_top + 11)
    regions["cheek_left"] = _rect(s, cx - cheek_cx - 5, cx - cheek_cx + 5, cheek_y - 5, cheek_y + 5) & face
    regions["cheek_right"] = _rect(s, cx + cheek_cx - 5, cx + cheek_cx + 5, cheek_y - 5, cheek_y + 5) & face

    if gap:
        up_top = mouth_y - gap // 2 - h_u
        up_bot = mouth_y - gap // 2 - 1
        lo_top = mouth_y + gap - gap // 2
        interior = _rect(s, cx - lip_hw, cx + lip_hw, mouth_y - gap // 2, mouth_y + gap - gap // 2 - 1)
    else:
        up_top, up_bot = mouth_y - h_u, mouth_y - 1
        lo_top = mouth_y + 1
        interior = _rect(s, cx - lip_hw, cx + lip_hw, mouth_y, mouth_y)
    lo_bot = lo_top + h_l - 1
    regions["lip_upper"] = _rect(s, cx - lip_hw, cx + lip_hw, up_top, up_bot)
    regions["lip_lower"] = _rect(s, cx - lip_hw, cx + lip_hw, lo_top, lo_bot)
    regions["mouth"] = _rect(s, cx - lip_hw - 1, cx + lip_hw + 1, mouth_y - zone_h, mouth_y + zone_h)

    regions["chin"] = face & _rect(s, 0, s - 1, lo_bot + 2, face_bot)

    ear_half = max(4, r(0.08))
    for name, side in (("ear_left", -1), ("ear_right", 1)):
        ecx = cx + side * (a + 1)
        regions[name] = _rect(s, ecx - ear_half, ecx + ear_half, cy - ear_half, cy + ear_half)

    neck_hw = r(0.115)
    regions["neck"] = _rect(s, cx - neck_hw, cx + neck_hw, face_bot - r(0.06), s - 1)

    # -- painting (back to front; hair last) ----------------------------------
    img = np.empty((3, s, s), dtype=np.float32)
    img[:] = np.asarray(bg, dtype=np.float32)[:, None, None]
    _paint(img, regions["neck"], skin)
    _paint(img, regions["ear_left"] | regions["ear_right"], skin)
    _paint(img, face, skin)
    _paint(img, regions["face_boundary"], skin * 0.92)
    if attrs["rosy_cheeks"]:
        _paint(img, regions["cheek_left"] | regions["cheek_right"], blush)
    nose_stroke = _rect(s, cx - nose_w // 2, cx + nose_w // 2, nose_zone_top + 1, up_top - 2)
    _paint(img, nose_stroke, skin * 0.72)
    _paint(img, _rect(s, cx - 1, cx + 1, up_top - 2, up_top - 2), dark_line)
    _paint(img, regions["brow_left"] | regions["brow_right"], brow_c)
    for ecx in (cx - edx, cx + edx):
        if attrs["eyes_open"]:
            _paint(img, _ellipse(s, ecx, eye_y, eye_half, eye_half - 1), sclera)
            _paint(img, _ellipse(s, ecx, eye_y, 2, 2), iris)
        else:
            _paint(img, _rect(s, ecx - eye_half, ecx + eye_half, eye_y, eye_y), dark_line)
    if attrs["has_glasses"]:
        for ecx in (cx - edx, cx + edx):
            frame = _rect(s, ecx - eye_half - 2, ecx + eye_half + 2, eye_y - eye_half - 2, eye_y + eye_half + 2)
            inner = _rect(s, ecx - eye_half + 1, ecx + eye_half - 1, eye_y - eye_half + 1, eye_y + eye_half - 1)
            _paint(img, frame & ~inner, rim_c)
        _paint(img, _rect(s, cx - edx + eye_half, cx + edx - eye_half, eye_y - 1, eye_y), rim_c)
        temple_band = _rect(s, 0, s - 1, eye_y - 1, eye_y)
        central = _rect(s, cx - edx - eye_half - 2, cx + edx + eye_half + 2, 0, s - 1)
        _paint(img, glass_zone & temple_band & ~central, rim_c)
    _paint(img, regions["lip_upper"] | regions["lip_lower"], lip_c)
    _paint(img, interior, interior_c if gap else dark_line)
    _paint(img, hair, hair_c)

    layout = {
        "cx": cx, "cy": cy, "a": a, "b": b, "eye_y": eye_y, "edx": edx,
        "eye_half": eye_half, "brow_y": brow_y, "mouth_y": mouth_y,
        "nose_w": nose_w, "nose_zone_top": nose_zone_top, "h_u": h_u,
        "h_l": h_l, "h_brow": h_b, "gap": gap, "zone_h": zone_h,
        "cheek_cx": cheek_cx, "cheek_y": cheek_y, "face_top": face_top,
        "face_bot": face_bot,
    }
    return SyntheticPortrait(image=img, regions=regions, attributes=attrs, layout=layout, seed=int(seed))
