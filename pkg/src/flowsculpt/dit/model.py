"""A frozen toy transformer velocity model over [text, image] tokens.

The model is never trained: weights are seeded random draws, fixed at
construction. It exists to give the solver a smooth, genuinely
time- and prompt-dependent velocity field, and to expose the
attention-value hook points the edit controller needs in its last
``m`` blocks. Everything runs forward-only on plain numpy in float32.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from ..errors import DataError, InputError, ShapeError
from ..tensor.io import load_tensor, save_tensor
from ..tensor.rng import Rng
from .hooks import ValueHook

_LN_EPS = 1e-5


@dataclass(frozen=True)
class DiTConfig:
    depth: int = 6
    width: int = 64
    heads: int = 4
    patch: int = 4
    m: int = 2
    text_len: int = 8
    seed: int = 0
    image_channels: int = 3
    time_features: int = 32
    mlp_ratio: int = 2

    def __post_init__(self):
        if self.width % self.heads != 0:
            raise InputError(f"DiTConfig: width {self.width} not divisible by heads {self.heads}")
        if not 0 <= self.m <= self.depth:
            raise InputError(f"DiTConfig: m={self.m} must lie in [0, depth={self.depth}]")
        if self.patch < 1 or self.text_len < 1 or self.depth < 1:
            raise InputError("DiTConfig: patch, text_len, depth must be positive")
        if self.time_features % 2 != 0:
            raise InputError("DiTConfig: time_features must be even (sin/cos pairs)")

    @property
    def hooked_blocks(self) -> range:
        return range(self.depth - self.m, self.depth)


@dataclass(frozen=True)
class PromptTokens:
    """Deterministic embedding of a prompt string."""

    tokens: np.ndarray  # [text_len, width] float32
    prompt_id: str
    text: str


def _hashed_unit_vector(label: str, seed: int, width: int) -> np.ndarray:
    digest = hashlib.blake2b(f"{seed}:{label}".encode("utf-8"), digest_size=8)
    sub = Rng(int.from_bytes(digest.digest(), "little"))
    vec = sub.normal((width,))
    return (vec / np.linalg.norm(vec)).astype(np.float32)


def text_embed(prompt: str, seed: int, width: int = 64, text_len: int = 8) -> PromptTokens:
    """Whitespace-tokenize and hash each token to a seeded unit vector.

    Stands in for a frozen pretrained text encoder: same string and
    seed always embed identically; unused positions carry a fixed pad
    vector.
    """
    if not isinstance(prompt, str) or not prompt.strip():
        raise InputError("text_embed: prompt must be a non-empty string")
    words = prompt.split()[:text_len]
    rows = [_hashed_unit_vector(f"tok:{w}", seed, width) for w in words]
    pad = _hashed_unit_vector("pad:", seed, width)
    while len(rows) < text_len:
        rows.append(pad)
    pid = hashlib.blake2b(f"{seed}:{prompt}".encode("utf-8"), digest_size=8).hexdigest()
    return PromptTokens(tokens=np.stack(rows), prompt_id=pid, text=prompt)


def _layer_norm(x: np.ndarray, g: np.ndarray, b: np.ndarray) -> np.ndarray:
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + _LN_EPS) * g + b


def _softmax_rows(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _silu(x: np.ndarray) -> np.ndarray:
    return x / (1.0 + np.exp(-x))


class VelocityTransformer:
    """Frozen velocity model; implements the VelocityField protocol.

    Token layout per forward pass: ``[text_len prompt tokens | L image
    tokens]`` with a sinusoidal time embedding added to every token.
    Pre-norm blocks of joint self-attention and a SiLU MLP; the image
    slice of the final hidden state is projected to the velocity.
    """

    def __init__(self, config: DiTConfig = DiTConfig()):
        self.config = config
        self.weights: Dict[str, np.ndarray] = {}
        self._build(Rng(config.seed))
        # Frequencies for the time features: 16 sin/cos pairs spread
        # geometrically over [pi/2, 4*pi]. Kept modest so coarse grids
        # still resolve the field's time variation (the solver-order
        # and round-trip tests depend on that).
        pairs = config.time_features // 2
        self._freqs = (np.pi / 2.0) * (8.0 ** (np.arange(pairs) / max(pairs - 1, 1)))

    # -- construction ---------------------------------------------------------

    def _build(self, rng: Rng) -> None:
        cfg = self.config
        c = cfg.width
        p_dim = cfg.patch * cfg.patch * cfg.image_channels
        hidden = cfg.mlp_ratio * c

        def w(name: str, shape, scale: float) -> None:
            self.weights[name] = rng.spawn(name).normal(shape, dtype=np.float64).astype(np.float32) * np.float32(scale)

        # Patch projector: orthonormal columns so unpatchify is its
        # exact transpose.
        base = rng.spawn("patch.w").normal((c, p_dim))
        q, _ = np.linalg.qr(base)
        self.weights["patch.w"] = q.astype(np.float32)
        self.weights["patch.b"] = np.zeros(c, dtype=np.float32)

        w("time.w", (cfg.time_features, c), 0.3 / np.sqrt(cfg.time_features))
        self.weights["time.b"] = np.zeros(c, dtype=np.float32)

        for l in range(cfg.depth):
            for ln in (f"blocks.{l}.ln1", f"blocks.{l}.ln2"):
                self.weights[f"{ln}.g"] = np.ones(c, dtype=np.float32)
                self.weights[f"{ln}.b"] = np.zeros(c, dtype=np.float32)
            w(f"blocks.{l}.attn.wq", (c, c), 1.0 / np.sqrt(c))
            w(f"blocks.{l}.attn.wk", (c, c), 1.0 / np.sqrt(c))
            w(f"blocks.{l}.attn.wv", (c, c), 1.0 / np.sqrt(c))
            w(f"blocks.{l}.attn.wo", (c, c), 0.3 / np.sqrt(c))
            w(f"blocks.{l}.mlp.w1", (c, hidden), 1.0 / np.sqrt(c))
            self.weights[f"blocks.{l}.mlp.b1"] = np.zeros(hidden, dtype=np.float32)
            w(f"blocks.{l}.mlp.w2", (hidden, c), 0.3 / np.sqrt(hidden))
            self.weights[f"blocks.{l}.mlp.b2"] = np.zeros(c, dtype=np.float32)

        self.weights["final.ln.g"] = np.ones(c, dtype=np.float32)
        self.weights["final.ln.b"] = np.zeros(c, dtype=np.float32)
        w("final.w", (c, c), 0.5 / np.sqrt(c))
        self.weights["final.b"] = np.zeros(c, dtype=np.float32)

    # -- patch projection -----------------------------------------------------

    def patchify(self, image: np.ndarray) -> np.ndarray:
        """[C_img, H, W] image -> [L, C] tokens, L = (H/p)*(W/p)."""
        cfg = self.config
        image = np.asarray(image, dtype=np.float32)
        if image.ndim != 3 or image.shape[0] != cfg.image_channels:
            raise ShapeError(
                f"patchify: expected [{cfg.image_channels}, H, W], got {image.shape}"
            )
        _, h, w_ = image.shape
        p = cfg.patch
        if h % p or w_ % p:
            raise ShapeError(f"patchify: {h}x{w_} not divisible by patch {p}")
        gh, gw = h // p, w_ // p
        patches = image.reshape(cfg.image_channels, gh, p, gw, p)
        patches = patches.transpose(1, 3, 0, 2, 4).reshape(gh * gw, -1)  # [L, C_img*p*p]
        return patches @ self.weights["patch.w"].T + self.weights["patch.b"]

    def unpatchify(self, tokens: np.ndarray, size: tuple) -> np.ndarray:
        """Inverse of patchify for a given (H, W); exact because the
        patch projector has orthonormal columns."""
        cfg = self.config
        tokens = np.asarray(tokens, dtype=np.float32)
        h, w_ = size
        p = cfg.patch
        gh, gw = h // p, w_ // p
        if h % p or w_ % p or tokens.shape != (gh * gw, cfg.width):
            raise ShapeError(f"unpatchify: tokens {tokens.shape} do not tile {h}x{w_}")
        patches = (tokens - self.weights["patch.b"]) @ self.weights["patch.w"]
        patches = patches.reshape(gh, gw, cfg.image_channels, p, p)
        return patches.transpose(2, 0, 3, 1, 4).reshape(cfg.image_channels, h, w_)

    # -- forward --------------------------------------------------------------

    def text_embed(self, prompt: str) -> PromptTokens:
        cfg = self.config
        return text_embed(prompt, seed=cfg.seed, width=cfg.width, text_len=cfg.text_len)

    def _time_vector(self, t: float) -> np.ndarray:
        angles = self._freqs * t
        feats = np.concatenate([np.sin(angles), np.cos(angles)])
        return (feats @ self.weights["time.w"] + self.weights["time.b"]).astype(np.float32)

    def forward(
        self,
        z: np.ndarray,
        t: float,
        prompt: PromptTokens,
        hook: Optional[ValueHook] = None,
        capture: Optional[dict] = None,
    ) -> np.ndarray:
        """Velocity for image tokens ``z`` at time ``t`` under ``prompt``.

        ``capture``, when a dict, receives a copy of every block's input
        activation under key ``block{l}.in`` (used by tests to show
        injection leaves upstream blocks untouched).
        """
        cfg = self.config
        z = np.asarray(z, dtype=np.float32)
        if z.ndim != 2 or z.shape[1] != cfg.width:
            raise ShapeError(f"forward: z must be [L, {cfg.width}], got {z.shape}")
        if not isinstance(prompt, PromptTokens):
            raise InputError("forward: prompt must be PromptTokens (see text_embed)")
        if prompt.tokens.shape != (cfg.text_len, cfg.width):
            raise ShapeError(
                f"forward: prompt tokens {prompt.tokens.shape} vs config "
                f"({cfg.text_len}, {cfg.width})"
            )
        if not 0.0 - 1e-9 <= t <= 1.0 + 1e-9:
            raise InputError(f"forward: t={t} outside [0, 1]")

        s = cfg.text_len
        x = np.concatenate([prompt.tokens, z], axis=0) + self._time_vector(float(t))
        heads, dh = cfg.heads, cfg.width // cfg.heads
        hooked = cfg.hooked_blocks

        for l in range(cfg.depth):
            if capture is not None:
                capture[f"block{l}.in"] = x.copy()
            wts = self.weights
            h = _layer_norm(x, wts[f"blocks.{l}.ln1.g"], wts[f"blocks.{l}.ln1.b"])
            q = h @ wts[f"blocks.{l}.attn.wq"]
            k = h @ wts[f"blocks.{l}.attn.wk"]
            v_full = h @ wts[f"blocks.{l}.attn.wv"]
            if hook is not None and l in hooked:
                v_full = hook.apply(l, v_full, s)
            n_tok = x.shape[0]
            qh = q.reshape(n_tok, heads, dh)
            kh = k.reshape(n_tok, heads, dh)
            vh = v_full.reshape(n_tok, heads, dh)
            att_out = np.empty_like(qh)
            for head in range(heads):
                scores = (qh[:, head] @ kh[:, head].T) / np.float32(np.sqrt(dh))
                att_out[:, head] = _softmax_rows(scores) @ vh[:, head]
            x = x + att_out.reshape(n_tok, cfg.width) @ wts[f"blocks.{l}.attn.wo"]
            h2 = _layer_norm(x, wts[f"blocks.{l}.ln2.g"], wts[f"blocks.{l}.ln2.b"])
            mid = _silu(h2 @ wts[f"blocks.{l}.mlp.w1"] + wts[f"blocks.{l}.mlp.b1"])
            x = x + mid @ wts[f"blocks.{l}.mlp.w2"] + wts[f"blocks.{l}.mlp.b2"]

        img = _layer_norm(x[s:], self.weights["final.ln.g"], self.weights["final.ln.b"])
        return img @ self.weights["final.w"] + self.weights["final.b"]

    # VelocityField protocol.
    def evaluate(self, z, t, prompt=None, hook=None):
        return self.forward(z, t, prompt, hook=hook)

    # -- serialization --------------------------------------------------------

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        names = sorted(self.weights)
        for name in names:
            save_tensor(directory / f"{name}.fstn", self.weights[name])
        manifest = {"config": asdict(self.config), "weights": names}
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))

    @classmethod
    def load(cls, directory) -> "VelocityTransformer":
        directory = Path(directory)
        manifest_path = directory / "manifest.json"
        if not manifest_path.is_file():
            raise DataError(f"{directory}: missing manifest.json")
        manifest = json.loads(manifest_path.read_text())
        model = cls(DiTConfig(**manifest["config"]))
        for name in manifest["weights"]:
            loaded = load_tensor(directory / f"{name}.fstn")
            if name not in model.weights or loaded.shape != model.weights[name].shape:
                raise DataError(f"{directory}: unexpected weight {name} {loaded.shape}")
            model.weights[name] = loaded.astype(np.float32)
        return model
