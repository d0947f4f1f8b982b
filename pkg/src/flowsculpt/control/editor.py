"""Structure-to-detail edit control.

An edit inverts the source image to noise under the source prompt while
recording attention values, then denoises under the target prompt in two
stages: the first T backward steps fuse latents against the straight-line
source path inside the edit mask (structuring), the remaining steps
inject the recorded source values outside the mask (detailing).  The
ablation strategies are windowing special cases of the same loop.
"""

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..dit.hooks import StepKind, ValueCache, ValueHook, mask_fuse
from ..dit.model import VelocityTransformer
from ..errors import CacheMissError, InputError, ShapeError
from ..flow.solver import LatentState, SourcePath, TimeGrid, interpolate, rf_solver_step
from ..validation import check_choice, check_finite

STRATEGIES = ("s2d", "latent_only", "value_only", "none")
MASK_SOURCES = ("pasl", "file", "manual")
MASK_MODES = ("continuous", "binarized")


@dataclass(frozen=True)
class EditConfig:
    """Knobs of one edit run.

    n_steps is the time-grid resolution N, t_structure the stage-shift
    step count T.  The windows derive from the strategy: s2d takes both
    stages, latent_only keeps the structuring window and leaves the rest
    plain, value_only drops structuring and injects over {N-T..1}.  At
    T=N and T=0 the ablation strategies coincide with s2d exactly.
    """

    n_steps: int = 30
    t_structure: int = 3
    strategy: str = "s2d"
    mask_source: str = "manual"
    mask_mode: str = "continuous"
    invert_prompt: str = "source"
    seed: int = 0

    def __post_init__(self):
        if self.n_steps < 1:
            raise InputError(f"EditConfig: n_steps must be >= 1, got {self.n_steps}")
        if not 0 <= self.t_structure <= self.n_steps:
            raise InputError(
                f"EditConfig: t_structure={self.t_structure} outside [0, {self.n_steps}]"
            )
        check_choice(self.strategy, "EditConfig.strategy", STRATEGIES)
        check_choice(self.mask_source, "EditConfig.mask_source", MASK_SOURCES)
        check_choice(self.mask_mode, "EditConfig.mask_mode", MASK_MODES)
        check_choice(self.invert_prompt, "EditConfig.invert_prompt", ("source", "target"))

    @property
    def latent_steps(self) -> range:
        """Backward steps with latent fusion: {N, ..., N-T+1}."""
        if self.strategy not in ("s2d", "latent_only"):
            return range(0)
        return range(self.n_steps, self.n_steps - self.t_structure, -1)

    @property
    def value_steps(self) -> range:
        """Backward steps with value injection: {N-T, ..., 1}."""
        if self.strategy not in ("s2d", "value_only"):
            return range(0)
        return range(self.n_steps - self.t_structure, 0, -1)

    @property
    def record_from(self) -> Optional[int]:
        """Inversion recording bound; None when no step injects values."""
        if len(self.value_steps) == 0:
            return None
        return self.n_steps - self.t_structure


@dataclass
class EditSession:
    """Everything one edit needs after inversion: the source path, the
    recorded values, and the latent-grid mask."""

    image: np.ndarray
    source_prompt: str
    target_prompt: str
    config: EditConfig
    path: SourcePath
    cache: ValueCache
    grid: TimeGrid
    token_hw: tuple
    mask: Optional[np.ndarray] = None
    mask_stats: dict = field(default_factory=dict)

    @property
    def n_tokens(self) -> int:
        return self.token_hw[0] * self.token_hw[1]


def block_resize(mask: np.ndarray, out_hw: tuple) -> np.ndarray:
    """Integer block resize of a 2-d map: mean when shrinking, repeat
    when growing.  Factors must divide evenly."""
    mask = np.asarray(mask, dtype=np.float64)
    if mask.ndim != 2:
        raise ShapeError(f"block_resize: expected a 2-d mask, got shape {mask.shape}")
    (h, w), (oh, ow) = mask.shape, out_hw
    if h == oh and w == ow:
        return mask.copy()
    if h % oh == 0 and w % ow == 0:
        fh, fw = h // oh, w // ow
        return mask.reshape(oh, fh, ow, fw).mean(axis=(1, 3))
    if oh % h == 0 and ow % w == 0:
        return np.repeat(np.repeat(mask, oh // h, axis=0), ow // w, axis=1)
    raise ShapeError(f"block_resize: {h}x{w} not an integer multiple of {oh}x{ow}")


def prepare_mask(session: EditSession, source=None, prompt: Optional[str] = None) -> np.ndarray:
    """Resolve the edit mask onto the token grid and store it.

    mask_source selects the provider: "pasl" asks a locator for the
    target-prompt region on the source image, "file" reads a saved mask
    (.pgm or .fstn), "manual" takes an array at image or grid resolution.
    The result is a flat [L] map in [0, 1], binarized at 0.5 when the
    config says so.
    """
    cfg = session.config
    gh, gw = session.token_hw
    if cfg.mask_source == "pasl":
        if source is None or not hasattr(source, "predict_mask"):
            raise InputError("prepare_mask: mask_source 'pasl' needs a locator")
        m = source.predict_mask(session.image, prompt or session.target_prompt)
    elif cfg.mask_source == "file":
        if source is None:
            raise InputError("prepare_mask: mask_source 'file' needs a path")
        path = Path(source)
        if path.suffix == ".fstn":
            from ..tensor.io import load_tensor

            m = load_tensor(path)
        else:
            from ..synth.dataset import read_pgm

            m = read_pgm(path).astype(np.float64)
    else:
        if source is None:
            raise InputError("prepare_mask: mask_source 'manual' needs an array")
        m = np.asarray(source, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    if m.ndim == 1 and m.size == gh * gw:
        m = m.reshape(gh, gw)
    check_finite(m, "prepare_mask: mask")
    if m.size and (m.min() < 0.0 or m.max() > 1.0):
        raise InputError("prepare_mask: mask values must lie in [0, 1]")
    m = block_resize(m, (gh, gw))
    if cfg.mask_mode == "binarized":
        m = (m >= 0.5).astype(np.float64)
    flat = m.reshape(-1)
    session.mask = flat
    session.mask_stats = {
        "source": cfg.mask_source,
        "mode": cfg.mask_mode,
        "mean": float(flat.mean()),
        "min": float(flat.min()),
        "max": float(flat.max()),
        "active_frac": float(np.count_nonzero(flat >= 0.5)) / flat.size,
    }
    return flat


def make_session(
    image: np.ndarray,
    source_prompt: str,
    target_prompt: str,
    config: EditConfig,
    model: VelocityTransformer,
    mask=None,
    locator=None,
    record_all: bool = False,
) -> EditSession:
    """Patchify, invert with value recording, and resolve the mask.

    record_all forces the full cache regardless of the config's windows
    so one inversion can back several strategy/T variants.
    """
    image = np.asarray(image, dtype=np.float32)
    cfg_m = model.config
    if image.ndim != 3 or image.shape[0] != cfg_m.image_channels:
        raise ShapeError(f"make_session: expected [{cfg_m.image_channels}, H, W] image")
    h, w = image.shape[1:]
    grid = TimeGrid.uniform(config.n_steps)
    z0 = model.patchify(image)
    invert_text = source_prompt if config.invert_prompt == "source" else target_prompt
    record_from = config.n_steps if record_all else config.record_from
    from ..flow.solver import invert

    path, cache = invert(z0, model.text_embed(invert_text), grid, model, record_from=record_from)
    session = EditSession(
        image=image,
        source_prompt=source_prompt,
        target_prompt=target_prompt,
        config=config,
        path=path,
        cache=cache,
        grid=grid,
        token_hw=(h // cfg_m.patch, w // cfg_m.patch),
    )
    if config.strategy != "none":
        prepare_mask(session, source=mask if config.mask_source != "pasl" else locator)
    return session


def check_cache_coverage(session: EditSession, model: VelocityTransformer, config=None) -> None:
    """Raise CacheMissError naming the first missing detailing entry."""
    cfg = config or session.config
    for j in cfg.value_steps:
        for block in model.config.hooked_blocks:
            for kind in StepKind.ALL:
                if not session.cache.has((j, kind), block):
                    raise CacheMissError(
                        f"detailing step {j} needs ({j}, {kind}) for block {block}; "
                        "inversion did not record it"
                    )


def _require_mask(session: EditSession) -> np.ndarray:
    if session.mask is None:
        raise InputError("edit step: no mask prepared on the session")
    return session.mask


def structuring_step(
    session: EditSession,
    i: int,
    model: VelocityTransformer,
    state: LatentState,
    config: Optional[EditConfig] = None,
):
    """One backward solver step followed by masked latent fusion.

    The source reference at the landing time is the straight-line
    interpolation between z0 and zN; outside the mask the fused latent
    equals it exactly.
    """
    cfg = config or session.config
    if i not in cfg.latent_steps:
        raise InputError(f"structuring_step: step {i} outside window {list(cfg.latent_steps)}")
    mask = _require_mask(session)
    h = session.grid.t(i - 1) - session.grid.t(i)
    stepped, probe = rf_solver_step(state, h, model)
    ref = interpolate(session.path.z0, session.path.zN, session.grid.t(i - 1))
    fused = mask_fuse(stepped.z, ref.astype(stepped.z.dtype), mask)
    return LatentState(fused, stepped.t, stepped.prompt), probe


def detailing_step(
    session: EditSession,
    j: int,
    model: VelocityTransformer,
    state: LatentState,
    config: Optional[EditConfig] = None,
):
    """One backward solver step with recorded source values injected.

    Both velocity evaluations use their matching cache slots: (j, main)
    and (j, midpoint).  Text value tokens pass through untouched."""
    cfg = config or session.config
    if j not in cfg.value_steps:
        raise InputError(f"detailing_step: step {j} outside window {list(cfg.value_steps)}")
    mask = _require_mask(session)
    hooks = tuple(
        ValueHook(mode="inject", store=session.cache, step_key=(j, kind), mask=mask)
        for kind in StepKind.ALL
    )
    h = session.grid.t(j - 1) - session.grid.t(j)
    return rf_solver_step(state, h, model, hooks=hooks)


def run_edit(session: EditSession, model: VelocityTransformer, config: Optional[EditConfig] = None):
    """Denoise the inverted latent under the target prompt through the
    configured windows; returns (edited image, report dict)."""
    cfg = config or session.config
    if cfg.strategy != "none":
        _require_mask(session)
    check_cache_coverage(session, model, cfg)
    n = cfg.n_steps
    if session.grid.n_steps != n:
        raise InputError("run_edit: config n_steps does not match the session grid")
    tokens = model.text_embed(session.target_prompt)
    state = LatentState(session.path.zN.copy(), session.grid.t(n), tokens)
    step_log = []
    for j in range(n, 0, -1):
        if j in cfg.latent_steps:
            state, _ = structuring_step(session, j, model, state, cfg)
            stage = "structuring"
        elif j in cfg.value_steps:
            state, _ = detailing_step(session, j, model, state, cfg)
            stage = "detailing"
        else:
            h = session.grid.t(j - 1) - session.grid.t(j)
            state, _ = rf_solver_step(state, h, model)
            stage = "plain"
        step_log.append(
            {
                "step": j,
                "t": session.grid.t(j - 1),
                "stage": stage,
                "latent_norm": float(np.linalg.norm(state.z)),
            }
        )
    h_img, w_img = session.image.shape[1:]
    raw = model.unpatchify(state.z, (h_img, w_img))
    edited = np.clip(raw, 0.0, 1.0)
    report = {
        "config": asdict(cfg),
        "windows": {
            "latent_steps": list(cfg.latent_steps),
            "value_steps": list(cfg.value_steps),
        },
        "source_prompt": session.source_prompt,
        "target_prompt": session.target_prompt,
        "mask": session.mask_stats or None,
        "output_range": [float(raw.min()), float(raw.max())],
        "steps": step_log,
    }
    return edited, report


def edit(
    image: np.ndarray,
    source_prompt: str,
    target_prompt: str,
    config: EditConfig,
    model: VelocityTransformer,
    mask=None,
    locator=None,
):
    """Full pipeline: invert, locate, structure, detail, reproject.

    Returns (edited image in [0,1], report, session)."""
    session = make_session(
        image, source_prompt, target_prompt, config, model, mask=mask, locator=locator
    )
    edited, report = run_edit(session, model)
    return edited, report, session
