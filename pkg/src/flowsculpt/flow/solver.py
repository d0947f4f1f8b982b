"""Rectified-flow integration: interpolation, Euler and second-order
steps, and the full inversion / denoising loops.

Orientation: a session puts the clean (data) latent at t=0 and the
noise-side latent at t=1, so inversion integrates forward 0 -> 1 and
denoising backward 1 -> 0. The training objective in `demo2d` uses the
opposite textbook labeling (noise at t=0); both meet in
:func:`interpolate`, which is purely endpoint-anchored: t=0 returns the
first argument, t=1 the second, whatever they mean to the caller.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, Sequence, Tuple, runtime_checkable

import numpy as np

from ..dit.hooks import StepKind, ValueCache, ValueHook
from ..errors import InputError, NumericError, ShapeError
from ..validation import check_rank

_T_SLACK = 1e-9  # float drift allowance when accumulating grid times


@runtime_checkable
class VelocityField(Protocol):
    """Anything that can evaluate dz/dt at (z, t) under a prompt."""

    def evaluate(self, z: np.ndarray, t: float, prompt=None, hook: Optional[ValueHook] = None) -> np.ndarray:
        ...


class FunctionField:
    """Adapter turning a plain ``f(z, t)`` callable into a VelocityField.

    Test fields and the 2-D demo have no prompts or hooks; this ignores
    both.
    """

    def __init__(self, fn: Callable[[np.ndarray, float], np.ndarray]):
        self._fn = fn

    def evaluate(self, z, t, prompt=None, hook=None):
        return np.asarray(self._fn(z, t))


@dataclass(frozen=True)
class TimeGrid:
    """Ascending time nodes t_0 = 0 < ... < t_N = 1."""

    nodes: np.ndarray
    schedule: str = "uniform"

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=np.float64)
        object.__setattr__(self, "nodes", nodes)
        if nodes.ndim != 1 or nodes.size < 2:
            raise InputError("TimeGrid: need at least two nodes")
        if nodes[0] != 0.0 or nodes[-1] != 1.0:
            raise InputError("TimeGrid: endpoints must be exactly 0 and 1")
        if not (np.diff(nodes) > 0).all():
            raise InputError("TimeGrid: nodes must be strictly increasing")

    @classmethod
    def uniform(cls, n: int) -> "TimeGrid":
        if n < 1:
            raise InputError(f"TimeGrid.uniform: need n >= 1, got {n}")
        nodes = np.arange(n + 1, dtype=np.float64) / n
        nodes[0], nodes[-1] = 0.0, 1.0
        return cls(nodes, schedule="uniform")

    @classmethod
    def custom(cls, nodes: Sequence[float]) -> "TimeGrid":
        return cls(np.asarray(nodes, dtype=np.float64), schedule="custom")

    @property
    def n_steps(self) -> int:
        return self.nodes.size - 1

    def t(self, i: int) -> float:
        return float(self.nodes[i])


@dataclass
class LatentState:
    """A latent with its time coordinate and conditioning prompt.

    ``prompt`` carries the full token object so step functions can feed
    the velocity model; ``prompt_id`` is the stable identifier derived
    from it.
    """

    z: np.ndarray
    t: float
    prompt: object = None

    def __post_init__(self):
        if not -_T_SLACK <= self.t <= 1.0 + _T_SLACK:
            raise InputError(f"LatentState: t={self.t} outside [0, 1]")
        self.t = min(max(self.t, 0.0), 1.0)

    @property
    def prompt_id(self) -> str:
        pid = getattr(self.prompt, "prompt_id", None)
        return pid if pid is not None else "unconditioned"


@dataclass(frozen=True)
class SourcePath:
    """Endpoints of one inversion: clean latent z0 and inverted zN."""

    z0: np.ndarray
    zN: np.ndarray

    def __post_init__(self):
        if self.z0.shape != self.zN.shape:
            raise ShapeError(f"SourcePath: z0 {self.z0.shape} vs zN {self.zN.shape}")
        if not (np.isfinite(self.z0).all() and np.isfinite(self.zN).all()):
            raise NumericError("SourcePath: non-finite endpoint latent")


@dataclass
class SolverProbe:
    """The two velocity evaluations of one second-order step."""

    t_main: float
    t_mid: float
    v_main: np.ndarray
    v_mid: np.ndarray


class StepController:
    """Per-step observer/override used by :func:`denoise`.

    ``step_hooks`` runs before the solver step and may supply value
    hooks for the step's (main, midpoint) velocity evaluations;
    ``after_step`` runs on the stepped state and may return a
    replacement latent (same dims) or None to keep it.
    """

    def step_hooks(self, step_index: int) -> Tuple[Optional[ValueHook], Optional[ValueHook]]:
        return (None, None)

    def after_step(self, step_index: int, state: LatentState) -> Optional[np.ndarray]:
        return None


def interpolate(z0: np.ndarray, z1: np.ndarray, t: float) -> np.ndarray:
    """Straight-line point t*z1 + (1-t)*z0.

    Endpoint-anchored: t=0 gives z0 exactly, t=1 gives z1 exactly.
    """
    if not 0.0 <= t <= 1.0:
        raise InputError(f"interpolate: t={t} outside [0, 1]")
    z0 = np.asarray(z0)
    z1 = np.asarray(z1)
    if z0.shape != z1.shape:
        raise ShapeError(f"interpolate: shapes {z0.shape} and {z1.shape} differ")
    if t == 0.0:
        return z0.copy()
    if t == 1.0:
        return z1.copy()
    return t * z1 + (1.0 - t) * z0


def _check_step(t: float, h: float) -> None:
    if not -_T_SLACK <= t + h <= 1.0 + _T_SLACK:
        raise InputError(f"step from t={t} by h={h} leaves [0, 1]")


def euler_step(state: LatentState, h: float, v: VelocityField) -> LatentState:
    """First-order update z' = z + h*v(z, t)."""
    _check_step(state.t, h)
    vel = v.evaluate(state.z, state.t, state.prompt)
    return LatentState(state.z + h * vel, state.t + h, state.prompt)


def rf_solver_step(
    state: LatentState,
    h: float,
    v: VelocityField,
    hooks: Tuple[Optional[ValueHook], Optional[ValueHook]] = (None, None),
) -> Tuple[LatentState, SolverProbe]:
    """Second-order update via a midpoint probe of the velocity.

    With dt = h/2:

        z_mid = z + dt*v(z, t)
        v1    = (v(z_mid, t+dt) - v(z, t)) / dt
        z'    = z + h*v(z, t) + (h^2/2)*v1

    The probe records both velocity evaluations; ``hooks`` attach one
    ValueHook to each (main first, midpoint second) for value recording
    or injection inside the model.
    """
    if h == 0.0:
        raise InputError("rf_solver_step: h must be nonzero")
    _check_step(state.t, h)
    dt = h / 2.0
    t = state.t
    v_main = v.evaluate(state.z, t, state.prompt, hook=hooks[0])
    z_mid = state.z + dt * v_main
    v_mid = v.evaluate(z_mid, t + dt, state.prompt, hook=hooks[1])
    v1 = (v_mid - v_main) / dt
    z_new = state.z + h * v_main + (h * h / 2.0) * v1
    probe = SolverProbe(t_main=t, t_mid=t + dt, v_main=v_main, v_mid=v_mid)
    return LatentState(z_new, t + h, state.prompt), probe


def invert(
    z0: np.ndarray,
    source_prompt,
    grid: TimeGrid,
    v: VelocityField,
    record_from: Optional[int] = None,
) -> Tuple[SourcePath, ValueCache]:
    """Integrate the flow forward t_0 -> t_N from a clean latent.

    Step i covers [t_i, t_{i+1}] and contributes cache keys
    (i, main) and (i+1, midpoint): key times coincide exactly with the
    evaluations a later backward step over the same interval performs.
    With ``record_from`` set, every key whose step index is <= it is
    recorded (that bound is N-T when T structuring steps need no
    detailing cache); a terminal evaluation at t_N supplies (N, main)
    when the bound reaches N. ``record_from=None`` records nothing.
    """
    z0 = np.asarray(z0)
    check_rank(z0, "invert: z0", (1, 2))
    if not np.isfinite(z0).all():
        raise NumericError("invert: non-finite input latent")
    cache = ValueCache()
    n = grid.n_steps
    if record_from is not None and not 0 <= record_from <= n:
        raise InputError(f"invert: record_from={record_from} outside [0, {n}]")

    def rec(step_index: int, kind: str) -> Optional[ValueHook]:
        if record_from is None or step_index > record_from:
            return None
        return ValueHook(mode="record", store=cache, step_key=(step_index, kind))

    state = LatentState(z0, grid.t(0), source_prompt)
    for i in range(n):
        h = grid.t(i + 1) - grid.t(i)
        hooks = (rec(i, StepKind.MAIN), rec(i + 1, StepKind.MIDPOINT))
        state, _ = rf_solver_step(state, h, v, hooks=hooks)
        if not np.isfinite(state.z).all():
            raise NumericError(f"invert: latent diverged at step {i}")
    terminal = rec(n, StepKind.MAIN)
    if terminal is not None:
        v.evaluate(state.z, state.t, source_prompt, hook=terminal)
    return SourcePath(z0=z0.copy(), zN=state.z), cache


def denoise(
    zN: np.ndarray,
    prompt,
    grid: TimeGrid,
    v: VelocityField,
    controller: Optional[StepController] = None,
) -> np.ndarray:
    """Integrate backward t_N -> t_0; the controller may inject value
    hooks before each step and replace the latent after it.

    Backward step j covers [t_{j-1}, t_j] and consumes hook slots
    (j, main) and (j, midpoint), matching the keys `invert` recorded
    for the same interval.
    """
    zN = np.asarray(zN)
    check_rank(zN, "denoise: zN", (1, 2))
    if not np.isfinite(zN).all():
        raise NumericError("denoise: non-finite input latent")
    n = grid.n_steps
    state = LatentState(zN, grid.t(n), prompt)
    for j in range(n, 0, -1):
        h = grid.t(j - 1) - grid.t(j)
        hooks = controller.step_hooks(j) if controller is not None else (None, None)
        state, _ = rf_solver_step(state, h, v, hooks=hooks)
        if controller is not None:
            replacement = controller.after_step(j, state)
            if replacement is not None:
                replacement = np.asarray(replacement)
                if replacement.shape != state.z.shape:
                    raise InputError(
                        f"denoise: controller returned shape {replacement.shape}, "
                        f"expected {state.z.shape}"
                    )
                state = LatentState(replacement, state.t, state.prompt)
        if not np.isfinite(state.z).all():
            raise NumericError(f"denoise: latent diverged at step {j}")
    return state.z
