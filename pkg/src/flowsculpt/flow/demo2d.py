"""Trainable 2-D rectified-flow demo.

A small MLP velocity field is regressed onto straight-line targets
between a noise distribution (standard normal at t=0) and a
two-Gaussian data distribution (t=1). This is the only place the flow
objective itself is trained; it verifies the loss, the optimizer, and
the solver end to end at desk scale. Everything runs in float64: the
problem is tiny and gradient checks stay tight.

Note the orientation here is the textbook training one (noise at t=0,
data at t=1); the editing pipeline runs sessions the other way around.
Both use the same endpoint-anchored :func:`..flow.solver.interpolate`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
from sklearn.base import BaseEstimator

from ..errors import InputError, NumericError
from ..tensor import AdamW, CosineSchedule, Rng, Tensor
from ..tensor import core as tc
from ..validation import as_float_array, check_shape
from .solver import FunctionField, LatentState, TimeGrid, rf_solver_step


def time_features(t: np.ndarray) -> np.ndarray:
    """Fixed feature lift of scalar times, shape [B] -> [B, 6]."""
    t = np.asarray(t, dtype=np.float64)
    return np.stack(
        [t, t * t, np.sin(np.pi * t), np.cos(np.pi * t), np.sin(2 * np.pi * t), np.cos(2 * np.pi * t)],
        axis=1,
    )


class Velocity2D:
    """Two-hidden-layer MLP v(z, t) on R^2, trained by rf_train_step.

    The final layer initializes to zero so the initial field is
    identically zero; ``set_constant`` turns the model into an exact
    constant field (used by the zero-loss sanity check).
    """

    def __init__(self, hidden: int = 64, seed: int = 0):
        rng = Rng(seed)
        h = hidden

        def p(name, shape, scale):
            return Tensor(rng.spawn(name).normal(shape, scale=scale), requires_grad=True)

        self.params: Dict[str, Tensor] = {
            "wz": p("wz", (2, h), 0.7),
            "wt": p("wt", (6, h), 0.7),
            "b1": Tensor(np.zeros(h), requires_grad=True),
            "w2": p("w2", (h, h), 1.0 / np.sqrt(h)),
            "b2": Tensor(np.zeros(h), requires_grad=True),
            "w3": Tensor(np.zeros((h, 2)), requires_grad=True),
            "b3": Tensor(np.zeros(2), requires_grad=True),
        }
        self.optimizer: Optional[AdamW] = None
        self.schedule: Optional[CosineSchedule] = None

    def set_constant(self, c) -> None:
        self.params["w3"].data[:] = 0.0
        self.params["b3"].data[:] = np.asarray(c, dtype=np.float64)

    def param_list(self):
        return list(self.params.values())

    def forward(self, z: Tensor, t: np.ndarray) -> Tensor:
        """z: Tensor [B,2]; t: array [B] of times; returns Tensor [B,2]."""
        feats = Tensor(time_features(t))
        p = self.params
        pre = tc.add(tc.matmul(z, p["wz"]), tc.linear(feats, p["wt"], p["b1"]))
        h1 = tc.mul(pre, tc.sigmoid(pre))  # SiLU
        pre2 = tc.linear(h1, p["w2"], p["b2"])
        h2 = tc.mul(pre2, tc.sigmoid(pre2))
        return tc.linear(h2, p["w3"], p["b3"])

    def evaluate_np(self, z: np.ndarray, t: float) -> np.ndarray:
        """Plain-array field for the ODE solvers (no tape)."""
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        with tc.no_grad():
            out = self.forward(Tensor(z), np.full(z.shape[0], float(t)))
        return out.data

    def as_field(self) -> FunctionField:
        return FunctionField(lambda z, t: self.evaluate_np(z, t))


def rf_train_step(model: Velocity2D, batch, rng: Rng) -> float:
    """One flow-matching update: mean ||(z1 - z0) - v(z_t, t)||^2.

    ``batch`` is (z0, z1) with z0 ~ noise, z1 ~ data, both [B, 2].
    Times are drawn uniformly per sample; one optimizer step is applied
    through ``model.optimizer`` (lr from ``model.schedule`` if set).
    """
    z0, z1 = batch
    z0 = as_float_array(z0, "rf_train_step: z0", np.float64)
    z1 = as_float_array(z1, "rf_train_step: z1", np.float64)
    check_shape(z0, "rf_train_step: z0", (None, 2))
    check_shape(z1, "rf_train_step: z1", (None, 2))
    if z0.shape != z1.shape or z0.shape[0] == 0:
        raise InputError(f"rf_train_step: batch shapes {z0.shape} vs {z1.shape}")
    if model.optimizer is None:
        raise InputError("rf_train_step: model has no optimizer configured")

    b = z0.shape[0]
    t = rng.uniform(0.0, 1.0, (b,))
    z_t = (1.0 - t)[:, None] * z0 + t[:, None] * z1
    target = z1 - z0

    pred = model.forward(Tensor(z_t), t)
    diff = tc.sub(Tensor(target), pred)
    loss = tc.tmean(tc.tsum(tc.mul(diff, diff), axis=1))
    value = loss.item()
    if not np.isfinite(value):
        raise NumericError(f"rf_train_step: non-finite loss {value}")

    model.optimizer.zero_grad()
    loss.backward()
    lr = model.schedule.lr(model.optimizer.step_count) if model.schedule else None
    model.optimizer.step(lr=lr)
    return value


def sample_two_gaussians(rng: Rng, n: int, separation: float, sigma: float) -> np.ndarray:
    """Mixture of two isotropic Gaussians at (+-separation, 0)."""
    signs = np.where(rng.uniform(0, 1, (n,)) < 0.5, -1.0, 1.0)
    centers = np.stack([signs * separation, np.zeros(n)], axis=1)
    return centers + rng.normal((n, 2), scale=sigma)


class FlowDemo2D(BaseEstimator):
    """Estimator wrapper: fit a 2-D velocity field, then transport noise.

    fit(X) regresses the field toward straight paths from N(0, I) to
    the data X (default: an internally sampled two-Gaussian set).
    transform(Z) integrates fitted dynamics from t=0 to t=1 per row.
    """

    def __init__(
        self,
        hidden: int = 64,
        steps: int = 2000,
        batch_size: int = 256,
        lr: float = 1e-4,
        weight_decay: float = 2e-2,
        separation: float = 5.0,
        sigma: float = 0.45,
        n_solver_steps: int = 24,
        seed: int = 0,
    ):
        self.hidden = hidden
        self.steps = steps
        self.batch_size = batch_size
        self.lr = lr
        self.weight_decay = weight_decay
        self.separation = separation
        self.sigma = sigma
        self.n_solver_steps = n_solver_steps
        self.seed = seed

    def fit(self, X=None, y=None):
        rng = Rng(self.seed)
        data_rng = rng.spawn("data")
        noise_rng = rng.spawn("noise")
        t_rng = rng.spawn("t")
        if X is not None:
            X = as_float_array(X, "FlowDemo2D.fit: X", np.float64)
            check_shape(X, "FlowDemo2D.fit: X", (None, 2))

        model = Velocity2D(hidden=self.hidden, seed=rng.spawn("init").seed)
        model.optimizer = AdamW(
            model.param_list(), lr=self.lr, weight_decay=self.weight_decay
        )
        model.schedule = CosineSchedule(self.lr, self.steps)

        curve = []
        for _ in range(self.steps):
            if X is None:
                z1 = sample_two_gaussians(data_rng, self.batch_size, self.separation, self.sigma)
            else:
                idx = data_rng.integers(0, X.shape[0], (self.batch_size,))
                z1 = X[idx]
            z0 = noise_rng.normal((self.batch_size, 2))
            curve.append(rf_train_step(model, (z0, z1), t_rng))

        self.model_ = model
        self.loss_curve_ = np.asarray(curve)
        self.initial_loss_ = float(curve[0])
        self.final_loss_ = float(np.mean(curve[-50:]) if len(curve) >= 50 else curve[-1])
        return self

    def transform(self, Z: np.ndarray) -> np.ndarray:
        """Integrate noise points [n, 2] along the fitted flow to t=1."""
        self._check_fitted()
        Z = as_float_array(Z, "FlowDemo2D.transform: Z", np.float64)
        check_shape(Z, "FlowDemo2D.transform: Z", (None, 2))
        grid = TimeGrid.uniform(self.n_solver_steps)
        field = self.model_.as_field()
        state = LatentState(Z.copy(), 0.0)
        for i in range(grid.n_steps):
            state, _ = rf_solver_step(state, grid.t(i + 1) - grid.t(i), field)
        return state.z

    def sample(self, n: int, seed: int = 1) -> np.ndarray:
        self._check_fitted()
        return self.transform(Rng(seed).normal((n, 2)))

    def straightness_report(self, n: int = 256, seed: int = 2) -> dict:
        """Path-straightness statistics of the fitted flow.

        excess_path_length: mean path length / chord length - 1 (0 for
        perfectly straight paths). chord_deviation: mean squared
        deviation of the velocity along the path from the realized
        chord z(1) - z(0), normalized by the squared chord length.
        """
        self._check_fitted()
        z = Rng(seed).normal((n, 2))
        grid = TimeGrid.uniform(self.n_solver_steps)
        field = self.model_.as_field()
        points = [z.copy()]
        vels = []
        state = LatentState(z.copy(), 0.0)
        for i in range(grid.n_steps):
            vels.append(self.model_.evaluate_np(state.z, state.t))
            state, _ = rf_solver_step(state, grid.t(i + 1) - grid.t(i), field)
            points.append(state.z)
        pts = np.stack(points)  # [N+1, n, 2]
        seglen = np.linalg.norm(np.diff(pts, axis=0), axis=2).sum(axis=0)
        chord_vec = pts[-1] - pts[0]
        chord = np.linalg.norm(chord_vec, axis=1)
        ok = chord > 1e-9
        excess = float(np.mean(seglen[ok] / chord[ok] - 1.0))
        vel = np.stack(vels)  # [N, n, 2]
        dev = ((vel - chord_vec[None]) ** 2).sum(axis=2).mean(axis=0)
        chord_dev = float(np.mean(dev[ok] / (chord[ok] ** 2)))
        return {
            "n_paths": int(n),
            "excess_path_length": excess,
            "chord_deviation": chord_dev,
            "mean_chord_length": float(np.mean(chord)),
        }

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise InputError("FlowDemo2D: call fit() first")
