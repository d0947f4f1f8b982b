"""Central-difference verification of tape gradients."""
from __future__ import annotations

from typing import Callable, Dict, Mapping, Optional

import numpy as np

from ..errors import InputError
from .core import Tensor, no_grad
from .rng import Rng


def grad_check(
    f: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    eps: float = 1e-5,
    max_coords: Optional[int] = None,
    rng: Optional[Rng] = None,
    atol: float = 0.0,
) -> Dict[str, float]:
    """Compare tape gradients of a scalar function against central differences.

    ``f`` recomputes the loss from the current parameter values; it is
    called once with the tape on, then twice per probed coordinate with
    the tape off. Returns, per parameter name, the worst relative error

        |analytic - numeric| / (|analytic| + |numeric| + 1e-12)

    over the probed coordinates. ``max_coords`` caps the number of
    coordinates probed per parameter (sampled via ``rng``, default all).
    Coordinates where both magnitudes fall below ``atol`` count as zero
    error; the default 0.0 disables that escape hatch.
    """
    if max_coords is not None and rng is None:
        rng = Rng(0)
    for p in params.values():
        if not isinstance(p, Tensor):
            raise InputError("grad_check: params must map names to Tensors")
        p.grad = None

    out = f()
    if out.size != 1:
        raise InputError(f"grad_check: f() must return a scalar, got shape {out.shape}")
    out.backward()
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in params.items()
    }

    errors: Dict[str, float] = {}
    with no_grad():
        for name, p in params.items():
            flat = p.data.reshape(-1)
            n = flat.size
            if max_coords is not None and max_coords < n:
                coords = rng.permutation(n)[:max_coords]
            else:
                coords = range(n)
            a_flat = analytic[name].reshape(-1)
            worst = 0.0
            for idx in coords:
                orig = flat[idx]
                flat[idx] = orig + eps
                f_plus = f().item()
                flat[idx] = orig - eps
                f_minus = f().item()
                flat[idx] = orig
                numeric = (f_plus - f_minus) / (2.0 * eps)
                a = float(a_flat[idx])
                if abs(a) + abs(numeric) < atol:
                    continue
                err = abs(a - numeric) / (abs(a) + abs(numeric) + 1e-12)
                worst = max(worst, err)
            errors[name] = worst
    return errors
