"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import ConfigError
from .tensor import Tensor


def _difference(up: np.ndarray, down: np.ndarray, cotangent: np.ndarray | None) -> float:
    # Subtract elementwise before contracting: outputs untouched by the
    # perturbation cancel exactly instead of adding roundoff.
    if cotangent is None:
        return float(up.reshape(()) - down.reshape(()))
    return float(np.sum(cotangent * (up - down)))


def grad_check(op_closure: Callable[[], Tensor], inputs: Sequence[Tensor], h: float = 1e-6,
               seed: int = 0, max_coords: int | None = None, floor_frac: float = 0.0) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``op_closure`` recomputes the output from the current ``inputs`` data.  A
    non-scalar output is contracted with a fixed random cotangent.  The error
    of one coordinate is ``|a - fd| / max(|a|, |fd|, 1e-12)``.  ``max_coords``
    samples that many coordinates per input instead of all of them.
    ``floor_frac`` raises the denominator floor to that fraction of the
    largest analytic gradient magnitude, so coordinates that are tiny only
    through cancellation are judged on absolute error at the gradient's scale.
    """
    for t in inputs:
        if t.dtype != np.float64:
            raise ConfigError("grad_check needs 64-bit inputs")
    rng = np.random.default_rng(seed)
    for t in inputs:
        t.data = np.ascontiguousarray(t.data)
        t.requires_grad = True
        t.grad = None
    out = op_closure()
    cot = None if out.data.size == 1 else rng.standard_normal(out.shape)
    out.backward(None if cot is None else cot)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]

    scale = max((float(np.max(np.abs(a))) for a in analytic if a.size), default=0.0)
    floor = max(1e-12, floor_frac * scale)
    worst = 0.0
    for t, a in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        a_flat = a.reshape(-1)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            up = op_closure().data.copy()
            flat[i] = orig - h
            down = op_closure().data
            flat[i] = orig
            fd = _difference(up, down, cot) / (2.0 * h)
            err = abs(a_flat[i] - fd) / max(abs(a_flat[i]), abs(fd), floor)
            worst = max(worst, err)
    return worst
