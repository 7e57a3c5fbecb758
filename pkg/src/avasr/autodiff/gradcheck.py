"""Central-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from avasr.autodiff.tensor import Tensor, backward, clear_grads
from avasr.errors import ShapeError


def check_gradient(fn: Callable[..., Tensor], point: Sequence[Tensor],
                   step: float = 1e-5) -> float:
    """Compare reverse-mode gradients against central differences.

    ``fn`` maps the tensors in ``point`` to a scalar.  Returns the max over
    all coordinates of all grad-requiring inputs of

        |analytic - central| / max(|analytic|, |central|, 1e-8).

    Each probe re-evaluates ``fn`` from scratch, so the function must be
    deterministic.
    """
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    out = fn(*point)
    if out.data.ndim != 0 and out.data.size != 1:
        raise ShapeError(
            f"check_gradient: function output must be scalar, "
            f"got shape {out.data.shape}")
    clear_grads(point)
    backward(out)

    worst = 0.0
    for t in point:
        if not t.requires_grad:
            continue
        analytic = (t.grad if t.grad is not None
                    else np.zeros_like(t.data))
        flat = t.data.reshape(-1)
        gflat = analytic.reshape(-1)
        for idx in range(flat.size):
            keep = flat[idx]
            flat[idx] = keep + step
            hi = float(fn(*point).data)
            flat[idx] = keep - step
            lo = float(fn(*point).data)
            flat[idx] = keep
            central = (hi - lo) / (2.0 * step)
            a = gflat[idx]
            err = abs(a - central) / max(abs(a), abs(central), 1e-8)
            worst = max(worst, err)
    return worst
