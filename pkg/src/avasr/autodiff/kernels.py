"""Kernel backend selection.

The hot sequential loops (LSTM recurrence, transducer lattice DP,
minimum-edit alignment) exist twice: a compiled Cython extension and a plain
numpy reference.  At import time the compiled backend is chosen when present;
``AVASR_PURE_PYTHON=1`` in the environment forces the reference kernels.
Both backends produce identical results up to floating-point reassociation
(integer kernels are exactly identical); the test suite pins the two against
each other.
"""

from __future__ import annotations

import os

from avasr.autodiff import kernels_py

_FORCE_PY = os.environ.get("AVASR_PURE_PYTHON", "") not in ("", "0")

if not _FORCE_PY:
    try:
        from avasr.autodiff import _speedups as _impl
    except ImportError:
        _impl = kernels_py
else:
    _impl = kernels_py


def backend_name() -> str:
    """Selected backend: 'compiled' or 'python'."""
    return _impl.BACKEND


def use_backend(name: str) -> None:
    """Switch backend at runtime ('compiled' or 'python'); for tests/bench."""
    global _impl
    if name == "python":
        _impl = kernels_py
        return
    if name == "compiled":
        from avasr.autodiff import _speedups
        _impl = _speedups
        return
    raise ValueError(f"unknown kernel backend {name!r}")


def lstm_forward(xw, wh):
    return _impl.lstm_forward(xw, wh)


def lstm_backward(wh, gates, c_all, g_h):
    return _impl.lstm_backward(wh, gates, c_all, g_h)


def rnnt_forward(blank, lab):
    return _impl.rnnt_forward(blank, lab)


def rnnt_backward(blank, lab, alpha, logZ):
    return _impl.rnnt_backward(blank, lab, alpha, logZ)


def edit_alignment(ref, hyp):
    return _impl.edit_alignment(ref, hyp)


def edit_counts_batch(refs, hyps):
    return _impl.edit_counts_batch(refs, hyps)
