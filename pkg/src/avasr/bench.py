"""Kernel backend benchmark: compiled extension vs numpy reference.

Times the three hot sequential kernels (LSTM recurrence, transducer
lattice DP, edit alignment) on both backends with identical seeded
inputs, checks the results agree, and times one full training step
end to end under each backend.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from avasr.autodiff import kernels
from avasr.autodiff.tensor import backward
from avasr.checks import micro_batch
from avasr.errors import ConfigError
from avasr.model import ModelConfig, build_model
from avasr.training import select_trainable


@dataclass(frozen=True)
class BenchRow:
    name: str
    t_python: float
    t_compiled: float
    max_abs_diff: float

    @property
    def speedup(self) -> float:
        return self.t_python / self.t_compiled if self.t_compiled > 0 \
            else float("inf")

    def line(self) -> str:
        return (f"{self.name:<22s} python {1e3 * self.t_python:9.3f} ms   "
                f"compiled {1e3 * self.t_compiled:9.3f} ms   "
                f"x{self.speedup:6.1f}   max|diff| {self.max_abs_diff:.2e}")


def _time(fn, repeats: int) -> tuple[float, object]:
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _flatten(out) -> np.ndarray:
    if isinstance(out, tuple):
        return np.concatenate([np.asarray(o, dtype=np.float64).ravel()
                               for o in out])
    return np.asarray(out, dtype=np.float64).ravel()


def _diff(a, b) -> float:
    fa, fb = _flatten(a), _flatten(b)
    if fa.shape != fb.shape:
        raise ConfigError("backend outputs have different shapes")
    return float(np.max(np.abs(fa - fb))) if fa.size else 0.0


def _kernel_cases(seed: int):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 13]))
    t, e = 48, 24
    xw = rng.standard_normal((t, 4 * e))
    wh = 0.2 * rng.standard_normal((e, 4 * e))
    n, k, v = 24, 20, 12
    logits = rng.standard_normal((n, k + 1, v + 1))
    logp = logits - np.log(np.exp(logits).sum(axis=2, keepdims=True))
    blank = np.ascontiguousarray(logp[:, :, 0])
    lab_ids = rng.integers(1, v + 1, size=k)
    lab = np.ascontiguousarray(
        logp[:, np.arange(k), lab_ids])
    ref = rng.integers(0, 4, size=40)
    hyp = rng.integers(0, 4, size=44)

    def lstm_case():
        out = kernels.lstm_forward(xw, wh)
        h_seq, gates, c_all = out
        g_h = np.ones_like(h_seq)
        return h_seq, kernels.lstm_backward(wh, gates, c_all, g_h)

    def rnnt_case():
        alpha, log_z = kernels.rnnt_forward(blank, lab)
        dblank, dlab = kernels.rnnt_backward(blank, lab, alpha, log_z)
        return alpha, log_z, dblank, dlab

    def edit_case():
        return kernels.edit_alignment(ref, hyp)

    return [("lstm fwd+bwd", lstm_case),
            ("lattice fwd+bwd", rnnt_case),
            ("edit alignment", edit_case)]


def _train_step_case(seed: int):
    cfg = ModelConfig(d_model=16, n_blocks=2, n_heads=2, ff_mult=2,
                      n_mels=8, bottleneck=8, visual_dim=8, visual_tokens=2,
                      vocab_size=5, separator_id=5,
                      decoder_width=8, join_width=8)
    model = build_model(cfg, seed=seed)
    selected = select_trainable(model.tree, 1)
    batch = micro_batch(cfg, seed=seed, n_utts=4)
    audio_only = [(a, None, t) for a, _v, t in batch]

    def step():
        loss = model.batch_loss(audio_only)
        backward(loss)
        grads = [model.tree[n].grad.copy() for n in selected]
        for n in selected:
            model.tree[n].clear_grad()
        return (float(loss.data), *grads)

    return step


def run_bench(repeats: int = 5, seed: int = 0) -> list[BenchRow]:
    """Benchmark both backends; raises ConfigError without the extension."""
    original = kernels.backend_name()
    try:
        kernels.use_backend("compiled")
    except ImportError:
        raise ConfigError("compiled kernels are not built; run "
                          "pip install -e . first") from None
    cases = _kernel_cases(seed) + [("train step", _train_step_case(seed))]
    rows = []
    try:
        for name, fn in cases:
            kernels.use_backend("python")
            t_py, out_py = _time(fn, repeats)
            kernels.use_backend("compiled")
            t_c, out_c = _time(fn, repeats)
            rows.append(BenchRow(name, t_py, t_c, _diff(out_py, out_c)))
    finally:
        kernels.use_backend(original)
    return rows
