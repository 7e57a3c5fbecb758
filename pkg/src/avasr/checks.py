"""Gradient verification reports.

Two layers of checking, both against central differences:

* per primitive: every registered op is probed through the uniform
  ``primitive_forward`` entry point, so a corrupted backward rule is
  reported under the primitive's own name;
* per parameter group: the end-to-end training loss is probed coordinate
  by coordinate for each trainable group of a model, with contractually
  frozen groups reported as skipped rather than silently passed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from avasr.autodiff.gradcheck import check_gradient
from avasr.autodiff.tensor import (Tensor, mul, primitive_forward, sum_all)
from avasr.autodiff import tensor as tensor_mod
from avasr.errors import ConfigError
from avasr.model import (DECODER_XATTN, Model, ModelConfig, build_model)
from avasr.params import (GROUP_ADAPTER, GROUP_DECODER, GROUP_PROJECTOR,
                          GROUPS)
from avasr.training import select_trainable
from avasr.transducer import Transcript

DEFAULT_TOLERANCE = 1e-4

STATUS_PASS = "pass"
STATUS_FAIL = "fail"
STATUS_SKIPPED = "skipped"


@dataclass(frozen=True)
class CheckRow:
    name: str
    status: str
    max_err: float | None = None
    detail: str = ""

    def line(self) -> str:
        err = "" if self.max_err is None else f"  max rel err {self.max_err:.3e}"
        tail = f"  {self.detail}" if self.detail else ""
        return f"{self.status:<7s} {self.name}{err}{tail}"


def _rand(rng, *shape) -> Tensor:
    return Tensor(rng.standard_normal(shape), requires_grad=True)


def _primitive_case(kind: str, rng) -> tuple[list[Tensor], dict, object]:
    """Inputs, kwargs, and an optional fixed weighting for one primitive.

    The weighting keeps reductions non-degenerate: summing a softmax gives
    a constant, so its gradient check would pass vacuously without it.
    """
    if kind == "matmul":
        return [_rand(rng, 3, 4), _rand(rng, 4, 2)], {}, None
    if kind == "add":
        return [_rand(rng, 3, 4), _rand(rng, 4)], {}, None
    if kind == "elementwise-mul":
        return [_rand(rng, 3, 4), _rand(rng, 4)], {}, None
    if kind == "relu":
        # keep probes away from the kink at zero
        signs = np.where(rng.random((3, 4)) < 0.5, -1.0, 1.0)
        data = signs * rng.uniform(0.2, 1.0, size=(3, 4))
        return [Tensor(data, requires_grad=True)], {}, None
    if kind in ("tanh", "sigmoid"):
        return [_rand(rng, 3, 4)], {}, None
    if kind == "softmax-over-last-axis":
        w = Tensor(rng.standard_normal((3, 4)))
        return [_rand(rng, 3, 4)], {}, w
    if kind == "log-softmax":
        w = Tensor(rng.standard_normal((3, 4)))
        return [_rand(rng, 3, 4)], {}, w
    if kind == "layer-norm":
        return [_rand(rng, 3, 6), _rand(rng, 6), _rand(rng, 6)], {}, None
    if kind == "1d-convolution":
        return ([_rand(rng, 6, 3), _rand(rng, 3, 3, 2), _rand(rng, 2)],
                {"stride": 2, "pad": (1, 0)}, None)
    if kind == "concatenate":
        return [_rand(rng, 2, 3), _rand(rng, 2, 2)], {"axis": 1}, None
    if kind == "slice":
        return ([_rand(rng, 4, 5)],
                {"key": (slice(1, 3), slice(None, None, 2))}, None)
    if kind == "logsumexp":
        return [_rand(rng, 3, 5)], {}, None
    if kind == "scalar-reduce-mean":
        return [_rand(rng, 3, 4)], {}, None
    raise ConfigError(f"no gradient-check case for primitive {kind!r}")


def check_primitives(tolerance: float = DEFAULT_TOLERANCE,
                     seed: int = 0) -> list[CheckRow]:
    """Central-difference check of every registered primitive."""
    rows = []
    for i, kind in enumerate(sorted(tensor_mod._PRIMITIVES)):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        inputs, kwargs, weight = _primitive_case(kind, rng)

        def fn(*ts, _kind=kind, _kw=kwargs, _w=weight):
            out = primitive_forward(_kind, list(ts), **_kw)
            if _w is not None:
                out = mul(out, _w)
            return sum_all(out)

        err = check_gradient(fn, inputs)
        status = STATUS_PASS if err <= tolerance else STATUS_FAIL
        rows.append(CheckRow(kind, status, err,
                             detail=f"{sum(t.size for t in inputs)} coords"))
    return rows


def micro_model_config(**overrides) -> ModelConfig:
    """Smallest config that exercises every module; for gradient checks."""
    base = dict(d_model=8, n_blocks=2, n_heads=2, conv_kernel=3, ff_mult=2,
                n_mels=4, bottleneck=4, adapter_random_output_init=True,
                visual_dim=6, visual_tokens=2, vocab_size=5, separator_id=5,
                decoder_width=6, join_width=6, xattn_depth=2)
    base.update(overrides)
    return ModelConfig(**base)


def micro_batch(cfg: ModelConfig, seed: int = 0, n_utts: int = 2
                ) -> list[tuple[np.ndarray, np.ndarray, Transcript]]:
    """Tiny in-memory batch matching a model config; no corpus needed."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    batch = []
    for u in range(n_utts):
        n_frames = 24 - 8 * (u % 2)          # token lengths 6 and 4
        audio = 0.5 * rng.standard_normal((n_frames, cfg.n_mels))
        vis = (rng.standard_normal((cfg.visual_tokens, cfg.visual_dim))
               if cfg.visual_tokens > 0 else None)
        k = 3 - (u % 2)
        ids = 1 + rng.integers(0, cfg.vocab_size, size=k)
        batch.append((audio, vis, Transcript(ids)))
    return batch


def check_model_groups(model: Model, batch, tolerance: float =
                       DEFAULT_TOLERANCE, step: float = 1e-5,
                       check_decoder: bool = False) -> list[CheckRow]:
    """End-to-end loss gradient check, one row per parameter group.

    Groups the curriculum never trains (backbone; the transducer decoder)
    are reported as skipped. The cross-attention decoder is trainable, so
    it is checked when present; ``check_decoder`` forces the transducer
    decoder to be checked as well (the engine must get its gradient right
    whether or not the trainer ever uses it).
    """
    checkable = {GROUP_ADAPTER, GROUP_PROJECTOR}
    if model.cfg.decoder_type == DECODER_XATTN or check_decoder:
        checkable.add(GROUP_DECODER)
    rows = []
    for group in GROUPS:
        names = model.tree.group_names(group)
        if not names:
            continue
        if group not in checkable:
            rows.append(CheckRow(group, STATUS_SKIPPED,
                                 detail="frozen by the curriculum contract"))
            continue
        if group == GROUP_DECODER:
            selected = model.tree.set_trainable_groups({GROUP_DECODER})
        else:
            phase = {GROUP_ADAPTER: 1, GROUP_PROJECTOR: 2}[group]
            selected = select_trainable(model.tree, phase)
        point = [model.tree[n] for n in selected]

        def fn(*_ts):
            return model.batch_loss(batch)

        err = check_gradient(fn, point, step=step)
        status = STATUS_PASS if err <= tolerance else STATUS_FAIL
        n_coords = sum(model.tree[n].data.size for n in selected)
        rows.append(CheckRow(group, status, err,
                             detail=f"{n_coords} coords, "
                                    f"{len(selected)} tensors"))
    model.tree.set_trainable_groups(set())
    return rows


def grad_check_report(model_cfg: ModelConfig | None = None,
                      tolerance: float = DEFAULT_TOLERANCE,
                      seed: int = 0) -> tuple[list[CheckRow], bool]:
    """Primitive rows, then group rows for the (micro) model; (rows, ok)."""
    rows = check_primitives(tolerance=tolerance, seed=seed)
    cfg = micro_model_config() if model_cfg is None else model_cfg
    model = build_model(cfg, seed=seed)
    batch = micro_batch(cfg, seed=seed)
    rows += check_model_groups(model, batch, tolerance=tolerance)
    ok = all(r.status != STATUS_FAIL for r in rows)
    return rows, ok
