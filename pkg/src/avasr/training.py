"""Two-phase curriculum trainer.

Phase 1 trains the adapters on audio alone (no visual tokens are built at
all, enforced by an instrumentation counter). Phase 2 freezes them and
trains the visual projector. The joint mode is the no-curriculum ablation:
both groups train from scratch with visual tokens on.

Gaussian content-word masking runs in both phases by default so the model
is pushed to read the visual tokens wherever audio evidence is missing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from avasr import featio, visual as visual_mod
from avasr.autodiff import Tensor, backward
from avasr.checkpoint import save_checkpoint
from avasr.corpus import Manifest
from avasr.errors import ConfigError, DataError, NumericError
from avasr.model import DECODER_XATTN, Model
from avasr.params import (GROUP_ADAPTER, GROUP_DECODER, GROUP_PROJECTOR,
                          ParameterTree)
from avasr.transducer import Transcript

PHASE_JOINT = "joint"
LOG_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    phase: int = 1
    joint: bool = False         # no-curriculum ablation: phi and theta together
    iterations: int = 2000
    batch_size: int = 16
    lr0: float = 0.006
    momentum: float = 0.9
    mask_prob: float = 0.3
    mask_mean: float | None = None     # None: corpus stats from the manifest
    mask_std: float | None = None
    apply_masking: bool = True
    visual_tokens: int | None = None   # None: model config; phase 1 forces 0
    train_decoder: bool = False        # cross-attention decoder variant
    seed: int = 0

    def __post_init__(self):
        if self.phase not in (1, 2):
            raise ConfigError(f"phase must be 1 or 2, got {self.phase}")
        if self.joint and self.phase != 1:
            raise ConfigError("joint (no-curriculum) training starts from "
                              "scratch; set phase=1")
        if self.iterations < 1 or self.batch_size < 1:
            raise ConfigError("iterations and batch_size must be >= 1")
        if not 0.0 <= self.mask_prob <= 1.0:
            raise ConfigError(f"mask_prob must be in [0, 1], got "
                              f"{self.mask_prob}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got "
                              f"{self.momentum}")
        if self.lr0 <= 0:
            raise ConfigError(f"lr0 must be positive, got {self.lr0}")

    def effective_visual_tokens(self, model_default: int) -> int:
        m = self.visual_tokens if self.visual_tokens is not None \
            else model_default
        if self.phase == 1 and not self.joint:
            return 0
        return m


def select_trainable(tree: ParameterTree, phase,
                     train_decoder: bool = False) -> list[str]:
    """Unfreeze exactly the groups the phase owns; freeze the rest."""
    if phase == 1:
        groups = {GROUP_ADAPTER}
    elif phase == 2:
        groups = {GROUP_PROJECTOR}
    elif phase == PHASE_JOINT:
        groups = {GROUP_ADAPTER, GROUP_PROJECTOR}
    else:
        raise ConfigError(f"phase must be 1, 2, or {PHASE_JOINT!r}, got "
                          f"{phase!r}")
    if train_decoder:
        groups = groups | {GROUP_DECODER}
    return tree.set_trainable_groups(groups)


def cosine_lr(step: int, total: int, lr0: float) -> float:
    if step < 0:
        raise ConfigError(f"step must be >= 0, got {step}")
    if step >= total:
        return 0.0
    return lr0 * 0.5 * (1.0 + np.cos(np.pi * step / total))


def sgd_momentum_step(params: list[Tensor], grads: list[np.ndarray | None],
                      state: dict[str, np.ndarray], lr: float,
                      momentum: float = 0.9) -> None:
    """velocity <- momentum*velocity + grad; param <- param - lr*velocity.

    A None grad counts as zero (the velocity still decays). Frozen params
    are skipped. Non-finite grads reject the whole step by tensor name.
    """
    if len(params) != len(grads):
        raise ConfigError("params and grads length mismatch")
    for p, g in zip(params, grads):
        if p.frozen or not p.requires_grad:
            continue
        key = p.name or f"id{id(p)}"
        v = state.get(key)
        if v is None:
            v = np.zeros_like(p.data)
        if g is None:
            v = momentum * v
        else:
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient for {key!r}; "
                                   f"step rejected")
            v = momentum * v + g
        state[key] = v
        p.data -= lr * v


def mask_content_words(features: np.ndarray,
                       spans: tuple[tuple[int, int], ...],
                       noise: tuple[float, float],
                       seed) -> np.ndarray:
    """Replace the frames inside each span with Gaussian noise.

    ``seed`` may be an int or a Generator (the trainer threads one rng
    through a batch). Frames outside the spans are returned bit-identical;
    with no spans the input array itself is returned.
    """
    mean, std = noise
    if std <= 0:
        raise ConfigError(f"mask noise std must be > 0, got {std}")
    if not spans:
        return features
    n = features.shape[0]
    prev_hi = 0
    for lo, hi in spans:
        if not (0 <= lo < hi <= n):
            raise DataError(f"mask span {lo}:{hi} outside 0..{n}")
        if lo < prev_hi:
            raise DataError(f"mask spans overlap at frame {lo}")
        prev_hi = hi
    rng = seed if isinstance(seed, np.random.Generator) \
        else np.random.default_rng(np.random.SeedSequence([int(seed)]))
    out = features.copy()
    for lo, hi in spans:
        out[lo:hi] = rng.normal(mean, std, size=(hi - lo,
                                                 features.shape[1]))
    return out


def _check_compatible(model: Model, manifest: Manifest) -> None:
    ccfg = manifest.config()
    pairs = [("n_mels", model.cfg.n_mels, ccfg.n_mels),
             ("visual_dim", model.cfg.visual_dim, ccfg.visual_dim),
             ("vocab_size", model.cfg.vocab_size, ccfg.vocab_size),
             ("separator_id", model.cfg.separator_id, ccfg.separator_id)]
    for name, mv, cv in pairs:
        if mv != cv:
            raise ConfigError(f"model/corpus mismatch at {name!r}: model "
                              f"has {mv}, corpus has {cv}")


def load_corpus_features(manifest: Manifest, visual_tokens: int
                         ) -> list[tuple[np.ndarray, np.ndarray | None,
                                         Transcript,
                                         tuple[tuple[int, int], ...]]]:
    """Cache (audio, visual-or-None, transcript, frame spans) in memory."""
    ccfg = manifest.config()
    if visual_tokens > ccfg.visual_frames:
        raise ConfigError(f"visual_tokens {visual_tokens} exceeds the "
                          f"corpus clip length {ccfg.visual_frames}")
    out = []
    for rec in manifest.records:
        audio, _ = featio.read_features(manifest.audio_file(rec),
                                        expect_kind=featio.KIND_AUDIO)
        if audio.shape[1] != ccfg.n_mels:
            raise DataError(f"{rec.id}: audio dim {audio.shape[1]} != "
                            f"corpus n_mels {ccfg.n_mels}")
        vis = None
        if visual_tokens > 0:
            vmat, _ = featio.read_features(manifest.visual_file(rec),
                                           expect_kind=featio.KIND_VISUAL)
            if vmat.shape[1] != ccfg.visual_dim:
                raise DataError(f"{rec.id}: visual dim {vmat.shape[1]} != "
                                f"corpus visual_dim {ccfg.visual_dim}")
            vis = vmat[:visual_tokens]
        spans = tuple((lo, hi) for _, lo, hi in rec.spans)
        out.append((audio, vis, Transcript(rec.transcript), spans))
    return out


def write_train_log(path: str | Path, meta: dict,
                    entries: list[tuple[int, float, float]]) -> None:
    lines = ["# " + json.dumps({"log_version": LOG_VERSION, **meta},
                               sort_keys=True, separators=(",", ":"))]
    for step, lr, loss in entries:
        lines.append(f"{step}\t{lr!r}\t{loss!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def run_phase(model: Model, manifest: Manifest, cfg: TrainConfig,
              checkpoint_path: str | Path,
              parent_hash: str | None = None,
              parent_provenance: tuple[str, ...] = (),
              log_path: str | Path | None = None,
              allow_unchained: bool = False
              ) -> list[tuple[int, float, float]]:
    """Train one curriculum phase in place and save the checkpoint.

    Phase 2 must chain to a phase-1 checkpoint via parent_hash; the joint
    mode is the sanctioned way to skip the curriculum. The saved
    provenance list is parent_provenance plus this phase's entries, so a
    chained checkpoint lists every phase it went through.
    """
    if not manifest.records:
        raise DataError("training corpus is empty")
    if cfg.phase == 2 and not cfg.joint and parent_hash is None \
            and not allow_unchained:
        raise ConfigError("phase 2 continues from a phase-1 checkpoint; "
                          "pass parent_hash, or allow_unchained for a "
                          "projector-only run from scratch (joint mode "
                          "covers the no-curriculum ablation)")
    _check_compatible(model, manifest)

    phase_label = PHASE_JOINT if cfg.joint else cfg.phase
    train_decoder = cfg.train_decoder
    if train_decoder and model.cfg.decoder_type != DECODER_XATTN:
        raise ConfigError("train_decoder is only for the cross-attention "
                          "decoder variant")
    selected_names = select_trainable(model.tree, phase_label,
                                      train_decoder)
    if not selected_names:
        raise ConfigError(f"phase {phase_label} selected no trainable "
                          f"parameters (no adapters/projector in the "
                          f"model?)")
    selected = [model.tree[n] for n in selected_names]

    m_tokens = cfg.effective_visual_tokens(model.cfg.visual_tokens)
    data = load_corpus_features(manifest, m_tokens)
    stats = manifest.header.get("stats", {})
    mean = cfg.mask_mean if cfg.mask_mean is not None \
        else float(stats["audio_mean"])
    std = cfg.mask_std if cfg.mask_std is not None \
        else float(stats["audio_std"])

    project_calls_before = visual_mod.PROJECT_CALLS
    batch_rng = np.random.default_rng(
        np.random.SeedSequence([cfg.seed, 1]))
    state: dict[str, np.ndarray] = {}
    n = len(data)
    entries: list[tuple[int, float, float]] = []
    for step in range(cfg.iterations):
        lr = cosine_lr(step, cfg.iterations, cfg.lr0)
        idx = batch_rng.integers(0, n, size=cfg.batch_size)
        mask_rng = np.random.default_rng(
            np.random.SeedSequence([cfg.seed, 2, step]))
        batch = []
        for i in idx:
            audio, vis, transcript, spans = data[int(i)]
            if cfg.apply_masking and spans and cfg.mask_prob > 0:
                chosen = tuple(s for s in spans
                               if mask_rng.random() < cfg.mask_prob)
                if chosen:
                    audio = mask_content_words(audio, chosen, (mean, std),
                                               mask_rng)
            batch.append((audio, vis, transcript))
        loss = model.batch_loss(batch)
        value = float(loss.data)
        if not np.isfinite(value):
            raise NumericError(f"non-finite loss {value} at step {step}")
        backward(loss)
        sgd_momentum_step(selected, [p.grad for p in selected], state, lr,
                          cfg.momentum)
        for p in selected:
            p.clear_grad()
        entries.append((step, float(lr), value))

    if m_tokens == 0 and visual_mod.PROJECT_CALLS != project_calls_before:
        raise NumericError("visual tokens were constructed during an "
                           "audio-only phase")

    provenance = list(parent_provenance) + [
        f"phase={phase_label}",
        f"corpus split={manifest.header.get('split')} "
        f"seed={manifest.config().seed} n={n}",
        f"train seed={cfg.seed} iters={cfg.iterations} "
        f"batch={cfg.batch_size} lr0={cfg.lr0} momentum={cfg.momentum} "
        f"M={m_tokens} mask_prob="
        f"{cfg.mask_prob if cfg.apply_masking else 0.0}",
    ]
    save_checkpoint(checkpoint_path, model, provenance=provenance,
                    parent_hash=parent_hash)
    if log_path is not None:
        meta = {"phase": str(phase_label), "seed": cfg.seed,
                "iterations": cfg.iterations,
                "batch_size": cfg.batch_size, "lr0": cfg.lr0,
                "visual_tokens": m_tokens}
        write_train_log(log_path, meta, entries)
    return entries
