"""Run configuration: one JSON file describing a whole experiment.

A run config has five sections, each optional, each rejecting unknown
keys. Absent sections and absent keys take the documented defaults
(the dataclass defaults of the section types, which are the desk-scale
recipe; paper-scale values are noted in the section docstrings and in
FORMATS.md).

    model    ModelConfig     architecture knobs
    corpus   CorpusConfig    synthetic corpus recipe
    phase1   TrainConfig     adapter phase (phase forced to 1)
    phase2   TrainConfig     projector phase (phase forced to 2)
    paths    data_dir/out_dir

``joint`` runs reuse the phase1 section with the no-curriculum flag set,
so the ablation differs from the curriculum only in what is trainable.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from avasr.corpus import CorpusConfig
from avasr.errors import ConfigError, DataError
from avasr.model import ModelConfig
from avasr.training import TrainConfig

CONFIG_VERSION = 1
_SECTIONS = ("model", "corpus", "phase1", "phase2", "paths")
_PATH_KEYS = ("data_dir", "out_dir")

# phase-2 training is shorter: the projector is a single linear map and
# overfits the shifted domain if run as long as phase 1
_PHASE1_DEFAULTS = {"phase": 1, "iterations": 4000}
_PHASE2_DEFAULTS = {"phase": 2, "iterations": 3000}


def _train_config(section: dict, forced: dict, where: str) -> TrainConfig:
    known = {f.name for f in fields(TrainConfig)}
    unknown = sorted(set(section) - known)
    if unknown:
        raise ConfigError(f"unknown {where} config key {unknown[0]!r}")
    merged = {**forced, **section}
    for key, val in forced.items():
        if key == "iterations":
            continue                      # iterations may be overridden
        if merged[key] != val:
            raise ConfigError(f"{where}.{key} is fixed to {val!r} "
                              f"(got {merged[key]!r})")
    return TrainConfig(**merged)


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig
    corpus: CorpusConfig
    phase1: TrainConfig
    phase2: TrainConfig
    data_dir: str = "data"
    out_dir: str = "runs"

    @classmethod
    def default(cls) -> "RunConfig":
        return cls.from_dict({})

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = sorted(set(d) - set(_SECTIONS) - {"version"})
        if unknown:
            raise ConfigError(f"unknown config section {unknown[0]!r}")
        version = d.get("version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ConfigError(f"config version {version!r} not supported "
                              f"(this build reads version {CONFIG_VERSION})")
        for name in _SECTIONS:
            if name in d and not isinstance(d[name], dict):
                raise ConfigError(f"config section {name!r} must be an "
                                  f"object")
        paths = dict(d.get("paths", {}))
        bad = sorted(set(paths) - set(_PATH_KEYS))
        if bad:
            raise ConfigError(f"unknown paths key {bad[0]!r}")
        return cls(
            model=ModelConfig.from_dict(d.get("model", {})),
            corpus=CorpusConfig.from_dict(d.get("corpus", {})),
            phase1=_train_config(d.get("phase1", {}), _PHASE1_DEFAULTS,
                                 "phase1"),
            phase2=_train_config(d.get("phase2", {}), _PHASE2_DEFAULTS,
                                 "phase2"),
            data_dir=str(paths.get("data_dir", "data")),
            out_dir=str(paths.get("out_dir", "runs")),
        )

    def to_dict(self) -> dict:
        return {
            "version": CONFIG_VERSION,
            "model": self.model.to_dict(),
            "corpus": self.corpus.to_dict(),
            "phase1": asdict(self.phase1),
            "phase2": asdict(self.phase2),
            "paths": {"data_dir": self.data_dir, "out_dir": self.out_dir},
        }

    def train_config(self, phase: str, seed: int | None = None,
                     train_decoder: bool | None = None) -> TrainConfig:
        """The section for --phase {1|2|joint}, with CLI overrides applied."""
        if phase == "1":
            cfg = self.phase1
        elif phase == "2":
            cfg = self.phase2
        elif phase == "joint":
            cfg = replace(self.phase1, joint=True,
                          visual_tokens=self.model.visual_tokens)
        else:
            raise ConfigError(f"--phase must be 1, 2, or joint, "
                              f"got {phase!r}")
        if seed is not None:
            cfg = replace(cfg, seed=seed)
        if train_decoder is not None:
            cfg = replace(cfg, train_decoder=train_decoder)
        return cfg


def parse_train_section(section: dict, phase: int) -> TrainConfig:
    """One training section on its own (sweep specs reuse this)."""
    if phase == 1:
        return _train_config(section, _PHASE1_DEFAULTS, "phase1")
    if phase == 2:
        return _train_config(section, _PHASE2_DEFAULTS, "phase2")
    raise ConfigError(f"phase must be 1 or 2, got {phase!r}")


def load_run_config(path: str | Path | None) -> RunConfig:
    """Parse a JSON run config; None means all defaults."""
    if path is None:
        return RunConfig.default()
    p = Path(path)
    if not p.exists():
        raise DataError(f"config file not found: {p}")
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {p} is not valid JSON: {e}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"config {p} must hold a JSON object")
    return RunConfig.from_dict(raw)


def write_run_config(cfg: RunConfig, path: str | Path) -> Path:
    p = Path(path)
    p.write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n",
                 encoding="utf-8")
    return p
