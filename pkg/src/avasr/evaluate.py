"""Corpus evaluation and the ablation sweep runner.

``evaluate`` greedy-decodes every utterance of a manifest and aggregates a
WerReport. Audio-only mode follows the dummy-input protocol: the visual
path still runs, fed zero features, so an audiovisual checkpoint can be
scored on audio-only data without changing the graph shape.

``run_sweep`` trains and evaluates one configuration per (axis value,
seed), isolating each run in its own directory, recording failures
without stopping the sweep, and writing a CSV plus plain two-column
plot-data files.
"""

from __future__ import annotations

import json
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from avasr import featio, visual as visual_mod
from avasr.checkpoint import file_hash, save_checkpoint
from avasr.corpus import Manifest, load_manifest, sample_fraction
from avasr.errors import AvasrError, ConfigError
from avasr.model import (DECODER_TRANSDUCER, DECODER_XATTN, Model,
                         ModelConfig, build_model)
from avasr.training import TrainConfig, run_phase, _check_compatible
from avasr.wer import WerReport, score_utterances

MODE_AUDIO_ONLY = "audio-only"
MODE_AUDIOVISUAL = "audiovisual"
SWEEP_VERSION = 1

SWEEP_AXES = ("bottleneck", "visual_tokens", "adapter_kind",
              "adapter_layers", "fraction", "decoder_type", "components")
COMPONENT_VALUES = ("none", "vt_only", "adapters_only", "both")


def evaluate(model: Model, manifest: Manifest, mode: str,
             visual_tokens: int | None = None,
             keep_traces: bool = False) -> WerReport:
    """Greedy-decode every utterance and aggregate corpus WER."""
    if mode not in (MODE_AUDIO_ONLY, MODE_AUDIOVISUAL):
        raise ConfigError(f"mode must be {MODE_AUDIO_ONLY!r} or "
                          f"{MODE_AUDIOVISUAL!r}, got {mode!r}")
    _check_compatible(model, manifest)
    m = model.cfg.visual_tokens if visual_tokens is None else visual_tokens
    ccfg = manifest.config()
    if m > ccfg.visual_frames:
        raise ConfigError(f"visual_tokens {m} exceeds the corpus clip "
                          f"length {ccfg.visual_frames}")
    pairs = []
    for rec in manifest.records:
        audio, _ = featio.read_features(manifest.audio_file(rec),
                                        expect_kind=featio.KIND_AUDIO)
        if mode == MODE_AUDIO_ONLY:
            vis = visual_mod.dummy_visual(m, model.cfg.visual_dim).features
        else:
            vmat, _ = featio.read_features(manifest.visual_file(rec),
                                           expect_kind=featio.KIND_VISUAL)
            vis = vmat[:m]
        hyp_ids = model.transcribe(audio, vis if m > 0 else None)
        ref_words = model.vocab.words(rec.transcript)
        hyp_words = model.vocab.words(hyp_ids)
        pairs.append((rec.id, ref_words, hyp_words))
    return score_utterances(pairs, keep_traces=keep_traces)


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple
    seeds: tuple[int, ...]
    train_manifest: str
    eval_manifest: str
    model: ModelConfig
    phase1: TrainConfig
    phase2: TrainConfig
    eval_mode: str = MODE_AUDIOVISUAL
    fraction_seed: int = 0

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, "
                              f"got {self.axis!r}")
        if not self.values:
            raise ConfigError("sweep values must be non-empty")
        if not self.seeds:
            raise ConfigError("sweep needs at least one seed")
        if self.axis == "components":
            bad = [v for v in self.values if v not in COMPONENT_VALUES]
            if bad:
                raise ConfigError(f"unknown component value {bad[0]!r}; "
                                  f"choose from {COMPONENT_VALUES}")


def _configure(spec: SweepSpec, value) -> tuple[ModelConfig, str]:
    """Model config for one axis value, plus the training recipe name."""
    cfg = spec.model
    recipe = "curriculum"
    if spec.axis == "bottleneck":
        cfg = replace(cfg, bottleneck=int(value))
    elif spec.axis == "visual_tokens":
        cfg = replace(cfg, visual_tokens=int(value))
    elif spec.axis == "adapter_kind":
        cfg = replace(cfg, adapter_kind=str(value))
    elif spec.axis == "adapter_layers":
        cfg = replace(cfg, n_adapter_layers=int(value))
    elif spec.axis == "decoder_type":
        cfg = replace(cfg, decoder_type=str(value))
    elif spec.axis == "components":
        if value == "none":
            cfg = replace(cfg, n_adapter_layers=0)
            recipe = "none"
        elif value == "vt_only":
            cfg = replace(cfg, n_adapter_layers=0)
            recipe = "vt_only"
        elif value == "adapters_only":
            recipe = "adapters_only"
        else:
            recipe = "curriculum"
    return cfg, recipe


def run_one(spec: SweepSpec, value, seed: int, run_dir: str | Path) -> dict:
    """Train + evaluate a single sweep cell; returns the CSV row dict."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    mcfg, recipe = _configure(spec, value)
    train_man = load_manifest(spec.train_manifest)
    if spec.axis == "fraction":
        train_man = sample_fraction(train_man, float(value),
                                    spec.fraction_seed)
    eval_man = load_manifest(spec.eval_manifest)

    train_decoder = mcfg.decoder_type == DECODER_XATTN
    p1 = replace(spec.phase1, seed=seed, train_decoder=train_decoder)
    p2 = replace(spec.phase2, seed=seed, train_decoder=train_decoder)

    model = build_model(mcfg, seed=seed)
    mode = spec.eval_mode
    eval_m = None
    if recipe == "none":
        save_checkpoint(run_dir / "final.avck", model,
                        provenance=["phase=none", f"init seed={seed}"])
        mode, eval_m = MODE_AUDIO_ONLY, 0
    elif recipe == "adapters_only":
        run_phase(model, train_man, p1, run_dir / "final.avck",
                  log_path=run_dir / "phase1.log")
        mode, eval_m = MODE_AUDIO_ONLY, 0
    elif recipe == "vt_only":
        run_phase(model, train_man, p2, run_dir / "final.avck",
                  log_path=run_dir / "phase2.log", allow_unchained=True)
    else:
        ck1 = run_dir / "phase1.avck"
        run_phase(model, train_man, p1, ck1,
                  log_path=run_dir / "phase1.log")
        run_phase(model, train_man, p2, run_dir / "final.avck",
                  parent_hash=file_hash(ck1),
                  parent_provenance=(f"phase=1 checkpoint={ck1.name}",),
                  log_path=run_dir / "phase2.log")
    report = evaluate(model, eval_man, mode, visual_tokens=eval_m)
    return {
        "axis": spec.axis, "value": value, "seed": seed,
        "wer_pct": report.wer_pct, "sub": report.substitutions,
        "del": report.deletions, "ins": report.insertions,
        "ref_words": report.ref_words,
        "adapter_params": model.tree.total_params("adapter-phi"),
        "projector_params": model.tree.total_params("projector-theta"),
        "error": "",
    }


def _run_one_from_dict(args: dict) -> dict:
    spec = SweepSpec(**{**args["spec"],
                        "model": ModelConfig.from_dict(args["spec"]["model"]),
                        "phase1": TrainConfig(**args["spec"]["phase1"]),
                        "phase2": TrainConfig(**args["spec"]["phase2"])})
    return run_one(spec, args["value"], args["seed"], args["run_dir"])


def _spec_as_dict(spec: SweepSpec) -> dict:
    from dataclasses import asdict
    d = asdict(spec)
    return d


def run_sweep(spec: SweepSpec, out_dir: str | Path,
              jobs: int = 1) -> tuple[Path, list[dict]]:
    """All (value, seed) cells; failures recorded, sweep continues."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = [(v, s) for v in spec.values for s in spec.seeds]
    rows: list[dict] = []

    def fail_row(value, seed, err) -> dict:
        return {"axis": spec.axis, "value": value, "seed": seed,
                "wer_pct": "", "sub": "", "del": "", "ins": "",
                "ref_words": "", "adapter_params": "",
                "projector_params": "", "error": err}

    def cell_dir(value, seed) -> Path:
        slug = str(value).replace("/", "-").replace(".", "p")
        return out / f"{spec.axis}-{slug}-seed{seed}"

    if jobs > 1:
        payloads = [{"spec": _spec_as_dict(spec), "value": v, "seed": s,
                     "run_dir": str(cell_dir(v, s))} for v, s in cells]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_one_from_dict, p) for p in payloads]
            for (v, s), fut in zip(cells, futures):
                try:
                    rows.append(fut.result())
                except Exception as e:
                    rows.append(fail_row(v, s, f"{type(e).__name__}: {e}"))
    else:
        for v, s in cells:
            try:
                rows.append(run_one(spec, v, s, cell_dir(v, s)))
            except AvasrError as e:
                rows.append(fail_row(v, s, f"{type(e).__name__}: {e}"))
            except Exception as e:
                traceback.print_exc()
                rows.append(fail_row(v, s, f"{type(e).__name__}: {e}"))

    columns = ["axis", "value", "seed", "wer_pct", "sub", "del", "ins",
               "ref_words", "adapter_params", "projector_params", "error"]
    lines = ["# avasr-sweep v%d %s" % (SWEEP_VERSION, json.dumps(
        {"axis": spec.axis, "values": list(spec.values),
         "seeds": list(spec.seeds)}, sort_keys=True,
        separators=(",", ":"))), ",".join(columns)]
    for r in rows:
        lines.append(",".join(str(r[c]) for c in columns))
    csv_path = out / "results.csv"
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    # plot data: value vs mean WER over seeds, and value vs parameter count
    wer_lines, par_lines = [], []
    for v in spec.values:
        ok = [r for r in rows
              if r["value"] == v and r["error"] == ""]
        if ok:
            mean = sum(float(r["wer_pct"]) for r in ok) / len(ok)
            wer_lines.append(f"{v} {mean!r}")
            par_lines.append(f"{v} {ok[0]['adapter_params']}")
    (out / "plot_wer.txt").write_text("\n".join(wer_lines) + "\n",
                                      encoding="utf-8")
    (out / "plot_params.txt").write_text("\n".join(par_lines) + "\n",
                                         encoding="utf-8")
    return csv_path, rows
