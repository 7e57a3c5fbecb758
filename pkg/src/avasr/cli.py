"""Command-line surface: every experiment is one deterministic command.

    avasr gen-data OUT_DIR [--config cfg.json]
    avasr train --phase {1,2,joint} [--config cfg.json] [--init ck]
                [--fraction f] [--allow-uninitialized] ...
    avasr eval CHECKPOINT MANIFEST [--mode audio-only|av] [--report csv]
    avasr ablate SPEC.json [--out dir] [--jobs n]
    avasr grad-check [--tolerance t] [--seed n]
    avasr bench [--repeats n]

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
error (see avasr.errors; argparse's own usage failures also exit 2).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from avasr.checkpoint import file_hash, load_checkpoint
from avasr.config import RunConfig, load_run_config, parse_train_section
from avasr.corpus import generate_corpus, load_manifest, sample_fraction
from avasr.errors import AvasrError, ConfigError, DataError, NumericError
from avasr.evaluate import (MODE_AUDIO_ONLY, MODE_AUDIOVISUAL, SweepSpec,
                            evaluate, run_sweep)
from avasr.model import ModelConfig, build_model
from avasr.training import run_phase
from avasr.wer import write_wer_report

_EVAL_MODES = {"audio-only": MODE_AUDIO_ONLY, "av": MODE_AUDIOVISUAL}


def cmd_gen_data(args) -> int:
    cfg = load_run_config(args.config)
    paths = generate_corpus(cfg.corpus, args.out_dir)
    for name in ("train", "eval_clean", "eval_shifted"):
        print(paths[name])
    return 0


def _phase_provenance(header: dict) -> list[str]:
    return [p for p in header.get("provenance", [])
            if p.startswith("phase=")]


def cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    tcfg = cfg.train_config(args.phase, seed=args.seed)

    manifest_path = args.train_manifest or \
        str(Path(cfg.data_dir) / "train.tsv")
    manifest = load_manifest(manifest_path)
    if args.fraction is not None:
        manifest = sample_fraction(manifest, args.fraction,
                                   args.fraction_seed)

    parent_hash = None
    parent_provenance: tuple[str, ...] = ()
    if args.init is not None:
        model, header = load_checkpoint(args.init)
        if model.cfg != cfg.model:
            raise ConfigError(
                f"checkpoint {args.init} was built for a different model "
                f"config; pass the matching --config")
        parent_hash = file_hash(args.init)
        parent_provenance = tuple(header.get("provenance", []))
        if args.phase == "2" and not args.allow_uninitialized:
            phases = _phase_provenance(header)
            if "phase=1" not in phases:
                raise ConfigError(
                    f"--init {args.init} has no phase-1 provenance "
                    f"(found {phases or 'none'}); curriculum phase 2 "
                    f"continues from a phase-1 checkpoint, or pass "
                    f"--allow-uninitialized")
    else:
        if args.phase == "2" and not args.allow_uninitialized:
            raise ConfigError("phase 2 needs --init <phase-1 checkpoint> "
                              "(or --allow-uninitialized to train the "
                              "projector from scratch)")
        model = build_model(cfg.model, seed=tcfg.seed)

    out = Path(args.out) if args.out else \
        Path(cfg.out_dir) / f"phase{args.phase}-seed{tcfg.seed}.avck"
    out.parent.mkdir(parents=True, exist_ok=True)
    log = Path(args.log) if args.log else out.with_suffix(".log")
    run_phase(model, manifest, tcfg, out,
              parent_hash=parent_hash,
              parent_provenance=parent_provenance,
              log_path=log,
              allow_unchained=args.allow_uninitialized)
    print(out)
    return 0


def cmd_eval(args) -> int:
    model, _header = load_checkpoint(args.checkpoint)
    manifest = load_manifest(args.manifest)
    mode = _EVAL_MODES[args.mode]
    # audio-only keeps the token count and feeds zero visual features, so
    # an audiovisual checkpoint is scored without changing the graph shape;
    # pass --visual-tokens 0 to drop the tokens entirely
    report = evaluate(model, manifest, mode,
                      visual_tokens=args.visual_tokens)
    if args.report:
        write_wer_report(args.report, report)
    print(report.summary())
    return 0


def _load_sweep_spec(path: str) -> SweepSpec:
    p = Path(path)
    if not p.exists():
        raise DataError(f"sweep spec not found: {p}")
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"sweep spec {p} is not valid JSON: {e}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"sweep spec {p} must hold a JSON object")
    known = {"axis", "values", "seeds", "train_manifest", "eval_manifest",
             "eval_mode", "fraction_seed", "model", "phase1", "phase2"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown sweep spec key {unknown[0]!r}")
    for req in ("axis", "values", "seeds", "train_manifest",
                "eval_manifest"):
        if req not in raw:
            raise ConfigError(f"sweep spec is missing {req!r}")
    mode = raw.get("eval_mode", "av")
    if mode not in _EVAL_MODES:
        raise ConfigError(f"eval_mode must be one of "
                          f"{sorted(_EVAL_MODES)}, got {mode!r}")
    return SweepSpec(
        axis=raw["axis"],
        values=tuple(raw["values"]),
        seeds=tuple(int(s) for s in raw["seeds"]),
        train_manifest=raw["train_manifest"],
        eval_manifest=raw["eval_manifest"],
        model=ModelConfig.from_dict(raw.get("model", {})),
        phase1=parse_train_section(raw.get("phase1", {}), 1),
        phase2=parse_train_section(raw.get("phase2", {}), 2),
        eval_mode=_EVAL_MODES[mode],
        fraction_seed=int(raw.get("fraction_seed", 0)),
    )


def cmd_ablate(args) -> int:
    spec = _load_sweep_spec(args.spec)
    csv_path, rows = run_sweep(spec, args.out_dir, jobs=args.jobs)
    failures = [r for r in rows if r["error"]]
    for r in rows:
        wer = f"{float(r['wer_pct']):7.2f}" if r["wer_pct"] != "" \
            else "   FAIL"
        print(f"{r['axis']}={r['value']!s:<14} seed={r['seed']}  "
              f"WER{wer}  {r['error']}")
    print(csv_path)
    return 4 if failures else 0


def cmd_grad_check(args) -> int:
    from avasr.checks import grad_check_report
    rows, ok = grad_check_report(tolerance=args.tolerance, seed=args.seed)
    for r in rows:
        print(r.line())
    if not ok:
        failing = [r.name for r in rows if r.status == "fail"]
        print(f"FAILED: {', '.join(failing)}")
        return NumericError.exit_code
    print("all checks passed")
    return 0


def cmd_bench(args) -> int:
    from avasr.bench import run_bench
    for row in run_bench(repeats=args.repeats, seed=args.seed):
        print(row.line())
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="avasr",
        description="desk-scale audiovisual speech recognition testbed")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic corpus")
    g.add_argument("out_dir")
    g.add_argument("--config", default=None, help="run config JSON")
    g.set_defaults(fn=cmd_gen_data)

    t = sub.add_parser("train", help="train one curriculum phase")
    t.add_argument("--config", default=None, help="run config JSON")
    t.add_argument("--phase", required=True, choices=("1", "2", "joint"))
    t.add_argument("--init", default=None,
                   help="checkpoint to continue from (phase 2)")
    t.add_argument("--fraction", type=float, default=None,
                   help="train on a nested fraction of the corpus")
    t.add_argument("--fraction-seed", type=int, default=0)
    t.add_argument("--allow-uninitialized", action="store_true",
                   help="let phase 2 start without a phase-1 checkpoint")
    t.add_argument("--seed", type=int, default=None,
                   help="override the config's training seed")
    t.add_argument("--train-manifest", default=None)
    t.add_argument("--out", default=None, help="checkpoint output path")
    t.add_argument("--log", default=None, help="training log path")
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint on a manifest")
    e.add_argument("checkpoint")
    e.add_argument("manifest")
    e.add_argument("--mode", choices=sorted(_EVAL_MODES), default="av")
    e.add_argument("--report", default=None, help="per-utterance CSV path")
    e.add_argument("--visual-tokens", type=int, default=None,
                   help="override the checkpoint's visual token count")
    e.set_defaults(fn=cmd_eval)

    a = sub.add_parser("ablate", help="run a sweep from a spec file")
    a.add_argument("spec")
    a.add_argument("--out", dest="out_dir", default="sweep")
    a.add_argument("--jobs", type=int, default=1)
    a.set_defaults(fn=cmd_ablate)

    c = sub.add_parser("grad-check",
                       help="verify gradients against central differences")
    c.add_argument("--tolerance", type=float, default=1e-4)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(fn=cmd_grad_check)

    b = sub.add_parser("bench",
                       help="compare compiled and python kernel backends")
    b.add_argument("--repeats", type=int, default=5)
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(fn=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except AvasrError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
