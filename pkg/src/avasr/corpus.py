"""Synthetic audiovisual corpus: generation, manifests, fraction subsets.

Utterances are word sequences over a small grapheme vocabulary. Audio is
rendered as feature matrices directly (no waveforms): each grapheme owns a
fixed frame-pattern signature, scaled low for content-word graphemes and
high for function-word graphemes, plus per-domain Gaussian noise. Because
content signatures sit closer to the noise floor, a higher-noise "shifted"
domain selectively degrades content words, which is exactly the gap visual
features can close: each clip's visual frames carry the signature of one
of the utterance's content words.

Manifest format (one file per split): a single header line starting with
``#`` followed by canonical JSON (config echo, feature stats, record
count, format version), then one record per line with tab-separated
fields: id, audio path, transcript (space-separated grapheme ids), visual
path, content-word spans (``word:lo:hi`` comma-joined, frame ranges
half-open), domain tag, pseudo-gt flag. Paths are relative to the
manifest's directory.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from avasr import featio
from avasr.errors import ConfigError, DataError

MANIFEST_VERSION = 1
DOMAIN_TRAIN = "train-domain"
DOMAIN_SHIFTED = "shifted-domain"

# word list entry: (grapheme id tuple, is_content)
WordList = tuple[tuple[tuple[int, ...], bool], ...]


def default_word_list(vocab_size: int) -> WordList:
    """Six content + five function words over graphemes 1..V-1.

    Content words draw from the low half of the grapheme range, function
    words from the high half; grapheme V is reserved as the separator.
    """
    if vocab_size < 8:
        raise ConfigError(
            f"default word list needs vocab_size >= 8, got {vocab_size}")
    usable = vocab_size - 1
    lo = list(range(1, usable // 2 + 1))
    hi = list(range(usable // 2 + 1, usable + 1))
    c = lo
    content = [
        (c[0], c[1]), (c[1], c[2], c[0]), (c[2], c[3]),
        (c[3 % len(c)], c[4 % len(c)], c[1]), (c[4 % len(c)], c[0], c[2]),
        (c[1], c[3]),
    ]
    f = hi
    function = [
        (f[0], f[1]), (f[2 % len(f)],), (f[3 % len(f)], f[0]),
        (f[1], f[2 % len(f)]), (f[4 % len(f)], f[1], f[0]),
    ]
    seen = set()
    words = []
    for w in content:
        if w not in seen:
            seen.add(w)
            words.append((w, True))
    for w in function:
        if w not in seen:
            seen.add(w)
            words.append((w, False))
    return tuple(words)


@dataclass(frozen=True)
class CorpusConfig:
    vocab_size: int = 12
    words: WordList | None = None          # None = default_word_list
    n_train: int = 600
    n_eval_clean: int = 100
    n_eval_shifted: int = 200
    frames_per_grapheme: int = 4
    n_mels: int = 16
    noise_train: float = 0.05
    noise_shifted: float = 0.45
    content_amp: float = 0.8
    function_amp: float = 1.0
    visual_dim: int = 32
    visual_frames: int = 8
    visual_noise: float = 0.05
    visual_signal_amp: float = 0.3
    visual_nuisance_amp: float = 1.0
    visual_nuisance_rank: int = 8
    words_per_utterance: tuple[int, int] = (2, 4)
    content_per_utterance: tuple[int, int] = (1, 1)
    frame_period: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.vocab_size < 2:
            raise ConfigError(f"vocab_size must be >= 2, got "
                              f"{self.vocab_size}")
        words = self.word_list()
        if not any(is_c for _, is_c in words):
            raise ConfigError("word list has no content word")
        for w, _ in words:
            if not w:
                raise ConfigError("empty word in word list")
            bad = [g for g in w if not 1 <= g <= self.vocab_size - 1]
            if bad:
                raise ConfigError(
                    f"word {w} uses grapheme {bad[0]} outside 1.."
                    f"{self.vocab_size - 1} (grapheme {self.vocab_size} "
                    f"is the separator)")
        if len(set(w for w, _ in words)) != len(words):
            raise ConfigError("duplicate words in word list")
        if self.noise_shifted <= self.noise_train:
            raise ConfigError(
                f"shifted-domain noise {self.noise_shifted} must exceed "
                f"train-domain noise {self.noise_train}")
        lo, hi = self.words_per_utterance
        clo, chi = self.content_per_utterance
        n_content = sum(1 for _, is_c in words if is_c)
        if not 1 <= lo <= hi:
            raise ConfigError(f"bad words_per_utterance {lo, hi}")
        if not 1 <= clo <= chi <= min(hi, n_content):
            raise ConfigError(
                f"content_per_utterance {clo, chi} must fit in 1.."
                f"{min(hi, n_content)} (distinct content words per "
                f"utterance)")
        if self.frames_per_grapheme < 1 or self.visual_frames < 1:
            raise ConfigError("frames_per_grapheme and visual_frames must "
                              "be >= 1")
        if self.visual_signal_amp <= 0:
            raise ConfigError(f"visual_signal_amp must be positive, got "
                              f"{self.visual_signal_amp}")
        if self.visual_nuisance_amp < 0:
            raise ConfigError(f"visual_nuisance_amp must be >= 0, got "
                              f"{self.visual_nuisance_amp}")
        if not 1 <= self.visual_nuisance_rank <= self.visual_dim:
            raise ConfigError(
                f"visual_nuisance_rank {self.visual_nuisance_rank} outside "
                f"1..visual_dim={self.visual_dim}")

    @property
    def separator_id(self) -> int:
        return self.vocab_size

    def word_list(self) -> WordList:
        return (default_word_list(self.vocab_size) if self.words is None
                else self.words)

    def to_dict(self) -> dict:
        d = {
            "vocab_size": self.vocab_size,
            "words": [[list(w), is_c] for w, is_c in self.word_list()],
            "n_train": self.n_train,
            "n_eval_clean": self.n_eval_clean,
            "n_eval_shifted": self.n_eval_shifted,
            "frames_per_grapheme": self.frames_per_grapheme,
            "n_mels": self.n_mels,
            "noise_train": self.noise_train,
            "noise_shifted": self.noise_shifted,
            "content_amp": self.content_amp,
            "function_amp": self.function_amp,
            "visual_dim": self.visual_dim,
            "visual_frames": self.visual_frames,
            "visual_noise": self.visual_noise,
            "visual_signal_amp": self.visual_signal_amp,
            "visual_nuisance_amp": self.visual_nuisance_amp,
            "visual_nuisance_rank": self.visual_nuisance_rank,
            "words_per_utterance": list(self.words_per_utterance),
            "content_per_utterance": list(self.content_per_utterance),
            "frame_period": self.frame_period,
            "seed": self.seed,
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusConfig":
        d = dict(d)
        if "words" in d and d["words"] is not None:
            d["words"] = tuple((tuple(w), bool(is_c))
                               for w, is_c in d["words"])
        for key in ("words_per_utterance", "content_per_utterance"):
            if key in d:
                d[key] = tuple(d[key])
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown corpus config key {unknown[0]!r}")
        return cls(**d)


@dataclass
class UtteranceRecord:
    id: str
    audio_path: str             # relative to manifest directory
    transcript: np.ndarray      # grapheme ids, includes separators
    visual_path: str
    spans: tuple[tuple[int, int, int], ...]   # (word index, lo frame, hi)
    domain: str
    pseudo_gt: bool

    def __post_init__(self):
        if self.transcript.size == 0:
            raise DataError(f"record {self.id}: empty transcript")
        prev_hi = -1
        for widx, lo, hi in self.spans:
            if not (0 <= lo < hi):
                raise DataError(f"record {self.id}: bad span {lo}:{hi}")
            if lo < prev_hi:
                raise DataError(f"record {self.id}: overlapping or "
                                f"unsorted spans")
            prev_hi = hi


@dataclass
class Manifest:
    path: Path
    header: dict
    records: list[UtteranceRecord]

    @property
    def root(self) -> Path:
        return self.path.parent

    def audio_file(self, rec: UtteranceRecord) -> Path:
        return self.root / rec.audio_path

    def visual_file(self, rec: UtteranceRecord) -> Path:
        return self.root / rec.visual_path

    def config(self) -> CorpusConfig:
        return CorpusConfig.from_dict(self.header["corpus_config"])


def _signatures(cfg: CorpusConfig) -> tuple[np.ndarray, np.ndarray,
                                            dict[tuple[int, ...], int],
                                            np.ndarray]:
    """Per-grapheme audio patterns, per-content-word visual patterns, and
    the shared scene-nuisance basis.

    Signature draws depend only on cfg.seed, so the shifted domain shares
    them with the train domain by construction. Each grapheme gets a
    dedicated +2 bump on channel (g-1) mod S on each of its frames, which
    guarantees pairwise-distinct patterns even for unlucky draws.

    Visual frames imitate general-purpose image embeddings: most of their
    variance is scene content unrelated to the transcript (a random
    per-utterance vector in a fixed low-rank subspace), with the
    content-word signature added at a much smaller amplitude. The word is
    still linearly decodable, but not trivially so.
    """
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
    v, f, s = cfg.vocab_size, cfg.frames_per_grapheme, cfg.n_mels
    base = rng.uniform(-0.5, 0.5, size=(v + 1, f, s))  # row 0 unused
    for g in range(1, v + 1):
        base[g, :, (g - 1) % s] += 2.0
        base[g, :, :] *= 1.0 + 0.1 * ((g - 1) // s)
    content_graphemes = set()
    for w, is_c in cfg.word_list():
        if is_c:
            content_graphemes.update(w)
    amp = np.empty(v + 1)
    for g in range(1, v + 1):
        amp[g] = (cfg.content_amp if g in content_graphemes
                  else cfg.function_amp)
    audio_sig = base * amp[:, None, None]
    flat = audio_sig[1:].reshape(v, -1)
    gaps = np.abs(flat[:, None, :] - flat[None, :, :]).max(axis=2)
    np.fill_diagonal(gaps, np.inf)
    assert gaps.min() > 0, "grapheme signatures must be pairwise distinct"

    content_words = [w for w, is_c in cfg.word_list() if is_c]
    vis_index = {w: i for i, w in enumerate(content_words)}
    vis_sig = rng.uniform(-1.0, 1.0, size=(len(content_words),
                                           cfg.visual_dim))
    nuis_basis = rng.standard_normal((cfg.visual_nuisance_rank,
                                      cfg.visual_dim))
    nuis_basis /= np.linalg.norm(nuis_basis, axis=1, keepdims=True)
    return audio_sig, vis_sig, vis_index, nuis_basis


def _render_utterance(cfg: CorpusConfig, rng: np.random.Generator,
                      audio_sig: np.ndarray, vis_sig: np.ndarray,
                      vis_index: dict, nuis_basis: np.ndarray, noise: float
                      ) -> tuple[np.ndarray, np.ndarray, np.ndarray,
                                 tuple[tuple[int, int, int], ...]]:
    words = cfg.word_list()
    content = [w for w, is_c in words if is_c]
    function = [w for w, is_c in words if not is_c]

    lo, hi = cfg.words_per_utterance
    n_words = int(rng.integers(lo, hi + 1))
    clo, chi = cfg.content_per_utterance
    n_content = int(rng.integers(clo, min(chi, n_words) + 1))
    positions = np.sort(rng.choice(n_words, size=n_content, replace=False))
    picks = rng.choice(len(content), size=n_content, replace=False)
    seq: list[tuple[int, ...]] = []
    content_at: dict[int, tuple[int, ...]] = {}
    for p in range(n_words):
        if p in positions:
            w = content[int(picks[int(np.searchsorted(positions, p))])]
            content_at[p] = w
        elif function:
            w = function[int(rng.integers(len(function)))]
        else:
            w = content[int(rng.integers(len(content)))]
        seq.append(w)

    ids: list[int] = []
    spans: list[tuple[int, int, int]] = []
    fpg = cfg.frames_per_grapheme
    for p, w in enumerate(seq):
        if p > 0:
            ids.append(cfg.separator_id)
        if p in content_at:
            lo_f = len(ids) * fpg
            spans.append((p, lo_f, lo_f + fpg * len(w)))
        ids.extend(w)
    id_arr = np.array(ids, dtype=np.int64)

    audio = audio_sig[id_arr].reshape(-1, cfg.n_mels).copy()
    audio += rng.normal(0.0, noise, size=audio.shape)

    ordered = [content_at[p] for p in sorted(content_at)]
    vis = np.empty((cfg.visual_frames, cfg.visual_dim))
    for i in range(cfg.visual_frames):
        vis[i] = cfg.visual_signal_amp * \
            vis_sig[vis_index[ordered[i % len(ordered)]]]
    rank = nuis_basis.shape[0]
    scene = rng.normal(0.0, 1.0, size=rank)
    drift = rng.normal(0.0, 0.25, size=(cfg.visual_frames, rank))
    vis += cfg.visual_nuisance_amp * ((scene[None, :] + drift) @ nuis_basis)
    vis += rng.normal(0.0, cfg.visual_noise, size=vis.shape)
    return audio, vis, id_arr, tuple(spans)


def _format_spans(spans) -> str:
    return ",".join(f"{w}:{lo}:{hi}" for w, lo, hi in spans) or "-"


def _parse_spans(text: str):
    if text == "-":
        return ()
    out = []
    for part in text.split(","):
        w, lo, hi = part.split(":")
        out.append((int(w), int(lo), int(hi)))
    return tuple(out)


def write_manifest(path: Path, header: dict,
                   records: list[UtteranceRecord]) -> None:
    lines = ["# " + json.dumps(header, sort_keys=True,
                               separators=(",", ":"))]
    for r in records:
        lines.append("\t".join([
            r.id, r.audio_path,
            " ".join(str(g) for g in r.transcript),
            r.visual_path, _format_spans(r.spans), r.domain,
            "1" if r.pseudo_gt else "0",
        ]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_manifest(path: str | Path, validate: bool = True) -> Manifest:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read manifest {path}: {e}") from e
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# "):
        raise DataError(f"{path}: missing manifest header line")
    try:
        header = json.loads(lines[0][2:])
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: bad header JSON: {e}") from e
    if header.get("manifest_version") != MANIFEST_VERSION:
        raise DataError(f"{path}: manifest version "
                        f"{header.get('manifest_version')} unsupported")
    cfg = CorpusConfig.from_dict(header["corpus_config"])
    records = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 7:
            raise DataError(f"{path}:{ln}: expected 7 tab-separated "
                            f"fields, got {len(parts)}")
        uid, apath, tr, vpath, spans, domain, pgt = parts
        ids = np.array([int(t) for t in tr.split()], dtype=np.int64)
        rec = UtteranceRecord(uid, apath, ids, vpath, _parse_spans(spans),
                              domain, pgt == "1")
        if validate:
            bad = ids[(ids < 1) | (ids > cfg.vocab_size)]
            if bad.size:
                raise DataError(f"{path}:{ln}: transcript grapheme "
                                f"{bad[0]} outside 1..{cfg.vocab_size}")
            n_frames = cfg.frames_per_grapheme * len(ids)
            for _, lo, hi in rec.spans:
                if hi > n_frames:
                    raise DataError(f"{path}:{ln}: span end {hi} beyond "
                                    f"audio length {n_frames}")
            for p in (path.parent / apath, path.parent / vpath):
                if not p.is_file():
                    raise DataError(f"{path}:{ln}: missing feature file "
                                    f"{p}")
        records.append(rec)
    if len(records) != header.get("n_records"):
        raise DataError(f"{path}: header promises "
                        f"{header.get('n_records')} records, found "
                        f"{len(records)}")
    return Manifest(path, header, records)


def generate_corpus(cfg: CorpusConfig, out_dir: str | Path) -> dict[str, Path]:
    """Write feature files and the three split manifests; deterministic."""
    out = Path(out_dir)
    (out / "audio").mkdir(parents=True, exist_ok=True)
    (out / "visual").mkdir(parents=True, exist_ok=True)
    audio_sig, vis_sig, vis_index, nuis_basis = _signatures(cfg)

    splits = [
        ("train", 1, cfg.n_train, cfg.noise_train, DOMAIN_TRAIN, True),
        ("eval_clean", 2, cfg.n_eval_clean, cfg.noise_train, DOMAIN_TRAIN,
         False),
        ("eval_shifted", 3, cfg.n_eval_shifted, cfg.noise_shifted,
         DOMAIN_SHIFTED, False),
    ]
    paths: dict[str, Path] = {}
    train_sum = 0.0
    train_sqsum = 0.0
    train_count = 0
    split_records: dict[str, list[UtteranceRecord]] = {}
    for name, split_id, count, noise, domain, pseudo in splits:
        records = []
        for i in range(count):
            rng = np.random.default_rng(
                np.random.SeedSequence([cfg.seed, split_id, i]))
            audio, vis, ids, spans = _render_utterance(
                cfg, rng, audio_sig, vis_sig, vis_index, nuis_basis, noise)
            uid = f"{name}-{i:05d}"
            apath = f"audio/{uid}.avft"
            vpath = f"visual/{uid}.avft"
            featio.write_features(out / apath, audio, featio.KIND_AUDIO,
                                  frame_period=cfg.frame_period)
            featio.write_features(out / vpath, vis, featio.KIND_VISUAL)
            records.append(UtteranceRecord(uid, apath, ids, vpath, spans,
                                           domain, pseudo))
            if name == "train":
                train_sum += float(audio.sum())
                train_sqsum += float((audio * audio).sum())
                train_count += audio.size
        split_records[name] = records

    mean = train_sum / max(train_count, 1)
    var = max(train_sqsum / max(train_count, 1) - mean * mean, 0.0)
    stats = {"audio_mean": mean, "audio_std": math.sqrt(var)}
    for name, split_id, count, noise, domain, pseudo in splits:
        header = {
            "manifest_version": MANIFEST_VERSION,
            "corpus_config": cfg.to_dict(),
            "split": name,
            "domain": domain,
            "noise": noise,
            "n_records": count,
            "stats": stats,
        }
        mpath = out / f"{name}.tsv"
        write_manifest(mpath, header, split_records[name])
        paths[name] = mpath
    return paths


_FRACTIONS = (0.05, 0.10, 0.25, 0.50, 0.75, 1.0)


def sample_fraction(manifest: Manifest, fraction: float,
                    seed: int) -> Manifest:
    """Seeded nested subset of ceil(fraction * n) records.

    Subsets are prefixes of one seed-determined permutation, restored to
    manifest order, so smaller fractions are contained in larger ones.
    """
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"fraction must be in (0, 1], got {fraction}")
    if fraction == 1.0:
        return manifest
    n = len(manifest.records)
    take = math.ceil(fraction * n)
    perm = np.random.default_rng(
        np.random.SeedSequence([seed])).permutation(n)
    keep = np.sort(perm[:take])
    header = dict(manifest.header)
    header["fraction"] = fraction
    header["fraction_seed"] = seed
    header["n_records"] = int(take)
    return Manifest(manifest.path, header,
                    [manifest.records[i] for i in keep])
