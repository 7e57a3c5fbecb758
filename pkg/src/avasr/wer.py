"""Word error rate: alignment counts, reports, and report files.

Counts come from a minimum-edit alignment with unit costs. Among equal-cost
alignments the substitution-maximizing one is reported, which makes the
(S, D, I) triple unique and symmetric: swapping reference and hypothesis
swaps D and I and preserves S. Corpus WER aggregates counts across
utterances before dividing by total reference words; it is not the mean of
per-utterance rates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Sequence

import numpy as np

from avasr.autodiff import kernels
from avasr.errors import DataError

REPORT_VERSION = 1


def _to_ids(ref: Sequence[Hashable], hyp: Sequence[Hashable]
            ) -> tuple[np.ndarray, np.ndarray]:
    table: dict[Hashable, int] = {}
    enc = lambda seq: np.array([table.setdefault(t, len(table))
                                for t in seq], dtype=np.int64)
    return enc(ref), enc(hyp)


def wer(reference: Sequence[Hashable], hypothesis: Sequence[Hashable]
        ) -> tuple[int, int, int, float]:
    """(substitutions, deletions, insertions, WER%).

    Words are arbitrary hashable tokens. An empty reference makes every
    hypothesis word an insertion; the percentage is then inf (0 for the
    empty-vs-empty case) and only the counts are meaningful for corpus
    aggregation.
    """
    r, h = _to_ids(reference, hypothesis)
    _, s, d, i = kernels.edit_alignment(r, h)
    n = len(reference)
    if n == 0:
        pct = 0.0 if not hypothesis else float("inf")
    else:
        pct = 100.0 * (s + d + i) / n
    return s, d, i, pct


def align(reference: Sequence[Hashable], hypothesis: Sequence[Hashable]
          ) -> list[tuple[str, int | None, int | None]]:
    """One substitution-maximizing alignment as (op, ref_idx, hyp_idx).

    op is "match", "sub", "ins" (hyp word, ref_idx None), or "del"
    (ref word, hyp_idx None), in reference order. Where several optimal
    traces exist, the diagonal move is preferred, then insertion, then
    deletion; this choice affects only the trace, never the counts.
    """
    r, h = _to_ids(reference, hypothesis)
    a, b = len(r), len(h)
    cost = np.empty((a + 1, b + 1), dtype=np.int64)
    subs = np.zeros((a + 1, b + 1), dtype=np.int64)
    cost[0, :] = np.arange(b + 1)
    cost[:, 0] = np.arange(a + 1)
    for i in range(1, a + 1):
        for j in range(1, b + 1):
            m = 1 if r[i - 1] != h[j - 1] else 0
            bc, bs = cost[i - 1, j - 1] + m, subs[i - 1, j - 1] + m
            for c, s in ((cost[i, j - 1] + 1, subs[i, j - 1]),
                         (cost[i - 1, j] + 1, subs[i - 1, j])):
                if c < bc or (c == bc and s > bs):
                    bc, bs = c, s
            cost[i, j], subs[i, j] = bc, bs
    ops: list[tuple[str, int | None, int | None]] = []
    i, j = a, b
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            m = 1 if r[i - 1] != h[j - 1] else 0
            if (cost[i - 1, j - 1] + m == cost[i, j]
                    and subs[i - 1, j - 1] + m == subs[i, j]):
                ops.append(("sub" if m else "match", i - 1, j - 1))
                i, j = i - 1, j - 1
                continue
        if j > 0 and cost[i, j - 1] + 1 == cost[i, j] \
                and subs[i, j - 1] == subs[i, j]:
            ops.append(("ins", None, j - 1))
            j -= 1
            continue
        ops.append(("del", i - 1, None))
        i -= 1
    ops.reverse()
    return ops


def format_alignment(reference, hypothesis) -> str:
    parts = []
    for op, i, j in align(reference, hypothesis):
        if op == "match":
            parts.append(str(reference[i]))
        elif op == "sub":
            parts.append(f"{reference[i]}=>{hypothesis[j]}")
        elif op == "ins":
            parts.append(f"+{hypothesis[j]}")
        else:
            parts.append(f"-{reference[i]}")
    return " ".join(parts)


@dataclass
class UtteranceWer:
    id: str
    ref_len: int
    hyp_len: int
    sub: int
    dele: int
    ins: int

    @property
    def errors(self) -> int:
        return self.sub + self.dele + self.ins


@dataclass
class WerReport:
    per_utterance: list[UtteranceWer]
    traces: dict[str, str] = field(default_factory=dict)

    @property
    def substitutions(self) -> int:
        return sum(u.sub for u in self.per_utterance)

    @property
    def deletions(self) -> int:
        return sum(u.dele for u in self.per_utterance)

    @property
    def insertions(self) -> int:
        return sum(u.ins for u in self.per_utterance)

    @property
    def ref_words(self) -> int:
        return sum(u.ref_len for u in self.per_utterance)

    @property
    def wer_pct(self) -> float:
        total = self.ref_words
        if total == 0:
            raise DataError("corpus WER needs a non-empty reference")
        errors = self.substitutions + self.deletions + self.insertions
        return 100.0 * errors / total

    def summary(self) -> str:
        return (f"WER {self.wer_pct:.2f}%  "
                f"S={self.substitutions} D={self.deletions} "
                f"I={self.insertions} ref_words={self.ref_words} "
                f"utterances={len(self.per_utterance)}")


def score_utterances(pairs: Sequence[tuple[str, Sequence, Sequence]],
                     keep_traces: bool = False) -> WerReport:
    """Aggregate (id, reference words, hypothesis words) into a report."""
    per = []
    traces = {}
    for uid, ref, hyp in pairs:
        s, d, i, _ = wer(ref, hyp)
        per.append(UtteranceWer(uid, len(ref), len(hyp), s, d, i))
        if keep_traces:
            traces[uid] = format_alignment(ref, hyp)
    return WerReport(per, traces)


def write_wer_report(path: str | Path, report: WerReport) -> None:
    lines = [f"# avasr-wer v{REPORT_VERSION}",
             "id,ref_len,hyp_len,sub,del,ins"]
    for u in report.per_utterance:
        lines.append(f"{u.id},{u.ref_len},{u.hyp_len},{u.sub},{u.dele},"
                     f"{u.ins}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_wer_report(path: str | Path) -> WerReport:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if len(lines) < 2 or lines[0] != f"# avasr-wer v{REPORT_VERSION}":
        raise DataError(f"{path}: not a wer report (bad header)")
    if lines[1] != "id,ref_len,hyp_len,sub,del,ins":
        raise DataError(f"{path}: unexpected column header")
    per = []
    for ln, line in enumerate(lines[2:], start=3):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 6:
            raise DataError(f"{path}:{ln}: expected 6 columns")
        per.append(UtteranceWer(parts[0], *(int(x) for x in parts[1:])))
    return WerReport(per)
