"""WER tests: exhaustive small-case oracle, count symmetry, aggregation,
and report file round-trips."""

import itertools

import pytest

from avasr.errors import DataError
from avasr.wer import (WerReport, align, format_alignment, read_wer_report,
                       score_utterances, wer, write_wer_report)


def brute_counts(ref, hyp):
    """Minimum edit cost by recursion, plus the substitution-maximizing
    (S, D, I) split among minimum-cost alignments. Exponential; fine for
    the tiny sequences used here."""
    best = {}

    def go(i, j):
        if (i, j) in best:
            return best[(i, j)]
        if i == len(ref):
            out = (len(hyp) - j, (0, 0, len(hyp) - j))
        elif j == len(hyp):
            out = (len(ref) - i, (0, len(ref) - i, 0))
        else:
            cands = []
            c, (s, d, n) = go(i + 1, j + 1)
            if ref[i] == hyp[j]:
                cands.append((c, (s, d, n)))
            else:
                cands.append((c + 1, (s + 1, d, n)))
            c, (s, d, n) = go(i + 1, j)
            cands.append((c + 1, (s, d + 1, n)))
            c, (s, d, n) = go(i, j + 1)
            cands.append((c + 1, (s, d, n + 1)))
            mincost = min(c for c, _ in cands)
            # among equal-cost splits keep the one with most substitutions
            out = (mincost, max(t for c, t in cands if c == mincost))
        best[(i, j)] = out
        return out

    cost, (s, d, i) = go(0, 0)
    assert s + d + i == cost
    return s, d, i


def test_wer_exhaustive_small_pairs():
    """Every (ref, hyp) pair over a 3-word alphabet up to length 4 on each
    side (length 6 pairs are covered by the acceptance suite)."""
    alpha = ["a", "b", "c"]
    seqs = [list(p) for n in range(0, 5)
            for p in itertools.product(alpha, repeat=n)]
    for ref in seqs:
        for hyp in seqs:
            s, d, i, pct = wer(ref, hyp)
            assert (s, d, i) == brute_counts(ref, hyp), (ref, hyp)
            if ref:
                assert pct == pytest.approx(100 * (s + d + i) / len(ref))


def test_wer_swap_symmetry():
    """Swapping ref and hyp swaps D and I and preserves S."""
    alpha = ["x", "y"]
    seqs = [list(p) for n in range(0, 5)
            for p in itertools.product(alpha, repeat=n)]
    for ref in seqs:
        for hyp in seqs:
            s1, d1, i1, _ = wer(ref, hyp)
            s2, d2, i2, _ = wer(hyp, ref)
            assert (s1, d1, i1) == (s2, i2, d2)


def test_wer_identity_and_disjoint():
    assert wer(["a", "b", "c"], ["a", "b", "c"]) == (0, 0, 0, 0.0)
    s, d, i, pct = wer(["a", "b"], ["c", "d"])
    assert (s, d, i) == (2, 0, 0)
    assert pct == 100.0


def test_wer_known_cases():
    # one deletion out of three words
    assert wer("a b c".split(), "a c".split()) == (0, 1, 0,
                                                   pytest.approx(100 / 3))
    # one sub plus one insertion against a single-word reference
    assert wer(["a"], ["b", "c"]) == (1, 0, 1, 200.0)


def test_wer_empty_reference():
    s, d, i, pct = wer([], ["a", "b"])
    assert (s, d, i) == (0, 0, 2)
    assert pct == float("inf")
    assert wer([], []) == (0, 0, 0, 0.0)


def test_wer_tokens_only_need_hashing():
    assert wer([(1, 2), (3,)], [(1, 2), (3, 4)])[:3] == (1, 0, 0)
    assert wer([7, "7"], [7, "7"])[:3] == (0, 0, 0)   # no coercion


def test_align_ops_consistent_with_counts():
    alpha = ["a", "b", "c"]
    seqs = [list(p) for n in range(0, 4)
            for p in itertools.product(alpha, repeat=n)]
    for ref in seqs:
        for hyp in seqs:
            ops = align(ref, hyp)
            s = sum(1 for op, _, _ in ops if op == "sub")
            d = sum(1 for op, _, _ in ops if op == "del")
            i = sum(1 for op, _, _ in ops if op == "ins")
            m = sum(1 for op, _, _ in ops if op == "match")
            assert (s, d, i) == wer(ref, hyp)[:3]
            assert m + s + d == len(ref)
            assert m + s + i == len(hyp)
            # indices are in order and point at the right words
            for op, ri, hi in ops:
                if op in ("match", "sub"):
                    assert ref[ri] is not None and hyp[hi] is not None
                if op == "match":
                    assert ref[ri] == hyp[hi]


def test_format_alignment_readable():
    out = format_alignment("the cat sat".split(), "the hat sat down".split())
    assert out == "the cat=>hat sat +down"
    assert format_alignment(["a", "b"], ["b"]) == "-a b"


def test_corpus_aggregation_is_count_pooled_not_mean_of_rates():
    # utt1: 1 error / 1 word (100%); utt2: 1 error / 9 words (11.1%)
    # pooled: 2/10 = 20%, not the 55.6% mean of rates
    rep = score_utterances([
        ("u1", ["a"], ["b"]),
        ("u2", ["w"] * 9, ["w"] * 8),
    ])
    assert rep.wer_pct == pytest.approx(20.0)
    assert rep.substitutions == 1 and rep.deletions == 1
    assert rep.ref_words == 10


def test_empty_reference_utterance_contributes_insertions():
    rep = score_utterances([
        ("u1", [], ["x", "y"]),
        ("u2", ["a", "b"], ["a", "b"]),
    ])
    assert rep.insertions == 2
    assert rep.wer_pct == pytest.approx(100.0)   # 2 errors / 2 ref words


def test_corpus_wer_zero_ref_words_rejected():
    rep = score_utterances([("u1", [], ["x"])])
    with pytest.raises(DataError):
        rep.wer_pct


def test_report_roundtrip(tmp_path):
    rep = score_utterances([
        ("utt-001", "a b c".split(), "a c".split()),
        ("utt-002", "d e".split(), "d e f".split()),
    ], keep_traces=True)
    p = tmp_path / "r.csv"
    write_wer_report(p, rep)
    back = read_wer_report(p)
    assert [u.__dict__ for u in back.per_utterance] \
        == [u.__dict__ for u in rep.per_utterance]
    assert back.wer_pct == pytest.approx(rep.wer_pct)


def test_report_rejects_bad_header(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("# wrong\nid,ref_len,hyp_len,sub,del,ins\n")
    with pytest.raises(DataError):
        read_wer_report(p)
    p.write_text("# avasr-wer v1\nid,ref,hyp\n")
    with pytest.raises(DataError):
        read_wer_report(p)


def test_summary_line_mentions_all_counts():
    rep = score_utterances([("u", ["a", "b"], ["a", "c"])])
    s = rep.summary()
    assert "S=1" in s and "D=0" in s and "I=0" in s and "ref_words=2" in s
