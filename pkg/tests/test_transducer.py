"""Lattice loss against exhaustive path enumeration, the closed-form path
count, greedy decoding, and input validation."""

import itertools
from math import comb

import numpy as np
import pytest

from avasr.autodiff import Tensor, log_softmax
from avasr.autodiff.gradcheck import check_gradient
from avasr.errors import ConfigError, DataError, ShapeError
from avasr.frontend import TokenSequence
from avasr.transducer import (BLANK_ID, DecoderParams, LogitLattice,
                              Transcript, Vocabulary, build_lattice,
                              greedy_decode, rnnt_log_prob, rnnt_loss)


def enumerate_log_prob(logits, labels):
    """Sum the probability of every monotone path by brute force.

    A path interleaves N advance moves with K emission moves. Advancing at
    grid state (i, j) scores logits[i, j, blank]; emitting scores
    logits[i, j, labels[j]], with i clamped to N-1 once the encoder is
    exhausted."""
    n, k1, _ = logits.shape
    k = k1 - 1
    total = []
    for emit_slots in itertools.combinations(range(n + k), k):
        i = j = 0
        lp = 0.0
        for step in range(n + k):
            if step in emit_slots:
                lp += logits[min(i, n - 1), j, labels[j]]
                j += 1
            else:
                lp += logits[i, j, BLANK_ID]
                i += 1
        total.append(lp)
    m = max(total)
    return m + np.log(np.sum(np.exp(np.array(total) - m)))


def random_lattice(rng, n, k, v):
    raw = rng.standard_normal((n, k + 1, v + 1))
    labels = rng.integers(1, v + 1, size=k)
    logits = log_softmax(Tensor(raw))
    return LogitLattice(logits, labels), raw, labels


@pytest.mark.parametrize("seed", range(40))
def test_rnnt_log_prob_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    k = int(rng.integers(0, 4))
    v = int(rng.integers(1, 4))
    lattice, _, labels = random_lattice(rng, n, k, v)
    got = float(rnnt_log_prob(lattice).data)
    want = enumerate_log_prob(lattice.logits.data, labels)
    assert got == pytest.approx(want, abs=1e-9)


def test_path_count_law_uniform_lattice():
    """On a uniform lattice every path has mass (V+1)^-(N+K), so
    P * (V+1)^(N+K) counts the paths: C(N+K, K)."""
    for v in (1, 2, 4):
        for n in range(1, 7):
            for k in range(0, 7 - n):
                logits = np.full((n, k + 1, v + 1), -np.log(v + 1))
                labels = np.ones(k, dtype=np.int64)
                lp = float(rnnt_log_prob(
                    LogitLattice(Tensor(logits), labels)).data)
                count = np.exp(lp) * (v + 1) ** (n + k)
                assert count == pytest.approx(comb(n + k, k), rel=1e-9)


def test_single_token_single_label_closed_form():
    """N=1, K=1: two paths, both scored on the single (clamped) row.
    Emit-then-advance uses lab(0,0) + blank(0,1); advance-then-emit uses
    blank(0,0) + lab(0,0) since the emission keeps prefix column 0."""
    rng = np.random.default_rng(3)
    lattice, _, labels = random_lattice(rng, 1, 1, 2)
    lg = lattice.logits.data
    want = np.logaddexp(lg[0, 0, labels[0]] + lg[0, 1, BLANK_ID],
                        lg[0, 0, BLANK_ID] + lg[0, 0, labels[0]])
    assert float(rnnt_log_prob(lattice).data) == pytest.approx(want,
                                                               abs=1e-12)


def test_empty_transcript_is_all_blanks():
    rng = np.random.default_rng(4)
    lattice, _, _ = random_lattice(rng, 3, 0, 2)
    want = lattice.logits.data[:, 0, BLANK_ID].sum()
    assert float(rnnt_log_prob(lattice).data) == pytest.approx(want,
                                                               abs=1e-12)


def test_rnnt_gradient_through_log_softmax():
    rng = np.random.default_rng(5)
    raw = Tensor(rng.standard_normal((3, 3, 4)), True)
    labels = np.array([2, 1])

    def fn(t):
        return rnnt_log_prob(LogitLattice(log_softmax(t), labels))

    assert check_gradient(fn, [raw]) < 1e-7


def test_rnnt_occupancy_gradient_sums():
    """d logZ / d blank and d logZ / d label are path occupancies; each
    path uses N blanks and K labels, so the totals are N and K."""
    rng = np.random.default_rng(6)
    n, k = 4, 3
    raw = Tensor(rng.standard_normal((n, k + 1, 3)), True)
    labels = np.array([1, 2, 1])
    from avasr.autodiff import backward
    lp = rnnt_log_prob(LogitLattice(log_softmax(raw), labels))
    backward(lp)
    g = raw.grad
    # gradient wrt raw logits sums to zero per slice (softmax invariance)
    assert np.allclose(g.sum(axis=-1), 0.0, atol=1e-12)


def micro_decoder(rng, v=3, e=4, j=4, d=5):
    def t(*shape, scale=0.5):
        return Tensor(scale * rng.standard_normal(shape), True)
    return DecoderParams(
        embed=t(v + 1, e),
        lstm1_wx=t(e, 4 * e), lstm1_wh=t(e, 4 * e),
        lstm1_b=Tensor(np.zeros(4 * e), True),
        lstm2_wx=t(e, 4 * e), lstm2_wh=t(e, 4 * e),
        lstm2_b=Tensor(np.zeros(4 * e), True),
        w_enc=t(d, j), w_pred=t(e, j), b_join=Tensor(np.zeros(j), True),
        w_out=t(j, v + 1), b_out=Tensor(np.zeros(v + 1), True),
    )


def test_build_lattice_shape_and_normalization():
    rng = np.random.default_rng(7)
    dec = micro_decoder(rng)
    enc = TokenSequence(Tensor(rng.standard_normal((6, 5))),
                        np.zeros(6, dtype=np.uint8))
    lat = build_lattice(enc, Transcript(np.array([1, 3])), dec)
    assert lat.shape == (6, 3, 4)
    # every (i, j) slice is a normalized log-distribution
    assert np.allclose(np.exp(lat.logits.data).sum(-1), 1.0, atol=1e-12)


def test_build_lattice_rejects_mismatched_width_and_bad_ids():
    rng = np.random.default_rng(8)
    dec = micro_decoder(rng)
    enc_bad = TokenSequence(Tensor(rng.standard_normal((4, 7))),
                            np.zeros(4, dtype=np.uint8))
    with pytest.raises(ShapeError):
        build_lattice(enc_bad, Transcript(np.array([1])), dec)
    enc = TokenSequence(Tensor(rng.standard_normal((4, 5))),
                        np.zeros(4, dtype=np.uint8))
    with pytest.raises(DataError):
        build_lattice(enc, Transcript(np.array([4])), dec)  # v = 3
    with pytest.raises(ShapeError):
        build_lattice(TokenSequence(Tensor(np.zeros((0, 5))),
                                    np.zeros(0, dtype=np.uint8)),
                      Transcript(np.array([1])), dec)


def test_rnnt_loss_is_mean_of_negative_log_probs():
    rng = np.random.default_rng(9)
    dec = micro_decoder(rng)
    batch = []
    singles = []
    for _ in range(3):
        enc = TokenSequence(Tensor(rng.standard_normal((5, 5))),
                            np.zeros(5, dtype=np.uint8))
        txt = Transcript(rng.integers(1, 4, size=2))
        batch.append((enc, txt))
        singles.append(float(rnnt_log_prob(
            build_lattice(enc, txt, dec)).data))
    loss = float(rnnt_loss(batch, dec).data)
    assert loss == pytest.approx(-np.mean(singles), abs=1e-12)
    with pytest.raises(DataError):
        rnnt_loss([], dec)


def test_greedy_decode_emission_cap_and_determinism():
    rng = np.random.default_rng(10)
    dec = micro_decoder(rng)
    # bias the output layer so blank never wins: emissions hit the cap
    dec.b_out.data[BLANK_ID] = -50.0
    enc = TokenSequence(Tensor(rng.standard_normal((3, 5))),
                        np.zeros(3, dtype=np.uint8))
    for cap in (1, 2, 5):
        out = greedy_decode(enc, dec, max_emissions_per_token=cap)
        assert len(out.ids) == 3 * cap
    a = greedy_decode(enc, dec, max_emissions_per_token=4)
    b = greedy_decode(enc, dec, max_emissions_per_token=4)
    assert np.array_equal(a.ids, b.ids)
    with pytest.raises(ConfigError):
        greedy_decode(enc, dec, max_emissions_per_token=0)


def test_greedy_decode_all_blank_bias_emits_nothing():
    rng = np.random.default_rng(11)
    dec = micro_decoder(rng)
    dec.b_out.data[BLANK_ID] = 50.0
    enc = TokenSequence(Tensor(rng.standard_normal((4, 5))),
                        np.zeros(4, dtype=np.uint8))
    assert len(greedy_decode(enc, dec).ids) == 0


def test_transcript_validation():
    with pytest.raises(DataError):
        Transcript(np.array([0, 1]))          # blank id not a grapheme
    with pytest.raises(DataError):
        Transcript(np.array([[1, 2]]))        # not 1-d
    t = Transcript(np.array([2, 1]))
    assert len(t) == 2


def test_vocabulary_validation():
    with pytest.raises(ConfigError):
        Vocabulary(size=1, separator=1)
    with pytest.raises(ConfigError):
        Vocabulary(size=4, separator=5)
    v = Vocabulary(size=4, separator=4)
    assert v.size == 4
