"""Transducer decoder: prediction network, join, lattice loss, greedy decode.

The loss marginalizes over every monotone path through an N x (K+1) grid:
exactly N blank moves (advance the encoder index) and K label moves (emit
the next transcript grapheme), C(N+K, K) paths in total.  Entry (i, j, s) of
the lattice is log P(s | encoder token i, transcript prefix of length j).
A label move from grid column i = N conditions on the last encoder token
(row index clamped to N-1); the enumeration oracle in the tests uses the
identical convention.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from avasr.autodiff import (Tensor, accumulate_grad, custom_node, gather_rows,
                            log_softmax, lstm, matmul, mean_all, mul, reshape,
                            stack_scalars, tanh)
from avasr.autodiff import kernels
from avasr.errors import ConfigError, DataError, ShapeError
from avasr.frontend import TokenSequence

BLANK_ID = 0


@dataclass(frozen=True)
class Vocabulary:
    """Grapheme inventory: ids 1..size, blank = 0, separator marks spaces."""

    size: int
    separator: int

    def __post_init__(self):
        if self.size < 2:
            raise ConfigError(f"vocabulary needs size >= 2, got {self.size}")
        if not 1 <= self.separator <= self.size:
            raise ConfigError(
                f"separator id {self.separator} outside 1..{self.size}")

    @property
    def sos_id(self) -> int:
        """Internal start-of-sequence id; never emitted."""
        return self.size + 1

    def words(self, ids: Sequence[int]) -> list[tuple[int, ...]]:
        """Split an id sequence into words at the separator grapheme."""
        out: list[tuple[int, ...]] = []
        cur: list[int] = []
        for g in ids:
            if g == self.separator:
                if cur:
                    out.append(tuple(cur))
                    cur = []
            else:
                cur.append(int(g))
        if cur:
            out.append(tuple(cur))
        return out


@dataclass
class Transcript:
    """Grapheme ids in 1..V; never contains the blank."""

    ids: np.ndarray

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        if self.ids.ndim != 1:
            raise DataError(
                f"transcript ids must be 1-d, got shape {self.ids.shape}")
        if self.ids.size and self.ids.min() <= BLANK_ID:
            raise DataError("transcript contains the blank/invalid id 0")

    def __len__(self) -> int:
        return int(self.ids.size)


@dataclass
class DecoderParams:
    """Prediction network (two LSTM layers), additive join, grapheme head.

    embed: (V+1, E) with grapheme g at row g-1 and the start symbol at row V
    (blank is never embedded).  Join: tanh(W_enc t + W_pred h + b_join),
    classifier (J, V+1).
    """

    embed: Tensor
    lstm1_wx: Tensor
    lstm1_wh: Tensor
    lstm1_b: Tensor
    lstm2_wx: Tensor
    lstm2_wh: Tensor
    lstm2_b: Tensor
    w_enc: Tensor
    w_pred: Tensor
    b_join: Tensor
    w_out: Tensor
    b_out: Tensor

    @property
    def vocab_size(self) -> int:
        return self.embed.shape[0] - 1

    @property
    def width(self) -> int:
        return self.embed.shape[1]


@dataclass
class LogitLattice:
    """Normalized log-probability grid plus the transcript it was built for.

    logits: (N, K+1, V+1) with each (i, j) slice log-normalized; labels: the
    K grapheme ids, where labels[j] indexes the emission taken when moving
    from grid column j to j+1.
    """

    logits: Tensor
    labels: np.ndarray

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.logits.shape


def _embed_rows(transcript_ids: np.ndarray, vocab_size: int) -> np.ndarray:
    """Map external ids [SOS, w_1..w_K] onto embedding-table rows."""
    rows = np.empty(len(transcript_ids) + 1, dtype=np.int64)
    rows[0] = vocab_size                 # start symbol at the last row
    rows[1:] = transcript_ids - 1        # grapheme g at row g-1
    return rows


def prediction_states(transcript: Transcript, dec: DecoderParams) -> Tensor:
    """Hidden states h_0..h_K of the two-layer LSTM prediction network."""
    rows = _embed_rows(transcript.ids, dec.vocab_size)
    x = gather_rows(dec.embed, rows)
    h = lstm(x, dec.lstm1_wx, dec.lstm1_wh, dec.lstm1_b)
    h = lstm(h, dec.lstm2_wx, dec.lstm2_wh, dec.lstm2_b)
    return h


def build_lattice(encoded: TokenSequence, transcript: Transcript,
                  dec: DecoderParams) -> LogitLattice:
    """Compute the full (N, K+1, V+1) log-probability lattice."""
    n = encoded.length
    if n < 1:
        raise ShapeError("build_lattice needs at least one encoder token")
    if encoded.width != dec.w_enc.shape[0]:
        raise ShapeError(
            f"encoder width {encoded.width} does not match join input "
            f"{dec.w_enc.shape[0]}")
    if len(transcript) and transcript.ids.max() > dec.vocab_size:
        raise DataError(
            f"transcript id {transcript.ids.max()} exceeds vocabulary "
            f"size {dec.vocab_size}")
    k = len(transcript)
    h = prediction_states(transcript, dec)            # (K+1, E)
    enc_part = matmul(encoded.tokens, dec.w_enc)      # (N, J)
    pred_part = matmul(h, dec.w_pred)                 # (K+1, J)
    j_dim = dec.w_enc.shape[1]
    z = tanh(reshape(enc_part, (n, 1, j_dim))
             + reshape(pred_part, (1, k + 1, j_dim))
             + dec.b_join)
    logits = matmul(z, dec.w_out) + dec.b_out
    return LogitLattice(log_softmax(logits), transcript.ids.copy())


def rnnt_log_prob(lattice: LogitLattice) -> Tensor:
    """log P(transcript | encoded): forward DP over all monotone paths.

    Differentiable: the backward pass scatters occupancy gradients onto the
    lattice entries the DP actually used.
    """
    logits = lattice.logits
    labels = lattice.labels
    n, k1, _ = logits.shape
    k = k1 - 1
    if len(labels) != k:
        raise ShapeError(
            f"lattice has {k1} prefix columns but {len(labels)} labels")
    blank = np.ascontiguousarray(logits.data[:, :, BLANK_ID])
    if k:
        lab = np.ascontiguousarray(logits.data[:, np.arange(k), labels])
    else:
        lab = np.zeros((n, 0))
    alpha, log_z = kernels.rnnt_forward(blank, lab)

    def bw(g: np.ndarray) -> None:
        dblank, dlab = kernels.rnnt_backward(blank, lab, alpha, log_z)
        dlat = np.zeros_like(logits.data)
        gs = float(g)
        dlat[:, :, BLANK_ID] = gs * dblank
        for j in range(k):
            dlat[:, j, labels[j]] += gs * dlab[:, j]
        accumulate_grad(logits, dlat)

    return custom_node(np.asarray(log_z), (logits,), bw)


def rnnt_loss(batch: Sequence[tuple[TokenSequence, Transcript]],
              dec: DecoderParams) -> Tensor:
    """Mean over the batch of -log P(transcript | encoded)."""
    if not batch:
        raise DataError("rnnt_loss needs a non-empty batch")
    neg_logs = [mul(rnnt_log_prob(build_lattice(enc, txt, dec)), -1.0)
                for enc, txt in batch]
    return mean_all(stack_scalars(neg_logs))


# ---------------------------------------------------------------------------
# greedy decoding (pure numpy, no tape)
# ---------------------------------------------------------------------------

def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class _PredState:
    """Streaming prediction-network state for decoding."""

    def __init__(self, dec: DecoderParams):
        self.dec = dec
        e = dec.width
        self.h1 = np.zeros(e)
        self.c1 = np.zeros(e)
        self.h2 = np.zeros(e)
        self.c2 = np.zeros(e)

    @staticmethod
    def _step(x, h, c, wx, wh, b):
        e = h.shape[0]
        pre = x @ wx + h @ wh + b
        i = _sigmoid_np(pre[:e])
        f = _sigmoid_np(pre[e:2 * e])
        g = np.tanh(pre[2 * e:3 * e])
        o = _sigmoid_np(pre[3 * e:])
        c2 = f * c + i * g
        return o * np.tanh(c2), c2

    def feed(self, embed_row: int) -> None:
        d = self.dec
        x = d.embed.data[embed_row]
        self.h1, self.c1 = self._step(x, self.h1, self.c1, d.lstm1_wx.data,
                                      d.lstm1_wh.data, d.lstm1_b.data)
        self.h2, self.c2 = self._step(self.h1, self.h2, self.c2,
                                      d.lstm2_wx.data, d.lstm2_wh.data,
                                      d.lstm2_b.data)


def greedy_decode(encoded: TokenSequence, dec: DecoderParams,
                  max_emissions_per_token: int = 8) -> Transcript:
    """Greedy path: emit argmax graphemes until blank or cap, per token."""
    if max_emissions_per_token < 1:
        raise ConfigError(
            f"max_emissions_per_token must be >= 1, got "
            f"{max_emissions_per_token}")
    v = dec.vocab_size
    enc_part = encoded.tokens.data @ dec.w_enc.data    # (N, J)
    state = _PredState(dec)
    state.feed(v)                                      # start symbol row
    out: list[int] = []
    for i in range(encoded.length):
        for _ in range(max_emissions_per_token):
            z = np.tanh(enc_part[i] + state.h2 @ dec.w_pred.data
                        + dec.b_join.data)
            scores = z @ dec.w_out.data + dec.b_out.data
            sym = int(np.argmax(scores))
            if sym == BLANK_ID:
                break
            out.append(sym)
            state.feed(sym - 1)
    return Transcript(np.asarray(out, dtype=np.int64))
