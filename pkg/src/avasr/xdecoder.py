"""Cross-attention transformer decoder, the alternative to the transducer.

Autoregressive decoder over grapheme targets framed with BOS/EOS: the class
set has V + 2 entries (graphemes 1..V at indices 0..V-1, BOS at V, EOS at
V+1), so with zero classifier weights the per-position loss is exactly
log(V + 2).  Blocks are pre-norm: causal self-attention, cross-attention
over the encoded tokens, feed-forward, each residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from avasr.autodiff import (Tensor, gather_rows, layer_norm, log_softmax,
                            matmul, mul, relu, reshape, softmax, sum_all,
                            swapaxes)
from avasr.encoder import sinusoidal_positions
from avasr.errors import ConfigError, DataError, ShapeError
from avasr.frontend import TokenSequence
from avasr.transducer import Transcript

_MASK_NEG = -1e30


def n_classes(vocab_size: int) -> int:
    """Output class count: V graphemes plus BOS plus EOS."""
    return vocab_size + 2


def bos_class(vocab_size: int) -> int:
    return vocab_size


def eos_class(vocab_size: int) -> int:
    return vocab_size + 1


@dataclass
class XBlockParams:
    sa_ln_g: Tensor
    sa_ln_b: Tensor
    sa_wq: Tensor
    sa_wk: Tensor
    sa_wv: Tensor
    sa_wo: Tensor
    ca_ln_g: Tensor
    ca_ln_b: Tensor
    ca_wq: Tensor
    ca_wk: Tensor
    ca_wv: Tensor
    ca_wo: Tensor
    ff_ln_g: Tensor
    ff_ln_b: Tensor
    ff_w1: Tensor
    ff_b1: Tensor
    ff_w2: Tensor
    ff_b2: Tensor


@dataclass
class XDecoderParams:
    """Embedding (V+2, E), decoder blocks, classifier (E, V+2)."""

    embed: Tensor
    blocks: list[XBlockParams]
    w_cls: Tensor
    b_cls: Tensor
    n_heads: int

    def __post_init__(self):
        if self.embed.shape[0] != self.w_cls.shape[1]:
            raise ConfigError(
                f"embedding has {self.embed.shape[0]} rows but classifier "
                f"emits {self.w_cls.shape[1]} classes; BOS/EOS rows missing")

    @property
    def vocab_size(self) -> int:
        return self.embed.shape[0] - 2


def _attention(q_in: Tensor, kv_in: Tensor, wq: Tensor, wk: Tensor,
               wv: Tensor, wo: Tensor, n_heads: int,
               mask: Tensor | None = None) -> Tensor:
    """Multi-head attention with separate query and key/value sources."""
    tq = q_in.shape[0]
    tk = kv_in.shape[0]
    p = wq.shape[1]
    if p % n_heads != 0:
        raise ShapeError(
            f"attention width {p} not divisible by {n_heads} heads")
    ph = p // n_heads

    def split(x, w, t):
        return swapaxes(reshape(matmul(x, w), (t, n_heads, ph)), 0, 1)

    q = split(q_in, wq, tq)
    k = split(kv_in, wk, tk)
    v = split(kv_in, wv, tk)
    scores = mul(matmul(q, swapaxes(k, 1, 2)), 1.0 / np.sqrt(ph))
    if mask is not None:
        scores = scores + mask
    ctx = matmul(softmax(scores), v)
    ctx = reshape(swapaxes(ctx, 0, 1), (tq, p))
    return matmul(ctx, wo)


def _causal_mask(t: int) -> Tensor:
    m = np.triu(np.full((t, t), _MASK_NEG), k=1)
    return Tensor(m)


def _decode_states(input_rows: np.ndarray, encoded: TokenSequence,
                   params: XDecoderParams) -> Tensor:
    """Run the stack over embedded input rows; returns (T, E) states."""
    t = len(input_rows)
    x = gather_rows(params.embed, input_rows)
    x = x + Tensor(sinusoidal_positions(t, x.shape[1]))
    mask = _causal_mask(t)
    for blk in params.blocks:
        sa_in = layer_norm(x, blk.sa_ln_g, blk.sa_ln_b)
        x = x + _attention(sa_in, sa_in, blk.sa_wq, blk.sa_wk, blk.sa_wv,
                           blk.sa_wo, params.n_heads, mask)
        ca_in = layer_norm(x, blk.ca_ln_g, blk.ca_ln_b)
        x = x + _attention(ca_in, encoded.tokens, blk.ca_wq, blk.ca_wk,
                           blk.ca_wv, blk.ca_wo, params.n_heads)
        ff_in = layer_norm(x, blk.ff_ln_g, blk.ff_ln_b)
        h = relu(matmul(ff_in, blk.ff_w1) + blk.ff_b1)
        x = x + (matmul(h, blk.ff_w2) + blk.ff_b2)
    return x


def xattn_decode_loss(encoded: TokenSequence, transcript: Transcript,
                      params: XDecoderParams) -> Tensor:
    """Teacher-forced cross-entropy, mean over the K+1 target positions.

    Input sequence is [BOS, g_1..g_K]; targets are [g_1..g_K, EOS].
    """
    v = params.vocab_size
    ids = transcript.ids
    if len(ids) and ids.max() > v:
        raise DataError(
            f"transcript id {ids.max()} exceeds vocabulary size {v}")
    k = len(ids)
    input_rows = np.empty(k + 1, dtype=np.int64)
    input_rows[0] = bos_class(v)
    input_rows[1:] = ids - 1
    targets = np.empty(k + 1, dtype=np.int64)
    targets[:k] = ids - 1
    targets[k] = eos_class(v)
    states = _decode_states(input_rows, encoded, params)
    logits = matmul(states, params.w_cls) + params.b_cls
    logp = log_softmax(logits)
    onehot = np.zeros((k + 1, n_classes(v)))
    onehot[np.arange(k + 1), targets] = 1.0
    picked = sum_all(mul(logp, Tensor(onehot)))
    return mul(picked, -1.0 / (k + 1))


def xattn_generate(encoded: TokenSequence, params: XDecoderParams,
                   max_len: int = 64) -> Transcript:
    """Greedy autoregressive decode until EOS or the length cap."""
    v = params.vocab_size
    rows = [bos_class(v)]
    out: list[int] = []
    for _ in range(max_len):
        states = _decode_states(np.asarray(rows, dtype=np.int64), encoded,
                                params)
        last = states.data[-1]
        scores = last @ params.w_cls.data + params.b_cls.data
        cls = int(np.argmax(scores))
        if cls == eos_class(v):
            break
        if cls == bos_class(v):
            # never a valid continuation; treat like EOS to guarantee progress
            break
        out.append(cls + 1)
        rows.append(cls)
    return Transcript(np.asarray(out, dtype=np.int64))
