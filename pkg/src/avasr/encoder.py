"""Conformer encoder over mixed audio+visual tokens, with bottleneck adapters.

Each block applies four residual sublayers in order: feed-forward,
multi-head self-attention, a convolution module (pointwise/GLU, depthwise,
swish, pointwise), and a second feed-forward; every sublayer is
y = x + sublayer(layer_norm(x)).  Adapters are applied to the output of the
last k blocks.  Bit-for-bit identity at zero output projections is the
anchor property: a freshly added adapter must not move the frozen model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from avasr.autodiff import (Tensor, concat, depthwise_conv1d, layer_norm,
                            matmul, mul, relu, reshape, sigmoid, slice_,
                            softmax, swapaxes)
from avasr.errors import ConfigError, ShapeError
from avasr.frontend import MODALITY_AUDIO, TokenSequence

ADAPTER_FF = "ff"
ADAPTER_FF_SA = "ff_sa"


@dataclass
class EncoderConfig:
    n_blocks: int = 6          # desk default; paper-scale uses 24
    d_model: int = 64
    n_heads: int = 4
    conv_kernel: int = 7
    ff_mult: int = 4
    adapter_kind: str = ADAPTER_FF
    adapter_layers: tuple[int, ...] = ()   # 1-based block indices, last k
    bottleneck: int = 16
    visual_position: str = "prepend"       # or "append"

    def __post_init__(self):
        if self.conv_kernel % 2 != 1 or self.conv_kernel < 1:
            raise ConfigError(
                f"conv_kernel must be odd and positive, got {self.conv_kernel}")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"n_heads {self.n_heads} must divide d_model {self.d_model}")
        if self.adapter_kind not in (ADAPTER_FF, ADAPTER_FF_SA):
            raise ConfigError(
                f"adapter_kind must be '{ADAPTER_FF}' or '{ADAPTER_FF_SA}', "
                f"got {self.adapter_kind!r}")
        if self.visual_position not in ("prepend", "append"):
            raise ConfigError(
                f"visual_position must be 'prepend' or 'append', "
                f"got {self.visual_position!r}")
        layers = tuple(sorted(self.adapter_layers))
        if layers:
            if layers[0] < 1 or layers[-1] > self.n_blocks:
                raise ConfigError(
                    f"adapter_layers {layers} outside 1..{self.n_blocks}")
            # placement contract: exactly the last k blocks
            k = len(layers)
            expected = tuple(range(self.n_blocks - k + 1, self.n_blocks + 1))
            if layers != expected:
                raise ConfigError(
                    f"adapter_layers must be the last {k} blocks "
                    f"{expected}, got {layers}")
            if self.bottleneck * 2 > self.d_model:
                raise ConfigError(
                    f"bottleneck {self.bottleneck} must be <= d_model/2 "
                    f"= {self.d_model // 2}")
            if (self.adapter_kind == ADAPTER_FF_SA
                    and self.bottleneck % self.n_heads != 0):
                raise ConfigError(
                    f"FF+SA adapter needs n_heads {self.n_heads} to divide "
                    f"bottleneck {self.bottleneck}")
        self.adapter_layers = layers


def last_k_layers(n_blocks: int, k: int) -> tuple[int, ...]:
    """The 1-based indices of the last k blocks."""
    if not 0 <= k <= n_blocks:
        raise ConfigError(f"adapter layer count {k} outside 0..{n_blocks}")
    return tuple(range(n_blocks - k + 1, n_blocks + 1))


@dataclass
class BlockParams:
    """Weights of one conformer block (backbone group)."""

    ff1_ln_g: Tensor
    ff1_ln_b: Tensor
    ff1_w1: Tensor
    ff1_b1: Tensor
    ff1_w2: Tensor
    ff1_b2: Tensor
    att_ln_g: Tensor
    att_ln_b: Tensor
    att_wq: Tensor
    att_bq: Tensor
    att_wk: Tensor
    att_bk: Tensor
    att_wv: Tensor
    att_bv: Tensor
    att_wo: Tensor
    att_bo: Tensor
    conv_ln_g: Tensor
    conv_ln_b: Tensor
    conv_pw1_w: Tensor
    conv_pw1_b: Tensor
    conv_dw_w: Tensor
    conv_dw_b: Tensor
    conv_pw2_w: Tensor
    conv_pw2_b: Tensor
    ff2_ln_g: Tensor
    ff2_ln_b: Tensor
    ff2_w1: Tensor
    ff2_b1: Tensor
    ff2_w2: Tensor
    ff2_b2: Tensor


@dataclass
class AdapterParams:
    """One adapter (group adapter-phi).

    FF kind: y = x + W2 relu(W1 ln(x) + b1) + b2.  FF+SA kind prepends a
    residual bottleneck self-attention block with its own layer norm.
    """

    kind: str
    ln_g: Tensor
    ln_b: Tensor
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    n_heads: int = 1
    sa_ln_g: Tensor | None = None
    sa_ln_b: Tensor | None = None
    sa_wq: Tensor | None = None
    sa_wk: Tensor | None = None
    sa_wv: Tensor | None = None
    sa_wo: Tensor | None = None

    def param_count(self) -> int:
        n = sum(t.size for t in (self.ln_g, self.ln_b, self.w1, self.b1,
                                 self.w2, self.b2))
        if self.kind == ADAPTER_FF_SA:
            n += sum(t.size for t in (self.sa_ln_g, self.sa_ln_b, self.sa_wq,
                                      self.sa_wk, self.sa_wv, self.sa_wo))
        return n


def adapter_ff_param_count(d: int, b: int) -> int:
    """Exact FF adapter size: W1 + b1 + W2 + b2 + layer-norm scale/shift."""
    return 2 * d * b + b + d + 2 * d


def swish(x: Tensor) -> Tensor:
    return mul(x, sigmoid(x))


def multi_head_attention(x_ln: Tensor, wq: Tensor, wk: Tensor, wv: Tensor,
                         wo: Tensor, n_heads: int,
                         bq: Tensor | None = None, bk: Tensor | None = None,
                         bv: Tensor | None = None,
                         bo: Tensor | None = None) -> Tensor:
    """Standard scaled dot-product attention over one sequence.

    x_ln: (T, D_in); wq/wk/wv: (D_in, P); wo: (P, D_out).  P split into
    n_heads heads.  Returns (T, D_out).
    """
    t_len, _ = x_ln.shape
    p = wq.shape[1]
    if p % n_heads != 0:
        raise ShapeError(
            f"attention width {p} not divisible by {n_heads} heads")
    ph = p // n_heads

    def heads(w, b):
        y = matmul(x_ln, w)
        if b is not None:
            y = y + b
        return swapaxes(reshape(y, (t_len, n_heads, ph)), 0, 1)

    q = heads(wq, bq)
    k = heads(wk, bk)
    v = heads(wv, bv)
    scores = mul(matmul(q, swapaxes(k, 1, 2)), 1.0 / np.sqrt(ph))
    weights = softmax(scores)
    ctx = matmul(weights, v)                      # (H, T, ph)
    ctx = reshape(swapaxes(ctx, 0, 1), (t_len, p))
    out = matmul(ctx, wo)
    if bo is not None:
        out = out + bo
    return out


def _ff_sublayer(x: Tensor, ln_g, ln_b, w1, b1, w2, b2) -> Tensor:
    h = layer_norm(x, ln_g, ln_b)
    h = swish(matmul(h, w1) + b1)
    return x + (matmul(h, w2) + b2)


def _conv_sublayer(x: Tensor, p: BlockParams, kernel: int) -> Tensor:
    d = x.shape[1]
    h = layer_norm(x, p.conv_ln_g, p.conv_ln_b)
    h = matmul(h, p.conv_pw1_w) + p.conv_pw1_b      # (T, 2D)
    a = slice_(h, (slice(None), slice(0, d)))
    g = slice_(h, (slice(None), slice(d, 2 * d)))
    h = mul(a, sigmoid(g))                          # GLU
    half = kernel // 2
    h = depthwise_conv1d(h, p.conv_dw_w, p.conv_dw_b, pad=(half, half))
    h = swish(h)
    return x + (matmul(h, p.conv_pw2_w) + p.conv_pw2_b)


def conformer_block(x: TokenSequence, params: BlockParams, n_heads: int,
                    conv_kernel: int) -> TokenSequence:
    """One block: FF, self-attention, convolution module, FF; all residual."""
    h = x.tokens
    h = _ff_sublayer(h, params.ff1_ln_g, params.ff1_ln_b, params.ff1_w1,
                     params.ff1_b1, params.ff1_w2, params.ff1_b2)
    att_in = layer_norm(h, params.att_ln_g, params.att_ln_b)
    h = h + multi_head_attention(
        att_in, params.att_wq, params.att_wk, params.att_wv, params.att_wo,
        n_heads, params.att_bq, params.att_bk, params.att_bv, params.att_bo)
    h = _conv_sublayer(h, params, conv_kernel)
    h = _ff_sublayer(h, params.ff2_ln_g, params.ff2_ln_b, params.ff2_w1,
                     params.ff2_b1, params.ff2_w2, params.ff2_b2)
    return TokenSequence(h, x.modality)


def adapt(x: TokenSequence, phi: AdapterParams) -> TokenSequence:
    """Apply one adapter over the full (audio and visual) sequence."""
    h = x.tokens
    d = h.shape[1]
    if phi.w1.shape[0] != d:
        raise ShapeError(
            f"adapter expects width {phi.w1.shape[0]}, input has {d}")
    if phi.kind == ADAPTER_FF_SA:
        sa_in = layer_norm(h, phi.sa_ln_g, phi.sa_ln_b)
        h = h + multi_head_attention(sa_in, phi.sa_wq, phi.sa_wk, phi.sa_wv,
                                     phi.sa_wo, phi.n_heads)
    inner = relu(matmul(layer_norm(h, phi.ln_g, phi.ln_b), phi.w1) + phi.b1)
    h = h + (matmul(inner, phi.w2) + phi.b2)
    return TokenSequence(h, x.modality)


def sinusoidal_positions(length: int, d_model: int) -> np.ndarray:
    """Fixed sinusoidal positional encodings, (length, d_model)."""
    pe = np.zeros((length, d_model))
    if length == 0:
        return pe
    pos = np.arange(length)[:, None].astype(np.float64)
    div = np.exp(np.arange(0, d_model, 2) * (-np.log(10000.0) / d_model))
    ang = pos * div                       # (length, ceil(d_model/2))
    pe[:, 0::2] = np.sin(ang)
    pe[:, 1::2] = np.cos(ang[:, :d_model // 2])
    return pe


@dataclass
class EncoderParams:
    blocks: list[BlockParams] = field(default_factory=list)
    adapters: dict[int, AdapterParams] = field(default_factory=dict)


def encode(audio: TokenSequence, visual: TokenSequence, cfg: EncoderConfig,
           params: EncoderParams) -> TokenSequence:
    """Run the full encoder; returns contextualized audio positions only.

    Visual tokens are prepended (or appended, per config), each modality
    gets sinusoidal positional encodings indexed from its own start (audio
    positions read identically whether or not visual tokens are present,
    so adapters trained without them keep working when they appear), the
    blocks run in order with adapters after each selected block, and the
    visual positions are dropped at the end.
    """
    d = cfg.d_model
    if audio.width != d or (visual.length > 0 and visual.width != d):
        raise ShapeError(
            f"encoder width {d} but audio width {audio.width}, "
            f"visual width {visual.width}")
    if len(params.blocks) != cfg.n_blocks:
        raise ShapeError(
            f"config has {cfg.n_blocks} blocks, params have "
            f"{len(params.blocks)}")
    n = audio.length
    m = visual.length
    audio_pe = TokenSequence(audio.tokens + Tensor(
        sinusoidal_positions(n, d)), audio.modality)
    if m:
        visual_pe = TokenSequence(visual.tokens + Tensor(
            sinusoidal_positions(m, d)), visual.modality)
    if cfg.visual_position == "prepend":
        parts = [visual_pe, audio_pe] if m else [audio_pe]
        audio_slice = slice(m, m + n)
    else:
        parts = [audio_pe, visual_pe] if m else [audio_pe]
        audio_slice = slice(0, n)
    if len(parts) == 2:
        tokens = concat([parts[0].tokens, parts[1].tokens], axis=0)
        modality = np.concatenate([parts[0].modality, parts[1].modality])
    else:
        tokens = parts[0].tokens
        modality = parts[0].modality
    seq = TokenSequence(tokens, modality)
    for idx, block in enumerate(params.blocks, start=1):
        seq = conformer_block(seq, block, cfg.n_heads, cfg.conv_kernel)
        if idx in cfg.adapter_layers:
            seq = adapt(seq, params.adapters[idx])
    out = slice_(seq.tokens, (audio_slice, slice(None)))
    return TokenSequence(out, np.full(n, MODALITY_AUDIO, dtype=np.uint8))
