"""Model configuration, parameter initialization, and forward assembly.

``build_model`` creates every tensor in a fixed traversal order from one
seeded generator, so a (config, seed) pair pins the whole model bit-for-bit.
The backbone (frontend, conformer blocks) and decoder stand in for a
pretrained recognizer and stay frozen throughout; adapters and the visual
projector are the trainable add-ons.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np

from avasr import visual as visual_mod
from avasr.autodiff import Tensor
from avasr.encoder import (ADAPTER_FF, ADAPTER_FF_SA, AdapterParams,
                           BlockParams, EncoderConfig, EncoderParams, encode,
                           last_k_layers)
from avasr.errors import ConfigError, DataError, ShapeError
from avasr.frontend import (FrontendParams, Spectrogram, TokenSequence,
                            empty_token_sequence, tokenize)
from avasr.params import (GROUP_ADAPTER, GROUP_BACKBONE, GROUP_DECODER,
                          GROUP_PROJECTOR, ParameterTree)
from avasr.transducer import (BLANK_ID, DecoderParams, Transcript,
                              Vocabulary, greedy_decode, rnnt_loss)
from avasr.visual import ProjectorParams, VisualFeatures
from avasr.xdecoder import (XBlockParams, XDecoderParams, n_classes,
                            xattn_decode_loss, xattn_generate)

DECODER_TRANSDUCER = "transducer"
DECODER_XATTN = "cross_attention"


@dataclass
class ModelConfig:
    """Every architectural knob, with desk-scale defaults.

    Paper-scale values (not desk defaults): 24 blocks, 0.6B-parameter
    backbone widths, bottleneck 64, CLIP-sized visual_dim 768, 8-block
    cross-attention decoder.
    """

    d_model: int = 32
    n_blocks: int = 3
    n_heads: int = 2
    conv_kernel: int = 7
    ff_mult: int = 2
    n_mels: int = 16
    adapter_kind: str = ADAPTER_FF
    n_adapter_layers: int | None = None    # None = every block
    bottleneck: int = 16
    adapter_random_output_init: bool = False
    visual_dim: int = 32
    visual_tokens: int = 4
    visual_position: str = "prepend"
    projector_depth: int = 1
    vocab_size: int = 12
    separator_id: int = 12
    decoder_type: str = DECODER_TRANSDUCER
    decoder_width: int = 24
    join_width: int = 24
    xattn_depth: int = 8
    max_emissions_per_token: int = 8

    def __post_init__(self):
        if self.decoder_type not in (DECODER_TRANSDUCER, DECODER_XATTN):
            raise ConfigError(
                f"decoder_type must be '{DECODER_TRANSDUCER}' or "
                f"'{DECODER_XATTN}', got {self.decoder_type!r}")
        if self.n_adapter_layers is not None:
            if not 0 <= self.n_adapter_layers <= self.n_blocks:
                raise ConfigError(
                    f"n_adapter_layers {self.n_adapter_layers} outside "
                    f"0..{self.n_blocks}")
        if not 1 <= self.projector_depth <= 4:
            raise ConfigError(
                f"projector_depth must be 1-4, got {self.projector_depth}")
        if self.visual_tokens < 0:
            raise ConfigError(
                f"visual_tokens must be >= 0, got {self.visual_tokens}")
        if (self.decoder_type == DECODER_XATTN
                and self.decoder_width % self.n_heads != 0):
            raise ConfigError(
                f"decoder_width {self.decoder_width} not divisible by "
                f"n_heads {self.n_heads}")
        if self.decoder_type == DECODER_TRANSDUCER:
            # the prediction state codes one grapheme per coordinate and
            # the join needs one classifier direction per output class
            if self.decoder_width < self.vocab_size + 1:
                raise ConfigError(
                    f"decoder_width {self.decoder_width} below "
                    f"vocab_size + 1 = {self.vocab_size + 1}")
            if self.join_width < self.vocab_size + 1:
                raise ConfigError(
                    f"join_width {self.join_width} below "
                    f"vocab_size + 1 = {self.vocab_size + 1}")
        # vocabulary sanity; separator range checked by Vocabulary
        Vocabulary(self.vocab_size, self.separator_id)
        self.encoder_config()  # validates encoder fields

    def adapter_layer_indices(self) -> tuple[int, ...]:
        k = (self.n_blocks if self.n_adapter_layers is None
             else self.n_adapter_layers)
        return last_k_layers(self.n_blocks, k)

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            n_blocks=self.n_blocks,
            d_model=self.d_model,
            n_heads=self.n_heads,
            conv_kernel=self.conv_kernel,
            ff_mult=self.ff_mult,
            adapter_kind=self.adapter_kind,
            adapter_layers=self.adapter_layer_indices(),
            bottleneck=self.bottleneck,
            visual_position=self.visual_position,
        )

    def vocabulary(self) -> Vocabulary:
        return Vocabulary(self.vocab_size, self.separator_id)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(
                f"unknown model config key {sorted(unknown)[0]!r}")
        return cls(**d)


class _Init:
    """Fan-in uniform initializer drawing from one seeded stream."""

    def __init__(self, seed: int):
        self.rng = np.random.default_rng(np.random.SeedSequence([int(seed)]))

    def uniform(self, shape: tuple[int, ...], fan_in: int,
                scale: float = 1.0) -> np.ndarray:
        a = scale / np.sqrt(fan_in)
        return self.rng.uniform(-a, a, size=shape)


class Model:
    """Config + parameter tree + typed parameter views."""

    def __init__(self, cfg: ModelConfig, tree: ParameterTree,
                 frontend: FrontendParams, encoder: EncoderParams,
                 projector: ProjectorParams,
                 decoder: DecoderParams | None,
                 xdecoder: XDecoderParams | None,
                 init_seed: int):
        self.cfg = cfg
        self.tree = tree
        self.frontend = frontend
        self.encoder = encoder
        self.projector = projector
        self.decoder = decoder
        self.xdecoder = xdecoder
        self.init_seed = init_seed
        self.vocab = cfg.vocabulary()

    # -- forward pieces -------------------------------------------------------

    def audio_tokens(self, features: np.ndarray,
                     frame_period: float = 0.01) -> TokenSequence:
        if features.shape[1] != self.cfg.n_mels:
            raise DataError(
                f"audio feature dim {features.shape[1]} != config n_mels "
                f"{self.cfg.n_mels}")
        return tokenize(Spectrogram(features, frame_period), self.frontend)

    def visual_tokens(self, features: np.ndarray | VisualFeatures
                      ) -> TokenSequence:
        if isinstance(features, VisualFeatures):
            feats = features
        else:
            feats = VisualFeatures(np.asarray(features, dtype=np.float64))
        if feats.dim != self.cfg.visual_dim:
            raise DataError(
                f"visual feature dim {feats.dim} != config visual_dim "
                f"{self.cfg.visual_dim}")
        return visual_mod.project(feats, self.projector)

    def encode_tokens(self, audio: TokenSequence,
                      vis: TokenSequence | None) -> TokenSequence:
        if vis is None:
            vis = empty_token_sequence(self.cfg.d_model)
        return encode(audio, vis, self.encoder_cfg, self.encoder)

    def encode_utterance(self, audio_features: np.ndarray,
                         visual_features: np.ndarray | None) -> TokenSequence:
        audio = self.audio_tokens(audio_features)
        vis = (None if visual_features is None
               else self.visual_tokens(visual_features))
        return self.encode_tokens(audio, vis)

    @property
    def encoder_cfg(self) -> EncoderConfig:
        if not hasattr(self, "_enc_cfg"):
            self._enc_cfg = self.cfg.encoder_config()
        return self._enc_cfg

    # -- loss and decoding ----------------------------------------------------

    def batch_loss(self, batch: Sequence[tuple[np.ndarray,
                                               np.ndarray | None,
                                               Transcript]]) -> Tensor:
        """Mean loss over (audio features, visual features|None, transcript)."""
        if not batch:
            raise DataError("batch_loss needs a non-empty batch")
        if self.cfg.decoder_type == DECODER_TRANSDUCER:
            pairs = [(self.encode_utterance(a, v), t) for a, v, t in batch]
            return rnnt_loss(pairs, self.decoder)
        from avasr.autodiff import mean_all, stack_scalars
        losses = [xattn_decode_loss(self.encode_utterance(a, v), t,
                                    self.xdecoder)
                  for a, v, t in batch]
        return mean_all(stack_scalars(losses))

    def transcribe(self, audio_features: np.ndarray,
                   visual_features: np.ndarray | None) -> np.ndarray:
        encoded = self.encode_utterance(audio_features, visual_features)
        if self.cfg.decoder_type == DECODER_TRANSDUCER:
            out = greedy_decode(encoded, self.decoder,
                                self.cfg.max_emissions_per_token)
        else:
            out = xattn_generate(encoded, self.xdecoder,
                                 max_len=4 * encoded.length + 8)
        return out.ids


def build_model(cfg: ModelConfig, seed: int) -> Model:
    """Create and initialize all parameters; traversal order is fixed."""
    init = _Init(seed)
    tree = ParameterTree()
    d = cfg.d_model
    s = cfg.n_mels

    def add(name, shape, group, fan_in=None, kind="uniform", scale=1.0,
            data=None):
        if data is None:
            if kind == "zeros":
                data = np.zeros(shape)
            elif kind == "ones":
                data = np.ones(shape)
            else:
                data = init.uniform(shape, fan_in, scale)
        return tree.add(name, data, group)

    # frontend (backbone)
    frontend = FrontendParams(
        conv1_w=add("frontend.conv1_w", (3, s, d), GROUP_BACKBONE, 3 * s),
        conv1_b=add("frontend.conv1_b", (d,), GROUP_BACKBONE, kind="zeros"),
        conv2_w=add("frontend.conv2_w", (3, d, d), GROUP_BACKBONE, 3 * d),
        conv2_b=add("frontend.conv2_b", (d,), GROUP_BACKBONE, kind="zeros"),
        lin_w=add("frontend.lin_w", (d, d), GROUP_BACKBONE, d),
        lin_b=add("frontend.lin_b", (d,), GROUP_BACKBONE, kind="zeros"),
    )

    # conformer blocks (backbone)
    blocks = []
    dff = cfg.ff_mult * d
    for i in range(1, cfg.n_blocks + 1):
        p = f"enc.block{i}."

        def ln(suffix):
            return (add(p + suffix + "_g", (d,), GROUP_BACKBONE, kind="ones"),
                    add(p + suffix + "_b", (d,), GROUP_BACKBONE,
                        kind="zeros"))

        ff1_g, ff1_b = ln("ff1_ln")
        ff1_w1 = add(p + "ff1_w1", (d, dff), GROUP_BACKBONE, d)
        ff1_b1 = add(p + "ff1_b1", (dff,), GROUP_BACKBONE, kind="zeros")
        ff1_w2 = add(p + "ff1_w2", (dff, d), GROUP_BACKBONE, dff)
        ff1_b2 = add(p + "ff1_b2", (d,), GROUP_BACKBONE, kind="zeros")
        att_g, att_b = ln("att_ln")
        att = {w: add(p + f"att_w{w}", (d, d), GROUP_BACKBONE, d)
               for w in "qkvo"}
        attb = {w: add(p + f"att_b{w}", (d,), GROUP_BACKBONE, kind="zeros")
                for w in "qkvo"}
        conv_g, conv_b = ln("conv_ln")
        pw1_w = add(p + "conv_pw1_w", (d, 2 * d), GROUP_BACKBONE, d)
        pw1_b = add(p + "conv_pw1_b", (2 * d,), GROUP_BACKBONE, kind="zeros")
        dw_w = add(p + "conv_dw_w", (cfg.conv_kernel, d), GROUP_BACKBONE,
                   cfg.conv_kernel)
        dw_b = add(p + "conv_dw_b", (d,), GROUP_BACKBONE, kind="zeros")
        pw2_w = add(p + "conv_pw2_w", (d, d), GROUP_BACKBONE, d)
        pw2_b = add(p + "conv_pw2_b", (d,), GROUP_BACKBONE, kind="zeros")
        ff2_g, ff2_b = ln("ff2_ln")
        ff2_w1 = add(p + "ff2_w1", (d, dff), GROUP_BACKBONE, d)
        ff2_b1 = add(p + "ff2_b1", (dff,), GROUP_BACKBONE, kind="zeros")
        ff2_w2 = add(p + "ff2_w2", (dff, d), GROUP_BACKBONE, dff)
        ff2_b2 = add(p + "ff2_b2", (d,), GROUP_BACKBONE, kind="zeros")
        blocks.append(BlockParams(
            ff1_ln_g=ff1_g, ff1_ln_b=ff1_b, ff1_w1=ff1_w1, ff1_b1=ff1_b1,
            ff1_w2=ff1_w2, ff1_b2=ff1_b2,
            att_ln_g=att_g, att_ln_b=att_b,
            att_wq=att["q"], att_bq=attb["q"], att_wk=att["k"],
            att_bk=attb["k"], att_wv=att["v"], att_bv=attb["v"],
            att_wo=att["o"], att_bo=attb["o"],
            conv_ln_g=conv_g, conv_ln_b=conv_b,
            conv_pw1_w=pw1_w, conv_pw1_b=pw1_b, conv_dw_w=dw_w,
            conv_dw_b=dw_b, conv_pw2_w=pw2_w, conv_pw2_b=pw2_b,
            ff2_ln_g=ff2_g, ff2_ln_b=ff2_b, ff2_w1=ff2_w1, ff2_b1=ff2_b1,
            ff2_w2=ff2_w2, ff2_b2=ff2_b2,
        ))

    # adapters (adapter-phi)
    b = cfg.bottleneck
    out_kind = "uniform" if cfg.adapter_random_output_init else "zeros"
    adapters: dict[int, AdapterParams] = {}
    for i in cfg.adapter_layer_indices():
        p = f"adapter.block{i}."
        kw = dict(
            kind=cfg.adapter_kind,
            ln_g=add(p + "ln_g", (d,), GROUP_ADAPTER, kind="ones"),
            ln_b=add(p + "ln_b", (d,), GROUP_ADAPTER, kind="zeros"),
            w1=add(p + "w1", (d, b), GROUP_ADAPTER, d),
            b1=add(p + "b1", (b,), GROUP_ADAPTER, kind="zeros"),
            w2=add(p + "w2", (b, d), GROUP_ADAPTER, b, kind=out_kind),
            b2=add(p + "b2", (d,), GROUP_ADAPTER, kind="zeros"),
            n_heads=cfg.n_heads,
        )
        if cfg.adapter_kind == ADAPTER_FF_SA:
            kw.update(
                sa_ln_g=add(p + "sa_ln_g", (d,), GROUP_ADAPTER, kind="ones"),
                sa_ln_b=add(p + "sa_ln_b", (d,), GROUP_ADAPTER, kind="zeros"),
                sa_wq=add(p + "sa_wq", (d, b), GROUP_ADAPTER, d),
                sa_wk=add(p + "sa_wk", (d, b), GROUP_ADAPTER, d),
                sa_wv=add(p + "sa_wv", (d, b), GROUP_ADAPTER, d),
                sa_wo=add(p + "sa_wo", (b, d), GROUP_ADAPTER, b,
                          kind=out_kind),
            )
        adapters[i] = AdapterParams(**kw)

    encoder = EncoderParams(blocks=blocks, adapters=adapters)

    # visual projector (projector-theta); hidden layers are D wide
    weights, biases = [], []
    in_dim = cfg.visual_dim
    for li in range(cfg.projector_depth):
        out_dim = d
        weights.append(add(f"proj.layer{li}_w", (in_dim, out_dim),
                           GROUP_PROJECTOR, in_dim))
        biases.append(add(f"proj.layer{li}_b", (out_dim,), GROUP_PROJECTOR,
                          kind="zeros"))
        in_dim = out_dim
    projector = ProjectorParams(weights=weights, biases=biases)

    # decoder (decoder group)
    v = cfg.vocab_size
    e = cfg.decoder_width
    j = cfg.join_width
    decoder = None
    xdecoder = None
    if cfg.decoder_type == DECODER_TRANSDUCER:
        # The frozen decoder stands in for a pretrained one, so it is built
        # to behave like one instead of being drawn blind (a fan-in random
        # prediction network is inert: emitting a grapheme barely moves the
        # join, greedy decoding re-emits to the cap, and training collapses
        # onto all-blank output).  Construction: gates are bias-driven
        # (input and output open, forget shut) and the cell gate forwards a
        # saturated one-hot code of the last grapheme, so the prediction
        # state is a fixed encoding of whatever was emitted last.  w_pred
        # shifts the join opposite that grapheme's own classifier column,
        # docking its logit by roughly gamma*out_scale until the next
        # emission, which is the feedback a trained prediction network
        # provides.  The output bias favors the blank, so the encoder side
        # decides where graphemes are placed.  Only w_enc and w_out vary
        # with the seed.
        ncls = v + 1
        code = 3.0                                  # gate saturation drive
        gate = 1.0 / (1.0 + np.exp(-code))
        gain = gate * np.tanh(gate * np.tanh(code))  # one-hot gain per layer
        gamma = 4.0                                 # self-suppression
        out_scale = 3.0
        blank_bias = 2.5
        embed_v = np.zeros((ncls, e))
        embed_v[np.arange(ncls), np.arange(ncls)] = code
        wx1 = np.zeros((e, 4 * e))
        wx1[:, 2 * e:3 * e] = np.eye(e)
        wx2 = np.zeros((e, 4 * e))
        wx2[:, 2 * e:3 * e] = np.eye(e) * (code / gain)
        lstm_b = np.zeros(4 * e)
        lstm_b[:e] = code
        lstm_b[e:2 * e] = -code
        lstm_b[3 * e:] = code
        qf, rf = np.linalg.qr(init.rng.standard_normal((j, j)))
        qf = qf * np.sign(np.diag(rf))              # canonical orthonormal
        qcols = qf[:, :ncls]
        w_pred_v = np.zeros((e, j))
        for r in range(v):                          # embed row r = grapheme
            w_pred_v[r] = -(gamma / gain) * qcols[:, r + 1]
        b_out_v = np.zeros(ncls)
        b_out_v[BLANK_ID] = blank_bias
        decoder = DecoderParams(
            embed=add("dec.embed", None, GROUP_DECODER, data=embed_v),
            lstm1_wx=add("dec.lstm1_wx", None, GROUP_DECODER, data=wx1),
            lstm1_wh=add("dec.lstm1_wh", (e, 4 * e), GROUP_DECODER,
                         kind="zeros"),
            lstm1_b=add("dec.lstm1_b", None, GROUP_DECODER,
                        data=lstm_b.copy()),
            lstm2_wx=add("dec.lstm2_wx", None, GROUP_DECODER, data=wx2),
            lstm2_wh=add("dec.lstm2_wh", (e, 4 * e), GROUP_DECODER,
                         kind="zeros"),
            lstm2_b=add("dec.lstm2_b", None, GROUP_DECODER,
                        data=lstm_b.copy()),
            w_enc=add("dec.w_enc", (d, j), GROUP_DECODER, d),
            w_pred=add("dec.w_pred", None, GROUP_DECODER, data=w_pred_v),
            b_join=add("dec.b_join", (j,), GROUP_DECODER, kind="zeros"),
            w_out=add("dec.w_out", None, GROUP_DECODER,
                      data=qcols * out_scale),
            b_out=add("dec.b_out", None, GROUP_DECODER, data=b_out_v),
        )
    else:
        xblocks = []
        for li in range(cfg.xattn_depth):
            p = f"xdec.block{li}."
            xblocks.append(XBlockParams(
                sa_ln_g=add(p + "sa_ln_g", (e,), GROUP_DECODER, kind="ones"),
                sa_ln_b=add(p + "sa_ln_b", (e,), GROUP_DECODER, kind="zeros"),
                sa_wq=add(p + "sa_wq", (e, e), GROUP_DECODER, e),
                sa_wk=add(p + "sa_wk", (e, e), GROUP_DECODER, e),
                sa_wv=add(p + "sa_wv", (e, e), GROUP_DECODER, e),
                sa_wo=add(p + "sa_wo", (e, e), GROUP_DECODER, e),
                ca_ln_g=add(p + "ca_ln_g", (e,), GROUP_DECODER, kind="ones"),
                ca_ln_b=add(p + "ca_ln_b", (e,), GROUP_DECODER, kind="zeros"),
                ca_wq=add(p + "ca_wq", (e, e), GROUP_DECODER, e),
                ca_wk=add(p + "ca_wk", (d, e), GROUP_DECODER, d),
                ca_wv=add(p + "ca_wv", (d, e), GROUP_DECODER, d),
                ca_wo=add(p + "ca_wo", (e, e), GROUP_DECODER, e),
                ff_ln_g=add(p + "ff_ln_g", (e,), GROUP_DECODER, kind="ones"),
                ff_ln_b=add(p + "ff_ln_b", (e,), GROUP_DECODER, kind="zeros"),
                ff_w1=add(p + "ff_w1", (e, 4 * e), GROUP_DECODER, e),
                ff_b1=add(p + "ff_b1", (4 * e,), GROUP_DECODER, kind="zeros"),
                ff_w2=add(p + "ff_w2", (4 * e, e), GROUP_DECODER, 4 * e),
                ff_b2=add(p + "ff_b2", (e,), GROUP_DECODER, kind="zeros"),
            ))
        xdecoder = XDecoderParams(
            embed=add("xdec.embed", (n_classes(v), e), GROUP_DECODER, e),
            blocks=xblocks,
            w_cls=add("xdec.w_cls", (e, n_classes(v)), GROUP_DECODER, e),
            b_cls=add("xdec.b_cls", (n_classes(v),), GROUP_DECODER,
                      kind="zeros"),
            n_heads=cfg.n_heads,
        )

    return Model(cfg, tree, frontend, encoder, projector, decoder, xdecoder,
                 init_seed=int(seed))
