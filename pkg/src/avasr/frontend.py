"""Audio frontend: log-mel extraction and convolutional tokenization.

The tokenizer turns an Nhat x S spectrogram into exactly floor(Nhat/4) audio
tokens of width D via two stride-2 convolutions (kernel 3, asymmetric
padding) and a final linear map.  The synthetic corpus writes feature
matrices directly, so ``compute_logmel`` is exercised by tests and by anyone
pointing the tools at real audio.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from avasr.autodiff import Tensor, conv1d, matmul, relu
from avasr.errors import DataError, ShapeError

MODALITY_AUDIO = 0
MODALITY_VISUAL = 1


@dataclass
class Spectrogram:
    """Log-mel energies: frames is (Nhat, S)."""

    frames: np.ndarray
    frame_period: float

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_bins(self) -> int:
        return self.frames.shape[1]


@dataclass
class TokenSequence:
    """Token matrix plus a per-position modality tag (0 audio, 1 visual)."""

    tokens: Tensor
    modality: np.ndarray

    def __post_init__(self):
        if self.tokens.shape[0] != self.modality.shape[0]:
            raise ShapeError(
                f"token/modality length mismatch: {self.tokens.shape[0]} "
                f"vs {self.modality.shape[0]}")

    @property
    def length(self) -> int:
        return self.tokens.shape[0]

    @property
    def width(self) -> int:
        return self.tokens.shape[1]


def empty_token_sequence(width: int) -> TokenSequence:
    return TokenSequence(Tensor(np.zeros((0, width))),
                         np.zeros(0, dtype=np.uint8))


@dataclass
class FrontendConfig:
    """Log-mel constants: conventional ASR frontend defaults."""

    sample_rate: int = 16000
    window_ms: float = 25.0
    hop_ms: float = 10.0
    n_mels: int = 80
    energy_floor: float = 1e-10

    @property
    def window_samples(self) -> int:
        return int(round(self.sample_rate * self.window_ms / 1000.0))

    @property
    def hop_samples(self) -> int:
        return int(round(self.sample_rate * self.hop_ms / 1000.0))


def hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: float) -> np.ndarray:
    """Triangular mel filters, (n_mels, n_fft//2 + 1)."""
    n_bins = n_fft // 2 + 1
    fft_freqs = np.arange(n_bins) * (sample_rate / n_fft)
    mel_pts = np.linspace(hz_to_mel(0.0), hz_to_mel(sample_rate / 2.0),
                          n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    fb = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        lo, ctr, hi = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
        up = (fft_freqs - lo) / (ctr - lo)
        down = (hi - fft_freqs) / (hi - ctr)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
    return fb


def filter_center_freqs(n_mels: int, sample_rate: float) -> np.ndarray:
    """Center frequency in Hz of each mel filter."""
    mel_pts = np.linspace(hz_to_mel(0.0), hz_to_mel(sample_rate / 2.0),
                          n_mels + 2)
    return mel_to_hz(mel_pts)[1:-1]


def compute_logmel(waveform: np.ndarray,
                   cfg: FrontendConfig | None = None) -> Spectrogram:
    """STFT power + mel filterbank + log with an energy floor.

    Frame count is Nhat = 1 + floor((len - window) / hop); each output entry
    is log(max(mel_energy, floor)), so scaling the waveform by c adds exactly
    2*log(c) to every above-floor entry.
    """
    cfg = cfg or FrontendConfig()
    waveform = np.asarray(waveform, dtype=np.float64)
    win = cfg.window_samples
    hop = cfg.hop_samples
    if waveform.ndim != 1:
        raise DataError(f"waveform must be 1-d, got shape {waveform.shape}")
    if len(waveform) < win:
        raise DataError(
            f"waveform too short: {len(waveform)} samples, need at least "
            f"one window of {win}")
    n_frames = 1 + (len(waveform) - win) // hop
    window = np.hanning(win)
    idx = np.arange(win)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = waveform[idx] * window
    spectrum = np.fft.rfft(frames, n=win, axis=1)
    power = spectrum.real ** 2 + spectrum.imag ** 2
    fb = mel_filterbank(cfg.n_mels, win, cfg.sample_rate)
    mel = power @ fb.T
    logmel = np.log(np.maximum(mel, cfg.energy_floor))
    return Spectrogram(frames=logmel, frame_period=cfg.hop_ms / 1000.0)


@dataclass
class FrontendParams:
    """Tokenizer weights (backbone group, frozen during adaptation).

    conv1: (3, S, D) stride 2; conv2: (3, D, D) stride 2; linear: (D, D).
    """

    conv1_w: Tensor
    conv1_b: Tensor
    conv2_w: Tensor
    conv2_b: Tensor
    lin_w: Tensor
    lin_b: Tensor


def tokenize(spec: Spectrogram, params: FrontendParams) -> TokenSequence:
    """Spectrogram -> floor(Nhat/4) audio tokens of width D.

    Two stride-2 kernel-3 convolutions with padding (left 1, right 0), each
    halving the length exactly (floor), ReLU between, then a linear map.
    """
    nhat = spec.n_frames
    if nhat < 4:
        raise DataError(
            f"tokenize needs at least 4 spectrogram frames, got {nhat}")
    x = Tensor(spec.frames)
    h = conv1d(x, params.conv1_w, params.conv1_b, stride=2, pad=(1, 0))
    h = relu(h)
    h = conv1d(h, params.conv2_w, params.conv2_b, stride=2, pad=(1, 0))
    tokens = matmul(h, params.lin_w) + params.lin_b
    n = tokens.shape[0]
    assert n == nhat // 4, f"length law violated: {n} != floor({nhat}/4)"
    return TokenSequence(tokens, np.zeros(n, dtype=np.uint8))
