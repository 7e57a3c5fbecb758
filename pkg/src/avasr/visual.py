"""Visual feature loading and projection into the audio token space.

Per-frame visual features (desk stand-ins for a real image encoder's
embeddings) are mapped by a shallow projector into D-dim visual tokens that
the encoder consumes alongside audio tokens.  ``dummy_visual`` produces the
zero features used for audio-only evaluation of audiovisual checkpoints.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from avasr import featio
from avasr.autodiff import Tensor, matmul, relu
from avasr.errors import DataError, ShapeError
from avasr.frontend import MODALITY_VISUAL, TokenSequence

# instrumentation: bumped on every call; the trainer asserts PROJECT_CALLS
# stays at zero during phase 1, and eval tests count DUMMY_CALLS per utterance
PROJECT_CALLS = 0
DUMMY_CALLS = 0


@dataclass
class VisualFeatures:
    """M x Dhat matrix of per-frame features."""

    features: np.ndarray

    @property
    def n_frames(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass
class ProjectorParams:
    """Projector weights: depth 1-4 linear layers with ReLU between.

    weights[0] is (Dhat, ...); weights[-1] ends at D.  Biases match output
    widths.
    """

    weights: list[Tensor]
    biases: list[Tensor]

    def __post_init__(self):
        depth = len(self.weights)
        if not 1 <= depth <= 4:
            raise ShapeError(f"projector depth must be 1-4, got {depth}")
        if len(self.biases) != depth:
            raise ShapeError(
                f"projector has {depth} weights but {len(self.biases)} biases")
        for i in range(depth - 1):
            if self.weights[i].shape[1] != self.weights[i + 1].shape[0]:
                raise ShapeError(
                    f"projector layer {i} output {self.weights[i].shape[1]} "
                    f"!= layer {i + 1} input {self.weights[i + 1].shape[0]}")

    @property
    def depth(self) -> int:
        return len(self.weights)

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]


def load_visual_features(path: str | Path,
                         expect_dim: int | None = None) -> VisualFeatures:
    """Read a visual feature file; header fixes M and Dhat."""
    matrix, _ = featio.read_features(path, expect_kind=featio.KIND_VISUAL)
    if expect_dim is not None and matrix.shape[1] != expect_dim:
        raise DataError(
            f"{path}: visual dim {matrix.shape[1]}, corpus config expects "
            f"{expect_dim}")
    return VisualFeatures(matrix)


def dummy_visual(m: int, dhat: int) -> VisualFeatures:
    """Zero features: the audio-only stand-in for visual input."""
    global DUMMY_CALLS
    if m < 0:
        raise DataError(f"visual token count must be >= 0, got {m}")
    DUMMY_CALLS += 1
    return VisualFeatures(np.zeros((m, dhat)))


def project(v: VisualFeatures, theta: ProjectorParams) -> TokenSequence:
    """Map M x Dhat features to M visual tokens of width D."""
    global PROJECT_CALLS
    if v.dim != theta.in_dim:
        raise ShapeError(
            f"visual feature dim {v.dim} does not match projector input "
            f"{theta.in_dim}")
    PROJECT_CALLS += 1
    x = Tensor(v.features)
    out = x
    for i, (w, b) in enumerate(zip(theta.weights, theta.biases)):
        out = matmul(out, w) + b
        if i < theta.depth - 1:
            out = relu(out)
    return TokenSequence(out, np.full(v.n_frames, MODALITY_VISUAL,
                                      dtype=np.uint8))
