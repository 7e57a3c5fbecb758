"""avasr: a desk-scale audiovisual speech recognition testbed.

The package implements a frozen conformer-transducer recognizer that is
adapted to a new audio domain with lightweight bottleneck adapters and to a
visual side channel with a linear projector that prepends "visual tokens" to
the encoder input.  Training follows a two-phase curriculum: adapters first
on audio alone, then the visual projector with everything else frozen.

Everything runs on a small hand-rolled reverse-mode autodiff engine backed
by numpy, with optional compiled kernels for the sequential hot loops.
"""

from avasr.errors import AvasrError, ConfigError, DataError, NumericError, ShapeError

__version__ = "0.1.0"

__all__ = [
    "AvasrError",
    "ConfigError",
    "DataError",
    "NumericError",
    "ShapeError",
    "__version__",
]
