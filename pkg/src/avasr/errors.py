"""Error taxonomy shared across the package.

Every failure mode maps onto one of three exception families so the CLI can
translate them into stable process exit codes:

    ConfigError  -> exit 2   bad flags, malformed config, unknown keys
    DataError    -> exit 3   missing or corrupt corpus / feature / checkpoint files
    NumericError -> exit 4   non-finite values, shape violations, failed checks
"""


class AvasrError(Exception):
    """Base class for all package-specific errors."""

    exit_code = 1


class ConfigError(AvasrError):
    """Invalid configuration: unknown keys, out-of-range values, bad flags."""

    exit_code = 2


class DataError(AvasrError):
    """Missing, truncated, or inconsistent data files."""

    exit_code = 3


class NumericError(AvasrError):
    """Numeric contract violation: NaN/inf inputs, shape mismatches."""

    exit_code = 4


class ShapeError(NumericError):
    """Operand shapes are incompatible; message names the offending dims."""
