"""Error taxonomy shared by the whole package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
NumericError -> 3.  ShapeError and FormatError are programming / file
contract violations and also exit nonzero.
"""


class DhsnetError(Exception):
    """Base class for everything raised on purpose by this package."""


class ShapeError(DhsnetError):
    """Tensor dimensions inconsistent with an operator contract."""


class NumericError(DhsnetError):
    """Non-finite values or otherwise numerically invalid state."""


class DataError(DhsnetError):
    """Bad input data: missing files, label ids out of range, size mismatch."""


class ConfigError(DhsnetError):
    """Invalid configuration value or unknown configuration key."""


class FormatError(DhsnetError):
    """Corrupt or incompatible serialized file (checkpoints etc.)."""


class InternalError(DhsnetError):
    """Internal consistency violated (e.g. saved pooling indices out of range)."""
