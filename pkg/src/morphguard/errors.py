"""Exception hierarchy shared by all morphguard modules.

The CLI maps these onto process exit codes: ConfigError -> 2,
DataError (protocol/capacity/checkpoint) -> 3, NumericError -> 4,
and plain OSError -> 5.
"""


class MorphGuardError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(MorphGuardError, ValueError):
    """Invalid configuration value or unusable empty input."""


class EmptyBatchError(ConfigError):
    """A loss or training step received an empty batch."""


class DataError(MorphGuardError, ValueError):
    """Invalid dataset, pairing protocol, or serialized artifact."""


class ProtocolError(DataError):
    """Label or pairing constraint violated (ambiguous morph labeling)."""


class CapacityError(DataError):
    """A sampling pool cannot supply the requested number of items."""


class CheckpointFormatError(DataError):
    """Corrupt or truncated checkpoint file.

    ``offset`` is the byte position at which decoding failed.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class NumericError(MorphGuardError, ValueError):
    """Numerically invalid input or degenerate intermediate value."""


class NumericInputError(NumericError):
    """Non-finite input or value outside its mathematical domain."""


class DegenerateWeightError(NumericError):
    """A classification-head row has (near-)zero norm."""


class DegenerateEmbeddingError(NumericError):
    """Encoder output has (near-)zero norm and cannot be normalized."""


class DegenerateAnchorError(NumericError):
    """The two alignment anchor points coincide."""


class DegenerateCovarianceError(NumericError):
    """Point cloud is (near-)collinear; no 2D confidence ellipse exists."""


class UnattainableOperatingPointError(NumericError):
    """A threshold curve never reaches the requested target rate.

    ``closest`` is the nearest achievable curve value.
    """

    def __init__(self, message: str, closest: float):
        super().__init__(f"{message} (closest achievable value: {closest!r})")
        self.closest = closest
