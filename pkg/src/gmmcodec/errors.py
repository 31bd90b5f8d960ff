"""Exception hierarchy shared by all codec components."""


class CodecError(Exception):
    """Base class for every error raised by this package."""


class InvalidInput(CodecError):
    """Input values violate a precondition (non-finite, negative, too small...)."""


class InvalidSymbol(CodecError):
    """Symbol lies outside the fixed [-255, 256] alphabet."""


class ShapeError(CodecError):
    """Array shapes are inconsistent with each other or with the model."""


class InvalidDistribution(CodecError):
    """A probability table cannot be quantized (all zero, bad sum, negatives)."""


class TruncatedStream(CodecError):
    """The range decoder ran past the end of its payload."""


class DecodeError(CodecError):
    """Serial decoding failed: stream and model/weights are inconsistent."""


class CorruptStream(CodecError):
    """Container bytes fail structural checks or the CRC trailer."""


class UnsupportedVersion(CodecError):
    """Container or model file declares a version this build does not read."""


class ModelMismatch(CodecError):
    """Model file disagrees with the stream header or CLI overrides (K, N)."""


class ResourceLimit(CodecError):
    """Input exceeds a configured size limit."""
