"""Exception hierarchy shared by all protocol layers."""


class XvsmcError(Exception):
    """Base class for all errors raised by this package."""


class FixedPointRangeError(XvsmcError):
    """A real value (or network parameter) falls outside the representable range."""


class ConfigError(XvsmcError):
    """Invalid party/scheme/fixed-point configuration."""


class IncompatibleConfigError(ConfigError):
    """Peers disagree on scheme or fixed-point parameters (handshake failure)."""


class UsageError(XvsmcError):
    """An operation was called with mismatched scales, lengths or reused material."""


class ProtocolError(XvsmcError):
    """A peer aborted, disconnected or sent malformed protocol data."""


class IntegrityError(XvsmcError):
    """Share material violates a structural invariant (e.g. non-bit bit share)."""


class PreprocessingUnderflow(XvsmcError):
    """A correlated-randomness pool ran dry during the online phase."""

    def __init__(self, kind: str, requested: int, remaining: int):
        self.kind = kind
        self.requested = requested
        self.remaining = remaining
        super().__init__(
            f"preprocessing underflow: material {kind!r} exhausted "
            f"(requested {requested}, remaining {remaining})"
        )


class ShapeError(XvsmcError):
    """Tensor/frame-count shapes are incompatible with the network graph."""


class SchemaError(XvsmcError):
    """A binary artifact (weights, features, material) failed format validation."""
