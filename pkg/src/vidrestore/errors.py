"""Exception types shared across the package."""

from __future__ import annotations

__all__ = [
    "VidrestoreError",
    "ParameterError",
    "ShapeError",
    "DimensionMismatchError",
    "FormatError",
    "PayloadLengthError",
    "CapacityError",
    "TransportError",
    "RemoteModelError",
    "ProtocolError",
]


class VidrestoreError(Exception):
    """Base class for all package-specific errors."""


class ParameterError(VidrestoreError, ValueError):
    """A constructor or operation argument is out of its documented domain."""


class ShapeError(VidrestoreError, ValueError):
    """Tensor shape does not match what an operation requires."""


class DimensionMismatchError(ShapeError):
    """Frames or tensors that must agree in shape do not."""


class FormatError(VidrestoreError, ValueError):
    """A serialized tensor or config blob is not in the expected format."""


class PayloadLengthError(FormatError):
    """Serialized payload is shorter or longer than its header declares."""


class CapacityError(VidrestoreError, ValueError):
    """Problem size exceeds what a dense or exhaustive routine accepts."""


class TransportError(VidrestoreError, IOError):
    """Socket-level failure talking to a remote model server."""


class RemoteModelError(VidrestoreError):
    """The remote model server answered with an error message."""


class ProtocolError(VidrestoreError):
    """The remote peer sent a frame that violates the wire protocol."""
