"""Bridge server for the VXDN/1 tensor protocol."""

from .server import (
    MODEL_KINDS,
    PROTOCOL_VERSION,
    SCHEDULE_KINDS,
    BridgeServer,
    ServerConfig,
    alpha_bar_sequence,
    serve,
)

__all__ = [
    "MODEL_KINDS",
    "PROTOCOL_VERSION",
    "SCHEDULE_KINDS",
    "BridgeServer",
    "ServerConfig",
    "alpha_bar_sequence",
    "serve",
]
