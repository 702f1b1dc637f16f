"""Trainer-side bridge speaking the line-delimited JSON detector protocol.

The harness spawns a bridge process and sends one JSON request per
stdin line; the bridge answers with exactly one JSON response line per
request. This package supplies the serving loop, a backend interface to
hang a real trainer on, and an echo backend that predicts stored ground
truth (the standard integration fixture).
"""

from .server import Backend, EchoBackend, serve

__all__ = ["Backend", "EchoBackend", "serve"]

__version__ = "0.1.0"
