"""Laboratory for TCP session hijacking and an authenticated handshake that stops it."""

from .attacker import HijackReport, run_hijack
from .protocol import Mode, SecureConfig, State

__version__ = "0.1.0"

__all__ = ["HijackReport", "Mode", "SecureConfig", "State", "run_hijack"]
