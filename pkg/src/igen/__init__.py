"""Input generation and replay for functions in a small typed IR."""

from .engine import Prepared, generate_attempt, prepare, replay
from .genrt import GenConfig

__version__ = "0.1.0"

__all__ = ["GenConfig", "Prepared", "generate_attempt", "prepare", "replay"]
