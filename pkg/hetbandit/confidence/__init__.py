"""Confidence-set subroutines plugged into the multi-level OFU loop."""

from hetbandit.confidence.erm import ErmSubroutine, FiniteFunctionClass
from hetbandit.confidence.gloc import GlocSubroutine
from hetbandit.confidence.links import GlmModel

__all__ = ["ErmSubroutine", "FiniteFunctionClass", "GlmModel", "GlocSubroutine"]
