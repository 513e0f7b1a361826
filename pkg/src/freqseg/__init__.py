"""Frequency-guided boundary-aware segmentation in plain numpy."""
from .config import RunConfig
from .model import FreqSeg

__all__ = ["RunConfig", "FreqSeg"]
__version__ = "0.1.0"
