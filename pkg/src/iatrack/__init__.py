"""Online multi-target tracking with per-target correlation filters coupled by exclusive assignment."""

from .geometry import BoundingBox, Detection
from .pipeline import Mode, Policies, TrackerConfig, ablation_mode, run, step

__version__ = "0.1.0"

__all__ = [
    "BoundingBox",
    "Detection",
    "Mode",
    "Policies",
    "TrackerConfig",
    "ablation_mode",
    "run",
    "step",
]
