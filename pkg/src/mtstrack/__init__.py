"""Update-pacing tracker ensembles with forward/backward trajectory selection."""

__version__ = "0.1.0"

from .geometry import BoundingBox, Frame, extract_patch, iou
from .pipeline import MtsConfig, TrackingResult, run_baseline, run_mts
from .trackers import DcfTracker, NccTracker, create_tracker

__all__ = [
    "BoundingBox",
    "Frame",
    "extract_patch",
    "iou",
    "MtsConfig",
    "TrackingResult",
    "run_baseline",
    "run_mts",
    "DcfTracker",
    "NccTracker",
    "create_tracker",
]
