"""Forward/backward trajectory consistency scoring and tracker selection."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ensemble import Trajectory, frame_at
from .geometry import PATCH_SIZE, BoundingBox, Frame, center_distance, extract_patch, iou


def gaussian_mask(shape: tuple[int, int] = PATCH_SIZE, rel_sigma: float = 0.5) -> np.ndarray:
    """Centered Gaussian with peak 1; sigma = rel_sigma * side length per axis."""
    h, w = shape
    r = np.arange(h) - (h - 1) / 2
    c = np.arange(w) - (w - 1) / 2
    sr, sc = rel_sigma * h, rel_sigma * w
    return np.exp(-0.5 * ((r[:, None] / sr) ** 2 + (c[None, :] / sc) ** 2))


@dataclass
class ScoringParams:
    sigma1: float | None = None  # None: 0.5 * sqrt(w0 * h0) of the initial box
    sigma2: float = 0.2
    chi_cyclic: float = 1e6
    chi_noncyclic: float = 1.0
    theta_cyc: float = 0.5
    patch_size: tuple[int, int] = PATCH_SIZE
    mask: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.patch_size = tuple(int(v) for v in self.patch_size)
        if self.sigma1 is not None and self.sigma1 <= 0:
            raise ValueError("sigma1 must be positive")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        if not self.chi_cyclic > self.chi_noncyclic > 0:
            raise ValueError("need chi_cyclic > chi_noncyclic > 0")
        if not 0 < self.theta_cyc < 1:
            raise ValueError("theta_cyc must lie in (0, 1)")
        if self.mask is None:
            self.mask = gaussian_mask(self.patch_size)
        elif self.mask.shape != self.patch_size:
            raise ValueError("mask must match the patch size")

    def resolved(self, init_box: BoundingBox) -> ScoringParams:
        """Copy with sigma1 fixed from the initial target size."""
        if self.sigma1 is not None:
            return self
        return ScoringParams(
            0.5 * math.sqrt(init_box.w * init_box.h),
            self.sigma2,
            self.chi_cyclic,
            self.chi_noncyclic,
            self.theta_cyc,
            self.patch_size,
            self.mask,
        )


@dataclass
class AppearanceSet:
    patches: list[np.ndarray]

    def __post_init__(self):
        if not self.patches:
            raise ValueError("appearance set needs at least one patch")


@dataclass
class RobustnessReport:
    tracker_index: int
    cyclic: bool
    frames: list[int]
    geo: list[float]
    app: list[float]
    psi: float
    chi: float

    def recompute_psi(self) -> float:
        return self.chi * math.fsum(g * a for g, a in zip(self.geo, self.app))

    def to_dict(self) -> dict:
        return {
            "tracker": self.tracker_index,
            "cyclic": self.cyclic,
            "psi": self.psi,
            "frames": [self.frames[0], self.frames[-1]] if self.frames else [],
            "geo": self.geo,
            "app": self.app,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def check_cyclicity(fwd: Trajectory, bwd: Trajectory, theta_cyc: float) -> bool:
    if fwd.frame_range() != bwd.frame_range():
        raise ValueError(f"trajectory ranges differ: {fwd.frame_range()} vs {bwd.frame_range()}")
    anchor = fwd.frame_range()[0]
    return iou(bwd.box_at(anchor), fwd.box_at(anchor)) >= theta_cyc


def geometric_similarity(fwd_box: BoundingBox, bwd_box: BoundingBox, sigma1: float) -> float:
    d = center_distance(fwd_box, bwd_box)
    return math.exp(-(d * d) / (sigma1 * sigma1))


def appearance_similarity(
    frame: Frame, bwd_box: BoundingBox, appearance: AppearanceSet, params: ScoringParams
) -> float:
    patch = extract_patch(frame, bwd_box, params.patch_size).pixels
    h, w = params.patch_size
    energy = 0.0
    for q in appearance.patches:
        weighted = params.mask * (patch - q)
        energy += float(np.sum(weighted * weighted))
    return math.exp(-energy / (4.0 * w * h * params.sigma2**2))


def robustness_score(
    fwd: Trajectory,
    bwd: Trajectory,
    frames: Sequence[Frame],
    appearance: AppearanceSet,
    params: ScoringParams,
    tracker_index: int = 1,
) -> RobustnessReport:
    """Score one forward/backward pair over the window's frames after the anchor."""
    if params.sigma1 is None:
        raise ValueError("sigma1 must be resolved before scoring")
    cyclic = check_cyclicity(fwd, bwd, params.theta_cyc)
    lo, hi = fwd.frame_range()
    ts = list(range(lo + 1, hi + 1))
    geo = [geometric_similarity(fwd.box_at(t), bwd.box_at(t), params.sigma1) for t in ts]
    app = [appearance_similarity(frame_at(frames, t), bwd.box_at(t), appearance, params) for t in ts]
    chi = params.chi_cyclic if cyclic else params.chi_noncyclic
    psi = chi * math.fsum(g * a for g, a in zip(geo, app))
    return RobustnessReport(tracker_index, cyclic, ts, geo, app, psi, chi)


def select_best(reports: Sequence[RobustnessReport]) -> int:
    """Tracker index with the highest psi; ties go to the larger index."""
    if not reports:
        raise ValueError("no reports to select from")
    best = max(reports, key=lambda r: (r.psi, r.tracker_index))
    return best.tracker_index
