"""Window-by-window MTS driver and the plain always-update baseline."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

from .ensemble import dump_window, frame_at, parallel_map, plan_window, run_backward, run_forward
from .geometry import BoundingBox, Frame, extract_patch
from .scoring import AppearanceSet, ScoringParams, robustness_score, select_best
from .trackers import TRACKERS, create_tracker

log = logging.getLogger(__name__)

DEFAULT_TAU = {"ncc": 10, "dcf": 20}


@dataclass
class MtsConfig:
    n: int = 8
    tau: int | None = None  # None: per-kind default
    base_kind: str = "ncc"
    tracker_params: dict = field(default_factory=dict)
    scoring: ScoringParams = field(default_factory=ScoringParams)
    grow_appearance: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.base_kind not in TRACKERS:
            raise ValueError(f"unknown base tracker {self.base_kind!r}")
        if self.tau is None:
            self.tau = DEFAULT_TAU[self.base_kind]
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.tau < 1:
            raise ValueError("tau must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass
class WindowDiagnostics:
    anchor: int
    end: int
    stop_frames: list[int | None]
    selected: int
    psi: list[float]
    cyclic: list[bool]
    start_state_hash: str
    winner_state_hash: str

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrackingResult:
    boxes: list[BoundingBox]
    windows: list[WindowDiagnostics] = field(default_factory=list)

    def __len__(self):
        return len(self.boxes)


def run_baseline(
    frames: Sequence[Frame], init_box: BoundingBox, base_kind: str = "ncc", params=None
) -> TrackingResult:
    tracker = create_tracker(base_kind, frame_at(frames, 1), init_box, params)
    boxes = [init_box]
    for t in range(2, len(frames) + 1):
        frame = frame_at(frames, t)
        box = tracker.predict(frame)
        tracker.update(frame, box)
        boxes.append(box)
    return TrackingResult(boxes)


def run_mts(
    frames: Sequence[Frame],
    init_box: BoundingBox,
    config: MtsConfig | None = None,
    dump_path=None,
) -> TrackingResult:
    config = config or MtsConfig()
    last = len(frames)
    if last < 2:
        raise ValueError("need at least two frames")
    first = frame_at(frames, 1)
    tracker = create_tracker(config.base_kind, first, init_box, config.tracker_params)
    scoring = config.scoring.resolved(init_box)
    appearance = AppearanceSet([extract_patch(first, init_box, scoring.patch_size).pixels])

    boxes = [init_box]
    windows = []
    anchor, anchor_box = 1, init_box
    while anchor < last:
        plan = plan_window(anchor, anchor_box, config.n, config.tau, last)
        start_hash = tracker.state_hash()
        forward = run_forward(tracker, plan, frames, config.workers)
        backward = run_backward(forward, plan, frames, config.workers)
        reports = parallel_map(
            lambda i: robustness_score(
                forward[i][0], backward[i], frames, appearance, scoring, tracker_index=i + 1
            ),
            range(plan.n),
            config.workers,
        )
        best = select_best(reports)
        traj, tracker = forward[best - 1]
        boxes.extend(traj.boxes[1:])
        if config.grow_appearance:
            end_patch = extract_patch(frame_at(frames, plan.end), traj.boxes[-1], scoring.patch_size)
            appearance.patches.append(end_patch.pixels)
        windows.append(
            WindowDiagnostics(
                anchor=plan.anchor,
                end=plan.end,
                stop_frames=[None if math.isinf(s) else int(s) for s in plan.stop_frames],
                selected=best,
                psi=[r.psi for r in reports],
                cyclic=[r.cyclic for r in reports],
                start_state_hash=start_hash,
                winner_state_hash=tracker.state_hash(),
            )
        )
        log.debug("window [%d, %d]: tracker %d selected", plan.anchor, plan.end, best)
        if dump_path is not None:
            dump_window(dump_path, plan, [f for f, _ in forward], backward)
        anchor, anchor_box = plan.end, traj.boxes[-1]
    return TrackingResult(boxes, windows)
