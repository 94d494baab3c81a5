"""Paced forward/backward passes of an n-member tracker ensemble over one window."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .geometry import BoundingBox, Frame
from .trackers import Tracker


@dataclass(frozen=True)
class WindowPlan:
    anchor: int
    anchor_box: BoundingBox
    end: int
    n: int
    tau: int
    stop_frames: tuple[float, ...]

    @property
    def start(self) -> int:
        return self.anchor + 1

    @property
    def span(self) -> int:
        """Number of frames including the anchor."""
        return self.end - self.anchor + 1

    def updates_at(self, i: int, t: int) -> bool:
        """Whether tracker i (0-based) learns from frame t on the forward pass."""
        return t < self.stop_frames[i]


def plan_window(anchor: int, anchor_box: BoundingBox, n: int, tau: int, last: int) -> WindowPlan:
    if n < 1:
        raise ValueError(f"need at least one tracker, got n={n}")
    if tau < 1:
        raise ValueError(f"interval length must be >= 1, got tau={tau}")
    if anchor >= last:
        raise ValueError(f"anchor frame {anchor} must precede the last frame {last}")
    stops = tuple(float(anchor + i * tau) for i in range(1, n)) + (math.inf,)
    return WindowPlan(anchor, anchor_box, min(anchor + n * tau, last), n, tau, stops)


@dataclass(frozen=True)
class Trajectory:
    direction: str
    frames: tuple[int, ...]
    boxes: tuple[BoundingBox, ...]

    def __post_init__(self):
        if self.direction not in ("forward", "backward"):
            raise ValueError(f"bad direction {self.direction!r}")
        if len(self.frames) != len(self.boxes):
            raise ValueError("one box per frame required")

    def box_at(self, t: int) -> BoundingBox:
        step = 1 if self.direction == "forward" else -1
        return self.boxes[(t - self.frames[0]) * step]

    def frame_range(self) -> tuple[int, int]:
        return min(self.frames), max(self.frames)

    def to_dict(self) -> dict:
        return {
            "direction": self.direction,
            "frames": [self.frames[0], self.frames[-1]],
            "boxes": [list(b.as_tuple()) for b in self.boxes],
        }


def frame_at(frames: Sequence[Frame], t: int) -> Frame:
    f = frames[t - 1]
    if f.index != t:
        raise ValueError(f"frame list is not indexed contiguously from 1 (slot {t} holds {f.index})")
    return f


def parallel_map(fn: Callable, items: Iterable, workers: int = 1) -> list:
    """Ordered map, threaded when workers > 1."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _forward_one(base: Tracker, plan: WindowPlan, frames: Sequence[Frame], i: int):
    tracker = base.snapshot()
    boxes = [plan.anchor_box]
    for t in range(plan.start, plan.end + 1):
        frame = frame_at(frames, t)
        box = tracker.predict(frame)
        if plan.updates_at(i, t):
            tracker.update(frame, box)
        else:
            tracker.relocate(box)
        boxes.append(box)
    traj = Trajectory("forward", tuple(range(plan.anchor, plan.end + 1)), tuple(boxes))
    return traj, tracker


def run_forward(
    base: Tracker, plan: WindowPlan, frames: Sequence[Frame], workers: int = 1
) -> list[tuple[Trajectory, Tracker]]:
    """Forward pass with staggered update stops; ``base`` is left untouched."""
    return parallel_map(lambda i: _forward_one(base, plan, frames, i), range(plan.n), workers)


def _backward_one(fwd: Trajectory, end_state: Tracker, plan: WindowPlan, frames):
    tracker = end_state.snapshot()
    last = fwd.box_at(plan.end)
    tracker.relocate(last)
    boxes = [last]
    for t in range(plan.end - 1, plan.anchor - 1, -1):
        frame = frame_at(frames, t)
        box = tracker.predict(frame)
        tracker.update(frame, box)
        boxes.append(box)
    return Trajectory("backward", tuple(range(plan.end, plan.anchor - 1, -1)), tuple(boxes))


def run_backward(
    forward_results: list[tuple[Trajectory, Tracker]],
    plan: WindowPlan,
    frames: Sequence[Frame],
    workers: int = 1,
) -> list[Trajectory]:
    """Backward pass from each forward end state, learning on every frame.

    The end states in ``forward_results`` are copied, not consumed.
    """
    if len(forward_results) != plan.n:
        raise ValueError("forward results do not match the plan")
    return parallel_map(
        lambda fr: _backward_one(fr[0], fr[1], plan, frames), forward_results, workers
    )


def dump_window(path, plan: WindowPlan, forward: list[Trajectory], backward: list[Trajectory]) -> None:
    """Append one JSON line per tracker to ``path``."""
    with open(path, "a") as fh:
        for i, (f, b) in enumerate(zip(forward, backward)):
            stop = plan.stop_frames[i]
            rec = {
                "anchor": plan.anchor,
                "end": plan.end,
                "tracker": i + 1,
                "stop_frame": None if math.isinf(stop) else int(stop),
                "forward": f.to_dict(),
                "backward": b.to_dict(),
            }
            fh.write(json.dumps(rec) + "\n")
