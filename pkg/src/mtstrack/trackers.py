"""Base trackers with a split tracking/updating interface.

Every tracker exposes ``init``, ``predict`` (pure), ``update`` (learns from a
box) and ``snapshot`` (deep copy). The MTS wrapper needs nothing else.
"""

from __future__ import annotations

import copy
import hashlib
import json
import struct
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, fields

import numpy as np

from .geometry import PATCH_SIZE, BoundingBox, Frame, extract_patch, extract_shifted_patches

_MAGIC = b"MTSS"
_FORMAT_VERSION = 1
_FLAT_VARIANCE = 1e-12


class DegenerateTargetError(ValueError):
    pass


@dataclass
class NccParams:
    eta: float = 0.1
    # None: round(0.5 * max(w, h)) of the init box
    search_radius: int | None = None
    patch_size: tuple[int, int] = PATCH_SIZE

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must be in [0, 1], got {self.eta}")
        if self.search_radius is not None and self.search_radius < 0:
            raise ValueError("search_radius must be non-negative")
        self.patch_size = tuple(int(v) for v in self.patch_size)


@dataclass
class DcfParams:
    eta: float = 0.02
    lam: float = 1e-2
    padding: float = 2.0
    grid: tuple[int, int] = (64, 64)
    sigma_factor: float = 1.0 / 16.0

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must be in [0, 1], got {self.eta}")
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.padding <= 0:
            raise ValueError("padding must be positive")
        self.grid = tuple(int(v) for v in self.grid)


def params_from_dict(kind: str, values: dict | None):
    cls = TRACKERS[kind].params_cls
    values = dict(values or {})
    known = {f.name for f in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ValueError(f"unknown {kind} parameter(s): {sorted(unknown)}")
    return cls(**values)


class Tracker(ABC):
    kind: str
    params_cls: type

    def __init__(self, params=None):
        self.params = params if params is not None else self.params_cls()
        self.current_box: BoundingBox | None = None

    def init(self, frame: Frame, box: BoundingBox) -> Tracker:
        if box.w * box.h < 4:
            raise DegenerateTargetError(f"target {box.w}x{box.h} is smaller than 4 pixels")
        self.current_box = box
        self._learn_first(frame, box)
        return self

    @abstractmethod
    def _learn_first(self, frame: Frame, box: BoundingBox) -> None: ...

    @abstractmethod
    def predict(self, frame: Frame) -> BoundingBox:
        """Locate the target near ``current_box``; never touches the model."""

    @abstractmethod
    def update(self, frame: Frame, box: BoundingBox) -> Tracker:
        """Blend the appearance at ``box`` into the model and move there."""

    def relocate(self, box: BoundingBox) -> None:
        """Move the search anchor without learning anything."""
        self.current_box = box

    def snapshot(self) -> Tracker:
        return copy.deepcopy(self)

    @abstractmethod
    def _arrays(self) -> dict[str, np.ndarray]: ...

    @abstractmethod
    def _load_arrays(self, arrays: dict[str, np.ndarray]) -> None: ...

    def to_bytes(self) -> bytes:
        arrays = self._arrays()
        header = {
            "format": _FORMAT_VERSION,
            "kind": self.kind,
            "box": list(self.current_box.as_tuple()),
            "params": asdict(self.params),
            "arrays": [[k, a.dtype.str, list(a.shape)] for k, a in arrays.items()],
        }
        head = json.dumps(header, sort_keys=True).encode()
        body = b"".join(np.ascontiguousarray(a).tobytes() for a in arrays.values())
        return struct.pack("<4sI", _MAGIC, len(head)) + head + body

    @staticmethod
    def from_bytes(blob: bytes) -> Tracker:
        magic, hlen = struct.unpack_from("<4sI", blob)
        if magic != _MAGIC:
            raise ValueError("not a tracker state blob")
        header = json.loads(blob[8 : 8 + hlen])
        if header["format"] != _FORMAT_VERSION:
            raise ValueError(f"unsupported state format {header['format']}")
        tracker = TRACKERS[header["kind"]](params_from_dict(header["kind"], header["params"]))
        tracker.current_box = BoundingBox(*header["box"])
        offset = 8 + hlen
        arrays = {}
        for name, dtype, shape in header["arrays"]:
            dt = np.dtype(dtype)
            count = int(np.prod(shape))
            arrays[name] = np.frombuffer(blob, dt, count, offset).reshape(shape).copy()
            offset += count * dt.itemsize
        tracker._load_arrays(arrays)
        return tracker

    def state_hash(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()


def zncc_scores(candidates: np.ndarray, template: np.ndarray) -> np.ndarray:
    """Zero-normalized cross-correlation of each trailing 2-D patch with `template`.

    Flat candidates score -inf.
    """
    n = template.size
    t = template - template.mean()
    t_norm = np.sqrt(np.sum(t * t))
    c_sum = np.einsum("...rc->...", candidates)
    c_sq = np.einsum("...rc,...rc->...", candidates, candidates)
    num = np.einsum("...rc,rc->...", candidates, t)
    c_var = np.maximum(c_sq - c_sum * c_sum / n, 0.0)
    flat = c_var <= _FLAT_VARIANCE * n
    if t_norm == 0.0:
        flat = np.ones_like(flat)
    with np.errstate(divide="ignore", invalid="ignore"):
        scores = num / (np.sqrt(c_var) * t_norm)
    scores = np.clip(scores, -1.0, 1.0)
    scores[flat] = -np.inf
    return scores


def best_shift(scores: np.ndarray, radius: int) -> tuple[int, int]:
    """(dx, dy) of the top score; ties go to the smaller |dx|+|dy|, then row-major."""
    best = scores.max()
    if best == -np.inf:
        return 0, 0
    dys, dxs = np.nonzero(scores == best)
    dys = dys - radius
    dxs = dxs - radius
    order = np.lexsort((dxs, dys, np.abs(dxs) + np.abs(dys)))
    return int(dxs[order[0]]), int(dys[order[0]])


class NccTracker(Tracker):
    """Template tracker scored by zero-normalized cross-correlation."""

    kind = "ncc"
    params_cls = NccParams

    def _learn_first(self, frame, box):
        self.template = extract_patch(frame, box, self.params.patch_size).pixels
        if self.params.search_radius is None:
            self.search_radius = int(np.floor(0.5 * max(box.w, box.h) + 0.5))
        else:
            self.search_radius = int(self.params.search_radius)

    def scores(self, frame: Frame) -> np.ndarray:
        cands = extract_shifted_patches(
            frame, self.current_box, self.search_radius, self.params.patch_size
        )
        return zncc_scores(cands, self.template)

    def predict(self, frame):
        dx, dy = best_shift(self.scores(frame), self.search_radius)
        return self.current_box.shifted(dx, dy)

    def update(self, frame, box):
        eta = self.params.eta
        patch = extract_patch(frame, box, self.params.patch_size).pixels
        self.template = (1.0 - eta) * self.template + eta * patch
        self.current_box = box
        return self

    def _arrays(self):
        return {"template": self.template, "search_radius": np.array([self.search_radius])}

    def _load_arrays(self, arrays):
        self.template = arrays["template"]
        self.search_radius = int(arrays["search_radius"][0])


def hann2d(shape: tuple[int, int]) -> np.ndarray:
    return np.outer(np.hanning(shape[0]), np.hanning(shape[1]))


def gaussian_label(shape: tuple[int, int], sigma_rows: float, sigma_cols: float) -> np.ndarray:
    """Gaussian peaked at index (0, 0) with circular distances."""
    rows = np.arange(shape[0])
    cols = np.arange(shape[1])
    dr = np.minimum(rows, shape[0] - rows)
    dc = np.minimum(cols, shape[1] - cols)
    return np.exp(-0.5 * ((dr[:, None] / sigma_rows) ** 2 + (dc[None, :] / sigma_cols) ** 2))


def wrapped_offset(index: int, size: int) -> int:
    return index - size if index > size // 2 else index


class DcfTracker(Tracker):
    """Single-channel MOSSE-style correlation filter on a fixed padded grid."""

    kind = "dcf"
    params_cls = DcfParams

    def _region(self, box: BoundingBox) -> BoundingBox:
        p = self.params.padding
        cx, cy = box.center()
        return BoundingBox(cx - p * box.w / 2, cy - p * box.h / 2, p * box.w, p * box.h)

    def _features(self, frame: Frame, box: BoundingBox) -> np.ndarray:
        z = extract_patch(frame, self._region(box), self.params.grid).pixels
        return (z - z.mean()) * self.window

    def _learn_first(self, frame, box):
        grid = self.params.grid
        self.window = hann2d(grid)
        sigma = np.sqrt(box.w * box.h) * self.params.sigma_factor
        # label width is set in image pixels, the grid is resampled
        cells_per_px_cols = grid[1] / (self.params.padding * box.w)
        cells_per_px_rows = grid[0] / (self.params.padding * box.h)
        y = gaussian_label(grid, sigma * cells_per_px_rows, sigma * cells_per_px_cols)
        self.label_spectrum = np.fft.fft2(y)
        self.A, self.B = self._targets(frame, box)

    def _targets(self, frame, box):
        F = np.fft.fft2(self._features(frame, box))
        return self.label_spectrum * np.conj(F), (F * np.conj(F)).real

    def response(self, frame: Frame, anchor: BoundingBox | None = None) -> np.ndarray:
        Z = np.fft.fft2(self._features(frame, anchor or self.current_box))
        return np.real(np.fft.ifft2(self.A / (self.B + self.params.lam) * Z))

    def peak_offset(self, response: np.ndarray) -> tuple[int, int]:
        """(dx, dy) in grid cells, wrapped to the signed range."""
        r, c = np.unravel_index(int(np.argmax(response)), response.shape)
        return wrapped_offset(int(c), response.shape[1]), wrapped_offset(int(r), response.shape[0])

    def predict(self, frame):
        box = self.current_box
        dx, dy = self.peak_offset(self.response(frame, box))
        gh, gw = self.params.grid
        p = self.params.padding
        return box.shifted(dx * p * box.w / gw, dy * p * box.h / gh)

    def update(self, frame, box):
        eta = self.params.eta
        A_new, B_new = self._targets(frame, box)
        self.A = (1.0 - eta) * self.A + eta * A_new
        self.B = (1.0 - eta) * self.B + eta * B_new
        self.current_box = box
        return self

    def _arrays(self):
        return {"A": self.A, "B": self.B, "window": self.window, "label_spectrum": self.label_spectrum}

    def _load_arrays(self, arrays):
        self.A = arrays["A"]
        self.B = arrays["B"]
        self.window = arrays["window"]
        self.label_spectrum = arrays["label_spectrum"]


TRACKERS: dict[str, type[Tracker]] = {"ncc": NccTracker, "dcf": DcfTracker}


def create_tracker(kind: str, frame: Frame, box: BoundingBox, params=None) -> Tracker:
    if kind not in TRACKERS:
        raise ValueError(f"unknown tracker kind {kind!r}; expected one of {sorted(TRACKERS)}")
    if isinstance(params, dict) or params is None:
        params = params_from_dict(kind, params)
    return TRACKERS[kind](params).init(frame, box)
