"""Boxes, frames and patch sampling shared by the trackers and the scorer."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

PATCH_SIZE = (32, 32)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in pixel coordinates, (x, y) is the top-left corner."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box needs positive size, got w={self.w} h={self.h}")
        if not all(math.isfinite(v) for v in (self.x, self.y, self.w, self.h)):
            raise ValueError("box coordinates must be finite")

    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2, self.y + self.h / 2)

    def area(self) -> float:
        return self.w * self.h

    def shifted(self, dx: float, dy: float) -> BoundingBox:
        return BoundingBox(self.x + dx, self.y + dy, self.w, self.h)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)


@dataclass(frozen=True, eq=False)
class Frame:
    """Grayscale image with intensities in [0, 1] and a 1-based index."""

    index: int
    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"frame must be a non-empty 2-D array, got shape {px.shape}")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ValueError("frame intensities must lie in [0, 1]")
        if px is self.pixels and px.flags.writeable:
            px = px.copy()
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape


@dataclass(frozen=True, eq=False)
class Patch:
    pixels: np.ndarray
    source_box: BoundingBox


def iou(a: BoundingBox, b: BoundingBox) -> float:
    # overlap written through the offset so equal boxes overlap by exactly w and h
    dx, dy = a.x - b.x, a.y - b.y
    iw = min(a.w, b.w, a.w + dx, b.w - dx)
    ih = min(a.h, b.h, a.h + dy, b.h - dy)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return min(1.0, inter / (a.area() + b.area() - inter))


def center_distance(a: BoundingBox, b: BoundingBox) -> float:
    (ax, ay), (bx, by) = a.center(), b.center()
    return math.hypot(ax - bx, ay - by)


def sample_coords(start: float, extent: float, n: int) -> np.ndarray:
    """Pixel-center sample positions of an `extent`-wide span split into `n` cells."""
    return start + (np.arange(n) + 0.5) * (extent / n) - 0.5


def interp_matrix(coords: np.ndarray, size: int) -> np.ndarray:
    """Bilinear weights mapping a length-`size` axis onto `coords`.

    Out-of-range positions replicate the edge sample.
    """
    coords = np.asarray(coords, dtype=np.float64)
    lo = np.floor(coords)
    frac = coords - lo
    lo = lo.astype(np.int64)
    i0 = np.clip(lo, 0, size - 1)
    i1 = np.clip(lo + 1, 0, size - 1)
    rows = np.arange(len(coords))
    m = np.zeros((len(coords), size))
    np.add.at(m, (rows, i0), 1.0 - frac)
    np.add.at(m, (rows, i1), frac)
    return m


def interp_band(coords: np.ndarray, size: int) -> tuple[np.ndarray, int]:
    """Like `interp_matrix`, restricted to the columns the weights touch.

    Returns the banded matrix and the index of its first column.
    """
    lo = int(np.clip(np.floor(coords.min()), 0, size - 1))
    hi = int(np.clip(np.floor(coords.max()) + 1, 0, size - 1))
    m = interp_matrix(coords - lo, size - lo)
    return np.ascontiguousarray(m[:, : hi - lo + 1]), lo


def extract_patch(frame: Frame, box: BoundingBox, size: tuple[int, int] = PATCH_SIZE) -> Patch:
    """Resample the region under `box` to a `size` = (rows, cols) grid."""
    ph, pw = size
    img = frame.pixels
    ry = interp_matrix(sample_coords(box.y, box.h, ph), img.shape[0])
    cx = interp_matrix(sample_coords(box.x, box.w, pw), img.shape[1])
    return Patch(ry @ img @ cx.T, box)


def extract_shifted_patches(
    frame: Frame,
    box: BoundingBox,
    radius: int,
    size: tuple[int, int] = PATCH_SIZE,
) -> np.ndarray:
    """Patches for every integer shift of `box` with |dx|, |dy| <= radius.

    Returns an array (often a strided view) indexed
    [dy + radius, dx + radius, row, col]. Whole-pixel shifts leave the
    bilinear fractions unchanged, so the stack is two matrix products; a box
    that lands exactly on the pixel grid at patch resolution reduces to plain
    windows of the edge-replicated image.
    """
    ph, pw = size
    img = frame.pixels
    shifts = np.arange(-radius, radius + 1)
    k = len(shifts)
    on_grid = box.w == pw and box.h == ph and float(box.x).is_integer() and float(box.y).is_integer()
    if on_grid:
        rows = np.clip(np.arange(int(box.y) - radius, int(box.y) + radius + ph), 0, img.shape[0] - 1)
        cols = np.clip(np.arange(int(box.x) - radius, int(box.x) + radius + pw), 0, img.shape[1] - 1)
        region = img[np.ix_(rows, cols)]
        return sliding_window_view(region, (ph, pw))
    ys = (sample_coords(box.y, box.h, ph)[None, :] + shifts[:, None]).ravel()
    xs = (sample_coords(box.x, box.w, pw)[None, :] + shifts[:, None]).ravel()
    ry, r0 = interp_band(ys, img.shape[0])
    cx, c0 = interp_band(xs, img.shape[1])
    stack = ry @ img[r0 : r0 + ry.shape[1], c0 : c0 + cx.shape[1]] @ cx.T
    return stack.reshape(k, ph, k, pw).transpose(0, 2, 1, 3)


def to_grayscale(rgb: np.ndarray) -> np.ndarray:
    """8-bit RGB (..., 3) to luma in [0, 1]."""
    rgb = np.asarray(rgb, dtype=np.float64)
    luma = (0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]) / 255.0
    return np.clip(luma, 0.0, 1.0)
