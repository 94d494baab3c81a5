"""OTB-layout loading/export, synthetic sequence generation and result files."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

from .geometry import BoundingBox, Frame, to_grayscale
from .pipeline import TrackingResult

ATTRIBUTES = ("IV", "SV", "OCC", "DEF", "MB", "FM", "IPR", "OPR", "OV", "BC", "LR")
_IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png")


class SequenceFormatError(ValueError):
    pass


@dataclass
class Sequence:
    name: str
    frames: list[Frame]
    ground_truth: list[BoundingBox] | None = None
    attributes: tuple[str, ...] = ()

    def __post_init__(self):
        for i, f in enumerate(self.frames, start=1):
            if f.index != i:
                raise SequenceFormatError(f"{self.name}: frame {i} carries index {f.index}")
        if self.ground_truth is not None and len(self.ground_truth) != len(self.frames):
            raise SequenceFormatError(
                f"{self.name}: {len(self.frames)} frames but {len(self.ground_truth)} boxes"
            )
        bad = set(self.attributes) - set(ATTRIBUTES)
        if bad:
            raise SequenceFormatError(f"{self.name}: unknown attribute(s) {sorted(bad)}")

    def __len__(self):
        return len(self.frames)


def parse_box_line(line: str, lineno: int) -> BoundingBox:
    parts = [p for p in re.split(r"[,\t ]+", line.strip()) if p]
    if len(parts) != 4:
        raise SequenceFormatError(f"line {lineno}: expected 4 values, got {len(parts)}")
    try:
        x, y, w, h = (float(p) for p in parts)
        return BoundingBox(x, y, w, h)
    except ValueError as exc:
        raise SequenceFormatError(f"line {lineno}: {exc}") from None


def load_groundtruth(path) -> list[BoundingBox]:
    boxes = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                boxes.append(parse_box_line(line, lineno))
    return boxes


def read_gray(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode in ("L", "I;16", "I", "F"):
            arr = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
        else:
            arr = to_grayscale(np.asarray(im.convert("RGB")))
    return arr


def load_otb(path, require_truth: bool = True) -> Sequence:
    """Load ``<seq>/img/*.{jpg,png}`` plus ``<seq>/groundtruth_rect.txt``.

    With ``require_truth=False`` a missing ground-truth file yields a sequence
    without boxes instead of an error.
    """
    root = Path(path)
    img_dir = root / "img"
    gt_path = root / "groundtruth_rect.txt"
    if not img_dir.is_dir():
        raise FileNotFoundError(f"missing image folder {img_dir}")
    has_truth = gt_path.is_file()
    if require_truth and not has_truth:
        raise FileNotFoundError(f"missing ground truth {gt_path}")
    files = sorted(p for p in img_dir.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES)
    if not files:
        raise FileNotFoundError(f"no images in {img_dir}")
    frames = [Frame(i, read_gray(p)) for i, p in enumerate(files, start=1)]
    truth = load_groundtruth(gt_path) if has_truth else None
    if truth is not None and len(truth) != len(frames):
        raise SequenceFormatError(
            f"{root.name}: {len(frames)} frames but {len(truth)} ground-truth lines"
        )
    attrs = ()
    attr_path = root / "attributes.txt"
    if attr_path.is_file():
        attrs = tuple(a.strip() for a in attr_path.read_text().replace("\n", ",").split(",") if a.strip())
    return Sequence(root.name, frames, truth, attrs)


def save_otb(seq: Sequence, path) -> Path:
    """Write a sequence in OTB layout (8-bit grayscale PNGs)."""
    root = Path(path)
    (root / "img").mkdir(parents=True, exist_ok=True)
    for f in seq.frames:
        px = np.round(f.pixels * 255.0).astype(np.uint8)
        Image.fromarray(px, mode="L").save(root / "img" / f"{f.index:04d}.png", optimize=False)
    if seq.ground_truth is not None:
        lines = [",".join(repr(float(v)) for v in b.as_tuple()) for b in seq.ground_truth]
        (root / "groundtruth_rect.txt").write_text("\n".join(lines) + "\n")
    if seq.attributes:
        (root / "attributes.txt").write_text(",".join(seq.attributes) + "\n")
    return root


@dataclass
class SynthSpec:
    """Textured square target over a textured background.

    ``waypoints`` are (frame, x, y) of the target's top-left corner, linearly
    interpolated; ``occlusions`` are (first, last, cover) with cover in (0, 1]
    hiding that fraction of the target width; ``gain`` is (frame, gain)
    waypoints.
    """

    name: str = "synth"
    length: int = 100
    image_size: tuple[int, int] = (160, 200)
    target_size: tuple[int, int] = (32, 32)
    waypoints: list = field(default_factory=lambda: [(1, 84.0, 64.0)])
    occlusions: list = field(default_factory=list)
    gain: list = field(default_factory=lambda: [(1, 1.0)])
    noise_sigma: float = 0.0
    texture_seed: int = 0
    seed: int = 0
    target_blur: float = 1.0
    background_blur: float = 2.0
    attributes: tuple[str, ...] = ()

    def __post_init__(self):
        self.image_size = tuple(int(v) for v in self.image_size)
        self.target_size = tuple(int(v) for v in self.target_size)
        self.waypoints = sorted((int(f), float(x), float(y)) for f, x, y in self.waypoints)
        self.occlusions = [(int(a), int(b), float(c)) for a, b, c in self.occlusions]
        self.gain = sorted((int(f), float(g)) for f, g in self.gain)
        self.attributes = tuple(self.attributes)
        if self.length < 1:
            raise ValueError("length must be >= 1")
        if min(self.image_size) < 1 or min(self.target_size) < 2:
            raise ValueError("image and target sizes must be positive")
        if not self.waypoints:
            raise ValueError("need at least one waypoint")
        for f, _, _ in self.waypoints:
            self._check_frame(f)
        for a, b, c in self.occlusions:
            self._check_frame(a)
            self._check_frame(b)
            if a > b or not 0 < c <= 1:
                raise ValueError(f"bad occlusion interval ({a}, {b}, {c})")
        for f, g in self.gain:
            self._check_frame(f)
            if g <= 0:
                raise ValueError("gain must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")

    def _check_frame(self, f: int):
        if not 1 <= f <= self.length:
            raise ValueError(f"frame {f} outside [1, {self.length}]")

    @classmethod
    def from_dict(cls, values: dict) -> SynthSpec:
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown synth spec key(s): {sorted(unknown)}")
        return cls(**values)

    @classmethod
    def load(cls, path) -> SynthSpec:
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def position(self, t: int) -> tuple[float, float]:
        fs = [w[0] for w in self.waypoints]
        x = float(np.interp(t, fs, [w[1] for w in self.waypoints]))
        y = float(np.interp(t, fs, [w[2] for w in self.waypoints]))
        return x, y

    def gain_at(self, t: int) -> float:
        return float(np.interp(t, [g[0] for g in self.gain], [g[1] for g in self.gain]))

    def cover_at(self, t: int) -> float:
        return max((c for a, b, c in self.occlusions if a <= t <= b), default=0.0)


def _texture(rng: np.random.Generator, shape, blur: float, lo: float, hi: float) -> np.ndarray:
    tex = rng.random(shape)
    if blur > 0:
        tex = gaussian_filter(tex, blur, mode="wrap")
    tex = (tex - tex.min()) / (tex.max() - tex.min())
    return lo + (hi - lo) * tex


def _coverage(start: float, extent: float, n: int) -> np.ndarray:
    """Fraction of each unit pixel [k, k+1) covered by [start, start + extent)."""
    k = np.arange(n)
    return np.clip(np.minimum(k + 1, start + extent) - np.maximum(k, start), 0.0, 1.0)


def _sample_bilinear(tex: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    h, w = tex.shape
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    ya, yb = np.clip(y0, 0, h - 1), np.clip(y0 + 1, 0, h - 1)
    xa, xb = np.clip(x0, 0, w - 1), np.clip(x0 + 1, 0, w - 1)
    top = tex[np.ix_(ya, xa)] * (1 - fx) + tex[np.ix_(ya, xb)] * fx
    bot = tex[np.ix_(yb, xa)] * (1 - fx) + tex[np.ix_(yb, xb)] * fx
    return top * (1 - fy) + bot * fy


def render_frame(spec: SynthSpec, t: int, target_tex: np.ndarray, background: np.ndarray,
                 occluded: bool = True) -> np.ndarray:
    th, tw = spec.target_size
    x, y = spec.position(t)
    ih, iw = spec.image_size
    alpha = np.outer(_coverage(y, th, ih), _coverage(x, tw, iw))
    if occluded:
        cover = spec.cover_at(t)
        if cover >= 1:
            alpha[:] = 0.0
        elif cover > 0:
            # hide the leftmost `cover` share of the target
            alpha *= (np.arange(iw) + 1 > x + cover * tw)[None, :]
    rows = np.flatnonzero(alpha.any(axis=1))
    cols = np.flatnonzero(alpha.any(axis=0))
    img = background.copy()
    if rows.size and cols.size:
        r0, r1, c0, c1 = rows[0], rows[-1] + 1, cols[0], cols[-1] + 1
        tgt = _sample_bilinear(target_tex, np.arange(r0, r1) - y, np.arange(c0, c1) - x)
        a = alpha[r0:r1, c0:c1]
        img[r0:r1, c0:c1] = background[r0:r1, c0:c1] * (1 - a) + tgt * a
    return img


def generate_synth(spec: SynthSpec) -> Sequence:
    tex_rng = np.random.default_rng(spec.texture_seed)
    target_tex = _texture(tex_rng, spec.target_size, spec.target_blur, 0.05, 0.95)
    background = _texture(tex_rng, spec.image_size, spec.background_blur, 0.2, 0.8)
    noise_rng = np.random.default_rng(spec.seed)
    frames, truth = [], []
    th, tw = spec.target_size
    for t in range(1, spec.length + 1):
        img = render_frame(spec, t, target_tex, background) * spec.gain_at(t)
        if spec.noise_sigma > 0:
            img = img + noise_rng.normal(0.0, spec.noise_sigma, img.shape)
        frames.append(Frame(t, np.clip(img, 0.0, 1.0)))
        x, y = spec.position(t)
        truth.append(BoundingBox(x, y, float(tw), float(th)))
    return Sequence(spec.name, frames, truth, spec.attributes)


def occlusion_suite(count: int = 10, tau: int = 10, n: int = 8, speed: float = 0.25,
                    image_size=(160, 240), noise_sigma: float = 0.01,
                    background_blur: float = 0.5) -> list[SynthSpec]:
    """Seeded sequences with one full occlusion of 2*tau frames inside the first window.

    The target drifts in a straight line at ``speed`` px/frame in a random
    direction; it is hidden on frames [1 + 3*tau, 5*tau] and the sequence runs
    four intervals past the first window so recovery can be measured.
    """
    if count < 1 or tau < 1 or n < 1:
        raise ValueError("count, tau and n must be positive")
    onset = 1 + 3 * tau
    length = 1 + n * tau + 4 * tau
    ih, iw = image_size
    x0, y0 = (iw - 32) / 2.0, (ih - 32) / 2.0
    specs = []
    for s in range(count):
        ang = np.random.default_rng(100 + s).uniform(0, 2 * np.pi)
        dx, dy = speed * np.cos(ang) * (length - 1), speed * np.sin(ang) * (length - 1)
        specs.append(SynthSpec(
            name=f"occ{s:02d}",
            length=length,
            image_size=image_size,
            waypoints=[(1, x0, y0), (length, x0 + dx, y0 + dy)],
            occlusions=[(onset, onset + 2 * tau - 1, 1.0)],
            noise_sigma=noise_sigma,
            texture_seed=s,
            seed=s,
            background_blur=background_blur,
            attributes=("OCC",),
        ))
    return specs


RESULT_HEADER = "frame,x,y,w,h"


def save_result(path, result: TrackingResult | list[BoundingBox]) -> None:
    boxes = result.boxes if isinstance(result, TrackingResult) else result
    lines = [RESULT_HEADER]
    for t, b in enumerate(boxes, start=1):
        lines.append(f"{t}," + ",".join(f"{v:.6g}" for v in b.as_tuple()))
    Path(path).write_text("\n".join(lines) + "\n")


def load_result(path) -> list[BoundingBox]:
    boxes = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or (lineno == 1 and line == RESULT_HEADER):
                continue
            parts = line.split(",")
            if len(parts) != 5:
                raise SequenceFormatError(f"line {lineno}: expected 5 columns, got {len(parts)}")
            try:
                t = int(parts[0])
                box = BoundingBox(*(float(p) for p in parts[1:]))
            except ValueError as exc:
                raise SequenceFormatError(f"line {lineno}: {exc}") from None
            if t != len(boxes) + 1:
                raise SequenceFormatError(f"line {lineno}: expected frame {len(boxes) + 1}, got {t}")
            boxes.append(box)
    return boxes
