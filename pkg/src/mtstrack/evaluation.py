"""One-pass evaluation: precision/success curves, PR/SR, comparisons and plots."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import BoundingBox, center_distance, iou
from .pipeline import TrackingResult

PRECISION_THRESHOLDS = np.arange(0, 51, dtype=np.float64)
SUCCESS_THRESHOLDS = np.arange(21) / 20.0
PR_THRESHOLD = 20.0


@dataclass
class EvalReport:
    name: str
    center_errors: np.ndarray
    overlaps: np.ndarray
    precision: np.ndarray
    success: np.ndarray
    attributes: tuple[str, ...] = ()

    @property
    def pr(self) -> float:
        return float(self.precision[int(PR_THRESHOLD)])

    @property
    def sr(self) -> float:
        return float(np.mean(self.success))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "pr": self.pr,
            "sr": self.sr,
            "attributes": list(self.attributes),
            "precision": self.precision.tolist(),
            "success": self.success.tolist(),
        }


def precision_curve(errors: np.ndarray) -> np.ndarray:
    if len(errors) == 0:
        return np.zeros_like(PRECISION_THRESHOLDS)
    return np.array([np.mean(errors <= th) for th in PRECISION_THRESHOLDS])


def success_curve(overlaps: np.ndarray) -> np.ndarray:
    if len(overlaps) == 0:
        return np.zeros_like(SUCCESS_THRESHOLDS)
    return np.array([np.mean(overlaps > th) for th in SUCCESS_THRESHOLDS])


def evaluate_ope(
    result: TrackingResult | Sequence[BoundingBox],
    truth: Sequence[BoundingBox],
    name: str = "",
    attributes: Sequence[str] = (),
) -> EvalReport:
    """Score frames 2..T; frame 1 is the given initialization."""
    boxes = result.boxes if isinstance(result, TrackingResult) else list(result)
    if len(boxes) != len(truth):
        raise ValueError(f"{len(boxes)} predictions for {len(truth)} ground-truth boxes")
    pairs = list(zip(boxes[1:], truth[1:]))
    errors = np.array([center_distance(p, g) for p, g in pairs])
    overlaps = np.array([iou(p, g) for p, g in pairs])
    return EvalReport(
        name, errors, overlaps, precision_curve(errors), success_curve(overlaps), tuple(attributes)
    )


@dataclass
class SuiteReport:
    """Per-sequence reports plus curves averaged over sequences."""

    label: str
    sequences: dict[str, EvalReport]
    precision: np.ndarray = field(init=False)
    success: np.ndarray = field(init=False)

    def __post_init__(self):
        if not self.sequences:
            raise ValueError("suite report needs at least one sequence")
        reps = list(self.sequences.values())
        self.precision = np.mean([r.precision for r in reps], axis=0)
        self.success = np.mean([r.success for r in reps], axis=0)

    @property
    def pr(self) -> float:
        return float(self.precision[int(PR_THRESHOLD)])

    @property
    def sr(self) -> float:
        return float(np.mean(self.success))

    def factors(self) -> dict[str, tuple[float, float, int]]:
        """Attribute tag -> (PR, SR, sequence count)."""
        out = {}
        tags = sorted({a for r in self.sequences.values() for a in r.attributes})
        for tag in tags:
            sub = [r for r in self.sequences.values() if tag in r.attributes]
            prec = np.mean([r.precision for r in sub], axis=0)
            succ = np.mean([r.success for r in sub], axis=0)
            out[tag] = (float(prec[int(PR_THRESHOLD)]), float(np.mean(succ)), len(sub))
        return out

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "pr": self.pr,
            "sr": self.sr,
            "factors": {k: {"pr": v[0], "sr": v[1], "count": v[2]} for k, v in self.factors().items()},
            "sequences": {k: v.to_dict() for k, v in self.sequences.items()},
        }


def as_suite(report: EvalReport | SuiteReport, label: str | None = None) -> SuiteReport:
    if isinstance(report, SuiteReport):
        return report
    return SuiteReport(label or report.name, {report.name: report})


def percent_change(old: float, new: float) -> float:
    if old == 0:
        return 0.0 if new == 0 else math.copysign(math.inf, new)
    return (new - old) / old * 100.0


@dataclass
class ComparisonRow:
    label: str
    count: int
    base_pr: float
    base_sr: float
    new_pr: float
    new_sr: float

    @property
    def pr_change(self) -> float:
        return percent_change(self.base_pr, self.new_pr)

    @property
    def sr_change(self) -> float:
        return percent_change(self.base_sr, self.new_sr)


@dataclass
class ComparisonRecord:
    base_label: str
    new_label: str
    rows: list[ComparisonRow]

    def row(self, label: str) -> ComparisonRow:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)

    def format_table(self) -> str:
        head = f"{'':<10}{self.base_label:>15}{self.new_label:>15}{'change':>20}"
        lines = [head]
        for r in self.rows:
            name = f"{r.label}({r.count})" if r.label != "Average" else r.label
            lines.append(
                f"{name:<10}{r.base_pr:>8.3f}/{r.base_sr:.3f}{r.new_pr:>9.3f}/{r.new_sr:.3f}"
                f"{r.pr_change:>11.2f}%/{r.sr_change:.2f}%"
            )
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "base": self.base_label,
            "new": self.new_label,
            "rows": [
                {
                    "label": r.label,
                    "count": r.count,
                    "base_pr": r.base_pr,
                    "base_sr": r.base_sr,
                    "new_pr": r.new_pr,
                    "new_sr": r.new_sr,
                    "pr_change_pct": r.pr_change,
                    "sr_change_pct": r.sr_change,
                }
                for r in self.rows
            ],
        }


def compare(new: EvalReport | SuiteReport, base: EvalReport | SuiteReport) -> ComparisonRecord:
    """Table-style comparison of a new arm against a baseline arm."""
    new, base = as_suite(new, "new"), as_suite(base, "base")
    if set(new.sequences) != set(base.sequences):
        raise ValueError("reports cover different sequence sets")
    rows = []
    base_f, new_f = base.factors(), new.factors()
    for tag in sorted(base_f):
        b, n = base_f[tag], new_f[tag]
        rows.append(ComparisonRow(tag, b[2], b[0], b[1], n[0], n[1]))
    rows.append(ComparisonRow("Average", len(base.sequences), base.pr, base.sr, new.pr, new.sr))
    return ComparisonRecord(base.label, new.label, rows)


def write_curve_csv(path, thresholds: np.ndarray, values: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "value"])
        for th, v in zip(thresholds, values):
            w.writerow([f"{th:.6g}", f"{v:.6g}"])


def read_curve_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    return np.array([float(r[0]) for r in rows]), np.array([float(r[1]) for r in rows])


def emit_plots(reports: Sequence[EvalReport | SuiteReport], outdir) -> dict[str, Path]:
    """Precision and success SVG plots plus one curve CSV per report and curve.

    Legends are ordered by PR (precision plot) or SR (success plot), best first.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    suites = [as_suite(r) for r in reports]
    paths = {}
    for kind, xs, key, xlabel in (
        ("precision", PRECISION_THRESHOLDS, "pr", "Location error threshold (px)"),
        ("success", SUCCESS_THRESHOLDS, "sr", "Overlap threshold"),
    ):
        ranked = sorted(suites, key=lambda s: getattr(s, key), reverse=True)
        fig, ax = plt.subplots(figsize=(5, 4))
        for s in ranked:
            ys = getattr(s, kind)
            ax.plot(xs, ys, label=f"{s.label} [{getattr(s, key):.3f}]")
            write_curve_csv(out / f"{s.label}_{kind}.csv", xs, ys)
        ax.set_xlabel(xlabel)
        ax.set_ylabel("Precision" if kind == "precision" else "Success rate")
        ax.set_ylim(0, 1)
        ax.set_title(f"{kind.capitalize()} plots of OPE")
        ax.legend(loc="lower left" if kind == "success" else "lower right")
        svg = out / f"{kind}.svg"
        with matplotlib.rc_context({"svg.hashsalt": "mtstrack"}):
            # fixed salt and no date keep the SVG byte-stable across runs
            fig.savefig(svg, format="svg", metadata={"Date": None})
        plt.close(fig)
        paths[kind] = svg
    (out / "summary.json").write_text(json.dumps([s.to_dict() for s in suites], indent=2))
    return paths
