"""Ground-truth matching, micro-averaged precision/recall, PR curves, reports.

Precision and recall are micro-averaged: per-class true/false positive and
false negative tallies are summed over all classes before dividing, so a
single misclassification can be counted as a false positive multiple times
across the threshold sweep.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import cv2
import numpy as np

from .classify import CategorySpec, ClassProbabilityVector, aggregate_category
from .geometry import BoundingBox, iou

__all__ = [
    "GroundTruthBox",
    "DetectionRecord",
    "EvalCounts",
    "PRPoint",
    "match_detections",
    "compute_pr",
    "pr_curve",
    "auc_pr",
    "emit_report",
    "write_overlay",
]


@dataclass(frozen=True)
class GroundTruthBox:
    box: BoundingBox
    class_index: int
    object_type_id: int = -1

    def __post_init__(self):
        if self.class_index < 0:
            raise ValueError("class_index must be non-negative")


@dataclass(eq=False)
class DetectionRecord:
    box: BoundingBox
    probs: ClassProbabilityVector
    source: str
    group_id: int | None = None
    instance_id: int | None = None
    frame_id: str = ""

    @property
    def predicted_class(self) -> int:
        return self.probs.argmax

    @property
    def score(self) -> float:
        return self.probs.max_prob


@dataclass(eq=False)
class EvalCounts:
    """Per-class tp/fp/fn tallies of a fixed class count."""

    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray

    @classmethod
    def zeros(cls, num_classes: int) -> "EvalCounts":
        return cls(
            tp=np.zeros(num_classes, dtype=np.int64),
            fp=np.zeros(num_classes, dtype=np.int64),
            fn=np.zeros(num_classes, dtype=np.int64),
        )

    def __post_init__(self):
        for arr in (self.tp, self.fp, self.fn):
            if np.any(arr < 0):
                raise ValueError("tallies must be non-negative")

    def add(self, other: "EvalCounts") -> "EvalCounts":
        return EvalCounts(
            tp=self.tp + other.tp, fp=self.fp + other.fp, fn=self.fn + other.fn
        )


@dataclass(frozen=True)
class PRPoint:
    threshold: float
    precision: float
    recall: float

    def __post_init__(self):
        if not (0 <= self.precision <= 1 and 0 <= self.recall <= 1):
            raise ValueError("precision and recall must be in [0, 1]")


def match_detections(
    dets: list[tuple[BoundingBox, int, float]],
    gts: list[GroundTruthBox],
    iou_min: float,
    num_classes: int = 1000,
) -> EvalCounts:
    """Greedy score-descending matching with single ground-truth consumption.

    A detection is a true positive for its predicted class when it overlaps an
    unconsumed ground truth of the same class with IOU >= iou_min (consuming
    the one with maximum IOU; ties break toward the lower GT index); otherwise
    it is a false positive for the predicted class. Every unconsumed ground
    truth contributes one false negative to its class.
    """
    if not 0 < iou_min <= 1:
        raise ValueError("iou_min must be in (0, 1]")
    counts = EvalCounts.zeros(num_classes)
    consumed = [False] * len(gts)
    order = sorted(range(len(dets)), key=lambda k: (-dets[k][2], k))
    for k in order:
        box, cls, _score = dets[k]
        if not 0 <= cls < num_classes:
            raise ValueError(f"detection class {cls} out of range")
        best_iou, best_g = 0.0, None
        for g, gt in enumerate(gts):
            if consumed[g] or gt.class_index != cls:
                continue
            overlap = iou(box, gt.box)
            if overlap >= iou_min and overlap > best_iou:
                best_iou, best_g = overlap, g
        if best_g is not None:
            consumed[best_g] = True
            counts.tp[cls] += 1
        else:
            counts.fp[cls] += 1
    for g, gt in enumerate(gts):
        if not consumed[g]:
            if gt.class_index >= num_classes:
                raise ValueError(f"ground-truth class {gt.class_index} out of range")
            counts.fn[gt.class_index] += 1
    return counts


def compute_pr(counts: EvalCounts) -> tuple[float, float]:
    """Micro-averaged (P, R); empty denominators default to 1."""
    tp = int(counts.tp.sum())
    den_p = tp + int(counts.fp.sum())
    den_r = tp + int(counts.fn.sum())
    precision = 1.0 if den_p == 0 else tp / den_p
    recall = 1.0 if den_r == 0 else tp / den_r
    return precision, recall


def _scored_triples(
    dets: list[DetectionRecord], category: CategorySpec | None
) -> list[tuple[str, BoundingBox, int, float]]:
    out = []
    for d in dets:
        if category is None:
            cls = d.predicted_class
            score = float(d.probs.probs[cls])
        else:
            cls = 0  # single pooled pseudo-class
            score = aggregate_category(d.probs, category)
        out.append((d.frame_id, d.box, cls, score))
    return out


def pr_curve(
    dets: list[DetectionRecord],
    gts_by_frame: Mapping[str, list[GroundTruthBox]],
    iou_min: float,
    num_classes: int = 1000,
    category: CategorySpec | None = None,
) -> list[PRPoint]:
    """One PR point per distinct detection score, ordered by descending threshold.

    Each detection scores as its argmax-class probability (or, in category
    mode, the pooled category probability against the category's ground
    truths). Matching happens within frames; tallies are summed across frames
    before the micro-averaged division.
    """
    if category is None:
        gts_use = {fid: list(gts) for fid, gts in gts_by_frame.items()}
        c_use = num_classes
    else:
        gts_use = {
            fid: [
                GroundTruthBox(g.box, 0, g.object_type_id)
                for g in gts
                if g.class_index in category.class_indices
            ]
            for fid, gts in gts_by_frame.items()
        }
        c_use = 1
    total_gts = sum(len(v) for v in gts_use.values())
    triples = _scored_triples(dets, category)
    if not triples:
        return [PRPoint(1.0, 1.0, 0.0 if total_gts else 1.0)]

    points = []
    for threshold in sorted({t[3] for t in triples}, reverse=True):
        counts = EvalCounts.zeros(c_use)
        for fid, gts in gts_use.items():
            frame_dets = [
                (box, cls, score)
                for f, box, cls, score in triples
                if f == fid and score >= threshold
            ]
            counts = counts.add(match_detections(frame_dets, gts, iou_min, c_use))
        # Detections on frames absent from gts_by_frame still count as fps.
        orphan = [
            (box, cls, score)
            for f, box, cls, score in triples
            if f not in gts_use and score >= threshold
        ]
        if orphan:
            counts = counts.add(match_detections(orphan, [], iou_min, c_use))
        precision, recall = compute_pr(counts)
        points.append(PRPoint(threshold, precision, recall))
    return points


def auc_pr(points: list[PRPoint]) -> float:
    """Step-function area under the PR curve, walking recall upward from 0."""
    ordered = sorted(points, key=lambda p: p.recall)
    area, prev_recall = 0.0, 0.0
    for p in ordered:
        area += (p.recall - prev_recall) * p.precision
        prev_recall = p.recall
    return area


# ---------------------------------------------------------------------------
# Report emission
# ---------------------------------------------------------------------------

_CURVE_COLORS = ["#1f77b4", "#2ca02c", "#ff7f0e", "#d62728", "#9467bd", "#8c564b"]

_GROUP_PALETTE = [
    (230, 25, 75),
    (60, 180, 75),
    (0, 130, 200),
    (245, 130, 48),
    (145, 30, 180),
    (255, 225, 25),
    (70, 240, 240),
    (240, 50, 230),
]


def _curve_csv(points: list[PRPoint]) -> str:
    lines = ["threshold,precision,recall"]
    lines += [f"{p.threshold!r},{p.precision!r},{p.recall!r}" for p in points]
    return "\n".join(lines) + "\n"


def _svg_plot(curves: dict[str, list[PRPoint]], width=480, height=360) -> str:
    """Minimal SVG line plot: one polyline per curve, recall vs precision."""
    ml, mr, mt, mb = 50, 16, 16, 40
    pw, ph = width - ml - mr, height - mt - mb

    def sx(recall):
        return ml + recall * pw

    def sy(precision):
        return mt + (1.0 - precision) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    for tick in np.linspace(0, 1, 6):
        parts.append(
            f'<line x1="{sx(tick):.1f}" y1="{mt + ph}" x2="{sx(tick):.1f}" '
            f'y2="{mt + ph + 4}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{sx(tick):.1f}" y="{mt + ph + 16}" font-size="10" '
            f'text-anchor="middle">{tick:.1f}</text>'
        )
        parts.append(
            f'<line x1="{ml - 4}" y1="{sy(tick):.1f}" x2="{ml}" '
            f'y2="{sy(tick):.1f}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{ml - 8}" y="{sy(tick) + 3:.1f}" font-size="10" '
            f'text-anchor="end">{tick:.1f}</text>'
        )
    parts.append(
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>'
    )
    parts.append(
        f'<text x="{ml + pw / 2:.1f}" y="{height - 8}" font-size="11" '
        f'text-anchor="middle">recall</text>'
    )
    parts.append(
        f'<text x="14" y="{mt + ph / 2:.1f}" font-size="11" text-anchor="middle" '
        f'transform="rotate(-90 14 {mt + ph / 2:.1f})">precision</text>'
    )
    for n, (name, points) in enumerate(sorted(curves.items())):
        color = _CURVE_COLORS[n % len(_CURVE_COLORS)]
        coords = " ".join(
            f"{sx(p.recall):.2f},{sy(p.precision):.2f}"
            for p in sorted(points, key=lambda p: (p.recall, -p.precision))
        )
        parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        ly = mt + 14 + 14 * n
        parts.append(
            f'<line x1="{ml + 8}" y1="{ly}" x2="{ml + 28}" y2="{ly}" '
            f'stroke="{color}" stroke-width="1.5"/>'
        )
        parts.append(f'<text x="{ml + 32}" y="{ly + 3}" font-size="10">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_report(
    curves: dict[str, list[PRPoint]],
    out_dir,
    counts: dict[str, EvalCounts] | None = None,
) -> list[Path]:
    """Write prcurve_<source>.csv per curve plus one combined prcurve.svg.

    CSVs are UTF-8 with LF line endings and dot decimals, rows in
    threshold-descending order as produced by pr_curve. When final tallies are
    supplied, a summary.csv with micro-averaged P/R per source is added.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, points in sorted(curves.items()):
        path = out_dir / f"prcurve_{name}.csv"
        path.write_bytes(_curve_csv(points).encode("utf-8"))
        written.append(path)
    svg_path = out_dir / "prcurve.svg"
    svg_path.write_bytes(_svg_plot(curves).encode("utf-8"))
    written.append(svg_path)
    if counts:
        lines = ["source,precision,recall"]
        for name, tally in sorted(counts.items()):
            p, r = compute_pr(tally)
            lines.append(f"{name},{p!r},{r!r}")
        summary = out_dir / "summary.csv"
        summary.write_bytes(("\n".join(lines) + "\n").encode("utf-8"))
        written.append(summary)
    return written


def write_overlay(
    color: np.ndarray,
    records,
    path,
    score_threshold: float = 0.0,
    label_scores: bool = True,
) -> Path:
    """Draw detection boxes on the frame, colored by group association.

    Records without a group id render gray; records scoring below the
    threshold are skipped (the baseline convention for readable overlays).
    """
    canvas = cv2.cvtColor(color, cv2.COLOR_RGB2BGR).copy()
    for rec in records:
        if rec.score < score_threshold:
            continue
        if rec.group_id is None:
            bgr = (128, 128, 128)
        else:
            r, g, b = _GROUP_PALETTE[rec.group_id % len(_GROUP_PALETTE)]
            bgr = (b, g, r)
        x0, y0, x1, y1 = (int(round(v)) for v in rec.box.as_tuple())
        cv2.rectangle(canvas, (x0, y0), (x1, y1), bgr, 2)
        if label_scores:
            cv2.putText(
                canvas,
                f"{rec.score:.2f}",
                (x0 + 2, max(12, y0 - 4)),
                cv2.FONT_HERSHEY_SIMPLEX,
                0.4,
                bgr,
                1,
            )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ok, buf = cv2.imencode(".png", canvas)
    if not ok:
        raise IOError(f"PNG encoding failed for {path}")
    path.write_bytes(buf.tobytes())
    return path
