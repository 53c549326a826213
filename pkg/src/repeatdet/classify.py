"""Class probability vectors and pluggable classifier adapters.

The classification network itself is out of scope; a crop is classified either
by the deterministic stub (for synthetic experiments) or by an external
command that receives a PNG path and prints a JSON probability array.
"""

from __future__ import annotations

import hashlib
import json
import os
import subprocess
import tempfile
from dataclasses import dataclass, field

import cv2
import numpy as np

from .geometry import BoundingBox, iou
from .proposals import PreprocessedCrop

__all__ = [
    "ClassProbabilityVector",
    "CategorySpec",
    "ClassifierUnavailableError",
    "StubConfig",
    "stub_classify",
    "aggregate_category",
    "StubClassifier",
    "OracleLabeler",
    "ExternalCommandClassifier",
]

_SUM_TOL = 1e-6
# Raw adapter outputs whose total falls inside this band are renormalized;
# anything outside is rejected (likely logits, not probabilities).
_RAW_BAND = (0.9, 1.1)


class ClassifierUnavailableError(RuntimeError):
    """Adapter failure: bad exit status, malformed or out-of-band output."""


@dataclass(eq=False)
class ClassProbabilityVector:
    """Non-negative length-C vector summing to 1 (within 1e-6)."""

    probs: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.probs, dtype=np.float64).reshape(-1)
        if arr.size == 0:
            raise ValueError("empty probability vector")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ValueError("probabilities must be finite and non-negative")
        total = arr.sum()
        if abs(total - 1.0) > _SUM_TOL:
            raise ValueError(f"probabilities sum to {total}, expected 1 +- {_SUM_TOL}")
        self.probs = arr

    @property
    def num_classes(self) -> int:
        return self.probs.size

    @property
    def argmax(self) -> int:
        return int(np.argmax(self.probs))

    @property
    def max_prob(self) -> float:
        return float(self.probs.max())

    @classmethod
    def from_raw(cls, values) -> "ClassProbabilityVector":
        """Validate a raw adapter output, renormalizing totals within [0.9, 1.1]."""
        arr = np.asarray(values, dtype=np.float64).reshape(-1)
        if arr.size == 0 or not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ValueError("raw vector must be non-empty, finite, non-negative")
        total = arr.sum()
        if not _RAW_BAND[0] <= total <= _RAW_BAND[1]:
            raise ValueError(f"raw vector total {total} outside band {_RAW_BAND}")
        return cls(arr / total)


@dataclass(frozen=True)
class CategorySpec:
    """Named subset of class indices whose probabilities are pooled."""

    name: str
    class_indices: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        if not self.class_indices:
            raise ValueError("category needs at least one class index")
        if any(i < 0 for i in self.class_indices):
            raise ValueError("class indices must be non-negative")


def aggregate_category(p: ClassProbabilityVector, spec: CategorySpec) -> float:
    """Sum of the probabilities over the category's class indices."""
    idx = sorted(spec.class_indices)
    if idx[-1] >= p.num_classes:
        raise ValueError(f"category {spec.name!r} indexes past C={p.num_classes}")
    return float(p.probs[idx].sum())


# ---------------------------------------------------------------------------
# Stub classifier
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StubConfig:
    num_classes: int = 1000
    peak: float = 0.6
    label_noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.peak <= 1.0:
            raise ValueError("peak must be in [0, 1]")
        if not 0.0 <= self.label_noise <= 1.0:
            raise ValueError("label_noise must be in [0, 1]")
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes")


def _crop_rng(crop: PreprocessedCrop, seed: int) -> np.random.Generator:
    # Keyed on (seed, frame, instance) so re-running a scene reproduces the
    # draw while distinct instances stay independent.
    key = f"{seed}|{crop.source.frame_id}|{crop.source.instance_id}"
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def stub_classify(
    crop: PreprocessedCrop, truth_label: int, cfg: StubConfig
) -> ClassProbabilityVector:
    """Peaked vector on the truth label, or on a seeded confusion label.

    With probability (1 - label_noise) the peak mass lands on truth_label;
    otherwise on a uniformly drawn different label. Remaining mass is spread
    uniformly over the other classes. Fully determined by (cfg.seed, crop
    provenance).
    """
    c = cfg.num_classes
    if not 0 <= truth_label < c:
        raise ValueError(f"truth_label {truth_label} out of range for C={c}")
    rng = _crop_rng(crop, cfg.seed)
    label = truth_label
    if rng.random() < cfg.label_noise:
        other = int(rng.integers(c - 1))
        label = other + (1 if other >= truth_label else 0)
    probs = np.full(c, (1.0 - cfg.peak) / (c - 1), dtype=np.float64)
    probs[label] = cfg.peak
    return ClassProbabilityVector(probs)


class OracleLabeler:
    """Map a proposal box to the ground-truth class it covers, else background.

    The chosen ground truth is the one best covered by the box (intersection
    over GT area), requiring coverage >= min_coverage; ties break by IOU then
    by GT index. Coverage rather than IOU because expanded proposals and large
    windows contain the object while sitting well below IOU 0.5 against it.
    """

    def __init__(
        self,
        gts_by_frame: dict,
        background_class: int = 0,
        min_coverage: float = 0.5,
    ):
        self.gts_by_frame = gts_by_frame
        self.background_class = background_class
        self.min_coverage = min_coverage

    def __call__(self, crop: PreprocessedCrop) -> int:
        box: BoundingBox = crop.source.box
        best = None
        for idx, gt in enumerate(self.gts_by_frame.get(crop.source.frame_id, [])):
            if gt.box.area <= 0:
                continue
            iw = min(box.x_max, gt.box.x_max) - max(box.x_min, gt.box.x_min)
            ih = min(box.y_max, gt.box.y_max) - max(box.y_min, gt.box.y_min)
            coverage = max(0.0, iw) * max(0.0, ih) / gt.box.area
            key = (coverage, iou(box, gt.box), -idx)
            if coverage >= self.min_coverage and (best is None or key > best[0]):
                best = (key, gt.class_index)
        return self.background_class if best is None else best[1]


class StubClassifier:
    """Adapter pairing a truth labeler with the stub probability model."""

    single_flight = False

    def __init__(self, labeler, cfg: StubConfig):
        self.labeler = labeler
        self.cfg = cfg

    def classify(self, crop: PreprocessedCrop) -> ClassProbabilityVector:
        return stub_classify(crop, self.labeler(crop), self.cfg)


# ---------------------------------------------------------------------------
# External command adapter
# ---------------------------------------------------------------------------


class ExternalCommandClassifier:
    """Invoke a user command per crop: PNG path in, JSON array of C numbers out.

    The crop is written as a PNG whose path is appended to the command's
    arguments. A non-zero exit status or malformed/out-of-band output raises
    ClassifierUnavailableError carrying the diagnostic.
    """

    single_flight = False  # each call spawns its own process

    def __init__(self, command: list[str], num_classes: int, timeout: float = 60.0):
        if not command:
            raise ValueError("empty command")
        self.command = list(command)
        self.num_classes = num_classes
        self.timeout = timeout

    def classify(self, crop: PreprocessedCrop) -> ClassProbabilityVector:
        fd, path = tempfile.mkstemp(suffix=".png")
        os.close(fd)
        try:
            cv2.imwrite(path, cv2.cvtColor(crop.pixels, cv2.COLOR_RGB2BGR))
            try:
                result = subprocess.run(
                    self.command + [path],
                    capture_output=True,
                    text=True,
                    timeout=self.timeout,
                )
            except (OSError, subprocess.TimeoutExpired) as exc:
                raise ClassifierUnavailableError(f"command failed to run: {exc}")
            if result.returncode != 0:
                raise ClassifierUnavailableError(
                    f"command exited {result.returncode}: {result.stderr.strip()[:200]}"
                )
            try:
                values = json.loads(result.stdout)
            except json.JSONDecodeError as exc:
                raise ClassifierUnavailableError(f"output is not JSON: {exc}")
            if not isinstance(values, list) or len(values) != self.num_classes:
                raise ClassifierUnavailableError(
                    f"expected JSON array of {self.num_classes} numbers, "
                    f"got {type(values).__name__} of length "
                    f"{len(values) if isinstance(values, list) else 'n/a'}"
                )
            try:
                return ClassProbabilityVector.from_raw(values)
            except (ValueError, TypeError) as exc:
                raise ClassifierUnavailableError(f"bad probability vector: {exc}")
        finally:
            if os.path.exists(path):
                os.unlink(path)
