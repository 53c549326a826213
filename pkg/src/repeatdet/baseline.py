"""Class-agnostic region proposals: dense multi-scale windows, edge-pruned.

Stands in for a hierarchical-grouping proposer: its job is to over-generate
regions that each get classified, with NMS thinning the survivors.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from .evaluation import DetectionRecord
from .geometry import BoundingBox, nms_indices
from .proposals import DEFAULT_TARGET_LONG_SIDE, Proposal, preprocess

__all__ = ["WindowConfig", "propose_windows", "run_baseline"]


@dataclass(frozen=True)
class WindowConfig:
    scales: tuple[int, ...] = (96, 128, 160, 192)
    stride_fraction: float = 0.5
    aspect_ratios: tuple[float, ...] = (1.0,)
    max_regions: int = 200
    # Windows whose mean gradient energy falls below this percentile of all
    # windows are dropped; 0 disables the filter.
    edge_percentile: float = 60.0
    nms_threshold: float = 0.5

    def __post_init__(self):
        if any(s <= 0 for s in self.scales):
            raise ValueError("scales must be positive")
        if not 0 < self.stride_fraction <= 1:
            raise ValueError("stride_fraction must be in (0, 1]")
        if not 0 <= self.edge_percentile < 100:
            raise ValueError("edge_percentile must be in [0, 100)")


def _gradient_integral(color: np.ndarray) -> np.ndarray:
    gray = cv2.cvtColor(color, cv2.COLOR_RGB2GRAY).astype(np.float32)
    gx = cv2.Sobel(gray, cv2.CV_32F, 1, 0, ksize=3)
    gy = cv2.Sobel(gray, cv2.CV_32F, 0, 1, ksize=3)
    magnitude = np.abs(gx) + np.abs(gy)
    return cv2.integral(magnitude)  # (H+1, W+1)


def propose_windows(frame, cfg: WindowConfig) -> list[BoundingBox]:
    """Dense sliding windows ordered by edge density, pruned and capped.

    For each scale s and aspect ratio a the window is (s * sqrt(a)) x
    (s / sqrt(a)) with strides of stride_fraction times the side, covering
    every position that fits. Deterministic for a fixed frame and config.
    """
    h_img, w_img = frame.color.shape[:2]
    integral = _gradient_integral(frame.color)

    windows: list[tuple[BoundingBox, float, int]] = []
    order = 0
    for scale in cfg.scales:
        for aspect in cfg.aspect_ratios:
            w = int(round(scale * np.sqrt(aspect)))
            h = int(round(scale / np.sqrt(aspect)))
            if w > w_img or h > h_img:
                continue
            step_x = max(1, int(round(cfg.stride_fraction * w)))
            step_y = max(1, int(round(cfg.stride_fraction * h)))
            for y in range(0, h_img - h + 1, step_y):
                for x in range(0, w_img - w + 1, step_x):
                    total = (
                        integral[y + h, x + w]
                        - integral[y, x + w]
                        - integral[y + h, x]
                        + integral[y, x]
                    )
                    energy = float(total) / (w * h)
                    windows.append((BoundingBox(x, y, x + w, y + h), energy, order))
                    order += 1
    if not windows:
        return []
    if cfg.edge_percentile > 0:
        cutoff = float(np.percentile([e for _, e, _ in windows], cfg.edge_percentile))
        windows = [w for w in windows if w[1] >= cutoff]
    windows.sort(key=lambda w: (-w[1], w[2]))
    return [box for box, _, _ in windows[: cfg.max_regions]]


def run_baseline(
    frame,
    cfg: WindowConfig,
    classifier,
    target_long_side: int = DEFAULT_TARGET_LONG_SIDE,
) -> list[DetectionRecord]:
    """Classify every proposed window, then suppress overlaps at the NMS threshold.

    Window scores are the argmax-class probabilities; kept records carry
    source "baseline" and no group association.
    """
    boxes = propose_windows(frame, cfg)
    vectors = []
    for idx, box in enumerate(boxes):
        prop = Proposal(box=box, instance_id=idx, group_id=None, frame_id=frame.frame_id)
        crop = preprocess(frame.color, prop, target_long_side)
        vectors.append(classifier.classify(crop))
    scores = [v.max_prob for v in vectors]
    kept = nms_indices(boxes, scores, cfg.nms_threshold)
    return [
        DetectionRecord(
            box=boxes[i],
            probs=vectors[i],
            source="baseline",
            group_id=None,
            instance_id=i,
            frame_id=frame.frame_id,
        )
        for i in kept
    ]
