"""Turn instance clusters into classifier-ready crops.

A cluster's tight keypoint box is expanded (default 60 percent per dimension)
to encapsulate the whole object, cropped, anti-alias blurred when downscaling,
and resized so the longest side is exactly 640 px.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from .geometry import BoundingBox, expand_box

__all__ = [
    "Proposal",
    "PreprocessedCrop",
    "DEFAULT_EXPAND_FACTOR",
    "DEFAULT_TARGET_LONG_SIDE",
    "cluster_to_box",
    "propose",
    "preprocess",
]

DEFAULT_EXPAND_FACTOR = 0.6
DEFAULT_TARGET_LONG_SIDE = 640


@dataclass(frozen=True)
class Proposal:
    """Expanded bounding box plus provenance."""

    box: BoundingBox
    instance_id: int
    group_id: int | None = None
    frame_id: str = ""


@dataclass(eq=False)
class PreprocessedCrop:
    """Resized crop whose longest side equals the configured target."""

    pixels: np.ndarray  # uint8 (h, w, 3), RGB
    source: Proposal
    scale_factor: float


def cluster_to_box(cluster, features) -> BoundingBox:
    """Tight axis-aligned box over the cluster's keypoint coordinates."""
    if not cluster.feature_indices:
        raise ValueError("cluster has no features")
    us = [features[i].keypoint.u for i in cluster.feature_indices]
    vs = [features[i].keypoint.v for i in cluster.feature_indices]
    return BoundingBox(min(us), min(vs), max(us), max(vs))


def propose(
    cluster,
    features,
    image_bounds: BoundingBox,
    expand_factor: float = DEFAULT_EXPAND_FACTOR,
    frame_id: str = "",
) -> Proposal:
    """Expand the cluster's tight box about its center, clipped to the image."""
    box = expand_box(cluster_to_box(cluster, features), expand_factor, image_bounds)
    return Proposal(
        box=box,
        instance_id=cluster.instance_id,
        group_id=cluster.group_id,
        frame_id=frame_id,
    )


def preprocess(
    color: np.ndarray,
    proposal: Proposal,
    target_long_side: int = DEFAULT_TARGET_LONG_SIDE,
) -> PreprocessedCrop:
    """Crop, anti-alias blur when downscaling, and resize to the target long side.

    Blur precedes the resize with sigma = 0.5 * (downscale ratio - 1); no blur
    is applied when upscaling or at the target size already. The shorter side
    is rounded half-up with a floor of 1 px, preserving aspect ratio.
    """
    box = proposal.box
    if box.area <= 0:
        raise ValueError("proposal box has zero area")
    h_img, w_img = color.shape[:2]
    x0 = max(0, int(np.floor(box.x_min)))
    y0 = max(0, int(np.floor(box.y_min)))
    x1 = min(w_img, max(int(np.ceil(box.x_max)), x0 + 1))
    y1 = min(h_img, max(int(np.ceil(box.y_max)), y0 + 1))
    if x1 <= x0 or y1 <= y0:
        raise ValueError("proposal box lies outside the image")
    crop = color[y0:y1, x0:x1]

    h, w = crop.shape[:2]
    long_side = max(w, h)
    scale = target_long_side / long_side
    if long_side > target_long_side:
        sigma = 0.5 * (long_side / target_long_side - 1.0)
        if sigma > 0:
            crop = cv2.GaussianBlur(crop, (0, 0), sigma)
    if w >= h:
        new_w = target_long_side
        new_h = max(1, int(np.floor(h * scale + 0.5)))
    else:
        new_h = target_long_side
        new_w = max(1, int(np.floor(w * scale + 0.5)))
    if (new_w, new_h) == (w, h):
        out = crop.copy()
    else:
        out = cv2.resize(crop, (new_w, new_h), interpolation=cv2.INTER_LINEAR)
    return PreprocessedCrop(pixels=out, source=proposal, scale_factor=scale)
