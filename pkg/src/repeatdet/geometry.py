"""Axis-aligned boxes, IOU, NMS, camera back-projection, and rigid transforms.

Everything here is a pure function over immutable inputs and safe to call
concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BoundingBox",
    "CameraIntrinsics",
    "RigidTransform",
    "DegenerateTransformError",
    "iou",
    "nms",
    "nms_indices",
    "expand_box",
    "backproject",
    "project",
    "estimate_rigid_transform",
]

# Tolerances for the RigidTransform validity checks.
_ORTHONORMALITY_TOL = 1e-9
_DETERMINANT_TOL = 1e-9


class DegenerateTransformError(ValueError):
    """The point configuration does not determine a unique proper rotation."""


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in image coordinates (origin top-left, units pixels)."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min <= self.x_max and self.y_min <= self.y_max):
            raise ValueError(
                f"invalid box: ({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))

    def clip(self, bounds: "BoundingBox") -> "BoundingBox":
        """Clamp this box into ``bounds`` (may collapse to zero area at an edge)."""
        x0 = min(max(self.x_min, bounds.x_min), bounds.x_max)
        y0 = min(max(self.y_min, bounds.y_min), bounds.y_max)
        x1 = min(max(self.x_max, bounds.x_min), bounds.x_max)
        y1 = min(max(self.y_max, bounds.y_min), bounds.y_max)
        return BoundingBox(x0, y0, x1, y1)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole model: focal lengths / principal point in pixels, depth scale in m/unit."""

    fx: float
    fy: float
    cx: float
    cy: float
    depth_scale: float = 0.001

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.depth_scale <= 0:
            raise ValueError("depth_scale must be positive")


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Proper rotation plus translation, p -> R @ p + t (meters)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if r.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if np.abs(r.T @ r - np.eye(3)).max() > _ORTHONORMALITY_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > _DETERMINANT_TOL:
            raise ValueError("rotation is not proper (det != +1)")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one 3-vector or an (N, 3) array of points."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes; 0 when the union has zero area."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    inter = max(0.0, iw) * max(0.0, ih)
    union = a.area + b.area - inter
    if union <= 0.0:
        # Zero-area boxes carry no spatial evidence, including identical ones.
        return 0.0
    return inter / union


def nms_indices(
    boxes: list[BoundingBox], scores: list[float], overlap_threshold: float
) -> list[int]:
    """Greedy NMS; returns kept input indices in descending-score order.

    Ties in score are broken by input index (stable), and a box is suppressed
    only when its IOU with an already-kept box strictly exceeds the threshold.
    """
    if not 0.0 <= overlap_threshold <= 1.0:
        raise ValueError("overlap_threshold must be in [0, 1]")
    if len(boxes) != len(scores):
        raise ValueError("boxes and scores must have equal length")
    for s in scores:
        if not np.isfinite(s):
            raise ValueError("scores must be finite")
    order = sorted(range(len(boxes)), key=lambda i: (-scores[i], i))
    kept: list[int] = []
    for i in order:
        if all(iou(boxes[i], boxes[j]) <= overlap_threshold for j in kept):
            kept.append(i)
    return kept


def nms(
    detections: list[tuple[BoundingBox, float]], overlap_threshold: float
) -> list[tuple[BoundingBox, float]]:
    """Greedy NMS over (box, score) pairs; output preserves descending score order."""
    boxes = [d[0] for d in detections]
    scores = [d[1] for d in detections]
    return [detections[i] for i in nms_indices(boxes, scores, overlap_threshold)]


def expand_box(b: BoundingBox, factor: float, bounds: BoundingBox) -> BoundingBox:
    """Scale width and height by (1 + factor) about the center, then clip to bounds."""
    if factor < 0:
        raise ValueError("factor must be >= 0")
    cx, cy = b.center
    half_w = 0.5 * b.width * (1.0 + factor)
    half_h = 0.5 * b.height * (1.0 + factor)
    return BoundingBox(cx - half_w, cy - half_h, cx + half_w, cy + half_h).clip(bounds)


def backproject(
    u: float, v: float, depth_raw: float, k: CameraIntrinsics
) -> np.ndarray | None:
    """Lift pixel (u, v) with raw depth into camera coordinates (meters).

    Returns None for zero/missing depth; the caller excludes such pixels from
    3D reasoning.
    """
    if depth_raw <= 0:
        return None
    z = float(depth_raw) * k.depth_scale
    x = (u - k.cx) * z / k.fx
    y = (v - k.cy) * z / k.fy
    return np.array([x, y, z], dtype=np.float64)


def project(point: np.ndarray, k: CameraIntrinsics) -> tuple[float, float]:
    """Map a camera-frame 3D point back to pixel coordinates."""
    x, y, z = np.asarray(point, dtype=np.float64)
    if z <= 0:
        raise ValueError("point must be in front of the camera (z > 0)")
    return (k.fx * x / z + k.cx, k.fy * y / z + k.cy)


def estimate_rigid_transform(src: np.ndarray, dst: np.ndarray) -> RigidTransform:
    """Least-squares rotation + translation minimizing sum ||R src_i + t - dst_i||^2.

    Closed-form SVD solution with a determinant sign correction so the result
    is always a proper rotation. Raises DegenerateTransformError when the
    correspondences are collinear (or otherwise rank-deficient below rank 2),
    in which case the rotation is not unique and the caller should resample.
    """
    s = np.asarray(src, dtype=np.float64)
    d = np.asarray(dst, dtype=np.float64)
    if s.ndim != 2 or s.shape[1] != 3 or s.shape != d.shape:
        raise ValueError("src and dst must both be (N, 3)")
    if s.shape[0] < 3:
        raise ValueError("need at least 3 correspondences")

    cs = s.mean(axis=0)
    cd = d.mean(axis=0)
    h = (s - cs).T @ (d - cd)

    u, sing, vt = np.linalg.svd(h)
    # Rank < 2 means the points are collinear/coincident on at least one side.
    if sing[0] <= 0.0 or sing[1] <= 1e-9 * sing[0]:
        raise DegenerateTransformError("correspondences are collinear or coincident")

    v = vt.T
    sign = np.sign(np.linalg.det(v @ u.T))
    r = v @ np.diag([1.0, 1.0, sign]) @ u.T
    t = cd - r @ cs
    return RigidTransform(r, t)
