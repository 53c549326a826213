"""Deterministic synthetic RGB-D scenes with exact ground truth.

Each scene is a flat table plane carrying K object types rendered M times
each: every instance of a type shows the same feature-rich texture at a
random position and in-plane rotation, slightly closer to the camera than the
table. Ground-truth boxes are the exact axis-aligned extents of the rendered
patches, so discovery, fusion, and evaluation can be scored without
annotation noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import cv2
import numpy as np

from .evaluation import GroundTruthBox
from .geometry import BoundingBox
from .pipeline import RGBDFrame, default_intrinsics

__all__ = ["SceneSpec", "Placement", "SyntheticScene", "PlacementError", "generate"]

_MAX_PLACEMENT_ATTEMPTS = 10000
# Rendered patches must differ from the background by at least this mean
# absolute intensity so the detector has something to respond to.
_TEXTURE_CONTRAST_FLOOR = 12.0
_BACKGROUND_LEVEL = 96.0


class PlacementError(RuntimeError):
    """Rejection sampling could not pack the requested instances."""


@dataclass(frozen=True)
class SceneSpec:
    object_type_count: int = 3
    instances_per_type: int = 2
    width: int = 640
    height: int = 480
    table_depth_m: float = 1.0
    texture_seed: int = 0
    placement_seed: int = 0
    min_separation_px: float = 48.0
    size_range_px: tuple[int, int] = (72, 112)
    depth_offset_range_m: tuple[float, float] = (0.008, 0.02)
    class_index_base: int = 1  # type t maps to class_index base + t

    def __post_init__(self):
        if self.object_type_count < 1 or self.instances_per_type < 1:
            raise ValueError("need at least one type and one instance")
        if self.size_range_px[0] > self.size_range_px[1]:
            raise ValueError("bad size range")


@dataclass(frozen=True)
class Placement:
    instance_index: int
    object_type_id: int
    center: tuple[float, float]
    angle_rad: float
    size_px: tuple[int, int]
    depth_m: float


@dataclass(eq=False)
class SyntheticScene:
    frame: RGBDFrame
    gt_boxes: list[GroundTruthBox]
    placements: list[Placement]


def _object_texture(rng: np.random.Generator, w: int, h: int) -> np.ndarray:
    """Band-limited noise with high-contrast blocks injected away from the rim.

    The interior margin keeps the strongest corners off the patch boundary so
    a cluster's tight feature box stays comfortably inside the ground-truth
    extent.
    """
    noise = rng.uniform(40, 215, size=(h, w, 3)).astype(np.float32)
    base = cv2.GaussianBlur(noise, (0, 0), 1.2)
    margin_x = max(3, int(0.1 * w))
    margin_y = max(3, int(0.1 * h))
    n_blocks = max(14, (w * h) // 550)
    for _ in range(n_blocks):
        bw = int(rng.integers(6, 15))
        bh = int(rng.integers(6, 15))
        x0 = int(rng.integers(margin_x, max(margin_x + 1, w - margin_x - bw)))
        y0 = int(rng.integers(margin_y, max(margin_y + 1, h - margin_y - bh)))
        dark = rng.random() < 0.5
        shade = rng.uniform(0, 45, size=3) if dark else rng.uniform(210, 255, size=3)
        base[y0 : y0 + bh, x0 : x0 + bw] = shade.astype(np.float32)
    return np.clip(base, 0, 255)


def _rotated_footprint(w: int, h: int, angle: float) -> tuple[float, float]:
    c, s = abs(np.cos(angle)), abs(np.sin(angle))
    return (w * c + h * s, w * s + h * c)


def _render_instance(
    color: np.ndarray,
    depth: np.ndarray,
    texture: np.ndarray,
    center: tuple[float, float],
    angle: float,
    depth_raw: int,
) -> BoundingBox:
    """Paste the rotated texture about center; returns the exact pixel extent."""
    th, tw = texture.shape[:2]
    half_w, half_h = _rotated_footprint(tw, th, angle)
    half_w, half_h = half_w / 2 + 1, half_h / 2 + 1
    cx, cy = center
    x0 = int(np.floor(cx - half_w))
    x1 = int(np.ceil(cx + half_w))
    y0 = int(np.floor(cy - half_h))
    y1 = int(np.ceil(cy + half_h))
    xs = np.arange(x0, x1 + 1)
    ys = np.arange(y0, y1 + 1)
    gx, gy = np.meshgrid(xs - cx, ys - cy)
    cos, sin = np.cos(angle), np.sin(angle)
    # inverse rotation into texture coordinates
    sx = cos * gx + sin * gy + (tw - 1) / 2.0
    sy = -sin * gx + cos * gy + (th - 1) / 2.0
    mask = (sx >= 0) & (sx <= tw - 1) & (sy >= 0) & (sy <= th - 1)

    x0i = np.clip(np.floor(sx), 0, tw - 2).astype(np.int64)
    y0i = np.clip(np.floor(sy), 0, th - 2).astype(np.int64)
    fx = np.clip(sx - x0i, 0, 1)[..., None]
    fy = np.clip(sy - y0i, 0, 1)[..., None]
    sampled = (
        texture[y0i, x0i] * (1 - fx) * (1 - fy)
        + texture[y0i, x0i + 1] * fx * (1 - fy)
        + texture[y0i + 1, x0i] * (1 - fx) * fy
        + texture[y0i + 1, x0i + 1] * fx * fy
    )

    rows, cols = np.nonzero(mask)
    img_y = ys[rows]
    img_x = xs[cols]
    inside = (img_x >= 0) & (img_x < color.shape[1]) & (img_y >= 0) & (img_y < color.shape[0])
    img_y, img_x = img_y[inside], img_x[inside]
    color[img_y, img_x] = np.clip(sampled[rows[inside], cols[inside]], 0, 255).astype(np.uint8)
    depth[img_y, img_x] = depth_raw
    return BoundingBox(
        float(img_x.min()),
        float(img_y.min()),
        float(img_x.max() + 1),
        float(img_y.max() + 1),
    )


def generate(spec: SceneSpec, frame_id: str = "scene_000") -> SyntheticScene:
    """Render one scene; deterministic in (texture_seed, placement_seed)."""
    rng_tex = np.random.default_rng(spec.texture_seed)
    rng_place = np.random.default_rng(spec.placement_seed)
    w_img, h_img = spec.width, spec.height

    textures = []
    for _ in range(spec.object_type_count):
        tw = int(rng_tex.integers(spec.size_range_px[0], spec.size_range_px[1] + 1))
        th = int(rng_tex.integers(spec.size_range_px[0], spec.size_range_px[1] + 1))
        textures.append(_object_texture(rng_tex, tw, th))
    for a in range(len(textures)):
        for b in range(a + 1, len(textures)):
            ta, tb = textures[a], textures[b]
            assert ta.shape != tb.shape or not np.array_equal(ta, tb)

    # Low-amplitude noise background so it stays nearly featureless.
    background = np.clip(
        _BACKGROUND_LEVEL
        + cv2.GaussianBlur(
            rng_tex.uniform(-8, 8, size=(h_img, w_img, 3)).astype(np.float32), (0, 0), 2.0
        ),
        0,
        255,
    ).astype(np.uint8)
    color = background.copy()
    table_raw = int(round(spec.table_depth_m / 0.001))
    depth = np.full((h_img, w_img), table_raw, dtype=np.uint16)

    # Rejection-sample non-overlapping placements, then render. When one
    # instance gets stuck (earlier placements boxed it out), the whole scene
    # is re-placed; the global attempt budget still bounds the work.
    instances = [
        (type_id, textures[type_id].shape[:2])
        for type_id in range(spec.object_type_count)
        for _ in range(spec.instances_per_type)
    ]
    gap = spec.min_separation_px / 2.0
    border = 4.0
    attempts = 0
    restart_after = 400
    placements: list[Placement] = []
    while len(placements) < len(instances):
        placed: list[tuple[float, float, float, float]] = []  # inflated AABBs
        placements = []
        stuck = False
        for type_id, (th_t, tw_t) in instances:
            tries = 0
            while True:
                attempts += 1
                tries += 1
                if attempts > _MAX_PLACEMENT_ATTEMPTS:
                    raise PlacementError(
                        f"could not place {spec.object_type_count}x"
                        f"{spec.instances_per_type} instances in {w_img}x{h_img}"
                    )
                if tries > restart_after:
                    stuck = True
                    break
                angle = float(rng_place.uniform(0, 2 * np.pi))
                fw, fh = _rotated_footprint(tw_t, th_t, angle)
                half_w, half_h = fw / 2 + 1, fh / 2 + 1
                if 2 * half_w + 2 * border >= w_img or 2 * half_h + 2 * border >= h_img:
                    continue
                cx = float(rng_place.uniform(border + half_w, w_img - border - half_w))
                cy = float(rng_place.uniform(border + half_h, h_img - border - half_h))
                aabb = (cx - half_w - gap, cy - half_h - gap, cx + half_w + gap, cy + half_h + gap)
                overlaps = any(
                    aabb[0] < o[2] and o[0] < aabb[2] and aabb[1] < o[3] and o[1] < aabb[3]
                    for o in placed
                )
                if not overlaps:
                    break
            if stuck:
                break
            placed.append(aabb)
            offset = float(rng_place.uniform(*spec.depth_offset_range_m))
            placements.append(
                Placement(
                    instance_index=len(placements),
                    object_type_id=type_id,
                    center=(cx, cy),
                    angle_rad=angle,
                    size_px=(tw_t, th_t),
                    depth_m=spec.table_depth_m - offset,
                )
            )

    gt_boxes = []
    for pl in placements:
        depth_raw = int(round(pl.depth_m / 0.001))
        box = _render_instance(
            color, depth, textures[pl.object_type_id], pl.center, pl.angle_rad, depth_raw
        )
        gt_boxes.append(
            GroundTruthBox(
                box=box,
                class_index=spec.class_index_base + pl.object_type_id,
                object_type_id=pl.object_type_id,
            )
        )
        assert depth_raw < table_raw, "patch must be closer than the table"

    # Feature-richness floor: rendered pixels must differ from the background.
    for gt in gt_boxes:
        x0, y0, x1, y1 = (int(v) for v in gt.box.as_tuple())
        diff = np.abs(
            color[y0:y1, x0:x1].astype(np.float32)
            - background[y0:y1, x0:x1].astype(np.float32)
        )
        assert diff.mean() >= _TEXTURE_CONTRAST_FLOOR, "patch blends into background"

    frame = RGBDFrame(
        color=color,
        depth=depth,
        intrinsics=default_intrinsics(w_img, h_img),
        frame_id=frame_id,
    )
    return SyntheticScene(frame=frame, gt_boxes=gt_boxes, placements=placements)
