"""Geometry primitives against independent oracles."""

import numpy as np
import pytest

from repeatdet.geometry import (
    BoundingBox,
    CameraIntrinsics,
    DegenerateTransformError,
    RigidTransform,
    backproject,
    estimate_rigid_transform,
    expand_box,
    iou,
    nms,
    project,
)


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------


def iou_pixel_counting(a: BoundingBox, b: BoundingBox, res: float = 0.01) -> float:
    """Rasterize both boxes on a grid of `res`-sized cells and count cell centers."""
    x0 = min(a.x_min, b.x_min)
    y0 = min(a.y_min, b.y_min)
    x1 = max(a.x_max, b.x_max)
    y1 = max(a.y_max, b.y_max)
    nx = int(round((x1 - x0) / res))
    ny = int(round((y1 - y0) / res))
    if nx == 0 or ny == 0:
        return 0.0
    xs = x0 + (np.arange(nx) + 0.5) * res
    ys = y0 + (np.arange(ny) + 0.5) * res
    gx, gy = np.meshgrid(xs, ys)
    in_a = (gx > a.x_min) & (gx < a.x_max) & (gy > a.y_min) & (gy < a.y_max)
    in_b = (gx > b.x_min) & (gx < b.x_max) & (gy > b.y_min) & (gy < b.y_max)
    inter = np.count_nonzero(in_a & in_b)
    union = np.count_nonzero(in_a | in_b)
    return 0.0 if union == 0 else inter / union


def nms_reference(boxes, scores, threshold):
    """O(n^2) NMS on a precomputed IOU matrix, written independently of nms()."""
    n = len(boxes)
    arr = np.array([b.as_tuple() for b in boxes], dtype=np.float64)
    xx0 = np.maximum(arr[:, None, 0], arr[None, :, 0])
    yy0 = np.maximum(arr[:, None, 1], arr[None, :, 1])
    xx1 = np.minimum(arr[:, None, 2], arr[None, :, 2])
    yy1 = np.minimum(arr[:, None, 3], arr[None, :, 3])
    inter = np.clip(xx1 - xx0, 0, None) * np.clip(yy1 - yy0, 0, None)
    areas = (arr[:, 2] - arr[:, 0]) * (arr[:, 3] - arr[:, 1])
    union = areas[:, None] + areas[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        mat = np.where(union > 0, inter / union, 0.0)
    order = sorted(range(n), key=lambda i: (-scores[i], i))
    kept = []
    for i in order:
        if not any(mat[i, j] > threshold for j in kept):
            kept.append(i)
    return kept


def rotation_from_axis_angle(axis, angle):
    """Rodrigues formula, kept independent of the package under test."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    kx, ky, kz = axis
    k = np.array([[0, -kz, ky], [kz, 0, -kx], [-ky, kx, 0]])
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)


def random_boxes(rng, n, extent=100.0):
    """Boxes with 2-decimal coordinates so the 0.01-px raster oracle is exact."""
    out = []
    for _ in range(n):
        x0, y0 = rng.uniform(0, extent * 0.7, size=2)
        w, h = rng.uniform(1, extent * 0.3, size=2)
        vals = np.round([x0, y0, x0 + w, y0 + h], 2)
        out.append(BoundingBox(*vals))
    return out


# ---------------------------------------------------------------------------
# IOU
# ---------------------------------------------------------------------------


class TestIou:
    def test_identity(self):
        a = BoundingBox(0, 0, 10, 10)
        assert iou(a, a) == 1.0

    def test_disjoint(self):
        assert iou(BoundingBox(0, 0, 10, 10), BoundingBox(20, 20, 30, 30)) == 0.0

    def test_one_third_overlap(self):
        # inter = 50, union = 150 per the pixel-counting oracle
        a = BoundingBox(0, 0, 10, 10)
        b = BoundingBox(0, 5, 10, 15)
        assert iou_pixel_counting(a, b) == pytest.approx(1 / 3, abs=1e-9)
        assert iou(a, b) == pytest.approx(1 / 3, abs=1e-12)

    def test_degenerate_boxes_are_zero(self):
        point = BoundingBox(5, 5, 5, 5)
        assert iou(point, point) == 0.0
        assert iou(point, BoundingBox(0, 0, 10, 10)) == 0.0

    def test_symmetry_and_self_identity(self):
        rng = np.random.default_rng(7)
        boxes = random_boxes(rng, 40)
        for a, b in zip(boxes[:20], boxes[20:]):
            assert iou(a, b) == pytest.approx(iou(b, a), abs=0)
            assert iou(a, a) == 1.0

    def test_against_pixel_counting_oracle(self):
        rng = np.random.default_rng(11)
        boxes = random_boxes(rng, 60, extent=40.0)
        for a, b in zip(boxes[:30], boxes[30:]):
            assert iou(a, b) == pytest.approx(iou_pixel_counting(a, b), abs=1e-3)

    def test_invalid_box_rejected(self):
        with pytest.raises(ValueError):
            BoundingBox(10, 0, 0, 10)


# ---------------------------------------------------------------------------
# NMS
# ---------------------------------------------------------------------------


class TestNms:
    def test_single_box(self):
        dets = [(BoundingBox(0, 0, 10, 10), 0.5)]
        assert nms(dets, 0.5) == dets

    def test_identical_boxes_keep_highest(self):
        b = BoundingBox(0, 0, 10, 10)
        kept = nms([(b, 0.8), (b, 0.9)], 0.5)
        assert kept == [(b, 0.9)]

    def test_matches_brute_force_reference(self):
        rng = np.random.default_rng(3)
        boxes = random_boxes(rng, 200)
        scores = list(np.round(rng.uniform(0, 1, size=200), 3))  # some ties
        kept = nms(list(zip(boxes, scores)), 0.4)
        ref = nms_reference(boxes, scores, 0.4)
        assert [(boxes[i], scores[i]) for i in ref] == kept

    def test_kept_set_is_antichain(self):
        rng = np.random.default_rng(5)
        boxes = random_boxes(rng, 120)
        scores = list(rng.uniform(0, 1, size=120))
        kept = nms(list(zip(boxes, scores)), 0.3)
        for i, (bi, _) in enumerate(kept):
            for bj, _ in kept[i + 1 :]:
                assert iou(bi, bj) <= 0.3

    def test_output_order_is_descending_score(self):
        rng = np.random.default_rng(9)
        boxes = random_boxes(rng, 50)
        scores = list(rng.uniform(0, 1, size=50))
        kept = nms(list(zip(boxes, scores)), 0.5)
        out_scores = [s for _, s in kept]
        assert out_scores == sorted(out_scores, reverse=True)

    def test_empty_input(self):
        assert nms([], 0.5) == []


# ---------------------------------------------------------------------------
# expand_box
# ---------------------------------------------------------------------------


class TestExpandBox:
    BOUNDS = BoundingBox(0, 0, 100, 100)

    def test_factor_zero_is_identity(self):
        b = BoundingBox(10, 10, 20, 20)
        assert expand_box(b, 0.0, self.BOUNDS) == b

    def test_sixty_percent(self):
        # width 10 -> 16 about center 15: hand arithmetic
        got = expand_box(BoundingBox(10, 10, 20, 20), 0.6, self.BOUNDS)
        assert got == BoundingBox(7, 7, 23, 23)

    def test_clipped_at_border(self):
        got = expand_box(BoundingBox(0, 0, 10, 10), 0.6, self.BOUNDS)
        assert got == BoundingBox(0, 0, 13, 13)

    def test_negative_factor_rejected(self):
        with pytest.raises(ValueError):
            expand_box(BoundingBox(0, 0, 1, 1), -0.1, self.BOUNDS)


# ---------------------------------------------------------------------------
# Back-projection
# ---------------------------------------------------------------------------


class TestBackproject:
    K = CameraIntrinsics(fx=500, fy=500, cx=320, cy=240, depth_scale=0.001)

    def test_principal_ray(self):
        p = backproject(320, 240, 1000, self.K)
        assert p is not None
        np.testing.assert_allclose(p, [0, 0, 1], atol=1e-12)

    def test_hand_arithmetic(self):
        k = CameraIntrinsics(fx=500, fy=500, cx=320, cy=320, depth_scale=1.0)
        p = backproject(820, 320, 2.0, k)
        np.testing.assert_allclose(p, [2, 0, 2], atol=1e-12)

    def test_missing_depth(self):
        assert backproject(100, 100, 0, self.K) is None

    def test_project_roundtrip(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            u, v = rng.uniform(0, 640), rng.uniform(0, 480)
            raw = rng.integers(200, 4000)
            p = backproject(u, v, raw, self.K)
            uu, vv = project(p, self.K)
            assert abs(uu - u) <= 1e-6 and abs(vv - v) <= 1e-6


# ---------------------------------------------------------------------------
# Rigid transform estimation
# ---------------------------------------------------------------------------


class TestRigidTransform:
    def test_identity(self):
        rng = np.random.default_rng(1)
        pts = rng.normal(size=(10, 3))
        t = estimate_rigid_transform(pts, pts)
        np.testing.assert_allclose(t.rotation, np.eye(3), atol=1e-9)
        np.testing.assert_allclose(t.translation, 0, atol=1e-9)

    def test_pure_translation(self):
        rng = np.random.default_rng(2)
        pts = rng.normal(size=(10, 3))
        t = estimate_rigid_transform(pts, pts + np.array([1.0, 2.0, 3.0]))
        np.testing.assert_allclose(t.rotation, np.eye(3), atol=1e-9)
        np.testing.assert_allclose(t.translation, [1, 2, 3], atol=1e-9)

    def test_noiseless_roundtrip(self):
        rng = np.random.default_rng(4)
        for trial in range(20):
            axis = rng.normal(size=3)
            angle = rng.uniform(-np.pi, np.pi)
            r_true = rotation_from_axis_angle(axis, angle)
            t_true = rng.normal(size=3)
            src = rng.normal(size=(10, 3))
            dst = src @ r_true.T + t_true
            est = estimate_rigid_transform(src, dst)
            residual = np.linalg.norm(est.apply(src) - dst, axis=1).max()
            assert residual <= 1e-9
            # proper-rotation invariants
            assert np.abs(est.rotation.T @ est.rotation - np.eye(3)).max() <= 1e-9
            assert abs(np.linalg.det(est.rotation) - 1) <= 1e-9

    def test_reflection_excluded_on_coplanar_points(self):
        # Coplanar correspondences are the classic case where the unconstrained
        # least squares admits a reflection; the sign correction must reject it.
        rng = np.random.default_rng(6)
        src = rng.normal(size=(12, 3))
        src[:, 2] = 0.0
        r_true = rotation_from_axis_angle([0, 0, 1], 0.7)
        dst = src @ r_true.T + np.array([0.1, -0.2, 0.05])
        est = estimate_rigid_transform(src, dst)
        assert abs(np.linalg.det(est.rotation) - 1) <= 1e-9
        assert np.linalg.norm(est.apply(src) - dst, axis=1).max() <= 1e-9

    def test_collinear_is_degenerate(self):
        src = np.array([[0, 0, 0], [1, 1, 1], [2, 2, 2], [3, 3, 3]], dtype=float)
        with pytest.raises(DegenerateTransformError):
            estimate_rigid_transform(src, src + 1.0)

    def test_too_few_points_rejected(self):
        with pytest.raises(ValueError):
            estimate_rigid_transform(np.zeros((2, 3)), np.zeros((2, 3)))

    def test_noisy_fit_is_sigma_consistent(self):
        # With isotropic sigma noise on n points the expected residual sum of
        # squares is sigma^2 * (3n - 6); the mean ratio over trials must sit
        # inside a 3-sigma band around 1.
        rng = np.random.default_rng(8)
        sigma, n = 1e-3, 50
        ratios = []
        for _ in range(20):
            r_true = rotation_from_axis_angle(rng.normal(size=3), rng.uniform(0, np.pi))
            t_true = rng.normal(size=3)
            src = rng.normal(size=(n, 3))
            dst = src @ r_true.T + t_true + rng.normal(scale=sigma, size=(n, 3))
            est = estimate_rigid_transform(src, dst)
            ss = np.sum((est.apply(src) - dst) ** 2)
            ratios.append(np.sqrt(ss / (sigma**2 * (3 * n - 6))))
        mean_ratio = np.mean(ratios)
        band = 3.0 / np.sqrt(2 * (3 * n - 6)) / np.sqrt(len(ratios))
        assert 1 - 3 * band <= mean_ratio <= 1 + 3 * band

    def test_transform_inverse(self):
        r = rotation_from_axis_angle([1, 2, 3], 0.9)
        t = RigidTransform(r, np.array([0.5, -1.0, 2.0]))
        pts = np.random.default_rng(10).normal(size=(5, 3))
        np.testing.assert_allclose(t.inverse().apply(t.apply(pts)), pts, atol=1e-12)

    def test_invalid_rotation_rejected(self):
        with pytest.raises(ValueError):
            RigidTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
