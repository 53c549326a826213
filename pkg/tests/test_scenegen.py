"""Synthetic scene generator: structure, determinism, and depth consistency."""

import numpy as np
import pytest

from repeatdet.geometry import iou
from repeatdet.scenegen import PlacementError, SceneSpec, generate


class TestGenerate:
    def test_three_by_two_structure(self):
        scene = generate(SceneSpec(texture_seed=0, placement_seed=0), "s")
        assert len(scene.gt_boxes) == 6
        assert {g.object_type_id for g in scene.gt_boxes} == {0, 1, 2}
        assert len({g.class_index for g in scene.gt_boxes}) == 3

    def test_single_instance_scene(self):
        scene = generate(
            SceneSpec(object_type_count=1, instances_per_type=1, texture_seed=5, placement_seed=5),
            "s",
        )
        assert len(scene.gt_boxes) == 1

    def test_deterministic_bits(self):
        spec = SceneSpec(texture_seed=7, placement_seed=17)
        a = generate(spec, "s")
        b = generate(spec, "s")
        assert np.array_equal(a.frame.color, b.frame.color)
        assert np.array_equal(a.frame.depth, b.frame.depth)
        assert a.gt_boxes == b.gt_boxes

    def test_boxes_disjoint_and_inside_image(self):
        for seed in range(5):
            spec = SceneSpec(texture_seed=seed, placement_seed=100 + seed)
            scene = generate(spec, "s")
            boxes = [g.box for g in scene.gt_boxes]
            for i, a in enumerate(boxes):
                assert 0 <= a.x_min < a.x_max <= spec.width
                assert 0 <= a.y_min < a.y_max <= spec.height
                for b in boxes[i + 1 :]:
                    assert iou(a, b) == 0.0

    def test_depth_closer_inside_patches(self):
        spec = SceneSpec(texture_seed=3, placement_seed=3)
        scene = generate(spec, "s")
        table_raw = int(round(spec.table_depth_m / 0.001))
        depth = scene.frame.depth
        for gt in scene.gt_boxes:
            x0, y0, x1, y1 = (int(v) for v in gt.box.as_tuple())
            # center pixel of a patch is always rendered
            cy, cx = (y0 + y1) // 2, (x0 + x1) // 2
            assert depth[cy, cx] < table_raw
            region = depth[y0:y1, x0:x1]
            assert region.min() < table_raw
            assert region.max() <= table_raw

    def test_patch_pixels_differ_from_background(self):
        spec = SceneSpec(texture_seed=11, placement_seed=11)
        scene = generate(spec, "s")
        table_raw = int(round(spec.table_depth_m / 0.001))
        color = scene.frame.color.astype(np.float32)
        background_mean = color[scene.frame.depth == table_raw].mean()
        for gt in scene.gt_boxes:
            x0, y0, x1, y1 = (int(v) for v in gt.box.as_tuple())
            inside = scene.frame.depth[y0:y1, x0:x1] < table_raw
            patch = color[y0:y1, x0:x1][inside]
            assert np.abs(patch - background_mean).mean() >= 12.0

    def test_same_type_shares_texture_size(self):
        scene = generate(SceneSpec(texture_seed=9, placement_seed=9), "s")
        by_type = {}
        for pl in scene.placements:
            by_type.setdefault(pl.object_type_id, set()).add(pl.size_px)
        for sizes in by_type.values():
            assert len(sizes) == 1

    def test_gt_box_matches_rendered_extent(self):
        # every border row/column of the GT box must touch rendered pixels
        spec = SceneSpec(texture_seed=2, placement_seed=2)
        scene = generate(spec, "s")
        table_raw = int(round(spec.table_depth_m / 0.001))
        rendered = scene.frame.depth < table_raw
        for gt in scene.gt_boxes:
            x0, y0, x1, y1 = (int(v) for v in gt.box.as_tuple())
            assert rendered[y0:y1, x0:x1].any()
            assert rendered[y0, x0:x1].any() or rendered[y1 - 1, x0:x1].any()
            assert not rendered[y0:y1, x0 - 1 : x0].any() or x0 == 0
            assert not rendered[y0:y1, x1 : x1 + 1].any() or x1 == spec.width

    def test_infeasible_packing_raises(self):
        spec = SceneSpec(
            object_type_count=10,
            instances_per_type=5,
            width=320,
            height=240,
            texture_seed=0,
            placement_seed=0,
        )
        with pytest.raises(PlacementError):
            generate(spec, "s")

    def test_invalid_spec_rejected(self):
        with pytest.raises(ValueError):
            SceneSpec(object_type_count=0)
        with pytest.raises(ValueError):
            SceneSpec(size_range_px=(100, 50))
