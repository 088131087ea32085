"""Metric checks against brute-force oracles plus the report formats."""

import numpy as np
import pytest

from proxycam import (
    BoundingBox,
    DegenerateInputError,
    EmptyMaskError,
    Heatmap,
    InvariantViolationError,
    MissingDataError,
    SegmentationMask,
    ShapeError,
    binarize,
    enclosing_bbox,
    heatmap_ratio,
    iou,
    largest_component,
    locate,
    mean_ratio_report,
    normalize_heatmap,
    uniform_baseline,
    wsl_accuracy,
)
from proxycam.metrics import format_ratio_report, format_wsl_report

from oracles import (
    bbox_mask,
    enclosing_bbox_loop,
    iou_pixels,
    largest_component_loop,
    ratio_loop,
)


def random_box(rng, height, width):
    w = int(rng.integers(1, width + 1))
    h = int(rng.integers(1, height + 1))
    x = int(rng.integers(0, width - w + 1))
    y = int(rng.integers(0, height - h + 1))
    return BoundingBox(x=x, y=y, width=w, height=h)


def random_heatmap(rng, height, width):
    return normalize_heatmap(Heatmap(grid=np.abs(rng.normal(size=(height, width))) + 1e-6))


class TestBoundingBox:
    def test_validation(self):
        with pytest.raises(InvariantViolationError):
            BoundingBox(x=0, y=0, width=0, height=3)
        with pytest.raises(InvariantViolationError):
            BoundingBox(x=-1, y=0, width=2, height=2)
        with pytest.raises(InvariantViolationError):
            BoundingBox(x=0.5, y=0, width=2, height=2)

    def test_area(self):
        assert BoundingBox(x=1, y=2, width=3, height=4).area == 12


class TestHeatmapRatio:
    def test_matches_loop_oracle_boxes_and_masks(self):
        rng = np.random.default_rng(40)
        for _ in range(200):
            height, width = (int(v) for v in rng.integers(1, 17, size=2))
            h = random_heatmap(rng, height, width)
            box = random_box(rng, height, width)
            got = heatmap_ratio(h, box)
            assert abs(got - ratio_loop(h.grid, bbox_mask(box, (height, width)))) < 1e-12
            mask_grid = rng.random((height, width)) < 0.5
            mask = SegmentationMask(grid=mask_grid)
            got = heatmap_ratio(h, mask)
            assert abs(got - ratio_loop(h.grid, mask_grid)) < 1e-12
            assert 0.0 <= got <= 1.0

    def test_fully_inside_region_is_exactly_one(self):
        grid = np.zeros((8, 8))
        grid[2:5, 3:6] = np.array([[1, 2, 3], [4, 5, 6], [7, 8, 1.0]])
        h = normalize_heatmap(Heatmap(grid=grid))
        assert heatmap_ratio(h, BoundingBox(x=3, y=2, width=3, height=3)) == 1.0
        assert heatmap_ratio(h, BoundingBox(x=0, y=0, width=8, height=8)) == 1.0

    def test_constant_heatmap_half_region(self):
        h = Heatmap(grid=np.ones((4, 4)), normalized=True)
        assert heatmap_ratio(h, BoundingBox(x=0, y=0, width=4, height=2)) == 0.5

    def test_nested_region_monotonicity(self):
        rng = np.random.default_rng(41)
        for _ in range(50):
            h = random_heatmap(rng, 10, 10)
            inner = random_box(rng, 8, 8)
            outer = BoundingBox(
                x=inner.x, y=inner.y, width=inner.width + 2, height=inner.height + 2
            )
            assert heatmap_ratio(h, inner) <= heatmap_ratio(h, outer) + 1e-15

    def test_degenerate_rejected(self):
        h = normalize_heatmap(Heatmap(grid=np.zeros((4, 4))))
        with pytest.raises(DegenerateInputError):
            heatmap_ratio(h, BoundingBox(x=0, y=0, width=2, height=2))

    def test_region_out_of_bounds(self):
        h = Heatmap(grid=np.ones((4, 4)), normalized=True)
        with pytest.raises(ShapeError):
            heatmap_ratio(h, BoundingBox(x=2, y=2, width=4, height=4))
        with pytest.raises(ShapeError):
            heatmap_ratio(h, SegmentationMask(grid=np.ones((5, 5), dtype=bool)))


class TestUniformBaseline:
    def test_quarter_box(self):
        assert uniform_baseline(BoundingBox(x=0, y=0, width=5, height=5), (10, 10)) == 0.25

    def test_full_mask(self):
        assert uniform_baseline(SegmentationMask(grid=np.ones((6, 6), dtype=bool)), (6, 6)) == 1.0

    def test_equals_constant_heatmap_ratio_exactly(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            height, width = (int(v) for v in rng.integers(1, 17, size=2))
            h = Heatmap(grid=np.ones((height, width)), normalized=True)
            box = random_box(rng, height, width)
            assert uniform_baseline(box, (height, width)) == heatmap_ratio(h, box)
            mask_grid = rng.random((height, width)) < 0.4
            if not mask_grid.any():
                continue
            mask = SegmentationMask(grid=mask_grid)
            assert uniform_baseline(mask, (height, width)) == heatmap_ratio(h, mask)


class TestBinarize:
    def test_max_pixel_always_included(self):
        rng = np.random.default_rng(43)
        for t in (0.05, 0.2, 0.4, 0.99):
            h = random_heatmap(rng, 6, 6)
            assert binarize(h, t).any()

    def test_single_pixel_mask_just_under_max(self):
        grid = np.full((3, 3), 0.3)
        grid[1, 2] = 1.0
        h = Heatmap(grid=grid, normalized=True)
        mask = binarize(h, 0.31)
        assert mask.sum() == 1 and mask[1, 2]

    def test_matches_elementwise_compare(self):
        rng = np.random.default_rng(44)
        h = random_heatmap(rng, 9, 9)
        np.testing.assert_array_equal(binarize(h, 0.2), h.grid >= 0.2)

    def test_threshold_monotonicity(self):
        rng = np.random.default_rng(45)
        h = random_heatmap(rng, 8, 8)
        low, high = binarize(h, 0.1), binarize(h, 0.6)
        assert np.all(high <= low)

    def test_validation(self):
        h = Heatmap(grid=np.ones((2, 2)), normalized=True)
        with pytest.raises(InvariantViolationError):
            binarize(h, 0.0)
        with pytest.raises(InvariantViolationError):
            binarize(h, 1.0)
        with pytest.raises(InvariantViolationError):
            binarize(Heatmap(grid=np.full((2, 2), 0.5)), 0.2)
        degenerate = normalize_heatmap(Heatmap(grid=np.zeros((2, 2))))
        with pytest.raises(DegenerateInputError):
            binarize(degenerate, 0.2)


class TestLargestComponent:
    def test_matches_flood_fill_oracle(self):
        rng = np.random.default_rng(46)
        for _ in range(200):
            height, width = (int(v) for v in rng.integers(1, 17, size=2))
            mask = rng.random((height, width)) < rng.uniform(0.2, 0.8)
            if not mask.any():
                continue
            np.testing.assert_array_equal(largest_component(mask), largest_component_loop(mask))

    def test_single_blob_identity(self):
        mask = np.zeros((5, 5), dtype=bool)
        mask[1:3, 1:4] = True
        np.testing.assert_array_equal(largest_component(mask), mask)

    def test_keeps_bigger_of_two_blobs(self):
        mask = np.zeros((6, 8), dtype=bool)
        mask[0, 0:3] = True  # 3 pixels
        mask[3:5, 4:7] = True  # 6 pixels, disjoint (8-conn)
        out = largest_component(mask)
        assert out.sum() == 6 and out[3, 4] and not out[0, 0]

    def test_diagonal_pixels_are_connected(self):
        mask = np.zeros((4, 4), dtype=bool)
        mask[0, 0] = mask[1, 1] = mask[2, 2] = True
        assert largest_component(mask).sum() == 3

    def test_tie_break_earliest_top_left(self):
        mask = np.zeros((3, 7), dtype=bool)
        mask[2, 0:2] = True  # size 2, top-left (2,0)
        mask[0, 5:7] = True  # size 2, top-left (0,5) -> earliest in row-major
        out = largest_component(mask)
        assert out[0, 5] and out[0, 6] and not out[2, 0]

    def test_empty_mask(self):
        with pytest.raises(EmptyMaskError):
            largest_component(np.zeros((3, 3), dtype=bool))


class TestEnclosingBbox:
    def test_matches_min_max_oracle(self):
        rng = np.random.default_rng(47)
        for _ in range(200):
            height, width = (int(v) for v in rng.integers(1, 17, size=2))
            mask = rng.random((height, width)) < 0.3
            if not mask.any():
                continue
            box = enclosing_bbox(mask)
            assert box.as_tuple() == enclosing_bbox_loop(mask)
            rows, cols = np.nonzero(mask)
            assert all(box.y <= r < box.y + box.height for r in rows)
            assert all(box.x <= c < box.x + box.width for c in cols)

    def test_single_pixel(self):
        mask = np.zeros((4, 6), dtype=bool)
        mask[2, 5] = True
        assert enclosing_bbox(mask).as_tuple() == (5, 2, 1, 1)

    def test_full_grid(self):
        assert enclosing_bbox(np.ones((3, 4), dtype=bool)).as_tuple() == (0, 0, 4, 3)

    def test_empty(self):
        with pytest.raises(EmptyMaskError):
            enclosing_bbox(np.zeros((2, 2), dtype=bool))


class TestIoU:
    def test_identity_and_disjoint(self):
        a = BoundingBox(x=1, y=1, width=3, height=2)
        b = BoundingBox(x=9, y=9, width=2, height=2)
        assert iou(a, a) == 1.0
        assert iou(a, b) == 0.0

    def test_known_overlap(self):
        a = BoundingBox(x=0, y=0, width=2, height=2)
        b = BoundingBox(x=1, y=1, width=2, height=2)
        assert iou(a, b) == 1 / 7

    def test_matches_pixel_set_oracle_and_symmetry(self):
        rng = np.random.default_rng(48)
        for _ in range(200):
            a = random_box(rng, 16, 16)
            b = random_box(rng, 16, 16)
            assert iou(a, b) == iou_pixels(a, b)
            assert iou(a, b) == iou(b, a)
            assert 0.0 <= iou(a, b) <= 1.0


class TestWslAccuracy:
    def test_perfect_planted_heatmaps(self):
        rng = np.random.default_rng(49)
        items = []
        for _ in range(10):
            gt = random_box(rng, 12, 12)
            grid = np.zeros((12, 12))
            grid[gt.y : gt.y + gt.height, gt.x : gt.x + gt.width] = 1.0
            items.append((Heatmap(grid=grid, normalized=True, image_id="x"), gt))
        for t in (0.05, 0.2, 0.4):
            assert wsl_accuracy(items, t).accuracy == 1.0

    def test_all_degenerate_scores_zero(self):
        h = normalize_heatmap(Heatmap(grid=np.zeros((6, 6)), image_id="d"))
        gt = BoundingBox(x=0, y=0, width=3, height=3)
        report = wsl_accuracy([(h, gt), (h, gt)], 0.2)
        assert report.accuracy == 0.0
        assert report.degenerate_count == 2
        assert all(not hit for _, _, _, hit in report.per_image)

    def test_matches_composed_stage_oracle(self):
        rng = np.random.default_rng(50)
        items = []
        for i in range(20):
            gt = random_box(rng, 14, 14)
            grid = rng.uniform(0, 0.35, size=(14, 14))
            grid[gt.y : gt.y + gt.height, gt.x : gt.x + gt.width] += rng.uniform(0.5, 1.0)
            h = normalize_heatmap(Heatmap(grid=grid, image_id=f"i{i}"))
            items.append((h, gt))
        report = wsl_accuracy(items, 0.2)
        hits = 0
        for h, gt in items:
            mask = h.grid >= 0.2
            component = largest_component_loop(mask)
            x, y, w, hh = enclosing_bbox_loop(component)
            predicted = BoundingBox(x=x, y=y, width=w, height=hh)
            hits += iou_pixels(predicted, gt) >= 0.5
        assert report.accuracy == hits / len(items)

    def test_hit_rule_is_iou_at_half(self):
        grid = np.zeros((10, 10))
        grid[0:5, 0:5] = 1.0
        h = Heatmap(grid=grid, normalized=True, image_id="z")
        exact_half = BoundingBox(x=0, y=0, width=5, height=10)  # iou 0.5 counts
        report = wsl_accuracy([(h, exact_half)], 0.2)
        assert report.per_image[0][3] and report.accuracy == 1.0

    def test_empty_items(self):
        with pytest.raises(MissingDataError):
            wsl_accuracy([], 0.2)


class TestMeanRatioReport:
    def test_constant_heatmaps_hit_baseline_exactly(self):
        rng = np.random.default_rng(51)
        items = []
        for i in range(20):
            box = random_box(rng, 9, 9)
            items.append((Heatmap(grid=np.ones((9, 9)), normalized=True, image_id=f"i{i}"), box))
        report = mean_ratio_report(items)
        assert report.mean == report.baseline_mean

    def test_single_item_std_zero(self):
        h = Heatmap(grid=np.ones((4, 4)), normalized=True, image_id="one")
        report = mean_ratio_report([(h, BoundingBox(x=0, y=0, width=2, height=2))])
        assert report.std == 0.0 and len(report.per_image) == 1

    def test_matches_scalar_loop(self):
        rng = np.random.default_rng(52)
        items = []
        for i in range(30):
            h = random_heatmap(rng, 8, 8)
            h = Heatmap(grid=h.grid, normalized=True, image_id=f"i{i:02d}")
            items.append((h, random_box(rng, 8, 8)))
        report = mean_ratio_report(items)
        ratios = [ratio_loop(h.grid, bbox_mask(box, (8, 8))) for h, box in items]
        mean = sum(ratios) / len(ratios)
        var = sum((r - mean) ** 2 for r in ratios) / len(ratios)
        assert abs(report.mean - mean) < 1e-12
        assert abs(report.std - np.sqrt(var)) < 1e-12

    def test_degenerate_excluded_but_counted(self):
        live = Heatmap(grid=np.ones((4, 4)), normalized=True, image_id="live")
        dead = normalize_heatmap(Heatmap(grid=np.zeros((4, 4)), image_id="dead"))
        box = BoundingBox(x=0, y=0, width=2, height=2)
        report = mean_ratio_report([(live, box), (dead, box)])
        assert report.degenerate_count == 1
        assert report.degenerate_ids == ("dead",)
        assert [image_id for image_id, _ in report.per_image] == ["live"]
        assert report.mean == 0.25

    def test_empty_items(self):
        with pytest.raises(MissingDataError):
            mean_ratio_report([])


class TestLocate:
    def test_pipeline_shortcut(self):
        grid = np.zeros((8, 8))
        grid[2:5, 1:4] = 1.0
        h = Heatmap(grid=grid, normalized=True)
        assert locate(h, 0.2).as_tuple() == (1, 2, 3, 3)


class TestReportFormats:
    def build_reports(self):
        rng = np.random.default_rng(53)
        items = []
        for i in range(4):
            h = random_heatmap(rng, 6, 6)
            h = Heatmap(grid=h.grid, normalized=True, image_id=f"img_{3 - i}")
            items.append((h, BoundingBox(x=1, y=1, width=3, height=3)))
        dead = normalize_heatmap(Heatmap(grid=np.zeros((6, 6)), image_id="img_9"))
        items.append((dead, BoundingBox(x=1, y=1, width=3, height=3)))
        gt = [(h, box) for h, box in items]
        return mean_ratio_report(items), wsl_accuracy(gt, 0.2)

    def test_ratio_report_layout(self):
        ratio, _ = self.build_reports()
        text = format_ratio_report(ratio)
        lines = text.strip().split("\n")
        assert lines[0] == "# fields: image_id ratio"
        body = lines[1:-1]
        ids = [line.split()[0] for line in body]
        assert ids == sorted(ids)
        assert any(line.endswith(" degenerate") for line in body)
        assert lines[-1].startswith("# summary evaluated=4 degenerate=1 mean=")
        assert "baseline_mean=" in lines[-1]

    def test_wsl_report_layout(self):
        _, wsl = self.build_reports()
        text = format_wsl_report(wsl)
        lines = text.strip().split("\n")
        assert lines[0] == "# fields: image_id pred_x pred_y pred_width pred_height iou hit"
        body = lines[1:-1]
        ids = [line.split()[0] for line in body]
        assert ids == sorted(ids)
        degenerate_line = [line for line in body if line.startswith("img_9")][0]
        assert degenerate_line.split()[1:6] == ["-", "-", "-", "-", "0.0"]
        assert degenerate_line.endswith("miss")
        assert "threshold=0.2" in lines[-1]

    def test_formatting_deterministic(self):
        ratio1, wsl1 = self.build_reports()
        ratio2, wsl2 = self.build_reports()
        assert format_ratio_report(ratio1) == format_ratio_report(ratio2)
        assert format_wsl_report(wsl1) == format_wsl_report(wsl2)
