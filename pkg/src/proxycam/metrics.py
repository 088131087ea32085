"""Localization metrics: heatmap ratio, uniform baseline, and WSL accuracy.

The WSL pipeline is binarize at threshold t (applied to the max-normalized
heatmap), keep the largest 8-connected component, take its tight enclosing
box, and score a hit when IoU with the ground truth reaches 0.5. Boxes use
the half-open pixel convention [x, x+width) x [y, y+height). Degenerate
(all-zero) heatmaps are excluded from ratio statistics but reported, and
count as misses for WSL accuracy.
"""

import logging
from collections import deque
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    DegenerateInputError,
    EmptyMaskError,
    InvariantViolationError,
    MissingDataError,
    ShapeError,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BoundingBox:
    """Half-open pixel box: columns [x, x+width), rows [y, y+height)."""

    x: int
    y: int
    width: int
    height: int

    def __post_init__(self):
        for field_name in ("x", "y", "width", "height"):
            value = getattr(self, field_name)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
                raise InvariantViolationError(f"box {field_name} must be an integer, got {value!r}")
            object.__setattr__(self, field_name, int(value))
        if self.width <= 0 or self.height <= 0:
            raise InvariantViolationError(
                f"box must have positive extent, got {self.width}x{self.height}"
            )
        if self.x < 0 or self.y < 0:
            raise InvariantViolationError("box origin must be nonnegative")

    @property
    def area(self):
        return self.width * self.height

    def as_tuple(self):
        return (self.x, self.y, self.width, self.height)


@dataclass(frozen=True)
class SegmentationMask:
    """Binary foreground grid with the paired image's dimensions."""

    grid: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid)
        if grid.ndim != 2:
            raise ShapeError(f"mask must be rank 2, got rank {grid.ndim}")
        object.__setattr__(self, "grid", np.ascontiguousarray(grid.astype(bool)))


@dataclass(frozen=True)
class RatioReport:
    """Per-image heatmap ratios plus summary statistics.

    mean/std cover only non-degenerate images; degenerate ones are listed
    and counted. baseline_mean averages the uniform baseline over the same
    images the mean covers.
    """

    per_image: tuple
    mean: float
    std: float
    degenerate_count: int
    baseline_mean: float
    degenerate_ids: tuple = ()


@dataclass(frozen=True)
class WslReport:
    """Per-image predicted boxes and IoUs plus hit-rate summary."""

    per_image: tuple
    accuracy: float
    threshold_t: float
    degenerate_count: int = 0


def _require_live(h, op):
    if h.degenerate:
        raise DegenerateInputError(f"{op}: heatmap is degenerate (all zero)")


def _check_region(region, dims, op):
    height, width = dims
    if isinstance(region, BoundingBox):
        if region.x + region.width > width or region.y + region.height > height:
            raise ShapeError(
                f"{op}: box {region.as_tuple()} exceeds {width}x{height} grid"
            )
        return
    if isinstance(region, SegmentationMask):
        if region.grid.shape != (height, width):
            raise ShapeError(
                f"{op}: mask shape {region.grid.shape} != grid shape {(height, width)}"
            )
        return
    raise TypeError(f"{op}: region must be BoundingBox or SegmentationMask, got {type(region)!r}")


def heatmap_ratio(h, region):
    """Fraction of total heatmap mass that falls inside the region.

    Computed as inside / (inside + outside) so a heatmap fully inside the
    region scores exactly 1 and the result never exceeds 1.
    """
    _require_live(h, "heatmap_ratio")
    grid = h.grid
    _check_region(region, grid.shape, "heatmap_ratio")
    if isinstance(region, BoundingBox):
        # sum the outside by masking, not by subtracting from the total, so
        # a heatmap fully inside the box gives outside == 0.0 exactly
        boxed = np.zeros(grid.shape, dtype=bool)
        boxed[region.y : region.y + region.height, region.x : region.x + region.width] = True
        inside = float(grid[boxed].sum())
        outside = float(grid[~boxed].sum())
    else:
        inside = float(grid[region.grid].sum())
        outside = float(grid[~region.grid].sum())
    total = inside + outside
    if total == 0.0:
        raise DegenerateInputError("heatmap_ratio: zero total mass")
    return inside / total


def uniform_baseline(region, image_dims):
    """Area fraction of the region: the ratio a constant heatmap achieves."""
    height, width = image_dims
    _check_region(region, (height, width), "uniform_baseline")
    if isinstance(region, BoundingBox):
        return region.area / (height * width)
    return int(region.grid.sum()) / (height * width)


def binarize(h, t):
    """Pixels >= t on the normalized heatmap."""
    if not 0.0 < t < 1.0:
        raise InvariantViolationError(f"threshold must lie in (0, 1), got {t}")
    _require_live(h, "binarize")
    if not h.normalized:
        raise InvariantViolationError("binarize expects a normalized heatmap")
    return h.grid >= t


def largest_component(mask):
    """Largest 8-connected component of a binary grid.

    Ties go to the component whose first pixel in row-major order comes
    earliest, which is the component with the smallest (row, col)
    top-left-most pixel.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ShapeError(f"mask must be rank 2, got rank {mask.ndim}")
    if not mask.any():
        raise EmptyMaskError("largest_component: no true pixels")
    rows, cols = mask.shape
    labels = np.zeros(mask.shape, dtype=np.int32)
    best_label, best_size = 0, 0
    next_label = 0
    for r in range(rows):
        for c in range(cols):
            if not mask[r, c] or labels[r, c]:
                continue
            next_label += 1
            size = 0
            queue = deque([(r, c)])
            labels[r, c] = next_label
            while queue:
                cr, cc = queue.popleft()
                size += 1
                for dr in (-1, 0, 1):
                    for dc in (-1, 0, 1):
                        nr, nc = cr + dr, cc + dc
                        if (
                            0 <= nr < rows
                            and 0 <= nc < cols
                            and mask[nr, nc]
                            and not labels[nr, nc]
                        ):
                            labels[nr, nc] = next_label
                            queue.append((nr, nc))
            if size > best_size:
                best_size, best_label = size, next_label
    return labels == best_label


def enclosing_bbox(component):
    """Tight half-open box around the true pixels of a binary grid."""
    component = np.asarray(component, dtype=bool)
    if component.ndim != 2:
        raise ShapeError(f"component must be rank 2, got rank {component.ndim}")
    row_idx, col_idx = np.nonzero(component)
    if row_idx.size == 0:
        raise EmptyMaskError("enclosing_bbox: empty component")
    y0, y1 = int(row_idx.min()), int(row_idx.max())
    x0, x1 = int(col_idx.min()), int(col_idx.max())
    return BoundingBox(x=x0, y=y0, width=x1 - x0 + 1, height=y1 - y0 + 1)


def iou(a, b):
    """Intersection over union of two half-open pixel boxes."""
    ix0, iy0 = max(a.x, b.x), max(a.y, b.y)
    ix1 = min(a.x + a.width, b.x + b.width)
    iy1 = min(a.y + a.height, b.y + b.height)
    inter = max(0, ix1 - ix0) * max(0, iy1 - iy0)
    union = a.area + b.area - inter
    return inter / union


def locate(h, t):
    """Predicted box for one heatmap: binarize, largest component, tight box."""
    return enclosing_bbox(largest_component(binarize(h, t)))


def wsl_accuracy(items, t):
    """Score localization over (heatmap, ground-truth box) pairs.

    Degenerate heatmaps cannot produce a box; they are logged and counted
    as misses. accuracy = hits / all evaluated images.
    """
    items = list(items)
    if not items:
        raise MissingDataError("wsl_accuracy: no items to evaluate")
    per_image = []
    hits = 0
    degenerate = 0
    for h, gt in items:
        if h.degenerate:
            degenerate += 1
            logger.warning("wsl: degenerate heatmap for %r counts as a miss", h.image_id)
            per_image.append((h.image_id, None, 0.0, False))
            continue
        predicted = locate(h, t)
        overlap = iou(predicted, gt)
        hit = overlap >= 0.5
        hits += hit
        per_image.append((h.image_id, predicted, overlap, hit))
    return WslReport(
        per_image=tuple(per_image),
        accuracy=hits / len(items),
        threshold_t=float(t),
        degenerate_count=degenerate,
    )


def mean_ratio_report(items):
    """Aggregate heatmap ratios over (heatmap, region) pairs.

    Degenerate heatmaps are skipped (listed by id, counted); mean, std
    (population), and baseline_mean run over the remaining images.
    """
    items = list(items)
    if not items:
        raise MissingDataError("mean_ratio_report: no items to evaluate")
    per_image = []
    baselines = []
    degenerate_ids = []
    for h, region in items:
        if h.degenerate:
            degenerate_ids.append(h.image_id)
            logger.warning("ratio: skipping degenerate heatmap for %r", h.image_id)
            continue
        per_image.append((h.image_id, heatmap_ratio(h, region)))
        baselines.append(uniform_baseline(region, h.grid.shape))
    if per_image:
        values = [r for _, r in per_image]
        mean = float(np.mean(values))
        std = float(np.std(values))
        baseline_mean = float(np.mean(baselines))
    else:
        mean = std = baseline_mean = float("nan")
    return RatioReport(
        per_image=tuple(per_image),
        mean=mean,
        std=std,
        degenerate_count=len(degenerate_ids),
        baseline_mean=baseline_mean,
        degenerate_ids=tuple(degenerate_ids),
    )


def format_ratio_report(report):
    """Render a RatioReport as line-oriented text.

    One record per image, sorted by image id: ``image_id ratio``, with
    ``degenerate`` in the ratio column for skipped images. The summary
    line carries evaluated, degenerate, mean, std, and baseline_mean in
    that order. Floats are printed with repr so files diff stably.
    """
    lines = ["# fields: image_id ratio"]
    rows = [(image_id, repr(ratio)) for image_id, ratio in report.per_image]
    rows += [(image_id, "degenerate") for image_id in report.degenerate_ids]
    for image_id, value in sorted(rows):
        lines.append(f"{image_id} {value}")
    lines.append(
        f"# summary evaluated={len(report.per_image)} "
        f"degenerate={report.degenerate_count} mean={report.mean!r} "
        f"std={report.std!r} baseline_mean={report.baseline_mean!r}"
    )
    return "\n".join(lines) + "\n"


def format_wsl_report(report):
    """Render a WslReport as line-oriented text.

    One record per image, sorted by image id:
    ``image_id pred_x pred_y pred_width pred_height iou hit|miss``;
    degenerate images have ``-`` in the box columns. The summary line
    carries evaluated, hits, accuracy, threshold, and degenerate counts.
    """
    lines = ["# fields: image_id pred_x pred_y pred_width pred_height iou hit"]
    hits = 0
    for image_id, box, overlap, hit in sorted(report.per_image, key=lambda row: row[0]):
        hits += bool(hit)
        cols = ("-", "-", "-", "-") if box is None else tuple(str(v) for v in box.as_tuple())
        lines.append(
            f"{image_id} {cols[0]} {cols[1]} {cols[2]} {cols[3]} "
            f"{overlap!r} {'hit' if hit else 'miss'}"
        )
    lines.append(
        f"# summary evaluated={len(report.per_image)} hits={hits} "
        f"accuracy={report.accuracy!r} threshold={report.threshold_t!r} "
        f"degenerate={report.degenerate_count}"
    )
    return "\n".join(lines) + "\n"
