"""Heatmap rendering: colormapped PNGs and alpha blends over source images.

The default ramp runs blue, cyan, green, yellow, red with control points
at 0, 0.25, 0.5, 0.75, 1. All 8-bit conversions round half-up, which makes
the alpha 0 and alpha 1 blend identities exact at the pixel level. PNGs
are written 8-bit RGB, non-interlaced, so identical inputs give identical
files.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .exceptions import ShapeError

logger = logging.getLogger(__name__)

RAMPS = {
    "jet": (
        (0.00, (0.0, 0.0, 255.0)),
        (0.25, (0.0, 255.0, 255.0)),
        (0.50, (0.0, 255.0, 0.0)),
        (0.75, (255.0, 255.0, 0.0)),
        (1.00, (255.0, 0.0, 0.0)),
    ),
    "gray": (
        (0.0, (0.0, 0.0, 0.0)),
        (1.0, (255.0, 255.0, 255.0)),
    ),
}


@dataclass(frozen=True)
class OverlaySpec:
    """Rendering knobs: which ramp and how strongly to blend it in."""

    colormap: str = "jet"
    blend_alpha: float = 0.5

    def __post_init__(self):
        if self.colormap not in RAMPS:
            raise ValueError(f"unknown colormap {self.colormap!r}; have {sorted(RAMPS)}")
        if not 0.0 <= self.blend_alpha <= 1.0:
            raise ValueError(f"blend_alpha must lie in [0, 1], got {self.blend_alpha}")
        points = [pos for pos, _ in RAMPS[self.colormap]]
        if points != sorted(set(points)) or points[0] != 0.0 or points[-1] != 1.0:
            raise ValueError(f"colormap {self.colormap!r} control points are not monotone 0..1")


def ramp_colors(values, colormap="jet"):
    """Map values in [0, 1] through a ramp; returns float RGB, not yet 8-bit."""
    ramp = RAMPS[colormap]
    positions = np.array([pos for pos, _ in ramp])
    values = np.asarray(values, dtype=np.float64)
    channels = [
        np.interp(values, positions, np.array([color[c] for _, color in ramp]))
        for c in range(3)
    ]
    return np.stack(channels, axis=-1)


def _to_uint8(arr):
    # round half-up, the convention all 8-bit output shares
    return np.clip(np.floor(arr + 0.5), 0, 255).astype(np.uint8)


def colormap_png(h, spec, path):
    """Write a heatmap as a colormapped RGB PNG; returns the pixel array.

    A degenerate heatmap renders as solid ramp-start color with a logged
    warning rather than failing, so batch rendering can proceed.
    """
    from PIL import Image

    if h.degenerate:
        logger.warning("rendering degenerate heatmap %r as ramp start", h.image_id)
    pixels = _to_uint8(ramp_colors(h.grid, spec.colormap))
    Image.fromarray(pixels, mode="RGB").save(path, format="PNG")
    return pixels


def overlay_png(image_path, h, spec, out_path):
    """Blend the colormapped heatmap over the source image and write a PNG.

    out = (1 - alpha) * image + alpha * colormap(heatmap), per channel,
    rounded half-up once at the end. Returns the pixel array.
    """
    from PIL import Image

    with Image.open(image_path) as img:
        rgb = img.convert("RGB")
        width, height = rgb.size
        if (height, width) != h.grid.shape:
            raise ShapeError(
                f"{image_path}: image is {width}x{height} but heatmap grid is "
                f"{h.grid.shape[1]}x{h.grid.shape[0]}"
            )
        base = np.asarray(rgb, dtype=np.float64)
    if h.degenerate:
        logger.warning("overlaying degenerate heatmap %r as ramp start", h.image_id)
    alpha = spec.blend_alpha
    blended = (1.0 - alpha) * base + alpha * ramp_colors(h.grid, spec.colormap)
    pixels = _to_uint8(blended)
    Image.fromarray(pixels, mode="RGB").save(out_path, format="PNG")
    return pixels


def output_name(image_id, scheme):
    """File naming convention for rendered heatmaps."""
    return f"{image_id}__{scheme}.png"
