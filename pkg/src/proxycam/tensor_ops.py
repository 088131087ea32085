"""Validated dense-array operations used by the rest of the pipeline.

All public functions take array-likes, convert them to 64-bit C-order
float arrays, reject non-finite values, and return new arrays. This is
the complete numerical surface the pipeline needs; nothing here
broadcasts beyond what the named operations require.
"""

import numpy as np

from .exceptions import DegenerateInputError, InvariantViolationError, ShapeError


def as_tensor(x, rank=None, name="tensor"):
    """Convert to a float64 C-order array, checking rank and finiteness."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if rank is not None and arr.ndim != rank:
        raise ShapeError(f"{name} must have rank {rank}, got rank {arr.ndim}")
    if arr.size and not np.isfinite(arr).all():
        raise InvariantViolationError(f"{name} contains non-finite values")
    return arr


def dot(a, b):
    """Inner product of two equal-length vectors."""
    a = as_tensor(a, rank=1, name="a")
    b = as_tensor(b, rank=1, name="b")
    if a.shape != b.shape:
        raise ShapeError(f"dot requires equal shapes, got {a.shape} and {b.shape}")
    return float(a @ b)


def l2_normalize(v):
    """Scale a vector to unit Euclidean norm."""
    v = as_tensor(v, rank=1, name="v")
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise DegenerateInputError("cannot normalize a zero vector")
    return v / norm


def spatial_mean(t):
    """Average a channels x height x width tensor over its spatial axes."""
    t = as_tensor(t, rank=3, name="t")
    return t.mean(axis=(1, 2))


def matvec(w, v, transpose=False):
    """Matrix-vector product w @ v, or w.T @ v when transpose is set."""
    w = as_tensor(w, rank=2, name="w")
    v = as_tensor(v, rank=1, name="v")
    mat = w.T if transpose else w
    if mat.shape[1] != v.shape[0]:
        raise ShapeError(
            f"matvec inner dimensions differ: {mat.shape[1]} vs {v.shape[0]}"
        )
    return mat @ v


def relu(t):
    """Elementwise max(0, x)."""
    t = as_tensor(t, name="t")
    return np.maximum(t, 0.0)


def bilinear_upsample(h, target_h, target_w):
    """Corner-aligned bilinear upsampling of a 2-D grid.

    Output pixel (i, j) samples the source at
    (i * (H-1) / (target_h-1), j * (W-1) / (target_w-1)); the four
    neighbors are combined with nested lerps (a + t*(b-a)), which keeps
    every output value inside [min(h), max(h)]. Both target dimensions
    must be at least the source dimensions.
    """
    src = as_tensor(h, rank=2, name="h")
    height, width = src.shape
    target_h = int(target_h)
    target_w = int(target_w)
    if target_h < height or target_w < width:
        raise ShapeError(
            f"target {target_h}x{target_w} smaller than source {height}x{width}"
        )

    scale_y = (height - 1) / (target_h - 1) if target_h > 1 else 0.0
    scale_x = (width - 1) / (target_w - 1) if target_w > 1 else 0.0
    sy = np.arange(target_h, dtype=np.float64) * scale_y
    sx = np.arange(target_w, dtype=np.float64) * scale_x

    y0 = np.floor(sy).astype(np.intp)
    x0 = np.floor(sx).astype(np.intp)
    y1 = np.minimum(y0 + 1, height - 1)
    x1 = np.minimum(x0 + 1, width - 1)
    ty = (sy - y0)[:, None]
    tx = (sx - x0)[None, :]

    v00 = src[y0[:, None], x0[None, :]]
    v01 = src[y0[:, None], x1[None, :]]
    v10 = src[y1[:, None], x0[None, :]]
    v11 = src[y1[:, None], x1[None, :]]

    top = v00 + tx * (v01 - v00)
    bottom = v10 + tx * (v11 - v10)
    return np.ascontiguousarray(top + ty * (bottom - top))
