"""Heatmap engine: head forward pass, proxy loss, gradients, channel weights.

The model head this engine understands is global average pooling followed
by a fully connected layer (the L2 normalization on top does not carry
gradient because the loss is taken against the pre-normalization output).
Gradients come in two flavors: a stage-by-stage backward pass and a fused
closed form; both are kept and cross-checked by the test suite.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import DegenerateInputError, InvariantViolationError, ShapeError
from .tensor_ops import as_tensor, bilinear_upsample, l2_normalize, matvec, relu, spatial_mean


@dataclass(frozen=True)
class ActivationMap:
    """Last-conv activations for one image, shaped channels x height x width."""

    data: np.ndarray
    image_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "data", as_tensor(self.data, rank=3, name="activation map"))

    @property
    def channels(self):
        return self.data.shape[0]

    @property
    def height(self):
        return self.data.shape[1]

    @property
    def width(self):
        return self.data.shape[2]

    @property
    def spatial_size(self):
        """Number of spatial positions per channel."""
        return self.data.shape[1] * self.data.shape[2]


@dataclass(frozen=True)
class FcKernel:
    """Weights of the final fully connected layer: input channels x embedding dim."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", as_tensor(self.data, rank=2, name="fc kernel"))

    @property
    def channels(self):
        return self.data.shape[0]

    @property
    def embedding_dim(self):
        return self.data.shape[1]


@dataclass(frozen=True)
class EmbeddingPair:
    """Raw head output together with its unit-norm version."""

    raw: np.ndarray
    unit: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "raw", as_tensor(self.raw, rank=1, name="raw embedding"))
        object.__setattr__(self, "unit", as_tensor(self.unit, rank=1, name="unit embedding"))
        if self.raw.shape != self.unit.shape:
            raise ShapeError("raw and unit embeddings must have the same length")
        norm = float(np.linalg.norm(self.unit))
        if abs(norm - 1.0) > 1e-12:
            raise InvariantViolationError(f"unit embedding norm is {norm}, expected 1")
        if np.max(np.abs(self.raw - self.unit * np.linalg.norm(self.raw))) > 1e-12 * max(
            1.0, float(np.max(np.abs(self.raw)))
        ):
            raise InvariantViolationError("unit embedding is not the normalized raw embedding")

    @classmethod
    def from_raw(cls, raw):
        raw = as_tensor(raw, rank=1, name="raw embedding")
        return cls(raw=raw, unit=l2_normalize(raw))


@dataclass(frozen=True)
class ChannelWeights:
    """Per-channel scalars obtained by pooling a gradient tensor spatially."""

    alpha: np.ndarray
    proxy_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "alpha", as_tensor(self.alpha, rank=1, name="alpha"))


@dataclass(frozen=True)
class Heatmap:
    """Nonnegative spatial saliency grid.

    ``normalized`` means the grid was divided by its max and the max is
    exactly 1. ``degenerate`` marks an all-zero grid that cannot be
    normalized; such maps are never silently rescaled. ``upsampled_from``
    records the native grid shape when the map has been resized.
    """

    grid: np.ndarray
    normalized: bool = False
    degenerate: bool = False
    image_id: str = ""
    upsampled_from: tuple = None

    def __post_init__(self):
        grid = as_tensor(self.grid, rank=2, name="heatmap grid")
        object.__setattr__(self, "grid", grid)
        if grid.size and float(grid.min()) < 0.0:
            raise InvariantViolationError("heatmap grid has negative values")
        peak = float(grid.max()) if grid.size else 0.0
        if self.degenerate and peak != 0.0:
            raise InvariantViolationError("degenerate heatmap must be all zero")
        if self.normalized and not self.degenerate and peak != 1.0:
            raise InvariantViolationError(f"normalized heatmap max is {peak}, expected 1")


def _proxy_values(p, name="proxy"):
    # Accepts a ProxyVector or a bare vector so linearity checks can feed
    # arbitrary (even zero) directions through the gradient ops.
    values = getattr(p, "values", p)
    return as_tensor(values, rank=1, name=name)


def _proxy_id(p):
    return str(getattr(p, "class_id", ""))


def forward_head(a, w):
    """Run GAP -> FC -> L2 normalization on an activation map.

    Raises DegenerateInputError when the raw embedding is the zero vector,
    since no unit embedding exists for it.
    """
    if a.channels != w.channels:
        raise ShapeError(
            f"activation channels ({a.channels}) != kernel channels ({w.channels})"
        )
    pooled = spatial_mean(a.data)
    raw = matvec(w.data, pooled, transpose=True)
    return EmbeddingPair.from_raw(raw)


def proxy_loss(y, p):
    """Loss driving the heatmap: dot product of the raw embedding with the proxy."""
    raw = y.raw if isinstance(y, EmbeddingPair) else as_tensor(y, rank=1, name="embedding")
    values = _proxy_values(p)
    if raw.shape != values.shape:
        raise ShapeError(f"embedding length {raw.shape[0]} != proxy length {values.shape[0]}")
    return float(raw @ values)


def grad_backprop(a, w, p):
    """Gradient of the proxy loss w.r.t. the activations, stage by stage.

    Walks the chain backward: d loss / d raw-embedding is the proxy itself,
    the FC layer maps it back to pooled-channel space, and average pooling
    spreads each channel's value uniformly over the 1/Z-weighted spatial
    positions. Returns a channels x height x width tensor.
    """
    values = _proxy_values(p)
    if w.embedding_dim != values.shape[0]:
        raise ShapeError(
            f"kernel embedding dim ({w.embedding_dim}) != proxy length ({values.shape[0]})"
        )
    if a.channels != w.channels:
        raise ShapeError(
            f"activation channels ({a.channels}) != kernel channels ({w.channels})"
        )
    grad_embedding = values
    grad_pooled = w.data @ grad_embedding
    grad_cell = grad_pooled / a.spatial_size
    return np.ascontiguousarray(
        np.broadcast_to(grad_cell[:, None, None], a.data.shape)
    )


def grad_closed_form(w, p, spatial_size):
    """Fused per-channel gradient (1/Z) * (w @ p) of the GAP -> FC head.

    Every spatial position of a channel shares this value, so only the
    channel vector is returned.
    """
    values = _proxy_values(p)
    if w.embedding_dim != values.shape[0]:
        raise ShapeError(
            f"kernel embedding dim ({w.embedding_dim}) != proxy length ({values.shape[0]})"
        )
    spatial_size = int(spatial_size)
    if spatial_size < 1:
        raise ShapeError("spatial size must be at least 1")
    return (w.data @ values) / spatial_size


def channel_weights(g, proxy_id=""):
    """Reduce a gradient tensor to per-channel weights by spatial averaging."""
    g = as_tensor(g, rank=3, name="gradient")
    return ChannelWeights(alpha=g.mean(axis=(1, 2)), proxy_id=proxy_id)


def heatmap(alpha, a):
    """Weighted channel sum of the activations, clamped at zero.

    The result is at native resolution and not yet normalized; an all-zero
    grid is permitted at this stage.
    """
    if alpha.alpha.shape[0] != a.channels:
        raise ShapeError(
            f"got {alpha.alpha.shape[0]} channel weights for {a.channels} channels"
        )
    grid = relu(np.tensordot(alpha.alpha, a.data, axes=([0], [0])))
    return Heatmap(grid=grid, image_id=a.image_id)


def normalize_heatmap(h):
    """Divide by the max so the peak is exactly 1; flag all-zero maps instead.

    Degenerate maps keep their zero grid and are never rescaled; callers
    decide how to count them.
    """
    peak = float(h.grid.max()) if h.grid.size else 0.0
    if peak == 0.0:
        return replace(h, degenerate=True, normalized=False)
    return replace(h, grid=h.grid / peak, normalized=True)


def upsample_heatmap(h, target_h, target_w):
    """Bilinearly resize a heatmap, re-normalizing when the input was normalized."""
    grid = bilinear_upsample(h.grid, target_h, target_w)
    out = replace(h, grid=grid, normalized=False, upsampled_from=(h.grid.shape[0], h.grid.shape[1]))
    if h.degenerate:
        return out
    if h.normalized:
        out = normalize_heatmap(out)
    return out


GRADIENT_PATHS = ("backprop", "closed_form")


def embedding_cam(a, w, p, path="backprop"):
    """Full pipeline: gradient -> channel weights -> heatmap -> normalization.

    ``path`` selects how the gradient is obtained; both choices agree
    within floating-point noise for the GAP -> FC head.
    """
    if path not in GRADIENT_PATHS:
        raise ValueError(f"unknown gradient path {path!r}; expected one of {GRADIENT_PATHS}")
    if path == "backprop":
        alpha = channel_weights(grad_backprop(a, w, p), proxy_id=_proxy_id(p))
    else:
        alpha = ChannelWeights(
            alpha=grad_closed_form(w, p, a.spatial_size), proxy_id=_proxy_id(p)
        )
    return normalize_heatmap(heatmap(alpha, a))


def cam_from_gradient(gradient, a):
    """Build a normalized heatmap from an externally computed gradient tensor.

    Extension point for model heads this engine cannot differentiate
    itself: export d loss / d activations from the model's own framework
    and feed it here together with the activations.
    """
    g = as_tensor(gradient, rank=3, name="gradient")
    if g.shape != a.data.shape:
        raise ShapeError(f"gradient shape {g.shape} != activation shape {a.data.shape}")
    return normalize_heatmap(heatmap(channel_weights(g), a))
