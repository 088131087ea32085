"""Proxy-based class activation heatmaps for embedding networks.

Computes GradCAM-style saliency maps for metric-learning models by taking
the gradient of a proxy-dot-embedding loss through a GAP + FC head, plus
the evaluation metrics (mean heatmap ratio, weakly supervised localization
accuracy) and the file plumbing to run it all from exported tensors.
"""

from .cam import (
    ActivationMap,
    ChannelWeights,
    EmbeddingPair,
    FcKernel,
    Heatmap,
    cam_from_gradient,
    channel_weights,
    embedding_cam,
    forward_head,
    grad_backprop,
    grad_closed_form,
    heatmap,
    normalize_heatmap,
    proxy_loss,
    upsample_heatmap,
)
from .dataio import (
    Dataset,
    DatasetRecord,
    TensorContainer,
    TensorEntry,
    load_bboxes,
    load_container,
    load_index,
    load_segmask,
    write_container,
)
from .estimator import ProxyCam
from .exceptions import (
    AnnotationError,
    ContainerFormatError,
    DegenerateInputError,
    EmptyMaskError,
    InvariantViolationError,
    MissingDataError,
    ShapeError,
)
from .metrics import (
    BoundingBox,
    RatioReport,
    SegmentationMask,
    WslReport,
    binarize,
    enclosing_bbox,
    heatmap_ratio,
    iou,
    largest_component,
    locate,
    mean_ratio_report,
    uniform_baseline,
    wsl_accuracy,
)
from .proxies import (
    ProxyVector,
    load_proxies,
    mean_proxy,
    one_hot_proxy,
    save_proxies,
    single_point_proxy,
)
from .render import OverlaySpec, colormap_png, overlay_png
from .tensor_ops import bilinear_upsample, dot, l2_normalize, matvec, relu, spatial_mean

__version__ = "0.1.0"

__all__ = [
    "ActivationMap",
    "AnnotationError",
    "BoundingBox",
    "ChannelWeights",
    "ContainerFormatError",
    "Dataset",
    "DatasetRecord",
    "DegenerateInputError",
    "EmbeddingPair",
    "EmptyMaskError",
    "FcKernel",
    "Heatmap",
    "InvariantViolationError",
    "MissingDataError",
    "OverlaySpec",
    "ProxyCam",
    "ProxyVector",
    "RatioReport",
    "SegmentationMask",
    "ShapeError",
    "TensorContainer",
    "TensorEntry",
    "WslReport",
    "bilinear_upsample",
    "binarize",
    "cam_from_gradient",
    "channel_weights",
    "colormap_png",
    "dot",
    "embedding_cam",
    "enclosing_bbox",
    "forward_head",
    "grad_backprop",
    "grad_closed_form",
    "heatmap",
    "heatmap_ratio",
    "iou",
    "l2_normalize",
    "largest_component",
    "load_bboxes",
    "load_container",
    "load_index",
    "load_proxies",
    "load_segmask",
    "locate",
    "matvec",
    "mean_proxy",
    "mean_ratio_report",
    "normalize_heatmap",
    "one_hot_proxy",
    "overlay_png",
    "proxy_loss",
    "relu",
    "save_proxies",
    "single_point_proxy",
    "spatial_mean",
    "uniform_baseline",
    "upsample_heatmap",
    "wsl_accuracy",
    "write_container",
]
