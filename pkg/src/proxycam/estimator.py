"""Scikit-learn style facade over the proxy and heatmap pipeline."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .cam import ActivationMap, FcKernel, embedding_cam, forward_head, upsample_heatmap
from .exceptions import InvariantViolationError, MissingDataError, ShapeError
from .proxies import SCHEMES, proxies_from_labeled, single_point_proxy


def _validate_activations(X, channels=None):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 4:
        raise ShapeError(
            f"activations must be rank 4 (images, channels, height, width), got rank {X.ndim}"
        )
    if not np.isfinite(X).all():
        raise InvariantViolationError("activations contain non-finite values")
    if channels is not None and X.shape[1] != channels:
        raise ShapeError(f"expected {channels} channels, got {X.shape[1]}")
    return X


class ProxyCam(BaseEstimator, TransformerMixin):
    """Heatmaps for embedding networks, shaped like a sklearn transformer.

    X is always a batch of last-conv activations with shape
    (n_images, channels, height, width). fit() runs the GAP + FC head on
    each image, groups the resulting embeddings by label, and stores the
    class proxies. transform() maps activations to normalized heatmaps,
    picking each image's proxy by the labels argument when given, by its
    own embedding under the single_point scheme, or by the nearest class
    proxy otherwise. predict() returns the nearest class id per image.

    Parameters
    ----------
    fc_kernel : array of shape (channels, embedding_dim)
        Weights of the model's final fully connected layer.
    scheme : {"mean", "single_point", "one_hot"}
        How proxies are built.
    gradient_path : {"backprop", "closed_form"}
        Which of the two equivalent gradient computations to run.
    output_size : None, int, or (height, width)
        Heatmap resolution; None keeps the native activation grid.
    """

    def __init__(self, fc_kernel=None, scheme="mean", gradient_path="backprop", output_size=None):
        self.fc_kernel = fc_kernel
        self.scheme = scheme
        self.gradient_path = gradient_path
        self.output_size = output_size

    def _kernel(self):
        if self.fc_kernel is None:
            raise MissingDataError("fc_kernel is required; pass it to the constructor")
        if isinstance(self.fc_kernel, FcKernel):
            return self.fc_kernel
        return FcKernel(np.asarray(self.fc_kernel, dtype=np.float64))

    def _embed(self, X, kernel):
        return [
            forward_head(ActivationMap(X[i], image_id=str(i)), kernel)
            for i in range(X.shape[0])
        ]

    def fit(self, X, y=None):
        """Learn class proxies from labeled activations.

        y may be omitted only for the single_point scheme, which needs no
        class grouping.
        """
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        kernel = self._kernel()
        X = _validate_activations(X, channels=kernel.channels)
        self.embedding_dim_ = kernel.embedding_dim
        if self.scheme == "single_point":
            self.proxies_ = {}
            self.classes_ = np.array([], dtype=object)
            return self
        if y is None:
            raise MissingDataError(f"scheme {self.scheme!r} needs labels to group by")
        labels = [str(label) for label in np.asarray(y).ravel()]
        if len(labels) != X.shape[0]:
            raise ShapeError(f"{X.shape[0]} images but {len(labels)} labels")
        embeddings = self._embed(X, kernel)
        self.proxies_ = proxies_from_labeled(embeddings, labels, self.scheme)
        self.classes_ = np.array(sorted(self.proxies_), dtype=object)
        return self

    def predict(self, X):
        """Nearest class id per image by cosine against the class proxies."""
        check_is_fitted(self, "proxies_")
        if not self.proxies_:
            raise MissingDataError("single_point scheme has no class proxies to predict with")
        kernel = self._kernel()
        X = _validate_activations(X, channels=kernel.channels)
        embeddings = self._embed(X, kernel)
        proxy_matrix = np.stack([self.proxies_[c].values for c in self.classes_])
        scores = np.stack([e.unit for e in embeddings]) @ proxy_matrix.T
        return self.classes_[np.argmax(scores, axis=1)]

    def _proxy_for(self, pair, label):
        if self.scheme == "single_point":
            return single_point_proxy(pair)
        if label is not None:
            label = str(label)
            if label not in self.proxies_:
                raise MissingDataError(f"no proxy for label {label!r}")
            return self.proxies_[label]
        proxy_matrix = np.stack([self.proxies_[c].values for c in self.classes_])
        nearest = int(np.argmax(proxy_matrix @ pair.unit))
        return self.proxies_[self.classes_[nearest]]

    def heatmaps(self, X, labels=None, image_ids=None):
        """Full Heatmap objects, including degeneracy flags."""
        check_is_fitted(self, "embedding_dim_")
        kernel = self._kernel()
        X = _validate_activations(X, channels=kernel.channels)
        n = X.shape[0]
        if labels is not None and len(labels) != n:
            raise ShapeError(f"{n} images but {len(labels)} labels")
        if image_ids is None:
            image_ids = [str(i) for i in range(n)]
        out = []
        for i in range(n):
            a = ActivationMap(X[i], image_id=str(image_ids[i]))
            proxy = self._proxy_for(
                forward_head(a, kernel), None if labels is None else labels[i]
            )
            h = embedding_cam(a, kernel, proxy, path=self.gradient_path)
            if self.output_size is not None:
                size = self.output_size
                target = (size, size) if np.isscalar(size) else tuple(size)
                h = upsample_heatmap(h, target[0], target[1])
            out.append(h)
        return out

    def transform(self, X, labels=None):
        """Normalized heatmaps as one stacked array (degenerate rows stay zero)."""
        return np.stack([h.grid for h in self.heatmaps(X, labels=labels)])
