"""Class proxies: normalized mean, single point, and one-hot schemes.

A proxy is the unit vector that stands in for a class when computing the
heatmap loss. The mean scheme renormalizes the average of the unit
embeddings of the class members; the single-point scheme uses one image's
own unit embedding (the single-member special case of the mean); the
one-hot scheme is the standard basis vector, which recovers plain
classification CAMs when the embedding dimension equals the class count.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .cam import EmbeddingPair
from .dataio import TensorEntry, load_container, write_container
from .exceptions import (
    DegenerateInputError,
    InvariantViolationError,
    MissingDataError,
    ShapeError,
)
from .tensor_ops import as_tensor, l2_normalize

logger = logging.getLogger(__name__)

SCHEMES = ("mean", "single_point", "one_hot")


@dataclass(frozen=True)
class ProxyVector:
    """A class's stand-in vector plus how it was built."""

    values: np.ndarray
    scheme: str
    class_id: str = ""
    member_count: int = 1

    def __post_init__(self):
        object.__setattr__(self, "values", as_tensor(self.values, rank=1, name="proxy"))
        object.__setattr__(self, "member_count", int(self.member_count))
        if self.scheme not in SCHEMES:
            raise InvariantViolationError(
                f"unknown proxy scheme {self.scheme!r}; expected one of {SCHEMES}"
            )
        if self.scheme in ("mean", "single_point"):
            norm = float(np.linalg.norm(self.values))
            if abs(norm - 1.0) > 1e-9:
                raise InvariantViolationError(
                    f"{self.scheme} proxy for {self.class_id!r} has norm {norm}, expected 1"
                )
        else:
            ones = np.flatnonzero(self.values == 1.0)
            zeros = np.flatnonzero(self.values == 0.0)
            if ones.size != 1 or ones.size + zeros.size != self.values.size:
                raise InvariantViolationError(
                    f"one_hot proxy for {self.class_id!r} must be a standard basis vector"
                )
        if self.member_count < 1:
            raise InvariantViolationError("member_count must be at least 1")
        if self.scheme == "single_point" and self.member_count != 1:
            raise InvariantViolationError("single_point proxy must have member_count == 1")

    @property
    def dim(self):
        return self.values.shape[0]


def _unit_of(embedding):
    if isinstance(embedding, EmbeddingPair):
        return embedding.unit
    return l2_normalize(as_tensor(embedding, rank=1, name="embedding"))


def mean_proxy(embeddings, class_id=""):
    """Renormalized mean of the members' unit embeddings.

    Raises a missing-data error on an empty member list and a
    degenerate-input error when the member directions cancel exactly
    (zero-norm mean has no direction to normalize).
    """
    embeddings = list(embeddings)
    if not embeddings:
        raise MissingDataError(f"mean proxy for {class_id!r}: no member embeddings")
    units = [_unit_of(e) for e in embeddings]
    dim = units[0].shape[0]
    for u in units[1:]:
        if u.shape[0] != dim:
            raise ShapeError(
                f"mean proxy for {class_id!r}: mixed embedding dims {dim} and {u.shape[0]}"
            )
    if len(units) == 1:
        # the mean of one unit vector is that vector; renormalizing it
        # would perturb the single-point special case by an ulp
        values = units[0]
    else:
        try:
            values = l2_normalize(np.mean(units, axis=0))
        except DegenerateInputError as exc:
            raise DegenerateInputError(
                f"mean proxy for {class_id!r}: member embeddings cancel to a zero vector"
            ) from exc
    return ProxyVector(
        values=values, scheme="mean", class_id=class_id, member_count=len(embeddings)
    )


def single_point_proxy(y, class_id=""):
    """The image's own unit embedding as its proxy (mean of one member)."""
    return ProxyVector(
        values=_unit_of(y), scheme="single_point", class_id=class_id, member_count=1
    )


def one_hot_proxy(class_index, num_classes, class_id=""):
    """Standard basis vector e_c, the classification-mode proxy."""
    class_index = int(class_index)
    num_classes = int(num_classes)
    if not 0 <= class_index < num_classes:
        raise ShapeError(
            f"one_hot proxy: index {class_index} out of range for {num_classes} classes"
        )
    values = np.zeros(num_classes, dtype=np.float64)
    values[class_index] = 1.0
    return ProxyVector(values=values, scheme="one_hot", class_id=class_id, member_count=1)


def save_proxies(proxies, path):
    """Persist proxies as container entries named ``proxy/<class_id>``."""
    entries = []
    for p in proxies:
        entries.append(
            TensorEntry(
                name=f"proxy/{p.class_id}",
                array=p.values,
                dtype="f64",
                meta={
                    "scheme": p.scheme,
                    "class_id": p.class_id,
                    "member_count": p.member_count,
                    "embedding_dim": p.dim,
                },
            )
        )
    write_container(entries, path)


def load_proxies(path):
    """Load and revalidate persisted proxies; invariants are re-checked."""
    container = load_container(path)
    proxies = []
    for entry in container.entries:
        if not entry.name.startswith("proxy/"):
            continue
        meta = entry.meta
        for key in ("scheme", "class_id", "member_count"):
            if key not in meta:
                raise MissingDataError(f"{path}: entry {entry.name!r} lacks metadata key {key!r}")
        proxies.append(
            ProxyVector(
                values=entry.array,
                scheme=str(meta["scheme"]),
                class_id=str(meta["class_id"]),
                member_count=int(meta["member_count"]),
            )
        )
    if not proxies:
        raise MissingDataError(f"{path}: no proxy entries in container")
    return proxies


def proxies_from_labeled(embeddings, labels, scheme):
    """Build per-class proxies from parallel embedding and label sequences.

    mean groups by label; one_hot assigns basis vectors to the
    lexicographically sorted class ids and requires the embedding
    dimension to equal the class count. single_point is per image, not
    per class, so it is rejected here.
    """
    if scheme == "single_point":
        raise ValueError("single_point proxies are per image; build them from each embedding")
    labels = [str(label) for label in labels]
    embeddings = list(embeddings)
    if len(embeddings) != len(labels):
        raise ShapeError(f"{len(embeddings)} embeddings for {len(labels)} labels")
    if not embeddings:
        raise MissingDataError("no embeddings to build proxies from")
    classes = sorted(set(labels))
    if scheme == "mean":
        groups = {c: [] for c in classes}
        for emb, label in zip(embeddings, labels):
            groups[label].append(emb)
        return {c: mean_proxy(groups[c], class_id=c) for c in classes}
    if scheme == "one_hot":
        dim = _unit_of(embeddings[0]).shape[0]
        if dim != len(classes):
            raise ShapeError(
                f"one_hot scheme needs embedding dim == class count, got dim {dim} "
                f"for {len(classes)} classes"
            )
        return {
            c: one_hot_proxy(i, len(classes), class_id=c) for i, c in enumerate(classes)
        }
    raise ValueError(f"unknown proxy scheme {scheme!r}; expected one of {SCHEMES}")
