"""Shared fixtures: synthetic datasets with a planted quadrant signal.

Each image's class drives a block of activation channels that light up in
one quadrant of the native grid; the FC kernel maps each block to one
embedding axis. Embeddings therefore separate cleanly by class, heatmaps
concentrate in the quadrant, and the quadrant box is the ground truth.
"""

import os
from dataclasses import dataclass, field

import numpy as np
import pytest
from PIL import Image

from proxycam import BoundingBox, TensorEntry, write_container

QUADRANTS = ((0, 0), (0, 1), (1, 0), (1, 1))  # (row block, col block)


@dataclass
class SyntheticData:
    root: str
    container: str
    image_ids: list
    class_of: dict
    gt_box: dict
    kernel: np.ndarray
    activations: dict = field(default_factory=dict)
    embeddings: dict = field(default_factory=dict)
    image_size: int = 64
    native: int = 8
    n_classes: int = 5


def build_synthetic(
    root,
    n_classes=5,
    per_class=10,
    channels=16,
    dim=8,
    native=8,
    image_size=64,
    seed=7,
    write_images=True,
):
    assert dim >= n_classes and channels // n_classes >= 1
    rng = np.random.default_rng(seed)
    block = channels // n_classes
    kernel = np.zeros((channels, dim))
    for c in range(n_classes):
        kernel[c * block : (c + 1) * block, c] = 1.0

    os.makedirs(os.path.join(root, "images"), exist_ok=True)
    os.makedirs(os.path.join(root, "segmentations"), exist_ok=True)
    half_native = native // 2
    half_img = image_size // 2
    index_lines = []
    bbox_lines = []
    entries = [TensorEntry("fc_kernel", kernel)]
    data = SyntheticData(
        root=root,
        container=os.path.join(root, "exports.ecam"),
        image_ids=[],
        class_of={},
        gt_box={},
        kernel=kernel,
        image_size=image_size,
        native=native,
        n_classes=n_classes,
    )

    for c in range(n_classes):
        class_id = f"class_{c}"
        qr, qc = QUADRANTS[c % 4]
        for j in range(per_class):
            image_id = f"img_{c}_{j:02d}"
            a = rng.uniform(0.0, 0.02, size=(channels, native, native))
            rows = slice(qr * half_native, (qr + 1) * half_native)
            cols = slice(qc * half_native, (qc + 1) * half_native)
            a[c * block : (c + 1) * block, rows, cols] = rng.uniform(
                1.0, 1.2, size=(block, half_native, half_native)
            )
            raw = kernel.T @ a.mean(axis=(1, 2))
            gt = BoundingBox(
                x=qc * half_img, y=qr * half_img, width=half_img, height=half_img
            )
            split = "train" if j < per_class - 3 else "test"
            index_lines.append(
                f"{image_id} {image_id}.png {class_id} {image_size} {image_size} {split}"
            )
            bbox_lines.append(
                f"{image_id} {gt.x}.0 {gt.y}.0 {gt.width}.0 {gt.height}.0"
            )
            entries.append(TensorEntry(f"activations/{image_id}", a))
            entries.append(TensorEntry(f"embedding/{image_id}", raw))
            if write_images:
                color = (40 + 8 * c, 70 + 3 * j, 150)
                Image.new("RGB", (image_size, image_size), color).save(
                    os.path.join(root, "images", f"{image_id}.png")
                )
                mask = np.zeros((image_size, image_size), dtype=np.uint8)
                mask[gt.y : gt.y + gt.height, gt.x : gt.x + gt.width] = 255
                Image.fromarray(mask, mode="L").save(
                    os.path.join(root, "segmentations", f"{image_id}.png")
                )
            data.image_ids.append(image_id)
            data.class_of[image_id] = class_id
            data.gt_box[image_id] = gt
            data.activations[image_id] = a
            data.embeddings[image_id] = raw

    with open(os.path.join(root, "index.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(index_lines) + "\n")
    with open(os.path.join(root, "bboxes.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(bbox_lines) + "\n")
    write_container(entries, data.container)
    return data


@pytest.fixture(scope="session")
def synthetic(tmp_path_factory):
    """50 images, 5 classes, embedding dim 8: the end-to-end fixture."""
    return build_synthetic(str(tmp_path_factory.mktemp("synthetic")))


@pytest.fixture(scope="session")
def synthetic_square(tmp_path_factory):
    """Embedding dim == class count, so the one-hot scheme is usable."""
    return build_synthetic(
        str(tmp_path_factory.mktemp("synthetic_square")),
        n_classes=4,
        per_class=3,
        channels=8,
        dim=4,
        native=4,
        image_size=32,
        seed=11,
    )
