"""Binary tensor container, dataset index, and annotation loaders.

Container layout: magic ``ECAM``, one version byte, an 8-byte
little-endian manifest length, the UTF-8 JSON manifest, then the raw
blob. Manifest entries carry name, shape, dtype tag (f32 or f64), byte
offset into the blob, and byte length; payloads are little-endian
IEEE-754 in row-major order. Parsers reject malformed input instead of
repairing it; the one documented exception is clamping of out-of-bounds
bounding boxes, which is logged.
"""

import json
import logging
import math
import os

import numpy as np

from .exceptions import (
    AnnotationError,
    ContainerFormatError,
    MissingDataError,
    ShapeError,
)
from .metrics import BoundingBox, SegmentationMask

logger = logging.getLogger(__name__)

MAGIC = b"ECAM"
VERSION = 1
_HEADER_LEN = 4 + 1 + 8
_DTYPES = {"f32": ("<f4", 4), "f64": ("<f8", 8)}


class TensorEntry:
    """One named tensor plus its storage dtype and free-form metadata."""

    def __init__(self, name, array, dtype="f64", meta=None):
        if not name or not isinstance(name, str):
            raise ContainerFormatError(f"entry name must be a nonempty string, got {name!r}")
        if dtype not in _DTYPES:
            raise ContainerFormatError(f"entry {name!r}: unknown dtype {dtype!r}")
        array = np.asarray(array, dtype=np.float64)
        if array.ndim < 1 or 0 in array.shape:
            raise ShapeError(f"entry {name!r}: tensors must have rank >= 1 and no empty dims")
        self.name = name
        self.array = np.ascontiguousarray(array)
        self.dtype = dtype
        self.meta = dict(meta) if meta else {}

    def payload(self):
        """Storage bytes: f32 entries are narrowed on write, widened on load."""
        return self.array.astype(_DTYPES[self.dtype][0]).tobytes(order="C")


class TensorContainer:
    """Loaded container: entries in manifest order plus the raw bytes."""

    def __init__(self, entries, manifest_bytes=b"", blob=b""):
        self.entries = list(entries)
        self.manifest_bytes = manifest_bytes
        self.blob = blob
        self._by_name = {e.name: e for e in self.entries}
        if len(self._by_name) != len(self.entries):
            raise ContainerFormatError("duplicate entry names in container")

    @property
    def names(self):
        return [e.name for e in self.entries]

    def __contains__(self, name):
        return name in self._by_name

    def entry(self, name):
        return self._by_name[name]

    def get(self, name):
        return self._by_name[name].array

    def meta(self, name):
        return self._by_name[name].meta

    def require(self, *names):
        """Fetch arrays for all names, listing every absent one at once."""
        missing = [n for n in names if n not in self._by_name]
        if missing:
            raise MissingDataError(
                "container is missing entries: " + ", ".join(sorted(missing))
            )
        out = [self._by_name[n].array for n in names]
        return out[0] if len(out) == 1 else out


def write_container(entries, path):
    """Serialize entries to ``path``; same entries in, same bytes out.

    Offsets are assigned in iteration order, so the manifest is always in
    ascending offset order. The write lands via an atomic whole-file
    replace.
    """
    entries = list(entries)
    seen = set()
    manifest_entries = []
    payloads = []
    offset = 0
    for e in entries:
        if e.name in seen:
            raise ContainerFormatError(f"duplicate entry name {e.name!r}")
        seen.add(e.name)
        payload = e.payload()
        record = {
            "name": e.name,
            "shape": list(e.array.shape),
            "dtype": e.dtype,
            "byte_offset": offset,
            "byte_length": len(payload),
        }
        if e.meta:
            record["meta"] = e.meta
        manifest_entries.append(record)
        payloads.append(payload)
        offset += len(payload)
    manifest = json.dumps(
        {"entries": manifest_entries}, sort_keys=True, separators=(",", ":")
    ).encode("utf-8")
    header = MAGIC + bytes([VERSION]) + len(manifest).to_bytes(8, "little")
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(manifest)
        for payload in payloads:
            fh.write(payload)
    os.replace(tmp, path)


def _manifest_int(record, key, name):
    value = record.get(key)
    if not isinstance(value, int) or isinstance(value, bool) or value < 0:
        raise ContainerFormatError(f"entry {name!r}: {key} must be a nonnegative integer")
    return value


def load_container(path):
    """Parse and validate a container file.

    Entries may appear in any manifest order; loading sorts a copy for the
    overlap check but the in-memory tensors are identical under any
    permutation. Malformed files raise ContainerFormatError naming the
    byte offset or the offending entry.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER_LEN:
        raise ContainerFormatError(
            f"{path}: truncated header, {len(data)} bytes < {_HEADER_LEN} (error at byte 0)"
        )
    if data[:4] != MAGIC:
        raise ContainerFormatError(f"{path}: bad magic {data[:4]!r} at byte 0")
    if data[4] != VERSION:
        raise ContainerFormatError(f"{path}: unsupported version {data[4]} at byte 4")
    manifest_len = int.from_bytes(data[5:13], "little")
    if _HEADER_LEN + manifest_len > len(data):
        raise ContainerFormatError(
            f"{path}: manifest length {manifest_len} at byte 5 exceeds file size {len(data)}"
        )
    manifest_bytes = data[_HEADER_LEN : _HEADER_LEN + manifest_len]
    blob = data[_HEADER_LEN + manifest_len :]
    try:
        manifest = json.loads(manifest_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerFormatError(f"{path}: malformed manifest at byte {_HEADER_LEN}: {exc}") from exc
    if not isinstance(manifest, dict) or not isinstance(manifest.get("entries"), list):
        raise ContainerFormatError(f"{path}: manifest must be an object with an 'entries' list")

    entries = []
    spans = []
    for record in manifest["entries"]:
        if not isinstance(record, dict):
            raise ContainerFormatError(f"{path}: manifest entry is not an object")
        name = record.get("name")
        if not name or not isinstance(name, str):
            raise ContainerFormatError(f"{path}: manifest entry without a valid name")
        dtype = record.get("dtype")
        if dtype not in _DTYPES:
            raise ContainerFormatError(f"{path}: entry {name!r}: unknown dtype {dtype!r}")
        shape = record.get("shape")
        if (
            not isinstance(shape, list)
            or not shape
            or not all(isinstance(d, int) and not isinstance(d, bool) and d > 0 for d in shape)
        ):
            raise ContainerFormatError(
                f"{path}: entry {name!r}: shape must be a nonempty list of positive integers"
            )
        offset = _manifest_int(record, "byte_offset", name)
        length = _manifest_int(record, "byte_length", name)
        np_dtype, item_size = _DTYPES[dtype]
        expected = math.prod(shape) * item_size
        if length != expected:
            raise ContainerFormatError(
                f"{path}: entry {name!r}: byte_length {length} != product(shape) x "
                f"dtype size = {expected}"
            )
        if offset + length > len(blob):
            raise ContainerFormatError(
                f"{path}: entry {name!r}: bytes [{offset}, {offset + length}) exceed "
                f"blob size {len(blob)}"
            )
        meta = record.get("meta", {})
        if not isinstance(meta, dict):
            raise ContainerFormatError(f"{path}: entry {name!r}: meta must be an object")
        spans.append((offset, length, name))
        array = np.frombuffer(blob, dtype=np_dtype, count=math.prod(shape), offset=offset)
        array = array.astype(np.float64).reshape(shape)
        entries.append(TensorEntry(name, array, dtype=dtype, meta=meta))

    spans.sort()
    for (o1, l1, n1), (o2, _, n2) in zip(spans, spans[1:]):
        if o1 + l1 > o2:
            raise ContainerFormatError(f"{path}: entries {n1!r} and {n2!r} overlap")
    return TensorContainer(entries, manifest_bytes=manifest_bytes, blob=blob)


def _round_half_up(v):
    return math.floor(v + 0.5)


def load_bboxes(path, image_dims=None):
    """Parse whitespace-separated ``image_id x y width height`` records.

    Float coordinates are rounded half-up to pixels. When ``image_dims``
    (map image_id -> (width, height)) is given, boxes are clamped to the
    image and clamping is logged; a box that ends up empty is an error.
    """
    boxes = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 5:
                raise AnnotationError(
                    f"{path}:{line_no}: expected 'image_id x y width height', got {line.strip()!r}"
                )
            image_id = parts[0]
            if image_id in boxes:
                raise AnnotationError(f"{path}:{line_no}: duplicate image id {image_id!r}")
            try:
                x, y, w, h = (float(p) for p in parts[1:])
            except ValueError as exc:
                raise AnnotationError(f"{path}:{line_no}: non-numeric coordinate: {exc}") from exc
            x0, y0 = _round_half_up(x), _round_half_up(y)
            x1, y1 = x0 + _round_half_up(w), y0 + _round_half_up(h)
            if image_dims is not None and image_id in image_dims:
                img_w, img_h = image_dims[image_id]
                cx0, cy0 = min(max(x0, 0), img_w), min(max(y0, 0), img_h)
                cx1, cy1 = min(max(x1, 0), img_w), min(max(y1, 0), img_h)
                if (cx0, cy0, cx1, cy1) != (x0, y0, x1, y1):
                    logger.warning(
                        "%s:%d: clamped box for %s from (%d,%d,%d,%d) to image bounds %dx%d",
                        path, line_no, image_id, x0, y0, x1 - x0, y1 - y0, img_w, img_h,
                    )
                x0, y0, x1, y1 = cx0, cy0, cx1, cy1
            if x1 - x0 <= 0 or y1 - y0 <= 0:
                raise AnnotationError(
                    f"{path}:{line_no}: box for {image_id!r} is empty after rounding/clamping"
                )
            boxes[image_id] = BoundingBox(x=x0, y=y0, width=x1 - x0, height=y1 - y0)
    return boxes


def load_segmask(path, image_dims):
    """Load a grayscale mask image; foreground is luminance >= 128."""
    from PIL import Image

    with Image.open(path) as img:
        gray = img.convert("L")
        width, height = gray.size
        if (width, height) != tuple(image_dims):
            raise AnnotationError(
                f"{path}: mask is {width}x{height}, image is "
                f"{image_dims[0]}x{image_dims[1]}"
            )
        grid = np.asarray(gray, dtype=np.uint8) >= 128
    return SegmentationMask(grid=grid)


class DatasetRecord:
    """One image row of the dataset index."""

    def __init__(self, image_id, relative_path, class_id, width, height, split):
        self.image_id = image_id
        self.relative_path = relative_path
        self.class_id = class_id
        self.width = width
        self.height = height
        self.split = split
        self.has_bbox = False
        self.has_segmask = False


def load_index(path):
    """Parse ``index.txt``: image_id relative_path class_id width height split."""
    records = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 6:
                raise AnnotationError(
                    f"{path}:{line_no}: expected 'image_id relative_path class_id "
                    f"width height split', got {line.strip()!r}"
                )
            image_id, rel, class_id, w_s, h_s, split = parts
            if image_id in seen:
                raise AnnotationError(f"{path}:{line_no}: duplicate image id {image_id!r}")
            seen.add(image_id)
            try:
                width, height = int(w_s), int(h_s)
            except ValueError as exc:
                raise AnnotationError(f"{path}:{line_no}: non-integer dimensions: {exc}") from exc
            if width <= 0 or height <= 0:
                raise AnnotationError(f"{path}:{line_no}: dimensions must be positive")
            records.append(DatasetRecord(image_id, rel, class_id, width, height, split))
    return records


class Dataset:
    """Dataset root: index plus whatever annotations are present.

    Image dimensions come from the index, so evaluation runs without the
    source images; only ``overlay`` needs them and checks per image.
    """

    def __init__(self, root, records, bboxes):
        self.root = root
        self.records = records
        self.by_id = {r.image_id: r for r in records}
        self.bboxes = bboxes

    @classmethod
    def load(cls, root):
        index_path = os.path.join(root, "index.txt")
        if not os.path.exists(index_path):
            raise MissingDataError(f"no index.txt under {root}")
        records = load_index(index_path)
        dims = {r.image_id: (r.width, r.height) for r in records}
        bbox_path = os.path.join(root, "bboxes.txt")
        bboxes = load_bboxes(bbox_path, image_dims=dims) if os.path.exists(bbox_path) else {}
        ds = cls(root, records, bboxes)
        for r in records:
            r.has_bbox = r.image_id in bboxes
            r.has_segmask = os.path.exists(ds.segmask_path(r.image_id))
        return ds

    def image_path(self, image_id):
        return os.path.join(self.root, "images", self.by_id[image_id].relative_path)

    def segmask_path(self, image_id):
        return os.path.join(self.root, "segmentations", f"{image_id}.png")

    def segmask(self, image_id):
        record = self.by_id[image_id]
        return load_segmask(self.segmask_path(image_id), (record.width, record.height))

    def ids(self, split=None):
        if split is None or split == "all":
            return [r.image_id for r in self.records]
        return [r.image_id for r in self.records if r.split == split]
