"""Command line pipeline over a dataset root and tensor container.

Subcommands: proxy (build and persist class proxies), cam (compute
heatmaps), eval (score heatmaps against annotations), overlay (render
blended PNGs). Option precedence is flags over config-file entries over
defaults; the config file is plain ``key=value`` lines. Batch commands
continue past per-image failures and report them; the exit code is 0 only
when every item succeeded. Set the PROXYCAM_LOG environment variable
(DEBUG, INFO, WARNING, ERROR) to control log verbosity.
"""

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cam import (
    GRADIENT_PATHS,
    ActivationMap,
    FcKernel,
    Heatmap,
    embedding_cam,
    upsample_heatmap,
)
from .dataio import Dataset, TensorEntry, load_container, write_container
from .exceptions import InvariantViolationError, MissingDataError
from .metrics import (
    format_ratio_report,
    format_wsl_report,
    mean_ratio_report,
    wsl_accuracy,
)
from .proxies import SCHEMES, load_proxies, proxies_from_labeled, save_proxies, single_point_proxy
from .render import OverlaySpec, output_name, overlay_png

logger = logging.getLogger(__name__)

LOG_ENV = "PROXYCAM_LOG"
REGIONS = ("bbox", "segmentation")

_DEFAULTS = {
    "scheme": "mean",
    "path": "backprop",
    "threshold": 0.2,
    "region": "bbox",
    "jobs": 1,
    "split": "all",
    "alpha": 0.5,
    "inject_constant": False,
}


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved options for one command invocation."""

    command: str
    dataset_root: str = None
    container: str = None
    scheme: str = "mean"
    gradient_path: str = "backprop"
    threshold_t: float = 0.2
    region_kind: str = "bbox"
    output_dir: str = None
    jobs: int = 1
    ids: tuple = None
    split: str = "all"
    alpha: float = 0.5
    proxies: str = None
    inject_constant: bool = False

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise InvariantViolationError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.gradient_path not in GRADIENT_PATHS:
            raise InvariantViolationError(
                f"gradient path must be one of {GRADIENT_PATHS}, got {self.gradient_path!r}"
            )
        if self.region_kind not in REGIONS:
            raise InvariantViolationError(
                f"region must be one of {REGIONS}, got {self.region_kind!r}"
            )
        if not 0.0 < self.threshold_t < 1.0:
            raise InvariantViolationError(
                f"threshold must lie in (0, 1), got {self.threshold_t}"
            )
        if self.jobs < 1:
            raise InvariantViolationError(f"jobs must be at least 1, got {self.jobs}")
        if not 0.0 <= self.alpha <= 1.0:
            raise InvariantViolationError(f"alpha must lie in [0, 1], got {self.alpha}")


def load_config_file(path):
    """Parse ``key=value`` lines; blank lines and # comments are skipped."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise InvariantViolationError(
                    f"{path}:{line_no}: expected key=value, got {stripped!r}"
                )
            key, _, value = stripped.partition("=")
            values[key.strip()] = value.strip()
    return values


def _parse_ids(value):
    if value is None:
        return None
    return tuple(part for part in value.split(",") if part)


def _parse_bool(value):
    if isinstance(value, bool):
        return value
    return str(value).strip().lower() in ("1", "true", "yes", "on")


def resolve_config(args):
    """Merge flags over config-file entries over defaults into a RunConfig."""
    file_values = load_config_file(args.config) if args.config else {}

    def pick(key, cast=str):
        flag = getattr(args, key, None)
        if flag is not None:
            return flag
        if key in file_values:
            return cast(file_values[key])
        return _DEFAULTS.get(key)

    inject = getattr(args, "inject_constant", False) or _parse_bool(
        file_values.get("inject_constant", False)
    )
    return RunConfig(
        command=args.command,
        dataset_root=pick("dataset_root"),
        container=pick("container"),
        scheme=pick("scheme"),
        gradient_path=pick("path"),
        threshold_t=float(pick("threshold", float)),
        region_kind=pick("region"),
        output_dir=pick("out"),
        jobs=int(pick("jobs", int)),
        ids=_parse_ids(pick("ids")),
        split=pick("split"),
        alpha=float(pick("alpha", float)),
        proxies=pick("proxies"),
        inject_constant=inject,
    )


def _require(cfg, *names):
    human = {"dataset_root": "--dataset-root", "container": "--container", "output_dir": "--out"}
    missing = [human[n] for n in names if getattr(cfg, n) is None]
    if missing:
        raise MissingDataError(f"{cfg.command}: missing required options: {', '.join(missing)}")
    if cfg.dataset_root is not None and not os.path.isdir(cfg.dataset_root):
        raise MissingDataError(f"dataset root {cfg.dataset_root!r} is not a directory")
    if "container" in names and not os.path.isfile(cfg.container):
        raise MissingDataError(f"container {cfg.container!r} does not exist")


def _pool_map(jobs, func, items):
    """Apply func to items, catching per-item errors; order follows items."""
    results = {}
    failures = []

    def run(item):
        try:
            return item, func(item), None
        except Exception as exc:
            return item, None, f"{exc}"

    if jobs <= 1 or len(items) <= 1:
        outcomes = [run(item) for item in items]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(run, items))
    done = 0
    for item, value, error in outcomes:
        done += 1
        logger.debug("processed %s (%d/%d)", item, done, len(items))
        if error is None:
            results[item] = value
        else:
            failures.append((item, error))
            logger.error("%s failed: %s", item, error)
    return results, failures


def _inline_proxies(cfg, dataset, container):
    """Class proxies computed straight from the container's embeddings."""
    member_ids = dataset.ids(cfg.split)
    missing = [i for i in member_ids if f"embedding/{i}" not in container]
    if missing:
        raise MissingDataError(
            "container is missing embeddings for: " + ", ".join(sorted(missing))
        )
    embeddings = [container.get(f"embedding/{i}") for i in member_ids]
    labels = [dataset.by_id[i].class_id for i in member_ids]
    return proxies_from_labeled(embeddings, labels, cfg.scheme)


def cmd_proxy(cfg):
    _require(cfg, "dataset_root", "container", "output_dir")
    dataset = Dataset.load(cfg.dataset_root)
    container = load_container(cfg.container)
    ids = list(cfg.ids) if cfg.ids is not None else dataset.ids(cfg.split)
    unknown = [i for i in ids if i not in dataset.by_id]
    if unknown:
        raise MissingDataError("ids not in dataset index: " + ", ".join(sorted(unknown)))
    if not ids:
        print("proxy: no images selected, nothing to do")
        return 0
    missing = [i for i in ids if f"embedding/{i}" not in container]
    if missing:
        raise MissingDataError(
            "container is missing embeddings for: " + ", ".join(sorted(missing))
        )
    if cfg.scheme == "single_point":
        proxies = [
            single_point_proxy(container.get(f"embedding/{i}"), class_id=i)
            for i in sorted(ids)
        ]
    else:
        embeddings = [container.get(f"embedding/{i}") for i in ids]
        labels = [dataset.by_id[i].class_id for i in ids]
        by_class = proxies_from_labeled(embeddings, labels, cfg.scheme)
        proxies = [by_class[c] for c in sorted(by_class)]
    os.makedirs(cfg.output_dir, exist_ok=True)
    out_path = os.path.join(cfg.output_dir, f"proxies__{cfg.scheme}.ecam")
    save_proxies(proxies, out_path)
    print(f"proxy: wrote {len(proxies)} {cfg.scheme} proxies to {out_path}")
    return 0


def _heatmap_entries(cfg, dataset, container, kernel, class_proxies, image_id):
    record = dataset.by_id[image_id]
    a = ActivationMap(
        container.require(f"activations/{image_id}"), image_id=image_id
    )
    if cfg.scheme == "single_point":
        proxy = single_point_proxy(
            container.require(f"embedding/{image_id}"), class_id=image_id
        )
    else:
        proxy = class_proxies[record.class_id]
    native = embedding_cam(a, kernel, proxy, path=cfg.gradient_path)
    upsampled = upsample_heatmap(native, record.height, record.width)
    # storage is f32: narrowing absorbs sub-ulp differences between the two
    # gradient paths, so either path writes byte-identical files
    def entry(prefix, h):
        return TensorEntry(
            name=f"{prefix}/{image_id}__{cfg.scheme}",
            array=h.grid,
            dtype="f32",
            meta={
                "image_id": image_id,
                "scheme": cfg.scheme,
                "normalized": h.normalized,
                "degenerate": h.degenerate,
            },
        )

    return entry("heatmap", upsampled), entry("heatmap_native", native), native.degenerate


def cmd_cam(cfg):
    _require(cfg, "dataset_root", "container", "output_dir")
    dataset = Dataset.load(cfg.dataset_root)
    container = load_container(cfg.container)
    kernel = FcKernel(container.require("fc_kernel"))
    ids = list(cfg.ids) if cfg.ids is not None else dataset.ids()
    if not ids:
        print("cam: no images selected, nothing to do")
        return 0
    if cfg.scheme == "single_point":
        class_proxies = None
    elif cfg.proxies:
        class_proxies = {p.class_id: p for p in load_proxies(cfg.proxies)}
    else:
        class_proxies = _inline_proxies(cfg, dataset, container)

    def work(image_id):
        if image_id not in dataset.by_id:
            raise MissingDataError(f"id {image_id!r} not in dataset index")
        return _heatmap_entries(cfg, dataset, container, kernel, class_proxies, image_id)

    results, failures = _pool_map(cfg.jobs, work, sorted(ids))
    entries = []
    degenerate = 0
    for image_id in sorted(results):
        up_entry, native_entry, is_degenerate = results[image_id]
        entries.append(up_entry)
        entries.append(native_entry)
        degenerate += is_degenerate
    os.makedirs(cfg.output_dir, exist_ok=True)
    out_path = os.path.join(cfg.output_dir, f"heatmaps__{cfg.scheme}.ecam")
    write_container(entries, out_path)
    print(
        f"cam: wrote {len(results)} heatmaps ({degenerate} degenerate) to {out_path}; "
        f"{len(failures)} failed"
    )
    for image_id, error in failures:
        print(f"cam: FAILED {image_id}: {error}", file=sys.stderr)
    return 1 if failures else 0


def _heatmap_from_entry(entry):
    meta = entry.meta
    return Heatmap(
        grid=entry.array,
        normalized=_parse_bool(meta.get("normalized", False)),
        degenerate=_parse_bool(meta.get("degenerate", False)),
        image_id=str(meta.get("image_id", "")),
    )


def cmd_eval(cfg):
    _require(cfg, "dataset_root", "output_dir")
    if not cfg.inject_constant:
        _require(cfg, "container")
    dataset = Dataset.load(cfg.dataset_root)
    ids = list(cfg.ids) if cfg.ids is not None else dataset.ids()
    if not ids:
        print("eval: no images selected, nothing to do")
        return 0
    unknown = [i for i in ids if i not in dataset.by_id]
    if unknown:
        raise MissingDataError("ids not in dataset index: " + ", ".join(sorted(unknown)))
    no_bbox = [i for i in ids if not dataset.by_id[i].has_bbox]
    if no_bbox:
        raise MissingDataError(
            "missing bounding boxes (needed for wsl) for: " + ", ".join(sorted(no_bbox))
        )
    if cfg.region_kind == "segmentation":
        no_mask = [i for i in ids if not dataset.by_id[i].has_segmask]
        if no_mask:
            raise MissingDataError(
                "missing segmentation masks for: " + ", ".join(sorted(no_mask))
            )
    if cfg.inject_constant:
        container = None
    else:
        container = load_container(cfg.container)
        absent = [i for i in ids if f"heatmap/{i}__{cfg.scheme}" not in container]
        if absent:
            raise MissingDataError(
                f"container has no {cfg.scheme} heatmaps for: " + ", ".join(sorted(absent))
            )

    def work(image_id):
        record = dataset.by_id[image_id]
        if cfg.inject_constant:
            h = Heatmap(
                grid=np.ones((record.height, record.width)),
                normalized=True,
                image_id=image_id,
            )
        else:
            h = _heatmap_from_entry(container.entry(f"heatmap/{image_id}__{cfg.scheme}"))
        if cfg.region_kind == "bbox":
            region = dataset.bboxes[image_id]
        else:
            region = dataset.segmask(image_id)
        return h, region, dataset.bboxes[image_id]

    results, failures = _pool_map(cfg.jobs, work, sorted(ids))
    ordered = [results[i] for i in sorted(results)]
    os.makedirs(cfg.output_dir, exist_ok=True)
    suffix = f"__{cfg.scheme}_{cfg.region_kind}.txt"
    if ordered:
        ratio = mean_ratio_report([(h, region) for h, region, _ in ordered])
        wsl = wsl_accuracy([(h, gt) for h, _, gt in ordered], cfg.threshold_t)
        ratio_path = os.path.join(cfg.output_dir, "ratio_report" + suffix)
        wsl_path = os.path.join(cfg.output_dir, "wsl_report" + suffix)
        with open(ratio_path, "w", encoding="utf-8") as fh:
            fh.write(format_ratio_report(ratio))
        with open(wsl_path, "w", encoding="utf-8") as fh:
            fh.write(format_wsl_report(wsl))
        baselines = "uniform baseline" if not cfg.inject_constant else "uniform baseline (injected)"
        print(
            f"eval: {len(ordered)} images, region={cfg.region_kind}\n"
            f"  mean heatmap ratio {ratio.mean!r} (std {ratio.std!r}, "
            f"degenerate {ratio.degenerate_count})\n"
            f"  {baselines} {ratio.baseline_mean!r}\n"
            f"  wsl accuracy {wsl.accuracy!r} at threshold {cfg.threshold_t!r}\n"
            f"  reports: {ratio_path} {wsl_path}"
        )
    for image_id, error in failures:
        print(f"eval: FAILED {image_id}: {error}", file=sys.stderr)
    return 1 if failures else 0


def cmd_overlay(cfg):
    _require(cfg, "dataset_root", "container", "output_dir")
    dataset = Dataset.load(cfg.dataset_root)
    container = load_container(cfg.container)
    ids = list(cfg.ids) if cfg.ids is not None else dataset.ids()
    if not ids:
        print("overlay: no images selected, nothing to do")
        return 0
    spec = OverlaySpec(blend_alpha=cfg.alpha)
    os.makedirs(cfg.output_dir, exist_ok=True)

    def work(image_id):
        if image_id not in dataset.by_id:
            raise MissingDataError(f"id {image_id!r} not in dataset index")
        h = _heatmap_from_entry(container.entry(f"heatmap/{image_id}__{cfg.scheme}"))
        image_path = dataset.image_path(image_id)
        if not os.path.isfile(image_path):
            raise MissingDataError(f"source image {image_path!r} does not exist")
        out_path = os.path.join(cfg.output_dir, output_name(image_id, cfg.scheme))
        overlay_png(image_path, h, spec, out_path)
        return out_path

    results, failures = _pool_map(cfg.jobs, work, sorted(ids))
    print(f"overlay: wrote {len(results)} files to {cfg.output_dir}; {len(failures)} failed")
    for image_id, error in failures:
        print(f"overlay: FAILED {image_id}: {error}", file=sys.stderr)
    return 1 if failures else 0


COMMANDS = {"proxy": cmd_proxy, "cam": cmd_cam, "eval": cmd_eval, "overlay": cmd_overlay}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="proxycam",
        description="Proxy-based heatmaps for embedding networks, with localization metrics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value config file; flags override it")
        p.add_argument("--dataset-root", dest="dataset_root", help="dataset directory")
        p.add_argument("--container", help="tensor container file")
        p.add_argument("--scheme", choices=SCHEMES, help="proxy scheme (default mean)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--ids", help="comma-separated image ids (default: all indexed)")
        p.add_argument("--jobs", type=int, help="worker count (default 1)")

    p = sub.add_parser("proxy", help="compute and persist proxies")
    common(p)
    p.add_argument("--split", help="index split feeding the proxies (default all)")

    p = sub.add_parser("cam", help="compute heatmaps")
    common(p)
    p.add_argument("--path", choices=GRADIENT_PATHS, help="gradient path (default backprop)")
    p.add_argument("--proxies", help="proxy container from the proxy subcommand")

    p = sub.add_parser("eval", help="score heatmaps against annotations")
    common(p)
    p.add_argument("--threshold", type=float, help="wsl binarization threshold (default 0.2)")
    p.add_argument("--region", choices=REGIONS, help="ratio region kind (default bbox)")
    p.add_argument(
        "--inject-constant",
        dest="inject_constant",
        action="store_true",
        default=None,
        help="evaluate constant heatmaps instead of computed ones (baseline check)",
    )

    p = sub.add_parser("overlay", help="render blended heatmap PNGs")
    common(p)
    p.add_argument("--alpha", type=float, help="blend strength in [0, 1] (default 0.5)")

    return parser


def main(argv=None):
    level_name = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level_name, logging.WARNING))
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except (ValueError, OSError) as exc:
        print(f"proxycam {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
