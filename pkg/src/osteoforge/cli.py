"""Command-line front end for the measurement-to-weak-label workflow.

Subcommands: weaklabel (measurements -> merged label volume), eval
(detection scoring), phantom (synthetic test data), overlay (QC images),
baseline (rule-based prediction mask).

Exit codes are a stable contract: 0 success, 1 input validation failure,
2 geometry mismatch, 3 internal error. Failures emit one JSON object on
stderr and delete any partially written outputs. Set OSTEOFORGE_LOG to a
logging level name (DEBUG, INFO, ...) to control verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import GeometryMismatchError, OsteoforgeError, ValidationError
from .nifti import write_nifti
from .evaluate import (
    baseline_predict,
    connected_components,
    extract_lesion_components,
    match_detections,
    write_report,
)
from .grabcut import GrabCutParams, grabcut_segment
from .overlay import write_overlays
from .phantom import PhantomSpec, default_phantom_spec, generate_phantom
from .recist import parse_lesion_records, seed_geometry, write_lesion_records
from .volume import (
    LESION,
    SKELETON,
    LabelVolume,
    Volume3D,
    WindowSpec,
    extract_slice,
    read_label_volume,
    read_volume,
    require_same_geometry,
    window_to_u8,
    write_volume,
)
from .weaklabel import (
    build_weak_mask,
    fallback_body_mask,
    fallback_skeleton_mask,
    merge_labels,
)

log = logging.getLogger("osteoforge")


@dataclass(frozen=True)
class PipelineConfig:
    window: WindowSpec = WindowSpec()
    grabcut: GrabCutParams = GrabCutParams()
    connectivity: int = 26
    workers: int = 1
    seed: int = 0
    min_overlap: float = 0.0

    def __post_init__(self):
        if self.workers < 1:
            raise ValidationError("worker count must be >= 1")
        if self.connectivity not in (6, 18, 26):
            raise ValidationError("connectivity must be 6, 18 or 26")


def _config_from_file(path: str) -> PipelineConfig:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        window = WindowSpec(**doc.get("window", {}))
        grabcut = GrabCutParams(**doc.get("grabcut", {}))
        extras = {
            k: doc[k]
            for k in ("connectivity", "workers", "seed", "min_overlap")
            if k in doc
        }
        return PipelineConfig(window=window, grabcut=grabcut, **extras)
    except TypeError as exc:
        raise ValidationError(f"bad config file {path}: {exc}") from None


def load_config(args: argparse.Namespace) -> PipelineConfig:
    """Resolve the effective config: flags beat the file, the file beats defaults."""
    config = PipelineConfig()
    if getattr(args, "config", None):
        config = _config_from_file(args.config)
    window = config.window
    if getattr(args, "window_center", None) is not None:
        window = replace(window, center=args.window_center)
    if getattr(args, "window_width", None) is not None:
        window = replace(window, width=args.window_width)
    updates = {"window": window}
    for flag in ("connectivity", "workers", "seed", "min_overlap"):
        value = getattr(args, flag, None)
        if value is not None:
            updates[flag] = value
    return replace(config, **updates)


class _OutputTracker:
    """Remembers files this run created so failures can remove them."""

    def __init__(self):
        self.paths: list[str] = []

    def claim(self, path: str) -> str:
        self.paths.append(path)
        return path

    def discard_all(self) -> None:
        for path in self.paths:
            try:
                if os.path.isfile(path):
                    os.remove(path)
            except OSError:
                log.warning("could not remove partial output %s", path)


def _read_mask_volume(path: str, like: Volume3D, what: str) -> np.ndarray:
    mask_vol = read_label_volume(path)
    require_same_geometry(like, mask_vol, what)
    return mask_vol.data > 0


def _lesion_seed(base_seed: int, lesion_id: str) -> int:
    """Stable per-lesion RNG seed, independent of lesion order in the CSV."""
    stream = np.random.SeedSequence((base_seed, zlib.crc32(lesion_id.encode())))
    return int(stream.generate_state(1)[0])


def _segment_one(windowed, measurement, volume, config):
    geometry = seed_geometry(measurement, volume.dims[:2])
    slice_u8 = extract_slice(windowed, geometry.slice_index)
    mask = grabcut_segment(
        slice_u8,
        geometry,
        config.grabcut,
        rng_seed=_lesion_seed(config.seed, measurement.lesion_id),
    )
    return build_weak_mask(
        mask, geometry, volume.dims[2], lesion_id=measurement.lesion_id
    )


def cmd_weaklabel(args, config: PipelineConfig, out: _OutputTracker) -> int:
    volume = read_volume(args.volume)
    measurements = parse_lesion_records(args.lesions)
    for m in measurements:
        if not 0 <= m.slice_index < volume.dims[2]:
            raise ValidationError(
                f"lesion {m.lesion_id!r}: slice {m.slice_index} outside volume "
                f"with {volume.dims[2]} slices"
            )

    if args.body_mask:
        body = _read_mask_volume(args.body_mask, volume, "body mask")
    else:
        log.warning("no body mask supplied; falling back to threshold extraction")
        body = fallback_body_mask(volume)
    if args.skeleton_mask:
        skeleton = _read_mask_volume(args.skeleton_mask, volume, "skeleton mask")
    else:
        log.warning("no skeleton mask supplied; falling back to threshold extraction")
        skeleton = fallback_skeleton_mask(volume, body)

    windowed = window_to_u8(volume, config.window)
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        weak_masks = list(
            pool.map(lambda m: _segment_one(windowed, m, volume, config), measurements)
        )

    labels = merge_labels(body, skeleton, weak_masks, volume)
    write_volume(labels, out.claim(args.out))
    for wm in weak_masks:
        voxels = sum(int(wm.footprint(z).sum()) for z in wm.z_extent)
        zspan = f"{wm.z_extent[0]}-{wm.z_extent[-1]}"
        print(f"{wm.lesion_id} voxels={voxels} slices={zspan}")
    log.info("wrote %s with %d lesions", args.out, len(weak_masks))
    return 0


def _lesion_mask_from_file(path: str) -> tuple[np.ndarray, LabelVolume]:
    """Read a mask volume; full label volumes contribute their lesion class.

    A file whose voxels only take values {0, 1} is a plain binary mask;
    anything with higher codes is treated as a label volume and reduced to
    its lesion-class voxels.
    """
    vol = read_label_volume(path)
    if vol.data.max() > 1:
        return vol.data == LESION, vol
    return vol.data > 0, vol


def cmd_eval(args, config: PipelineConfig, out: _OutputTracker) -> int:
    gt_mask, gt_vol = _lesion_mask_from_file(args.gt)
    pred_mask, pred_vol = _lesion_mask_from_file(args.pred)
    require_same_geometry(gt_vol, pred_vol, "ground truth and prediction")

    gt = connected_components(gt_mask, config.connectivity)
    pred = connected_components(pred_mask, config.connectivity)
    series_id = args.series_id or ""
    report = match_detections(gt, pred, config.min_overlap, series_id=series_id)
    write_report(report, out.claim(args.out))

    def pct(x):
        return "n/a" if x is None else f"{100.0 * x:.1f}"

    print(
        f"tp={report.tp} fp={report.fp} fn={report.fn} "
        f"precision={pct(report.precision)} recall={pct(report.recall)}"
    )
    return 0


def cmd_phantom(args, config: PipelineConfig, out: _OutputTracker) -> int:
    if args.spec:
        spec = PhantomSpec.from_json(args.spec)
    else:
        spec = default_phantom_spec(num_lesions=args.num_lesions,
                                    rng_seed=config.seed)
    result = generate_phantom(spec)
    os.makedirs(args.out, exist_ok=True)

    write_volume(result.volume, out.claim(os.path.join(args.out, "volume.nii.gz")))
    write_volume(result.gt_labels, out.claim(os.path.join(args.out, "labels.nii.gz")))
    # One file for all per-lesion masks: voxel value = 1-based lesion index,
    # which can exceed the merged-label code range, so write it raw.
    ids = np.zeros(spec.dims, dtype=np.uint8, order="F")
    for index, mask in enumerate(result.lesion_masks, start=1):
        ids[mask] = index
    write_nifti(
        out.claim(os.path.join(args.out, "lesion_masks.nii.gz")),
        ids, spec.spacing, (0.0, 0.0, 0.0),
    )
    write_lesion_records(
        list(result.recist), out.claim(os.path.join(args.out, "lesions.csv"))
    )
    print(f"phantom written to {args.out} ({len(spec.lesions)} lesions)")
    return 0


def cmd_overlay(args, config: PipelineConfig, out: _OutputTracker) -> int:
    volume = read_volume(args.volume)
    labels = read_label_volume(args.labels)
    written = write_overlays(volume, labels, args.out, config.window)
    for path in written:
        out.claim(path)
    print(f"{len(written)} overlay images written to {args.out}")
    return 0


def cmd_baseline(args, config: PipelineConfig, out: _OutputTracker) -> int:
    volume = read_volume(args.volume)
    if args.labels:
        labels = read_label_volume(args.labels)
        require_same_geometry(volume, labels, "volume and labels")
        skeleton = labels.data >= SKELETON
    else:
        log.warning("no labels supplied; using fallback skeleton extraction")
        skeleton = fallback_skeleton_mask(volume, fallback_body_mask(volume))
    prediction = baseline_predict(volume, skeleton)
    write_volume(
        LabelVolume.from_mask(prediction, volume, code=LESION),
        out.claim(args.out),
    )
    n = len(connected_components(prediction, config.connectivity))
    print(f"baseline prediction written to {args.out} ({n} components)")
    return 0


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--window-center", type=float, default=None)
    p.add_argument("--window-width", type=float, default=None)
    p.add_argument("--connectivity", type=int, default=None, choices=(6, 18, 26))
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--min-overlap", type=float, default=None,
                   help="minimum overlap fraction of a GT component to match")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="osteoforge",
        description="Weak 3D lesion labels from 2D lesion measurements, "
                    "plus overlap-based detection scoring.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("weaklabel", help="measurements -> merged label volume")
    p.add_argument("volume", help="CT volume (NIfTI)")
    p.add_argument("lesions", help="lesion measurement CSV")
    p.add_argument("--body-mask", help="body mask NIfTI (fallback if absent)")
    p.add_argument("--skeleton-mask", help="skeleton mask NIfTI (fallback if absent)")
    p.add_argument("--out", required=True, help="output label volume path")
    _add_common_flags(p)
    p.set_defaults(func=cmd_weaklabel)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("gt", help="ground-truth label or mask volume")
    p.add_argument("pred", help="prediction label or mask volume")
    p.add_argument("--out", required=True, help="output report JSON path")
    p.add_argument("--series-id", default="")
    _add_common_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("phantom", help="generate synthetic test data")
    p.add_argument("--spec", help="phantom spec JSON (default layout if absent)")
    p.add_argument("--num-lesions", type=int, default=10)
    p.add_argument("--out", required=True, help="output directory")
    _add_common_flags(p)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("overlay", help="render QC overlay images")
    p.add_argument("volume", help="CT volume (NIfTI)")
    p.add_argument("labels", help="label volume (NIfTI)")
    p.add_argument("--out", required=True, help="output directory")
    _add_common_flags(p)
    p.set_defaults(func=cmd_overlay)

    p = sub.add_parser("baseline", help="rule-based prediction mask")
    p.add_argument("volume", help="CT volume (NIfTI)")
    p.add_argument("--labels", help="label volume supplying the skeleton mask")
    p.add_argument("--out", required=True, help="output prediction mask path")
    _add_common_flags(p)
    p.set_defaults(func=cmd_baseline)

    return parser


def _emit_error(exc: Exception, code: int) -> None:
    doc = {"error": str(exc), "type": type(exc).__name__, "exit_code": code}
    print(json.dumps(doc), file=sys.stderr)


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("OSTEOFORGE_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    out = _OutputTracker()
    try:
        config = load_config(args)
        return args.func(args, config, out)
    except GeometryMismatchError as exc:
        out.discard_all()
        _emit_error(exc, 2)
        return 2
    except (OsteoforgeError, OSError, json.JSONDecodeError) as exc:
        out.discard_all()
        _emit_error(exc, 1)
        return 1
    except Exception as exc:  # noqa: BLE001 - contractual catch-all
        out.discard_all()
        _emit_error(exc, 3)
        return 3


if __name__ == "__main__":
    sys.exit(main())
