"""Component extraction and overlap-based detection scoring.

A ground-truth component counts as detected (TP) when it shares at least
one voxel with any predicted component; a predicted component that touches
no ground truth is a false positive. Precision is TP/(TP+FP), which mixes
GT-counted hits with prediction-counted false alarms; that asymmetric
arithmetic is deliberate and matches how the counts in this protocol are
tallied (one prediction overlapping two GT components yields 2 TPs and no
FP). Undefined ratios are reported as None, never coerced to 0 or 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import GeometryMismatchError, ValidationError
from .volume import LESION, LabelVolume, Volume3D

_CONNECTIVITY_RANK = {6: 1, 18: 2, 26: 3}


@dataclass(frozen=True)
class Component:
    id: int
    size: int
    bbox: tuple[int, int, int, int, int, int]  # inclusive (x0,y0,z0,x1,y1,z1)
    centroid: tuple[float, float, float]


@dataclass(frozen=True)
class ComponentSet:
    """Foreground partition: labels[v] == 0 for background, else component id.

    Ids run 1..N in order of each component's first voxel (smallest (x,y,z)
    lexicographically), so the labeling is deterministic.
    """

    labels: np.ndarray  # int32, shape (nx, ny, nz)
    components: tuple[Component, ...]

    def __len__(self) -> int:
        return len(self.components)

    @property
    def foreground(self) -> np.ndarray:
        return self.labels > 0


def connected_components(mask: np.ndarray, connectivity: int = 26) -> ComponentSet:
    """Partition a binary 3D mask into components under 6/18/26 adjacency."""
    if connectivity not in _CONNECTIVITY_RANK:
        raise ValidationError(f"connectivity must be 6, 18 or 26, got {connectivity}")
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 3:
        raise ValidationError("connected_components needs a 3D mask")
    structure = ndimage.generate_binary_structure(3, _CONNECTIVITY_RANK[connectivity])
    raw, n = ndimage.label(mask, structure=structure)
    labels = np.zeros(mask.shape, dtype=np.int32)
    if n == 0:
        return ComponentSet(labels=labels, components=())

    # Re-id components by their first voxel in C-order, which is the
    # lexicographically smallest (x, y, z). ndimage.label scans in C-order
    # too, but that is an implementation detail we do not rely on.
    flat = raw.ravel(order="C")
    first = np.full(n + 1, flat.size, dtype=np.int64)
    nz = np.flatnonzero(flat)
    # reversed so earlier indices overwrite later ones
    first[flat[nz[::-1]]] = nz[::-1]
    order = np.argsort(first[1:], kind="stable")  # old id -> rank
    remap = np.zeros(n + 1, dtype=np.int32)
    remap[1 + order] = np.arange(1, n + 1, dtype=np.int32)
    labels = remap[raw]

    sizes = np.bincount(labels.ravel(), minlength=n + 1)
    slices = ndimage.find_objects(labels)
    centroids = ndimage.center_of_mass(mask, labels, index=range(1, n + 1))
    components = []
    for cid in range(1, n + 1):
        sl = slices[cid - 1]
        bbox = (sl[0].start, sl[1].start, sl[2].start,
                sl[0].stop - 1, sl[1].stop - 1, sl[2].stop - 1)
        cx, cy, cz = centroids[cid - 1]
        components.append(Component(id=cid, size=int(sizes[cid]), bbox=bbox,
                                    centroid=(float(cx), float(cy), float(cz))))
    return ComponentSet(labels=labels, components=tuple(components))


@dataclass(frozen=True)
class DetectionReport:
    n_gt: int
    n_pred: int
    tp: int
    fp: int
    fn: int
    precision: float | None
    recall: float | None
    matches: tuple[tuple[int, tuple[int, ...]], ...]  # (gt_id, matched pred ids)
    series_id: str = ""

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int, *, n_gt: int | None = None,
                    n_pred: int | None = None, series_id: str = "",
                    matches: tuple = ()) -> "DetectionReport":
        """Build a report from raw counts, deriving the ratio metrics."""
        if min(tp, fp, fn) < 0:
            raise ValidationError("detection counts must be non-negative")
        if n_gt is None:
            n_gt = tp + fn
        elif n_gt != tp + fn:
            raise ValidationError(f"n_gt={n_gt} inconsistent with tp+fn={tp + fn}")
        if n_pred is None:
            n_pred = tp + fp
        elif fp > n_pred:
            raise ValidationError(f"fp={fp} exceeds n_pred={n_pred}")
        precision = tp / (tp + fp) if tp + fp > 0 else None
        recall = tp / (tp + fn) if tp + fn > 0 else None
        return cls(n_gt=n_gt, n_pred=n_pred, tp=tp, fp=fp, fn=fn,
                   precision=precision, recall=recall,
                   matches=tuple(matches), series_id=series_id)


def match_detections(
    gt: ComponentSet,
    pred: ComponentSet,
    min_overlap_fraction: float = 0.0,
    series_id: str = "",
) -> DetectionReport:
    """Score predicted components against ground-truth components.

    A (gt, pred) pair matches when their intersection is at least one voxel
    and at least min_overlap_fraction of the gt component's size. TPs are
    matched gt components, FNs the unmatched ones, FPs the predicted
    components that match nothing.
    """
    if gt.labels.shape != pred.labels.shape:
        raise GeometryMismatchError(
            f"label map shapes differ: {gt.labels.shape} vs {pred.labels.shape}"
        )
    if not 0.0 <= min_overlap_fraction <= 1.0:
        raise ValidationError("min_overlap_fraction must lie in [0, 1]")

    n_gt, n_pred = len(gt), len(pred)
    both = (gt.labels > 0) & (pred.labels > 0)
    pair_ids = gt.labels[both].astype(np.int64) * (n_pred + 1) + pred.labels[both]
    overlap = np.bincount(pair_ids, minlength=(n_gt + 1) * (n_pred + 1))

    matches = []
    matched_preds: set[int] = set()
    tp = 0
    for g in gt.components:
        threshold = max(1.0, min_overlap_fraction * g.size)
        hits = tuple(
            p.id for p in pred.components
            if overlap[g.id * (n_pred + 1) + p.id] >= threshold
        )
        matches.append((g.id, hits))
        matched_preds.update(hits)
        if hits:
            tp += 1
    fp = n_pred - len(matched_preds)
    fn = n_gt - tp
    return DetectionReport.from_counts(
        tp, fp, fn, n_gt=n_gt, n_pred=n_pred, series_id=series_id,
        matches=tuple(matches),
    )


def extract_lesion_components(labels: LabelVolume) -> np.ndarray:
    """Binary mask of lesion-class voxels, ready for connected_components."""
    return labels.data == LESION


def baseline_predict(volume: Volume3D, skeleton: np.ndarray) -> np.ndarray:
    """Non-learned lesion candidate mask from intensity rules.

    Inside the skeleton, flag voxels far from normal trabecular bone
    (brighter than 500 HU or darker than 80 HU), despeckle with an
    opening, and drop components under 10 voxels.
    """
    if skeleton.shape != volume.dims:
        raise GeometryMismatchError("skeleton mask shape does not match the volume")
    candidates = skeleton.astype(bool) & (
        (volume.data > 500) | (volume.data < 80)
    )
    opened = ndimage.binary_opening(
        candidates, structure=ndimage.generate_binary_structure(3, 1)
    )
    labeled, n = ndimage.label(opened, structure=ndimage.generate_binary_structure(3, 3))
    if n == 0:
        return opened
    sizes = np.bincount(labeled.ravel())
    keep = sizes >= 10
    keep[0] = False
    return keep[labeled]


def write_report(report: DetectionReport, path) -> None:
    doc = {
        "series_id": report.series_id,
        "n_gt": report.n_gt,
        "n_pred": report.n_pred,
        "tp": report.tp,
        "fp": report.fp,
        "fn": report.fn,
        "precision": report.precision,
        "recall": report.recall,
        "matches": [
            {"gt": gt_id, "preds": list(preds)} for gt_id, preds in report.matches
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def read_report(path) -> DetectionReport:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        return DetectionReport(
            n_gt=doc["n_gt"], n_pred=doc["n_pred"],
            tp=doc["tp"], fp=doc["fp"], fn=doc["fn"],
            precision=doc["precision"], recall=doc["recall"],
            matches=tuple((m["gt"], tuple(m["preds"])) for m in doc["matches"]),
            series_id=doc.get("series_id", ""),
        )
    except KeyError as exc:
        raise ValidationError(f"report JSON missing field {exc}") from None
