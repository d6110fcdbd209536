"""Synthetic CT phantom: analytic body/bone geometry with implanted lesions.

The phantom is the desk-scale oracle for the whole pipeline. Everything is
analytic (ellipsoids, tubes, spheres) so ground truth is exact: lesion masks
are sphere rasterizations, measurements are true geometric diameters, and a
zero-noise phantom reproduces the configured HU values voxel for voxel.

Conventions: voxel (i, j, k) has its center at (i, j, k) * spacing in mm;
all _mm fields live in that frame. The bone is an elliptical tube along z so
lesions can sit on any slice, including the first and last.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .errors import ValidationError
from .recist import RecistMeasurement
from .volume import (
    BODY,
    LESION,
    SKELETON,
    LabelVolume,
    Volume3D,
    round_half_away,
)

LESION_KINDS = ("lytic", "blastic", "mixed")

_DEFAULT_OFFSETS = {"lytic": -280.0, "blastic": 500.0, "mixed": 280.0}


@dataclass(frozen=True)
class LesionSpec:
    lesion_id: str
    center_mm: tuple[float, float, float]
    radius_mm: float
    kind: str = "lytic"
    hu_offset: float | None = None  # None picks the per-kind default

    def __post_init__(self):
        if self.kind not in LESION_KINDS:
            raise ValidationError(f"unknown lesion kind {self.kind!r}")
        if self.radius_mm <= 0:
            raise ValidationError("lesion radius must be positive")
        off = self.offset
        if self.kind == "lytic" and off >= 0:
            raise ValidationError("lytic lesions need a negative HU offset")
        if self.kind == "blastic" and off <= 0:
            raise ValidationError("blastic lesions need a positive HU offset")
        if self.kind == "mixed" and off == 0:
            raise ValidationError("mixed lesions need a nonzero HU offset")

    @property
    def offset(self) -> float:
        return _DEFAULT_OFFSETS[self.kind] if self.hu_offset is None else self.hu_offset


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple[int, int, int] = (128, 128, 60)
    spacing: tuple[float, float, float] = (0.8, 0.8, 2.0)
    body_center_mm: tuple[float, float, float] = (50.8, 50.8, 59.0)
    body_semi_axes_mm: tuple[float, float, float] = (44.0, 44.0, 180.0)
    bone_center_mm: tuple[float, float] = (50.8, 50.8)  # tube axis (x, y)
    bone_radius_mm: tuple[float, float] = (26.0, 26.0)
    body_hu: float = 40.0
    bone_hu: float = 300.0
    air_hu: float = -1000.0
    noise_sigma_hu: float = 0.0
    rng_seed: int = 0
    lesions: tuple[LesionSpec, ...] = ()

    def __post_init__(self):
        if any(d < 1 for d in self.dims):
            raise ValidationError("phantom dims must be positive")
        if any(s <= 0 for s in self.spacing):
            raise ValidationError("phantom spacing must be positive")
        if self.noise_sigma_hu < 0:
            raise ValidationError("noise sigma must be >= 0")
        if not self.bone_hu > self.body_hu > self.air_hu:
            raise ValidationError("expected air HU < body HU < bone HU")
        ids = [les.lesion_id for les in self.lesions]
        if len(set(ids)) != len(ids):
            raise ValidationError("lesion ids must be unique")

    def to_json(self, path: str) -> None:
        doc = {
            "dims": list(self.dims),
            "spacing": list(self.spacing),
            "body_center_mm": list(self.body_center_mm),
            "body_semi_axes_mm": list(self.body_semi_axes_mm),
            "bone_center_mm": list(self.bone_center_mm),
            "bone_radius_mm": list(self.bone_radius_mm),
            "body_hu": self.body_hu,
            "bone_hu": self.bone_hu,
            "air_hu": self.air_hu,
            "noise_sigma_hu": self.noise_sigma_hu,
            "rng_seed": self.rng_seed,
            "lesions": [
                {
                    "lesion_id": les.lesion_id,
                    "center_mm": list(les.center_mm),
                    "radius_mm": les.radius_mm,
                    "kind": les.kind,
                    "hu_offset": les.hu_offset,
                }
                for les in self.lesions
            ],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_json(cls, path: str) -> "PhantomSpec":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        try:
            lesions = tuple(
                LesionSpec(
                    lesion_id=les["lesion_id"],
                    center_mm=tuple(les["center_mm"]),
                    radius_mm=les["radius_mm"],
                    kind=les.get("kind", "lytic"),
                    hu_offset=les.get("hu_offset"),
                )
                for les in doc.get("lesions", [])
            )
            kwargs = {
                key: tuple(doc[key]) if isinstance(doc[key], list) else doc[key]
                for key in doc
                if key != "lesions"
            }
            return cls(lesions=lesions, **kwargs)
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"bad phantom spec: {exc}") from None


@dataclass(frozen=True)
class PhantomResult:
    volume: Volume3D
    gt_labels: LabelVolume
    lesion_masks: tuple[np.ndarray, ...]  # bool, aligned with spec.lesions
    recist: tuple[RecistMeasurement, ...]


def _voxel_centers_mm(dims, spacing):
    axes = [np.arange(n, dtype=np.float64) * s for n, s in zip(dims, spacing)]
    return np.meshgrid(*axes, indexing="ij", sparse=True)


def _sphere_mask(dims, spacing, center_mm, radius_mm) -> np.ndarray:
    xs, ys, zs = _voxel_centers_mm(dims, spacing)
    d2 = (xs - center_mm[0]) ** 2 + (ys - center_mm[1]) ** 2 + (zs - center_mm[2]) ** 2
    return d2 <= radius_mm**2


def synthesize_recist(
    les: LesionSpec, dims, spacing, series_id: str = ""
) -> RecistMeasurement:
    """Exact geometric diameters of a sphere on its largest in-volume slice.

    The largest cross-section is the equator, so the measurement slice is
    the in-volume slice nearest the center; the two axes are the horizontal
    and vertical diameters of that circular cross-section, in pixel
    coordinates, crossing at the center.
    """
    cx, cy, cz = les.center_mm
    sx, sy, sz = spacing
    z_star = int(np.clip(round_half_away(np.float64(cz / sz)), 0, dims[2] - 1))
    dz = z_star * sz - cz
    if abs(dz) >= les.radius_mm:
        raise ValidationError(
            f"lesion {les.lesion_id!r} has no cross-section on any slice"
        )
    r_slice = math.sqrt(les.radius_mm**2 - dz * dz)
    px, py = cx / sx, cy / sy
    rx, ry = r_slice / sx, r_slice / sy
    return RecistMeasurement(
        lesion_id=les.lesion_id,
        series_id=series_id,
        slice_index=z_star,
        long_axis=((px - rx, py), (px + rx, py)),
        short_axis=((px, py - ry), (px, py + ry)),
    )


def generate_phantom(spec: PhantomSpec, series_id: str = "phantom") -> PhantomResult:
    """Render the phantom volume, exact GT labels, lesion masks and RECIST."""
    dims, spacing = spec.dims, spec.spacing
    xs, ys, zs = _voxel_centers_mm(dims, spacing)

    bc, ba = spec.body_center_mm, spec.body_semi_axes_mm
    body = (
        ((xs - bc[0]) / ba[0]) ** 2
        + ((ys - bc[1]) / ba[1]) ** 2
        + ((zs - bc[2]) / ba[2]) ** 2
    ) <= 1.0
    tube = (
        ((xs - spec.bone_center_mm[0]) / spec.bone_radius_mm[0]) ** 2
        + ((ys - spec.bone_center_mm[1]) / spec.bone_radius_mm[1]) ** 2
    ) <= 1.0
    bone = tube & body
    if not body.any():
        raise ValidationError("body ellipsoid misses the volume entirely")

    hu = np.full(dims, spec.air_hu, dtype=np.float64, order="F")
    hu[body] = spec.body_hu
    hu[bone] = spec.bone_hu

    lesion_masks = []
    recist = []
    for les in spec.lesions:
        mask = _sphere_mask(dims, spacing, les.center_mm, les.radius_mm)
        if not mask.any():
            raise ValidationError(f"lesion {les.lesion_id!r} rasterizes to nothing")
        if (mask & ~bone).any():
            raise ValidationError(
                f"lesion {les.lesion_id!r} extends outside the bone region"
            )
        if les.kind == "mixed":
            core = _sphere_mask(dims, spacing, les.center_mm, les.radius_mm / 2.0)
            hu[mask] = spec.bone_hu + abs(les.offset)  # blastic shell
            hu[core] = spec.bone_hu - abs(les.offset)  # lytic core
        else:
            hu[mask] = spec.bone_hu + les.offset
        lesion_masks.append(mask)
        recist.append(synthesize_recist(les, dims, spacing, series_id))

    if spec.noise_sigma_hu > 0:
        rng = np.random.default_rng(spec.rng_seed)
        hu = hu + rng.normal(0.0, spec.noise_sigma_hu, size=dims)

    data = round_half_away(hu).astype(np.int16)
    volume = Volume3D(dims=dims, spacing=spacing, origin=(0.0, 0.0, 0.0),
                      data=np.asfortranarray(data))

    labels = np.zeros(dims, dtype=np.uint8, order="F")
    labels[body] = BODY
    labels[bone] = SKELETON
    for mask in lesion_masks:
        labels[mask] = LESION
    gt_labels = LabelVolume(dims=dims, spacing=spacing, origin=(0.0, 0.0, 0.0),
                            data=labels)
    return PhantomResult(
        volume=volume,
        gt_labels=gt_labels,
        lesion_masks=tuple(lesion_masks),
        recist=tuple(recist),
    )


def default_phantom_spec(
    num_lesions: int = 10, rng_seed: int = 0, noise_sigma_hu: float = 3.0
) -> PhantomSpec:
    """A ready-to-run spec with well-separated lesions of all three kinds.

    Lesions alternate lytic / blastic / mixed around two rings inside the
    bone tube, far enough apart that neither the spheres nor their weak
    3-slice labels can touch.
    """
    base = PhantomSpec(noise_sigma_hu=noise_sigma_hu, rng_seed=rng_seed)
    if num_lesions < 0:
        raise ValidationError("num_lesions must be >= 0")
    if num_lesions > 12:
        raise ValidationError("default layout supports at most 12 lesions")
    cx, cy = base.bone_center_mm
    nz_mm = base.dims[2] * base.spacing[2]
    ring_z = (0.3 * nz_mm, 0.7 * nz_mm)
    lesions = []
    for i in range(num_lesions):
        ring = i % 2
        slot = i // 2  # 6 slots per ring
        angle = 2.0 * math.pi * slot / 6.0 + (0.3 if ring else 0.0)
        radius = 4.5
        lesions.append(
            LesionSpec(
                lesion_id=f"L{i + 1:02d}",
                center_mm=(
                    cx + 16.0 * math.cos(angle),
                    cy + 16.0 * math.sin(angle),
                    ring_z[ring],
                ),
                radius_mm=radius,
                kind=LESION_KINDS[i % 3],
            )
        )
    return replace(base, lesions=tuple(lesions))


def perturb_predictions(
    gt_masks,
    mode: str = "perfect",
    k: int = 0,
    rng_seed: int = 0,
) -> np.ndarray:
    """Derive a prediction mask from GT lesion masks for controlled scoring.

    Modes: perfect (union as-is), dilate / erode (radius-1 ball per mask),
    drop (remove k whole lesions), add_spurious (add k blobs built disjoint
    from GT and from each other, so they score as exactly k false
    positives).
    """
    gt_masks = [np.asarray(m, dtype=bool) for m in gt_masks]
    if not gt_masks:
        raise ValidationError("perturb_predictions needs at least one GT mask")
    shape = gt_masks[0].shape
    if any(m.shape != shape for m in gt_masks):
        raise ValidationError("GT masks must share one shape")
    rng = np.random.default_rng(rng_seed)
    ball = ndimage.generate_binary_structure(3, 1)
    cube = np.ones((3, 3, 3), dtype=bool)  # 26-neighborhood, for gap keeping

    if mode == "perfect":
        out = np.zeros(shape, dtype=bool)
        for m in gt_masks:
            out |= m
        return out
    if mode in ("dilate", "erode"):
        op = ndimage.binary_dilation if mode == "dilate" else ndimage.binary_erosion
        out = np.zeros(shape, dtype=bool)
        for m in gt_masks:
            out |= op(m, structure=ball)
        return out
    if mode == "drop":
        if not 0 <= k <= len(gt_masks):
            raise ValidationError(
                f"cannot drop {k} of {len(gt_masks)} components"
            )
        keep = np.ones(len(gt_masks), dtype=bool)
        keep[rng.choice(len(gt_masks), size=k, replace=False)] = False
        out = np.zeros(shape, dtype=bool)
        for m, kept in zip(gt_masks, keep):
            if kept:
                out |= m
        return out
    if mode == "add_spurious":
        if k < 0:
            raise ValidationError("k must be >= 0")
        out = np.zeros(shape, dtype=bool)
        for m in gt_masks:
            out |= m
        # Forbid anything 26-adjacent to existing foreground so each blob
        # is its own component and overlaps no GT.
        forbidden = ndimage.binary_dilation(out, structure=cube)
        side = 2
        for _ in range(k):
            placed = False
            for _attempt in range(10000):
                corner = [int(rng.integers(0, d - side + 1)) for d in shape]
                x, y, z = corner
                region = (slice(x, x + side), slice(y, y + side), slice(z, z + side))
                if not forbidden[region].any():
                    blob = np.zeros(shape, dtype=bool)
                    blob[region] = True
                    out |= blob
                    forbidden |= ndimage.binary_dilation(blob, structure=cube)
                    placed = True
                    break
            if not placed:
                raise ValidationError(
                    "no room left to place a disjoint spurious component"
                )
        return out
    raise ValidationError(f"unknown perturbation mode {mode!r}")
