"""Volume containers, NIfTI I/O, and Hounsfield-unit windowing.

Arrays are indexed ``[x, y, z]`` (shape ``(nx, ny, nz)``) and held in
Fortran order so the in-memory layout is x-fastest, matching the NIfTI
on-disk order with no transposes at I/O time. Volumes are immutable by
convention: no operation here mutates an input array.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nifti
from .errors import GeometryMismatchError, ValidationError

BACKGROUND, BODY, SKELETON, LESION = 0, 1, 2, 3
LABEL_CODES = (BACKGROUND, BODY, SKELETON, LESION)


def round_half_away(a):
    """Round to nearest integer, halves away from zero (radiology convention)."""
    a = np.asarray(a, dtype=np.float64)
    return np.sign(a) * np.floor(np.abs(a) + 0.5)


def _check_geometry(dims, spacing, origin, data, expected_dtype):
    nx, ny, nz = dims
    if nx < 1 or ny < 1 or nz < 1:
        raise ValidationError(f"non-positive dims {dims}")
    if any(s <= 0 for s in spacing):
        raise ValidationError(f"spacing must be strictly positive, got {spacing}")
    if len(origin) != 3:
        raise ValidationError(f"origin must have 3 components, got {origin}")
    if data.shape != tuple(dims):
        raise ValidationError(f"data shape {data.shape} does not match dims {dims}")
    if data.dtype != expected_dtype:
        raise ValidationError(f"expected {expected_dtype} data, got {data.dtype}")


@dataclass(frozen=True)
class Volume3D:
    """A 3D grid of Hounsfield units with voxel geometry.

    data: int16 array of shape dims, indexed [x, y, z].
    spacing: mm per voxel along (x, y, z); origin: mm offset of voxel (0,0,0).
    """

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float]
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        _check_geometry(self.dims, self.spacing, self.origin, self.data, np.int16)

    def same_geometry(self, other, tol: float = 1e-6) -> bool:
        return (
            self.dims == other.dims
            and all(abs(a - b) <= tol for a, b in zip(self.spacing, other.spacing))
            and all(abs(a - b) <= tol for a, b in zip(self.origin, other.origin))
        )


@dataclass(frozen=True)
class LabelVolume:
    """Voxelwise class codes sharing the geometry of a source Volume3D.

    Codes: 0 background, 1 body, 2 skeleton, 3 lesion.
    """

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float]
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        _check_geometry(self.dims, self.spacing, self.origin, self.data, np.uint8)
        if self.data.size and self.data.max() > LESION:
            bad = sorted(int(v) for v in np.unique(self.data) if v > LESION)
            raise ValidationError(f"label codes outside {{0..3}}: {bad}")

    @classmethod
    def from_mask(cls, mask: np.ndarray, like, code: int = LESION) -> "LabelVolume":
        """Binary mask -> LabelVolume with `code` where the mask is set."""
        data = np.where(np.asarray(mask, bool), np.uint8(code), np.uint8(0))
        return cls(like.dims, like.spacing, like.origin, np.asfortranarray(data))

    def same_geometry(self, other, tol: float = 1e-6) -> bool:
        return Volume3D.same_geometry(self, other, tol)


@dataclass(frozen=True)
class WindowSpec:
    """An HU display window given as (center, width)."""

    center: float = 50.0
    width: float = 450.0

    def __post_init__(self):
        if self.width <= 0:
            raise ValidationError(f"window width must be > 0, got {self.width}")


def read_volume(path: str) -> Volume3D:
    """Read a NIfTI-1 file as a Hounsfield-unit volume.

    Float payloads (and any scl_slope/scl_inter rescale) are rounded
    half-away-from-zero to int16; values outside the int16 range are an
    error rather than silently wrapped.
    """
    raw = nifti.read_nifti(path)
    data = raw.data
    if data.dtype.kind == "f":
        data = round_half_away(data)
    if data.size and (data.min() < -32768 or data.max() > 32767):
        raise ValidationError(
            f"{path}: values outside the int16 HU storage range "
            f"[{float(data.min())}, {float(data.max())}]"
        )
    data = np.asfortranarray(data.astype(np.int16))
    data.setflags(write=False)
    return Volume3D(raw.dims, raw.spacing, raw.origin, data)


def read_label_volume(path: str) -> LabelVolume:
    """Read a NIfTI-1 file as a class-coded label volume (codes 0..3)."""
    raw = nifti.read_nifti(path)
    data = raw.data
    if data.dtype.kind == "f":
        data = round_half_away(data)
    if data.size and (data.min() < 0 or data.max() > LESION):
        raise ValidationError(f"{path}: values outside label code range {{0..3}}")
    data = np.asfortranarray(data.astype(np.uint8))
    data.setflags(write=False)
    return LabelVolume(raw.dims, raw.spacing, raw.origin, data)


def write_volume(v: Volume3D | LabelVolume, path: str) -> None:
    """Write a volume as NIfTI-1 (int16 for HU volumes, uint8 for labels)."""
    nifti.write_nifti(path, v.data, v.spacing, v.origin)


def window_to_u8(v: Volume3D, w: WindowSpec = WindowSpec()) -> np.ndarray:
    """Map HU linearly onto [0, 255] display gray levels.

    [center - width/2, center + width/2] maps to [0, 255]; out-of-window
    values clamp to the endpoints; rounding is half-away-from-zero.
    Returns a uint8 array with the same shape (geometry is unchanged,
    carry it from the source volume).
    """
    lo = w.center - w.width / 2.0
    t = (v.data.astype(np.float64) - lo) * (255.0 / w.width)
    t = np.clip(t, 0.0, 255.0)
    out = round_half_away(t).astype(np.uint8)
    return np.asfortranarray(out)


def extract_slice(v, z: int) -> np.ndarray:
    """Copy of the (nx, ny) axial plane at index z.

    Accepts a Volume3D/LabelVolume or a bare 3D array (e.g. the output of
    window_to_u8).
    """
    data = v if isinstance(v, np.ndarray) else v.data
    nz = data.shape[2]
    if not 0 <= z < nz:
        raise ValidationError(f"slice index {z} out of range [0, {nz})")
    return data[:, :, z].copy()


def require_same_geometry(a, b, what: str = "volumes") -> None:
    """Raise GeometryMismatchError unless a and b share dims/spacing/origin."""
    if not (
        a.dims == b.dims
        and all(abs(x - y) <= 1e-6 for x, y in zip(a.spacing, b.spacing))
        and all(abs(x - y) <= 1e-6 for x, y in zip(a.origin, b.origin))
    ):
        raise GeometryMismatchError(
            f"{what} do not share geometry: dims {a.dims} vs {b.dims}, "
            f"spacing {a.spacing} vs {b.spacing}"
        )
