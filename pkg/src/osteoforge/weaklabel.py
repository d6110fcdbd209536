"""Lift a single-slice lesion mask into a weak 3-slice volume label.

The measured slice keeps the precise segmentation mask; the slices directly
above and below get the filled measurement bbox as a coarse stand-in, since
the lesion usually persists there but its outline is unknown. The stack is
clamped at the volume edges. Lesion labels are merged with body and skeleton
masks into a single label volume, lesion taking precedence over skeleton,
skeleton over body.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ValidationError
from .recist import SeedGeometry
from .volume import BODY, LESION, SKELETON, LabelVolume, Volume3D


@dataclass(frozen=True)
class WeakLesionMask:
    """Sparse per-lesion weak label: one precise slice plus bbox neighbors."""

    lesion_id: str
    center_slice: int
    center_mask: np.ndarray  # bool (nx, ny), the segmented measured slice
    bbox: tuple[int, int, int, int]  # inclusive (x0, y0, x1, y1)
    z_extent: tuple[int, ...]  # slice indices carrying any label, ascending

    def footprint(self, z: int) -> np.ndarray:
        """Label footprint on slice z (all False off the extent)."""
        nx, ny = self.center_mask.shape
        out = np.zeros((nx, ny), dtype=bool)
        if z == self.center_slice:
            out |= self.center_mask
        elif z in self.z_extent:
            x0, y0, x1, y1 = self.bbox
            out[x0 : x1 + 1, y0 : y1 + 1] = True
        return out

    def paint(self, labels: np.ndarray, code: int = LESION) -> None:
        """Write this lesion's footprints into a (nx, ny, nz) label array."""
        for z in self.z_extent:
            labels[:, :, z][self.footprint(z)] = code


def build_weak_mask(
    center_mask: np.ndarray,
    geometry: SeedGeometry,
    num_slices: int,
    lesion_id: str = "",
) -> WeakLesionMask:
    """Assemble the 3-slice weak mask around a segmented measurement slice."""
    if not center_mask.any():
        raise ValidationError(
            f"segmentation for lesion {lesion_id!r} produced an empty mask"
        )
    z = geometry.slice_index
    if not 0 <= z < num_slices:
        raise ValidationError(
            f"measurement slice {z} outside volume with {num_slices} slices"
        )
    extent = tuple(zz for zz in (z - 1, z, z + 1) if 0 <= zz < num_slices)
    return WeakLesionMask(
        lesion_id=lesion_id,
        center_slice=z,
        center_mask=center_mask.astype(bool),
        bbox=geometry.bbox,
        z_extent=extent,
    )


def merge_labels(
    body_mask: np.ndarray,
    skeleton_mask: np.ndarray,
    lesions: list[WeakLesionMask],
    like: Volume3D,
) -> LabelVolume:
    """Combine region masks and weak lesion masks into one label volume.

    Precedence where masks overlap: lesion > skeleton > body > background.
    """
    if body_mask.shape != like.dims or skeleton_mask.shape != like.dims:
        raise ValidationError("region mask shape does not match the volume")
    labels = np.zeros(like.dims, dtype=np.uint8, order="F")
    labels[body_mask.astype(bool)] = BODY
    labels[skeleton_mask.astype(bool)] = SKELETON
    for lesion in lesions:
        if lesion.center_mask.shape != like.dims[:2]:
            raise ValidationError(
                f"lesion {lesion.lesion_id!r} mask shape does not match the volume"
            )
        lesion.paint(labels)
    return LabelVolume(dims=like.dims, spacing=like.spacing, origin=like.origin,
                       data=labels)


_BALL_R1 = ndimage.generate_binary_structure(3, 1)  # 6-connected unit ball


def fallback_body_mask(volume: Volume3D) -> np.ndarray:
    """Coarse body mask when no dedicated region segmentation is available.

    Threshold above air, keep the largest connected component, close small
    gaps, and fill interior holes slice by slice (lungs and bowel gas stay
    part of the body when enclosed in-plane).
    """
    rough = volume.data > -500
    if not rough.any():
        return np.zeros(volume.dims, dtype=bool)
    labeled, n = ndimage.label(rough, structure=_BALL_R1)
    if n > 1:
        sizes = np.bincount(labeled.ravel())
        sizes[0] = 0
        rough = labeled == sizes.argmax()
    # Close on an edge-replicated pad so a body touching the volume border
    # is not eroded away by the border-is-empty convention.
    padded = np.pad(rough, 1, mode="edge")
    closed = ndimage.binary_closing(padded, structure=_BALL_R1)[1:-1, 1:-1, 1:-1]
    out = np.empty(volume.dims, dtype=bool, order="F")
    for z in range(volume.dims[2]):
        out[:, :, z] = ndimage.binary_fill_holes(closed[:, :, z])
    return out


def fallback_skeleton_mask(volume: Volume3D, body_mask: np.ndarray) -> np.ndarray:
    """Coarse skeleton mask: bone-range voxels inside the body, despeckled."""
    bone = (volume.data > 200) & body_mask.astype(bool)
    # pad so bone reaching the volume border is not shaved by the opening
    padded = np.pad(bone, 1, mode="edge")
    opened = ndimage.binary_opening(padded, structure=_BALL_R1)
    return opened[1:-1, 1:-1, 1:-1]
