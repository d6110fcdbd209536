"""QC overlay rendering: windowed slices with label outlines and fills.

Each rendered slice is the windowed grayscale image with the body outline
in red, the skeleton outline in green, and lesion pixels filled yellow at
50% alpha. Precedence per pixel is lesion > skeleton > body, so a lesion
pixel is always the documented gray-yellow blend: channelwise
(gray + yellow + 1) // 2, i.e. a round-half-up average.

Images are written as slice_%04d.png with x growing rightward and y
growing downward.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image
from scipy import ndimage

from .volume import (
    LESION,
    SKELETON,
    LabelVolume,
    Volume3D,
    WindowSpec,
    extract_slice,
    require_same_geometry,
    window_to_u8,
)

RED = (255, 0, 0)
GREEN = (0, 255, 0)
YELLOW = (255, 255, 0)

_EDGE_STRUCTURE = ndimage.generate_binary_structure(2, 1)


def _outline(mask: np.ndarray) -> np.ndarray:
    """Pixels of the mask whose 4-neighborhood leaves the mask."""
    if not mask.any():
        return mask
    return mask & ~ndimage.binary_erosion(mask, structure=_EDGE_STRUCTURE)


def blend_half(base: np.ndarray, color: tuple[int, int, int]) -> np.ndarray:
    """50% alpha blend, exact integer arithmetic with round-half-up."""
    color_arr = np.array(color, dtype=np.uint16)
    return ((base.astype(np.uint16) + color_arr + 1) // 2).astype(np.uint8)


def render_slice(
    windowed: np.ndarray, label_slice: np.ndarray
) -> np.ndarray:
    """Compose one RGB slice; arrays are (nx, ny), output is (ny, nx, 3)."""
    rgb = np.repeat(windowed[:, :, None], 3, axis=2).astype(np.uint8)
    lesion = label_slice == LESION
    skel_edge = _outline(label_slice >= SKELETON) & ~lesion
    body_edge = _outline(label_slice > 0) & ~lesion & ~skel_edge
    rgb[body_edge] = RED
    rgb[skel_edge] = GREEN
    rgb[lesion] = blend_half(rgb[lesion], YELLOW)
    return np.transpose(rgb, (1, 0, 2))


def write_overlays(
    volume: Volume3D,
    labels: LabelVolume,
    out_dir: str,
    window: WindowSpec = WindowSpec(),
) -> list[str]:
    """Render every slice that carries any label; returns the paths written."""
    require_same_geometry(volume, labels, "overlay inputs")
    os.makedirs(out_dir, exist_ok=True)
    windowed = window_to_u8(volume, window)
    written = []
    for z in range(volume.dims[2]):
        label_slice = extract_slice(labels, z)
        if not label_slice.any():
            continue
        rgb = render_slice(windowed[:, :, z], label_slice)
        path = os.path.join(out_dir, f"slice_{z:04d}.png")
        Image.fromarray(rgb, mode="RGB").save(path)
        written.append(path)
    return written
