"""Weak 3D lesion labels from 2D RECIST-style measurements on CT.

The package turns per-slice lesion measurements into volumetric weak
segmentation labels (graph-cut segmentation of the measured slice plus
bounding-box slices above and below, merged with body and skeleton masks)
and scores lesion detections with overlap-based precision and recall.
"""

from .errors import GeometryMismatchError, OsteoforgeError, ValidationError
from .evaluate import (
    ComponentSet,
    DetectionReport,
    baseline_predict,
    connected_components,
    extract_lesion_components,
    match_detections,
    read_report,
    write_report,
)
from .grabcut import GrabCutParams, Trimap, grabcut_segment, grabcut_segment_full
from .overlay import render_slice, write_overlays
from .phantom import (
    LESION_KINDS,
    LesionSpec,
    PhantomSpec,
    default_phantom_spec,
    generate_phantom,
    perturb_predictions,
)
from .recist import (
    RecistMeasurement,
    SeedGeometry,
    parse_lesion_records,
    rasterize_quad,
    seed_geometry,
    write_lesion_records,
)
from .volume import (
    BACKGROUND,
    BODY,
    LESION,
    SKELETON,
    LabelVolume,
    Volume3D,
    WindowSpec,
    extract_slice,
    read_label_volume,
    read_volume,
    window_to_u8,
    write_volume,
)
from .weaklabel import (
    WeakLesionMask,
    build_weak_mask,
    fallback_body_mask,
    fallback_skeleton_mask,
    merge_labels,
)

__version__ = "0.1.0"

__all__ = [
    "BACKGROUND",
    "BODY",
    "SKELETON",
    "LESION",
    "ComponentSet",
    "DetectionReport",
    "GeometryMismatchError",
    "GrabCutParams",
    "LabelVolume",
    "LESION_KINDS",
    "LesionSpec",
    "OsteoforgeError",
    "PhantomSpec",
    "RecistMeasurement",
    "SeedGeometry",
    "Trimap",
    "ValidationError",
    "Volume3D",
    "WeakLesionMask",
    "WindowSpec",
    "baseline_predict",
    "build_weak_mask",
    "connected_components",
    "default_phantom_spec",
    "extract_lesion_components",
    "extract_slice",
    "fallback_body_mask",
    "fallback_skeleton_mask",
    "generate_phantom",
    "grabcut_segment",
    "grabcut_segment_full",
    "match_detections",
    "merge_labels",
    "parse_lesion_records",
    "perturb_predictions",
    "rasterize_quad",
    "read_label_volume",
    "render_slice",
    "read_report",
    "read_volume",
    "seed_geometry",
    "window_to_u8",
    "write_lesion_records",
    "write_overlays",
    "write_report",
    "write_volume",
]
