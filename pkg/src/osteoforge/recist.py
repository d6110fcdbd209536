"""Prospective lesion-measurement records and the seed geometry they induce.

A measurement is two crossing axis segments drawn on one axial slice. Its
four endpoints define the bounding box used as the segmentation search
region and, connected in angular order, a quadrilateral whose interior is
trusted as definite lesion.

Pixel coordinates are 0-indexed, with integer coordinates at pixel
centers; fractional input is allowed and rounded half-away-from-zero
where integer pixels are needed.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .volume import round_half_away

CSV_COLUMNS = (
    "lesion_id", "series_id", "slice_index",
    "x1", "y1", "x2", "y2", "x3", "y3", "x4", "y4",
)

Point = tuple[float, float]


@dataclass(frozen=True)
class RecistMeasurement:
    """Two crossing diameter segments on one slice of one series."""

    lesion_id: str
    series_id: str
    slice_index: int
    long_axis: tuple[Point, Point]
    short_axis: tuple[Point, Point]

    def endpoints(self) -> np.ndarray:
        """The 4 endpoints as a (4, 2) float array, long axis first."""
        return np.array([*self.long_axis, *self.short_axis], dtype=np.float64)


@dataclass(frozen=True)
class SeedGeometry:
    """Per-slice segmentation seed: search box plus trusted quadrilateral.

    bbox is (x_min, y_min, x_max, y_max), inclusive pixel indices.
    quad is a (4, 2) array of vertices in simple-polygon order.
    """

    bbox: tuple[int, int, int, int]
    quad: np.ndarray
    slice_index: int


def parse_lesion_records(path: str) -> list[RecistMeasurement]:
    """Read measurements from CSV.

    Expected header (any column order): lesion_id, series_id, slice_index,
    x1..y4. Raises ValidationError naming the offending row on arity or
    value errors.
    """
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file, expected a CSV header") from None
        header = [h.strip() for h in header]
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise ValidationError(f"{path}: missing column(s) {missing}")
        col = {name: header.index(name) for name in CSV_COLUMNS}

        records = []
        for row in reader:
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            line = reader.line_num
            if len(row) != len(header):
                raise ValidationError(
                    f"{path}: row {line}: expected {len(header)} fields, got {len(row)}"
                )
            try:
                slice_index = int(row[col["slice_index"]])
            except ValueError:
                raise ValidationError(
                    f"{path}: row {line}: slice_index "
                    f"{row[col['slice_index']]!r} is not an integer"
                ) from None
            if slice_index < 0:
                raise ValidationError(
                    f"{path}: row {line}: negative slice_index {slice_index}"
                )
            coords = {}
            for name in CSV_COLUMNS[3:]:
                try:
                    coords[name] = float(row[col[name]])
                except ValueError:
                    raise ValidationError(
                        f"{path}: row {line}: non-numeric coordinate "
                        f"{name}={row[col[name]]!r}"
                    ) from None
            records.append(
                RecistMeasurement(
                    lesion_id=row[col["lesion_id"]],
                    series_id=row[col["series_id"]],
                    slice_index=slice_index,
                    long_axis=((coords["x1"], coords["y1"]), (coords["x2"], coords["y2"])),
                    short_axis=((coords["x3"], coords["y3"]), (coords["x4"], coords["y4"])),
                )
            )
    return records


def write_lesion_records(records: list[RecistMeasurement], path: str) -> None:
    """Write measurements back out in the canonical column order."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for m in records:
            (x1, y1), (x2, y2) = m.long_axis
            (x3, y3), (x4, y4) = m.short_axis
            writer.writerow(
                [m.lesion_id, m.series_id, m.slice_index]
                + [repr(float(c)) for c in (x1, y1, x2, y2, x3, y3, x4, y4)]
            )


def _segments_intersect(p1, p2, p3, p4) -> bool:
    """True if closed segments p1-p2 and p3-p4 share at least one point."""

    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    def on_seg(a, b, c):
        return (
            min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
            and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])
        )

    d1 = orient(p3, p4, p1)
    d2 = orient(p3, p4, p2)
    d3 = orient(p1, p2, p3)
    d4 = orient(p1, p2, p4)
    if ((d1 > 0) != (d2 > 0) and d1 != 0 and d2 != 0
            and (d3 > 0) != (d4 > 0) and d3 != 0 and d4 != 0):
        return True
    if d1 == 0 and on_seg(p3, p4, p1):
        return True
    if d2 == 0 and on_seg(p3, p4, p2):
        return True
    if d3 == 0 and on_seg(p1, p2, p3):
        return True
    if d4 == 0 and on_seg(p1, p2, p4):
        return True
    return False


def seed_geometry(m: RecistMeasurement, image_dims: tuple[int, int]) -> SeedGeometry:
    """Derive the search bbox and definite-foreground quad for a measurement.

    Endpoints are rounded half-away-from-zero to pixel indices and clamped
    into the image (with a warning). The quad orders the rounded endpoints
    by polar angle around their centroid, which yields a simple polygon
    for any pair of mutually crossing segments. Four collinear endpoints
    have no interior and are an error.
    """
    nx, ny = image_dims
    if not _segments_intersect(*m.long_axis, *m.short_axis):
        warnings.warn(
            f"measurement {m.lesion_id}: axes do not intersect; "
            "seed quadrilateral may be unreliable",
            stacklevel=2,
        )

    pts = round_half_away(m.endpoints()).astype(np.int64)
    clamped = np.empty_like(pts)
    clamped[:, 0] = np.clip(pts[:, 0], 0, nx - 1)
    clamped[:, 1] = np.clip(pts[:, 1], 0, ny - 1)
    if not np.array_equal(pts, clamped):
        warnings.warn(
            f"measurement {m.lesion_id}: endpoints outside image bounds were clamped",
            stacklevel=2,
        )
    pts = clamped

    # Collinearity: every point on the line through the first two distinct points.
    base = pts[0]
    direction = None
    for p in pts[1:]:
        if p[0] != base[0] or p[1] != base[1]:
            direction = p - base
            break
    collinear = direction is None or all(
        direction[0] * (p[1] - base[1]) - direction[1] * (p[0] - base[0]) == 0
        for p in pts
    )
    if collinear:
        raise ValidationError(
            f"measurement {m.lesion_id}: all endpoints are collinear, "
            "no quadrilateral interior exists"
        )

    bbox = (
        int(pts[:, 0].min()), int(pts[:, 1].min()),
        int(pts[:, 0].max()), int(pts[:, 1].max()),
    )

    centroid = pts.astype(np.float64).mean(axis=0)
    angles = [math.atan2(p[1] - centroid[1], p[0] - centroid[0]) for p in pts]
    order = sorted(range(4), key=lambda i: angles[i])
    quad = pts[order].astype(np.float64)

    return SeedGeometry(bbox=bbox, quad=quad, slice_index=m.slice_index)


def rasterize_quad(g: SeedGeometry, image_dims: tuple[int, int]) -> np.ndarray:
    """Boolean (nx, ny) mask of pixel centers inside or on the quad.

    Containment follows the even-odd rule with the boundary counted as
    inside, so even a degenerate-thin quad marks the pixels it touches.
    Only pixels inside the bbox are considered, so the mask is a subset
    of the bbox by construction.
    """
    nx, ny = image_dims
    mask = np.zeros((nx, ny), dtype=bool)
    x0, y0, x1, y1 = g.bbox
    x0, y0 = max(x0, 0), max(y0, 0)
    x1, y1 = min(x1, nx - 1), min(y1, ny - 1)
    if x1 < x0 or y1 < y0:
        return mask

    xs, ys = np.meshgrid(
        np.arange(x0, x1 + 1, dtype=np.float64),
        np.arange(y0, y1 + 1, dtype=np.float64),
        indexing="ij",
    )
    inside = np.zeros(xs.shape, dtype=bool)
    boundary = np.zeros(xs.shape, dtype=bool)
    verts = g.quad
    for i in range(4):
        ax, ay = verts[i]
        bx, by = verts[(i + 1) % 4]
        # Ray-cast to +x; half-open vertical rule handles shared vertices.
        crosses = (ay > ys) != (by > ys)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_at = ax + (ys - ay) * (bx - ax) / (by - ay)
        inside ^= crosses & (x_at > xs)
        # On-segment test, exact for integer and half-integer vertices.
        cross = (bx - ax) * (ys - ay) - (by - ay) * (xs - ax)
        within = (
            (xs >= min(ax, bx)) & (xs <= max(ax, bx))
            & (ys >= min(ay, by)) & (ys <= max(ay, by))
        )
        boundary |= (cross == 0) & within

    mask[x0 : x1 + 1, y0 : y1 + 1] = inside | boundary
    return mask
