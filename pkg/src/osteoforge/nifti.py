"""Minimal NIfTI-1 single-file codec.

Reads and writes .nii / .nii.gz volumes with a fixed 348-byte header.
Only 3D images are supported; scanner orientation is taken at face value
(no reorientation). Gzip payloads are detected by the 0x1F 0x8B prefix
regardless of file extension, and written with mtime=0 so identical
volumes always produce byte-identical files.
"""

from __future__ import annotations

import gzip
import io
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

HEADER_SIZE = 348
MAGIC_SINGLE = b"n+1\x00"
GZIP_MAGIC = b"\x1f\x8b"

# NIfTI datatype code -> numpy dtype (endianness applied at parse time).
_DTYPES = {
    2: "u1",
    4: "i2",
    8: "i4",
    16: "f4",
    64: "f8",
    256: "i1",
    512: "u2",
    768: "u4",
}
_DTYPE_CODES = {"u1": 2, "i2": 4, "i4": 8, "f4": 16, "f8": 64}


@dataclass
class RawNifti:
    """Header fields we care about plus the decoded scalar grid."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float]
    data: np.ndarray  # shape (nx, ny, nz), Fortran order, x fastest


def _read_bytes(path: str) -> bytes:
    with open(path, "rb") as f:
        head = f.read(2)
        f.seek(0)
        if head == GZIP_MAGIC:
            with gzip.open(f) as gz:
                return gz.read()
        return f.read()


def read_nifti(path: str) -> RawNifti:
    """Parse a single-file NIfTI-1 volume (optionally gzipped).

    Raises ValidationError on bad magic, unsupported datatype, non-3D
    shapes, non-positive spacing, or a truncated payload.
    """
    blob = _read_bytes(path)
    if len(blob) < HEADER_SIZE:
        raise ValidationError(f"{path}: file shorter than NIfTI-1 header")

    magic = blob[344:348]
    if magic != MAGIC_SINGLE:
        raise ValidationError(
            f"{path}: bad magic {magic!r}; only single-file NIfTI-1 ('n+1') is supported"
        )

    (sizeof_hdr,) = struct.unpack_from("<i", blob, 0)
    if sizeof_hdr == HEADER_SIZE:
        end = "<"
    else:
        (sizeof_hdr_be,) = struct.unpack_from(">i", blob, 0)
        if sizeof_hdr_be != HEADER_SIZE:
            raise ValidationError(f"{path}: malformed header (sizeof_hdr != 348)")
        end = ">"

    dim = struct.unpack_from(end + "8h", blob, 40)
    datatype, _bitpix = struct.unpack_from(end + "2h", blob, 70)
    pixdim = struct.unpack_from(end + "8f", blob, 76)
    (vox_offset,) = struct.unpack_from(end + "f", blob, 108)
    scl_slope, scl_inter = struct.unpack_from(end + "2f", blob, 112)
    qform_code, sform_code = struct.unpack_from(end + "2h", blob, 252)
    qoffset = struct.unpack_from(end + "3f", blob, 268)
    srow = struct.unpack_from(end + "12f", blob, 280)

    ndim = dim[0]
    if not 1 <= ndim <= 7:
        raise ValidationError(f"{path}: invalid dim[0]={ndim}")
    shape = [int(d) for d in dim[1 : 1 + ndim]]
    if ndim < 3:
        raise ValidationError(f"{path}: not a 3D image (dim[0]={ndim})")
    if any(d != 1 for d in shape[3:]):
        raise ValidationError(
            f"{path}: more than 3 non-singleton axes (shape {tuple(shape)})"
        )
    nx, ny, nz = shape[:3]
    if nx < 1 or ny < 1 or nz < 1:
        raise ValidationError(f"{path}: non-positive image dimension {tuple(shape[:3])}")

    if datatype not in _DTYPES:
        raise ValidationError(f"{path}: unsupported NIfTI datatype code {datatype}")
    dtype = np.dtype(end + _DTYPES[datatype])

    spacing = tuple(float(p) for p in pixdim[1:4])
    if any(s <= 0 for s in spacing):
        raise ValidationError(f"{path}: non-positive voxel spacing {spacing}")

    if sform_code > 0:
        origin = (float(srow[3]), float(srow[7]), float(srow[11]))
    elif qform_code > 0:
        origin = tuple(float(q) for q in qoffset)
    else:
        origin = (0.0, 0.0, 0.0)

    offset = int(round(vox_offset)) if vox_offset >= HEADER_SIZE else HEADER_SIZE + 4
    nvox = nx * ny * nz
    nbytes = nvox * dtype.itemsize
    payload = blob[offset : offset + nbytes]
    if len(payload) < nbytes:
        raise ValidationError(
            f"{path}: truncated payload ({len(payload)} of {nbytes} bytes)"
        )

    raw = np.frombuffer(payload, dtype=dtype).reshape((nx, ny, nz), order="F")
    if scl_slope != 0.0 and not (scl_slope == 1.0 and scl_inter == 0.0):
        data = raw.astype(np.float64) * scl_slope + scl_inter
    else:
        data = raw

    return RawNifti(dims=(nx, ny, nz), spacing=spacing, origin=origin, data=data)


def write_nifti(
    path: str,
    data: np.ndarray,
    spacing: tuple[float, float, float],
    origin: tuple[float, float, float],
) -> None:
    """Write a 3D array (shape nx,ny,nz; int16 or uint8) as NIfTI-1.

    Paths ending in .gz are gzip-compressed with a zeroed mtime so the
    same volume always yields byte-identical files.
    """
    if data.ndim != 3:
        raise ValidationError(f"expected a 3D array, got shape {data.shape}")
    key = data.dtype.newbyteorder("=").str.lstrip("<>=|")
    if key not in _DTYPE_CODES:
        raise ValidationError(f"unsupported dtype for writing: {data.dtype}")

    nx, ny, nz = data.shape
    sx, sy, sz = (float(s) for s in spacing)
    ox, oy, oz = (float(o) for o in origin)

    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    struct.pack_into("<8h", hdr, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<2h", hdr, 70, _DTYPE_CODES[key], data.dtype.itemsize * 8)
    struct.pack_into("<8f", hdr, 76, 1.0, sx, sy, sz, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", hdr, 108, float(HEADER_SIZE + 4))  # vox_offset
    struct.pack_into("<2f", hdr, 112, 1.0, 0.0)  # scl_slope, scl_inter
    struct.pack_into("<B", hdr, 123, 2)  # xyzt_units: millimetres
    struct.pack_into("<2h", hdr, 252, 0, 1)  # qform_code, sform_code
    struct.pack_into(
        "<12f",
        hdr,
        280,
        sx, 0.0, 0.0, ox,
        0.0, sy, 0.0, oy,
        0.0, 0.0, sz, oz,
    )
    hdr[344:348] = MAGIC_SINGLE

    buf = io.BytesIO()
    buf.write(hdr)
    buf.write(b"\x00\x00\x00\x00")  # no extensions
    buf.write(np.ascontiguousarray(data, dtype=data.dtype.newbyteorder("<")).tobytes(order="F"))

    blob = buf.getvalue()
    if str(path).endswith(".gz"):
        out = io.BytesIO()
        with gzip.GzipFile(filename="", mode="wb", fileobj=out, mtime=0) as gz:
            gz.write(blob)
        blob = out.getvalue()
    with open(path, "wb") as f:
        f.write(blob)
