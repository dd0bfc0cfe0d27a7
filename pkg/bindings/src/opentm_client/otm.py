"""Reader/writer for the OTM1 voxel format.

Layout: magic ``OTM1``, then nx, ny, nz as little-endian uint32, then
nx*ny*nz little-endian float32 densities with x varying fastest.  This
module implements the byte layout directly from that contract; it shares no
code with the solver package.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"OTM1"
_HEADER = struct.Struct("<4sIII")


def read_voxels(path) -> np.ndarray:
    """Load an OTM1 file as a flat float32 array in x-fastest order."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated voxel file")
    magic, nx, ny, nz = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    count = nx * ny * nz
    if len(raw) != _HEADER.size + 4 * count:
        raise ValueError(f"{path}: expected {4 * count} payload bytes")
    return np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).copy()


def write_voxels(path, flat: np.ndarray, dims) -> None:
    """Write a flat x-fastest density sequence as an OTM1 file."""
    nx, ny, nz = (int(d) for d in dims)
    flat = np.ascontiguousarray(flat, dtype="<f4").ravel()
    if flat.size != nx * ny * nz:
        raise ValueError(f"need {nx * ny * nz} values for dims {(nx, ny, nz)}, "
                         f"got {flat.size}")
    Path(path).write_bytes(_HEADER.pack(MAGIC, nx, ny, nz) + flat.tobytes())
