"""Result persistence: the OTM1 voxel format, tensor text, logs, VTK export.

OTM1 layout: 4 magic bytes ``OTM1``, then nx, ny, nz as little-endian uint32,
then nx*ny*nz densities as little-endian float32 with x varying fastest.
Every writer goes through a temp file plus rename so a failed write never
leaves a partial artifact behind.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"OTM1"
_HEADER = struct.Struct("<4sIII")


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def write_density(path, rho: np.ndarray) -> None:
    """Serialize a 3-d density array to the OTM1 voxel format."""
    path = Path(path)
    rho = np.asarray(rho)
    if rho.ndim != 3:
        raise ValueError(f"expected a 3-d density array, got shape {rho.shape}")
    if rho.min() < 0.0 or rho.max() > 1.0:
        raise ValueError("densities must lie in [0, 1]")
    nx, ny, nz = rho.shape
    payload = np.ascontiguousarray(rho.ravel(order="F"), dtype="<f4").tobytes()
    _atomic_write(path, _HEADER.pack(MAGIC, nx, ny, nz) + payload)


def read_density(path) -> np.ndarray:
    """Read an OTM1 file back into a float32 array indexed [i, j, k]."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated voxel file")
    magic, nx, ny, nz = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    expect = _HEADER.size + 4 * nx * ny * nz
    if len(raw) != expect:
        raise ValueError(f"{path}: payload is {len(raw) - _HEADER.size} bytes, "
                         f"expected {4 * nx * ny * nz}")
    flat = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    return flat.reshape((nx, ny, nz), order="F").copy()


def format_kappa(matrix: np.ndarray) -> str:
    return "\n".join(" ".join(f"{v:.9e}" for v in row) for row in matrix) + "\n"


def format_log_csv(records) -> str:
    lines = ["iter,g,volfrac,vstar,vcycles,ms"]
    for r in records:
        lines.append(f"{r.iter},{r.g:.9e},{r.volfrac:.6f},{r.vstar:.6f},"
                     f"{r.vcycles},{r.ms:.1f}")
    return "\n".join(lines) + "\n"


def format_vti(rho: np.ndarray) -> str:
    """ASCII VTK ImageData with the densities as cell data."""
    nx, ny, nz = rho.shape
    vals = " ".join(f"{v:.6f}" for v in rho.ravel(order="F"))
    return (
        '<?xml version="1.0"?>\n'
        '<VTKFile type="ImageData" version="0.1" byte_order="LittleEndian">\n'
        f'  <ImageData WholeExtent="0 {nx} 0 {ny} 0 {nz}" '
        'Origin="0 0 0" Spacing="1 1 1">\n'
        f'    <Piece Extent="0 {nx} 0 {ny} 0 {nz}">\n'
        '      <CellData Scalars="density">\n'
        '        <DataArray type="Float32" Name="density" format="ascii">\n'
        f"          {vals}\n"
        "        </DataArray>\n"
        "      </CellData>\n"
        "    </Piece>\n"
        "  </ImageData>\n"
        "</VTKFile>\n"
    )


def config_manifest(config, seed_used: int | None = None) -> dict:
    """JSON-ready record of a run configuration."""
    from .optimize import RunConfig  # local import avoids a cycle at import time

    assert isinstance(config, RunConfig)
    return {
        "dims": list(config.dims),
        "target": [None if np.isnan(v) else float(v) for v in config.target.target.vec],
        "objective": config.target.kind,
        "kappa0": config.material.kappa0,
        "kappa_min": config.material.kappa_min,
        "penalty": config.material.penalty,
        "filter_radius": config.filter.radius,
        "init": config.init.kind,
        "init_volume_fraction": config.init.target_volume_fraction,
        "seed": config.init.seed if seed_used is None else seed_used,
        "init_from_file": config.init_field is not None,
        "model": config.model.value,
        "max_iter": config.max_iter,
        "conv_threshold": config.conv_threshold,
        "symmetry": config.symmetry,
        "solver_tol": config.solver_tol,
        "oc": {
            "min_density": config.oc.min_density,
            "step_limit": config.oc.step_limit,
            "damp": config.oc.damp,
        },
        "volume_bound": config.volume_bound,
        "epsilon": config.epsilon,
        "sens_smoothing": config.sens_smoothing,
        "dtype": config.dtype,
    }


def write_outputs(result, out_dir, vtk: bool = False,
                  manifest_extra: dict | None = None) -> dict:
    """Write rho.otm, kappa.txt, log.csv, manifest.json (and optional rho.vti).

    All payloads are rendered first and land through temp-file renames, so an
    unwritable directory raises before any artifact appears.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    rho = result.field.rho
    nx, ny, nz = rho.shape
    payload = np.ascontiguousarray(rho.ravel(order="F"), dtype="<f4").tobytes()
    files: dict[str, bytes] = {
        "rho.otm": _HEADER.pack(MAGIC, nx, ny, nz) + payload,
        "kappa.txt": format_kappa(result.kappa.as_matrix()).encode(),
        "log.csv": format_log_csv(result.log).encode(),
    }
    manifest = config_manifest(result.config)
    manifest.update({
        "converged": result.converged,
        "iterations": result.iterations,
        "final_g": result.log[-1].g if result.log else None,
        "final_volfrac": result.log[-1].volfrac if result.log else None,
    })
    if manifest_extra:
        manifest.update(manifest_extra)
    files["manifest.json"] = (json.dumps(manifest, indent=2) + "\n").encode()
    if vtk:
        files["rho.vti"] = format_vti(rho).encode()

    written = {}
    tmp_paths = []
    try:
        for name, data in files.items():
            tmp = out / (name + ".tmp")
            with open(tmp, "wb") as fh:
                fh.write(data)
            tmp_paths.append((tmp, out / name))
    except OSError:
        for tmp, _ in tmp_paths:
            tmp.unlink(missing_ok=True)
        raise
    for tmp, final in tmp_paths:
        os.replace(tmp, final)
        written[final.name] = final
    return written
