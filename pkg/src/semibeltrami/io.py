"""Binary field files (BFLD v1), CSV export and matrix manifests.

A BFLD file is a little-endian header ``b"BFLD", u32 version, u32 n,
f64 L, u8 dtype`` (dtype 0 = float64, 1 = complex128) followed by the
row-major ``n x n`` payload. Structural metadata that the binary format
cannot hold (declared support, polynomial trend) goes to an optional
``<file>.meta.json`` sidecar; readers that ignore it get the raw samples.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .anisotropic import MatrixField
from .errors import ConfigurationError
from .grid import ComplexField, Field, Grid, Polynomial, RealField, make_grid

__all__ = [
    "write_field",
    "read_field",
    "export_csv",
    "write_matrix",
    "read_matrix",
]

MAGIC = b"BFLD"
VERSION = 1
HEADER = struct.Struct("<4sIIdB")


def _meta_path(path: Path) -> Path:
    return path.with_name(path.name + ".meta.json")


def write_field(path, f: Field, meta: bool = True) -> Path:
    """Write ``f`` as BFLD v1 (plus the sidecar unless ``meta=False``)."""
    path = Path(path)
    real = isinstance(f, RealField)
    header = HEADER.pack(MAGIC, VERSION, f.grid.n, float(f.grid.L), 0 if real else 1)
    payload = np.ascontiguousarray(f.data, dtype="<f8" if real else "<c16")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes(order="C"))
    if meta:
        doc = {"support_radius": f.support_radius, "trend": None}
        if f.trend is not None:
            doc["trend"] = [[j, k, c.real, c.imag] for (j, k), c in sorted(f.trend.coeffs.items())]
        _meta_path(path).write_text(json.dumps(doc, indent=1))
    return path


def read_field(path, grid: Grid | None = None) -> Field:
    """Read a BFLD v1 file; a sidecar, if present, restores support and trend."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < HEADER.size:
        raise ConfigurationError(f"{path}: truncated BFLD header")
    magic, version, n, L, dtype = HEADER.unpack_from(raw)
    if magic != MAGIC or version != VERSION:
        raise ConfigurationError(f"{path}: not a BFLD v1 file")
    if dtype not in (0, 1):
        raise ConfigurationError(f"{path}: unknown dtype code {dtype}")
    width = 8 if dtype == 0 else 16
    if len(raw) != HEADER.size + n * n * width:
        raise ConfigurationError(f"{path}: payload size does not match header")
    data = np.frombuffer(raw, dtype="<f8" if dtype == 0 else "<c16", offset=HEADER.size)
    data = data.reshape(n, n)
    g = make_grid(n, L)
    if grid is not None and grid != g:
        raise ConfigurationError(f"{path}: grid {g} does not match the job grid {grid}")
    support, trend = None, None
    mp = _meta_path(path)
    if mp.exists():
        doc = json.loads(mp.read_text())
        support = doc.get("support_radius")
        if doc.get("trend") is not None:
            trend = Polynomial({(j, k): complex(re, im) for j, k, re, im in doc["trend"]})
    cls = RealField if dtype == 0 else ComplexField
    return cls(g, data, support, trend)


def export_csv(f: Field, path) -> Path:
    """One ``x,y,re,im`` line per node, row-major."""
    path = Path(path)
    z = f.grid.z.ravel()
    v = np.asarray(f.data, dtype=complex).ravel()
    table = np.column_stack([z.real, z.imag, v.real, v.imag])
    np.savetxt(path, table, delimiter=",", fmt="%.17g")
    return path


def write_matrix(directory, A, stem: str = "A") -> Path:
    """Three real BFLD files and a JSON manifest ``{"a11", "a12", "a22"}``."""
    directory = Path(directory)
    manifest = {}
    for name in ("a11", "a12", "a22"):
        p = write_field(directory / f"{stem}_{name}.bfld", getattr(A, name))
        manifest[name] = p.name
    out = directory / f"{stem}.json"
    out.write_text(json.dumps(manifest, indent=1))
    return out


def read_matrix(path):
    """Load a matrix manifest; relative entries resolve against its folder."""
    path = Path(path)
    manifest = json.loads(path.read_text())
    try:
        parts = {k: read_field(path.parent / manifest[k]) for k in ("a11", "a12", "a22")}
    except KeyError as exc:
        raise ConfigurationError(f"{path}: manifest lacks entry {exc}") from exc
    grid = parts["a11"].grid
    return MatrixField(grid, parts["a11"], parts["a12"], parts["a22"])
