"""Flat binary snapshots of grid fields plus JSON sidecars.

Layout (little-endian throughout):

    magic   4 bytes  b"PLFB"
    version u32      1
    dim     u32
    sizes   u32 * dim
    box     f64
    payload complex64, C-order, sizes[0]*...*sizes[dim-1] entries

The sidecar ``<path>.json`` repeats the header in human-readable form and can
carry arbitrary extra metadata.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import GridMismatchError
from .spectral_core import Grid, WaveField

MAGIC = b"PLFB"
VERSION = 1


def save_field(path, field: WaveField, extra: dict | None = None) -> Path:
    path = Path(path)
    g = field.grid
    header = MAGIC + struct.pack(
        "<II", VERSION, g.dim
    ) + struct.pack(f"<{g.dim}I", *g.shape) + struct.pack("<d", g.box_length)
    payload = np.ascontiguousarray(field.values, dtype="<c8").tobytes()
    path.write_bytes(header + payload)
    sidecar = {
        "format": "polaron-lab field snapshot",
        "version": VERSION,
        "dim": g.dim,
        "shape": list(g.shape),
        "box_length": g.box_length,
        "dtype": "complex64",
        "norm": field.norm(),
    }
    if extra:
        sidecar.update(extra)
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))
    return path


def load_field(path) -> WaveField:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise GridMismatchError(f"{path}: not a polaron-lab field snapshot")
    version, dim = struct.unpack("<II", raw[4:12])
    if version != VERSION:
        raise GridMismatchError(f"{path}: unsupported snapshot version {version}")
    off = 12
    sizes = struct.unpack(f"<{dim}I", raw[off : off + 4 * dim])
    off += 4 * dim
    (box,) = struct.unpack("<d", raw[off : off + 8])
    off += 8
    if len(set(sizes)) != 1:
        raise GridMismatchError(f"{path}: anisotropic grids are not supported: {sizes}")
    grid = Grid(dim, sizes[0], box)
    count = int(np.prod(sizes))
    values = np.frombuffer(raw, dtype="<c8", count=count, offset=off).reshape(sizes)
    return WaveField(grid, values.astype(np.complex128))


def load_sidecar(path) -> dict:
    return json.loads(Path(str(path) + ".json").read_text())
