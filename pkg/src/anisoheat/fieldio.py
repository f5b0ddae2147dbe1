"""Field serialisation.

Binary layout (little-endian)::

    int64   dim
    int64   N          points per axis
    float64 L          half width, grid covers [-L, L)^dim
    float64 values[N**dim]   row-major (C order)

CSV layout: header ``i0[,i1,i2],x0[,x1,x2],value``; one row per grid point in
row-major order.
"""
from __future__ import annotations

import csv
import io
import os
import struct
import tempfile

import numpy as np

from .propagator import Field, SpatialGrid

_HEADER = struct.Struct("<qqd")


def field_to_bytes(field):
    g = field.grid
    payload = np.ascontiguousarray(field.values, dtype="<f8").tobytes(order="C")
    return _HEADER.pack(g.dim, g.points, g.half_width) + payload


def field_from_bytes(data):
    if len(data) < _HEADER.size:
        raise ValueError("truncated field header")
    dim, n, half = _HEADER.unpack_from(data)
    grid = SpatialGrid(dim, n, half)
    count = n ** dim
    values = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    if values.size != count:
        raise ValueError(f"payload has {values.size} values, header implies {count}")
    return Field(grid, values.reshape(grid.shape).astype(float))


def field_to_csv(field):
    g = field.grid
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"i{k}" for k in range(g.dim)] + [f"x{k}" for k in range(g.dim)] + ["value"])
    for idx in np.ndindex(*g.shape):
        coords = [repr(float(g.axis[i])) for i in idx]
        writer.writerow([*idx, *coords, repr(float(field.values[idx]))])
    return buf.getvalue()


def atomic_write(path, data):
    """Write ``data`` (bytes or str) to ``path`` via a temp file and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    mode = "wb" if isinstance(data, (bytes, bytearray)) else "w"
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": "", "encoding": "utf-8"})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_field(path, field):
    atomic_write(path, field_to_bytes(field))


def read_field(path):
    with open(path, "rb") as fh:
        return field_from_bytes(fh.read())


def write_field_csv(path, field):
    atomic_write(path, field_to_csv(field))
