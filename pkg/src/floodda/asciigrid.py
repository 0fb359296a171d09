"""Reader/writer for ESRI ASCII grids (.asc).

Layout is the usual one:

    ncols         240
    nrows         48
    xllcorner     -12.5
    yllcorner     -12.5
    cellsize      25.0
    NODATA_value  -9999
    <nrows data lines, north row first, ncols values each>

Values are written with ``repr`` so a write/read round trip is bit-exact
for float64 data. Internally grids are stored as ``(ny, nx)`` arrays with
row ``j=0`` at the *south* edge, so the writer emits rows reversed.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

NODATA = -9999


def write_ascii_grid(path, data, dx, xll, yll, fmt=repr):
    """Write a (ny, nx) array as an ESRI ASCII grid, north row first."""
    data = np.asarray(data)
    if data.ndim != 2:
        raise ValueError(f"expected 2D array, got shape {data.shape}")
    ny, nx = data.shape
    lines = [
        f"ncols {nx}",
        f"nrows {ny}",
        f"xllcorner {float(xll)!r}",
        f"yllcorner {float(yll)!r}",
        f"cellsize {float(dx)!r}",
        f"NODATA_value {NODATA}",
    ]
    if np.issubdtype(data.dtype, np.integer):
        fmt = str
        rows = data
    else:
        rows = data.astype(float)
    for j in range(ny - 1, -1, -1):
        lines.append(" ".join(fmt(v) for v in rows[j].tolist()))
    Path(path).write_text("\n".join(lines) + "\n")


def read_ascii_grid(path, dtype=float):
    """Read an ESRI ASCII grid.

    Returns ``(data, dx, xll, yll)`` with data as a (ny, nx) array,
    row j=0 at the south edge.
    """
    with open(path) as f:
        header = {}
        while len(header) < 6:
            key, value = f.readline().split()
            header[key.lower()] = value
        nx = int(header["ncols"])
        ny = int(header["nrows"])
        dx = float(header["cellsize"])
        xll = float(header["xllcorner"])
        yll = float(header["yllcorner"])
        data = np.loadtxt(f, dtype=dtype)
    data = np.atleast_2d(data)
    if data.shape != (ny, nx):
        raise ValueError(f"{path}: data shape {data.shape} != header ({ny}, {nx})")
    return data[::-1].copy(), dx, xll, yll
