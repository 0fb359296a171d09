"""Synthetic river-reach domain: grid, bathymetry, zones, centerline, stations.

The test domain is a meandering channel incised into a gently sloping
floodplain on a square-cell raster. The channel follows a sinusoidal
centerline; friction zones split the reach into longitudinal bands and
the floodplain is tiled into along-stream subdomains. All geometry is
deterministic given a :class:`CaseSpec`.

Units: meters everywhere, elevations above an arbitrary datum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .asciigrid import read_ascii_grid, write_ascii_grid


@dataclass(frozen=True)
class RasterGrid:
    """Square-cell raster; ``origin`` is the lower-left cell *center*."""

    nx: int
    ny: int
    dx: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise ValueError(f"grid must be at least 4x4, got {self.nx}x{self.ny}")
        if self.dx <= 0:
            raise ValueError(f"dx must be positive, got {self.dx}")

    @property
    def x_centers(self):
        return self.origin[0] + self.dx * np.arange(self.nx)

    @property
    def y_centers(self):
        return self.origin[1] + self.dx * np.arange(self.ny)

    def extent(self):
        """(xmin, xmax, ymin, ymax) of the cell-edge bounding box."""
        x0, y0 = self.origin
        h = 0.5 * self.dx
        return (x0 - h, x0 + (self.nx - 1) * self.dx + h,
                y0 - h, y0 + (self.ny - 1) * self.dx + h)

    def cell_center(self, i, j):
        return (self.origin[0] + i * self.dx, self.origin[1] + j * self.dx)


@dataclass(frozen=True)
class NodePoint:
    node_id: int
    position: tuple[float, float]
    along_stream_distance: float


@dataclass(frozen=True)
class GaugeStation:
    name: str
    position: tuple[float, float]
    cell: tuple[int, int]


@dataclass
class CaseSpec:
    """Parameters of the synthetic reach.

    ``sinuosity_amplitude`` is the lateral half-excursion of the channel
    centerline (0 gives a straight channel), ``cross_slope`` the rise of
    the floodplain per meter away from the channel banks.
    ``station_fractions`` place the three gauges at arc-length fractions
    of the centerline (upstream, middle, downstream).
    """

    nx: int = 240
    ny: int = 48
    dx: float = 25.0
    slope: float = 5e-4
    channel_width: float = 150.0
    channel_depth: float = 3.0
    sinuosity_amplitude: float = 150.0
    sinuosity_wavelength: float = 1500.0
    cross_slope: float = 2.5e-3
    z_datum: float = 10.0
    n_zones: int = 3
    n_subdomains: int = 4
    station_fractions: tuple[float, float, float] = (0.10, 0.50, 0.90)
    origin: tuple[float, float] = (0.0, 0.0)


STATION_NAMES = ("upstream", "midreach", "downstream")


@dataclass
class DomainCase:
    """A fully-resolved model domain, immutable after construction."""

    grid: RasterGrid
    zb: np.ndarray            # (ny, nx) bed elevation
    friction_zone: np.ndarray  # (ny, nx) int, 0..Z-1
    subdomain: np.ndarray      # (ny, nx) int, 0 = riverbed, 1..S floodplain
    centerline: np.ndarray     # (n, 2) points along the thalweg
    nodes: list[NodePoint] = field(default_factory=list)
    stations: list[GaugeStation] = field(default_factory=list)

    def __post_init__(self):
        for arr in (self.zb, self.friction_zone, self.subdomain):
            if arr.shape != (self.grid.ny, self.grid.nx):
                raise ValueError("field shape does not match grid")
        zones = np.unique(self.friction_zone)
        if not np.array_equal(zones, np.arange(len(zones))):
            raise ValueError("friction zone ids must be contiguous from 0")
        subs = np.unique(self.subdomain)
        if not np.array_equal(subs, np.arange(len(subs))):
            raise ValueError("subdomain ids must be contiguous from 0")
        xmin, xmax, ymin, ymax = self.grid.extent()
        cx, cy = self.centerline[:, 0], self.centerline[:, 1]
        if cx.min() < xmin or cx.max() > xmax or cy.min() < ymin or cy.max() > ymax:
            raise ValueError("centerline leaves the grid bounding box")
        for arr in (self.zb, self.friction_zone, self.subdomain, self.centerline):
            arr.flags.writeable = False

    @property
    def n_zones(self):
        return int(self.friction_zone.max()) + 1

    @property
    def n_subdomains(self):
        """Number of floodplain subdomains (riverbed id 0 excluded)."""
        return int(self.subdomain.max())

    @property
    def riverbed(self):
        return self.subdomain == 0


def locate_cell(grid: RasterGrid, point) -> tuple[int, int]:
    """Nearest cell-center index; ties break toward the lower index."""
    x, y = point
    xmin, xmax, ymin, ymax = grid.extent()
    if not (xmin <= x <= xmax and ymin <= y <= ymax):
        raise ValueError(f"point {point} outside grid extent")
    i = math.ceil((x - grid.origin[0]) / grid.dx - 0.5)
    j = math.ceil((y - grid.origin[1]) / grid.dx - 0.5)
    return (min(grid.nx - 1, max(0, i)), min(grid.ny - 1, max(0, j)))


def polyline_arclength(line: np.ndarray) -> np.ndarray:
    """Cumulative arc length at each vertex of an (n, 2) polyline."""
    seg = np.sqrt(np.sum(np.diff(line, axis=0) ** 2, axis=1))
    return np.concatenate([[0.0], np.cumsum(seg)])


def point_at_arclength(line: np.ndarray, cum: np.ndarray, s: float):
    x = np.interp(s, cum, line[:, 0])
    y = np.interp(s, cum, line[:, 1])
    return (float(x), float(y))


def tangent_at_arclength(line: np.ndarray, cum: np.ndarray, s: float):
    """Unit tangent of the segment containing arc length ``s``."""
    k = int(np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(cum) - 2))
    d = line[k + 1] - line[k]
    n = math.hypot(d[0], d[1])
    return (d[0] / n, d[1] / n)


def polyline_distance(points: np.ndarray, line: np.ndarray, chunk: int = 2048):
    """Euclidean distance from each point to an (n, 2) polyline.

    Exact point-to-segment distances, evaluated in chunks to bound the
    broadcast memory.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    a = line[:-1]               # (m, 2) segment starts
    d = line[1:] - a            # (m, 2) segment vectors
    len2 = np.maximum(np.sum(d * d, axis=1), 1e-300)
    out = np.empty(len(points))
    for lo in range(0, len(points), chunk):
        p = points[lo:lo + chunk]                       # (c, 2)
        ap = p[:, None, :] - a[None, :, :]              # (c, m, 2)
        t = np.clip(np.sum(ap * d[None], axis=2) / len2, 0.0, 1.0)
        closest = a[None] + t[:, :, None] * d[None]
        dist = np.sqrt(np.sum((p[:, None, :] - closest) ** 2, axis=2))
        out[lo:lo + chunk] = dist.min(axis=1)
    return out


def build_synthetic_reach(spec: CaseSpec) -> DomainCase:
    """Construct the meandering-reach test case from a :class:`CaseSpec`."""
    if spec.slope <= 0:
        raise ValueError(f"valley slope must be positive, got {spec.slope}")
    if spec.channel_width < 3 * spec.dx:
        raise ValueError(
            f"channel unresolvable: width {spec.channel_width} < 3*dx = {3 * spec.dx}")
    if spec.n_zones < 3:
        raise ValueError(f"need at least 3 friction zones, got {spec.n_zones}")
    if spec.n_subdomains < 2:
        raise ValueError(f"need at least 2 subdomains, got {spec.n_subdomains}")

    grid = RasterGrid(spec.nx, spec.ny, spec.dx, spec.origin)
    xmin, xmax, ymin, ymax = grid.extent()
    y_mid = 0.5 * (ymin + ymax)

    # Centerline spans the full x extent edge-to-edge, 4 samples per cell.
    n_seg = 4 * spec.nx
    cx = np.linspace(xmin, xmax, n_seg + 1)
    if spec.sinuosity_amplitude == 0.0:
        cy = np.full_like(cx, y_mid)
    else:
        cy = y_mid + spec.sinuosity_amplitude * np.sin(
            2.0 * math.pi * (cx - xmin) / spec.sinuosity_wavelength)
    amp = abs(spec.sinuosity_amplitude) + 0.5 * spec.channel_width
    if y_mid + amp > ymax or y_mid - amp < ymin:
        raise ValueError("channel meander does not fit inside the grid")
    centerline = np.column_stack([cx, cy])

    xs = grid.x_centers
    ys = grid.y_centers
    xx, yy = np.meshgrid(xs, ys)                     # (ny, nx)
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    dist = polyline_distance(pts, centerline).reshape(spec.ny, spec.nx)

    in_channel = dist <= 0.5 * spec.channel_width
    zfp = spec.z_datum - spec.slope * (xx - xmin)    # floodplain base, per column
    zb = np.where(
        in_channel,
        zfp - spec.channel_depth,
        zfp + spec.cross_slope * (dist - 0.5 * spec.channel_width),
    )

    col = np.arange(spec.nx)
    zone_of_col = np.minimum(spec.n_zones - 1, (col * spec.n_zones) // spec.nx)
    friction_zone = np.broadcast_to(zone_of_col, (spec.ny, spec.nx)).astype(np.int32).copy()

    sub_of_col = 1 + np.minimum(spec.n_subdomains - 1, (col * spec.n_subdomains) // spec.nx)
    subdomain = np.broadcast_to(sub_of_col, (spec.ny, spec.nx)).astype(np.int32).copy()
    subdomain[in_channel] = 0

    case = DomainCase(grid=grid, zb=zb, friction_zone=friction_zone,
                      subdomain=subdomain, centerline=centerline)

    cum = polyline_arclength(centerline)
    stations = []
    for name, frac in zip(STATION_NAMES, spec.station_fractions):
        pos = point_at_arclength(centerline, cum, frac * cum[-1])
        cell = locate_cell(grid, pos)
        if case.subdomain[cell[1], cell[0]] != 0:
            raise ValueError(f"station {name} at {pos} is not on a riverbed cell")
        stations.append(GaugeStation(name=name, position=pos, cell=cell))
    case.stations = stations
    case.nodes = extract_centerline_nodes(case)
    return case


def extract_centerline_nodes(case: DomainCase, node_spacing: float = 200.0):
    """Arc-length resampling of the centerline into evenly spaced nodes.

    Nodes sit at distances ``spacing/2 + k*spacing``; the count is
    ``floor(L / spacing)`` for centerline length L.
    """
    if node_spacing < 2 * case.grid.dx:
        raise ValueError(f"node spacing {node_spacing} < 2*dx = {2 * case.grid.dx}")
    cum = polyline_arclength(case.centerline)
    length = float(cum[-1])
    count = int(length // node_spacing)
    nodes = []
    for k in range(count):
        s = 0.5 * node_spacing + k * node_spacing
        nodes.append(NodePoint(node_id=k,
                               position=point_at_arclength(case.centerline, cum, s),
                               along_stream_distance=s))
    return nodes


# -- case directory IO -------------------------------------------------------

def write_case(case: DomainCase, outdir):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    g = case.grid
    (outdir / "grid.txt").write_text(
        f"{g.nx} {g.ny} {g.dx!r} {g.origin[0]!r} {g.origin[1]!r}\n")
    xll, yll = g.origin[0] - 0.5 * g.dx, g.origin[1] - 0.5 * g.dx
    write_ascii_grid(outdir / "zb.asc", case.zb, g.dx, xll, yll)
    write_ascii_grid(outdir / "friction_zone.asc", case.friction_zone, g.dx, xll, yll)
    write_ascii_grid(outdir / "subdomain.asc", case.subdomain, g.dx, xll, yll)
    with open(outdir / "centerline.csv", "w") as f:
        f.write("x,y\n")
        for x, y in case.centerline.tolist():
            f.write(f"{x!r},{y!r}\n")
    with open(outdir / "nodes.csv", "w") as f:
        f.write("node_id,x,y,s\n")
        for n in case.nodes:
            f.write(f"{n.node_id},{n.position[0]!r},{n.position[1]!r},"
                    f"{n.along_stream_distance!r}\n")
    with open(outdir / "stations.csv", "w") as f:
        f.write("name,x,y\n")
        for s in case.stations:
            f.write(f"{s.name},{s.position[0]!r},{s.position[1]!r}\n")


def read_case(casedir) -> DomainCase:
    casedir = Path(casedir)
    parts = (casedir / "grid.txt").read_text().split()
    grid = RasterGrid(nx=int(parts[0]), ny=int(parts[1]), dx=float(parts[2]),
                      origin=(float(parts[3]), float(parts[4])))
    zb, _, _, _ = read_ascii_grid(casedir / "zb.asc")
    fz, _, _, _ = read_ascii_grid(casedir / "friction_zone.asc", dtype=np.int32)
    sd, _, _, _ = read_ascii_grid(casedir / "subdomain.asc", dtype=np.int32)
    center = []
    with open(casedir / "centerline.csv") as f:
        next(f)
        for line in f:
            x, y = line.split(",")
            center.append((float(x), float(y)))
    nodes = []
    with open(casedir / "nodes.csv") as f:
        next(f)
        for line in f:
            nid, x, y, s = line.split(",")
            nodes.append(NodePoint(node_id=int(nid), position=(float(x), float(y)),
                                   along_stream_distance=float(s)))
    stations = []
    with open(casedir / "stations.csv") as f:
        next(f)
        for line in f:
            name, x, y = line.strip().split(",")
            pos = (float(x), float(y))
            stations.append(GaugeStation(name=name, position=pos,
                                         cell=locate_cell(grid, pos)))
    return DomainCase(grid=grid, zb=zb, friction_zone=fz, subdomain=sd,
                      centerline=np.array(center), nodes=nodes, stations=stations)
