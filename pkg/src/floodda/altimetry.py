"""Wide-swath altimetry emulation: pixel clouds aggregated to river nodes.

The simulator turns a truth depth map into one pixel per grid cell inside
the swath: wet cells (depth >= 5 cm) become water pixels classified open
water or water-near-land (any 4-neighbour dry), a random fraction is
relabelled dark water, and each water pixel gets class-dependent Gaussian
height noise. Pixels near the channel centerline are assigned to the
nearest node and aggregated to node-level heights with inverse-variance
weights; dark pixels are excluded from aggregation. Node records keep
their selected-pixel footprint so member equivalents reuse exactly the
same pixels and weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domain import DomainCase, NodePoint, polyline_distance
from .observations import FLOOD_THRESHOLD
from .solver import HydroState, wse_interp

# pixel classes
OPEN_WATER = 0
WATER_NEAR_LAND = 1
DARK_WATER = 2
LAND = 3

CLASS_NAMES = {OPEN_WATER: "open_water", WATER_NEAR_LAND: "water_near_land",
               DARK_WATER: "dark_water", LAND: "land"}
CLASS_IDS = {v: k for k, v in CLASS_NAMES.items()}

QUALITY_GOOD = "good"
QUALITY_DEGRADED = "degraded"


@dataclass
class AltimetryNoise:
    """Per-class pixel height noise (m) and dark-water relabel fraction."""

    sigma_open: float = 0.5
    sigma_near: float = 1.0
    sigma_dark: float = 2.0
    dark_fraction: float = 0.05

    def sigma_of(self, cls):
        return (self.sigma_open, self.sigma_near, self.sigma_dark)[cls]


@dataclass
class PixelCloud:
    """One pixel per swath cell; land pixels carry NaN heights."""

    x: np.ndarray
    y: np.ndarray
    cls: np.ndarray      # int8 class codes
    wse: np.ndarray      # NaN for land
    sigma: np.ndarray    # NaN for land
    node_id: np.ndarray  # -1 = unassigned

    def __len__(self):
        return len(self.x)

    @property
    def water(self):
        return self.cls != LAND


@dataclass
class SwotNodeObs:
    """Node-level WSE aggregated from selected water pixels."""

    node_id: int
    t: float
    wse: float
    sigma: float
    n_pixels_used: int
    quality: str
    footprint_x: np.ndarray = field(default_factory=lambda: np.zeros(0))
    footprint_y: np.ndarray = field(default_factory=lambda: np.zeros(0))
    footprint_sigma: np.ndarray = field(default_factory=lambda: np.zeros(0))


def swot_simulate(state: HydroState, case: DomainCase, swath: np.ndarray,
                  noise: AltimetryNoise, seed: int,
                  threshold: float = FLOOD_THRESHOLD) -> PixelCloud:
    """Generate a pixel cloud from the truth state over a swath cell mask."""
    ny, nx = state.h.shape
    if swath.shape != (ny, nx):
        raise ValueError("swath mask shape does not match the grid")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    wet = state.h >= threshold
    jj, ii = np.nonzero(swath)
    order = np.lexsort((ii, jj))  # fixed row-major pixel order
    jj, ii = jj[order], ii[order]
    n = len(ii)

    xs = case.grid.origin[0] + case.grid.dx * ii
    ys = case.grid.origin[1] + case.grid.dx * jj
    cls = np.full(n, LAND, dtype=np.int8)
    wse = np.full(n, np.nan)
    sig = np.full(n, np.nan)

    is_wet = wet[jj, ii]
    # near-land: any 4-neighbour dry, grid edges count as dry
    near = np.zeros(n, dtype=bool)
    for dj, di in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        jn, imask = jj + dj, ii + di
        inside = (jn >= 0) & (jn < ny) & (imask >= 0) & (imask < nx)
        dry_nb = ~inside
        dry_nb[inside] = ~wet[jn[inside], imask[inside]]
        near |= dry_nb
    cls[is_wet & near] = WATER_NEAR_LAND
    cls[is_wet & ~near] = OPEN_WATER

    water_idx = np.nonzero(is_wet)[0]
    if len(water_idx):
        dark = rng.random(len(water_idx)) < noise.dark_fraction
        cls[water_idx[dark]] = DARK_WATER
        sigmas = np.array([noise.sigma_of(c) for c in cls[water_idx]])
        truth = case.zb[jj[water_idx], ii[water_idx]] + state.h[jj[water_idx], ii[water_idx]]
        wse[water_idx] = truth + sigmas * rng.standard_normal(len(water_idx))
        # noise-free configurations still need positive aggregation weights
        sig[water_idx] = np.maximum(sigmas, 1e-9)

    return PixelCloud(x=xs.astype(float), y=ys.astype(float), cls=cls,
                      wse=wse, sigma=sig, node_id=np.full(n, -1, dtype=np.int64))


def assign_pixels_to_nodes(cloud: PixelCloud, nodes: list[NodePoint],
                           centerline: np.ndarray,
                           max_node_distance: float = 200.0) -> PixelCloud:
    """Attach water pixels near the centerline to their nearest node.

    Pixels farther than ``max_node_distance`` from the centerline keep
    node_id -1; distance ties between nodes go to the lower node id.
    """
    if not nodes:
        raise ValueError("need at least one node")
    node_id = np.full(len(cloud), -1, dtype=np.int64)
    widx = np.nonzero(cloud.water)[0]
    if len(widx):
        pts = np.column_stack([cloud.x[widx], cloud.y[widx]])
        close = polyline_distance(pts, centerline) <= max_node_distance
        cand = widx[close]
        if len(cand):
            npos = np.array([n.position for n in nodes])
            d2 = ((cloud.x[cand, None] - npos[None, :, 0]) ** 2
                  + (cloud.y[cand, None] - npos[None, :, 1]) ** 2)
            nearest = np.argmin(d2, axis=1)  # argmin takes the first = lowest id
            node_id[cand] = np.array([nodes[k].node_id for k in nearest])
    return PixelCloud(x=cloud.x, y=cloud.y, cls=cloud.cls, wse=cloud.wse,
                      sigma=cloud.sigma, node_id=node_id)


def aggregate_nodes(cloud: PixelCloud, nodes: list[NodePoint], t: float,
                    n_min: int = 9) -> list[SwotNodeObs]:
    """Inverse-variance aggregation of open/near-land pixels per node.

    Dark-water pixels are excluded. Nodes with no selected pixels emit
    nothing; nodes with fewer than ``n_min`` pixels are flagged degraded.
    """
    selected = (cloud.node_id >= 0) & ((cloud.cls == OPEN_WATER)
                                       | (cloud.cls == WATER_NEAR_LAND))
    out = []
    for node in nodes:
        idx = np.nonzero(selected & (cloud.node_id == node.node_id))[0]
        if len(idx) == 0:
            continue
        w = 1.0 / cloud.sigma[idx] ** 2
        wsum = float(w.sum())
        wse = float((w * cloud.wse[idx]).sum() / wsum)
        sigma = float(np.sqrt(1.0 / wsum))
        quality = QUALITY_GOOD if len(idx) >= n_min else QUALITY_DEGRADED
        out.append(SwotNodeObs(node_id=node.node_id, t=t, wse=wse, sigma=sigma,
                               n_pixels_used=len(idx), quality=quality,
                               footprint_x=cloud.x[idx].copy(),
                               footprint_y=cloud.y[idx].copy(),
                               footprint_sigma=cloud.sigma[idx].copy()))
    return out


def h_swot_equiv(state: HydroState, case: DomainCase,
                 node_obs: list[SwotNodeObs], h_dry: float = 1e-3):
    """Model equivalents of node observations on the truth footprints.

    Per node: inverse-variance mean of interpolated member WSE over the
    footprint pixels, dropping pixels dry in the member state; the node is
    reported missing (NaN) when more than half the footprint is dry.
    """
    values = np.full(len(node_obs), np.nan)
    for k, obs in enumerate(node_obs):
        w = 1.0 / obs.footprint_sigma ** 2
        vals = np.empty(len(obs.footprint_x))
        for p, (x, y) in enumerate(zip(obs.footprint_x, obs.footprint_y)):
            v = wse_interp(state, case, (x, y), h_dry=h_dry)
            vals[p] = np.nan if v is None else v
        ok = np.isfinite(vals)
        if np.count_nonzero(~ok) * 2 > len(vals):
            continue  # more than 50% dry: missing
        wsum = float(w[ok].sum())
        if wsum > 0.0:
            values[k] = float((w[ok] * vals[ok]).sum() / wsum)
    return values


# -- archive files ------------------------------------------------------------

def save_pixel_cloud(cloud: PixelCloud, path):
    with open(path, "w") as f:
        f.write("x,y,class,wse,sigma,node_id\n")
        for k in range(len(cloud)):
            wse = "" if np.isnan(cloud.wse[k]) else repr(float(cloud.wse[k]))
            sig = "" if np.isnan(cloud.sigma[k]) else repr(float(cloud.sigma[k]))
            f.write(f"{float(cloud.x[k])!r},{float(cloud.y[k])!r},{CLASS_NAMES[int(cloud.cls[k])]},"
                    f"{wse},{sig},{int(cloud.node_id[k])}\n")


def load_pixel_cloud(path) -> PixelCloud:
    xs, ys, cls, wse, sig, nid = [], [], [], [], [], []
    with open(path) as f:
        next(f)
        for line in f:
            px, py, pc, pw, ps, pn = line.rstrip("\n").split(",")
            xs.append(float(px))
            ys.append(float(py))
            cls.append(CLASS_IDS[pc])
            wse.append(float(pw) if pw else np.nan)
            sig.append(float(ps) if ps else np.nan)
            nid.append(int(pn))
    return PixelCloud(x=np.array(xs), y=np.array(ys), cls=np.array(cls, dtype=np.int8),
                      wse=np.array(wse), sigma=np.array(sig),
                      node_id=np.array(nid, dtype=np.int64))


def save_node_obs(node_obs: list[SwotNodeObs], path):
    with open(path, "w") as f:
        f.write("node_id,wse,sigma,n_pixels,quality\n")
        for o in node_obs:
            f.write(f"{o.node_id},{o.wse!r},{o.sigma!r},{o.n_pixels_used},{o.quality}\n")


def load_node_obs(path, t: float, cloud: PixelCloud | None = None):
    """Read node observations; footprints are rebuilt from the pixel cloud."""
    out = []
    with open(path) as f:
        next(f)
        for line in f:
            nid, wse, sigma, npx, quality = line.strip().split(",")
            out.append(SwotNodeObs(node_id=int(nid), t=t, wse=float(wse),
                                   sigma=float(sigma), n_pixels_used=int(npx),
                                   quality=quality))
    if cloud is not None:
        selected = (cloud.node_id >= 0) & ((cloud.cls == OPEN_WATER)
                                           | (cloud.cls == WATER_NEAR_LAND))
        for o in out:
            idx = np.nonzero(selected & (cloud.node_id == o.node_id))[0]
            o.footprint_x = cloud.x[idx].copy()
            o.footprint_y = cloud.y[idx].copy()
            o.footprint_sigma = cloud.sigma[idx].copy()
    return out
