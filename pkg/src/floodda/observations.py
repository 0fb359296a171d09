"""Gauge and flood-extent observation operators.

All operators work both ways: extracting synthetic observations from the
truth run (optionally with noise) and computing noise-free model
equivalents for ensemble members.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import DomainCase, GaugeStation
from .solver import HydroState, wse_at

FLOOD_THRESHOLD = 0.05  # m, depth at/above which a cell counts as flooded


@dataclass(frozen=True)
class GaugeObs:
    station: str
    t: float
    wse: float
    sigma: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("gauge sigma must be positive")


@dataclass(frozen=True)
class WsrObs:
    subdomain: int
    t: float
    ratio: float
    sigma_g: float  # error std in Gaussian-transformed space

    def __post_init__(self):
        if not 0.0 <= self.ratio <= 1.0:
            raise ValueError(f"ratio {self.ratio} outside [0, 1]")


@dataclass
class FloodExtentMap:
    t: float
    wet: np.ndarray  # (ny, nx) bool


def h_gauge(state: HydroState, case: DomainCase, station: GaugeStation,
            sigma: float = 0.0, rng=None) -> float:
    """WSE at the station cell; optional Gaussian noise for truth extraction."""
    value = wse_at(state, case, station.cell)
    if sigma > 0.0:
        value += sigma * float(rng.standard_normal())
    return value


def flood_extent(depth: np.ndarray, t: float = 0.0,
                 threshold: float = FLOOD_THRESHOLD) -> FloodExtentMap:
    """Binary extent map: wet wherever depth >= threshold."""
    return FloodExtentMap(t=t, wet=np.asarray(depth) >= threshold)


def wsr(extent: FloodExtentMap, case: DomainCase, subdomain: int) -> float:
    """Wet surface ratio of one floodplain subdomain."""
    if subdomain < 1:
        raise ValueError("subdomain id must be >= 1 (0 is the riverbed)")
    mask = case.subdomain == subdomain
    total = int(mask.sum())
    if total == 0:
        raise ValueError(f"subdomain {subdomain} has no cells")
    return float(np.count_nonzero(extent.wet & mask)) / total


def wsr_all(depth: np.ndarray, case: DomainCase,
            threshold: float = FLOOD_THRESHOLD) -> np.ndarray:
    """Wet surface ratio of every floodplain subdomain, as an (S,) array."""
    ext = flood_extent(depth, threshold=threshold)
    return np.array([wsr(ext, case, s) for s in range(1, case.n_subdomains + 1)])
