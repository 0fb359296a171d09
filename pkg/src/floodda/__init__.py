"""Desk-scale multi-source flood data assimilation twin experiments.

A 2D shallow-water forward model, a stochastic ensemble Kalman filter
with joint state-parameter analysis, and synthetic observation pipelines
for stream gauges, SAR-like flood extents (wet surface ratios) and
swath-altimetry node heights, wired into a reproducible OSSE harness.
"""

__version__ = "0.1.0"

from .anamorphosis import Anamorphosis, anamorphosis_fit
from .controls import ControlVector, Ensemble, PerturbationSpec, sample_prior
from .domain import CaseSpec, DomainCase, RasterGrid, build_synthetic_reach
from .enkf import AnalysisBatch, analysis, inflate, stack_sources
from .solver import HydroState, Hydrograph, RatingCurve, run, step

__all__ = [
    "Anamorphosis", "anamorphosis_fit",
    "ControlVector", "Ensemble", "PerturbationSpec", "sample_prior",
    "CaseSpec", "DomainCase", "RasterGrid", "build_synthetic_reach",
    "AnalysisBatch", "analysis", "inflate", "stack_sources",
    "HydroState", "Hydrograph", "RatingCurve", "run", "step",
    "__version__",
]
