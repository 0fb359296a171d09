"""Stochastic ensemble Kalman analysis over the augmented control vector.

Perturbed-observation EnKF: sample cross- and innovation covariances from
the ensemble, gain through a symmetric positive-definite solve (never an
explicit inverse), one perturbed observation vector per member drawn from
a generator tied to that member's seed. Heterogeneous sources are stacked
into one batch; wet-surface-ratio rows pass through a Gaussian
anamorphosis fitted on the member equivalents of each row.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .anamorphosis import anamorphosis_fit
from .controls import clip_matrix

SOURCE_GAUGE = "gauge"
SOURCE_WSR = "wsr"
SOURCE_NODE = "node"

MISSING_MEMBER_LIMIT = 0.2   # observations missing for more members are dropped


class AnalysisError(RuntimeError):
    """Numerical abort inside the analysis step."""


@dataclass(frozen=True)
class ObsTag:
    source: str
    ident: str
    t: float


@dataclass
class SourceToggles:
    in_situ: bool = True
    s1: bool = True
    swot: bool = True


@dataclass
class AnalysisBatch:
    """Everything the analysis needs, already in observation space.

    ``y_members`` may contain NaN where a member equivalent is missing;
    construction drops observations missing for more than 20% of members.
    WSR rows arrive here already anamorphosed.
    """

    x: np.ndarray           # (N, d) flattened control vectors
    y_members: np.ndarray   # (N, m) model equivalents
    y_obs: np.ndarray       # (m,) observation vector
    r: np.ndarray           # (m,) observation error variances
    tags: list = field(default_factory=list)

    def __post_init__(self):
        n, m = self.y_members.shape
        if self.x.shape[0] != n:
            raise ValueError("x and y_members disagree on ensemble size")
        if n < 2:
            raise ValueError("need at least 2 members")
        keep = np.isnan(self.y_members).mean(axis=0) <= MISSING_MEMBER_LIMIT
        if not keep.all():
            self.y_members = self.y_members[:, keep]
            self.y_obs = self.y_obs[keep]
            self.r = self.r[keep]
            self.tags = [t for t, k in zip(self.tags, keep) if k]

    @property
    def m(self):
        return len(self.y_obs)


def _filled_equivalents(batch: AnalysisBatch) -> np.ndarray:
    """Member equivalents with missing entries replaced by the column mean."""
    y = np.array(batch.y_members, dtype=float)
    col_mean = np.nanmean(y, axis=0)
    nan_r, nan_c = np.nonzero(np.isnan(y))
    y[nan_r, nan_c] = col_mean[nan_c]
    return y


def kalman_gain(batch: AnalysisBatch) -> np.ndarray:
    """Ensemble gain K = Cxy (Cyy + R)^-1 via an SPD solve, no inverse."""
    x = np.asarray(batch.x, dtype=float)
    n = x.shape[0]
    y = _filled_equivalents(batch)
    xa = x - x.mean(axis=0)
    ya = y - y.mean(axis=0)
    cxy = xa.T @ ya / (n - 1)
    cyy = ya.T @ ya / (n - 1)
    s = cyy + np.diag(batch.r)
    s = 0.5 * (s + s.T)
    try:
        return cho_solve(cho_factor(s, lower=True), cxy.T).T
    except LinAlgError as err:
        raise AnalysisError("degenerate innovation covariance") from err


def analysis(batch: AnalysisBatch, seed, member_seeds=None, perturb_obs=True,
             clip=None) -> np.ndarray:
    """One stochastic EnKF update; returns the updated (N, d) matrix.

    Observation perturbations for member i come from a generator seeded
    by (seed, member_seeds[i]), so permuting members (with their seeds)
    only permutes the output rows. ``clip=(n_zones, n_subdomains)``
    applies the control bounds afterwards.
    """
    x = np.asarray(batch.x, dtype=float)
    n, d = x.shape
    if batch.m == 0:
        out = x.copy()
        return clip_matrix(out, *clip) if clip else out

    y = _filled_equivalents(batch)
    gain = kalman_gain(batch)

    if member_seeds is None:
        member_seeds = list(range(n))
    sigma = np.sqrt(batch.r)
    out = np.empty_like(x)
    for i in range(n):
        if perturb_obs:
            rng = np.random.default_rng(np.random.SeedSequence((seed, member_seeds[i])))
            eps = sigma * rng.standard_normal(batch.m)
        else:
            eps = 0.0
        out[i] = x[i] + gain @ (batch.y_obs + eps - y[i])
    return clip_matrix(out, *clip) if clip else out


def inflate(x, lam) -> np.ndarray:
    """Multiplicative inflation of ensemble anomalies about the mean."""
    if lam < 1.0:
        raise ValueError(f"inflation factor must be >= 1, got {lam}")
    x = np.array(x, dtype=float)
    if lam == 1.0:
        return x
    mean = x.mean(axis=0)
    return mean + lam * (x - mean)


def stack_sources(x, toggles: SourceToggles,
                  gauge_obs=(), gauge_equiv=None,
                  wsr_obs=(), wsr_equiv=None, sigma_g=0.2,
                  node_obs=(), node_equiv=None) -> AnalysisBatch | None:
    """Concatenate the toggled sources into one analysis batch.

    Row order is gauges (station, then time), WSR (subdomain, then time),
    nodes (node id, then time). Each WSR row is transformed with an
    anamorphosis fitted on its member equivalents; rows whose equivalents
    are all identical (degenerate map) are dropped. Returns None when no
    rows survive.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    cols, yv, rv, tags = [], [], [], []

    if toggles.in_situ and len(gauge_obs):
        order = sorted(range(len(gauge_obs)),
                       key=lambda k: (gauge_obs[k].station, gauge_obs[k].t))
        for k in order:
            o = gauge_obs[k]
            cols.append(gauge_equiv[:, k])
            yv.append(o.wse)
            rv.append(o.sigma ** 2)
            tags.append(ObsTag(SOURCE_GAUGE, o.station, o.t))

    if toggles.s1 and len(wsr_obs):
        order = sorted(range(len(wsr_obs)),
                       key=lambda k: (wsr_obs[k].subdomain, wsr_obs[k].t))
        for k in order:
            o = wsr_obs[k]
            col = wsr_equiv[:, k]
            ana = anamorphosis_fit(col)
            if ana.degenerate:
                continue
            cols.append(ana.transform(col))
            yv.append(float(ana.transform(o.ratio)))
            rv.append(o.sigma_g ** 2)
            tags.append(ObsTag(SOURCE_WSR, str(o.subdomain), o.t))

    if toggles.swot and len(node_obs):
        order = sorted(range(len(node_obs)),
                       key=lambda k: (node_obs[k].node_id, node_obs[k].t))
        for k in order:
            o = node_obs[k]
            cols.append(node_equiv[:, k])
            yv.append(o.wse)
            rv.append(o.sigma ** 2)
            tags.append(ObsTag(SOURCE_NODE, str(o.node_id), o.t))

    if not cols:
        return None
    return AnalysisBatch(x=x, y_members=np.column_stack(cols),
                         y_obs=np.array(yv), r=np.array(rv), tags=tags)


def write_analysis_diagnostics(path, batch: AnalysisBatch | None,
                               x_before, x_after, names):
    """Per-cycle diagnostic: observation misfits and control statistics."""
    x_before = np.asarray(x_before, dtype=float)
    x_after = np.asarray(x_after, dtype=float)
    with open(path, "w") as f:
        f.write("source,id,t,y,mean_y_before\n")
        if batch is not None and batch.m:
            mean_y = np.nanmean(batch.y_members, axis=0)
            for tag, yk, myk in zip(batch.tags, batch.y_obs.tolist(), mean_y.tolist()):
                f.write(f"{tag.source},{tag.ident},{tag.t!r},{yk!r},{myk!r}\n")
        f.write("element,mean_before,std_before,mean_after,std_after\n")
        for k, name in enumerate(names):
            f.write(f"{name},"
                    f"{float(x_before[:, k].mean())!r},{float(x_before[:, k].std())!r},"
                    f"{float(x_after[:, k].mean())!r},{float(x_after[:, k].std())!r}\n")
