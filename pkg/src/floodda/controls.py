"""Control vector of the ensemble analysis and its forward propagation.

The analyzed quantities are per-zone Strickler coefficients, one
multiplier on the upstream hydrograph and one additive depth correction
per floodplain subdomain, flattened in that fixed order. Sampling is
reproducible: member i draws from a generator seeded by (master seed, i),
so ensembles are identical under any execution order or worker count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import multiprocessing

import numpy as np

from . import altimetry, observations
from .domain import DomainCase
from .solver import HydroState, Hydrograph, RatingCurve, SolverParams, run

KS_BOUNDS = (5.0, 60.0)
QMULT_BOUNDS = (0.2, 3.0)
DH_BOUNDS = (-2.0, 2.0)


@dataclass
class ControlVector:
    ks: np.ndarray      # (Z,) Strickler coefficients, m^(1/3)/s
    q_mult: float       # multiplier on the upstream hydrograph
    dh: np.ndarray      # (S,) additive floodplain depth corrections, m

    def __post_init__(self):
        self.ks = np.asarray(self.ks, dtype=float)
        self.dh = np.asarray(self.dh, dtype=float)

    @property
    def dim(self):
        return len(self.ks) + 1 + len(self.dh)

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.ks, [self.q_mult], self.dh])

    @classmethod
    def unflatten(cls, vec, n_zones, n_subdomains):
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (n_zones + 1 + n_subdomains,):
            raise ValueError(f"control vector length {vec.shape} != "
                             f"{n_zones}+1+{n_subdomains}")
        return cls(ks=vec[:n_zones].copy(), q_mult=float(vec[n_zones]),
                   dh=vec[n_zones + 1:].copy())

    def clipped(self):
        return ControlVector(
            ks=np.clip(self.ks, *KS_BOUNDS),
            q_mult=float(np.clip(self.q_mult, *QMULT_BOUNDS)),
            dh=np.clip(self.dh, *DH_BOUNDS))

    def copy(self):
        return ControlVector(self.ks.copy(), self.q_mult, self.dh.copy())


def element_names(n_zones, n_subdomains):
    return ([f"ks{z}" for z in range(n_zones)] + ["q_mult"]
            + [f"dh{s}" for s in range(1, n_subdomains + 1)])


def clip_matrix(x, n_zones, n_subdomains):
    """Clip a (N, d) matrix of flattened controls to the element bounds."""
    x = np.array(x, dtype=float)
    x[:, :n_zones] = np.clip(x[:, :n_zones], *KS_BOUNDS)
    x[:, n_zones] = np.clip(x[:, n_zones], *QMULT_BOUNDS)
    x[:, n_zones + 1:] = np.clip(x[:, n_zones + 1:], *DH_BOUNDS)
    return x


@dataclass
class PerturbationSpec:
    """Element-wise Gaussian prior (mean, std) plus the master seed."""

    mean: np.ndarray
    std: np.ndarray
    master_seed: int
    n_zones: int
    n_subdomains: int

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.std = np.asarray(self.std, dtype=float)
        d = self.n_zones + 1 + self.n_subdomains
        if self.mean.shape != (d,) or self.std.shape != (d,):
            raise ValueError(f"mean/std must have length {d}")
        if np.any(self.std <= 0):
            raise ValueError("prior stds must be positive")

    @classmethod
    def default(cls, n_zones, n_subdomains, master_seed,
                ks_mean=30.0, ks_std=3.0, q_mean=1.0, q_std=0.15, dh_std=0.25):
        mean = np.concatenate([np.full(n_zones, ks_mean), [q_mean],
                               np.zeros(n_subdomains)])
        std = np.concatenate([np.full(n_zones, ks_std), [q_std],
                              np.full(n_subdomains, dh_std)])
        return cls(mean=mean, std=std, master_seed=master_seed,
                   n_zones=n_zones, n_subdomains=n_subdomains)


@dataclass
class Ensemble:
    members: list[ControlVector]
    member_seeds: list[int]
    states: list[HydroState] | None = None

    def __post_init__(self):
        if len(self.members) < 2:
            raise ValueError("ensemble needs at least 2 members")
        dims = {m.dim for m in self.members}
        if len(dims) != 1:
            raise ValueError("members have mixed dimensions")

    @property
    def n(self):
        return len(self.members)

    def matrix(self) -> np.ndarray:
        return np.stack([m.flatten() for m in self.members])

    def set_matrix(self, x):
        z = len(self.members[0].ks)
        s = len(self.members[0].dh)
        self.members = [ControlVector.unflatten(row, z, s) for row in np.asarray(x)]


def member_seed(master_seed, index) -> int:
    return int(np.random.SeedSequence((master_seed, index)).generate_state(1)[0])


def sample_prior(spec: PerturbationSpec, n: int) -> Ensemble:
    """Draw n members element-wise Gaussian, then clip to the bounds."""
    if n < 2:
        raise ValueError("ensemble size must be at least 2")
    members, seeds = [], []
    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence((spec.master_seed, i)))
        vec = spec.mean + spec.std * rng.standard_normal(spec.mean.shape)
        cv = ControlVector.unflatten(vec, spec.n_zones, spec.n_subdomains).clipped()
        members.append(cv)
        seeds.append(member_seed(spec.master_seed, i))
    return Ensemble(members=members, member_seeds=seeds)


def dump_ensemble(ens: Ensemble, path):
    z = len(ens.members[0].ks)
    s = len(ens.members[0].dh)
    with open(path, "w") as f:
        f.write(",".join(element_names(z, s)) + ",seed\n")
        for m, seed in zip(ens.members, ens.member_seeds):
            f.write(",".join(repr(v) for v in m.flatten().tolist()) + f",{seed}\n")


# -- applying a control to the forward model ----------------------------------

@dataclass
class ModelInputs:
    friction: np.ndarray
    forcing: Hydrograph
    state: HydroState


def apply_control(cv: ControlVector, case: DomainCase, baseline: Hydrograph,
                  restart: HydroState, h_dry: float = 1e-3) -> ModelInputs:
    """Model inputs for one member: zone friction, scaled forcing and the
    depth-corrected restart (floodplain cells only, clipped at zero)."""
    if len(cv.ks) != case.n_zones or len(cv.dh) != case.n_subdomains:
        raise ValueError("control dimensions do not match the case")
    state = restart.copy()
    if np.any(cv.dh != 0.0):
        dh_cell = np.concatenate([[0.0], cv.dh])[case.subdomain]
        state.h = np.maximum(0.0, state.h + dh_cell)
        dried = state.h < h_dry
        state.qx[dried] = 0.0
        state.qy[dried] = 0.0
    return ModelInputs(friction=cv.ks.copy(),
                       forcing=baseline.scaled(cv.q_mult),
                       state=state)


# -- windowed propagation with model equivalents ------------------------------

@dataclass
class WindowObsPlan:
    """Observation times inside one propagation window (t0, t1]."""

    gauge_times: list = field(default_factory=list)
    wsr_times: list = field(default_factory=list)
    node_obs: dict = field(default_factory=dict)   # t -> list[SwotNodeObs]
    eval_times: list = field(default_factory=list)

    def all_times(self):
        times = set(self.gauge_times) | set(self.wsr_times)
        times |= set(self.node_obs.keys()) | set(self.eval_times)
        return sorted(times)


@dataclass
class ModelEquivalents:
    gauge: np.ndarray       # (N, n_gauge_times, n_stations)
    wsr: np.ndarray         # (N, n_wsr_times, S)
    node: dict              # t -> (N, n_nodes), NaN where member is dry
    eval_depth: dict        # t -> (N, ny, nx) member depths


def _propagate_member(args):
    (cv, restart, case, baseline, outlet, t1, plan, params) = args
    inputs = apply_control(cv, case, baseline, restart, h_dry=params.h_dry)
    times = plan.all_times()
    out = run(inputs.state, case, inputs.friction, forcing=inputs.forcing,
              outlet=outlet, t_end=t1, record_times=times, params=params)
    snaps = dict(zip(times, out.snapshots))

    gauge = np.array([[observations.h_gauge(snaps[t], case, st)
                       for st in case.stations] for t in plan.gauge_times])
    wsr_vals = np.array([observations.wsr_all(snaps[t].h, case)
                         for t in plan.wsr_times])
    node_vals = {t: altimetry.h_swot_equiv(snaps[t], case, obs, h_dry=params.h_dry)
                 for t, obs in plan.node_obs.items()}
    eval_depth = {t: snaps[t].h.copy() for t in plan.eval_times}
    return out.final_state, gauge, wsr_vals, node_vals, eval_depth


def propagate(ens: Ensemble, case: DomainCase, baseline: Hydrograph,
              outlet: RatingCurve, window, plan: WindowObsPlan,
              params: SolverParams | None = None, workers: int = 1):
    """Run every member over ``window = (t0, t1]`` and collect equivalents.

    Members are independent; with ``workers > 1`` they run in separate
    processes. Results are assembled in member order, so the output is
    identical for any worker count.
    """
    t0, t1 = window
    params = params or SolverParams()
    if ens.states is None or len(ens.states) != ens.n:
        raise ValueError("ensemble has no restart states")
    for t in plan.all_times():
        if not t0 < t <= t1:
            raise ValueError(f"observation time {t} outside window ({t0}, {t1}]")
    jobs = [(ens.members[i], ens.states[i], case, baseline, outlet, t1, plan, params)
            for i in range(ens.n)]
    if workers > 1:
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            results = list(pool.map(_propagate_member, jobs))
    else:
        results = [_propagate_member(j) for j in jobs]

    n_stations = len(case.stations)
    new_states = [r[0] for r in results]
    gauge = (np.stack([r[1] for r in results]) if plan.gauge_times
             else np.zeros((ens.n, 0, n_stations)))
    wsr_vals = (np.stack([r[2] for r in results]) if plan.wsr_times
                else np.zeros((ens.n, 0, case.n_subdomains)))
    node = {t: np.stack([r[3][t] for r in results]) for t in plan.node_obs}
    eval_depth = {t: np.stack([r[4][t] for r in results]) for t in plan.eval_times}
    new_ens = Ensemble(members=[m.copy() for m in ens.members],
                       member_seeds=list(ens.member_seeds), states=new_states)
    equiv = ModelEquivalents(gauge=gauge, wsr=wsr_vals, node=node,
                             eval_depth=eval_depth)
    return new_ens, equiv
