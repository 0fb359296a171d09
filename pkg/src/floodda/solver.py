"""2D shallow-water forward model on the raster domain.

First-order finite volumes with Rusanov (local Lax-Friedrichs) interface
fluxes and hydrostatic bed-slope reconstruction, so a lake at rest over
uneven bathymetry is preserved to machine precision. The two directions
are applied as successive 1D sweeps (x then y) within each step, which
keeps the scheme stable at the CFL number used here; each sweep is
well-balanced and conservative on its own. Friction is a semi-implicit
Strickler update, depth positivity is enforced by scaling outgoing
interface fluxes (never by clipping mass), and the time step is
CFL-limited and shortened to land exactly on requested record times.

Boundaries are reflective walls except for an upstream discharge source
spread over the wet riverbed cells of the first column and a downstream
rating-curve sink on the riverbed cells of the last column. Injected and
extracted volumes are accumulated exactly as applied to the depth field,
so the mass ledger closes to rounding error.

The cell loops are compiled with numba; everything runs single-threaded
and in a fixed iteration order, which keeps results bit-reproducible
across runs and across any process-level parallelism above this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .asciigrid import write_ascii_grid, read_ascii_grid
from .domain import DomainCase

GRAVITY = 9.81

STATUS_OK = 0
STATUS_NONFINITE = 1
STATUS_DT_UNDERFLOW = 2

_VAR_NAMES = ("h", "qx", "qy")


class SolverError(RuntimeError):
    """Numerical abort inside the forward model."""


@dataclass
class SolverParams:
    g: float = GRAVITY
    cfl: float = 0.7
    h_dry: float = 1e-3      # m, depths below this carry no momentum
    dt_max: float = 30.0     # s
    dt_min: float = 1e-6     # s, smaller CFL steps abort
    check_every: int = 64    # steps between non-finite scans
    row_skip: bool = True    # skip all-dry rows (bit-exact shortcut)

    def as_array(self, dx):
        return np.array([self.g, self.cfl, self.h_dry, self.dt_max,
                         self.dt_min, dx, float(self.check_every),
                         1.0 if self.row_skip else 0.0])


@dataclass
class HydroState:
    """Water depth and unit discharges at one model time."""

    t: float
    h: np.ndarray   # (ny, nx) depth, m
    qx: np.ndarray  # (ny, nx) unit discharge, m^2/s
    qy: np.ndarray

    def copy(self):
        return HydroState(self.t, self.h.copy(), self.qx.copy(), self.qy.copy())

    @classmethod
    def still(cls, case: DomainCase, t: float = 0.0):
        shape = (case.grid.ny, case.grid.nx)
        return cls(t, np.zeros(shape), np.zeros(shape), np.zeros(shape))


@dataclass
class Hydrograph:
    """Piecewise-linear discharge series; constant beyond the breakpoints."""

    times: np.ndarray
    flows: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.flows = np.asarray(self.flows, dtype=float)
        if self.times.ndim != 1 or self.times.shape != self.flows.shape:
            raise ValueError("times and flows must be matching 1D arrays")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("hydrograph times must be strictly increasing")
        if np.any(self.flows <= 0):
            raise ValueError("hydrograph discharges must be positive")

    def discharge(self, t):
        return float(np.interp(t, self.times, self.flows))

    def cumulative_volume(self, t):
        """Exact integral of the hydrograph from its first breakpoint to t."""
        tb, qb = self.times, self.flows
        vb = np.concatenate([[0.0], np.cumsum(0.5 * (qb[1:] + qb[:-1]) * np.diff(tb))])
        return float(_cumvol(tb, qb, vb, float(t)))

    def scaled(self, mult):
        return Hydrograph(self.times.copy(), self.flows * mult)

    def save(self, path):
        with open(path, "w") as f:
            f.write("t_s,Q_m3s\n")
            for t, q in zip(self.times.tolist(), self.flows.tolist()):
                f.write(f"{t!r},{q!r}\n")

    @classmethod
    def load(cls, path):
        times, flows = [], []
        with open(path) as f:
            next(f)
            for line in f:
                t, q = line.split(",")
                times.append(float(t))
                flows.append(float(q))
        return cls(np.array(times), np.array(flows))


@dataclass
class RatingCurve:
    """Stage-discharge relation Q = a * max(h - h0, 0)**b at the outlet."""

    a: float
    h0: float = 0.0
    b: float = 5.0 / 3.0

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ValueError("rating curve needs a > 0 and b > 0")

    def discharge(self, h):
        return self.a * max(h - self.h0, 0.0) ** self.b


@dataclass
class RunOutput:
    record_times: list
    snapshots: list          # HydroState at each record time
    final_state: HydroState
    ledger: np.ndarray       # rows (t, inflow_m3, outflow_m3, storage_m3)

    def mass_residual(self):
        """|inflow - outflow - dstorage| relative to inflow, over the run."""
        first, last = self.ledger[0], self.ledger[-1]
        inflow = last[1] - first[1]
        outflow = last[2] - first[2]
        dstorage = last[3] - first[3]
        if inflow == 0.0:
            return abs(outflow + dstorage)
        return abs(inflow - outflow - dstorage) / inflow


# -- compiled kernels ---------------------------------------------------------

@njit(cache=True)
def _cumvol(tb, qb, vb, t):
    n = tb.shape[0]
    if t <= tb[0]:
        return qb[0] * (t - tb[0])
    if t >= tb[n - 1]:
        return vb[n - 1] + qb[n - 1] * (t - tb[n - 1])
    k = np.searchsorted(tb, t, side="right") - 1
    dt = t - tb[k]
    qt = qb[k] + (qb[k + 1] - qb[k]) * dt / (tb[k + 1] - tb[k])
    return vb[k] + 0.5 * (qb[k] + qt) * dt


@njit(cache=True)
def _advance(h, qx, qy, zb, kscell, inlet_j, outlet_j, tb, qb, vb, rc, par,
             t, t_target, have_bc, max_steps,
             u, v, fx0, fx1, fx2, fy0, fy1, fy2,
             hxl, hxr, hyl, hyr, theta, rowwet, rowact):
    """Advance the state in place until ``t_target``.

    Returns (t, inflow_added, outflow_removed, n_steps, status, bad_j, bad_i,
    bad_var). Scratch arrays are caller-allocated so repeated windows reuse
    them. Rows without any water (nor water in a neighbour row) are skipped
    wholesale; this is exact because all their fluxes and updates would be
    zero, and can be disabled with par[7] = 0 to verify just that.
    """
    g = par[0]
    cfl = par[1]
    h_dry = par[2]
    dt_max = par[3]
    dt_min = par[4]
    dx = par[5]
    check_every = int(par[6])
    row_skip = par[7] != 0.0
    ny, nx = h.shape
    inflow = 0.0
    outflow = 0.0
    nsteps = 0

    while t < t_target:
        # wet-row scan, velocities and the CFL bound in one pass
        smax = 0.0
        for j in range(ny):
            wet = not row_skip
            for i in range(nx):
                hij = h[j, i]
                if hij > 0.0:
                    wet = True
                    if hij >= h_dry:
                        uij = qx[j, i] / hij
                        vij = qy[j, i] / hij
                        u[j, i] = uij
                        v[j, i] = vij
                        s = math.sqrt(uij * uij + vij * vij) + math.sqrt(g * hij)
                    else:
                        u[j, i] = 0.0
                        v[j, i] = 0.0
                        s = math.sqrt(g * hij)
                    if s > smax:
                        smax = s
                else:
                    u[j, i] = 0.0
                    v[j, i] = 0.0
            rowwet[j] = wet

        for j in range(ny):
            act = rowwet[j]
            if j > 0:
                act = act or rowwet[j - 1]
            if j < ny - 1:
                act = act or rowwet[j + 1]
            rowact[j] = act

        dt = dt_max if smax == 0.0 else min(dt_max, cfl * dx / smax)
        if dt < dt_min:
            return t, inflow, outflow, nsteps, STATUS_DT_UNDERFLOW, -1, -1, -1
        if t + dt >= t_target:
            dt = t_target - t
            t_new = t_target
        else:
            t_new = t + dt
        coef = dt / dx

        # x sweep: per wet row, 1D Rusanov fluxes with hydrostatic
        # reconstruction, positivity limiting, then the x update
        for j in range(ny):
            if not rowwet[j]:
                continue
            for i in range(nx + 1):
                if i == 0:
                    hl = h[j, 0]; zl = zb[j, 0]; ul = -u[j, 0]; vl = v[j, 0]
                    hr = hl; zr = zl; ur = u[j, 0]; vr = vl
                elif i == nx:
                    hl = h[j, nx - 1]; zl = zb[j, nx - 1]; ul = u[j, nx - 1]; vl = v[j, nx - 1]
                    hr = hl; zr = zl; ur = -ul; vr = vl
                else:
                    hl = h[j, i - 1]; zl = zb[j, i - 1]; ul = u[j, i - 1]; vl = v[j, i - 1]
                    hr = h[j, i]; zr = zb[j, i]; ur = u[j, i]; vr = v[j, i]
                if hl <= 0.0 and hr <= 0.0:
                    fx0[j, i] = 0.0; fx1[j, i] = 0.0; fx2[j, i] = 0.0
                    hxl[j, i] = 0.0; hxr[j, i] = 0.0
                    continue
                zint = max(zl, zr)
                hls = hl + zl - zint
                if hls < 0.0:
                    hls = 0.0
                hrs = hr + zr - zint
                if hrs < 0.0:
                    hrs = 0.0
                hxl[j, i] = hls
                hxr[j, i] = hrs
                if hls <= 0.0 and hrs <= 0.0:
                    fx0[j, i] = 0.0; fx1[j, i] = 0.0; fx2[j, i] = 0.0
                    continue
                a = max(abs(ul) + math.sqrt(g * hls), abs(ur) + math.sqrt(g * hrs))
                qnl = hls * ul
                qnr = hrs * ur
                fx0[j, i] = 0.5 * (qnl + qnr) - 0.5 * a * (hrs - hls)
                fx1[j, i] = 0.5 * (qnl * ul + 0.5 * g * hls * hls
                                   + qnr * ur + 0.5 * g * hrs * hrs) \
                    - 0.5 * a * (qnr - qnl)
                fx2[j, i] = 0.5 * (hls * vl * ul + hrs * vr * ur) \
                    - 0.5 * a * (hrs * vr - hls * vl)

            for i in range(nx):
                out = 0.0
                if fx0[j, i] < 0.0:
                    out -= fx0[j, i]
                if fx0[j, i + 1] > 0.0:
                    out += fx0[j, i + 1]
                outd = coef * out
                theta[j, i] = h[j, i] / outd if outd > h[j, i] else 1.0

            for i in range(nx):
                fl = fx0[j, i]
                fr = fx0[j, i + 1]
                if h[j, i] == 0.0 and fl == 0.0 and fr == 0.0 \
                        and hxl[j, i + 1] == 0.0 and hxr[j, i] == 0.0:
                    continue
                sl = 1.0
                if fl > 0.0 and i > 0:
                    sl = theta[j, i - 1]
                elif fl < 0.0:
                    sl = theta[j, i]
                sr = 1.0
                if fr > 0.0:
                    sr = theta[j, i]
                elif fr < 0.0 and i < nx - 1:
                    sr = theta[j, i + 1]
                hnew = h[j, i] + coef * (fl * sl - fr * sr)
                if hnew < 0.0:
                    hnew = 0.0  # guards rounding residue; the limiter holds the bound
                qx[j, i] += coef * (fx1[j, i] * sl - fx1[j, i + 1] * sr) \
                    + coef * 0.5 * g * (hxl[j, i + 1] * hxl[j, i + 1]
                                        - hxr[j, i] * hxr[j, i])
                qy[j, i] += coef * (fx2[j, i] * sl - fx2[j, i + 1] * sr)
                h[j, i] = hnew

        # velocities on the x-updated state (wet rows only; a dry row
        # cannot gain water from the x sweep)
        for j in range(ny):
            if not rowwet[j]:
                continue
            for i in range(nx):
                hij = h[j, i]
                if hij >= h_dry:
                    u[j, i] = qx[j, i] / hij
                    v[j, i] = qy[j, i] / hij
                else:
                    u[j, i] = 0.0
                    v[j, i] = 0.0

        # y sweep: interface row j touches cell rows j-1 and j
        for j in range(ny + 1):
            lo_act = rowact[j - 1] if j > 0 else False
            hi_act = rowact[j] if j < ny else False
            if not (lo_act or hi_act):
                continue
            for i in range(nx):
                if j == 0:
                    hl = h[0, i]; zl = zb[0, i]; ul = u[0, i]; vl = -v[0, i]
                    hr = hl; zr = zl; ur = ul; vr = v[0, i]
                elif j == ny:
                    hl = h[ny - 1, i]; zl = zb[ny - 1, i]; ul = u[ny - 1, i]; vl = v[ny - 1, i]
                    hr = hl; zr = zl; ur = ul; vr = -vl
                else:
                    hl = h[j - 1, i]; zl = zb[j - 1, i]; ul = u[j - 1, i]; vl = v[j - 1, i]
                    hr = h[j, i]; zr = zb[j, i]; ur = u[j, i]; vr = v[j, i]
                if hl <= 0.0 and hr <= 0.0:
                    fy0[j, i] = 0.0; fy1[j, i] = 0.0; fy2[j, i] = 0.0
                    hyl[j, i] = 0.0; hyr[j, i] = 0.0
                    continue
                zint = max(zl, zr)
                hls = hl + zl - zint
                if hls < 0.0:
                    hls = 0.0
                hrs = hr + zr - zint
                if hrs < 0.0:
                    hrs = 0.0
                hyl[j, i] = hls
                hyr[j, i] = hrs
                if hls <= 0.0 and hrs <= 0.0:
                    fy0[j, i] = 0.0; fy1[j, i] = 0.0; fy2[j, i] = 0.0
                    continue
                a = max(abs(vl) + math.sqrt(g * hls), abs(vr) + math.sqrt(g * hrs))
                qnl = hls * vl
                qnr = hrs * vr
                fy0[j, i] = 0.5 * (qnl + qnr) - 0.5 * a * (hrs - hls)
                fy1[j, i] = 0.5 * (hls * ul * vl + hrs * ur * vr) \
                    - 0.5 * a * (hrs * ur - hls * ul)
                fy2[j, i] = 0.5 * (qnl * vl + 0.5 * g * hls * hls
                                   + qnr * vr + 0.5 * g * hrs * hrs) \
                    - 0.5 * a * (qnr - qnl)

        for j in range(ny):
            if not rowact[j]:
                continue
            for i in range(nx):
                out = 0.0
                if fy0[j, i] < 0.0:
                    out -= fy0[j, i]
                if fy0[j + 1, i] > 0.0:
                    out += fy0[j + 1, i]
                outd = coef * out
                theta[j, i] = h[j, i] / outd if outd > h[j, i] else 1.0

        # y update plus semi-implicit friction on the fully updated state
        for j in range(ny):
            if not rowact[j]:
                continue
            for i in range(nx):
                fb = fy0[j, i]
                ft = fy0[j + 1, i]
                if h[j, i] == 0.0 and fb == 0.0 and ft == 0.0 \
                        and hyl[j + 1, i] == 0.0 and hyr[j, i] == 0.0:
                    continue
                sb = 1.0
                if fb > 0.0 and j > 0:
                    sb = theta[j - 1, i]
                elif fb < 0.0:
                    sb = theta[j, i]
                st = 1.0
                if ft > 0.0:
                    st = theta[j, i]
                elif ft < 0.0 and j < ny - 1:
                    st = theta[j + 1, i]
                hnew = h[j, i] + coef * (fb * sb - ft * st)
                if hnew < 0.0:
                    hnew = 0.0
                qxn = qx[j, i] + coef * (fy1[j, i] * sb - fy1[j + 1, i] * st)
                qyn = qy[j, i] + coef * (fy2[j, i] * sb - fy2[j + 1, i] * st) \
                    + coef * 0.5 * g * (hyl[j + 1, i] * hyl[j + 1, i]
                                        - hyr[j, i] * hyr[j, i])
                if hnew < h_dry:
                    qxn = 0.0
                    qyn = 0.0
                else:
                    ks = kscell[j, i]
                    un = math.sqrt(qxn * qxn + qyn * qyn) / hnew
                    if un > 0.0:
                        denom = 1.0 + dt * g * un / (ks * ks * hnew ** (4.0 / 3.0))
                        qxn /= denom
                        qyn /= denom
                h[j, i] = hnew
                qx[j, i] = qxn
                qy[j, i] = qyn

        if have_bc:
            # upstream source: spread V over wet inlet riverbed cells ~ h^(5/3)
            vol = _cumvol(tb, qb, vb, t_new) - _cumvol(tb, qb, vb, t)
            if vol > 0.0 and inlet_j.shape[0] > 0:
                wsum = 0.0
                for k in range(inlet_j.shape[0]):
                    hij = h[inlet_j[k], 0]
                    if hij >= h_dry:
                        wsum += hij ** (5.0 / 3.0)
                area = dx * dx
                if wsum > 0.0:
                    for k in range(inlet_j.shape[0]):
                        jj = inlet_j[k]
                        hij = h[jj, 0]
                        if hij >= h_dry:
                            dh = vol * (hij ** (5.0 / 3.0) / wsum) / area
                            f = (hij + dh) / hij
                            qx[jj, 0] *= f
                            qy[jj, 0] *= f
                            h[jj, 0] = hij + dh
                            inflow += dh * area
                else:
                    dh = vol / (inlet_j.shape[0] * area)
                    for k in range(inlet_j.shape[0]):
                        h[inlet_j[k], 0] += dh
                        inflow += dh * area

            # downstream rating-curve sink on outlet riverbed cells
            stage = 0.0
            if outlet_j.shape[0] > 0:
                for k in range(outlet_j.shape[0]):
                    stage += h[outlet_j[k], nx - 1]
                stage /= outlet_j.shape[0]
            if stage > rc[1]:
                qout = rc[0] * (stage - rc[1]) ** rc[2]
                vout = qout * dt
                wsum = 0.0
                for k in range(outlet_j.shape[0]):
                    hij = h[outlet_j[k], nx - 1]
                    if hij >= h_dry:
                        wsum += hij ** (5.0 / 3.0)
                if wsum > 0.0:
                    area = dx * dx
                    for k in range(outlet_j.shape[0]):
                        jj = outlet_j[k]
                        hij = h[jj, nx - 1]
                        if hij >= h_dry:
                            dh = vout * (hij ** (5.0 / 3.0) / wsum) / area
                            if dh > hij:
                                dh = hij
                            hnew = hij - dh
                            f = hnew / hij
                            qx[jj, nx - 1] *= f
                            qy[jj, nx - 1] *= f
                            h[jj, nx - 1] = hnew
                            outflow += dh * area

        t = t_new
        nsteps += 1
        if nsteps >= max_steps:
            t_target = t
        if nsteps % check_every == 0 or t >= t_target:
            for j in range(ny):
                for i in range(nx):
                    if not math.isfinite(h[j, i]):
                        return t, inflow, outflow, nsteps, STATUS_NONFINITE, j, i, 0
                    if not math.isfinite(qx[j, i]):
                        return t, inflow, outflow, nsteps, STATUS_NONFINITE, j, i, 1
                    if not math.isfinite(qy[j, i]):
                        return t, inflow, outflow, nsteps, STATUS_NONFINITE, j, i, 2

    return t, inflow, outflow, nsteps, STATUS_OK, -1, -1, -1


# -- python driver ------------------------------------------------------------

class _Workspace:
    """Scratch arrays reused across advance calls for one grid shape."""

    def __init__(self, ny, nx):
        self.u = np.zeros((ny, nx))
        self.v = np.zeros((ny, nx))
        self.fx0 = np.zeros((ny, nx + 1))
        self.fx1 = np.zeros((ny, nx + 1))
        self.fx2 = np.zeros((ny, nx + 1))
        self.fy0 = np.zeros((ny + 1, nx))
        self.fy1 = np.zeros((ny + 1, nx))
        self.fy2 = np.zeros((ny + 1, nx))
        self.hxl = np.zeros((ny, nx + 1))
        self.hxr = np.zeros((ny, nx + 1))
        self.hyl = np.zeros((ny + 1, nx))
        self.hyr = np.zeros((ny + 1, nx))
        self.theta = np.zeros((ny, nx))
        self.rowwet = np.zeros(ny, dtype=np.bool_)
        self.rowact = np.zeros(ny, dtype=np.bool_)

    def args(self):
        return (self.u, self.v, self.fx0, self.fx1, self.fx2,
                self.fy0, self.fy1, self.fy2,
                self.hxl, self.hxr, self.hyl, self.hyr,
                self.theta, self.rowwet, self.rowact)


_EMPTY_J = np.zeros(0, dtype=np.int64)
_NO_FORCING = (np.array([0.0, 1.0]), np.array([1.0, 1.0]), np.array([0.0, 1.0]))
_NO_RATING = np.array([1.0, 1e30, 1.0])


def ks_per_cell(case: DomainCase, ks):
    ks = np.asarray(ks, dtype=float)
    if ks.shape != (case.n_zones,):
        raise ValueError(f"need {case.n_zones} friction values, got shape {ks.shape}")
    if np.any(ks < 5.0) or np.any(ks > 60.0):
        raise ValueError("friction coefficients outside [5, 60]")
    return ks[case.friction_zone]


def boundary_cells(case: DomainCase):
    """Row indices of riverbed cells on the inlet and outlet columns."""
    inlet = np.where(case.subdomain[:, 0] == 0)[0].astype(np.int64)
    outlet = np.where(case.subdomain[:, -1] == 0)[0].astype(np.int64)
    return inlet, outlet


def _bc_arrays(case, forcing, outlet):
    if forcing is None and outlet is None:
        return False, _EMPTY_J, _EMPTY_J, *_NO_FORCING, _NO_RATING
    inlet_j, outlet_j = boundary_cells(case)
    if forcing is not None:
        if len(inlet_j) == 0:
            raise ValueError("no riverbed cells on the inlet column")
        tb = forcing.times
        qb = forcing.flows
        vb = np.concatenate([[0.0], np.cumsum(0.5 * (qb[1:] + qb[:-1]) * np.diff(tb))])
    else:
        tb, qb, vb = _NO_FORCING
        inlet_j = _EMPTY_J
    if outlet is not None:
        if len(outlet_j) == 0:
            raise ValueError("no riverbed cells on the outlet column")
        rc = np.array([outlet.a, outlet.h0, outlet.b])
    else:
        rc = _NO_RATING
        outlet_j = _EMPTY_J
    return True, inlet_j, outlet_j, tb, qb, vb, rc


def _check_state(state, case, h_dry):
    shape = (case.grid.ny, case.grid.nx)
    for name in _VAR_NAMES:
        arr = getattr(state, name)
        if arr.shape != shape:
            raise ValueError(f"state field {name} has shape {arr.shape}, expected {shape}")
    if np.any(state.h < 0) or not np.isfinite(state.h).all():
        raise ValueError("state depth must be finite and non-negative")
    dry = state.h < h_dry
    state.qx[dry] = 0.0
    state.qy[dry] = 0.0


def _raise_status(status, bad_j, bad_i, bad_var, t):
    if status == STATUS_NONFINITE:
        raise SolverError(
            f"non-finite {_VAR_NAMES[bad_var]} at cell (i={bad_i}, j={bad_j}), t={t}")
    if status == STATUS_DT_UNDERFLOW:
        raise SolverError(f"unstable configuration: dt underflow at t={t}")


def step(state: HydroState, case: DomainCase, friction, forcing=None, outlet=None,
         dt_max=None, params: SolverParams | None = None) -> HydroState:
    """Advance a single finite-volume step (dt chosen by the CFL limit)."""
    params = params or SolverParams()
    if dt_max is None:
        dt_max = params.dt_max
    new = state.copy()
    _check_state(new, case, params.h_dry)
    kscell = ks_per_cell(case, friction)
    have_bc, inlet_j, outlet_j, tb, qb, vb, rc = _bc_arrays(case, forcing, outlet)
    ws = _Workspace(case.grid.ny, case.grid.nx)
    par = params.as_array(case.grid.dx)
    par[3] = dt_max
    par[6] = 1.0  # check finiteness after the single step
    t, inflow, outflow, nsteps, status, bj, bi, bv = _advance(
        new.h, new.qx, new.qy, case.zb, kscell, inlet_j, outlet_j,
        tb, qb, vb, rc, par, state.t, state.t + dt_max, have_bc, 1, *ws.args())
    _raise_status(status, bj, bi, bv, t)
    new.t = t
    return new


def run(state0: HydroState, case: DomainCase, friction, forcing=None, outlet=None,
        t_end=None, record_times=(), params: SolverParams | None = None) -> RunOutput:
    """Integrate from ``state0`` to ``t_end`` landing exactly on record times."""
    params = params or SolverParams()
    if t_end is None:
        raise ValueError("t_end is required")
    if t_end < state0.t:
        raise ValueError(f"t_end {t_end} before state time {state0.t}")
    record_times = [float(t) for t in record_times]
    if sorted(record_times) != record_times:
        raise ValueError("record_times must be sorted")
    if record_times and (record_times[0] < state0.t or record_times[-1] > t_end):
        raise ValueError("record_times outside [state0.t, t_end]")
    state = state0.copy()
    _check_state(state, case, params.h_dry)

    kscell = ks_per_cell(case, friction)
    have_bc, inlet_j, outlet_j, tb, qb, vb, rc = _bc_arrays(case, forcing, outlet)
    ws = _Workspace(case.grid.ny, case.grid.nx)
    par = params.as_array(case.grid.dx)
    area = case.grid.dx ** 2

    inflow_cum = 0.0
    outflow_cum = 0.0
    snapshots = []
    ledger = []

    def record(t):
        snapshots.append(state.copy())
        ledger.append((t, inflow_cum, outflow_cum, float(state.h.sum()) * area))

    targets = sorted(set(record_times) | {t_end})
    pending = list(record_times)
    if pending and pending[0] == state.t:
        while pending and pending[0] == state.t:
            record(state.t)
            pending.pop(0)
    for t_target in targets:
        if t_target <= state.t:
            continue
        t, inflow, outflow, nsteps, status, bj, bi, bv = _advance(
            state.h, state.qx, state.qy, case.zb, kscell, inlet_j, outlet_j,
            tb, qb, vb, rc, par, state.t, t_target, have_bc, 1 << 62, *ws.args())
        inflow_cum += inflow
        outflow_cum += outflow
        state.t = t
        _raise_status(status, bj, bi, bv, t)
        while pending and pending[0] == t_target:
            record(t_target)
            pending.pop(0)
    if not ledger or ledger[-1][0] != state.t:
        ledger.append((state.t, inflow_cum, outflow_cum, float(state.h.sum()) * area))
    return RunOutput(record_times=record_times, snapshots=snapshots,
                     final_state=state, ledger=np.array(ledger))


# -- observation helpers ------------------------------------------------------

def wse_at(state: HydroState, case: DomainCase, cell) -> float:
    """Water surface elevation zb + h at cell (i, j)."""
    i, j = cell
    return float(case.zb[j, i] + state.h[j, i])


def wse_interp(state: HydroState, case: DomainCase, point, h_dry=1e-3):
    """Bilinear WSE at a point from the 4 surrounding cell centers.

    Dry cells (h < h_dry) are excluded and the weights renormalized;
    returns None when all four are dry.
    """
    x, y = point
    g = case.grid
    xmin, xmax, ymin, ymax = g.extent()
    if not (xmin <= x <= xmax and ymin <= y <= ymax):
        raise ValueError(f"point {point} outside grid extent")
    fi = (x - g.origin[0]) / g.dx
    fj = (y - g.origin[1]) / g.dx
    i0 = int(min(max(math.floor(fi), 0), g.nx - 2))
    j0 = int(min(max(math.floor(fj), 0), g.ny - 2))
    wx = min(max(fi - i0, 0.0), 1.0)
    wy = min(max(fj - j0, 0.0), 1.0)
    weights = ((1 - wx) * (1 - wy), wx * (1 - wy), (1 - wx) * wy, wx * wy)
    cells = ((i0, j0), (i0 + 1, j0), (i0, j0 + 1), (i0 + 1, j0 + 1))
    wet_w, acc, wet_vals = 0.0, 0.0, []
    for w, (i, j) in zip(weights, cells):
        if state.h[j, i] >= h_dry:
            wse = case.zb[j, i] + state.h[j, i]
            wet_vals.append(wse)
            wet_w += w
            acc += w * wse
    if not wet_vals:
        return None
    if wet_w <= 0.0:
        return float(sum(wet_vals) / len(wet_vals))
    return float(acc / wet_w)


# -- snapshot archive ---------------------------------------------------------

def fmt_time(t) -> str:
    return str(int(t)) if float(t) == int(t) else repr(float(t))


def save_snapshots(out: RunOutput, case: DomainCase, outdir):
    """Write h_<t>.asc per record time plus the ledger.csv."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    g = case.grid
    xll, yll = g.origin[0] - 0.5 * g.dx, g.origin[1] - 0.5 * g.dx
    for t, snap in zip(out.record_times, out.snapshots):
        write_ascii_grid(outdir / f"h_{fmt_time(t)}.asc", snap.h, g.dx, xll, yll)
    with open(outdir / "ledger.csv", "w") as f:
        f.write("t,inflow_m3,outflow_m3,storage_m3\n")
        for t, qin, qout, stor in out.ledger.tolist():
            f.write(f"{fmt_time(t)},{qin!r},{qout!r},{stor!r}\n")


def load_depth(rundir, t) -> np.ndarray:
    data, _, _, _ = read_ascii_grid(Path(rundir) / f"h_{fmt_time(t)}.asc")
    return data
