"""Empirical Gaussian anamorphosis for bounded, non-Gaussian observables.

Wet-surface ratios live in [0, 1] and are strongly non-Gaussian, which
breaks the Gaussian error assumption of the ensemble analysis. The fix is
a monotone piecewise-linear map fitted on the ensemble itself: the k-th
order statistic is paired with the standard-normal quantile of rank
(k - 1/2)/n, exact ties are collapsed, and queries beyond the support are
extrapolated with the end-segment slope but clamped to the outermost
quantiles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm


@dataclass
class Anamorphosis:
    """Monotone map between physical values and Gaussian deviates."""

    support: np.ndarray   # strictly increasing physical values
    gaussian: np.ndarray  # strictly increasing Gaussian values
    g_clamp: float = 0.0  # Phi^-1(1 - 0.5/n), the no-tie extreme quantile
    degenerate: bool = False

    def transform(self, x):
        if self.degenerate:
            return np.zeros_like(np.asarray(x, dtype=float)) if np.ndim(x) else 0.0
        psi, g = self.support, self.gaussian
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        out = np.interp(x, psi, g)
        if len(psi) > 1:
            lo_slope = (g[1] - g[0]) / (psi[1] - psi[0])
            hi_slope = (g[-1] - g[-2]) / (psi[-1] - psi[-2])
            below = x < psi[0]
            above = x > psi[-1]
            out[below] = g[0] + lo_slope * (x[below] - psi[0])
            out[above] = g[-1] + hi_slope * (x[above] - psi[-1])
        out = np.clip(out, -self.g_clamp, self.g_clamp)
        return float(out[0]) if scalar else out

    def inverse(self, g_val):
        if self.degenerate:
            v = float(self.support[0])
            return np.full_like(np.asarray(g_val, dtype=float), v) if np.ndim(g_val) else v
        g_val = np.asarray(g_val, dtype=float)
        scalar = g_val.ndim == 0
        g_val = np.atleast_1d(g_val)
        out = np.interp(g_val, self.gaussian, self.support)
        out = np.clip(out, 0.0, 1.0)
        return float(out[0]) if scalar else out


def anamorphosis_fit(values) -> Anamorphosis:
    """Fit the empirical map on ensemble values (needs at least 3)."""
    values = np.asarray(values, dtype=float)
    if values.size < 3:
        raise ValueError(f"need at least 3 values, got {values.size}")
    n = values.size
    order = np.sort(values)
    gk = norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    if order[0] == order[-1]:
        return Anamorphosis(support=order[:1], gaussian=np.zeros(1), degenerate=True)
    # collapse exact ties to a single support point at their mean quantile
    psi, g = [], []
    k = 0
    while k < n:
        m = k
        while m + 1 < n and order[m + 1] == order[k]:
            m += 1
        psi.append(order[k])
        g.append(gk[k:m + 1].mean())
        k = m + 1
    return Anamorphosis(support=np.array(psi), gaussian=np.array(g),
                        g_clamp=float(-norm.ppf(0.5 / n)))
