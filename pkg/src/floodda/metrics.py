"""Skill metrics: station RMSE, contingency maps and the CSI score.

The scoring convention matches the observation side of the toolkit: a
cell counts as flooded when its depth reaches 5 cm, and contingency maps
are evaluated on the riverbed-plus-floodplain mask (which excludes
nothing on the synthetic reach but keeps the scoring honest on cases
with inactive cells).

Contingency cell codes: 0 correct negative, 1 hit, 2 miss, 3 false alarm.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .asciigrid import read_ascii_grid, write_ascii_grid, NODATA
from .observations import FLOOD_THRESHOLD
from .solver import fmt_time

CORRECT_NEGATIVE = 0
HIT = 1
MISS = 2
FALSE_ALARM = 3


@dataclass
class ContingencyMap:
    t: float
    categories: np.ndarray  # (ny, nx) int8 codes, NODATA outside the mask
    mask: np.ndarray        # (ny, nx) bool

    def counts(self):
        """(hits, misses, false_alarms, correct_negatives) inside the mask."""
        c = self.categories[self.mask]
        return (int(np.count_nonzero(c == HIT)),
                int(np.count_nonzero(c == MISS)),
                int(np.count_nonzero(c == FALSE_ALARM)),
                int(np.count_nonzero(c == CORRECT_NEGATIVE)))


@dataclass
class ScoreTable:
    experiments: list
    stations: list
    times: list
    rmse: dict   # (experiment, station) -> m
    csi: dict    # (experiment, t) -> ratio or None


def rmse(pred_times, pred_values, truth_times, truth_values) -> float:
    """RMSE of predicted vs truth series, predicted resampled onto truth times."""
    pred_times = np.asarray(pred_times, dtype=float)
    pred_values = np.asarray(pred_values, dtype=float)
    truth_times = np.asarray(truth_times, dtype=float)
    truth_values = np.asarray(truth_values, dtype=float)
    if len(pred_times) == 0 or len(truth_times) == 0:
        raise ValueError("empty series")
    inside = (truth_times >= pred_times[0]) & (truth_times <= pred_times[-1])
    if not inside.any():
        raise ValueError("no overlap between predicted and truth time ranges")
    resampled = np.interp(truth_times[inside], pred_times, pred_values)
    err = resampled - truth_values[inside]
    return float(np.sqrt(np.mean(err ** 2)))


def contingency(pred_wet, truth_wet, mask=None, t: float = 0.0) -> ContingencyMap:
    """Per-cell classification of predicted vs truth flood extent."""
    pred_wet = np.asarray(pred_wet, dtype=bool)
    truth_wet = np.asarray(truth_wet, dtype=bool)
    if pred_wet.shape != truth_wet.shape:
        raise ValueError("extent grids have different shapes")
    if mask is None:
        mask = np.ones(pred_wet.shape, dtype=bool)
    if mask.shape != pred_wet.shape:
        raise ValueError("mask shape mismatch")
    cat = np.full(pred_wet.shape, NODATA, dtype=np.int32)
    cat[mask & pred_wet & truth_wet] = HIT
    cat[mask & ~pred_wet & truth_wet] = MISS
    cat[mask & pred_wet & ~truth_wet] = FALSE_ALARM
    cat[mask & ~pred_wet & ~truth_wet] = CORRECT_NEGATIVE
    return ContingencyMap(t=t, categories=cat, mask=mask)


def csi(cmap: ContingencyMap):
    """Critical success index; None when truth and prediction are both dry."""
    hits, misses, false_alarms, _ = cmap.counts()
    denom = hits + misses + false_alarms
    if denom == 0:
        return None
    return hits / denom


# -- report over run directories ----------------------------------------------

def _read_station_series(rundir):
    """(t, station, mean, truth) series from a run or truth directory."""
    rundir = Path(rundir)
    series = {}
    path = rundir / "stations_wse.csv"
    if path.exists():
        with open(path) as f:
            next(f)
            for line in f:
                t, station, mean, _std, truth = line.strip().split(",")
                series.setdefault(station, []).append(
                    (float(t), float(mean), float(truth)))
    else:
        path = rundir / "stations_truth.csv"
        if not path.exists():
            return None
        with open(path) as f:
            next(f)
            for line in f:
                t, station, wse = line.strip().split(",")
                series.setdefault(station, []).append(
                    (float(t), float(wse), float(wse)))
    return {st: np.array(rows) for st, rows in series.items()}


def _extent_times(rundir):
    times = []
    for p in Path(rundir).glob("extent_*.asc"):
        m = re.match(r"extent_(.+)\.asc$", p.name)
        if m:
            times.append(float(m.group(1)))
    return sorted(times)


def _load_extent(rundir, t):
    """Extent at time t: either a saved 0/1 extent grid or a depth grid."""
    rundir = Path(rundir)
    p = rundir / f"extent_{fmt_time(t)}.asc"
    if p.exists():
        data, _, _, _ = read_ascii_grid(p)
        return data >= 0.5
    p = rundir / f"h_{fmt_time(t)}.asc"
    if p.exists():
        data, _, _, _ = read_ascii_grid(p)
        return data >= FLOOD_THRESHOLD
    return None


def report(run_dirs, truth_dir, outdir):
    """Score every run directory against the truth archive.

    Emits scores_rmse.csv, scores_csi.csv, per-experiment contingency
    grids and per-station plot data under ``outdir``. Returns
    (ScoreTable, missing) where missing lists unusable run directories.
    """
    truth_dir = Path(truth_dir)
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    truth_series = _read_station_series(truth_dir)
    if truth_series is None:
        raise ValueError(f"no station series in truth directory {truth_dir}")
    sub, dx, xll, yll = read_ascii_grid(truth_dir / "subdomain.asc", dtype=np.int32)
    mask = sub >= 0

    missing = []
    experiments = []
    series_by_exp = {}
    rmse_table = {}
    csi_table = {}
    all_times = set()
    stations = sorted(truth_series.keys())

    for rundir in run_dirs:
        rundir = Path(rundir)
        name = rundir.name
        series = _read_station_series(rundir)
        if series is None:
            missing.append(str(rundir))
            continue
        experiments.append(name)
        series_by_exp[name] = series
        for st in stations:
            truth_rows = truth_series[st]
            rows = series.get(st)
            if rows is None:
                missing.append(f"{rundir}:{st}")
                continue
            rmse_table[(name, st)] = rmse(rows[:, 0], rows[:, 1],
                                          truth_rows[:, 0], truth_rows[:, 2])
        for t in _extent_times(rundir):
            pred = _load_extent(rundir, t)
            truth_extent = _load_extent(truth_dir, t)
            if truth_extent is None:
                missing.append(f"{truth_dir}:extent_{fmt_time(t)}")
                continue
            cmap = contingency(pred, truth_extent, mask, t=t)
            csi_table[(name, t)] = csi(cmap)
            all_times.add(t)
            write_ascii_grid(outdir / f"contingency_{name}_{fmt_time(t)}.asc",
                             cmap.categories, dx, xll, yll)

    times = sorted(all_times)
    with open(outdir / "scores_rmse.csv", "w") as f:
        f.write("experiment," + ",".join(stations) + "\n")
        for name in experiments:
            vals = [rmse_table.get((name, st)) for st in stations]
            f.write(name + "," + ",".join("" if v is None else repr(v)
                                          for v in vals) + "\n")
    with open(outdir / "scores_csi.csv", "w") as f:
        f.write("experiment," + ",".join(fmt_time(t) for t in times) + "\n")
        for name in experiments:
            vals = [csi_table.get((name, t)) for t in times]
            f.write(name + "," + ",".join("" if v is None else repr(v)
                                          for v in vals) + "\n")
    for st in stations:
        truth_rows = truth_series[st]
        with open(outdir / f"plotdata_stations_{st}.csv", "w") as f:
            f.write("t,truth," + ",".join(experiments) + "\n")
            for k, t in enumerate(truth_rows[:, 0].tolist()):
                cells = [fmt_time(t), repr(float(truth_rows[k, 2]))]
                for name in experiments:
                    rows = series_by_exp[name].get(st)
                    if rows is None:
                        cells.append("")
                    else:
                        v = np.interp(t, rows[:, 0], rows[:, 1])
                        cells.append(repr(float(v)))
                f.write(",".join(cells) + "\n")

    table = ScoreTable(experiments=experiments, stations=stations, times=times,
                       rmse=rmse_table, csi=csi_table)
    return table, missing
