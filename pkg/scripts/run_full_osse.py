"""Drive the full default-scenario OSSE once and print the scorecard.

Usage: python scripts/run_full_osse.py <outdir> [overrides...]
"""

import csv
import sys
import time
from pathlib import Path

from floodda import harness, metrics
from floodda.config import load_config
from floodda.domain import read_case, write_case


def main():
    root = Path(sys.argv[1])
    overrides = sys.argv[2:]
    cfg = load_config(None, overrides)
    t_start = time.time()

    case = harness.build_case(cfg)
    write_case(case, root / "case")
    case = read_case(root / "case")
    scenario = harness.scenario_from(cfg, case)
    plan = harness.plan_from(cfg, scenario)
    noise = harness.noise_from(cfg)
    prior = harness.prior_from(cfg, case)

    t0 = time.time()
    out = harness.run_truth(scenario, case, plan, root / "truth")
    print(f"truth: {time.time()-t0:.0f}s residual={out.mass_residual():.1e}",
          flush=True)
    t0 = time.time()
    harness.generate_observations(root / "truth", case, plan, noise,
                                  int(cfg["enkf"]["obs_seed"]), root / "obs")
    print(f"obs: {time.time()-t0:.0f}s", flush=True)

    for name in ("OL", "IDA", "IGDA", "RSDA", "FDA"):
        exp = harness.experiment_config(name, cfg["enkf"])
        t0 = time.time()
        harness.run_experiment(exp, case, scenario, plan, noise, prior,
                               obs_dir=root / "obs", truth_dir=root / "truth",
                               outdir=root / "runs" / name)
        print(f"{name}: {time.time()-t0:.0f}s", flush=True)

    table, missing = metrics.report(
        [root / "runs" / n for n in ("OL", "IDA", "IGDA", "RSDA", "FDA")],
        root / "truth", root / "scores")
    wall = time.time() - t_start
    print(f"\ntotal wall: {wall:.0f}s  missing: {missing}")
    for name in table.experiments:
        cells = " ".join(f"{st}={table.rmse[(name, st)]:.3f}"
                         for st in table.stations)
        print(f"RMSE {name}: {cells}")
    for name in table.experiments:
        cells = " ".join(f"t={t:.0f}:{table.csi[(name, t)]:.3f}"
                         if table.csi[(name, t)] is not None else f"t={t:.0f}:-"
                         for t in table.times)
        print(f"CSI  {name}: {cells}")
    for name in ("IDA", "IGDA", "RSDA", "FDA"):
        rows = list(csv.DictReader(open(root / "runs" / name / "controls.csv")))
        finals = {}
        for r in rows:
            finals[r["element"]] = (r["mean"], r["truth"])
        print(f"{name} final controls: "
              + " ".join(f"{k}={float(v[0]):.3f}/{float(v[1]):.3f}"
                         for k, v in sorted(finals.items())))


if __name__ == "__main__":
    main()
