"""Command-line entry point.

Subcommands::

    floodda case build --spec cfg.ini --out case/
    floodda truth run --case case/ --scenario cfg.ini --out truth/
    floodda obs generate --truth truth/ --plan cfg.ini --seed 7 --out obs/
    floodda exp run --config cfg.ini [--name OL|IDA|IGDA|RSDA|FDA] --out runs/
    floodda eval report --runs runs/* --truth truth/ --out scores/
    floodda selftest oracle

Every stage takes the same INI file (see floodda.config); individual keys
can be overridden with ``--set section.key=value``. Exit codes: 0 success,
1 configuration or precondition error, 2 numerical abort.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import harness, metrics, oracles
from .config import ConfigError, load_config
from .domain import read_case, write_case
from .enkf import AnalysisBatch, AnalysisError, analysis
from .solver import SolverError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERIC = 2


def _add_set(p):
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="SECTION.KEY=VALUE", help="override one config key")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="floodda",
        description="Desk-scale flood data assimilation twin experiments")
    top = parser.add_subparsers(dest="group", required=True)

    case = top.add_parser("case", help="synthetic case tools")
    case_sub = case.add_subparsers(dest="command", required=True)
    p = case_sub.add_parser("build", help="build the synthetic reach")
    p.add_argument("--spec", help="INI file with a [case] section")
    p.add_argument("--out", required=True)
    _add_set(p)

    truth = top.add_parser("truth", help="reference simulation")
    truth_sub = truth.add_subparsers(dest="command", required=True)
    p = truth_sub.add_parser("run", help="run and archive the truth simulation")
    p.add_argument("--case", required=True)
    p.add_argument("--scenario", help="INI file with a [scenario] section")
    p.add_argument("--out", required=True)
    _add_set(p)

    obs = top.add_parser("obs", help="synthetic observations")
    obs_sub = obs.add_subparsers(dest="command", required=True)
    p = obs_sub.add_parser("generate", help="generate the observation archive")
    p.add_argument("--truth", required=True)
    p.add_argument("--plan", help="INI file with [plan]/[noise] sections")
    p.add_argument("--case", help="case directory (default: [paths] case_dir)")
    p.add_argument("--seed", type=int, help="observation noise seed")
    p.add_argument("--out", required=True)
    _add_set(p)

    exp = top.add_parser("exp", help="assimilation experiments")
    exp_sub = exp.add_subparsers(dest="command", required=True)
    p = exp_sub.add_parser("run", help="run one or all experiments")
    p.add_argument("--config", help="INI file naming paths and settings")
    p.add_argument("--name", choices=sorted(harness.EXPERIMENT_TABLE),
                   help="run a single experiment (default: all five)")
    p.add_argument("--out", help="runs directory (default: [paths] runs_dir)")
    _add_set(p)

    ev = top.add_parser("eval", help="skill evaluation")
    ev_sub = ev.add_subparsers(dest="command", required=True)
    p = ev_sub.add_parser("report", help="score runs against the truth")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", required=True)

    st = top.add_parser("selftest", help="built-in oracles")
    st_sub = st.add_subparsers(dest="command", required=True)
    st_sub.add_parser("oracle", help="run the analytic oracle checks")

    return parser


def _cmd_case_build(args):
    cfg = load_config(args.spec, args.overrides)
    case = harness.build_case(cfg)
    write_case(case, args.out)
    print(f"case written to {args.out}: {case.grid.nx}x{case.grid.ny} cells, "
          f"{len(case.nodes)} nodes, {len(case.stations)} stations")
    return EXIT_OK


def _cmd_truth_run(args):
    cfg = load_config(args.scenario, args.overrides)
    case = read_case(args.case)
    scenario = harness.scenario_from(cfg, case)
    plan = harness.plan_from(cfg, scenario)
    out = harness.run_truth(scenario, case, plan, args.out)
    print(f"truth archived to {args.out}: {len(out.snapshots)} snapshots, "
          f"mass residual {out.mass_residual():.2e}")
    return EXIT_OK


def _cmd_obs_generate(args):
    cfg = load_config(args.plan, args.overrides)
    case_dir = args.case or cfg["paths"]["case_dir"]
    case = read_case(case_dir)
    scenario = harness.scenario_from(cfg, case)
    plan = harness.plan_from(cfg, scenario)
    noise = harness.noise_from(cfg)
    seed = args.seed if args.seed is not None else int(cfg["enkf"]["obs_seed"])
    harness.generate_observations(args.truth, case, plan, noise, seed, args.out)
    print(f"observations written to {args.out}")
    return EXIT_OK


def _cmd_exp_run(args):
    cfg = load_config(args.config, args.overrides)
    paths = cfg["paths"]
    case = read_case(paths["case_dir"])
    scenario = harness.scenario_from(cfg, case)
    plan = harness.plan_from(cfg, scenario)
    noise = harness.noise_from(cfg)
    prior = harness.prior_from(cfg, case)
    runs_dir = Path(args.out or paths["runs_dir"])
    names = [args.name] if args.name else list(harness.EXPERIMENT_TABLE)
    for name in names:
        exp = harness.experiment_config(name, cfg["enkf"])
        harness.run_experiment(exp, case, scenario, plan, noise, prior,
                               obs_dir=paths["obs_dir"],
                               truth_dir=paths["truth_dir"],
                               outdir=runs_dir / name)
        print(f"experiment {name} done -> {runs_dir / name}")
    return EXIT_OK


def _cmd_eval_report(args):
    table, missing = metrics.report(args.runs, args.truth, args.out)
    for name in table.experiments:
        cells = ", ".join(f"{st}={table.rmse.get((name, st), float('nan')):.3f}"
                          for st in table.stations)
        print(f"RMSE[m] {name}: {cells}")
    for missing_entry in missing:
        print(f"missing: {missing_entry}", file=sys.stderr)
    return EXIT_CONFIG if missing else EXIT_OK


def _cmd_selftest(_args):
    failures = 0

    # normal depth: channel conveyance solved by bisection
    h = oracles.strickler_normal_depth(q_total=300.0, ks=30.0, slope=5e-4,
                                       width=150.0)
    q_back = 30.0 * (150.0 * h) * (150.0 * h / (150.0 + 2 * h)) ** (2.0 / 3.0) \
        * np.sqrt(5e-4)
    ok = abs(q_back - 300.0) < 1e-6 * 300.0
    failures += not ok
    print(f"normal-depth bisection: h={h:.4f} m, residual {abs(q_back-300):.2e} "
          f"{'PASS' if ok else 'FAIL'}")

    # linear-Gaussian twin: EnKF analysis vs closed-form posterior
    rng = np.random.default_rng(1234)
    n, d, m = 10_000, 2, 2
    prior_mean = np.array([1.0, -0.5])
    prior_cov = np.array([[1.0, 0.3], [0.3, 0.5]])
    obs_op = np.array([[1.0, 0.0], [1.0, 2.0]])
    r = np.array([0.5, 0.2])
    y = np.array([1.4, 0.3])
    x = rng.multivariate_normal(prior_mean, prior_cov, size=n)
    batch = AnalysisBatch(x=x, y_members=x @ obs_op.T, y_obs=y, r=r,
                          tags=[None] * m)
    xa = analysis(batch, seed=99)
    mean_ref, cov_ref = oracles.kalman_posterior(prior_mean, prior_cov, obs_op,
                                                 y, np.diag(r))
    mean_err = np.max(np.abs(xa.mean(axis=0) - mean_ref) / np.abs(mean_ref))
    cov_err = np.linalg.norm(np.cov(xa.T) - cov_ref) / np.linalg.norm(cov_ref)
    ok = mean_err < 0.03 and cov_err < 0.03
    failures += not ok
    print(f"linear-Gaussian twin: mean err {mean_err:.3%}, cov err {cov_err:.3%} "
          f"{'PASS' if ok else 'FAIL'}")

    return EXIT_OK if failures == 0 else EXIT_NUMERIC


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        ("case", "build"): _cmd_case_build,
        ("truth", "run"): _cmd_truth_run,
        ("obs", "generate"): _cmd_obs_generate,
        ("exp", "run"): _cmd_exp_run,
        ("eval", "report"): _cmd_eval_report,
        ("selftest", "oracle"): _cmd_selftest,
    }
    handler = handlers[(args.group, args.command)]
    try:
        return handler(args)
    except (ConfigError, ValueError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, AnalysisError) as err:
        print(f"numerical abort: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
