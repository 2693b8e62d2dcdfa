"""
Command-line entry point ``tvpshrink``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical error (including a failed ``validate`` run).
"""

import argparse
from dataclasses import asdict, replace
import json
import logging
from pathlib import Path
import subprocess
import sys

import numpy as np

from . import __version__
from .dataset import Dataset, add_months
from .errors import DataError, NumericalError, TvpError
from .evalharness import (BENCHMARK, MODEL_SPECS, cumulative_series, desk_profile, design_matrix,
                          paper_profile, recursive_backtest, relative_metrics, standardize_window)
from .io import (ConfigError, build_sampler_config, build_schedule, emit_report, load_config,
                 load_dataset, load_records, load_recessions, persist_draws, save_dataset, save_records)
from .sampler import RegressionData, TruthParams, run_chain, simulate_dgp
from .stochvol import SvParams
from .trading import trading_table

log = logging.getLogger("tvpshrink")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def version_string():
    """``git describe``-style version, falling back to the package version."""
    try:
        out = subprocess.run(["git", "describe", "--tags", "--always", "--dirty"],
                             cwd=Path(__file__).resolve().parent, capture_output=True, text=True,
                             timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def build_parser():
    p = _Parser(prog="tvpshrink", description="TVP regression with shrinkage, t errors and SV")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _Parser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--model", choices=sorted(MODEL_SPECS), help="model to run")
    common.add_argument("--profile", choices=("paper", "desk"), help="sampler and schedule preset")
    common.add_argument("--out-dir", help="output directory")
    for name, text in [("fit", "fit one model on the full sample and persist its draws"),
                       ("backtest", "run the recursive backtest and emit records and metrics"),
                       ("trade", "evaluate trading strategies from backtest output"),
                       ("simulate", "write a synthetic dataset drawn from the model"),
                       ("validate", "run the joint-distribution (Geweke) and oracle checks")]:
        sp = sub.add_parser(name, parents=[common], help=text, description=text)
        if name == "backtest":
            sp.add_argument("--n-jobs", type=int, help="worker processes for origins")
        if name == "validate":
            sp.add_argument("--quick", action="store_true", help="fewer chains (smoke run)")
    return p


class Run:
    """Resolved settings for one CLI invocation."""

    def __init__(self, args):
        self.args = args
        needs_config = args.command in ("fit", "backtest", "trade")
        if args.config is None and needs_config:
            raise UsageError(f"{build_parser().format_usage()}tvpshrink {args.command}: "
                             "error: --config is required")
        self.doc = load_config(args.config) if args.config else {}
        run = self.doc.get("run", {})
        self.profile = args.profile or run.get("profile", "desk")
        base_cfg, base_sched = (paper_profile() if self.profile == "paper" else desk_profile())
        self.config = build_sampler_config(self.doc, base_cfg, args.seed)
        self.schedule = build_schedule(self.doc, base_sched)
        self.out_dir = Path(args.out_dir or run.get("out_dir", "tvpshrink_out"))
        self.out_dir.mkdir(parents=True, exist_ok=True)
        if args.model:
            self.models = [args.model]
        else:
            self.models = run.get("models") or [run.get("model", "TVP-SV DL")]
        for m in self.models:
            if m not in MODEL_SPECS:
                raise ConfigError(f"unknown model {m!r}; choose from {sorted(MODEL_SPECS)}")

    def dataset(self) -> Dataset:
        data = self.doc.get("data", {})
        if "path" not in data:
            raise ConfigError("[data] path is required")
        base = Path(self.args.config).resolve().parent
        path = base / data["path"]
        rec = load_recessions(base / data["recessions"]) if "recessions" in data else None
        return load_dataset(path, data.get("columns"), data.get("lag_predictors", False),
                            data.get("start"), data.get("end"), recessions=rec)

    def manifest(self, extra=None):
        doc = {
            "command": self.args.command,
            "version": version_string(),
            "profile": self.profile,
            "seed": self.config.seed,
            "models": self.models,
            "sampler": json.loads(json.dumps(asdict(self.config), default=str)),
            "schedule": asdict(self.schedule),
            "config_file": self.doc,
        }
        doc.update(extra or {})
        path = self.out_dir / f"manifest_{self.args.command}.json"
        path.write_text(json.dumps(doc, indent=1, sort_keys=True, default=str))
        return path


def _slug(model):
    return model.replace(" ", "_").replace("(", "").replace(")", "")


def cmd_fit(run: Run):
    ds = run.dataset()
    for model in run.models:
        spec = MODEL_SPECS[model]
        rows = ds.window(run.schedule.sample_start, ds.dates[-1])
        X = design_matrix(ds, spec)[rows]
        if run.doc.get("data", {}).get("standardize", True):
            X, _ = standardize_window(X, X[-1])
        cfg = replace(run.config, flags=spec.flags)
        draws = run_chain(RegressionData(ds.y[rows], X), cfg, model_id=model)
        path = run.out_dir / f"draws_{_slug(model)}.bin"
        persist_draws(draws, path)
        print(f"{model}: {draws.n_draws} draws -> {path}")
    run.manifest()


def cmd_backtest(run: Run):
    ds = run.dataset()
    n_jobs = run.args.n_jobs or run.doc.get("run", {}).get("n_jobs", 1)
    standardize = run.doc.get("data", {}).get("standardize", True)
    models = list(dict.fromkeys(run.models + [BENCHMARK]))
    results = {}
    for model in models:
        print(f"backtest {model}: {len(run.schedule)} origins", flush=True)
        recs = recursive_backtest(ds, model, run.schedule, run.config, n_jobs=n_jobs,
                                  standardize=standardize)
        results[model] = recs
        save_records(recs, run.out_dir / f"records_{_slug(model)}.npz")
    bench = results[BENCHMARK]
    metrics, series, rec_rows = [], [], []
    for model, recs in results.items():
        metrics += relative_metrics(recs, bench).rows()
        cs = cumulative_series(recs, bench)
        series += [{"target": int(t), "model": model, "cum_log_bf": float(b), "cum_sq_error": float(s)}
                   for t, b, s in zip(cs.targets, cs.log_bf, cs.sq_error)]
        rec_rows += [{"model": model, "origin": r.origin, "target": r.target, "realized": r.realized,
                      "point": r.point, "lps": r.lps, "recession": r.recession} for r in recs]
    for fmt in ("csv", "json"):
        emit_report(metrics, run.out_dir / f"metrics.{fmt}", kind="metrics")
    emit_report(series, run.out_dir / "series.csv", kind="series")
    emit_report(rec_rows, run.out_dir / "records.csv", kind="records")
    for row in metrics:
        print(f"{row['model']:>14s} {row['regime']:>9s} rel_rmse={row['rel_rmse']:.4f} log_bf={row['log_bf']:+.3f}")
    run.manifest()


def cmd_trade(run: Run):
    t = run.doc.get("trading", {})
    lower, upper = t.get("lower", -0.01), t.get("upper", 0.01)
    mode = t.get("mode", "both")
    found = sorted(run.out_dir.glob("records_*.npz"))
    if not found:
        raise DataError(f"no backtest records in {run.out_dir}; run 'backtest' first")
    records = {}
    for path in found:
        recs = load_records(path)
        if run.args.model is None or recs[0].model == run.args.model:
            records[recs[0].model] = recs
    modes = ("draw", "point") if mode == "both" else (mode,)
    for m in modes:
        rows = trading_table(records, lower, upper, mode=m)
        for fmt in ("csv", "json"):
            emit_report(rows, run.out_dir / f"trading_{m}.{fmt}", kind="trading")
        for row in rows:
            print(f"[{m}] {row['model']:>14s} {row['regime']:>9s} mu={row['mu']:.4f} "
                  f"sigma={row['sigma']:.4f} sharpe={row['sharpe']:.3f} excluded={row['n_excluded']}")
    run.manifest({"thresholds": [lower, upper], "modes": list(modes)})


def cmd_simulate(run: Run):
    s = run.doc.get("simulate", {})
    T, K = s.get("T", 400), s.get("K", 3)
    beta0 = np.broadcast_to(np.asarray(s.get("beta0", [0.5]), dtype=float), (K,)).copy()
    sqrt_v = np.broadcast_to(np.asarray(s.get("sqrt_v", [0.1]), dtype=float), (K,)).copy()
    kappa = s.get("kappa")
    truth = TruthParams(beta0, sqrt_v,
                        SvParams(s.get("mu", -1.0), s.get("rho", 0.9), s.get("sigma2", 0.04)),
                        s.get("nu"), None if kappa is None else np.asarray(kappa, dtype=float))
    sim = simulate_dgp(truth, T, K, seed=run.config.seed)
    start = s.get("start_date", 190001)
    dates = [add_months(start, i) for i in range(T)]
    ds = Dataset(dates, sim.data.y, sim.data.X, [f"x{j + 1}" for j in range(K)])
    path = run.out_dir / "simulated.csv"
    save_dataset(ds, path)
    np.savez(run.out_dir / "simulated_truth.npz", beta=sim.beta, h=sim.h, tau=sim.tau, xi=sim.xi,
             beta0=beta0, sqrt_v=sqrt_v)
    print(f"simulated T={T}, K={K} -> {path}")
    run.manifest()


def cmd_validate(run: Run):
    from .validation import MODEL_FLAGS, geweke_test
    from .oracles import oracle_suite
    v = run.doc.get("validate", {})
    n_chains = v.get("n_chains", 10 if run.args.quick else 100)
    n_cycles = v.get("n_cycles", 20 if run.args.quick else 100)
    ok = True
    for name, flags in MODEL_FLAGS.items():
        if run.args.model and run.args.model != name:
            continue
        res = geweke_test(flags, T=v.get("T", 25), K=v.get("K", 2), n_chains=n_chains,
                          n_cycles=n_cycles, seed=run.config.seed, priors=run.config.priors, model=name)
        for line in res.lines():
            print(line)
        ok &= res.passed()
    for name, passed, detail in oracle_suite(seed=run.config.seed, quick=run.args.quick):
        print(f"{'oracle':>14s} {name:>20s}  {detail}  {'PASS' if passed else 'FAIL'}")
        ok &= passed
    run.manifest({"passed": bool(ok)})
    if not ok:
        raise NumericalError("validation suite reported failures")


COMMANDS = {"fit": cmd_fit, "backtest": cmd_backtest, "trade": cmd_trade,
            "simulate": cmd_simulate, "validate": cmd_validate}


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        run = Run(args)
        COMMANDS[args.command](run)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except TvpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
