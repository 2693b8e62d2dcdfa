"""
Recursive expanding-window backtest and forecast evaluation.

At each origin the model is fitted on every month from ``sample_start``
through the origin and a one-step-ahead predictive density is formed for the
following month.  Records carry the realized value, the predictive mean,
the log predictive score and the per-draw predictive locations (used by the
trading module).
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
import logging
import math

import numpy as np

from .dataset import Dataset, add_months, month_index, month_range
from .errors import AlignmentError, DataError, ScheduleError
from .rngdist import RngStream
from .sampler import (ModelFlags, ModelPriors, RegressionData, SamplerConfig,
                      log_predictive_score, one_step_predictive, run_chain)

__all__ = [
    "BacktestSchedule",
    "ModelSpec",
    "MODEL_SPECS",
    "BENCHMARK",
    "BacktestRecord",
    "MetricsReport",
    "recursive_backtest",
    "relative_metrics",
    "regime_split",
    "cumulative_series",
    "desk_profile",
    "paper_profile",
]

log = logging.getLogger(__name__)

REGIMES = ("recession", "expansion", "full")


@dataclass(frozen=True)
class BacktestSchedule:
    """Expanding-window schedule over integer yyyymm dates.

    The first estimation window ends one month after ``initial_end``; the
    last origin is the month before ``final`` so every target is observed.
    Defaults give 647 origins.
    """

    sample_start: int = 192612
    initial_end: int = 195612
    final: int = 201012
    last_n: int | None = None     # keep only the final ``last_n`` origins

    def __post_init__(self):
        if not (month_index(self.sample_start) <= month_index(self.initial_end) < month_index(self.final) - 1):
            raise ScheduleError("need sample_start <= initial_end < final - 1 month")
        if self.last_n is not None and self.last_n < 1:
            raise ScheduleError("last_n must be positive")

    def origins(self):
        out = month_range(add_months(self.initial_end, 1), add_months(self.final, -1))
        return out[-self.last_n:] if self.last_n is not None else out

    def __len__(self):
        return len(self.origins())

    def check_coverage(self, dataset: Dataset):
        first, last = int(dataset.dates[0]), int(dataset.dates[-1])
        if month_index(first) > month_index(self.sample_start):
            raise ScheduleError(f"dataset starts {first}, schedule needs {self.sample_start}")
        if month_index(last) < month_index(self.final):
            raise ScheduleError(f"dataset ends {last}, schedule needs {self.final}")


@dataclass(frozen=True)
class ModelSpec:
    """A forecasting model as sampler flags plus a design rule.

    design: ``"predictors"`` (intercept and all predictors), ``"mean"``
    (intercept only), ``"ar1"`` (intercept and lagged response) or ``"none"``
    (zero conditional mean).
    """

    name: str
    flags: ModelFlags
    design: str = "predictors"

    def __post_init__(self):
        if self.design not in ("predictors", "mean", "ar1", "none"):
            raise ValueError(f"unknown design {self.design!r}")


_STATIC = ModelFlags(tvp=False, t_obs=False, t_state=False, dl=False)

MODEL_SPECS = {
    "Mean-SV": ModelSpec("Mean-SV", _STATIC, "mean"),
    "Reg-SV": ModelSpec("Reg-SV", _STATIC, "predictors"),
    "AR(1)-SV": ModelSpec("AR(1)-SV", _STATIC, "ar1"),
    "RW-SV": ModelSpec("RW-SV", _STATIC, "none"),
    "TVP-SV DL": ModelSpec("TVP-SV DL", ModelFlags(True, False, False, True)),
    "t-TVP-SV DL 1": ModelSpec("t-TVP-SV DL 1", ModelFlags(True, True, False, True)),
    "t-TVP-SV DL 2": ModelSpec("t-TVP-SV DL 2", ModelFlags(True, False, True, True)),
    "t-TVP-SV DL 3": ModelSpec("t-TVP-SV DL 3", ModelFlags(True, True, True, True)),
}
BENCHMARK = "Mean-SV"


def desk_profile(seed=0):
    """3000 sweeps, 1000 burn-in, final 60 origins."""
    return SamplerConfig(n_iter=3000, n_burn=1000, seed=seed), BacktestSchedule(last_n=60)


def paper_profile(seed=0):
    return SamplerConfig(n_iter=30000, n_burn=15000, seed=seed), BacktestSchedule()


def design_matrix(dataset: Dataset, spec: ModelSpec):
    """Full-sample design for ``spec``; row t only uses information dated <= t-1."""
    T = dataset.T
    one = np.ones((T, 1))
    if spec.design == "none":
        return np.zeros((T, 0))
    if spec.design == "mean":
        return one
    if spec.design == "ar1":
        lag = np.full((T, 1), np.nan)
        lag[1:, 0] = dataset.y[:-1]
        return np.hstack([one, lag])
    return np.hstack([one, dataset.X])


def standardize_window(X_fit, x_next):
    """Scale non-constant columns by in-window mean and sd (no look-ahead)."""
    X_fit = np.array(X_fit, dtype=float)
    x_next = np.array(x_next, dtype=float)
    if X_fit.shape[1] == 0:
        return X_fit, x_next
    sd = X_fit.std(axis=0)
    const = sd < 1e-12 * np.maximum(1.0, np.abs(X_fit).max(axis=0))
    mean = np.where(const, 0.0, X_fit.mean(axis=0))
    sd = np.where(const, 1.0, sd)
    return (X_fit - mean) / sd, (x_next - mean) / sd


@dataclass
class BacktestRecord:
    origin: int                   # last month of the estimation window
    target: int                   # forecast month
    realized: float
    point: float                  # predictive mean
    lps: float
    recession: bool
    model: str
    locations: np.ndarray = field(default=None, repr=False)  # per-draw predictive location

    @property
    def sq_error(self):
        return (self.realized - self.point) ** 2


def _fit_origin(dataset, spec, schedule, config, origin, standardize, keep_locations):
    X_all = design_matrix(dataset, spec)
    rows = dataset.window(schedule.sample_start, origin)
    target = add_months(origin, 1)
    t_next = dataset.row(target)
    X_fit, x_next = X_all[rows], X_all[t_next]
    if not np.all(np.isfinite(X_fit)):
        raise DataError(f"design for {spec.name} has missing values before {origin}")
    if standardize:
        X_fit, x_next = standardize_window(X_fit, x_next)
    data = RegressionData(dataset.y[rows], X_fit)
    cfg = replace(config, flags=spec.flags)
    # the stream depends only on (seed, origin): serial and parallel runs agree
    rng = RngStream(config.seed, origin).generator()
    draws = run_chain(data, cfg, model_id=spec.name, rng=rng)
    pd = one_step_predictive(draws, x_next, rng)
    y_next = float(dataset.y[t_next])
    return BacktestRecord(origin, target, y_next, pd.mean(), log_predictive_score(pd, y_next),
                          bool(dataset.recession[t_next]), spec.name,
                          pd.location.copy() if keep_locations else None)


def _fit_origin_star(args):
    return _fit_origin(*args)


def recursive_backtest(dataset: Dataset, spec: ModelSpec | str, schedule: BacktestSchedule = BacktestSchedule(),
                       config: SamplerConfig = SamplerConfig(), n_jobs=1, standardize=True,
                       keep_locations=True, progress=None):
    """One record per origin, in origin order.

    ``n_jobs > 1`` distributes origins over worker processes.  Each origin
    owns the stream ``RngStream(config.seed, origin)``, so the records do not
    depend on ``n_jobs``.
    """
    spec = MODEL_SPECS[spec] if isinstance(spec, str) else spec
    schedule.check_coverage(dataset)
    origins = schedule.origins()
    jobs = [(dataset, spec, schedule, config, o, standardize, keep_locations) for o in origins]
    if n_jobs == 1:
        out = []
        for i, job in enumerate(jobs):
            out.append(_fit_origin_star(job))
            if progress is not None:
                progress(i + 1, len(jobs))
        return out
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(_fit_origin_star, jobs))


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


@dataclass
class RegimeMetrics:
    n: int
    sse: float            # model sum of squared errors
    sse_benchmark: float
    log_bf: float         # sum of LPS differences

    @property
    def rel_rmse(self):
        if self.n == 0 or self.sse_benchmark == 0:
            return math.nan
        return math.sqrt(self.sse / self.sse_benchmark)


@dataclass
class MetricsReport:
    model: str
    benchmark: str
    regimes: dict         # regime name -> RegimeMetrics

    def rows(self):
        return [{"model": self.model, "regime": r, "rel_rmse": self.regimes[r].rel_rmse,
                 "log_bf": self.regimes[r].log_bf} for r in REGIMES]


def _align(records, benchmark):
    a = {r.target: r for r in records}
    b = {r.target: r for r in benchmark}
    if len(a) != len(records) or len(b) != len(benchmark):
        raise AlignmentError("duplicate forecast targets in records")
    if a.keys() != b.keys():
        missing = sorted(a.keys() ^ b.keys())
        raise AlignmentError(f"origin sets differ, e.g. target {missing[0]}")
    keys = sorted(a)
    return [a[k] for k in keys], [b[k] for k in keys]


def regime_split(records, recession=None):
    """Partition records into recession and expansion groups.

    ``recession`` maps target date -> bool; without it the flags stored on
    the records are used.
    """
    groups = {"recession": [], "expansion": []}
    for r in records:
        if recession is None:
            flag = r.recession
        else:
            if r.target not in recession:
                raise DataError(f"no recession flag for {r.target}")
            flag = recession[r.target]
        if flag is None:
            raise DataError(f"no recession flag for {r.target}")
        groups["recession" if flag else "expansion"].append(r)
    return groups


def relative_metrics(records, benchmark, recession=None) -> MetricsReport:
    """Relative RMSE and cumulative log Bayes factor versus a benchmark, per regime."""
    rec, ben = _align(records, benchmark)
    flags = {r.target: (r.recession if recession is None else recession.get(r.target)) for r in rec}
    for r in rec:
        if flags[r.target] is None:
            raise DataError(f"no recession flag for {r.target}")
    out = {}
    for regime in REGIMES:
        pairs = [(r, b) for r, b in zip(rec, ben)
                 if regime == "full" or flags[r.target] == (regime == "recession")]
        out[regime] = RegimeMetrics(
            len(pairs),
            float(sum(r.sq_error for r, _ in pairs)),
            float(sum(b.sq_error for _, b in pairs)),
            float(sum(r.lps - b.lps for r, b in pairs)),
        )
    model = rec[0].model if rec else ""
    bname = ben[0].model if ben else ""
    return MetricsReport(model, bname, out)


@dataclass
class CumulativeSeries:
    targets: np.ndarray
    log_bf: np.ndarray
    sq_error: np.ndarray
    sq_error_benchmark: np.ndarray


def cumulative_series(records, benchmark) -> CumulativeSeries:
    """Running sums over forecast targets, in date order."""
    rec, ben = _align(records, benchmark)
    return CumulativeSeries(
        np.array([r.target for r in rec], dtype=np.int64),
        np.cumsum([r.lps - b.lps for r, b in zip(rec, ben)]),
        np.cumsum([r.sq_error for r in rec]),
        np.cumsum([b.sq_error for b in ben]),
    )
