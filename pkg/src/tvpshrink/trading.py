"""
Threshold trading rule and Sharpe-ratio evaluation.

Each month the investor goes long the index when the predicted excess
return exceeds ``upper``, shorts it below ``lower`` and holds risk-free
bonds otherwise.  Accounting is in excess-return space: a long position earns
``y``, a short earns ``-y`` and bonds earn zero.
"""

from dataclasses import dataclass
from enum import Enum
import math

import numpy as np

from .errors import AlignmentError, ParameterError, UndefinedSharpeError

__all__ = [
    "Position",
    "StrategyPerf",
    "SharpeSummary",
    "signal",
    "signals",
    "strategy_returns",
    "strategy_performance",
    "posterior_sharpe",
    "point_signal_performance",
    "trading_table",
]


class Position(Enum):
    LONG = 1
    SHORT = -1
    BONDS = 0


def _check_thresholds(lower, upper):
    if not lower < upper:
        raise ParameterError(f"need lower < upper, got {lower}, {upper}")


def signal(predicted_return, lower=-0.01, upper=0.01) -> Position:
    """Three-way rule; a prediction equal to a threshold keeps the bond position."""
    _check_thresholds(lower, upper)
    if predicted_return > upper:
        return Position.LONG
    if predicted_return < lower:
        return Position.SHORT
    return Position.BONDS


def signals(predicted, lower=-0.01, upper=0.01):
    """Vectorized :func:`signal` returning the integer exposure (+1, -1, 0)."""
    _check_thresholds(lower, upper)
    p = np.asarray(predicted, dtype=float)
    return np.where(p > upper, 1, np.where(p < lower, -1, 0)).astype(np.int8)


def _exposure(positions):
    if isinstance(positions, np.ndarray) and positions.dtype != object:
        return positions.astype(float)
    return np.array([p.value if isinstance(p, Position) else p for p in positions], dtype=float)


def strategy_returns(positions, realized_excess):
    w = _exposure(positions)
    y = np.asarray(realized_excess, dtype=float)
    if w.shape != y.shape:
        raise AlignmentError(f"{w.shape[0]} positions vs {y.shape[0]} returns")
    return w * y


@dataclass(frozen=True)
class StrategyPerf:
    mean_return: float    # annualized
    sd_return: float      # annualized
    sharpe: float


def strategy_performance(positions, realized_excess, periods_per_year=12) -> StrategyPerf:
    r = strategy_returns(positions, realized_excess)
    if r.shape[0] < 2:
        raise ParameterError("need at least two periods")
    m = float(np.mean(r))
    s = float(np.std(r, ddof=1))
    if not s > 0:
        raise UndefinedSharpeError("strategy returns have zero dispersion")
    return StrategyPerf(periods_per_year * m, math.sqrt(periods_per_year) * s,
                        math.sqrt(periods_per_year) * m / s)


@dataclass
class SharpeSummary:
    """Posterior means of annualized mean, sd and Sharpe over valid draws."""

    mu: float
    sigma: float
    sharpe: float
    n_valid: int
    n_excluded: int
    sharpe_draws: np.ndarray

    def row(self):
        return {"mu": self.mu, "sigma": self.sigma, "sharpe": self.sharpe}


def posterior_sharpe(locations, realized_excess, lower=-0.01, upper=0.01, periods_per_year=12,
                     mask=None) -> SharpeSummary:
    """Draw-signal mode.

    ``locations`` is (n_origins, M): the per-draw predicted return at every
    origin, aligned by draw index.  Draw ``m`` yields one signal path and one
    :class:`StrategyPerf`; draws with zero return dispersion are excluded and
    counted.  ``mask`` selects a subset of origins (a regime).
    """
    L = np.asarray(locations, dtype=float)
    y = np.asarray(realized_excess, dtype=float)
    if L.ndim != 2 or L.shape[0] != y.shape[0]:
        raise AlignmentError("locations must be (n_origins, M) aligned with realized returns")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        L, y = L[mask], y[mask]
    if L.shape[0] < 2:
        raise ParameterError("need at least two periods")
    R = signals(L, lower, upper) * y[:, None]
    m = R.mean(axis=0)
    s = R.std(axis=0, ddof=1)
    ok = s > 0
    if not np.any(ok):
        raise UndefinedSharpeError("every draw has zero strategy dispersion")
    sharpe = math.sqrt(periods_per_year) * m[ok] / s[ok]
    return SharpeSummary(float(periods_per_year * m[ok].mean()),
                         float(math.sqrt(periods_per_year) * s[ok].mean()),
                         float(sharpe.mean()), int(ok.sum()), int((~ok).sum()), sharpe)


def point_signal_performance(point_forecasts, realized_excess, lower=-0.01, upper=0.01,
                             periods_per_year=12, mask=None) -> StrategyPerf:
    """Point-signal mode: one path from the predictive means."""
    p = np.asarray(point_forecasts, dtype=float)
    y = np.asarray(realized_excess, dtype=float)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        p, y = p[mask], y[mask]
    return strategy_performance(signals(p, lower, upper), y, periods_per_year)


REGIMES = ("recession", "expansion", "full")


def _regime_masks(recession):
    rec = np.asarray(recession, dtype=bool)
    return {"recession": rec, "expansion": ~rec, "full": np.ones_like(rec)}


def trading_table(records_by_model, lower=-0.01, upper=0.01, mode="draw", rf=None,
                  periods_per_year=12):
    """Rows of (model, regime, mu, sigma, sharpe) from backtest records.

    ``mode`` is ``"draw"`` (per-draw signals, posterior means) or ``"point"``
    (signals from predictive means).  With ``rf`` (dict target -> risk-free
    rate) mu and sigma are computed on total instead of excess returns while
    the Sharpe ratio stays on excess returns.  Regimes without a defined
    Sharpe ratio report NaN and their exclusion is recorded in ``n_excluded``.
    """
    if mode not in ("draw", "point"):
        raise ParameterError(f"unknown mode {mode!r}")
    rows = []
    for model, recs in records_by_model.items():
        recs = sorted(recs, key=lambda r: r.target)
        y = np.array([r.realized for r in recs])
        for regime, mask in _regime_masks([r.recession for r in recs]).items():
            row = {"model": model, "regime": regime, "mu": math.nan, "sigma": math.nan,
                   "sharpe": math.nan, "n_excluded": 0}
            if mask.sum() < 2:
                rows.append(row)
                continue
            if mode == "draw":
                L = np.vstack([r.locations for r in recs])
                W = signals(L[mask], lower, upper).astype(float)
            else:
                W = signals(np.array([r.point for r in recs])[mask], lower, upper).astype(float)[:, None]
            R = W * y[mask][:, None]
            s = R.std(axis=0, ddof=1)
            ok = s > 0
            row["n_excluded"] = int((~ok).sum())
            if ok.any():
                row["sharpe"] = float(np.mean(math.sqrt(periods_per_year) * R.mean(axis=0)[ok] / s[ok]))
                if rf is not None:
                    r_f = np.array([rf[r.target] for r in recs])[mask]
                    R = R + r_f[:, None]
                row["mu"] = float(periods_per_year * R.mean(axis=0)[ok].mean())
                row["sigma"] = float(math.sqrt(periods_per_year) * R.std(axis=0, ddof=1)[ok].mean())
            rows.append(row)
    return rows
