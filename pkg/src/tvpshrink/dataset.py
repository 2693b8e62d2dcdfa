"""Monthly dataset container and yyyymm date arithmetic."""

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

__all__ = ["Dataset", "month_index", "from_month_index", "add_months", "month_range"]


def month_index(yyyymm):
    """Integer yyyymm -> months since year 0 (vectorized)."""
    d = np.asarray(yyyymm, dtype=np.int64)
    year, month = np.divmod(d, 100)
    bad = (month < 1) | (month > 12)
    if np.any(bad):
        raise DataError(f"invalid yyyymm date(s): {np.atleast_1d(d)[np.atleast_1d(bad)][:5].tolist()}")
    out = year * 12 + month - 1
    return int(out) if np.ndim(out) == 0 else out


def from_month_index(idx):
    i = np.asarray(idx, dtype=np.int64)
    year, m = np.divmod(i, 12)
    out = year * 100 + m + 1
    return int(out) if np.ndim(out) == 0 else out


def add_months(yyyymm, n):
    return from_month_index(month_index(yyyymm) + n)


def month_range(start, end):
    """Inclusive list of yyyymm dates from ``start`` to ``end``."""
    return [from_month_index(i) for i in range(month_index(start), month_index(end) + 1)]


@dataclass
class Dataset:
    """Aligned monthly data.

    Row ``t`` of ``X`` holds information dated no later than month ``t - 1``
    when the predictors were lagged at ingestion.
    """

    dates: np.ndarray            # (T,) int yyyymm, strictly consecutive months
    y: np.ndarray                # (T,) excess return, decimal
    X: np.ndarray                # (T, K)
    names: list = field(default_factory=list)
    recession: np.ndarray = None  # (T,) bool
    rf: np.ndarray = None        # (T,) risk-free rate, optional

    def __post_init__(self):
        self.dates = np.asarray(self.dates, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=float)
        self.X = np.asarray(self.X, dtype=float).reshape(self.y.shape[0], -1)
        T = self.y.shape[0]
        if self.dates.shape != (T,):
            raise DataError("dates and y differ in length")
        if not self.names:
            self.names = [f"x{j}" for j in range(self.X.shape[1])]
        if len(self.names) != self.X.shape[1]:
            raise DataError("predictor names do not match X columns")
        self.recession = (np.zeros(T, dtype=bool) if self.recession is None
                          else np.asarray(self.recession, dtype=bool))
        if self.rf is not None:
            self.rf = np.asarray(self.rf, dtype=float)
        steps = np.diff(month_index(self.dates)) if T > 1 else np.array([], dtype=np.int64)
        if np.any(steps <= 0):
            k = int(np.argmax(steps <= 0))
            raise DataError(f"dates not strictly increasing at {self.dates[k + 1]}")
        if np.any(steps != 1):
            k = int(np.argmax(steps != 1))
            raise DataError(f"gap in monthly dates after {self.dates[k]}")

    @property
    def T(self):
        return self.y.shape[0]

    @property
    def K(self):
        return self.X.shape[1]

    def row(self, date):
        i = month_index(date) - month_index(self.dates[0])
        if not (0 <= i < self.T):
            raise DataError(f"date {date} outside dataset range {self.dates[0]}-{self.dates[-1]}")
        return int(i)

    def window(self, start, end):
        """Inclusive row slice between two dates."""
        return slice(self.row(start), self.row(end) + 1)
