"""
Random variate generation and density primitives.

All samplers take a ``numpy.random.Generator``.  Reproducible streams are
obtained from :class:`RngStream`, which maps a ``(seed, stream)`` pair onto an
independent PCG64 generator via ``SeedSequence`` spawn keys.

GIG convention used throughout the package::

    f(x | p, a, b)  ∝  x**(p - 1) * exp(-(a*x + b/x) / 2),   x > 0

The GIG sampler follows the three-regime algorithm of Hörmann & Leydold
(2014): ratio-of-uniforms with mode shift, ratio-of-uniforms without shift,
and a piecewise hat for the log-concave-free region (small p, small
sqrt(a*b)).  The scalar kernels are compiled with numba and consume the
caller's Generator directly, so the stream is shared with numpy code.
"""

from dataclasses import dataclass
import math

import numba
import numpy as np
from scipy.special import gammaln

from .errors import ParameterError

__all__ = [
    "RngStream",
    "GigParams",
    "draw_gig",
    "draw_inverse_gaussian",
    "draw_inverse_gamma",
    "draw_gamma",
    "draw_beta",
    "draw_normal",
    "student_t_logpdf",
    "normal_logpdf",
]

# below this sqrt(a*b) the Gamma / inverse-Gamma limit is exact to double precision
_ZTOL = 10.0 * np.finfo(float).eps


@dataclass(frozen=True)
class RngStream:
    """Deterministic handle on an independent random stream.

    Identical ``(seed, stream)`` pairs reproduce identical sequences; distinct
    ``stream`` values give statistically independent generators.
    """

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream),))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, stream: int) -> "RngStream":
        return RngStream(self.seed, stream)


@dataclass(frozen=True)
class GigParams:
    p: float
    a: float
    b: float

    def validate(self):
        _check_gig(self.p, self.a, self.b)
        return self


def _check_gig(p, a, b):
    p = np.asarray(p, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ParameterError("GIG parameters must be finite")
    if np.any(a < 0) or np.any(b < 0):
        raise ParameterError("GIG requires a >= 0 and b >= 0")
    bad = ((p < 0) & (b <= 0)) | ((p > 0) & (a <= 0)) | ((p == 0) & ((a <= 0) | (b <= 0)))
    if np.any(bad):
        raise ParameterError(
            "GIG density not normalizable: need b > 0 if p <= 0 and a > 0 if p >= 0"
        )


# ---------------------------------------------------------------------------
# compiled kernels (standardized two-parameter GIG, index lam >= 0)
# density  x**(lam-1) * exp(-omega/2 * (x + 1/x))
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _gig_mode(lam, omega):
    if lam >= 1.0:
        return (math.sqrt((lam - 1.0) ** 2 + omega * omega) + (lam - 1.0)) / omega
    return omega / (math.sqrt((1.0 - lam) ** 2 + omega * omega) + (1.0 - lam))


@numba.njit(cache=True)
def _rou_noshift(lam, omega, rng):
    t = 0.5 * (lam - 1.0)
    s = 0.25 * omega
    xm = _gig_mode(lam, omega)
    nc = t * math.log(xm) - s * (xm + 1.0 / xm)
    ym = ((lam + 1.0) + math.sqrt((lam + 1.0) ** 2 + omega * omega)) / omega
    um = math.exp(0.5 * (lam + 1.0) * math.log(ym) - s * (ym + 1.0 / ym) - nc)
    while True:
        u = um * rng.random()
        v = rng.random()
        if v <= 0.0 or u <= 0.0:
            continue
        x = u / v
        if math.log(v) <= t * math.log(x) - s * (x + 1.0 / x) - nc:
            return x


@numba.njit(cache=True)
def _rou_shift_bounds(lam, omega):
    t = 0.5 * (lam - 1.0)
    s = 0.25 * omega
    xm = _gig_mode(lam, omega)
    nc = t * math.log(xm) - s * (xm + 1.0 / xm)
    # extrema of (x - xm) * sqrt(f(x)) are roots of a cubic
    a = -(2.0 * (lam + 1.0) / omega + xm)
    b = 2.0 * (lam - 1.0) * xm / omega - 1.0
    c = xm
    p = b - a * a / 3.0
    q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c
    arg = -q / (2.0 * math.sqrt(-p * p * p / 27.0))
    arg = min(1.0, max(-1.0, arg))
    fi = math.acos(arg)
    fak = 2.0 * math.sqrt(-p / 3.0)
    y1 = fak * math.cos(fi / 3.0) - a / 3.0
    y2 = fak * math.cos(fi / 3.0 + 4.0 / 3.0 * math.pi) - a / 3.0
    uplus = (y1 - xm) * math.exp(t * math.log(y1) - s * (y1 + 1.0 / y1) - nc)
    uminus = (y2 - xm) * math.exp(t * math.log(y2) - s * (y2 + 1.0 / y2) - nc)
    return xm, nc, uminus, uplus


@numba.njit(cache=True)
def _rou_shift(lam, omega, rng):
    t = 0.5 * (lam - 1.0)
    s = 0.25 * omega
    xm, nc, uminus, uplus = _rou_shift_bounds(lam, omega)
    while True:
        u = uminus + rng.random() * (uplus - uminus)
        v = rng.random()
        if v <= 0.0:
            continue
        x = u / v + xm
        if x <= 0.0:
            continue
        if math.log(v) <= t * math.log(x) - s * (x + 1.0 / x) - nc:
            return x


@numba.njit(cache=True)
def _piecewise_hat(lam, omega, rng):
    # requires 0 <= lam < 1
    xm = _gig_mode(lam, omega)
    x0 = omega / (1.0 - lam)
    k0 = math.exp((lam - 1.0) * math.log(xm) - 0.5 * omega * (xm + 1.0 / xm))
    a0 = k0 * x0
    if x0 >= 2.0 / omega:
        k1 = 0.0
        a1 = 0.0
        k2 = x0 ** (lam - 1.0)
        a2 = k2 * 2.0 * math.exp(-omega * x0 / 2.0) / omega
    else:
        k1 = math.exp(-omega)
        if lam == 0.0:
            a1 = k1 * math.log(2.0 / (omega * omega))
        else:
            a1 = k1 / lam * ((2.0 / omega) ** lam - x0 ** lam)
        k2 = (2.0 / omega) ** (lam - 1.0)
        a2 = k2 * 2.0 * math.exp(-1.0) / omega
    atot = a0 + a1 + a2
    tail_start = max(x0, 2.0 / omega)
    while True:
        v = atot * rng.random()
        if v <= a0:
            x = x0 * v / a0
            hx = k0
        else:
            v -= a0
            if v <= a1:
                if lam == 0.0:
                    x = omega * math.exp(math.exp(omega) * v)
                    hx = k1 / x
                else:
                    x = (x0 ** lam + lam / k1 * v) ** (1.0 / lam)
                    hx = k1 * x ** (lam - 1.0)
            else:
                v -= a1
                arg = math.exp(-omega / 2.0 * tail_start) - omega / (2.0 * k2) * v
                if arg <= 0.0:
                    continue
                x = -2.0 / omega * math.log(arg)
                hx = k2 * math.exp(-omega / 2.0 * x)
        if x <= 0.0:
            continue
        u = rng.random() * hx
        if u <= 0.0:
            return x
        if math.log(u) <= (lam - 1.0) * math.log(x) - omega / 2.0 * (x + 1.0 / x):
            return x


@numba.njit(cache=True)
def _gig_standard(lam, omega, rng):
    if lam > 2.0 or omega > 3.0:
        return _rou_shift(lam, omega, rng)
    if lam >= 1.0 - 2.25 * omega * omega or omega > 0.2:
        return _rou_noshift(lam, omega, rng)
    return _piecewise_hat(lam, omega, rng)


@numba.njit(cache=True)
def _gig_one(p, a, b, rng):
    omega = math.sqrt(a * b)
    if omega < _ZTOL and p != 0.0:
        if p > 0.0:
            return 2.0 * rng.standard_gamma(p) / a
        return b / (2.0 * rng.standard_gamma(-p))
    lam = abs(p)
    x = _gig_standard(lam, omega, rng)
    if p < 0.0:
        x = 1.0 / x
    return x * math.sqrt(b / a)


@numba.njit(cache=True)
def _gig_many(p, a, b, rng):
    out = np.empty(p.shape[0])
    for i in range(p.shape[0]):
        out[i] = _gig_one(p[i], a[i], b[i], rng)
    return out


def draw_gig(p, a, b, rng: np.random.Generator, size=None):
    """Draw from GIG(p, a, b) with density ∝ x^(p-1) exp(-(a x + b/x)/2).

    Parameters broadcast against each other and against ``size``.  Returns a
    Python float when every input is scalar and ``size`` is None.
    """
    _check_gig(p, a, b)
    scalar = size is None and all(np.ndim(v) == 0 for v in (p, a, b))
    shape = np.broadcast_shapes(np.shape(p), np.shape(a), np.shape(b))
    if size is not None:
        shape = np.broadcast_shapes(shape, (size,) if np.ndim(size) == 0 else tuple(size))
    pp, aa, bb = (np.ascontiguousarray(np.broadcast_to(np.asarray(v, float), shape)).ravel()
                  for v in (p, a, b))
    out = _gig_many(pp, aa, bb, rng).reshape(shape)
    return float(out[()]) if scalar else out


def draw_inverse_gaussian(mean, shape, rng: np.random.Generator, size=None):
    """Inverse-Gaussian draws as the GIG special case p = -1/2.

    IG(mean m, shape s) is GIG(-1/2, s/m^2, s).
    """
    mean = np.asarray(mean, dtype=float)
    shape = np.asarray(shape, dtype=float)
    if np.any(mean <= 0) or np.any(shape <= 0):
        raise ParameterError("inverse Gaussian needs positive mean and shape")
    a = shape / mean**2
    out = draw_gig(-0.5, a, shape, rng, size=size)
    return out


def draw_inverse_gamma(shape, rate, rng: np.random.Generator, size=None):
    """Draw with density ∝ x^(-shape-1) exp(-rate/x)."""
    shape = np.asarray(shape, dtype=float)
    rate = np.asarray(rate, dtype=float)
    if np.any(~(shape > 0)) or np.any(~(rate > 0)):
        raise ParameterError("inverse Gamma needs shape > 0 and rate > 0")
    if size is None:
        size = np.broadcast_shapes(shape.shape, rate.shape)
    g = rng.standard_gamma(shape, size=size)
    out = rate / g
    return float(out) if np.ndim(out) == 0 else out


def draw_gamma(shape, rate, rng: np.random.Generator, size=None):
    shape = np.asarray(shape, dtype=float)
    rate = np.asarray(rate, dtype=float)
    if np.any(~(shape > 0)) or np.any(~(rate > 0)):
        raise ParameterError("Gamma needs shape > 0 and rate > 0")
    if size is None:
        size = np.broadcast_shapes(shape.shape, rate.shape)
    out = rng.standard_gamma(shape, size=size) / rate
    return float(out) if np.ndim(out) == 0 else out


def draw_beta(a, b, rng: np.random.Generator, size=None):
    if np.any(np.asarray(a) <= 0) or np.any(np.asarray(b) <= 0):
        raise ParameterError("Beta needs positive shapes")
    out = rng.beta(a, b, size=size)
    return float(out) if np.ndim(out) == 0 else out


def draw_normal(mean, var, rng: np.random.Generator, size=None):
    if np.any(np.asarray(var) < 0):
        raise ParameterError("negative variance")
    out = mean + np.sqrt(var) * rng.standard_normal(size=size if size is not None
                                                      else np.broadcast_shapes(np.shape(mean), np.shape(var)))
    return float(out) if np.ndim(out) == 0 else out


def student_t_logpdf(x, dof, location=0.0, scale=1.0):
    """Log-density of ``location + scale * T`` with ``T ~ t_dof``.

    ``dof = inf`` gives the Gaussian log-density.  Vectorized.
    """
    dof = np.asarray(dof, dtype=float)
    scale = np.asarray(scale, dtype=float)
    if np.any(~(dof > 0)) or np.any(~(scale > 0)):
        raise ParameterError("student_t_logpdf needs dof > 0 and scale > 0")
    z = (np.asarray(x, dtype=float) - location) / scale
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        finite = np.isfinite(dof)
        d = np.where(finite, dof, 1.0)
        t_part = (gammaln(0.5 * (d + 1.0)) - gammaln(0.5 * d) - 0.5 * np.log(d * np.pi)
                  - 0.5 * (d + 1.0) * np.logaddexp(0.0, 2.0 * np.log(np.abs(z)) - np.log(d)))
        g_part = -0.5 * np.log(2.0 * np.pi) - 0.5 * z * z
    out = np.where(finite, t_part, g_part) - np.log(scale)
    return float(out) if np.ndim(out) == 0 else out


def normal_logpdf(x, mean, var):
    x = np.asarray(x, dtype=float)
    out = -0.5 * (np.log(2.0 * np.pi * var) + (x - mean) ** 2 / var)
    return float(out) if np.ndim(out) == 0 else out
