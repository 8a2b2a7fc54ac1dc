"""Closed-form laws for the log-conformal-radius decrement B of nested CLE loops.

B has the law of the first time the diffusion

    d theta = (kappa - 4)/2 cot(theta/2) dt + sqrt(kappa) dW

started at 0 reaches 2 pi.  Its density is the exit-time density f_kappa of a
standard Brownian motion from (-2 pi/sqrt(kappa), 2 pi/sqrt(kappa)) reweighted
by -cos(4 pi/kappa) exp((kappa - 4)^2 x / (8 kappa)).

Two dual series are available for f_kappa:

* the spectral series, fast for large x,
      f(x) = kappa/(8 pi) S(kappa x / 32),
* the image (heat-kernel) series, fast for small x,
      f(x) = 2 r / sqrt(2 pi x^3) S(r^2 / (2 x)),   r = 2 pi / sqrt(kappa),

both built on the alternating sum S(q) = sum_k (-1)^k (2k+1) exp(-(2k+1)^2 q).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import wofz

from .errors import DomainError, PoleError
from .specfun import SeriesValue

__all__ = [
    "Kappa",
    "GasketExponents",
    "as_kappa",
    "f_kappa_spectral",
    "f_kappa_heat",
    "density_B",
    "pdf_B",
    "cdf_B",
    "cdf_B_value",
    "sf_B",
    "mgf_B",
    "mean_B",
    "gasket_exponents",
    "mgf_abscissa",
    "thickness_mgf",
    "CROSSOVER",
]

KAPPA_MIN = 8.0 / 3.0
KAPPA_MAX = 8.0
# heat-kernel series below kappa * x = CROSSOVER, spectral above
CROSSOVER = 8.0
EPS = np.finfo(float).eps
# smallest argument of exp() that does not underflow to zero
_EXP_UNDERFLOW = 745.0


@dataclass(frozen=True)
class Kappa:
    """A validated CLE parameter 8/3 < kappa < 8 and the constants derived from it."""

    kappa: float

    def __post_init__(self):
        k = float(self.kappa)
        if not (KAPPA_MIN < k < KAPPA_MAX):
            raise DomainError(f"kappa must lie in the open interval (8/3, 8), got {k!r}")
        object.__setattr__(self, "kappa", k)

    def __float__(self):
        return self.kappa

    @property
    def n(self) -> float:
        """Loop-model weight n = -2 cos(4 pi / kappa)."""
        return -2.0 * math.cos(4.0 * math.pi / self.kappa)

    @property
    def eps(self) -> float:
        """1 - 4/kappa."""
        return 1.0 - 4.0 / self.kappa

    @property
    def weight(self) -> float:
        """Prefactor -cos(4 pi/kappa) = cos(pi (1 - 4/kappa)) > 0 of the reweighted density."""
        return math.cos(math.pi * self.eps)

    @property
    def tilt(self) -> float:
        """Exponential tilt (kappa - 4)^2 / (8 kappa) of the reweighted density."""
        k = self.kappa
        return (k - 4.0) ** 2 / (8.0 * k)

    @property
    def half_width(self) -> float:
        """Half-width 2 pi / sqrt(kappa) of the Brownian exit interval."""
        return 2.0 * math.pi / math.sqrt(self.kappa)


def as_kappa(kappa) -> Kappa:
    return kappa if isinstance(kappa, Kappa) else Kappa(kappa)


@dataclass(frozen=True)
class GasketExponents:
    alpha: float
    expectation_dimension: float


def _check_x(x):
    xa = np.asarray(x, dtype=float)
    if not np.all(xa > 0) or not np.all(np.isfinite(xa)):
        raise DomainError("x must be positive and finite")
    return xa


# --------------------------------------------------------------------------
# the alternating theta-type sum shared by both series
# --------------------------------------------------------------------------

def _alt_sum(q: np.ndarray, scale=None):
    """S(q) = sum_k (-1)^k m e^{-m^2 q}, m = 2k+1, with an alternating-series bound.

    ``scale`` (same shape as q) multiplies the terms before the stopping test so
    the bound is for scale * S.  Terms decrease once m > 1/sqrt(2q); from
    there the first omitted term bounds the tail.
    """
    q = np.asarray(q, dtype=float)
    if scale is None:
        scale = np.ones_like(q)
    q_min = float(q.min())
    # enough terms that every element has passed the monotone point and underflowed
    m_mono = 1.0 / math.sqrt(2.0 * q_min)
    m_under = math.sqrt(_EXP_UNDERFLOW / q_min)
    n_terms = int(math.ceil((max(m_mono, m_under) + 3.0) / 2.0)) + 1
    total = np.zeros_like(q)
    abs_total = np.zeros_like(q)
    omitted = np.zeros_like(q)
    done = np.zeros(q.shape, dtype=bool)
    for k in range(n_terms):
        m = 2.0 * k + 1.0
        t = scale * m * np.exp(-m * m * q)
        # terms at index k are decreasing from here on where m >= m_mono(q)
        past = m >= 1.0 / np.sqrt(2.0 * q)
        stop = ~done & past & ((t < 1e-17 * np.abs(total)) | (t == 0))
        omitted = np.where(stop, t, omitted)
        done |= stop
        add = ~done
        sign = -1.0 if k % 2 else 1.0
        total = np.where(add, total + sign * t, total)
        abs_total = np.where(add, abs_total + t, abs_total)
        if done.all():
            break
    err = omitted + 4 * EPS * n_terms * abs_total
    return total, err, k + 1


def _spectral(kap: Kappa, x: np.ndarray):
    k = kap.kappa
    return _alt_sum(k * x / 32.0, np.full_like(x, k / (8.0 * math.pi)))


def _heat(kap: Kappa, x: np.ndarray):
    r = kap.half_width
    return _alt_sum(r * r / (2.0 * x), 2.0 * r / np.sqrt(2.0 * math.pi * x ** 3))


def _scalar(fn, kap, x) -> SeriesValue:
    xa = _check_x(x)
    if xa.ndim != 0:
        raise TypeError("expected a scalar x")
    v, e, n = fn(kap, xa.reshape(1))
    return SeriesValue(float(v[0]), float(e[0]), n)


def f_kappa_spectral(kappa, x: float) -> SeriesValue:
    """Brownian exit-time density from (-2pi/sqrt(kappa), 2pi/sqrt(kappa)), large-x series.

    f(x) = kappa/(8 pi) sum_j (-1)^j (2j+1) exp(-(2j+1)^2 kappa x / 32)
    """
    return _scalar(_spectral, as_kappa(kappa), x)


def f_kappa_heat(kappa, x: float) -> SeriesValue:
    """The same density from the method of images (small-x series).

    f(x) = 2 sum_k (-1)^k (2k+1) r / sqrt(2 pi x^3) exp(-(2k+1)^2 r^2 / (2x)),
    with r = 2 pi / sqrt(kappa).
    """
    return _scalar(_heat, as_kappa(kappa), x)


def _density(kap: Kappa, x: np.ndarray):
    """Vectorised density of B with error bounds, using the crossover rule."""
    k, w, c = kap.kappa, kap.weight, kap.tilt
    val = np.empty_like(x)
    err = np.empty_like(x)
    heat = k * x < CROSSOVER
    if heat.any():
        xs = x[heat]
        r = kap.half_width
        # fold the tilt into the scale so nothing overflows
        scale = w * np.exp(c * xs) * 2.0 * r / np.sqrt(2.0 * math.pi * xs ** 3)
        v, e, _ = _alt_sum(r * r / (2.0 * xs), scale)
        val[heat], err[heat] = v, e
    if (~heat).any():
        xs = x[~heat]
        v, e = _tilted_spectral(kap, xs, integrate=False)
        val[~heat], err[~heat] = v, e
    return val, err


def _tilted_spectral(kap: Kappa, x: np.ndarray, integrate: bool):
    """sum_j (-1)^j m e^{-beta_m x} (/ beta_m if integrate), beta_m = m^2 kappa/32 - tilt.

    Multiplied by weight * kappa/(8 pi).  The terms decrease monotonically in m
    for kappa x >= 8, so the first omitted term bounds the tail.
    """
    k, c = kap.kappa, kap.tilt
    pref = kap.weight * k / (8.0 * math.pi)
    total = np.zeros_like(x)
    abs_total = np.zeros_like(x)
    omitted = np.zeros_like(x)
    done = np.zeros(x.shape, dtype=bool)
    j = 0
    while True:
        m = 2.0 * j + 1.0
        beta = m * m * k / 32.0 - c
        t = pref * m * np.exp(-beta * x)
        if integrate:
            t = t / beta
        stop = ~done & ((t < 1e-17 * np.abs(total)) | (t == 0))
        omitted = np.where(stop, t, omitted)
        done |= stop
        sign = -1.0 if j % 2 else 1.0
        total = np.where(done, total, total + sign * t)
        abs_total = np.where(done, abs_total, abs_total + t)
        j += 1
        if done.all():
            break
    return total, omitted + 4 * EPS * j * abs_total


def density_B(kappa, x: float) -> SeriesValue:
    """Density of B at x > 0:  -cos(4pi/kappa) exp((kappa-4)^2 x/(8 kappa)) f_kappa(x)."""
    kap = as_kappa(kappa)
    xa = _check_x(x)
    v, e = _density(kap, xa.reshape(1))
    return SeriesValue(float(v[0]), float(e[0]), 0)


def pdf_B(kappa, x):
    """Vectorised density of B (values only)."""
    kap = as_kappa(kappa)
    xa = _check_x(x)
    v, _ = _density(kap, np.atleast_1d(xa).astype(float))
    return v.reshape(xa.shape) if xa.ndim else float(v[0])


def _heat_cdf(kap: Kappa, x: np.ndarray):
    """CDF of B below the crossover, integrating the image series term by term.

    Each image term integrates in closed form:
        int_0^x e^{c y} a / sqrt(2 pi y^3) e^{-a^2/(2y)} dy
            = e^{c x - a^2/(2x)} Re w((omega sqrt(x) + i a / sqrt(x)) / sqrt(2)),
    with omega = sqrt(2c) and w the Faddeeva function.
    """
    c = kap.tilt
    omega = math.sqrt(2.0 * c)
    r = kap.half_width
    sx = np.sqrt(x)
    total = np.zeros_like(x)
    abs_total = np.zeros_like(x)
    omitted = np.zeros_like(x)
    done = np.zeros(x.shape, dtype=bool)
    k = 0
    while True:
        a = (2.0 * k + 1.0) * r
        arg = (omega * sx + 1j * a / sx) / math.sqrt(2.0)
        t = 2.0 * kap.weight * np.exp(c * x - a * a / (2.0 * x)) * wofz(arg).real
        stop = ~done & ((np.abs(t) < 1e-17 * np.abs(total)) | (t == 0))
        omitted = np.where(stop, np.abs(t), omitted)
        done |= stop
        sign = -1.0 if k % 2 else 1.0
        total = np.where(done, total, total + sign * t)
        abs_total = np.where(done, abs_total, abs_total + np.abs(t))
        k += 1
        if done.all():
            break
    return total, omitted + 4 * EPS * k * abs_total


def _cdf_sf(kap: Kappa, x: np.ndarray):
    cdf = np.empty_like(x)
    sf = np.empty_like(x)
    heat = kap.kappa * x < CROSSOVER
    if heat.any():
        v, _ = _heat_cdf(kap, x[heat])
        cdf[heat] = v
        sf[heat] = 1.0 - v
    if (~heat).any():
        v, _ = _tilted_spectral(kap, x[~heat], integrate=True)
        sf[~heat] = v
        cdf[~heat] = 1.0 - v
    return np.clip(cdf, 0.0, 1.0), np.clip(sf, 0.0, 1.0)


def cdf_B(kappa, x):
    """Pr[B <= x].  Accepts scalars or arrays.

    Closed-form term-by-term integration of the spectral series above the
    crossover and of the image series (via the Faddeeva function) below it.
    """
    kap = as_kappa(kappa)
    xa = _check_x(x)
    cdf, _ = _cdf_sf(kap, np.atleast_1d(xa).astype(float))
    return cdf.reshape(xa.shape) if xa.ndim else float(cdf[0])


def cdf_B_value(kappa, x: float) -> SeriesValue:
    """Pr[B <= x] at a scalar x with the truncation bound of the series used."""
    kap = as_kappa(kappa)
    xa = np.atleast_1d(_check_x(x)).astype(float)
    if kap.kappa * xa[0] < CROSSOVER:
        v, e = _heat_cdf(kap, xa)
    else:
        sf, e = _tilted_spectral(kap, xa, integrate=True)
        v = 1.0 - sf
    return SeriesValue(float(min(max(v[0], 0.0), 1.0)), float(e[0]), 0)


def sf_B(kappa, x):
    """Pr[B > x], computed directly (no cancellation in the far tail)."""
    kap = as_kappa(kappa)
    xa = _check_x(x)
    _, sf = _cdf_sf(kap, np.atleast_1d(xa).astype(float))
    return sf.reshape(xa.shape) if xa.ndim else float(sf[0])


# --------------------------------------------------------------------------
# transforms, moments, exponents
# --------------------------------------------------------------------------

def mgf_abscissa(kappa) -> float:
    """Convergence abscissa 1 - 2/kappa - 3 kappa/32 of E[exp(lambda B)]."""
    k = as_kappa(kappa).kappa
    return 1.0 - 2.0 / k - 3.0 * k / 32.0


def gasket_exponents(kappa) -> GasketExponents:
    """Tail exponent alpha of B and the expectation dimension 2 - alpha of the gasket."""
    k = as_kappa(kappa).kappa
    alpha = (8.0 - k) * (3.0 * k - 8.0) / (32.0 * k)
    dim = 3.0 * k / 32.0 + 1.0 + 2.0 / k
    return GasketExponents(alpha, dim)


def _root(kap: Kappa, lam: complex) -> complex:
    e = kap.eps
    return cmath.sqrt(e * e + 8.0 * lam / kap.kappa)


def mgf_B(kappa, lam: complex) -> complex:
    """E[exp(lam B)] = cos(pi (1 - 4/kappa)) / cos(pi sqrt((1 - 4/kappa)^2 + 8 lam/kappa)).

    Raises DomainError unless Re lam < mgf_abscissa(kappa).
    """
    kap = as_kappa(kappa)
    lam = complex(lam)
    abscissa = mgf_abscissa(kap)
    if not lam.real < abscissa:
        raise DomainError(
            f"the MGF of B needs Re(lambda) < 1 - 2/kappa - 3kappa/32 = {abscissa:.6g}, "
            f"got {lam.real:g}")
    den = cmath.cos(math.pi * _root(kap, lam))
    if abs(den) < 1e-300:
        raise PoleError(f"MGF pole at lambda = {lam}")
    return kap.weight / den


def _tan_over(x: float) -> float:
    """tan(x)/x with its removable singularity at 0."""
    if abs(x) < 1e-4:
        x2 = x * x
        return 1.0 + x2 / 3.0 + 2.0 * x2 * x2 / 15.0
    return math.tan(x) / x


def mean_B(kappa) -> float:
    """E[B] = pi / ((kappa/4 - 1) cot(pi (1 - 4/kappa))); equal to pi^2 at kappa = 4."""
    kap = as_kappa(kappa)
    e = kap.eps
    # (kappa/4 - 1) = kappa e / 4, so E[B] = 4 pi^2 tan(pi e) / (pi e kappa)
    return 4.0 * math.pi ** 2 * _tan_over(math.pi * e) / kap.kappa


def _sinc(x: complex) -> complex:
    if abs(x) < 1e-4:
        x2 = x * x
        return 1.0 - x2 / 6.0 + x2 * x2 / 120.0
    return cmath.sin(x) / x


def thickness_mgf(kappa, lam: complex) -> complex:
    """Large-k limiting MGF of the electrical thickness of nested loops.

        sinc(pi (1 - 4/kappa)) / sinc(pi sqrt((1 - 4/kappa)^2 + 8 lam/kappa)),
    with sinc(x) = sin(x)/x.  Valid for Re lam below the first pole
    kappa (1 - (1 - 4/kappa)^2) / 8.
    """
    kap = as_kappa(kappa)
    lam = complex(lam)
    e = kap.eps
    pole = kap.kappa * (1.0 - e * e) / 8.0
    if not lam.real < pole:
        raise PoleError(
            f"the thickness MGF needs Re(lambda) < {pole:.6g} (first pole), got {lam.real:g}")
    den = _sinc(math.pi * _root(kap, lam))
    if abs(den) < 1e-300:
        raise PoleError(f"thickness MGF pole at lambda = {lam}")
    return complex(_sinc(math.pi * e)) / den
