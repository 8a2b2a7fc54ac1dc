"""Statistical checks linking simulated samples to closed forms.

Empirical laws with a provenance digest, the two-sided KS statistic, numerical
Laplace transforms of densities and least-squares slope fits.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, stats

from .errors import ConvergenceError, InsufficientDataError

__all__ = [
    "EmpiricalLaw",
    "SlopeFit",
    "config_digest",
    "ks_statistic",
    "ks_critical_value",
    "laplace_quadrature",
    "slope_fit",
]

# asymptotic 0.1% critical value of sqrt(n) * D_n for a fully specified null
KS_CRITICAL_001 = 1.95


def config_digest(obj) -> str:
    """sha256 of the canonical JSON of a (JSON-able) configuration."""
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()


@dataclass(frozen=True)
class EmpiricalLaw:
    """Sorted sample with the digest of the configuration that produced it."""

    samples: np.ndarray
    provenance: str = ""
    n: int = field(init=False)

    def __post_init__(self):
        x = np.sort(np.asarray(self.samples, dtype=float).ravel())
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "n", int(x.size))

    def cdf(self, x):
        """Right-continuous empirical distribution function."""
        return np.searchsorted(self.samples, x, side="right") / self.n

    def mean(self) -> float:
        return float(self.samples.mean())

    def stderr(self) -> float:
        """Standard error of the sample mean."""
        if self.n < 2:
            return math.inf
        return float(self.samples.std(ddof=1) / math.sqrt(self.n))

    def survival(self, s) -> np.ndarray:
        """Fraction of samples strictly above s."""
        s = np.asarray(s, dtype=float)
        return 1.0 - np.searchsorted(self.samples, s, side="right") / self.n


def ks_critical_value(n: int) -> float:
    return KS_CRITICAL_001 / math.sqrt(n)


def ks_statistic(law: EmpiricalLaw, cdf: Callable) -> float:
    """sup |F_n - F| evaluated at the sample points from both sides of each jump."""
    if law.n < 1:
        raise InsufficientDataError("KS statistic needs at least one sample")
    f = np.asarray(cdf(law.samples), dtype=float)
    i = np.arange(1, law.n + 1)
    d_plus = np.max(i / law.n - f)
    d_minus = np.max(f - (i - 1) / law.n)
    return float(max(d_plus, d_minus, 0.0))


def _quad(fn, a, b, tol):
    re, re_err = integrate.quad(lambda x: fn(x).real, a, b, epsabs=tol, epsrel=0, limit=200)
    im, im_err = integrate.quad(lambda x: fn(x).imag, a, b, epsabs=tol, epsrel=0, limit=200)
    return complex(re, im), math.hypot(re_err, im_err)


def laplace_quadrature(density: Callable, lam: complex, domain_split: float = 10.0, *,
                       tol: float = 1e-9, tail_rate: float | None = None,
                       max_panels: int = 60) -> complex:
    """int_0^inf e^{lam x} density(x) dx by Gauss-Kronrod panels.

    [0, domain_split] is one adaptive panel; beyond it panels of doubling
    length are added until the bound on what is left drops below ``tol``.
    With ``tail_rate`` r (density decaying like e^{-r x}) the remainder after
    X is bounded by |integrand(X)| / (r - Re lam); otherwise the last panel's
    contribution is used as the estimate.
    """
    lam = complex(lam)
    if domain_split <= 0:
        raise ValueError("domain_split must be positive")
    if tail_rate is not None and tail_rate - lam.real <= 0:
        raise ConvergenceError("transform diverges: Re lambda is not below the tail rate")

    def integrand(x):
        return complex(np.exp(lam * x) * density(x))

    total, err = _quad(integrand, 0.0, domain_split, tol / 4)
    a, width = domain_split, domain_split
    for _ in range(max_panels):
        piece, perr = _quad(integrand, a, a + width, tol / 4)
        total += piece
        err += perr
        a += width
        width *= 2.0
        if tail_rate is not None:
            rest = abs(integrand(a)) / (tail_rate - lam.real)
        else:
            rest = abs(piece)
        if rest + perr < tol:
            return total
    raise ConvergenceError(f"Laplace transform tail not below {tol:g} after {max_panels} panels")


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    stderr: float
    intercept: float
    n_points: int


def slope_fit(points, window: tuple[float, float] | None = None) -> SlopeFit:
    """Ordinary least squares y ~ a + slope x over points with x in ``window``."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if window is not None:
        lo, hi = window
        pts = pts[(pts[:, 0] >= lo) & (pts[:, 0] <= hi)]
    if len(pts) < 3:
        raise InsufficientDataError(f"slope fit needs >= 3 points in the window, got {len(pts)}")
    res = stats.linregress(pts[:, 0], pts[:, 1])
    return SlopeFit(float(res.slope), float(res.stderr), float(res.intercept), len(pts))
