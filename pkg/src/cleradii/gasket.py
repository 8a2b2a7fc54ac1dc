"""Nested conformal radii and the expectation dimension of the gasket.

Around a fixed point the log conformal radii of the nested loops decrease by
i.i.d. steps distributed as B, the exit time of the lifted diffusion.  A point
lies within eps of the gasket roughly when B_1 > log(1/eps), whose probability
decays like eps^alpha; covering the annuli {2^-j-1 < |z| < 2^-j} then gives an
expected covering number of order

    sum_{j <= 1/eps} (1/eps) j^-alpha  ~  eps^(alpha - 2).

Packing Theta(1/eps^2) points in the disk, each near the gasket with
probability ~ eps^alpha, gives the matching lower bound, so the expectation
dimension is 2 - alpha.  All multiplicative constants are set to 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .diffusion import SimConfig, simulate_exits, simulate_truncated
from .errors import DomainError
from .lawlib import Kappa, as_kappa, gasket_exponents, sf_B
from .stats import SlopeFit, slope_fit

__all__ = [
    "NestedRadiiSequence",
    "SurvivalEstimate",
    "CoverEstimate",
    "sample_nested",
    "sample_nested_many",
    "survival_probability",
    "tail_exponent_fit",
    "covering_sum",
    "covering_exponent_fit",
    "MIN_SURVIVORS",
]

# fewer survivors than this mark an estimate as degenerate
MIN_SURVIVORS = 100


@dataclass(frozen=True)
class NestedRadiiSequence:
    """log CR of the nested loops A_0, A_1, ... around a point; log_cr[0] = 0."""

    kappa: Kappa
    log_cr: np.ndarray
    increments: np.ndarray

    @property
    def depth(self) -> int:
        return int(self.increments.size)


def _config(kappa, seed, dt_max, **kw) -> SimConfig:
    return SimConfig(as_kappa(kappa), theta0=0.0, dt_max=dt_max, seed=seed, **kw)


def sample_nested_many(kappa, depth: int, n_sequences: int, seed: int = 1, *,
                       dt_max: float = 1e-3, workers: int | None = None) -> np.ndarray:
    """Increments B_1..B_depth of ``n_sequences`` sequences, shape (n_sequences, depth).

    Sequence j uses the exit times of paths j*depth .. (j+1)*depth - 1.
    """
    depth, n_sequences = int(depth), int(n_sequences)
    if depth < 1 or n_sequences < 1:
        raise DomainError("depth and n_sequences must be at least 1")
    batch = simulate_exits(_config(kappa, seed, dt_max), depth * n_sequences, workers=workers)
    if batch.censored:
        raise DomainError("censored paths in a nested sequence")
    return batch.exit_time.reshape(n_sequences, depth)


def sample_nested(kappa, depth: int, seed: int = 1, *, sequence: int = 0,
                  dt_max: float = 1e-3) -> NestedRadiiSequence:
    """One nested sequence: ``depth`` i.i.d. exit times accumulated from log CR(D, 0) = 0."""
    kap = as_kappa(kappa)
    depth = int(depth)
    if depth < 1:
        raise DomainError(f"depth must be at least 1, got {depth}")
    batch = simulate_exits(_config(kap, seed, dt_max), depth, start=int(sequence) * depth,
                           workers=1)
    if batch.censored:
        raise DomainError("censored paths in a nested sequence")
    inc = batch.exit_time.copy()
    log_cr = np.concatenate([[0.0], -np.cumsum(inc)])
    inc.setflags(write=False)
    log_cr.setflags(write=False)
    return NestedRadiiSequence(kap, log_cr, inc)


@dataclass(frozen=True)
class SurvivalEstimate:
    """Monte Carlo Pr[B > s] with binomial standard errors and the closed-form tail."""

    s: np.ndarray
    estimate: np.ndarray
    stderr: np.ndarray
    survivors: np.ndarray
    exact: np.ndarray
    n: int

    @property
    def degenerate(self) -> np.ndarray:
        """Estimates resting on fewer than MIN_SURVIVORS survivals."""
        return self.survivors < MIN_SURVIVORS

    def within(self, nsigma: float = 3.0) -> np.ndarray:
        return np.abs(self.estimate - self.exact) <= nsigma * self.stderr


def survival_probability(kappa, s, n: int, seed: int = 1, *, dt_max: float = 1e-3,
                         workers: int | None = None) -> SurvivalEstimate:
    """Pr[B_1 > s] from n paths observed up to max(s)."""
    kap = as_kappa(kappa)
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if s.size == 0 or not np.all(s > 0) or not np.all(np.isfinite(s)):
        raise DomainError("s must be positive and finite")
    t, alive = simulate_truncated(_config(kap, seed, dt_max), n, float(s.max()), workers=workers)
    survivors = np.array([int(np.count_nonzero(alive | (t > x))) for x in s])
    p = survivors / t.size
    se = np.sqrt(p * (1.0 - p) / t.size)
    return SurvivalEstimate(s, p, se, survivors, np.asarray(sf_B(kap, s), dtype=float), int(t.size))


def tail_exponent_fit(est: SurvivalEstimate, window: tuple[float, float] | None = None) -> SlopeFit:
    """Slope of log Pr[B > s] against s (an estimate of -alpha), non-degenerate points only."""
    ok = ~est.degenerate
    pts = np.column_stack([est.s[ok], np.log(est.estimate[ok])])
    return slope_fit(pts, window)


@dataclass(frozen=True)
class CoverEstimate:
    """Annulus covering sum at eps, with the local exponent fitted over a decade around eps."""

    epsilon: float
    expected_disk_count: float
    exponent_fit: float
    ratio: float           # count / eps^(alpha - 2)


def _cover_count(alpha: float, eps: float) -> float:
    m = math.ceil(1.0 / eps)
    j = np.arange(1, m + 1, dtype=float)
    return float(np.sum(j ** -alpha) / eps)


def covering_sum(kappa, epsilon: float) -> CoverEstimate:
    """sum_{j=1}^{ceil(1/eps)} (1/eps) j^-alpha and its log-log slope over [eps/sqrt10, eps sqrt10]."""
    eps = float(epsilon)
    if not 0.0 < eps < 0.5:
        raise DomainError(f"epsilon must lie in (0, 1/2), got {eps:g}")
    alpha = gasket_exponents(kappa).alpha
    count = _cover_count(alpha, eps)
    grid = eps * np.logspace(-0.5, 0.5, 11)
    pts = [(math.log(e), math.log(_cover_count(alpha, e))) for e in grid]
    fit = slope_fit(pts)
    return CoverEstimate(eps, count, fit.slope, count * eps ** (2.0 - alpha))


def covering_exponent_fit(kappa, epsilons) -> SlopeFit:
    """Slope of log covering_sum against log eps over the given eps (an estimate of alpha - 2)."""
    alpha = gasket_exponents(kappa).alpha
    pts = []
    for e in np.asarray(epsilons, dtype=float):
        if not 0.0 < e < 0.5:
            raise DomainError(f"epsilon must lie in (0, 1/2), got {e:g}")
        pts.append((math.log(e), math.log(_cover_count(alpha, e))))
    return slope_fit(pts)
