"""Monte Carlo for the reflected radial diffusion and its lift to the line.

    d theta = (kappa - 4)/2 cot(theta/2) dt + sqrt(kappa) dW

is simulated in the folded coordinate phi = R(theta) in [0, 2 pi] (R is the
tent map with period 4 pi).  At each visit of phi to 0 a fair coin chooses the
sign of the next excursion of the lifted path, so the lifted path hits +-2 pi
exactly when phi hits 2 pi.

Random numbers: path ``i`` of a run with seed ``s`` reads Philox4x64-10 with
key ``s`` and counter words (block, 0, stream, i); stream 0 drives the path,
stream 1 holds the coins.  Results depend only on (seed, index), never on how
paths are split across worker threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numba import njit
from scipy import special

from . import _kernels as K
from ._philox import RNG_VERSION, raw_at, split_key
from .errors import CensoringError, DomainError
from .lawlib import Kappa, as_kappa, mean_B
from .martingales import M_even
from .stats import EmpiricalLaw, config_digest

__all__ = [
    "SimConfig",
    "ExitSample",
    "ExitBatch",
    "DiffusionPath",
    "CheckpointMeans",
    "RNG_VERSION",
    "step",
    "lift_fold",
    "sample_exit",
    "simulate_exits",
    "simulate_truncated",
    "sample_exit_batch",
    "simulate_path",
    "path_functional_martingale",
    "sample_level_hit",
    "expected_hit",
    "sample_one_arm_exit",
    "worker_count",
]

TWO_PI = 2.0 * math.pi
FOUR_PI = 4.0 * math.pi
STEP_CONST = K.STEP_CONST
# largest admissible dt_max
DT_MAX_LIMIT = 0.05
CENSOR_MULTIPLE = 1e4
CENSOR_FRACTION = 1e-6
# paths per work unit; fixed so that the split never depends on the worker count
CHUNK = 2048
STREAM_PATH = 0
STREAM_COIN = 1

# tabulation of log(K_mu/I_mu) + 2z used for the bridge hitting probability
_TAB_LOGZ = (math.log(1e-30), math.log(60.0))
_TAB_SIZE = 8192
_ZMAX = 50.0


def worker_count() -> int:
    """Worker threads, from CLERADII_WORKERS (default: all cores)."""
    raw = os.environ.get("CLERADII_WORKERS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise DomainError(f"CLERADII_WORKERS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise DomainError(f"CLERADII_WORKERS must be a positive integer, got {raw!r}")
    return n


@lru_cache(maxsize=32)
def _bessel_table(mu: float):
    x = np.linspace(*_TAB_LOGZ, _TAB_SIZE)
    z = np.exp(x)
    y = np.log(special.kve(mu, z) / special.ive(mu, z))
    y.setflags(write=False)
    return float(x[0]), float(x[1] - x[0]), y


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings; ``max_time`` defaults to 1e4 times the mean exit time.

    ``zone_width`` is the distance to the nearest level below which the exact
    step is used.  The default applies it everywhere; a finite width switches
    to capped Euler steps of size clip(0.05 dist^2, dt_floor, dt_max) in the bulk.
    """

    kappa: Kappa
    theta0: float = 0.0
    dt_max: float = 1e-3
    dt_floor: float = 1e-9
    seed: int = 1
    max_time: float | None = None
    zone_width: float = math.inf

    def __post_init__(self):
        kap = as_kappa(self.kappa)
        object.__setattr__(self, "kappa", kap)
        object.__setattr__(self, "theta0", float(self.theta0))
        if not (self.dt_max > 0 and self.dt_floor > 0):
            raise DomainError("dt_max and dt_floor must be positive")
        if self.dt_floor > self.dt_max:
            raise DomainError(f"dt_floor {self.dt_floor:g} exceeds dt_max {self.dt_max:g}")
        if self.dt_max > DT_MAX_LIMIT:
            raise DomainError(f"dt_max must not exceed {DT_MAX_LIMIT:g}")
        if not self.zone_width > 0:
            raise DomainError("zone_width must be positive")
        try:
            split_key(self.seed)
        except ValueError as exc:
            raise DomainError(str(exc)) from None
        object.__setattr__(self, "seed", int(self.seed))
        if self.max_time is None:
            object.__setattr__(self, "max_time", CENSOR_MULTIPLE * mean_B(kap))
        elif not (0 < self.max_time < math.inf):
            raise DomainError("max_time must be positive and finite")

    def as_dict(self) -> dict:
        return {
            "kappa": self.kappa.kappa, "theta0": self.theta0, "dt_max": self.dt_max,
            "dt_floor": self.dt_floor, "seed": self.seed, "max_time": self.max_time,
            "step_const": STEP_CONST, "zone_width": self.zone_width if math.isfinite(self.zone_width) else "inf", "rng": RNG_VERSION,
        }

    @property
    def beta(self) -> float:
        return 0.5 * (self.kappa.kappa - 4.0)

    @property
    def sigma2(self) -> float:
        return self.kappa.kappa


@dataclass(frozen=True)
class ExitSample:
    """First time the lifted path reaches +-2 pi; ``exit_side`` is +1 or -1."""

    exit_time: float
    exit_side: int
    steps: int
    seed: int
    index: int = 0


@dataclass(frozen=True)
class ExitBatch:
    """Exit samples of paths 0..n-1, censored paths removed and counted."""

    config: SimConfig
    n: int
    index: np.ndarray
    exit_time: np.ndarray
    exit_side: np.ndarray
    steps: np.ndarray
    censored: int
    start: int = 0

    @property
    def provenance(self) -> str:
        return config_digest({"config": self.config.as_dict(), "n": self.n, "start": self.start})

    def law(self) -> EmpiricalLaw:
        return EmpiricalLaw(self.exit_time, self.provenance)

    def __len__(self):
        return int(self.exit_time.size)


@dataclass(frozen=True)
class DiffusionPath:
    """Recorded trajectory: lifted theta at each step end and the excursion coins used."""

    times: np.ndarray
    thetas: np.ndarray
    coin_flips: np.ndarray
    complete: bool = True

    @property
    def folded(self) -> np.ndarray:
        return lift_fold(self.thetas)


@dataclass(frozen=True)
class CheckpointMeans:
    """Monte Carlo means of exp(lam t) M(theta_t) at stopped checkpoint times."""

    checkpoints: np.ndarray
    means: np.ndarray
    stderrs: np.ndarray
    reference: complex
    n: int = field(default=0)

    def within(self, nsigma: float = 3.0) -> np.ndarray:
        """Per checkpoint: real and imaginary parts within nsigma errors of the reference."""
        dev = self.means - self.reference
        se_re = self.stderrs.real
        se_im = self.stderrs.imag
        ok_re = np.abs(dev.real) <= nsigma * se_re + 1e-12
        ok_im = np.abs(dev.imag) <= nsigma * se_im + 1e-12
        return ok_re & ok_im


def lift_fold(theta):
    """The fold R: reduce mod 4 pi into [-2 pi, 2 pi] and take |.|."""
    th = np.asarray(theta, dtype=float)
    r = np.abs(th - FOUR_PI * np.round(th / FOUR_PI))
    r = np.minimum(r, TWO_PI)
    return float(r) if r.ndim == 0 else r


def step(theta: float, dt: float, noise: float, kappa, dt_max: float | None = None) -> float:
    """One capped Euler step of the lifted diffusion.

    The drift move is capped at half the distance to the nearest level 2 pi k;
    an update that crosses that level is reflected back across it (the sign
    of the next excursion is the caller's coin).
    """
    kap = as_kappa(kappa)
    if dt <= 0 or (dt_max is not None and dt > dt_max):
        raise DomainError(f"dt must lie in (0, dt_max], got {dt:g}")
    k = kap.kappa
    level = TWO_PI * round(theta / TWO_PI)
    dist = abs(theta - level)
    if dist == 0.0:
        move = 0.0
    else:
        move = 0.5 * (k - 4.0) / math.tan(0.5 * theta) * dt
        if abs(move) > 0.5 * dist:
            move = math.copysign(0.5 * dist, move)
    new = theta + move + math.sqrt(k * dt) * noise
    if dist > 0.0 and (new - level) * (theta - level) < 0:
        new = 2.0 * level - new
    return new


def _run(beta, sig2, mode, phi0, seed, n, dt_max, dt_floor, max_time, zone=math.inf,
         checkpoints=None, workers=None, start=0):
    d = 1.0 + 4.0 * beta / sig2
    if not 0.0 < d < 2.0:
        raise DomainError(f"Bessel dimension {d:g} outside (0, 2)")
    x0, dx, tab = _bessel_table(1.0 - 0.5 * d)
    key0, key1 = (np.uint64(w) for w in split_key(seed))
    cps = np.ascontiguousarray(checkpoints if checkpoints is not None else [], dtype=float)
    out_time = np.empty(n)
    out_phi = np.empty(n)
    out_visits = np.empty(n, dtype=np.int64)
    out_steps = np.empty(n, dtype=np.int64)
    out_status = np.empty(n, dtype=np.int64)
    cp_time = np.zeros((n, cps.size))
    cp_phi = np.zeros((n, cps.size))

    def work(lo):
        hi = min(lo + CHUNK, n)
        K.run_batch(beta, sig2, mode, phi0, key0, key1, start + lo, start + hi, dt_max, dt_floor,
                    max_time, zone, cps, x0, dx, tab, _ZMAX,
                    out_time[lo:hi], out_phi[lo:hi], out_visits[lo:hi], out_steps[lo:hi],
                    out_status[lo:hi], cp_time[lo:hi], cp_phi[lo:hi])

    starts = range(0, n, CHUNK)
    workers = worker_count() if workers is None else workers
    if workers == 1 or n <= CHUNK:
        for lo in starts:
            work(lo)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, starts))
    return out_time, out_phi, out_visits, out_steps, out_status, cp_time, cp_phi


@njit(cache=True)
def _coin_sides(key0, key1, indices, positions):
    out = np.empty(indices.shape[0], dtype=np.int64)
    for j in range(indices.shape[0]):
        bit = raw_at(key0, key1, np.uint64(indices[j]), np.uint64(STREAM_COIN),
                     positions[j]) & np.uint64(1)
        out[j] = 1 if bit == np.uint64(1) else -1
    return out


def _sides(config: SimConfig, indices, visits):
    """Exit side of each path: the coin of its last excursion (or the sign of theta0)."""
    key0, key1 = (np.uint64(w) for w in split_key(config.seed))
    coins = _coin_sides(key0, key1, np.asarray(indices, dtype=np.int64),
                        np.asarray(visits, dtype=np.int64))
    if config.theta0 == 0.0:
        return coins
    sign0 = 1 if config.theta0 > 0 else -1
    return np.where(np.asarray(visits) == 0, sign0, coins)


def _check_n(n) -> int:
    n = int(n)
    if n < 1:
        raise DomainError(f"n must be at least 1, got {n}")
    return n


def _check_start(config: SimConfig):
    if not abs(config.theta0) <= TWO_PI:
        raise DomainError(f"theta0 must lie in [-2 pi, 2 pi], got {config.theta0:g}")


def simulate_exits(config: SimConfig, n: int, *, start: int = 0,
                   workers: int | None = None) -> ExitBatch:
    """Exit times and sides of paths start..start+n-1 started at config.theta0."""
    _check_start(config)
    n = _check_n(n)
    t, _, visits, steps, status, _, _ = _run(
        config.beta, config.sigma2, K.MODE_EXIT, abs(config.theta0), config.seed, n,
        config.dt_max, config.dt_floor, config.max_time, config.zone_width, workers=workers,
        start=start)
    ok = status == K.STATUS_OK
    censored = int(n - ok.sum())
    if censored and censored >= CENSOR_FRACTION * n:
        raise CensoringError(
            f"{censored} of {n} paths did not exit before max_time={config.max_time:g}")
    idx = np.flatnonzero(ok) + start
    return ExitBatch(config, n, idx, t[ok], _sides(config, idx, visits[ok]), steps[ok], censored,
                     start)


def simulate_truncated(config: SimConfig, n: int, horizon: float, *,
                       workers: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Exit times of paths 0..n-1 observed up to ``horizon``.

    Returns (times, alive): paths still running at the horizon have alive=True
    and a time beyond it.  Cheaper than full exits when the tail is heavy.
    """
    _check_start(config)
    n = _check_n(n)
    if not 0 < horizon < math.inf:
        raise DomainError("horizon must be positive and finite")
    t, _, _, _, status, _, _ = _run(
        config.beta, config.sigma2, K.MODE_EXIT, abs(config.theta0), config.seed, n,
        config.dt_max, config.dt_floor, horizon, config.zone_width, workers=workers)
    alive = (status == K.STATUS_CENSORED) | (t > horizon)
    return t, alive


def _path_tables(config: SimConfig):
    d = 1.0 + 4.0 * config.beta / config.sigma2
    return _bessel_table(1.0 - 0.5 * d)


def sample_exit(config: SimConfig, index: int = 0) -> ExitSample:
    """Exit of path ``index`` (the first derived stream by default)."""
    _check_start(config)
    key0, key1 = (np.uint64(w) for w in split_key(config.seed))
    x0, dx, tab = _path_tables(config)
    t, _, visits, steps, status, _ = K.run_path(
        config.beta, config.sigma2, K.MODE_EXIT, abs(config.theta0), key0, key1,
        np.uint64(index), config.dt_max, config.dt_floor, config.max_time, config.zone_width,
        np.empty(0), np.empty(0), np.empty(0), x0, dx, tab, _ZMAX,
        np.empty(0), np.empty(0), np.empty(0, dtype=np.int64))
    if status != K.STATUS_OK:
        raise CensoringError(f"path did not exit before max_time={config.max_time:g}")
    side = int(_sides(config, [index], [visits])[0])
    return ExitSample(float(t), side, int(steps), config.seed, int(index))


def sample_exit_batch(config: SimConfig, n: int, *, workers: int | None = None) -> EmpiricalLaw:
    """Empirical law of n exit times (censoring raises past the allowed fraction)."""
    return simulate_exits(config, n, workers=workers).law()


def simulate_path(config: SimConfig, index: int = 0, capacity: int = 1_000_000) -> DiffusionPath:
    """Full lifted trajectory of one path until it exits (or ``capacity`` steps are recorded)."""
    _check_start(config)
    key0, key1 = (np.uint64(w) for w in split_key(config.seed))
    x0, dx, tab = _path_tables(config)
    rec_t = np.empty(capacity)
    rec_phi = np.empty(capacity)
    rec_k = np.empty(capacity, dtype=np.int64)
    t, _, visits, steps, status, nrec = K.run_path(
        config.beta, config.sigma2, K.MODE_EXIT, abs(config.theta0), key0, key1,
        np.uint64(index), config.dt_max, config.dt_floor, config.max_time, config.zone_width,
        np.empty(0), np.empty(0), np.empty(0), x0, dx, tab, _ZMAX, rec_t, rec_phi, rec_k)
    rec_t, rec_phi, rec_k = rec_t[:nrec], rec_phi[:nrec], rec_k[:nrec]
    coins = _coin_sides(key0, key1, np.full(visits + 1, index, dtype=np.int64),
                        np.arange(visits + 1, dtype=np.int64))
    if config.theta0 == 0.0:
        signs = coins[rec_k]
    else:
        sign0 = 1 if config.theta0 > 0 else -1
        signs = np.where(rec_k == 0, sign0, coins[rec_k])
    used = coins if config.theta0 == 0.0 else coins[1:]
    return DiffusionPath(rec_t, signs * rec_phi, used, complete=nrec == steps + 1)


def path_functional_martingale(config: SimConfig, lam: complex, t_checkpoints, n: int = 10_000,
                               *, workers: int | None = None) -> CheckpointMeans:
    """Means of exp(lam t') M_even(theta_t') with t' the first step end after min(t, T)."""
    lam = complex(lam)
    if lam.real > 0:
        raise DomainError("path functional needs Re lambda <= 0")
    _check_start(config)
    n = _check_n(n)
    cps = np.sort(np.asarray(t_checkpoints, dtype=float))
    if cps.size == 0 or cps[0] < 0:
        raise DomainError("checkpoints must be a non-empty list of non-negative times")
    kap = config.kappa
    ref = M_even(kap, lam, config.theta0)
    if lam == 0:
        one = np.ones(cps.size, dtype=complex)
        return CheckpointMeans(cps, one, np.zeros(cps.size, dtype=complex), ref, n)
    _, _, _, _, _, cp_time, cp_phi = _run(
        config.beta, config.sigma2, K.MODE_CHECKPOINT, abs(config.theta0), config.seed, n,
        config.dt_max, config.dt_floor, config.max_time, config.zone_width, cps,
        workers=workers)
    cache: dict[float, complex] = {}
    vals = np.empty(cp_phi.shape, dtype=complex)
    for idx, phi in np.ndenumerate(cp_phi):
        m = cache.get(phi)
        if m is None:
            m = cache[phi] = M_even(kap, lam, min(phi, TWO_PI))
        vals[idx] = np.exp(lam * cp_time[idx]) * m
    means = vals.mean(axis=0)
    se = (vals.real.std(axis=0, ddof=1) + 1j * vals.imag.std(axis=0, ddof=1)) / math.sqrt(n)
    return CheckpointMeans(cps, means, se, ref, n)


def sample_level_hit(config: SimConfig, n: int, *, workers: int | None = None) -> np.ndarray:
    """Lifted position theta_T at the first visit of 2 pi Z, for n paths from config.theta0."""
    th = config.theta0
    base = TWO_PI * math.floor(th / TWO_PI)
    r = th - base
    if r == 0.0:
        return np.full(n, th)
    t, phi, _, _, status, _, _ = _run(
        config.beta, config.sigma2, K.MODE_LEVEL, r, config.seed, _check_n(n),
        config.dt_max, config.dt_floor, config.max_time, config.zone_width, workers=workers)
    bad = int((status != K.STATUS_OK).sum())
    if bad:
        raise CensoringError(f"{bad} of {n} paths did not reach 2 pi Z before max_time")
    return base + np.where(phi >= TWO_PI, TWO_PI, 0.0)


def expected_hit(config: SimConfig, n: int, *, workers: int | None = None) -> tuple[float, float]:
    """Monte Carlo E[theta_T | theta_0] with its standard error."""
    x = sample_level_hit(config, n, workers=workers)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))


def sample_one_arm_exit(kappa_prime: float, n: int, seed: int = 1, dt_max: float = 1e-3,
                        dt_floor: float = 1e-9, max_time: float = 1e5,
                        workers: int | None = None) -> np.ndarray:
    """Exit times at 2 pi of  d theta = cot(theta/2) dt + sqrt(kappa') dW  from 0.

    Reaches the same law as the main diffusion at kappa = 4 kappa'/(kappa' - 2)
    after scaling time by 2 / (kappa - 4).
    """
    if not kappa_prime > 4:
        raise DomainError("one-arm diffusion needs kappa' > 4")
    t, _, _, _, status, _, _ = _run(1.0, float(kappa_prime), K.MODE_EXIT, 0.0, seed, _check_n(n),
                                    dt_max, dt_floor, max_time, workers=workers)
    if (status != K.STATUS_OK).any():
        raise CensoringError("one-arm paths censored")
    return t
