"""Complex Gamma function and the Gauss hypergeometric function 2F1.

Only the pieces needed by the conformal-radius laws are provided: the power
series around 0, Gauss' summation at z = 1 and the z -> 1 - z connection
formula.  Every series evaluation returns a :class:`SeriesValue` carrying a
rigorous truncation bound, so callers can compare two routes to the same
number with an honest tolerance.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DegeneracyError, DomainError, PoleError

__all__ = [
    "HypergeometricInput",
    "SeriesValue",
    "gamma",
    "rgamma",
    "hyp2f1",
    "hyp2f1_series",
    "hyp2f1_at_one",
    "hyp2f1_transformed",
]

EPS = np.finfo(float).eps
# stop once |term| < REL_STOP * |partial sum| on this many consecutive terms
REL_STOP = 1e-16
STOP_RUN = 3
# integrality tolerance for the connection formula
DEGENERACY_TOL = 1e-9
# relative accuracy we are prepared to vouch for in gamma()
GAMMA_REL_ERR = 1e-13

# Lanczos approximation, g = 607/128, n = 15 (Godfrey's coefficients).
_LANCZOS_G = 607.0 / 128.0
_LANCZOS_P = (
    0.99999999999999709182,
    57.156235665862923517,
    -59.597960355475491248,
    14.136097974741747174,
    -0.49191381609762019978,
    0.33994649984811888699e-4,
    0.46523628927048575665e-4,
    -0.98374475304879564677e-4,
    0.15808870322491248884e-3,
    -0.21026444172410488319e-3,
    0.21743961811521264320e-3,
    -0.16431810653676389022e-3,
    0.84418223983852743293e-4,
    -0.26190838401581408670e-4,
    0.36899182659531622704e-5,
)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class SeriesValue:
    """A numerical value with an absolute error bound and the number of terms used."""

    value: complex
    error_bound: float
    terms_used: int

    def __post_init__(self):
        object.__setattr__(self, "value", complex(self.value))
        object.__setattr__(self, "error_bound", float(self.error_bound))
        object.__setattr__(self, "terms_used", int(self.terms_used))
        if not (self.error_bound >= 0 and math.isfinite(self.error_bound)):
            raise ValueError(f"error_bound must be finite and nonnegative, got {self.error_bound}")

    @property
    def real(self) -> float:
        return complex(self.value).real

    def __complex__(self):
        return complex(self.value)

    def __float__(self):
        return complex(self.value).real


def _is_nonpositive_integer(x: complex, tol: float = 0.0) -> bool:
    x = complex(x)
    if abs(x.imag) > tol:
        return False
    n = round(x.real)
    return n <= 0 and abs(x.real - n) <= tol


@dataclass(frozen=True)
class HypergeometricInput:
    """Parameters ``a, b, c`` and argument ``z`` of F(a, b; c; z)."""

    a: complex
    b: complex
    c: complex
    z: complex

    def __post_init__(self):
        for name in ("a", "b", "c", "z"):
            object.__setattr__(self, name, complex(getattr(self, name)))
        if _is_nonpositive_integer(self.c, 1e-12):
            raise DomainError(f"c = {self.c} is a non-positive integer; F(a,b;c;z) is undefined")

    def ordered(self) -> "HypergeometricInput":
        """The same input with (a, b) in a canonical order (F is symmetric in a, b)."""
        a, b = _ordered(self.a, self.b)
        return HypergeometricInput(a, b, self.c, self.z)


def _ordered(a: complex, b: complex) -> tuple[complex, complex]:
    a, b = complex(a), complex(b)
    if (b.real, b.imag) < (a.real, a.imag):
        return b, a
    return a, b


# --------------------------------------------------------------------------
# Gamma
# --------------------------------------------------------------------------

def _gamma_right(z: complex) -> complex:
    # valid for Re z >= 1/2
    z = z - 1.0
    x = _LANCZOS_P[0]
    for i in range(1, len(_LANCZOS_P)):
        x += _LANCZOS_P[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    return cmath.exp(_LOG_SQRT_2PI + (z + 0.5) * cmath.log(t) - t) * x


def _sin_pi(z: complex) -> complex:
    # sin(pi z) with exact reduction of the real part
    n = round(z.real)
    s = cmath.sin(math.pi * (z - n))
    return -s if n % 2 else s


def gamma(z: complex) -> complex:
    """Complex Gamma function.

    Lanczos approximation on Re z >= 1/2 and the reflection formula
    Gamma(z) Gamma(1 - z) = pi / sin(pi z) elsewhere.

    Raises
    ------
    PoleError
        If ``z`` is a non-positive integer.
    """
    z = complex(z)
    if _is_nonpositive_integer(z):
        raise PoleError(f"Gamma has a pole at z = {z.real:g}")
    if z.real < 0.5:
        return math.pi / (_sin_pi(z) * _gamma_right(1.0 - z))
    return _gamma_right(z)


def rgamma(z: complex) -> complex:
    """Reciprocal Gamma function, entire; exactly 0 at the poles of Gamma."""
    z = complex(z)
    if _is_nonpositive_integer(z):
        return 0j
    if z.real < 0.5:
        return _sin_pi(z) * _gamma_right(1.0 - z) / math.pi
    return 1.0 / _gamma_right(z)


# --------------------------------------------------------------------------
# 2F1
# --------------------------------------------------------------------------

def _tail_ratio(a: complex, b: complex, c: complex, z: complex, n: int) -> float:
    """Upper bound on |t_{m+1}/t_m| for all m >= n, or inf if none is available."""
    if n + c.real <= 0:
        return math.inf
    fa = max((n + abs(a)) / (n + c.real), 1.0)
    fb = max((n + abs(b)) / (n + 1.0), 1.0)
    return abs(z) * fa * fb


def hyp2f1_series(inp: HypergeometricInput, *, max_terms: int = 50_000_000,
                  block: int = 4096) -> SeriesValue:
    """Sum the hypergeometric power series  sum (a)_n (b)_n / ((c)_n n!) z^n.

    Terms are produced in vectorised blocks.  Summation stops when three
    consecutive terms are below 1e-16 of the partial sum and the tail can be
    bounded geometrically; the bound also covers accumulated rounding.
    """
    a, b = _ordered(inp.a, inp.b)
    c, z = inp.c, inp.z
    if abs(z) >= 1:
        raise DomainError(f"power series diverges for |z| = {abs(z):g} >= 1")
    if z == 0:
        return SeriesValue(1 + 0j, 0.0, 1)

    total = 1 + 0j
    abs_total = 1.0
    term = 1 + 0j
    run = 0
    n0 = 0
    while n0 < max_terms:
        n = np.arange(n0, n0 + block, dtype=float)
        ratios = (a + n) * (b + n) / ((c + n) * (n + 1.0)) * z
        terms = term * np.cumprod(ratios)          # t_{n0+1} ... t_{n0+block}
        partial = total + np.cumsum(terms)
        small = np.abs(terms) < REL_STOP * np.abs(partial)
        if not terms.any():
            # polynomial case: (a)_n or (b)_n vanished
            return SeriesValue(total, float(4 * EPS * (n0 + 1) * abs_total), int(n0 + 1))
        # length of the run of small terms ending at each position
        idx = np.arange(block)
        last_big = np.maximum.accumulate(np.where(~small, idx, -1))
        runlen = idx - last_big + np.where(last_big < 0, run, 0)
        cand = np.nonzero(runlen >= STOP_RUN)[0]
        for i in cand:
            m = n0 + i + 1                          # index of the last included term
            rho = _tail_ratio(a, b, c, z, m)
            if rho < 1.0:
                value = partial[i]
                abs_sum = abs_total + float(np.abs(terms[: i + 1]).sum())
                tail = abs(terms[i]) * rho / (1.0 - rho)
                rounding = 4 * EPS * (m + 1) * abs_sum
                return SeriesValue(complex(value), float(tail + rounding), int(m + 1))
        total = complex(partial[-1])
        abs_total += float(np.abs(terms).sum())
        term = complex(terms[-1])
        run = int(runlen[-1])
        n0 += block
        if term == 0:
            return SeriesValue(total, float(4 * EPS * (n0 + 1) * abs_total), int(n0 + 1))
    raise ConvergenceError(f"2F1 series did not converge in {max_terms} terms at z = {z}")


def hyp2f1_at_one(a: complex, b: complex, c: complex) -> complex:
    """Gauss' summation F(a,b;c;1) = G(c) G(c-a-b) / (G(c-a) G(c-b))."""
    a, b = _ordered(a, b)
    c = complex(c)
    if _is_nonpositive_integer(c, 1e-12):
        raise DomainError(f"c = {c} is a non-positive integer")
    if not (c - a - b).real > 0:
        raise DomainError(f"Gauss summation needs Re(c - a - b) > 0, got {(c - a - b).real:g}")
    if a == 0 or b == 0:
        return 1 + 0j
    return gamma(c) * gamma(c - a - b) * (rgamma(c - a) * rgamma(c - b))


def _check_connection(a: complex, b: complex, c: complex) -> None:
    s = c - a - b
    if abs(s.imag) <= DEGENERACY_TOL and abs(s.real - round(s.real)) <= DEGENERACY_TOL:
        raise DegeneracyError(
            f"c - a - b = {s} is (numerically) an integer; the 1 - z connection "
            "formula degenerates and a limiting form is required")


def hyp2f1_transformed(inp: HypergeometricInput) -> SeriesValue:
    """F(a,b;c;z) through the connection formula around z = 1.

        F = A F(a, b; a+b-c+1; 1-z) + B (1-z)^(c-a-b) F(c-a, c-b; c-a-b+1; 1-z)

    with A = G(c)G(c-a-b)/(G(c-a)G(c-b)) and B = G(c)G(a+b-c)/(G(a)G(b)).

    Raises
    ------
    DegeneracyError
        When c - a - b is within 1e-9 of an integer.
    DomainError
        When 1 - z lies on the branch cut or outside the unit disk.
    """
    a, b = _ordered(inp.a, inp.b)
    c, z = inp.c, inp.z
    _check_connection(a, b, c)
    w = 1.0 - z
    if w.imag == 0 and w.real <= 0:
        raise DomainError(f"|arg(1 - z)| < pi is violated at z = {z}")
    if abs(w) >= 1:
        raise DomainError(f"|1 - z| = {abs(w):g} is outside the series domain")
    s = c - a - b
    gc = gamma(c)
    coef1 = gc * gamma(s) * (rgamma(c - a) * rgamma(c - b))
    coef2 = gc * gamma(-s) * (rgamma(a) * rgamma(b))
    f1 = hyp2f1_series(HypergeometricInput(a, b, 1.0 - s, w))
    f2 = hyp2f1_series(HypergeometricInput(c - a, c - b, 1.0 + s, w))
    power = w ** s
    t1 = coef1 * f1.value
    t2 = coef2 * power * f2.value
    err = (abs(coef1) * f1.error_bound + abs(coef2 * power) * f2.error_bound
           + GAMMA_REL_ERR * (abs(t1) + abs(t2)))
    return SeriesValue(t1 + t2, err, f1.terms_used + f2.terms_used)


# upper end of the overlap where both evaluations are tried
_SERIES_ALSO_BELOW = 0.95


def hyp2f1(a: complex, b: complex, c: complex, z: complex) -> SeriesValue:
    """Evaluate F(a,b;c;z) on the closed unit interval and the disk |z| < 1.

    Dispatch: power series for |z| <= 1/2, the connection formula for real
    1/2 < z < 1, Gauss' summation at z = 1.  Up to z = 0.95 the series is
    cheap enough to run as well and whichever has the smaller error bound
    wins (the gamma products of the connection formula can cancel).  A
    degenerate connection formula falls back on the direct series.
    """
    z = complex(z)
    inp = HypergeometricInput(a, b, c, z)
    if inp.a == 0 or inp.b == 0:
        return SeriesValue(1 + 0j, 0.0, 1)
    if z == 1:
        v = hyp2f1_at_one(inp.a, inp.b, inp.c)
        return SeriesValue(v, GAMMA_REL_ERR * abs(v), 0)
    if abs(z) <= 0.5:
        return hyp2f1_series(inp)
    if z.imag == 0 and 0.5 < z.real < 1:
        try:
            tr = hyp2f1_transformed(inp)
        except DegeneracyError:
            return hyp2f1_series(inp)
        if z.real <= _SERIES_ALSO_BELOW:
            se = hyp2f1_series(inp)
            if se.error_bound <= tr.error_bound:
                return se
        return tr
    if abs(z) < 1:
        return hyp2f1_series(inp)
    raise DomainError(f"2F1 continuation to z = {z} is not supported")
