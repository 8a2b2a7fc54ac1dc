"""Hypergeometric local martingales of the radial diffusion and the expected-hit function L.

For the diffusion  d theta = (kappa-4)/2 cot(theta/2) dt + sqrt(kappa) dW  and any
complex lambda, exp(lambda t) M(theta_t) is a local martingale up to the first
visit of 2 pi Z for both

    M_even(theta) = F(e + s, e - s; e + 1/2; sin^2(theta/4)),
        e = 1 - 4/kappa,  s = sqrt(e^2 + 8 lambda/kappa)
    M_odd(theta)  = F(1 - 2/kappa + s', 1 - 2/kappa - s'; 3/2; cos^2(theta/2)) cos(theta/2),
        s' = sqrt((1/2 - 2/kappa)^2 + 2 lambda/kappa)

The principal square root is used; flipping its sign swaps the first two
parameters of F and leaves the value unchanged.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegeneracyError, DomainError
from .lawlib import Kappa, as_kappa
from .specfun import gamma, hyp2f1, rgamma

__all__ = [
    "MartingaleParams",
    "M_even",
    "M_odd",
    "M_even_boundary",
    "L_theta",
    "L_theta_near_zero",
    "L_small_theta_exponent",
    "c_kappa",
    "c_kappa_duplication",
    "generator_residual",
]

TWO_PI = 2.0 * math.pi
# slack allowed on the theta domain checks (rounding in 2 pi multiples)
_THETA_SLACK = 1e-12


@dataclass(frozen=True)
class MartingaleParams:
    """kappa, lambda and the parity ('even' or 'odd') selecting M_even or M_odd."""

    kappa: Kappa
    lam: complex = 0j
    parity: str = "even"

    def __post_init__(self):
        object.__setattr__(self, "kappa", as_kappa(self.kappa))
        object.__setattr__(self, "lam", complex(self.lam))
        if self.parity not in ("even", "odd"):
            raise ValueError(f"parity must be 'even' or 'odd', got {self.parity!r}")
        if self.parity == "even":
            c = 1.5 - 4.0 / self.kappa.kappa
            if abs(c - round(c)) < 1e-12 and round(c) <= 0:
                raise DegeneracyError(f"M_even undefined: 3/2 - 4/kappa = {c:g}")

    def __call__(self, theta: float, branch: int = 1) -> complex:
        fn = M_even if self.parity == "even" else M_odd
        return fn(self.kappa, self.lam, theta, branch=branch)


def _even_params(kap: Kappa, lam: complex, branch: int):
    e = kap.eps
    s = cmath.sqrt(e * e + 8.0 * complex(lam) / kap.kappa) * branch
    return e + s, e - s, e + 0.5


def _odd_params(kap: Kappa, lam: complex, branch: int):
    k = kap.kappa
    h = 0.5 - 2.0 / k
    s = cmath.sqrt(h * h + 2.0 * complex(lam) / k) * branch
    return 1.0 - 2.0 / k + s, 1.0 - 2.0 / k - s, 1.5


def M_even(kappa, lam: complex, theta: float, *, branch: int = 1) -> complex:
    """Even local martingale, defined on [-2 pi, 2 pi]."""
    kap = as_kappa(kappa)
    if not abs(theta) <= TWO_PI + _THETA_SLACK:
        raise DomainError(f"M_even needs theta in [-2pi, 2pi], got {theta:g}")
    a, b, c = _even_params(kap, lam, branch)
    z = min(math.sin(theta / 4.0) ** 2, 1.0)
    return hyp2f1(a, b, c, z).value


def M_odd(kappa, lam: complex, theta: float, *, branch: int = 1) -> complex:
    """Odd local martingale, defined on [0, 2 pi]."""
    kap = as_kappa(kappa)
    if not -_THETA_SLACK <= theta <= TWO_PI + _THETA_SLACK:
        raise DomainError(f"M_odd needs theta in [0, 2pi], got {theta:g}")
    a, b, c = _odd_params(kap, lam, branch)
    half = math.cos(theta / 2.0)
    z = min(half * half, 1.0)
    return hyp2f1(a, b, c, z).value * half


def M_even_boundary(kappa, lam: complex) -> complex:
    """Closed form of M_even(+-2 pi) = cos(pi s) / cos(pi (1 - 4/kappa))."""
    kap = as_kappa(kappa)
    e = kap.eps
    s = cmath.sqrt(e * e + 8.0 * complex(lam) / kap.kappa)
    return cmath.cos(math.pi * s) / math.cos(math.pi * e)


def _L_scale(k: float) -> float:
    # 2 sqrt(pi) Gamma(4/k) / Gamma(4/k - 1/2)
    return (2.0 * math.sqrt(math.pi) * gamma(4.0 / k) * rgamma(4.0 / k - 0.5)).real


def _L_base(kap: Kappa, theta: float) -> float:
    # theta in [0, 2 pi)
    if theta == 0.0:
        return 0.0
    k = kap.kappa
    half = math.cos(theta / 2.0)
    z = min(half * half, 1.0)
    f = hyp2f1(1.5 - 4.0 / k, 0.5, 1.5, z).value.real
    return math.pi - _L_scale(k) * f * half


def L_theta(kappa, theta: float) -> float:
    """Expected position at the first visit of 2 pi Z, L(theta) = E[theta_T | theta_0 = theta].

    On [0, 2 pi]:
        L = pi - 2 sqrt(pi) G(4/k) / G(4/k - 1/2) F(3/2 - 4/k, 1/2; 3/2; cos^2(theta/2)) cos(theta/2),
    extended to the line by oddness and L(theta + 2 pi) = L(theta) + 2 pi.
    At kappa = 4 the diffusion is a Brownian motion and L(theta) = theta.
    """
    kap = as_kappa(kappa)
    theta = float(theta)
    if kap.kappa == 4.0:
        return theta
    if theta < 0:
        return -L_theta(kap, -theta)
    n = math.floor(theta / TWO_PI)
    r = theta - n * TWO_PI
    if r >= TWO_PI:                      # rounding at the top of the period
        n, r = n + 1, 0.0
    return _L_base(kap, r) + n * TWO_PI


def c_kappa(kappa) -> float:
    """Constant of the near-zero form of L, from the connection formula.

    c = -sqrt(pi) G(4/k) G(1/2 - 4/k) / (G(4/k - 1/2) G(3/2 - 4/k))
    """
    k = as_kappa(kappa).kappa
    v = (-math.sqrt(math.pi) * gamma(4.0 / k) * gamma(0.5 - 4.0 / k)
         * rgamma(4.0 / k - 0.5) * rgamma(1.5 - 4.0 / k))
    return v.real


def c_kappa_duplication(kappa) -> float:
    """2^(8/k - 1) G(4/k)^2 / G(8/k): the same constant via Legendre duplication."""
    k = as_kappa(kappa).kappa
    return (2.0 ** (8.0 / k - 1.0) * gamma(4.0 / k) ** 2 * rgamma(8.0 / k)).real


def L_theta_near_zero(kappa, theta: float) -> float:
    """L on (0, pi) in the form exhibiting the power law at 0.

        L = c_kappa sin(theta/2)^(8/k - 1) F(4/k, 1; 4/k + 1/2; sin^2(theta/2)) cos(theta/2)
    """
    kap = as_kappa(kappa)
    if not 0.0 < theta < math.pi:
        raise DomainError(f"near-zero form of L needs theta in (0, pi), got {theta:g}")
    k = kap.kappa
    s = math.sin(theta / 2.0)
    f = hyp2f1(4.0 / k, 1.0, 4.0 / k + 0.5, s * s).value.real
    return c_kappa(kap) * s ** (8.0 / k - 1.0) * f * math.cos(theta / 2.0)


def L_small_theta_exponent(kappa) -> float:
    """Exponent 8/kappa - 1 of the power law L(theta) ~ const * theta^(8/kappa - 1) near 0."""
    return 8.0 / as_kappa(kappa).kappa - 1.0


_D1 = (1 / 280, -4 / 105, 1 / 5, -4 / 5, 0.0, 4 / 5, -1 / 5, 4 / 105, -1 / 280)
_D2 = (-1 / 560, 8 / 315, -1 / 5, 8 / 5, -205 / 72, 8 / 5, -1 / 5, 8 / 315, -1 / 560)


def generator_residual(params: MartingaleParams, theta: float, h: float = 1e-2) -> complex:
    """lambda M + (kappa-4)/2 cot(theta/2) M' + kappa/2 M'' by eighth-order differences.

    Vanishes (up to discretisation error) for both martingale families away from 2 pi Z.
    """
    k = params.kappa.kappa
    f = [params(theta + j * h) for j in range(-4, 5)]
    d1 = sum(w * v for w, v in zip(_D1, f)) / h
    d2 = sum(w * v for w, v in zip(_D2, f)) / (h * h)
    drift = 0.5 * (k - 4.0) / math.tan(theta / 2.0)
    return params.lam * f[4] + drift * d1 + 0.5 * k * d2


def M_even_array(kappa, lam: complex, thetas) -> np.ndarray:
    """M_even over an array of angles (loops over scalar evaluations)."""
    thetas = np.asarray(thetas, dtype=float)
    out = np.empty(thetas.shape, dtype=complex)
    flat = out.reshape(-1)
    for i, t in enumerate(thetas.reshape(-1)):
        flat[i] = M_even(kappa, lam, float(t))
    return out
