"""Compiled path kernels for  d phi = beta cot(phi/2) dt + sigma dW  folded onto [0, 2 pi].

The state is the distance u from a reference level (0 or 2 pi, whichever is
nearer) stored as p = sin^2(u/4) in [0, 1/2]; crossing the midpoint pi swaps
the reference level and maps p to 1 - p.  In these variables

    Z = 16 p / sigma^2  solves  dZ = d (1 - 2p) dt + 2 sqrt(Z (1 - p)) dW,

d = 1 + 4 beta / sigma^2.  After the time change d tau = (1 - p) dt this is a
CIR process  dZ = (d - b Z) d tau + 2 sqrt(Z) dW  (b = d sigma^2 / 16) plus the
smooth remainder  -d p^2 / (1 - p)  of the drift.  A step is a Strang
splitting: half a step of the remainder, an exact CIR transition (Poisson
mixture of gammas), half a step of the remainder.  Whether the reference level
was touched within the step is decided by the exact squared-Bessel bridge
probability.  Real time advances by the trapezoid rule for d tau / (1 - p).

With a finite ``zone`` the exact step is used only within ``zone`` of a level
and the bulk is advanced by capped Euler-Maruyama steps in phi.
"""

import math

import numpy as np
from numba import njit

from ._philox import next_double, next_raw, rng_new

MODE_EXIT = 0        # run until the level 2 pi; visits of 0 start new excursions
MODE_LEVEL = 1       # run until either level 0 or 2 pi
MODE_CHECKPOINT = 2  # record the state at checkpoint times, stop at 2 pi

STATUS_OK = 0
STATUS_CENSORED = 1

TWO_PI = 2.0 * math.pi
STEP_CONST = 0.05
# cap on p after a step (u <= 5 rad); only reached by moves beyond 4 sigma
P_MAX = 0.9


def _ziggurat_tables(n=128, r=3.442619855899, v=9.91256303526217e-3):
    # Doornik's ZIGNOR layout: strip edges s and the ratios s[i+1]/s[i]
    s = np.empty(n + 1)
    f = math.exp(-0.5 * r * r)
    s[0] = v / f
    s[1] = r
    for i in range(2, n):
        s[i] = math.sqrt(-2.0 * math.log(v / s[i - 1] + f))
        f = math.exp(-0.5 * s[i] * s[i])
    s[n] = 0.0
    return s, s[1:] / s[:-1], r


_ZIG_S, _ZIG_RATIO, _ZIG_R = _ziggurat_tables()
_ZIG_MASK = np.uint64(127)
_SHIFT11 = np.uint64(11)
_TWO_M52 = 2.0 / 9007199254740992.0


@njit(cache=True)
def _normal_slow(st, u, i):
    # ziggurat rejection path, entered with a draw (u, i) that failed the fast test
    while True:
        if i == 0:
            # tail beyond r
            while True:
                st, a = next_double(st)
                st, b = next_double(st)
                x = -math.log(1.0 - a) / _ZIG_R
                y = -math.log(1.0 - b)
                if y + y >= x * x:
                    return st, (_ZIG_R + x if u > 0 else -_ZIG_R - x)
        x = u * _ZIG_S[i]
        f0 = math.exp(-0.5 * (_ZIG_S[i] * _ZIG_S[i] - x * x))
        f1 = math.exp(-0.5 * (_ZIG_S[i + 1] * _ZIG_S[i + 1] - x * x))
        st, a = next_double(st)
        if f1 + a * (f0 - f1) < 1.0:
            return st, x
        st, w = next_raw(st)
        i = np.intp(w & _ZIG_MASK)
        u = np.float64(w >> _SHIFT11) * _TWO_M52 - 1.0
        if abs(u) < _ZIG_RATIO[i]:
            return st, u * _ZIG_S[i]


@njit(cache=True)
def normal(st):
    """Standard normal by the ziggurat method; one raw word in ~99% of draws."""
    st, w = next_raw(st)
    i = np.intp(w & _ZIG_MASK)
    u = np.float64(w >> _SHIFT11) * _TWO_M52 - 1.0      # in [-1, 1)
    if abs(u) < _ZIG_RATIO[i]:
        return st, u * _ZIG_S[i]
    return _normal_slow(st, u, i)


@njit(cache=True)
def gamma(st, shape):
    """Gamma(shape, 1) by Marsaglia-Tsang, boosted for shape < 1."""
    boost = 1.0
    if shape < 1.0:
        st, a = next_double(st)
        boost = (1.0 - a) ** (1.0 / shape)
        shape += 1.0
    dd = shape - 1.0 / 3.0
    cc = 1.0 / math.sqrt(9.0 * dd)
    while True:
        st, x = normal(st)
        v = 1.0 + cc * x
        if v <= 0.0:
            continue
        v = v * v * v
        st, u = next_double(st)
        if u < 1.0 - 0.0331 * x ** 4:
            return st, dd * v * boost
        if math.log(u) < 0.5 * x * x + dd * (1.0 - v + math.log(v)):
            return st, dd * v * boost


@njit(cache=True)
def poisson(st, lam):
    """Poisson(lam): multiplication method below 10, PTRS (Hormann) above."""
    if lam <= 0.0:
        return st, 0
    if lam < 10.0:
        lim = math.exp(-lam)
        k = 0
        st, p = next_double(st)
        while p > lim:
            k += 1
            st, a = next_double(st)
            p *= a
        return st, k
    slam = math.sqrt(lam)
    loglam = 0.0
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    while True:
        st, u = next_double(st)
        st, v = next_double(st)
        u -= 0.5
        us = 0.5 - abs(u)
        k = math.floor((2.0 * a / us + b) * u + lam + 0.43)
        if us >= 0.07 and v <= vr:
            return st, int(k)
        if k < 0 or (us < 0.013 and v > us):
            continue
        if loglam == 0.0:
            loglam = math.log(lam)
        if (math.log(v) + math.log(invalpha) - math.log(a / (us * us) + b)
                <= -lam + k * loglam - math.lgamma(k + 1.0)):
            return st, int(k)


@njit(cache=True)
def _phi_of(p, top):
    u = 4.0 * math.asin(math.sqrt(p))
    return TWO_PI - u if top else u


@njit(cache=True)
def run_path(beta, sig2, mode, phi0, key0, key1, index, dt_max, dt_floor, max_time,
             zone, checkpoints, cp_time, cp_phi, tab_x0, tab_dx, tab_y, zmax,
             rec_t, rec_phi, rec_k):
    """Simulate one path.  Returns (time, final phi, level-0 visits, steps, status, recorded).

    ``cp_time``/``cp_phi`` receive the state at the first step end at or after
    each checkpoint (MODE_CHECKPOINT).  ``rec_*`` (possibly empty) receive the
    trajectory up to their capacity.
    """
    st = rng_new(key0, key1, index, np.uint64(0))

    sigma = math.sqrt(sig2)
    q = sig2 / 16.0                       # p = q Z
    d = 1.0 + 4.0 * beta / sig2
    mu = 1.0 - 0.5 * d
    pref = 2.0 / math.pi * math.sin(mu * math.pi)
    b = d * q
    h = dt_max
    half_h = 0.5 * h
    quarter_h = 0.25 * h
    e = math.exp(-b * h)
    c = -math.expm1(-b * h) / b
    s_bridge = c / e
    half_d = 0.5 * d
    ntab = tab_y.shape[0]
    p_zone = math.sin(0.25 * zone) ** 2 if zone < math.pi else 2.0

    t = 0.0
    phi = min(max(phi0, 0.0), TWO_PI)
    top = phi > math.pi
    p = math.sin(0.25 * (TWO_PI - phi if top else phi)) ** 2
    visits = 0
    steps = 0
    status = STATUS_OK
    ncp = checkpoints.shape[0]
    jcp = 0
    nrec = 0
    cap = rec_t.shape[0]
    if cap > 0:
        rec_t[0] = 0.0
        rec_phi[0] = phi
        rec_k[0] = 0
        nrec = 1

    hit_top = phi >= TWO_PI
    hit0 = mode == MODE_LEVEL and phi <= 0.0
    done = hit_top or hit0 or (mode == MODE_CHECKPOINT and ncp == 0)

    while not done:
        if mode != MODE_CHECKPOINT and t > max_time:
            status = STATUS_CENSORED
            break
        hit0 = False
        hit_top = False
        if p >= p_zone:
            # capped Euler-Maruyama in phi
            phi = _phi_of(p, top)
            dist = 4.0 * math.asin(math.sqrt(p))
            dt = min(max(STEP_CONST * dist * dist, dt_floor), dt_max)
            move = beta / math.tan(0.5 * phi) * dt
            if abs(move) > 0.5 * dist:
                move = math.copysign(0.5 * dist, move)
            st, noise = normal(st)
            phi = phi + move + sigma * math.sqrt(dt) * noise
            t += dt
            if phi < 0.0:
                phi = -phi
                hit0 = True
            elif phi >= TWO_PI:
                phi = TWO_PI
                hit_top = True
            top = phi > math.pi
            p = math.sin(0.25 * (TWO_PI - phi if top else phi)) ** 2
        else:
            # midpoint rule for half a step of the remainder dZ = -d p^2 / (1 - p)
            pm = p - quarter_h * d * q * p * p / (1.0 - p)
            za = p / q - half_h * d * pm * pm / (1.0 - pm)
            if za < 0.0:
                za = 0.0
            st, n = poisson(st, za * e / (2.0 * c))
            st, g = gamma(st, half_d + n)
            zb = 2.0 * c * g
            if za > 0.0:
                # does the squared Bessel bridge za -> zb / e over time s_bridge touch 0?
                zz = math.sqrt(za * zb / e) / s_bridge
                if zz <= 0.0:
                    ph = 1.0
                elif zz > zmax:
                    ph = 0.0
                else:
                    # tabulated log(K_mu(z) / I_mu(z)) + 2z on a uniform log z grid
                    lz = math.log(zz)
                    pos = (lz - tab_x0) / tab_dx
                    if pos <= 0.0:
                        lr = tab_y[0] - 2.0 * mu * (lz - tab_x0)
                    else:
                        i = int(pos)
                        if i >= ntab - 1:
                            lr = tab_y[ntab - 1]
                        else:
                            w = pos - i
                            lr = tab_y[i] * (1.0 - w) + tab_y[i + 1] * w
                    gg = pref * math.exp(lr - 2.0 * zz)
                    ph = gg / (1.0 + gg)
                if ph > 0.0:
                    hit = ph >= 1.0
                    if not hit:
                        st, a = next_double(st)
                        hit = a < ph
                    if hit:
                        if top:
                            hit_top = True
                        else:
                            hit0 = True
            pb = min(q * zb, P_MAX)
            pm = pb - quarter_h * d * q * pb * pb / (1.0 - pb)
            z1 = zb - half_h * d * pm * pm / (1.0 - pm)
            if z1 < 0.0:
                z1 = 0.0
            p1 = min(q * z1, P_MAX)
            dt = half_h * (1.0 / (1.0 - p) + 1.0 / (1.0 - p1))
            # an exit inside the step is timed at its midpoint
            t += 0.5 * dt if hit_top else dt
            p = p1
            if p > 0.5:
                p = 1.0 - p
                top = not top
        steps += 1

        if hit_top:
            done = True
        elif hit0:
            visits += 1
            if mode == MODE_LEVEL:
                done = True

        if cap > 0 and nrec < cap:
            rec_t[nrec] = t
            rec_phi[nrec] = TWO_PI if hit_top else _phi_of(p, top)
            rec_k[nrec] = visits
            nrec += 1
        if mode == MODE_CHECKPOINT:
            while jcp < ncp and (done or t >= checkpoints[jcp]):
                cp_time[jcp] = t
                cp_phi[jcp] = TWO_PI if hit_top else _phi_of(p, top)
                jcp += 1
            if jcp >= ncp:
                done = True

    if hit_top:
        phi = TWO_PI
    elif mode == MODE_LEVEL and hit0:
        phi = 0.0
    else:
        phi = _phi_of(p, top)
    return t, phi, visits, steps, status, nrec


@njit(cache=True, nogil=True)
def run_batch(beta, sig2, mode, phi0, key0, key1, idx_start, idx_stop, dt_max, dt_floor,
              max_time, zone, checkpoints, tab_x0, tab_dx, tab_y, zmax,
              out_time, out_phi, out_visits, out_steps, out_status, out_cp_time, out_cp_phi):
    """Paths idx_start..idx_stop-1, written to the outputs at offset (index - idx_start)."""
    empty_f = np.empty(0)
    empty_i = np.empty(0, dtype=np.int64)
    for index in range(idx_start, idx_stop):
        j = index - idx_start
        t, phi, visits, steps, status, _ = run_path(
            beta, sig2, mode, phi0, key0, key1, np.uint64(index), dt_max, dt_floor,
            max_time, zone, checkpoints, out_cp_time[j], out_cp_phi[j],
            tab_x0, tab_dx, tab_y, zmax, empty_f, empty_f, empty_i)
        out_time[j] = t
        out_phi[j] = phi
        out_visits[j] = visits
        out_steps[j] = steps
        out_status[j] = status
