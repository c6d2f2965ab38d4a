"""Modified Bessel function of the second kind K_nu for real order nu >= 0.

Two regimes, following the classic Temme / Thompson-Barnett treatment:
series at the reduced order mu = nu - round(nu) for x <= 2, and the
Steed continued fraction CF2 for x > 2, followed by upward recurrence
in the order.  Accuracy is ~1e-13 relative over the ranges exercised by
the Matern kernels here (nu in (0, ~30], x in (0, ~700)).
"""

import math

import numpy as np

from ._jit import njit

_EPS = 1.0e-16
_MAXIT = 20000

# Taylor coefficients of 1/Gamma(1+t) = 1 + g*t + a2*t^2 + a3*t^3 + ...
_EULER_GAMMA = 0.5772156649015329
_A2 = -0.6558780715202538
_A3 = -0.0420026350340952


@njit(cache=True)
def _gam1_gam2(mu):
    # gam1 = [1/G(1-mu) - 1/G(1+mu)] / (2 mu),  gam2 = [1/G(1-mu) + 1/G(1+mu)] / 2
    if abs(mu) < 1.0e-4:
        gam1 = -_EULER_GAMMA - _A3 * mu * mu
        gam2 = 1.0 + _A2 * mu * mu
    else:
        gp = 1.0 / math.gamma(1.0 + mu)
        gm = 1.0 / math.gamma(1.0 - mu)
        gam1 = (gm - gp) / (2.0 * mu)
        gam2 = (gm + gp) / 2.0
    return gam1, gam2


@njit(cache=True)
def kv(nu, x):
    """K_nu(x) for nu >= 0, x > 0.  Returns inf as x -> 0+."""
    if x <= 0.0:
        return math.inf
    if nu < 0.0:
        nu = -nu  # K_{-nu} = K_nu
    # half-integer closed forms
    half = nu - math.floor(nu)
    if half == 0.5 and nu <= 2.5:
        k_half = math.sqrt(math.pi / (2.0 * x)) * math.exp(-x)
        if nu == 0.5:
            return k_half
        if nu == 1.5:
            return k_half * (1.0 + 1.0 / x)
        return k_half * (1.0 + 3.0 / x + 3.0 / (x * x))

    nl = int(nu + 0.5)
    mu = nu - nl  # |mu| <= 1/2
    if x <= 2.0:
        # Temme series for K_mu and K_{mu+1}
        x2 = 0.5 * x
        pimu = math.pi * mu
        fact = 1.0 if abs(pimu) < 1.0e-15 else pimu / math.sin(pimu)
        d = -math.log(x2)
        e = mu * d
        fact2 = 1.0 if abs(e) < 1.0e-15 else math.sinh(e) / e
        gam1, gam2 = _gam1_gam2(mu)
        gampl = gam2 - mu * gam1  # 1/Gamma(1+mu)
        gammi = gam2 + mu * gam1  # 1/Gamma(1-mu)
        ff = fact * (gam1 * math.cosh(e) + gam2 * fact2 * d)
        ksum = ff
        e = math.exp(e)
        p = 0.5 * e / gampl
        q = 0.5 / (e * gammi)
        c = 1.0
        d = x2 * x2
        ksum1 = p
        for i in range(1, _MAXIT):
            fi = float(i)
            ff = (fi * ff + p + q) / (fi * fi - mu * mu)
            c *= d / fi
            p /= fi - mu
            q /= fi + mu
            delk = c * ff
            ksum += delk
            ksum1 += c * (p - fi * ff)
            if abs(delk) < abs(ksum) * _EPS:
                break
        rkmu = ksum
        rk1 = ksum1 * 2.0 / x
    else:
        # Steed CF2
        b = 2.0 * (1.0 + x)
        d = 1.0 / b
        h = d
        delh = d
        q1 = 0.0
        q2 = 1.0
        a1 = 0.25 - mu * mu
        q = a1
        c = a1
        a = -a1
        s = 1.0 + q * delh
        for i in range(2, _MAXIT):
            a -= 2.0 * (i - 1)
            c = -a * c / i
            qnew = (q1 - b * q2) / a
            q1 = q2
            q2 = qnew
            q += c * qnew
            b += 2.0
            d = 1.0 / (b + a * d)
            delh = (b * d - 1.0) * delh
            h += delh
            dels = q * delh
            s += dels
            if abs(dels / s) < _EPS:
                break
        h = a1 * h
        rkmu = math.sqrt(math.pi / (2.0 * x)) * math.exp(-x) / s
        rk1 = rkmu * (mu + x + 0.5 - h) / x
    # upward recurrence K_{m+1} = 2 m / x * K_m + K_{m-1}
    for i in range(nl):
        rktemp = (mu + i + 1.0) * 2.0 / x * rk1 + rkmu
        rkmu = rk1
        rk1 = rktemp
    return rkmu


@njit(cache=True)
def kv_array(nu, x, out):
    for i in range(x.size):
        out[i] = kv(nu, x[i])
    return out


def kv_vec(nu, x):
    """Vectorized K_nu over an ndarray of arguments."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    out = np.empty_like(x)
    kv_array(float(nu), x.ravel(), out.ravel())
    return out
