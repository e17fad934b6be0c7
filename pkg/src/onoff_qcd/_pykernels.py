"""Pure-Python twins of the compiled kernels in ``_kernels.pyx``.

Same signatures, same draw order, same floating-point expressions: given
generators in the same state, both backends return identical arrays.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND = "python"
NEVER = np.iinfo(np.int64).max

_log = math.log
_exp = math.exp
_log1p = math.log1p


def _z_skip(z, rho, c):
    if z < 0.0:
        return _log(_exp(z) + rho) + c
    return z + _log1p(rho * _exp(-z)) + c


def simulate_trials(gen, n, theta, rho, pi0, z0, a, b, eps, kind, cap, forced_gamma):
    normal = gen.standard_normal
    uniform = gen.random
    gamma_a = np.empty(n, dtype=np.int64)
    tau_a = np.empty(n, dtype=np.int64)
    ob_a = np.empty(n, dtype=np.int64)
    oa_a = np.empty(n, dtype=np.int64)
    omp_a = np.empty(n, dtype=np.float64)
    tr_a = np.zeros(n, dtype=np.uint8)
    c = -_log1p(-rho)
    half_t2 = 0.5 * theta * theta
    for i in range(n):
        if forced_gamma == -1:
            if pi0 > 0.0 and uniform() < pi0:
                g = 0
            else:
                g = int(gen.geometric(rho))
        elif forced_gamma == -2:
            g = NEVER
        else:
            g = forced_gamma
        z = z0
        k = ob = oa = 0
        while True:
            if kind == 0:
                take = z >= b
            elif eps >= 1.0:
                take = True
            elif eps <= 0.0:
                take = False
            else:
                take = uniform() < eps
            k += 1
            if take:
                x = normal()
                if k >= g:
                    x = theta + x
                    oa += 1
                else:
                    ob += 1
                z = _z_skip(z, rho, c) + (theta * x - half_t2)
            else:
                z = _z_skip(z, rho, c)
            if z > a:
                break
            if k >= cap:
                tr_a[i] = 1
                break
        gamma_a[i] = g
        tau_a[i] = k
        ob_a[i] = ob
        oa_a[i] = oa
        if z >= 0:
            e = _exp(-z)
            omp_a[i] = e / (1.0 + e)
        else:
            omp_a[i] = 1.0 / (1.0 + _exp(z))
    return gamma_a, tau_a, ob_a, oa_a, omp_a, tr_a


def overshoot(gen, n, theta, rho, wall):
    normal = gen.standard_normal
    out = np.empty(n, dtype=np.float64)
    c = -_log1p(-rho)
    half_t2 = 0.5 * theta * theta
    for i in range(n):
        s = 0.0
        while s <= wall:
            x = theta + normal()
            s = s + ((theta * x - half_t2) + c)
        out[i] = s - wall
    return out


def eta_samples(gen, n, theta, rho, z0, kmax, log_tol):
    normal = gen.standard_normal
    out = np.empty(n, dtype=np.float64)
    lq = _log1p(-rho)
    half_t2 = 0.5 * theta * theta
    ez0 = _exp(z0)
    capped = 0
    for i in range(n):
        lw = 0.0
        tot = rho
        k = 0
        while True:
            k += 1
            if k > kmax:
                capped += 1
                break
            x = theta + normal()
            lw = lw + (lq - (theta * x - half_t2))
            tot = tot + rho * _exp(lw)
            if lw < _log(tot) - log_tol:
                break
        out[i] = _log(ez0 + tot)
    return out, capped


def exit_paths(gen, n, theta, post, rho, z0, lower, upper, cap):
    normal = gen.standard_normal
    steps = np.empty(n, dtype=np.int64)
    zex = np.empty(n, dtype=np.float64)
    llr = np.empty(n, dtype=np.float64)
    capped = np.zeros(n, dtype=np.uint8)
    c = -_log1p(-rho)
    half_t2 = 0.5 * theta * theta
    for i in range(n):
        z = z0
        s = 0.0
        k = 0
        while True:
            k += 1
            x = normal()
            if post:
                x = theta + x
            l = theta * x - half_t2
            s = s + l
            z = _z_skip(z, rho, c) + l
            if z < lower or z >= upper:
                break
            if k >= cap:
                capped[i] = 1
                break
        steps[i] = k
        zex[i] = z
        llr[i] = s
    return steps, zex, llr, capped
