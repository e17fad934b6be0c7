# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops for the Gaussian mean-shift model.

Every routine draws from the numpy bit generator through numpy's own C
distribution functions, in the same order as the pure-Python twins in
``_pykernels``, so both backends produce bit-identical output.
"""

import numpy as np
cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport log, log1p, exp, INFINITY
from libc.stdint cimport int64_t, uint8_t
from numpy.random cimport bitgen_t

cnp.import_array()

cdef extern from "numpy/random/distributions.h":
    double random_standard_normal(bitgen_t *bitgen_state) nogil
    double random_standard_uniform(bitgen_t *bitgen_state) nogil
    int64_t random_geometric(bitgen_t *bitgen_state, double p) nogil

BACKEND = "cython"
cdef int64_t NEVER = 9223372036854775807


cdef bitgen_t *_bitgen(object gen) except NULL:
    capsule = gen.bit_generator.capsule
    return <bitgen_t *> PyCapsule_GetPointer(capsule, "BitGenerator")


cdef inline double _z_skip(double z, double rho, double c) noexcept nogil:
    if z < 0.0:
        return log(exp(z) + rho) + c
    return z + log1p(rho * exp(-z)) + c


def simulate_trials(object gen, Py_ssize_t n, double theta, double rho, double pi0,
                    double z0, double a, double b, double eps, int kind,
                    int64_t cap, int64_t forced_gamma):
    """Run n trials of a threshold (kind 0) or coin-flip (kind 1) policy.

    forced_gamma: -1 draws the change time from the prior, -2 means no change,
    a value >= 0 fixes it.
    """
    cdef bitgen_t *rng = _bitgen(gen)
    cdef cnp.ndarray[int64_t] gamma_a = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[int64_t] tau_a = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[int64_t] ob_a = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[int64_t] oa_a = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[double] omp_a = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[uint8_t] tr_a = np.zeros(n, dtype=np.uint8)
    cdef int64_t[::1] gamma_v = gamma_a
    cdef int64_t[::1] tau_v = tau_a
    cdef int64_t[::1] ob_v = ob_a
    cdef int64_t[::1] oa_v = oa_a
    cdef double[::1] omp_v = omp_a
    cdef uint8_t[::1] tr_v = tr_a
    cdef double c = -log1p(-rho)
    cdef double half_t2 = 0.5 * theta * theta
    cdef double z, x, e
    cdef int64_t g, k, ob, oa
    cdef bint take
    cdef Py_ssize_t i
    lock = gen.bit_generator.lock
    with lock, nogil:
        for i in range(n):
            if forced_gamma == -1:
                if pi0 > 0.0 and random_standard_uniform(rng) < pi0:
                    g = 0
                else:
                    g = random_geometric(rng, rho)
            elif forced_gamma == -2:
                g = NEVER
            else:
                g = forced_gamma
            z = z0
            k = 0
            ob = 0
            oa = 0
            while True:
                if kind == 0:
                    take = z >= b
                elif eps >= 1.0:
                    take = True
                elif eps <= 0.0:
                    take = False
                else:
                    take = random_standard_uniform(rng) < eps
                k += 1
                if take:
                    x = random_standard_normal(rng)
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
                    tr_v[i] = 1
                    break
            gamma_v[i] = g
            tau_v[i] = k
            ob_v[i] = ob
            oa_v[i] = oa
            if z >= 0:
                e = exp(-z)
                omp_v[i] = e / (1.0 + e)
            else:
                omp_v[i] = 1.0 / (1.0 + exp(z))
    return gamma_a, tau_a, ob_a, oa_a, omp_a, tr_a


def overshoot(object gen, Py_ssize_t n, double theta, double rho, double wall):
    """Overshoots of the walk sum(theta X - theta^2/2 + |log(1-rho)|), X ~ N(theta,1), over wall."""
    cdef bitgen_t *rng = _bitgen(gen)
    cdef cnp.ndarray[double] out_a = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_a
    cdef double c = -log1p(-rho)
    cdef double half_t2 = 0.5 * theta * theta
    cdef double s, x
    cdef Py_ssize_t i
    lock = gen.bit_generator.lock
    with lock, nogil:
        for i in range(n):
            s = 0.0
            while s <= wall:
                x = theta + random_standard_normal(rng)
                s = s + ((theta * x - half_t2) + c)
            out[i] = s - wall
    return out_a


def eta_samples(object gen, Py_ssize_t n, double theta, double rho, double z0,
                int64_t kmax, double log_tol):
    """Samples of log(e^z0 + sum_k rho (1-rho)^k prod_{i<=k} f0/f1(X_i)), X ~ f1.

    A path stops once its current log-term sits log_tol below the log partial sum;
    the likelihood-ratio product is a martingale, so the neglected tail has
    conditional mean at most e^{-log_tol} times the partial sum.
    Returns (samples, number of paths that reached kmax).
    """
    cdef bitgen_t *rng = _bitgen(gen)
    cdef cnp.ndarray[double] out_a = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_a
    cdef double lq = log1p(-rho)
    cdef double half_t2 = 0.5 * theta * theta
    cdef double ez0 = exp(z0)
    cdef double lw, tot, x
    cdef int64_t k
    cdef Py_ssize_t i
    cdef Py_ssize_t capped = 0
    lock = gen.bit_generator.lock
    with lock, nogil:
        for i in range(n):
            lw = 0.0
            tot = rho
            k = 0
            while True:
                k += 1
                if k > kmax:
                    capped += 1
                    break
                x = theta + random_standard_normal(rng)
                lw = lw + (lq - (theta * x - half_t2))
                tot = tot + rho * exp(lw)
                if lw < log(tot) - log_tol:
                    break
            out[i] = log(ez0 + tot)
    return out_a, capped


def exit_paths(object gen, Py_ssize_t n, double theta, bint post, double rho,
               double z0, double lower, double upper, int64_t cap):
    """Observe-every-step paths from z0 until z < lower or z >= upper.

    Returns (steps, exit value, summed log-likelihood ratio, capped flag).
    """
    cdef bitgen_t *rng = _bitgen(gen)
    cdef cnp.ndarray[int64_t] steps_a = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[double] zex_a = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[double] llr_a = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[uint8_t] cap_a = np.zeros(n, dtype=np.uint8)
    cdef int64_t[::1] steps = steps_a
    cdef double[::1] zex = zex_a
    cdef double[::1] llr = llr_a
    cdef uint8_t[::1] capped = cap_a
    cdef double c = -log1p(-rho)
    cdef double half_t2 = 0.5 * theta * theta
    cdef double z, x, l, s
    cdef int64_t k
    cdef Py_ssize_t i
    lock = gen.bit_generator.lock
    with lock, nogil:
        for i in range(n):
            z = z0
            s = 0.0
            k = 0
            while True:
                k += 1
                x = random_standard_normal(rng)
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
    return steps_a, zex_a, llr_a, cap_a
