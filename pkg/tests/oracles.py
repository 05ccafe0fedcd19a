"""Independent reference computations used by the tests.

Nothing here imports the package internals it checks: the oracles are
brute-force loops, adaptive quadrature or closed forms derived by hand.
"""

import itertools
import math

import numpy as np
from scipy import integrate

# Values frozen before the corresponding engines were written.
UNIT_SQUARE_HALF = 8.0 / 3.0                 # int int_[0,1]^2 |s - r|^-1/2
SECH_TRIAL_LAMBDA1 = (8.0 / 3.0) ** 2 / 6.0  # time-constant sech profile, delta kernel
GAUSS_TRIAL_LAMBDA1 = 1.1317684842           # best Gaussian trial, delta kernel, alpha0 = 1/2


def interval_pair_integral(a, I, J):
    """``int_I int_J |s - r|^-a dr ds`` by adaptive quadrature."""

    def inner(s):
        # algebraic end-point weights carry the singularity at r = s
        lo, hi = J
        one = lambda r: 1.0
        val = 0.0
        if lo < min(s, hi):
            b = min(s, hi)
            if s <= hi:
                val += integrate.quad(one, lo, b, weight="alg", wvar=(0.0, -a))[0]
            else:
                val += integrate.quad(lambda r: (s - r) ** -a, lo, b)[0]
        if max(s, lo) < hi:
            c = max(s, lo)
            if s >= lo:
                val += integrate.quad(one, c, hi, weight="alg", wvar=(-a, 0.0))[0]
            else:
                val += integrate.quad(lambda r: (r - s) ** -a, c, hi)[0]
        return val

    val, _ = integrate.quad(inner, I[0], I[1], limit=200, epsabs=1e-12)
    return val


def heat_level_one(a0, t):
    """``int_0^t int_0^t |s - r|^-a0 p_{2t-s-r}(0) ds dr`` for the 1-d heat kernel.

    This is the first-chaos second moment of the solution at the origin with
    the spatially white noise.
    """
    g = lambda w, u: w ** -a0 * (2.0 * math.pi * (2.0 * u - w)) ** -0.5
    val, _ = integrate.dblquad(g, 0.0, t, lambda u: 0.0, lambda u: u, epsabs=1e-13, epsrel=1e-12)
    return 2.0 * val


def brute_pair_energy(mid, ct, spatial):
    """Pair energies by explicit loops; ``spatial(z)`` is the spatial factor."""
    batch, n, steps, _ = mid.shape
    out = np.zeros(batch)
    for b in range(batch):
        for j, k in itertools.combinations(range(n), 2):
            for i in range(steps):
                for m in range(steps):
                    out[b] += ct[i, m] * spatial(mid[b, j, i] - mid[b, k, m])
    return out


def brute_second_moment(h, cov, k):
    """``k! <h, h>`` in the ``cov``-weighted symmetric tensor inner product."""
    idx = np.argwhere(h != 0)
    total = 0.0
    for a in idx:
        for b in idx:
            for perm in itertools.permutations(range(k)):
                total += h[tuple(a)] * h[tuple(b)] * np.prod([cov[a[i], b[perm[i]]]
                                                             for i in range(k)])
    return total


def hermite_wick(cells, xi, cov):
    """Wick product of jointly Gaussian ``xi[:, cells]`` by pairing recursion."""
    if not cells:
        return np.ones(xi.shape[0])
    first, rest = cells[0], list(cells[1:])
    out = xi[:, first] * hermite_wick(tuple(rest), xi, cov)
    for pos, c in enumerate(rest):
        others = tuple(rest[:pos] + rest[pos + 1:])
        out = out - cov[first, c] * hermite_wick(others, xi, cov)
    return out


def sech_profile_value(lam, c0, a):
    """Functional at ``g(x)^2 = (a / 2) sech^2(a x)`` (time constant), delta kernel."""
    inter = lam * c0 * (a / 2.0) ** 2 * (4.0 / 3.0) / a  # lam c0 int g^4
    kinetic = 0.5 * a * a / 3.0                        # int g'^2 = a^2 / 3
    return inter - kinetic
