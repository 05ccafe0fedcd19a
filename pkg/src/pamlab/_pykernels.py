"""Pure numpy versions of the compiled kernels in ``_ckernels.pyx``."""

import math

import numpy as np

RIESZ = 0
DELTA = 1


def _weight(r2, kind, alpha, floor, ball, var):
    if kind == DELTA:
        return np.exp(-0.5 * r2 / var) / math.sqrt(2.0 * math.pi * var)
    out = np.full_like(r2, ball)
    far = r2 >= floor * floor
    out[far] = r2[far] ** (-0.5 * alpha)
    return out


def pair_energy_batch(mid, ct, kind, alpha, floor, ball, var):
    mid = np.asarray(mid, dtype=float)
    S, n, M, d = mid.shape
    pairs = [(j, k) for j in range(n) for k in range(j + 1, n)]
    out = np.zeros((S, len(pairs)))
    for p, (j, k) in enumerate(pairs):
        diff = mid[:, j, :, None, :] - mid[:, k, None, :, :]
        r2 = np.einsum("sabc,sabc->sab", diff, diff)
        out[:, p] = np.einsum("ab,sab->s", ct, _weight(r2, kind, alpha, floor, ball, var))
    return out


def occupation_batch(pos, eps, dt):
    pos = np.asarray(pos, dtype=float)
    S, n, M = pos.shape
    count = np.zeros(S)
    for j in range(n):
        for k in range(j + 1, n):
            count += np.count_nonzero(np.abs(pos[:, j] - pos[:, k]) <= eps, axis=1)
    return count * (dt / (2.0 * eps))
