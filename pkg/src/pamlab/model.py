"""Noise model, scaling laws and closed-form rate formulas.

The noise driving the parabolic Anderson model is a centred Gaussian field
with covariance ``gamma0(t - s) * gamma(x - y)``, where
``gamma0(t) = |t|**-alpha0`` and ``gamma`` is homogeneous of degree
``-alpha``.  Everything else in the package consumes a
:class:`CovarianceModel`.

Kernels are never evaluated at their singular point by integrating
callers.  Instead they use exact cell integrals:

* temporal cells: the second antiderivative ``|u|**(2-a) / ((1-a)(2-a))``;
* Riesz kernel in ``d = 1``: the same antiderivative with ``a = alpha``;
* Riesz kernel in ``d >= 2``: midpoint rule off the diagonal, radial
  integration over the ball of equal volume on the diagonal;
* Dirac kernel (``d = 1``, ``alpha = 1``): the identity times ``dx``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np


class SingularityError(ValueError):
    """A kernel was evaluated at its singular point."""


class DegenerateInputError(ValueError):
    """Input that makes an operation ill-defined (zero mass, empty set, ...)."""


class ResourceCapError(RuntimeError):
    """A requested computation would exceed a configured size cap."""


class EngineError(RuntimeError):
    """Numerical failure inside an engine (non-finite values, ...)."""


KERNELS = ("riesz", "delta")


def second_antiderivative(u, a):
    """``G(u) = |u|**(2-a) / ((1-a)(2-a))`` so that ``G'' = |u|**-a``."""
    u = np.abs(np.asarray(u, dtype=float))
    return u ** (2.0 - a) / ((1.0 - a) * (2.0 - a))


def power_cell_matrix(edges1, edges2, a):
    """Exact ``int_I int_J |s - r|**-a dr ds`` for all interval pairs.

    Parameters
    ----------
    edges1, edges2 : array_like
        Increasing interval endpoints (``m + 1`` and ``n + 1`` values).
    a : float
        Exponent in ``(0, 1)``.

    Returns
    -------
    ndarray of shape (m, n)
    """
    e1 = np.asarray(edges1, dtype=float)
    e2 = np.asarray(edges2, dtype=float)
    a1, b1 = e1[:-1, None], e1[1:, None]
    a2, b2 = e2[None, :-1], e2[None, 1:]
    G = second_antiderivative
    return G(b1 - a2, a) - G(b1 - b2, a) - G(a1 - a2, a) + G(a1 - b2, a)


def unit_square_integral(a):
    """``int_0^1 int_0^1 |s - r|**-a ds dr = 2 / ((1-a)(2-a))``."""
    return 2.0 / ((1.0 - a) * (2.0 - a))


def tensor_centers(edges, d):
    """Centres of the ``N**d`` cubes of a tensor grid, C order, shape (N**d, d)."""
    e = np.asarray(edges, dtype=float)
    c = 0.5 * (e[:-1] + e[1:])
    mesh = np.meshgrid(*([c] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


class RieszKernel:
    """``gamma(x) = |x|**-alpha`` with ``0 < alpha < min(2, d)``."""

    tag = "riesz"

    def __init__(self, alpha, d):
        if not alpha < d:
            raise ValueError(
                f"Riesz kernel needs alpha < d for local integrability (alpha={alpha}, d={d}); "
                "use kernel=delta for alpha = d = 1")
        self.alpha = float(alpha)
        self.d = int(d)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        r = np.abs(x) if self.d == 1 and x.ndim <= 1 else np.linalg.norm(x, axis=-1)
        if np.any(r == 0):
            raise SingularityError("Riesz kernel evaluated at the origin")
        return r ** -self.alpha

    def ball_average(self, rho):
        """Mean of ``|z|**-alpha`` over the ball of radius ``rho``."""
        return self.d / (self.d - self.alpha) * rho ** -self.alpha

    def cell_matrix(self, edges):
        """Integrals of ``gamma(x - y)`` over all pairs of cubes of a uniform tensor grid."""
        e = np.asarray(edges, dtype=float)
        if self.d == 1:
            return power_cell_matrix(e, e, self.alpha)
        dx = e[1] - e[0]
        vol = dx ** self.d
        c = tensor_centers(e, self.d)
        diff = c[:, None, :] - c[None, :, :]
        r = np.linalg.norm(diff, axis=-1)
        np.fill_diagonal(r, 1.0)
        mat = vol * vol * r ** -self.alpha
        # equal-volume ball: omega_d rho^d = dx^d
        omega = math.pi ** (self.d / 2) / math.gamma(self.d / 2 + 1)
        rho = (vol / omega) ** (1.0 / self.d)
        np.fill_diagonal(mat, vol * vol * self.ball_average(rho))
        return mat

    def fk_weight(self, z, dt):
        """Spatial factor of the pair energy at midpoint displacements ``z``.

        Displacements shorter than ``sqrt(dt) / 8`` use the ball average.
        """
        z = np.asarray(z, dtype=float)
        r = np.abs(z) if self.d == 1 and z.ndim <= 1 else np.linalg.norm(z, axis=-1)
        floor = math.sqrt(dt) / 8.0
        out = np.empty_like(r)
        near = r < floor
        out[~near] = r[~near] ** -self.alpha
        out[near] = self.ball_average(floor)
        return out

    def gaussian_mean(self, var):
        """``E gamma(Z)`` for ``Z ~ N(0, var I_d)``."""
        a, d = self.alpha, self.d
        return (2.0 * var) ** (-a / 2) * math.gamma((d - a) / 2) / math.gamma(d / 2)


class DeltaKernel:
    """Dirac mass at the origin in ``d = 1``; homogeneous of degree ``-1``.

    This is the spatially white case ``alpha = d = 1``.  It has no pointwise
    values; integrating callers use its cell integrals, and the Feynman-Kac
    engine uses the Brownian-bridge smoothed density at midpoint times.
    """

    tag = "delta"

    def __init__(self, alpha, d):
        if d != 1 or alpha != 1:
            raise ValueError(f"delta kernel requires d = 1 and alpha = 1 (got alpha={alpha}, d={d})")
        self.alpha = 1.0
        self.d = 1

    def __call__(self, x):
        raise SingularityError("the delta kernel has no pointwise values; use cell integrals")

    def cell_matrix(self, edges):
        e = np.asarray(edges, dtype=float)
        return np.diag(np.diff(e))

    def fk_weight(self, z, dt):
        """Conditional mean of ``delta(B1(s) - B2(r))`` at midpoint times.

        Given the grid values of two independent paths, the midpoint
        difference is Gaussian with the interpolated mean ``z`` and variance
        ``dt / 2`` (two bridge variances of ``dt / 4``).
        """
        z = np.asarray(z, dtype=float)
        if z.ndim > 1:
            z = z[..., 0]
        v = 0.5 * dt
        return np.exp(-0.5 * z * z / v) / math.sqrt(2.0 * math.pi * v)

    def gaussian_mean(self, var):
        return (2.0 * math.pi * var) ** -0.5


@dataclass(frozen=True)
class CovarianceModel:
    """Parameters of the noise covariance and the noise intensity."""

    alpha0: float
    alpha: float
    d: int = 1
    lam: float = 1.0
    kernel: str = "riesz"

    def __post_init__(self):
        if not 0.0 < self.alpha0 < 1.0:
            raise ValueError(f"alpha0 must lie in (0, 1), got {self.alpha0}")
        if not 0.0 < self.alpha < 2.0:
            raise ValueError(f"alpha must lie in (0, 2), got {self.alpha}")
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"d must be a positive integer, got {self.d}")
        if not self.lam >= 0.0 or not math.isfinite(self.lam):
            raise ValueError(f"lambda must be a finite nonnegative number, got {self.lam}")
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}; choose from {KERNELS}")
        _ = self.spatial  # validate kernel/dimension combination eagerly

    @cached_property
    def spatial(self):
        cls = RieszKernel if self.kernel == "riesz" else DeltaKernel
        return cls(self.alpha, self.d)

    def with_lambda(self, lam):
        return CovarianceModel(self.alpha0, self.alpha, self.d, lam, self.kernel)

    @property
    def scaling_power(self):
        """``2 / (2 - alpha)``, the exponent in ``E(lam) = lam**p E(1)``."""
        return 2.0 / (2.0 - self.alpha)

    def as_dict(self):
        return {"alpha0": self.alpha0, "alpha": self.alpha, "d": self.d,
                "lambda": self.lam, "kernel": self.kernel}


def gamma_temporal(model, t):
    """``|t|**-alpha0``."""
    if t == 0:
        raise SingularityError("temporal kernel evaluated at t = 0; use cell integrals")
    return abs(t) ** -model.alpha0


def gamma_spatial(model, x):
    """Spatial covariance ``gamma(x)``; ``|x|**-alpha`` for the Riesz kernel."""
    return model.spatial(x)


@dataclass(frozen=True)
class RatePrediction:
    time_exponent: float
    coefficient: float
    order: float


def time_rate_exponent(model):
    """Power of ``t`` normalising ``log E u^p``: ``(4 - alpha - 2 alpha0) / (2 - alpha)``."""
    return (4.0 - model.alpha - 2.0 * model.alpha0) / (2.0 - model.alpha)


def escaling(model, E1, lam):
    """``E(lam) = lam**(2/(2-alpha)) * E(1)``."""
    if not lam > 0:
        raise ValueError(f"lam must be positive, got {lam}")
    return lam ** model.scaling_power * E1


def lyapunov_prediction(model, p, E1):
    """Predicted limit of ``t**-exponent * log E u^p`` for real ``p >= 1``.

    ``E1`` is an estimate of the variational constant at unit intensity;
    the intensity is taken from ``model.lam``.
    """
    if not p >= 1:
        raise ValueError(f"moment order must be >= 1, got {p}")
    k = model.scaling_power
    coef = p * ((p - 1.0) / 2.0) ** k * model.lam ** k * E1
    return RatePrediction(time_rate_exponent(model), coef, float(p))


def white_noise_rate(n, lam):
    """Moment Lyapunov exponent for space-time white noise: ``n(n^2-1) lam^2 / 24``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return n * (n * n - 1) * lam * lam / 24.0


def hypercontract_map(p, q):
    """Ornstein-Uhlenbeck time ``tau`` and intensity factor for ``q >= p > 1``.

    Returns ``(tau, factor)`` with ``factor = (p-1)/(q-1) = exp(-2 tau)``, so
    that ``1 + exp(2 tau) (p - 1) = q``.
    """
    if not p > 1:
        raise ValueError(f"p must exceed 1, got {p}")
    if not q >= p:
        raise ValueError(f"q must be >= p, got q={q}, p={p}")
    factor = (p - 1.0) / (q - 1.0)
    return -0.5 * math.log(factor), factor


def q_of_tau(p, tau):
    """Hypercontractive exponent ``1 + exp(2 tau)(p - 1)``."""
    return 1.0 + math.exp(2.0 * tau) * (p - 1.0)

