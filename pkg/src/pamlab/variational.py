"""The space-time variational constant and its scaling law.

The constant is the supremum over profiles ``g(s, x)``, ``s in [0, 1]``,
with ``int g(s, x)^2 dx = 1`` for every ``s``, of

    lam * int int int int |s - r|**-alpha0 gamma(x - y) g(s,x)^2 g(r,y)^2
        - 1/2 int int |grad_x g(s, x)|^2.

Profiles are piecewise constant on ``M`` uniform time slices times ``N**d``
cubes of the box ``[-L, L]**d`` and vanish outside the box.  The supremum is
approached by semi-implicit projected gradient ascent with backtracking.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import fft, optimize

from .model import CovarianceModel, DegenerateInputError, EngineError, power_cell_matrix

BOX_WIDTHS = 8.0  # default half-width of the box, in units of the best trial width
MASS_SHELL = 0.8  # leakage is measured outside this fraction of the box


@dataclass
class GridFunction:
    """Values of a profile on ``M`` time slices times ``N**d`` spatial cubes.

    ``values`` has shape (M, N, ..., N) with ``d`` spatial axes.
    """

    values: np.ndarray
    L: float
    d: int = 1

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != self.d + 1:
            raise ValueError(f"values must have {self.d + 1} axes, got shape {self.values.shape}")
        if len(set(self.values.shape[1:])) != 1:
            raise ValueError("spatial axes must all have the same length")
        if not self.L > 0:
            raise ValueError(f"box half-width must be positive, got {self.L}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid function has non-finite values")

    @property
    def M(self):
        return self.values.shape[0]

    @property
    def N(self):
        return self.values.shape[1]

    @property
    def h(self):
        return 1.0 / self.M

    @property
    def dx(self):
        return 2.0 * self.L / self.N

    @property
    def cell_volume(self):
        return self.dx ** self.d

    def flat(self):
        """Values as an (M, N**d) array."""
        return self.values.reshape(self.M, -1)

    def slice_masses(self):
        return (self.flat() ** 2).sum(axis=1) * self.cell_volume

    def centers(self):
        """Cell centres along one spatial axis."""
        return -self.L + self.dx * (np.arange(self.N) + 0.5)

    def reflected(self):
        return GridFunction(self.values[(slice(None),) + (slice(None, None, -1),) * self.d],
                            self.L, self.d)

    def with_values(self, values):
        return GridFunction(values, self.L, self.d)


@dataclass
class VariationalResult:
    value: float
    maximizer: GridFunction
    history: list
    converged: bool
    lam: float
    iterations: int
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class AscentConfig:
    """Step size, iteration cap and stopping tolerance of :func:`ascend`."""

    step: float = 0.5
    max_iter: int = 5000
    tol: float = 1e-12
    max_halvings: int = 40

    def __post_init__(self):
        if not self.step > 0 or not self.tol > 0 or self.max_iter < 1:
            raise ValueError("step and tol must be positive and max_iter >= 1")


class _Operators:
    """Cell matrices for one grid, reused across ascent steps."""

    def __init__(self, g, model):
        if g.d != model.d:
            raise ValueError(f"grid dimension {g.d} does not match model dimension {model.d}")
        edges_t = np.linspace(0.0, 1.0, g.M + 1)
        edges_x = np.linspace(-g.L, g.L, g.N + 1)
        self.time = power_cell_matrix(edges_t, edges_t, model.alpha0)
        self.space = model.spatial.cell_matrix(edges_x)
        self.diagonal = model.kernel == "delta"
        self.lam = model.lam
        self.measure = g.h * g.cell_volume
        # Dirichlet Laplacian eigenvalues, diagonal in the type-I sine basis
        k = np.arange(1, g.N + 1)
        eig1 = (2.0 - 2.0 * np.cos(np.pi * k / (g.N + 1))) / g.dx ** 2
        grids = np.meshgrid(*([eig1] * g.d), indexing="ij")
        self.laplace_eig = sum(grids)

    def potential(self, flat):
        """``(time (x) space) g^2`` on the flattened grid, shape (M, N**d)."""
        sq = flat * flat
        sp = sq * np.diag(self.space) if self.diagonal else sq @ self.space
        return self.time @ sp

    def interaction(self, flat):
        return self.lam * float(np.sum(flat * flat * self.potential(flat)))


def interaction_term(g, model):
    """``lam * sum`` of cell-integrated kernels times ``g^2 (s, x) g^2 (r, y)``."""
    return _Operators(g, model).interaction(g.flat())


def _axis_differences(values, axis):
    pad = [(0, 0)] * values.ndim
    pad[axis] = (1, 1)
    return np.diff(np.pad(values, pad), axis=axis)


def kinetic_term(g):
    """``1/2 int int |grad g|^2`` by differences across cell faces.

    Each face between neighbouring cells, and each boundary face against the
    zero extension, contributes ``(jump / dx)^2`` times ``dx**d``.
    """
    total = 0.0
    for axis in range(1, g.d + 1):
        total += float(np.sum(_axis_differences(g.values, axis) ** 2))
    return 0.5 * g.h * g.cell_volume * total / g.dx ** 2


def functional(g, model):
    return interaction_term(g, model) - kinetic_term(g)


def project(g):
    """Rescale every time slice to unit L2 mass."""
    mass = g.slice_masses()
    if np.any(mass <= 0) or not np.all(np.isfinite(mass)):
        bad = int(np.flatnonzero(~(mass > 0))[0]) if np.any(~(mass > 0)) else -1
        raise DegenerateInputError(f"time slice {bad} has zero L2 mass; cannot normalise")
    scale = 1.0 / np.sqrt(mass)
    return g.with_values(g.values * scale.reshape((-1,) + (1,) * g.d))


def _smooth(values, ops, tau, d):
    """Solve ``(I + tau (-Laplacian)) u = values`` slice by slice."""
    axes = tuple(range(1, d + 1))
    coef = fft.dstn(values, type=1, axes=axes)
    coef /= 1.0 + tau * ops.laplace_eig
    return fft.idstn(coef, type=1, axes=axes)


def _minus_laplacian(values, d, dx):
    out = np.zeros_like(values)
    for axis in range(1, d + 1):
        out -= np.diff(_axis_differences(values, axis), axis=axis)
    return out / dx ** 2


def _slice_dot(a, b, d):
    axes = tuple(range(1, d + 1))
    return np.sum(a * b, axis=axes, keepdims=True)


def _direction(g, ops, lam, tau):
    """Preconditioned ascent direction tangent to the per-slice constraint.

    With ``r`` the constrained residual of the ``L2`` gradient and
    ``P = (I + tau A)^-1``, the direction is ``P r`` minus its
    ``P``-orthogonal component along ``g``.  It vanishes exactly at the
    critical points of the discrete problem.
    """
    flat = g.flat()
    pot = 4.0 * lam * ops.potential(flat) / ops.measure
    grad = (pot * flat).reshape(g.values.shape) - _minus_laplacian(g.values, g.d, g.dx)
    v = g.values
    mu = _slice_dot(v, grad, g.d) / _slice_dot(v, v, g.d)
    res = grad - mu * v
    pres = _smooth(res, ops, tau, g.d)
    pg = _smooth(v, ops, tau, g.d)
    return pres - _slice_dot(v, pres, g.d) / _slice_dot(v, pg, g.d) * pg


def ascend(g0, model, config=None, callback=None):
    """Projected, preconditioned gradient ascent from ``g0``.

    Each step moves along :func:`_direction` with step ``tau`` and
    renormalises every time slice.  A step is accepted only if it increases
    the functional; otherwise ``tau`` is halved.  The run stops when the
    relative improvement falls below ``config.tol``.
    """
    config = config or AscentConfig()
    ops = _Operators(g0, model)
    g = project(g0)

    def value(h):
        v = ops.interaction(h.flat()) - kinetic_term(h)
        if not math.isfinite(v):
            raise EngineError(f"non-finite functional value {v} (lambda={model.lam})")
        return v

    current = value(g)
    history = [current]
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        tau = config.step
        accepted = None
        for _ in range(config.max_halvings):
            trial = project(g.with_values(g.values + tau * _direction(g, ops, model.lam, tau)))
            v = value(trial)
            if v >= current:
                accepted = (trial, v)
                break
            tau *= 0.5
        if accepted is None:
            converged = True
            break
        trial, v = accepted
        gain = v - current
        if gain <= config.tol * max(1.0, abs(current)):
            # equal up to tolerance: keep the earlier iterate
            converged = True
            break
        g, current = trial, v
        history.append(current)
        if callback is not None:
            callback(it, current)
    meta = {"M": g.M, "N": g.N, "L": g.L, "d": g.d, "step": config.step,
            "tol": config.tol, "leakage": box_leakage(g)}
    return VariationalResult(current, g, history, converged, model.lam, it, meta)


def box_leakage(g):
    """Largest fraction of slice mass outside ``MASS_SHELL * L`` in some coordinate."""
    c = np.abs(g.centers())
    outer = c > MASS_SHELL * g.L
    grids = np.meshgrid(*([outer] * g.d), indexing="ij")
    mask = np.logical_or.reduce(grids)
    sq = g.values ** 2
    frac = (sq * mask).reshape(g.M, -1).sum(axis=1) / sq.reshape(g.M, -1).sum(axis=1)
    return float(frac.max())


def gaussian_profile(sigma, M, N, L, d=1):
    """Time-constant, normalised profile ``g(x)^2 = N(0, sigma^2 I_d)`` density."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    x = -L + 2.0 * L / N * (np.arange(N) + 0.5)
    grids = np.meshgrid(*([x] * d), indexing="ij")
    r2 = sum(gr * gr for gr in grids)
    prof = np.exp(-r2 / (4.0 * sigma * sigma))
    values = np.broadcast_to(prof, (M,) + prof.shape).copy()
    return project(GridFunction(values, L, d))


def trial_bound(model, sigma):
    """Functional at the time-constant profile with ``g^2`` the ``N(0, sigma^2 I)`` density.

    For this profile ``g^2 (x) g^2`` integrates the kernel against the law
    of ``X - Y ~ N(0, 2 sigma^2 I)`` and ``|grad g|^2`` integrates to
    ``d / (4 sigma^2)``, so the value is
    ``lam * c0 * E gamma(Z) - d / (8 sigma^2)`` with
    ``c0 = 2 / ((1 - alpha0)(2 - alpha0))``.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    c0 = 2.0 / ((1.0 - model.alpha0) * (2.0 - model.alpha0))
    inter = model.lam * c0 * model.spatial.gaussian_mean(2.0 * sigma * sigma) if model.lam else 0.0
    return inter - model.d / (8.0 * sigma * sigma)


def best_trial(model, bracket=(1e-3, 1e3)):
    """Golden-section search of :func:`trial_bound` over ``log sigma``.

    Returns ``(value, sigma)``.
    """
    if model.lam <= 0:
        raise ValueError("the trial optimum needs lambda > 0 (at lambda = 0 it escapes to infinity)")
    lo, hi = (math.log(b) for b in bracket)
    res = optimize.minimize_scalar(lambda u: -trial_bound(model, math.exp(u)),
                                   bracket=(lo, 0.5 * (lo + hi), hi), method="golden",
                                   options={"xtol": 1e-10})
    sigma = math.exp(res.x)
    return trial_bound(model, sigma), sigma


def solve(model, M=64, N=64, L=None, config=None, d=None):
    """Run :func:`ascend` from the best Gaussian trial profile.

    ``L`` defaults to ``BOX_WIDTHS`` trial widths.  A warning is issued when
    more than 0.1% of some slice's mass sits in the outer shell of the box.
    """
    _, sigma = best_trial(model)
    d = model.d if d is None else d
    if L is None:
        L = BOX_WIDTHS * sigma
    g0 = gaussian_profile(sigma, M, N, L, d)
    res = ascend(g0, model, config)
    res.meta["sigma0"] = sigma
    if res.meta["leakage"] > 1e-3:
        warnings.warn(f"maximizer mass near the box edge is {res.meta['leakage']:.2e}; "
                      "increase L", RuntimeWarning, stacklevel=2)
    return res


def multistart(model, widths, M=32, N=64, L=None, config=None):
    """Ascent from Gaussian starts of several widths; returns ``[(width, value)]``.

    Uniqueness of the maximizer is not known, so the spread of these values
    is a diagnostic only.
    """
    _, sigma = best_trial(model)
    L = BOX_WIDTHS * sigma if L is None else L
    return [(w, ascend(gaussian_profile(w, M, N, L, model.d), model, config).value)
            for w in widths]


def scaling_check(model, lambdas, M=64, N=64, L=None, config=None):
    """Relative deviations from ``E(lam) = lam**(2/(2-alpha)) E(1)``.

    Each run starts from the Gaussian trial optimum at its own ``lam``; by
    default the box also scales with that width, so the discrete problems
    are exact rescalings of each other up to the ascent tolerance.  Pass a
    fixed ``L`` to include box and resolution effects.

    Returns a list of ``(lam, value, residual, result)``.
    """
    lambdas = [float(v) for v in lambdas]
    if not lambdas or any(v <= 0 for v in lambdas):
        raise ValueError("need positive lambdas")
    base = solve(model.with_lambda(1.0), M, N, L, config)
    k = model.scaling_power
    rows = []
    for lam in lambdas:
        res = base if lam == 1.0 else solve(model.with_lambda(lam), M, N, L, config)
        resid = abs(res.value / base.value - lam ** k) / lam ** k
        rows.append((lam, res.value, resid, res))
    return rows


__all__ = ["GridFunction", "VariationalResult", "AscentConfig", "interaction_term",
           "kinetic_term", "functional", "project", "ascend", "box_leakage",
           "gaussian_profile", "trial_bound", "best_trial", "solve", "multistart", "scaling_check",
           "CovarianceModel"]
