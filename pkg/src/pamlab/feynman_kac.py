"""Monte Carlo estimation of integer moments through the Feynman-Kac formula.

For an integer ``n``,

    E u^n(t, x) = E exp(lam * sum_{j<k} int int gamma0(s - r) gamma(B_j(s) - B_k(r)) ds dr)

with independent Brownian motions ``B_1, ..., B_n``.  The double time
integral is discretised on a uniform grid; each pair of time cells carries
its exact temporal weight and the spatial kernel is evaluated at the
midpoint displacement (see :meth:`RieszKernel.fk_weight` and
:meth:`DeltaKernel.fk_weight`).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .model import EngineError, power_cell_matrix, time_rate_exponent
from .streams import block_sizes, map_blocks, stream

BLOCK_SIZE = 2048


@dataclass
class BrownianEnsemble:
    """A batch of ensembles of ``n`` independent paths on ``[0, t]``.

    ``paths`` has shape (batch, n, steps + 1, d).
    """

    paths: np.ndarray
    t: float
    seed: int = 0
    block: int = 0

    @property
    def n(self):
        return self.paths.shape[1]

    @property
    def steps(self):
        return self.paths.shape[2] - 1

    @property
    def dt(self):
        return self.t / self.steps

    @property
    def d(self):
        return self.paths.shape[3]

    def midpoints(self):
        return 0.5 * (self.paths[:, :, :-1] + self.paths[:, :, 1:])


@dataclass
class MomentEstimate:
    """An estimated moment ``E |u|^p`` and its Monte Carlo error."""

    value: float
    log_value: float
    stderr: float
    samples: int
    engine: str
    order: float
    params: dict = field(default_factory=dict)
    heavy_tail: bool = False

    @property
    def norm(self):
        """``(E |u|^p)^(1/p)``."""
        return math.exp(self.log_value / self.order) if self.value > 0 else 0.0

    @property
    def norm_stderr(self):
        # delta method on x -> x^(1/p)
        if self.value <= 0:
            return 0.0
        return self.norm * self.stderr / (self.order * self.value)


def sample_ensemble(n, t, steps, seed=0, block=0, batch=1, d=1, start=None):
    """Discretised Brownian paths from the counter-based stream ``(seed, block)``.

    Path ``j`` of every ensemble in the batch is drawn from lane ``j``, in
    step-major order, so runs that share ``dt`` share path prefixes and runs
    with different ``n`` share their common paths.
    """
    if n < 1 or steps < 1:
        raise ValueError("need n >= 1 and steps >= 1")
    dt = t / steps
    paths = np.zeros((batch, n, steps + 1, d))
    for j in range(n):
        z = stream(seed, block, j).standard_normal((steps, batch, d))
        paths[:, j, 1:] = np.cumsum(np.moveaxis(z, 0, 1), axis=1) * math.sqrt(dt)
    if start is not None:
        paths += np.asarray(start, dtype=float).reshape(1, 1, 1, d)
    return BrownianEnsemble(paths, float(t), seed, block)


def time_cell_weights(t, steps, alpha0):
    edges = np.linspace(0.0, t, steps + 1)
    return power_cell_matrix(edges, edges, alpha0)


def _kernel_args(model, dt):
    spatial = model.spatial
    if spatial.tag == "delta":
        return kernels.DELTA, 1.0, 0.0, 0.0, 0.5 * dt
    floor = math.sqrt(dt) / 8.0
    return kernels.RIESZ, spatial.alpha, floor, spatial.ball_average(floor), 0.0


def pair_energies(ens, model, ct=None, backend=None):
    """Energies of every pair, shape (batch, n (n - 1) / 2), without the ``lam`` factor."""
    if ens.d != model.d:
        raise ValueError(f"ensemble dimension {ens.d} does not match model dimension {model.d}")
    if ct is None:
        ct = time_cell_weights(ens.t, ens.steps, model.alpha0)
    kind, alpha, floor, ball, var = _kernel_args(model, ens.dt)
    out = kernels.pair_energy_batch(ens.midpoints(), ct, kind, alpha, floor, ball, var, backend)
    if not np.all(np.isfinite(out)):
        raise EngineError("non-finite pair energy (paths or kernel parameters are invalid)")
    return out


def pair_energy(ens, model, ct=None, backend=None):
    """Total pair energy of each ensemble in the batch, shape (batch,)."""
    return pair_energies(ens, model, ct, backend).sum(axis=1)


def energies(n, t, model, samples, steps, seed=0, workers=None, start=None, backend=None,
             block_size=BLOCK_SIZE):
    """Per-sample pair energies for ``samples`` independent ensembles."""
    ct = time_cell_weights(t, steps, model.alpha0)

    def run(block, size):
        ens = sample_ensemble(n, t, steps, seed, block, size, model.d, start)
        return pair_energy(ens, model, ct, backend)

    return np.concatenate(map_blocks(run, block_sizes(samples, block_size), workers))


def summarize_exponential(log_weights, engine, order, params):
    """Mean of ``exp(log_weights)`` in log-sum-exp form with its standard error."""
    lw = np.asarray(log_weights, dtype=float)
    S = lw.size
    top = lw.max()
    w = np.exp(lw - top)
    mean_scaled = w.mean()
    log_value = top + math.log(mean_scaled)
    sd_scaled = w.std(ddof=1) if S > 1 else 0.0
    value = math.exp(log_value) if log_value < 700 else math.inf
    stderr = math.exp(top) * sd_scaled / math.sqrt(S) if top < 700 else math.inf
    k = max(1, S // 100)
    heavy = bool(np.sort(w)[-k:].sum() > 0.5 * w.sum()) if S >= 100 else False
    return MomentEstimate(value, log_value, stderr, S, engine, order, dict(params), heavy)


def estimate_moment(n, t, model, samples, steps, seed=0, workers=None, start=None,
                    backend=None):
    """Estimate ``E u^n(t, x)`` for integer ``n >= 1``."""
    if int(n) != n or n < 1:
        raise ValueError(f"the Feynman-Kac engine needs an integer n >= 1, got {n}")
    params = {"n": n, "t": t, "lambda": model.lam, "steps": steps, "seed": seed}
    if n == 1 or model.lam == 0:
        return MomentEstimate(1.0, 0.0, 0.0, samples, "fk", float(n), params)
    e = energies(n, t, model, samples, steps, seed, workers, start, backend)
    est = summarize_exponential(model.lam * e, "fk", float(n), params)
    if est.heavy_tail:
        warnings.warn(f"heavy-tailed weights at n={n}, t={t}, lambda={model.lam}: "
                      "top 1% of samples carry most of the mean", RuntimeWarning, stacklevel=2)
    return est


def normalized_log_moment(n, t, model, samples, steps, seed=0, workers=None, backend=None):
    """``t**-(4 - alpha - 2 alpha0)/(2 - alpha) * log E u^n`` and its error bar."""
    est = estimate_moment(n, t, model, samples, steps, seed, workers, backend=backend)
    scale = t ** -time_rate_exponent(model)
    err = est.stderr / est.value if est.value > 0 else math.inf
    return est.log_value * scale, err * scale


def moment_trend(n, ts, model, samples, steps_per_unit, seed=0, workers=None):
    """Normalised log-moments over increasing horizons (a report, no limit asserted).

    Returns rows ``(t, value, err)`` plus the spread of the last two values
    relative to their mean as a crude stabilisation indicator.
    """
    rows = []
    for t in ts:
        steps = max(1, int(round(steps_per_unit * t)))
        v, e = normalized_log_moment(n, t, model, samples, steps, seed, workers)
        rows.append((t, v, e))
    spread = math.nan
    if len(rows) >= 2 and rows[-1][1] + rows[-2][1] != 0:
        spread = abs(rows[-1][1] - rows[-2][1]) / abs(0.5 * (rows[-1][1] + rows[-2][1]))
    return rows, spread


def local_time_energy(ens, epsilon, backend=None):
    """Time-diagonal occupation approximation of the mutual local time (``d = 1``).

    ``sum_{j<k} (1 / 2 eps) sum_m 1{|B_j - B_k|(s_m) <= eps} dt`` over the
    right endpoints ``s_m`` of the steps; shape (batch,).
    """
    if ens.d != 1:
        raise ValueError("local time energy is implemented for d = 1 only")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    return kernels.occupation_batch(ens.paths[:, :, 1:, 0], epsilon, ens.dt, backend)


def estimate_local_time_moment(n, t, lam, epsilon, samples, steps, seed=0, workers=None):
    """``E exp(lam * local_time_energy)``, the white-noise analogue of :func:`estimate_moment`."""

    def run(block, size):
        ens = sample_ensemble(n, t, steps, seed, block, size, 1)
        return local_time_energy(ens, epsilon)

    e = np.concatenate(map_blocks(run, block_sizes(samples, BLOCK_SIZE), workers))
    params = {"n": n, "t": t, "lambda": lam, "epsilon": epsilon, "steps": steps, "seed": seed}
    return summarize_exponential(lam * e, "local-time", float(n), params)


def two_point_local_time_moment(t, lam):
    """Exact ``E exp(lam * L)`` for the mutual local time ``L`` of two paths at 0.

    ``L`` has the law of ``sqrt(t/2) |Z|``, so the expectation is
    ``2 exp(lam^2 t / 4) Phi(lam sqrt(t / 2))``.
    """
    c = lam * math.sqrt(t / 2.0)
    return math.exp(0.5 * c * c) * math.erfc(-c / math.sqrt(2.0))


def richardson(coarse, fine, order=1.0, ratio=2.0):
    """Richardson extrapolation of two estimates whose error is ``O(h**order)``."""
    f = ratio ** order
    return (f * fine - coarse) / (f - 1.0)
