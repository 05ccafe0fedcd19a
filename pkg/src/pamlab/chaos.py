"""Truncated Wiener-chaos solution of the mild equation on a finite noise field.

The noise is replaced by the Gaussian vector of its integrals over
space-time cells ``a = (time slice, spatial cell)``,
``xi_a = W(cell a)``, with covariance ``C = C_time (x) C_space``.  Iterating
the mild equation gives

    u = sum_k lam^(k/2) sum_{a_1 < ... < a_k} h_k(a) :xi_{a_1} ... xi_{a_k}:

where ``a_1 < ... < a_k`` means strictly increasing time slices and
``:...:`` is the Wick (normal-ordered) product.  The kernels factor as a
chain

    h_k(a) = head(a_k) T(a_k, a_{k-1}) ... T(a_2, a_1)

with ``head`` the heat kernel from the target point averaged over a cell
and ``T`` the heat kernel averaged over pairs of cells.  Only the chain
factors are stored; dense tensors are materialised on request for small
grids.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtr

from .feynman_kac import MomentEstimate
from .model import EngineError, ResourceCapError, power_cell_matrix
from .streams import block_sizes, map_blocks, stream

MAX_WICK_ORDER = 5
MAX_SAMPLING_ORDER = 3
DEFAULT_MATRIX_CAP = 6e7   # entries of one D x D matrix
DEFAULT_TENSOR_CAP = 2e7   # entries of a materialised coefficient tensor
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Time slices on ``[0, t]`` and ``N**d`` cubes covering ``[-L, L]**d``.

    ``grading > 1`` clusters the time slices towards ``t`` (edges
    ``t (1 - (1 - i/M)**grading)``), where the heat kernel from the target
    point is singular; ``grading = 1`` is the uniform grid.
    """

    t: float
    M: int
    N: int
    L: float
    d: int = 1
    x: float = 0.0
    grading: float = 1.0

    def __post_init__(self):
        if self.M < 1 or self.N < 2:
            raise ValueError("need M >= 1 time slices and N >= 2 spatial cells")
        if not (self.t > 0 and self.L > 0 and self.grading >= 1):
            raise ValueError("need t > 0, L > 0 and grading >= 1")
        if not -self.L < self.x < self.L:
            raise ValueError(f"target point {self.x} is outside the box")
        half = (self.x + self.L) / (0.5 * self.dx)
        if abs(half - round(half)) > 1e-9:
            raise ValueError("target point must be a cell edge or a cell centre")

    @property
    def dx(self):
        return 2.0 * self.L / self.N

    @property
    def time_edges(self):
        i = np.arange(self.M + 1) / self.M
        e = self.t * (1.0 - (1.0 - i) ** self.grading)
        e[-1] = self.t
        return e

    @property
    def space_edges(self):
        return np.linspace(-self.L, self.L, self.N + 1)

    @property
    def cells(self):
        return self.N ** self.d

    @property
    def size(self):
        """Number of space-time cells ``D = M N**d``."""
        return self.M * self.cells


@dataclass
class NoiseField:
    """Covariance of the cell integrals of the noise, in Kronecker form."""

    temporal: np.ndarray
    spatial: np.ndarray
    temporal_factor: np.ndarray
    spatial_factor: np.ndarray

    def full(self):
        return np.kron(self.temporal, self.spatial)

    def sample(self, z):
        """Map standard normals of shape (batch, M, cells) to cell integrals."""
        return np.einsum("ij,bjn,mn->bim", self.temporal_factor, z, self.spatial_factor, optimize=True)


def psd_factor(mat, rel_floor=1e-10, name="covariance"):
    """Symmetric square root ``F`` with ``F F^T = mat`` after flooring tiny negative eigenvalues."""
    sym = 0.5 * (mat + mat.T)
    w, V = np.linalg.eigh(sym)
    top = w.max()
    if top <= 0 or w.min() < -rel_floor * top:
        cond = top / max(abs(w).min(), 1e-300)
        raise EngineError(f"{name} matrix is not positive semidefinite "
                          f"(eigenvalues in [{w.min():.3e}, {top:.3e}], condition ~ {cond:.3e})")
    return V * np.sqrt(np.clip(w, 0.0, None))


def build_noise(grid, model):
    temporal = power_cell_matrix(grid.time_edges, grid.time_edges, model.alpha0)
    spatial = model.spatial.cell_matrix(grid.space_edges)
    return NoiseField(temporal, spatial, psd_factor(temporal, name="temporal"),
                      psd_factor(spatial, name="spatial"))


# heat kernel cell averages ------------------------------------------------

def _cell_average_from_point(tau, edges, x):
    """Average over each cell of the 1-d heat kernel ``p_tau(x - y)``; shape (len(tau), N)."""
    s = np.sqrt(np.asarray(tau, dtype=float))[:, None]
    lo = (edges[None, :-1] - x) / s
    hi = (edges[None, 1:] - x) / s
    # difference on the side where both tails are small keeps precision
    left = ndtr(hi) - ndtr(lo)
    right = ndtr(-lo) - ndtr(-hi)
    out = np.where(lo > 0, right, left)
    return out / np.diff(edges)[None, :]


def _psi(z, s):
    """Second antiderivative of the centred Gaussian density with std ``s``."""
    r = z / s
    return z * ndtr(r) + s * np.exp(-0.5 * r * r) / math.sqrt(2.0 * math.pi)


def _cell_pair_average(tau, dx, N):
    """Average of ``p_tau(y' - y)`` over pairs of cells, as Toeplitz offsets ``-(N-1)..N-1``."""
    s = np.sqrt(np.asarray(tau, dtype=float))[:, None]
    k = np.arange(-(N - 1), N)[None, :] * dx
    val = _psi(k + dx, s) - 2.0 * _psi(k, s) + _psi(k - dx, s)
    return val / (dx * dx)


def _toeplitz_index(N):
    i = np.arange(N)
    return (i[:, None] - i[None, :]) + (N - 1)


def _interval_rule(lo, hi, from_zero):
    """Gauss-Legendre nodes/weights on ``[lo, hi]``; square-root clustering at a zero endpoint."""
    z = 0.5 * (_GL_NODES + 1.0)
    w = 0.5 * _GL_WEIGHTS
    if from_zero:
        return lo + (hi - lo) * z * z, w * 2.0 * z * (hi - lo)
    return lo + (hi - lo) * z, w * (hi - lo)


def _difference_rule(a, b, a2, b2):
    """Quadrature for the law of ``s' - s`` with ``s ~ U[a, b]``, ``s' ~ U[a2, b2]``, ``a2 >= b``."""
    h, h2 = b - a, b2 - a2
    br = sorted({a2 - b, a2 - a, b2 - b, b2 - a})
    nodes, weights = [], []
    for lo, hi in zip(br[:-1], br[1:]):
        if hi - lo <= 0:
            continue
        u, w = _interval_rule(lo, hi, from_zero=lo <= 1e-15 * max(1.0, hi))
        overlap = np.minimum(b, b2 - u) - np.maximum(a, a2 - u)
        nodes.append(u)
        weights.append(w * np.clip(overlap, 0.0, None) / (h * h2))
    return np.concatenate(nodes), np.concatenate(weights)


def _kron_rows(factors):
    """Row-wise Kronecker product of per-coordinate arrays (C order over coordinates)."""
    out = factors[0]
    for f in factors[1:]:
        out = (out[..., :, None] * f[..., None, :]).reshape(*out.shape[:-1], -1)
    return out


def heat_head(grid):
    """``head[i, n]``: average of ``p_{t-s}(x - y)`` over slice ``i`` and cell ``n``."""
    e = grid.time_edges
    edges = grid.space_edges
    head = np.zeros((grid.M, grid.cells))
    for i in range(grid.M):
        lo, hi = grid.t - e[i + 1], grid.t - e[i]
        tau, w = _interval_rule(lo, hi, from_zero=(i == grid.M - 1))
        a1 = _cell_average_from_point(tau, edges, grid.x)
        vals = _kron_rows([a1] * grid.d)
        head[i] = w @ vals / (hi - lo)
    return head


def heat_transfer(grid):
    """Block matrix ``T[(i', n'), (i, n)]`` of averaged heat kernels, zero unless ``i' >= i``.

    Each block is the average of ``p_{s'-s}(y' - y)`` over the part of the
    cell pair where ``s < s'``, so diagonal blocks carry half the mass of
    their slice square.
    """
    e = grid.time_edges
    M, N, d = grid.M, grid.N, grid.d
    idx = _toeplitz_index(N)
    T = np.zeros((M, grid.cells, M, grid.cells))
    for i2 in range(M):
        for i in range(i2 + 1):
            if i == i2:
                # ordered pairs s < s' inside one slice: weight (h - u) / h^2 on [0, h]
                h = e[i + 1] - e[i]
                u, w = _interval_rule(0.0, h, from_zero=True)
                w = w * (h - u) / (h * h)
            else:
                u, w = _difference_rule(e[i], e[i + 1], e[i2], e[i2 + 1])
            offsets = _cell_pair_average(u, grid.dx, N)      # (Q, 2N-1)
            per_coord = offsets[:, idx]                        # (Q, N, N)
            if d == 1:
                block = np.tensordot(w, per_coord, axes=1)
            else:
                q = per_coord
                full = q
                for _ in range(d - 1):
                    full = np.einsum("qab,qcd->qacbd", full, q).reshape(len(w), full.shape[1] * N, -1)
                block = np.tensordot(w, full, axes=1)
            T[i2, :, i, :] = block
    D = grid.size
    return T.reshape(D, D)


@dataclass
class ChaosSolution:
    """Chain representation of the truncated chaos expansion.

    ``scales[k]`` multiplies level ``k``; a fresh build has
    ``scales[k] = lam**(k/2)``.
    """

    grid: SpaceTimeGrid
    model: object
    K: int
    scales: np.ndarray
    head: np.ndarray      # (D,)
    transfer: np.ndarray  # (D, D)
    noise: NoiseField
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def lam(self):
        """Effective intensity ``scales[1]**2``."""
        return float(self.scales[1] ** 2) if self.K >= 1 else 0.0

    def covariance(self):
        if "C" not in self._cache:
            self._cache["C"] = self.noise.full()
        return self._cache["C"]

    def kernel(self, k):
        """Dense level-``k`` kernel ``h_k`` over ``D**k`` cell tuples (without the level scale)."""
        if k == 0:
            return np.ones(())
        D = self.grid.size
        if D ** k > DEFAULT_TENSOR_CAP:
            raise ResourceCapError(f"level-{k} tensor has {D ** k:.3e} entries (cap {DEFAULT_TENSOR_CAP:.0e})")
        h = self.head
        # h[a_k, ..., a_1] built outward from the head, then reversed to (a_1, ..., a_k)
        for _ in range(k - 1):
            h = h[..., None] * self.transfer.reshape((1,) * (h.ndim - 1) + (D, D))
        return np.transpose(h, tuple(range(k - 1, -1, -1)))

    def coefficients(self, k):
        """Level-``k`` coefficient tensor ``scales[k] * h_k``."""
        return self.scales[k] * self.kernel(k)


def build_kernels(grid, model, K=3, matrix_cap=DEFAULT_MATRIX_CAP):
    if K < 0:
        raise ValueError("truncation level must be >= 0")
    if grid.d != model.d:
        raise ValueError("grid and model dimensions differ")
    D = grid.size
    if D * D > matrix_cap:
        raise ResourceCapError(f"transfer matrix needs {D * D:.3e} entries "
                               f"(~{8 * D * D / 2**30:.1f} GiB; cap {matrix_cap:.0e})")
    head = heat_head(grid).reshape(-1)
    transfer = heat_transfer(grid) if K >= 2 else np.zeros((D, D))
    scales = model.lam ** (0.5 * np.arange(K + 1))
    return ChaosSolution(grid, model, K, scales, head, transfer, build_noise(grid, model))


def mehler_action(sol, tau):
    """Ornstein-Uhlenbeck semigroup: level ``k`` is multiplied by ``exp(-k tau)``."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    k = np.arange(sol.K + 1)
    return replace(sol, scales=sol.scales * np.exp(-k * tau), _cache=sol._cache)


# Wick products ------------------------------------------------------------

@dataclass
class WickContext:
    """Covariance of the sampled cells, used to normal-order products."""

    cov: np.ndarray


def partial_pairings(items):
    """All sets of disjoint pairs drawn from ``items`` (including the empty set)."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for p in partial_pairings(rest):
        yield p
    for j, other in enumerate(rest):
        for p in partial_pairings(rest[:j] + rest[j + 1:]):
            yield [(first, other)] + p


def wick_product(cells, values, ctx):
    """Normal-ordered product ``:xi_{c_1} ... xi_{c_k}:`` of jointly Gaussian cells.

    ``values`` holds sampled cell values (indexable by cell id); it may carry
    a trailing batch axis.
    """
    cells = list(cells)
    if len(cells) > MAX_WICK_ORDER:
        raise ValueError(f"Wick products are limited to order {MAX_WICK_ORDER}")
    total = 0.0
    for pairing in partial_pairings(range(len(cells))):
        paired = {i for pr in pairing for i in pr}
        term = (-1.0) ** len(pairing)
        for i, j in pairing:
            term = term * ctx.cov[cells[i], cells[j]]
        for i in range(len(cells)):
            if i not in paired:
                term = term * values[cells[i]]
        total = total + term
    return total


# second moments by network contraction ---------------------------------------

def _contract_two_chains(head, transfer, cov, k, perm):
    """``sum_{a,b} h_k(a) h_k(b) prod_i C(a_i, b_perm(i))`` for chain kernels.

    The graph (two paths joined by the matching ``perm``) is reduced by
    eliminating vertices of degree <= 2, so only D x D matrices appear.
    """
    nodes = [("a", i) for i in range(k)] + [("b", i) for i in range(k)]
    weight = {n: None for n in nodes}
    weight[("a", k - 1)] = head
    weight[("b", k - 1)] = head
    edges = {}

    def add(u, w, mat):
        # mat is indexed [u, w]
        if (w, u) in edges:
            u, w, mat = w, u, mat.T
        if (u, w) in edges:
            edges[(u, w)] = edges[(u, w)] * mat
        else:
            edges[(u, w)] = mat

    for side in "ab":
        for i in range(k - 1):
            add((side, i + 1), (side, i), transfer)
    for i in range(k):
        add(("a", i), ("b", perm[i]), cov)

    def incident(n):
        out = []
        for (u, w), mat in edges.items():
            if u == n:
                out.append((w, mat, (u, w)))
            elif w == n:
                out.append((u, mat.T, (u, w)))
        return out

    alive = set(nodes)
    total = 1.0
    while alive:
        n = min((m for m in alive), key=lambda m: (len(incident(m)), m))
        inc = incident(n)
        wv = weight[n]
        for _, _, key in inc:
            del edges[key]
        alive.discard(n)
        if len(inc) == 0:
            total *= wv.sum() if wv is not None else 1.0
        elif len(inc) == 1:
            (m, mat, _), = inc
            vec = mat.T @ wv if wv is not None else mat.sum(axis=0)
            weight[m] = vec if weight[m] is None else weight[m] * vec
        elif len(inc) == 2:
            (m1, mat1, _), (m2, mat2, _) = inc
            left = mat1.T if wv is None else mat1.T * wv[None, :]
            add(m1, m2, left @ mat2)
        else:
            raise EngineError("contraction graph is not series-parallel")
    return float(total)


def level_second_moment(sol, k, perms=None):
    """``E[U_k^2]`` for the unscaled level-``k`` component (sum over pairings)."""
    if k == 0:
        return 1.0
    perms = list(itertools.permutations(range(k))) if perms is None else perms
    C = sol.covariance()
    return sum(_contract_two_chains(sol.head, sol.transfer, C, k, p) for p in perms)


def second_moment_exact(sol, max_level=3):
    """``E u^2 = sum_k scales[k]^2 E[U_k^2]``; cross-level terms vanish."""
    if sol.K > max_level:
        raise ResourceCapError(f"exact second moment limited to K <= {max_level} (got K={sol.K})")
    return sum(sol.scales[k] ** 2 * level_second_moment(sol, k) for k in range(sol.K + 1))


def tail_proxy(sol):
    """Upper bound on the first omitted level's contribution to ``E u^2``.

    Every pairing term is bounded by the identity pairing (Cauchy-Schwarz in
    the ``C^{(x)k}`` inner product), so level ``K+1`` contributes at most
    ``(K+1)! lam^(K+1) E_id``.
    """
    k = sol.K + 1
    ident = _contract_two_chains(sol.head, sol.transfer, sol.covariance(), k, tuple(range(k)))
    return math.factorial(k) * sol.lam ** k * ident


# sampling ---------------------------------------------------------------------

def _sampling_vectors(sol):
    if "wick" in sol._cache:
        return sol._cache["wick"]
    v, T, C = sol.head, sol.transfer, sol.covariance()
    TC = T * C
    r = TC.sum(axis=1)                       # sum_{a1} T[a2,a1] C[a2,a1]
    vecs = {"c2": float(v @ r)}
    if sol.K >= 3:
        vecs["w12"] = v * (T @ r)
        vecs["w23"] = T.T @ (TC.T @ v)
        vecs["w13"] = (T * (C @ T.T)).T @ v
    sol._cache["wick"] = vecs
    return vecs


def chaos_components(sol, xi):
    """Unscaled components ``U_0 .. U_K`` for cell samples ``xi`` of shape (batch, D)."""
    if sol.K > MAX_SAMPLING_ORDER:
        raise ResourceCapError(f"sampling is implemented for K <= {MAX_SAMPLING_ORDER}")
    B = xi.shape[0]
    out = np.zeros((B, sol.K + 1))
    out[:, 0] = 1.0
    if sol.K >= 1:
        out[:, 1] = xi @ sol.head
    if sol.K >= 2:
        vecs = _sampling_vectors(sol)
        psi = xi @ sol.transfer.T            # psi[a2] = sum_{a1} T[a2,a1] xi[a1]
        phi2 = xi * psi
        out[:, 2] = phi2 @ sol.head - vecs["c2"]
    if sol.K >= 3:
        chain3 = (phi2 @ sol.transfer.T) * xi
        out[:, 3] = (chain3 @ sol.head - xi @ vecs["w12"] - xi @ vecs["w13"] - xi @ vecs["w23"])
    return out


def sample_cells(sol, seed, block, size):
    z = stream(seed, block).standard_normal((size, sol.grid.M, sol.grid.cells))
    return sol.noise.sample(z).reshape(size, -1)


def sample_solution(sol, xi):
    """Values of ``u`` for cell samples ``xi`` of shape (batch, D)."""
    return chaos_components(sol, xi) @ sol.scales


def sample_components(sol, samples, seed=0, workers=None, block_size=4096):
    """Component samples for ``samples`` noise draws, shape (samples, K + 1)."""

    def run(block, size):
        return chaos_components(sol, sample_cells(sol, seed, block, size))

    return np.concatenate(map_blocks(run, block_sizes(samples, block_size), workers))


def lp_from_values(values, p, params, engine="chaos"):
    """``E |u|^p`` estimate with its standard error from sampled values of ``u``."""
    a = np.abs(np.asarray(values, dtype=float)) ** p
    mean = float(a.mean())
    se = float(a.std(ddof=1) / math.sqrt(a.size)) if a.size > 1 else 0.0
    log_value = math.log(mean) if mean > 0 else -math.inf
    return MomentEstimate(mean, log_value, se, a.size, engine, float(p), dict(params))


def estimate_Lp(sol, p, samples, seed=0, workers=None, components=None):
    """Monte Carlo estimate of ``E |u|^p`` (and the norm) for real ``p >= 1``."""
    if p < 1:
        raise ValueError("p must be >= 1")
    params = {"lambda": sol.lam, "K": sol.K, "seed": seed}
    if sol.K == 0 or np.all(sol.scales[1:] == 0):
        return MomentEstimate(1.0, 0.0, 0.0, samples, "chaos", float(p), params)
    if components is None:
        components = sample_components(sol, samples, seed, workers)
    return lp_from_values(components @ sol.scales, p, params)


@dataclass
class HyperComparison:
    p: float
    q: float
    lam: float
    lam_reduced: float
    lhs: float
    lhs_stderr: float
    rhs: float
    rhs_stderr: float

    @property
    def combined_stderr(self):
        return math.hypot(self.lhs_stderr, self.rhs_stderr)

    @property
    def margin(self):
        """``rhs - lhs``; nonnegative when the inequality holds."""
        return self.rhs - self.lhs

    @property
    def passed(self):
        return self.lhs <= self.rhs + 2.0 * self.combined_stderr


def compare_norms(sol, p, q, components):
    """``||u_{(p-1) lam/(q-1)}||_q`` against ``||u_lam||_p`` on shared noise samples."""
    from .model import hypercontract_map

    tau, factor = hypercontract_map(p, q)
    reduced = mehler_action(sol, tau)
    lhs = lp_from_values(components @ reduced.scales, q, {})
    rhs = lp_from_values(components @ sol.scales, p, {})
    if sol.lam == 0:
        return HyperComparison(p, q, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0)
    return HyperComparison(p, q, sol.lam, sol.lam * factor, lhs.norm, lhs.norm_stderr,
                           rhs.norm, rhs.norm_stderr)


def hypercontractivity_test(grid, model, p, q, samples, seed=0, K=3, workers=None, sol=None):
    """Test ``||u_{(p-1) lam/(q-1)}(t,x)||_q <= ||u_lam(t,x)||_p`` on one grid."""
    if not q >= p > 1:
        raise ValueError("need q >= p > 1")
    sol = build_kernels(grid, model, K) if sol is None else sol
    comps = sample_components(sol, samples, seed, workers)
    return compare_norms(sol, p, q, comps)
