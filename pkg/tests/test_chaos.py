import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pamlab import chaos as ch
from pamlab.model import CovarianceModel, EngineError, ResourceCapError

from oracles import brute_second_moment, heat_level_one, hermite_wick

MODELS = {
    "delta": CovarianceModel(0.5, 1.0, 1, 0.7, "delta"),
    "riesz": CovarianceModel(0.5, 0.6, 1, 0.7, "riesz"),
}


@pytest.fixture(scope="module", params=sorted(MODELS))
def tiny(request):
    grid = ch.SpaceTimeGrid(0.25, 3, 4, 1.0)
    return ch.build_kernels(grid, MODELS[request.param], K=3)


def test_grid_validation_and_edges():
    g = ch.SpaceTimeGrid(1.0, 4, 8, 2.0, grading=2.0)
    e = g.time_edges
    assert e[0] == 0.0 and e[-1] == 1.0 and np.all(np.diff(e) > 0)
    assert np.all(np.diff(np.diff(e)) < 0)  # slices shrink towards t
    assert g.size == 32 and g.dx == 0.5
    for bad in [dict(x=0.1), dict(x=3.0), dict(grading=0.5), dict(M=0)]:
        with pytest.raises(ValueError):
            ch.SpaceTimeGrid(**{**dict(t=1.0, M=4, N=8, L=2.0), **bad})


def test_psd_factor():
    a = np.random.default_rng(0).normal(size=(5, 5))
    mat = a @ a.T
    f = ch.psd_factor(mat)
    assert np.allclose(f @ f.T, mat)
    with pytest.raises(EngineError, match="condition"):
        ch.psd_factor(np.diag([1.0, -0.5]))


@pytest.mark.parametrize("k", [1, 2])
def test_level_second_moment_matches_brute_force(tiny, k):
    ref = brute_second_moment(tiny.kernel(k), tiny.covariance(), k)
    assert ch.level_second_moment(tiny, k) == pytest.approx(ref, rel=1e-10)


def _tensor_second_moment(h, C, k):
    hc = h
    for axis in range(k):
        hc = np.moveaxis(np.tensordot(hc, C, axes=([axis], [0])), -1, axis)
    return sum(float(np.sum(hc * np.transpose(h, p))) for p in itertools.permutations(range(k)))


@pytest.mark.parametrize("k", [2, 3])
def test_level_second_moment_matches_dense_tensors(tiny, k):
    ref = _tensor_second_moment(tiny.kernel(k), tiny.covariance(), k)
    assert ch.level_second_moment(tiny, k) == pytest.approx(ref, rel=1e-10)


def test_tail_proxy_bounds_next_level():
    grid = ch.SpaceTimeGrid(0.25, 2, 4, 1.0)
    sol4 = ch.build_kernels(grid, MODELS["delta"], K=4)
    level4 = sol4.scales[4] ** 2 * _tensor_second_moment(sol4.kernel(4), sol4.covariance(), 4)
    ident = ch.level_second_moment(sol4, 4, perms=[(0, 1, 2, 3)])
    assert level4 <= 24 * sol4.lam ** 4 * ident * (1 + 1e-12)
    sol3 = ch.build_kernels(grid, MODELS["delta"], K=3)
    assert 0 < level4 <= ch.tail_proxy(sol3)


def test_dense_tensor_matches_chain(tiny):
    h2 = tiny.kernel(2)
    assert np.allclose(h2, tiny.transfer.T * tiny.head[None, :])
    assert np.allclose(tiny.coefficients(2), tiny.lam * h2)


def test_resource_caps():
    grid = ch.SpaceTimeGrid(0.25, 4, 128, 1.0)
    with pytest.raises(ResourceCapError):
        ch.build_kernels(grid, MODELS["delta"], K=3, matrix_cap=1000)
    sol = ch.build_kernels(grid, MODELS["delta"], K=3)
    with pytest.raises(ResourceCapError):
        sol.kernel(3)
    with pytest.raises(ResourceCapError):
        ch.second_moment_exact(ch.build_kernels(grid, MODELS["delta"], K=4))


def test_wick_products_against_recursion(tiny):
    C = tiny.covariance()
    xi = ch.sample_cells(tiny, 1, 0, 7)
    ctx = ch.WickContext(C)
    for cells in [(0,), (2, 5), (1, 1), (3, 3, 3), (0, 4, 4, 7), (1, 2, 3, 4, 5)]:
        assert np.allclose(ch.wick_product(cells, xi.T, ctx), hermite_wick(cells, xi, C))
    with pytest.raises(ValueError):
        ch.wick_product(tuple(range(6)), xi.T, ctx)


def test_partial_pairings_count():
    # telephone numbers
    assert [len(list(ch.partial_pairings(range(n)))) for n in range(7)] == [1, 1, 2, 4, 10, 26, 76]


def test_components_match_explicit_wick_sum(tiny):
    C = tiny.covariance()
    ctx = ch.WickContext(C)
    xi = ch.sample_cells(tiny, 1, 0, 3)
    comps = ch.chaos_components(tiny, xi)
    for k in (1, 2, 3):
        h = tiny.kernel(k)
        idx = np.argwhere(h != 0)
        val = sum(h[tuple(a)] * ch.wick_product(tuple(a), xi.T, ctx) for a in idx)
        assert np.allclose(comps[:, k], val, rtol=1e-10, atol=1e-12)


def test_sampled_components_are_centred_and_orthogonal():
    grid = ch.SpaceTimeGrid(0.25, 4, 16, 1.5)
    sol = ch.build_kernels(grid, MODELS["delta"], K=3)
    comps = ch.sample_components(sol, 60000, seed=2)
    n = comps.shape[0]
    for k in (1, 2, 3):
        var = ch.level_second_moment(sol, k)
        assert abs(comps[:, k].mean()) < 5 * math.sqrt(var / n)
        second = comps[:, k] ** 2
        assert abs(second.mean() - var) < 5 * second.std() / math.sqrt(n)
    cross = comps[:, 1] * comps[:, 2]
    assert abs(cross.mean()) < 5 * cross.std() / math.sqrt(n)


def test_workers_do_not_change_samples():
    grid = ch.SpaceTimeGrid(0.25, 4, 16, 1.5)
    sol = ch.build_kernels(grid, MODELS["riesz"], K=3)
    a = ch.sample_components(sol, 9000, seed=1, workers=1, block_size=2048)
    b = ch.sample_components(sol, 9000, seed=1, workers=3, block_size=2048)
    assert np.array_equal(a, b)


def test_level_one_against_continuum():
    grid = ch.SpaceTimeGrid(0.25, 16, 128, 2.0, grading=2.0)
    sol = ch.build_kernels(grid, MODELS["delta"], K=1)
    ref = heat_level_one(0.5, 0.25)
    assert ch.level_second_moment(sol, 1) == pytest.approx(ref, rel=5e-3)


def test_level_one_time_error_shrinks_with_refinement():
    ref = heat_level_one(0.5, 0.25)
    errs = []
    for M in (4, 8, 16):
        sol = ch.build_kernels(ch.SpaceTimeGrid(0.25, M, 128, 2.0), MODELS["delta"], K=1)
        errs.append(abs(ch.level_second_moment(sol, 1) - ref))
    assert errs[0] > errs[1] > errs[2]


def test_mehler_identity_exact():
    grid = ch.SpaceTimeGrid(0.25, 4, 16, 1.5)
    sol3 = ch.build_kernels(grid, MODELS["delta"].with_lambda(3.0), K=3)
    sol1 = ch.build_kernels(grid, MODELS["delta"].with_lambda(1.0), K=3)
    reduced = ch.mehler_action(sol3, 0.5 * math.log(3.0))
    for k in range(4):
        a, b = reduced.coefficients(k), sol1.coefficients(k)
        assert np.max(np.abs(a - b)) <= 1e-12 * np.max(np.abs(b))


@settings(max_examples=30, deadline=None)
@given(t1=st.floats(0, 3), t2=st.floats(0, 3), lam=st.floats(0.01, 5))
def test_mehler_semigroup_property(t1, t2, lam):
    grid = ch.SpaceTimeGrid(0.25, 2, 4, 1.0)
    sol = ch.build_kernels(grid, MODELS["delta"].with_lambda(lam), K=3)
    a = ch.mehler_action(ch.mehler_action(sol, t1), t2).scales
    b = ch.mehler_action(sol, t1 + t2).scales
    assert np.allclose(a, b, rtol=1e-12)
    assert ch.mehler_action(sol, 0.0).scales.tolist() == sol.scales.tolist()
    assert ch.mehler_action(sol, t1).lam == pytest.approx(lam * math.exp(-2 * t1))


def test_mehler_rejects_negative_time(tiny):
    with pytest.raises(ValueError):
        ch.mehler_action(tiny, -0.1)


def test_second_moment_consistency(tiny):
    exact = ch.second_moment_exact(tiny)
    comps = ch.sample_components(tiny, 40000, seed=5)
    est = ch.estimate_Lp(tiny, 2.0, 40000, components=comps)
    assert abs(est.value - exact) < 5 * est.stderr
    assert est.value == pytest.approx(np.mean(ch.sample_solution(tiny, ch.sample_cells(tiny, 5, 0, 4096)) ** 2), rel=0.2)


def test_zero_intensity_is_deterministic():
    grid = ch.SpaceTimeGrid(0.25, 2, 4, 1.0)
    sol = ch.build_kernels(grid, MODELS["delta"].with_lambda(0.0), K=3)
    assert ch.second_moment_exact(sol) == 1.0
    assert ch.estimate_Lp(sol, 3.0, 100).value == 1.0
    cmp_ = ch.hypercontractivity_test(grid, sol.model, 2.0, 4.0, 500, sol=sol)
    assert cmp_.lhs == cmp_.rhs == 1.0 and cmp_.margin == 0.0 and cmp_.passed


def test_hypercontractivity_small_run():
    grid = ch.SpaceTimeGrid(0.25, 4, 16, 1.5, grading=2.0)
    res = ch.hypercontractivity_test(grid, MODELS["delta"].with_lambda(0.5), 2.0, 4.0, 8000, seed=1)
    assert res.lam_reduced == pytest.approx(0.5 / 3)
    assert res.passed
    with pytest.raises(ValueError):
        ch.hypercontractivity_test(grid, MODELS["delta"], 3.0, 2.0, 10)


def test_estimate_lp_rejects_small_p(tiny):
    with pytest.raises(ValueError):
        ch.estimate_Lp(tiny, 0.5, 10)
