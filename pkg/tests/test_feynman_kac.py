import math
import warnings

import numpy as np
import pytest

from pamlab import feynman_kac as fk
from pamlab.model import CovarianceModel, EngineError, power_cell_matrix

from oracles import brute_pair_energy

DELTA = CovarianceModel(0.5, 1.0, 1, 0.5, "delta")
RIESZ = CovarianceModel(0.4, 0.6, 1, 0.5, "riesz")


def test_sample_ensemble_shapes_and_prefix_sharing():
    a = fk.sample_ensemble(2, 1.0, 8, seed=3, batch=4)
    b = fk.sample_ensemble(3, 1.0, 8, seed=3, batch=4)
    assert a.paths.shape == (4, 2, 9, 1)
    assert np.all(a.paths[:, :, 0] == 0)
    # adding a path does not change the others
    assert np.array_equal(a.paths, b.paths[:, :2])
    c = fk.sample_ensemble(2, 2.0, 16, seed=3, batch=4)
    # same dt: the first eight steps coincide
    assert np.allclose(c.paths[:, :, :9], a.paths)
    assert a.dt == 0.125 and a.n == 2 and a.steps == 8


def test_brownian_increments_have_unit_rate():
    ens = fk.sample_ensemble(1, 1.0, 4, seed=0, batch=50000)
    end = ens.paths[:, 0, -1, 0]
    assert abs(end.var() - 1.0) < 0.03
    assert abs(end.mean()) < 0.02


@pytest.mark.parametrize("model", [DELTA, RIESZ], ids=["delta", "riesz"])
def test_pair_energy_matches_brute_force(model):
    ens = fk.sample_ensemble(3, 0.5, 5, seed=2, batch=2)
    ct = power_cell_matrix(np.linspace(0, 0.5, 6), np.linspace(0, 0.5, 6), model.alpha0)
    dt = ens.dt
    spatial = lambda z: float(model.spatial.fk_weight(np.atleast_1d(z), dt)[0])
    ref = brute_pair_energy(ens.midpoints(), ct, spatial)
    for backend in ("python", None):
        assert np.allclose(fk.pair_energy(ens, model, backend=backend), ref, rtol=1e-12)


def test_riesz_floor_near_origin():
    k = RIESZ.spatial
    w = k.fk_weight(np.array([0.0, 1e-9, 2.0]), 0.04)
    assert w[0] == w[1] == pytest.approx(k.ball_average(0.2 / 8))
    assert w[2] == pytest.approx(2.0 ** -0.6)


def test_trivial_moments_are_one():
    for n, model in [(1, DELTA), (3, DELTA.with_lambda(0.0))]:
        est = fk.estimate_moment(n, 0.5, model, 100, 8)
        assert est.value == 1.0 and est.stderr == 0.0 and est.log_value == 0.0
    with pytest.raises(ValueError):
        fk.estimate_moment(2.5, 0.5, DELTA, 100, 8)


def test_deterministic_in_seed_and_workers():
    a = fk.estimate_moment(2, 0.25, DELTA, 5000, 16, seed=4, workers=1)
    b = fk.estimate_moment(2, 0.25, DELTA, 5000, 16, seed=4, workers=3)
    c = fk.estimate_moment(2, 0.25, DELTA, 5000, 16, seed=5)
    assert a.value == b.value and a.stderr == b.stderr
    assert a.value != c.value


def test_energies_monotone_samplewise():
    # energies are nonnegative, so weights grow with lambda and with t
    e1 = fk.energies(3, 0.25, DELTA, 2000, 16, seed=1)
    e2 = fk.energies(3, 0.5, DELTA, 2000, 32, seed=1)
    assert np.all(e1 >= 0)
    assert np.all(e2 >= e1 - 1e-12)


def test_white_noise_two_point_oracle_by_simulation():
    exact = fk.two_point_local_time_moment(1.0, 1.0)
    assert exact == pytest.approx(2 * math.exp(0.25) * 0.7602499389, rel=1e-9)
    est = fk.estimate_local_time_moment(2, 1.0, 1.0, 0.03, 20000, 1000, seed=2)
    assert abs(est.value - exact) < 4 * est.stderr + 0.02 * exact


def test_local_time_energy_errors():
    ens = fk.sample_ensemble(2, 1.0, 4, d=2)
    with pytest.raises(ValueError):
        fk.local_time_energy(ens, 0.1)
    with pytest.raises(ValueError):
        fk.local_time_energy(fk.sample_ensemble(2, 1.0, 4), 0.0)


def test_summarize_exponential_matches_direct_mean():
    lw = np.random.default_rng(0).normal(size=1000)
    est = fk.summarize_exponential(lw, "x", 2.0, {})
    w = np.exp(lw)
    assert est.value == pytest.approx(w.mean(), rel=1e-12)
    assert est.stderr == pytest.approx(w.std(ddof=1) / math.sqrt(1000), rel=1e-12)
    assert est.norm == pytest.approx(math.sqrt(w.mean()))
    assert not est.heavy_tail


def test_heavy_tail_flag_and_warning():
    lw = np.zeros(1000)
    lw[0] = 50.0
    assert fk.summarize_exponential(lw, "x", 2.0, {}).heavy_tail
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        fk.estimate_moment(2, 2.0, DELTA.with_lambda(30.0), 2000, 8, seed=0)
    assert any("heavy-tailed" in str(w.message) for w in caught)


def test_non_finite_energy_is_an_engine_error():
    ens = fk.sample_ensemble(2, 0.25, 4, batch=2)
    ens.paths[0, 0, 2, 0] = np.nan
    with pytest.raises(EngineError):
        fk.pair_energy(ens, DELTA)


def test_normalized_log_moment_and_trend():
    v, e = fk.normalized_log_moment(2, 0.5, DELTA, 4000, 16, seed=1)
    est = fk.estimate_moment(2, 0.5, DELTA, 4000, 16, seed=1)
    assert v == pytest.approx(math.log(est.value) / 0.25)
    assert e > 0
    rows, spread = fk.moment_trend(2, [0.25, 0.5], DELTA, 2000, 32)
    assert [r[0] for r in rows] == [0.25, 0.5]
    assert spread >= 0


def test_richardson_removes_linear_error():
    exact = 2.0
    assert fk.richardson(exact + 0.2, exact + 0.1) == pytest.approx(exact)
    assert fk.richardson(exact + 0.4, exact + 0.1, order=2) == pytest.approx(exact)


def test_mean_energy_matches_exact_expectation():
    # midpoint differences have variance s + r - dt/2; smoothing adds dt/2, so
    # E weight = (2 pi (s + r))^-1/2 at the midpoint times
    steps, t = 16, 0.25
    e = fk.energies(2, t, DELTA, 40000, steps, seed=3)
    mids = (np.arange(steps) + 0.5) * t / steps
    ct = fk.time_cell_weights(t, steps, 0.5)
    exact = np.sum(ct / np.sqrt(2 * np.pi * (mids[:, None] + mids[None, :])))
    assert abs(e.mean() - exact) < 4 * e.std() / math.sqrt(e.size)
