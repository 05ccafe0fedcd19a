import os
import subprocess
import sys

import numpy as np
import pytest

from pamlab import kernels
from pamlab.streams import block_sizes, map_blocks, stream


def test_stream_addressing():
    a = stream(3, 1, 2).standard_normal(5)
    assert np.array_equal(a, stream(3, 1, 2).standard_normal(5))
    assert not np.array_equal(a, stream(3, 2, 1).standard_normal(5))
    assert not np.array_equal(a, stream(4, 1, 2).standard_normal(5))
    with pytest.raises(ValueError):
        stream(-1, 0)


def test_block_sizes():
    assert block_sizes(10, 4) == [4, 4, 2]
    assert block_sizes(8, 4) == [4, 4]
    with pytest.raises(ValueError):
        block_sizes(0, 4)


def test_map_blocks_order_independent_of_workers():
    func = lambda b, size: stream(7, b).standard_normal(size).sum()
    sizes = block_sizes(1000, 64)
    assert map_blocks(func, sizes, 1) == map_blocks(func, sizes, 4)


def _random_midpoints(seed, batch=3, n=3, steps=6, d=1):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(batch, n, steps, d))


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled kernels not built")
@pytest.mark.parametrize("kind,alpha", [(kernels.RIESZ, 0.7), (kernels.RIESZ, 0.5),
                                        (kernels.RIESZ, 1.0), (kernels.DELTA, 1.0)])
@pytest.mark.parametrize("d", [1, 2])
def test_backends_agree_on_pair_energy(kind, alpha, d):
    if kind == kernels.DELTA and d == 2:
        pytest.skip("delta kernel is one-dimensional")
    mid = _random_midpoints(1, d=d)
    ct = np.abs(np.random.default_rng(2).normal(size=(6, 6)))
    ct = ct + ct.T
    args = (mid, ct, kind, alpha, 0.05, 3.0, 0.01)
    a = kernels.pair_energy_batch(*args, backend="python")
    b = kernels.pair_energy_batch(*args, backend="cython")
    assert np.allclose(a, b, rtol=1e-12, atol=0)


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled kernels not built")
def test_backends_agree_on_occupation():
    pos = np.random.default_rng(3).normal(scale=0.3, size=(5, 3, 40))
    a = kernels.occupation_batch(pos, 0.1, 0.01, backend="python")
    b = kernels.occupation_batch(pos, 0.1, 0.01, backend="cython")
    assert np.array_equal(a, b)


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.pair_energy_batch(np.zeros((1, 2, 1, 1)), np.ones((1, 1)), 0, 0.5, 0.1, 1.0, 0.0,
                                  backend="fortran")


def test_fallback_forced_by_environment():
    env = dict(os.environ, PAMLAB_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", "import pamlab; print(pamlab.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
