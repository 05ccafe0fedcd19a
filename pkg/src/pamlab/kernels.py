"""Backend selection for the Monte Carlo inner loops.

The compiled extension is used when it was built; otherwise the numpy
implementation is used.  Setting ``PAMLAB_BACKEND=python`` forces the
fallback.
"""

import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("PAMLAB_BACKEND", "").lower() != "python":
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels

RIESZ = _pykernels.RIESZ
DELTA = _pykernels.DELTA


def pair_energy_batch(mid, ct, kind, alpha, floor, ball, var, backend=None):
    impl = _select(backend)
    mid = np.ascontiguousarray(mid, dtype=np.float64)
    ct = np.ascontiguousarray(ct, dtype=np.float64)
    return impl.pair_energy_batch(mid, ct, int(kind), float(alpha), float(floor), float(ball), float(var))


def occupation_batch(pos, eps, dt, backend=None):
    pos = np.ascontiguousarray(pos, dtype=np.float64)
    return _select(backend).occupation_batch(pos, float(eps), float(dt))


def _select(backend):
    if backend is None:
        return _impl
    if backend == "python":
        return _pykernels
    if backend == "cython":
        if BACKEND != "cython":
            raise ImportError("compiled kernels are not available")
        return _impl
    raise ValueError(f"unknown backend {backend!r}")
