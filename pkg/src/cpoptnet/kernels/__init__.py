"""Hot sparse kernels for CP fitting.

The compiled extension ``_ckernels`` is preferred. If it is missing (no
compiler at install time) or ``CPOPTNET_PURE_PYTHON`` is set to a truthy
value, the numpy implementation in ``_pykernels`` is used instead.

Attributes
----------
BACKEND : str
    ``"cython"`` or ``"python"``, the implementation selected at import.
"""

import os

import numpy as np

from . import _pykernels

_force_python = os.environ.get("CPOPTNET_PURE_PYTHON", "").lower() in ("1", "true", "yes")

_impl = _pykernels
BACKEND = "python"
if not _force_python:
    try:
        from . import _ckernels
    except ImportError:  # pragma: no cover - depends on the build
        pass
    else:
        _impl = _ckernels
        BACKEND = "cython"


def _prep(indices, values, A, B, C):
    return (
        np.ascontiguousarray(indices, dtype=np.int64),
        np.ascontiguousarray(values, dtype=np.float64),
        np.ascontiguousarray(A, dtype=np.float64),
        np.ascontiguousarray(B, dtype=np.float64),
        np.ascontiguousarray(C, dtype=np.float64),
    )


def sparse_inner(indices, values, A, B, C, backend=None):
    impl = _select(backend)
    return float(impl.sparse_inner(*_prep(indices, values, A, B, C)))


def sparse_mttkrp(indices, values, A, B, C, mode, backend=None):
    impl = _select(backend)
    return impl.sparse_mttkrp(*_prep(indices, values, A, B, C), int(mode))


def available_backends():
    names = ["python"]
    if BACKEND == "cython" or _cython_importable():
        names.append("cython")
    return names


def _cython_importable():
    try:
        from . import _ckernels  # noqa: F401
    except ImportError:
        return False
    return True


def _select(backend):
    if backend is None:
        return _impl
    if backend == "python":
        return _pykernels
    if backend == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend {backend!r}")
