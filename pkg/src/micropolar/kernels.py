"""Backend selection for the pointwise kernels.

The compiled extension is used when it imports; otherwise the numpy
fallback is used.  Setting ``MICROPOLAR_PURE_PYTHON=1`` forces the fallback.
All wrappers accept arrays with arbitrary trailing spatial shape.
"""

import os

import numpy as np

from . import _kernels_py

_backend = _kernels_py
BACKEND = "python"
if os.environ.get("MICROPOLAR_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels_c as _backend  # noqa: F811
        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _backend = _kernels_py


def _flat(x, lead):
    return np.ascontiguousarray(x.reshape(x.shape[:lead] + (-1,)), dtype=np.float64)


def _spatial(x, lead):
    return x.shape[lead:]


def matvec(A, v, backend=None):
    k = backend or _backend
    shp = _spatial(v, 1)
    return k.matvec(_flat(A, 2), _flat(v, 1)).reshape((3,) + shp)


def matmat(A, B, backend=None):
    k = backend or _backend
    shp = _spatial(A, 2)
    return k.matmat(_flat(A, 2), _flat(B, 2)).reshape((3, 3) + shp)


def cross(a, b, backend=None):
    k = backend or _backend
    shp = np.broadcast_shapes(a.shape, b.shape)[1:]
    a = np.broadcast_to(a, (3,) + shp)
    b = np.broadcast_to(b, (3,) + shp)
    return k.cross(_flat(a, 1), _flat(b, 1)).reshape((3,) + shp)


def advect(u, grad, backend=None):
    k = backend or _backend
    shp = _spatial(u, 1)
    nc = grad.shape[0]
    return k.advect(_flat(u, 1), _flat(grad, 2)).reshape((nc,) + shp)


def commutator_ten(w, S, backend=None):
    k = backend or _backend
    shp = _spatial(S, 2)
    w = np.broadcast_to(w, (3,) + shp)
    return k.commutator_ten(_flat(w, 1), _flat(S, 2)).reshape((3, 3) + shp)


def sym_solve(S, b, backend=None):
    k = backend or _backend
    shp = _spatial(b, 1)
    return k.sym_solve(_flat(S, 2), _flat(b, 1)).reshape((3,) + shp)


def sym_eigvalsh(S, backend=None):
    k = backend or _backend
    shp = _spatial(S, 2)
    return k.sym_eigvalsh(_flat(S, 2)).reshape((3,) + shp)
