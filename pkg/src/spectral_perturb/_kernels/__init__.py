"""Per-triangle kernels: compiled extension when available, NumPy otherwise.

Set ``SPECTRAL_PERTURB_PURE_PYTHON=1`` to force the NumPy implementation.
"""
import os

import numpy as np

from . import _fallback

BACKEND = "python"
_impl = _fallback
if not os.environ.get("SPECTRAL_PERTURB_PURE_PYTHON"):
    try:
        from . import _core as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _fallback


def _i64(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def p1_gradients(vertices, triangles, impl=None):
    """Barycentric gradients ``(T, 3, 2)`` and signed areas ``(T,)``."""
    return (impl or _impl).p1_gradients(_f64(vertices), _i64(triangles))


def stiffness_triplets(triangles, grads, areas, coeff, dof_of_vertex, m, impl=None):
    """COO triplets of the stiffness form restricted to numbered vertices."""
    return (impl or _impl).stiffness_triplets(
        _i64(triangles), _f64(grads), _f64(areas), _f64(coeff), _i64(dof_of_vertex), int(m)
    )


def mass_triplets(triangles, areas, dof_of_vertex, m, impl=None):
    return (impl or _impl).mass_triplets(_i64(triangles), _f64(areas), _i64(dof_of_vertex), int(m))


def field_gradients(values, triangles, grads, impl=None):
    """Constant gradient ``(T, m, 2)`` of a nodal P1 field ``values (N, m)``."""
    return (impl or _impl).field_gradients(_f64(values), _i64(triangles), _f64(grads))


def implementations():
    """Available backends by name, for benchmarking and cross-checks."""
    out = {"python": _fallback}
    try:
        from . import _core

        out["cython"] = _core
    except ImportError:
        pass
    return out
