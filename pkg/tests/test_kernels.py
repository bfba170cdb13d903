import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spectral_perturb import BACKEND, _kernels
from spectral_perturb.coefficients import preset
from spectral_perturb.fem import dof_of_vertex
from spectral_perturb.geometry import build_rectangle

IMPLS = _kernels.implementations()


def test_backend_is_known():
    assert BACKEND in IMPLS
    assert "python" in IMPLS


def test_reference_triangle_gradients():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    tris = np.array([[0, 1, 2]])
    for impl in IMPLS.values():
        grads, areas = _kernels.p1_gradients(verts, tris, impl=impl)
        np.testing.assert_allclose(grads[0], [[-1, -1], [1, 0], [0, 1]], atol=1e-15)
        np.testing.assert_allclose(areas, [0.5])


def _problem(nx, ny, h, name, seed):
    mesh = build_rectangle((0.0, 0.0, 2 * h * nx, 2 * h * ny), h)
    tensor = preset(name)
    vals = np.random.default_rng(seed).standard_normal((mesh.n_vertices, tensor.m))
    return mesh, tensor, vals


@pytest.mark.skipif(len(IMPLS) < 2, reason="compiled kernels not built")
@settings(max_examples=25, deadline=None)
@given(
    nx=st.integers(1, 4),
    ny=st.integers(1, 4),
    h=st.sampled_from([0.25, 0.125, 0.1]),
    name=st.sampled_from(["laplacian", "lame_checkerboard", "general_const", "lh_null_lagrangian"]),
    seed=st.integers(0, 2**16),
)
def test_compiled_matches_fallback(nx, ny, h, name, seed):
    mesh, tensor, vals = _problem(nx, ny, h, name, seed)
    fast, slow = IMPLS["cython"], IMPLS["python"]
    g1, a1 = _kernels.p1_gradients(mesh.vertices, mesh.triangles, impl=fast)
    g2, a2 = _kernels.p1_gradients(mesh.vertices, mesh.triangles, impl=slow)
    np.testing.assert_allclose(g1, g2, rtol=1e-14, atol=1e-14)
    np.testing.assert_allclose(a1, a2, rtol=1e-14)
    dofs = dof_of_vertex(mesh)
    coeff = tensor(mesh.centroids)
    for fn, args in [
        (_kernels.stiffness_triplets, (mesh.triangles, g1, a1, coeff, dofs, tensor.m)),
        (_kernels.mass_triplets, (mesh.triangles, a1, dofs, tensor.m)),
    ]:
        r1, c1, v1 = fn(*args, impl=fast)
        r2, c2, v2 = fn(*args, impl=slow)
        np.testing.assert_array_equal(r1, r2)
        np.testing.assert_array_equal(c1, c2)
        np.testing.assert_allclose(v1, v2, rtol=1e-13, atol=1e-13)
    f1 = _kernels.field_gradients(vals, mesh.triangles, g1, impl=fast)
    f2 = _kernels.field_gradients(vals, mesh.triangles, g1, impl=slow)
    np.testing.assert_allclose(f1, f2, rtol=1e-13, atol=1e-13)


def test_boundary_dofs_are_skipped():
    mesh = build_rectangle((0.0, 0.0, 1.0, 1.0), 0.5)
    grads, areas = _kernels.p1_gradients(mesh.vertices, mesh.triangles)
    rows, cols, _ = _kernels.mass_triplets(mesh.triangles, areas, dof_of_vertex(mesh), 1)
    assert set(rows) == {0} and set(cols) == {0}
