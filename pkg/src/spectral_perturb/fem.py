"""P1 finite element assembly of the stiffness and mass forms.

Degrees of freedom live on interior vertices only (homogeneous Dirichlet
condition); the dof of component ``alpha`` at interior vertex ``k`` is
``k * m + alpha``.  Matrices are ``scipy.sparse.csr_matrix`` holding both
triangles of the symmetric operator.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import TextIO

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .coefficients import CoefficientTensor, DiscreteField
from .errors import EmptyInterior, ZeroVector
from .geometry import Mesh


def dof_of_vertex(mesh: Mesh) -> np.ndarray:
    """Interior index of each vertex, -1 on the boundary."""
    out = np.full(mesh.n_vertices, -1, dtype=np.int64)
    out[mesh.interior_nodes] = np.arange(len(mesh.interior_nodes))
    return out


def _require_interior(mesh: Mesh) -> None:
    if len(mesh.interior_nodes) == 0:
        raise EmptyInterior("mesh has no interior nodes")


def _to_csr(rows, cols, vals, dim) -> sp.csr_matrix:
    # coo -> csr sums duplicates in a fixed order, so assembly is reproducible
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(dim, dim)).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def assemble_stiffness(mesh: Mesh, tensor: CoefficientTensor) -> sp.csr_matrix:
    """Matrix of B(u, v) = int a^{ab}_{ij} u^a_i v^b_j with centroid coefficients."""
    _require_interior(mesh)
    m = tensor.m
    grads, areas = _kernels.p1_gradients(mesh.vertices, mesh.triangles)
    coeff = tensor(mesh.centroids)
    rows, cols, vals = _kernels.stiffness_triplets(
        mesh.triangles, grads, areas, coeff, dof_of_vertex(mesh), m
    )
    return _to_csr(rows, cols, vals, m * len(mesh.interior_nodes))


def assemble_mass(mesh: Mesh, m: int = 1) -> sp.csr_matrix:
    """Consistent P1 mass matrix, block-diagonal over components."""
    _require_interior(mesh)
    _, areas = _kernels.p1_gradients(mesh.vertices, mesh.triangles)
    rows, cols, vals = _kernels.mass_triplets(mesh.triangles, areas, dof_of_vertex(mesh), m)
    return _to_csr(rows, cols, vals, m * len(mesh.interior_nodes))


def assemble_stiffness_dense(mesh: Mesh, tensor: CoefficientTensor) -> np.ndarray:
    """Brute-force dense assembly, one basis pair at a time.

    Independent of the kernels: basis gradients come from solving the
    interpolation system of each triangle.  Only for small meshes.
    """
    _require_interior(mesh)
    m = tensor.m
    coeff = tensor(mesh.centroids).reshape(-1, m, 2, m, 2)
    interior = list(mesh.interior_nodes)
    # triangles touching each interior vertex
    touching: dict[int, set[int]] = {v: set() for v in interior}
    for t, tri in enumerate(mesh.triangles):
        for v in tri:
            if v in touching:
                touching[v].add(t)

    def basis_grad(t, v):
        tri = mesh.triangles[t]
        p = mesh.vertices[tri]
        a = np.column_stack([np.ones(3), p])
        rhs = (tri == v).astype(float)
        return np.linalg.solve(a, rhs)[1:]

    def area(t):
        p = mesh.vertices[mesh.triangles[t]]
        return 0.5 * abs(np.linalg.det(np.column_stack([np.ones(3), p])))

    n = len(interior)
    out = np.zeros((n * m, n * m))
    for ka, va in enumerate(interior):
        for kb, vb in enumerate(interior):
            common = touching[va] & touching[vb]
            for t in common:
                ga = basis_grad(t, va)
                gb = basis_grad(t, vb)
                w = area(t)
                for al in range(m):
                    for be in range(m):
                        out[ka * m + al, kb * m + be] += w * ga @ coeff[t, al, :, be, :] @ gb
    return out


def rayleigh_quotient(B, M, u: np.ndarray) -> float:
    """(u^T B u) / (u^T M u)."""
    u = np.asarray(u, dtype=float)
    denom = float(u @ (M @ u))
    if not np.any(u) or denom == 0.0:
        raise ZeroVector("Rayleigh quotient of the zero vector")
    return float(u @ (B @ u)) / denom


@dataclass(frozen=True)
class DiscreteNorms:
    l2: float
    h1_seminorm: float
    lp_gradient: float
    p: float


def gradient_magnitude(field: DiscreteField) -> np.ndarray:
    """Frobenius norm of the constant gradient on each triangle."""
    g = field.gradients()
    return np.sqrt((g**2).sum(axis=(1, 2)))


def l2_squared_per_triangle(field: DiscreteField) -> np.ndarray:
    """Exact int_T |u|^2 for the P1 field on every triangle."""
    v = field.values[field.mesh.triangles]  # (T, 3, m)
    s = (v**2).sum(axis=1) + v.sum(axis=1) ** 2
    return field.mesh.areas * s.sum(axis=1) / 12.0


def norms(mesh: Mesh, u: DiscreteField, p: float = 2.0) -> DiscreteNorms:
    """L2 norm, H1 seminorm and L^p norm of the gradient (all exact for P1)."""
    if not 1 <= p < np.inf:
        raise ValueError("p must be finite and >= 1")
    areas = mesh.areas
    gm = gradient_magnitude(u)
    return DiscreteNorms(
        l2=float(np.sqrt(l2_squared_per_triangle(u).sum())),
        h1_seminorm=float(np.sqrt((areas * gm**2).sum())),
        lp_gradient=float((areas * gm**p).sum() ** (1.0 / p)),
        p=float(p),
    )


def export_coo(matrix, stream: TextIO) -> None:
    """Write ``row col value`` per stored entry, 0-based, in row order."""
    coo = sp.csr_matrix(matrix).tocoo()
    for r, c, v in zip(coo.row, coo.col, coo.data):
        stream.write(f"{r} {c} {float(v)!r}\n")
