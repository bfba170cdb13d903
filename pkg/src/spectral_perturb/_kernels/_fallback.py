"""Vectorised NumPy implementations of the per-triangle kernels."""
import numpy as np


def p1_gradients(vertices, triangles):
    p = vertices[triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    g = np.empty((len(triangles), 3, 2))
    # gradient of barycentric coordinate a is the rotated opposite edge over det
    g[:, 1, 0] = e2[:, 1] / det
    g[:, 1, 1] = -e2[:, 0] / det
    g[:, 2, 0] = -e1[:, 1] / det
    g[:, 2, 1] = e1[:, 0] / det
    g[:, 0] = -(g[:, 1] + g[:, 2])
    return g, 0.5 * det


def _element_dofs(triangles, dof_of_vertex, m):
    base = dof_of_vertex[triangles]  # (T, 3)
    dofs = base[:, :, None] * m + np.arange(m)
    dofs[base < 0] = -1
    return dofs.reshape(len(triangles), 3 * m)


def _scatter(elem, dofs):
    ne = dofs.shape[1]
    rows = np.repeat(dofs, ne, axis=1).ravel()
    cols = np.tile(dofs, (1, ne)).ravel()
    vals = elem.reshape(len(elem), -1).ravel()
    keep = (rows >= 0) & (cols >= 0)
    return rows[keep], cols[keep], vals[keep]


def stiffness_triplets(triangles, grads, areas, coeff, dof_of_vertex, m):
    n = 2
    t = len(triangles)
    c = coeff.reshape(t, m, n, m, n)
    # K[(a,al),(b,be)] = area * c[al,i,be,j] g[a,i] g[b,j]
    elem = np.einsum("taibj,tAi,tBj->tAaBb", c, grads, grads) * areas[:, None, None, None, None]
    elem = elem.reshape(t, 3 * m, 3 * m)
    return _scatter(elem, _element_dofs(triangles, dof_of_vertex, m))


def mass_triplets(triangles, areas, dof_of_vertex, m):
    t = len(triangles)
    local = (np.ones((3, 3)) + np.eye(3)) / 12.0
    elem = areas[:, None, None, None, None] * local[None, :, None, :, None] * np.eye(m)[None, None, :, None, :]
    elem = elem.reshape(t, 3 * m, 3 * m)
    return _scatter(elem, _element_dofs(triangles, dof_of_vertex, m))


def field_gradients(values, triangles, grads):
    # (T, m, 2): du^al/dx_i on each triangle
    return np.einsum("tam,tai->tmi", values[triangles], grads)
