# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-triangle kernels; same contracts as ``_fallback``."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def p1_gradients(double[:, ::1] vertices, cnp.int64_t[:, ::1] triangles):
    cdef Py_ssize_t t, nt = triangles.shape[0]
    cdef double x0, y0, e1x, e1y, e2x, e2y, det
    g_arr = np.empty((nt, 3, 2))
    a_arr = np.empty(nt)
    cdef double[:, :, ::1] g = g_arr
    cdef double[::1] area = a_arr
    for t in range(nt):
        x0 = vertices[triangles[t, 0], 0]
        y0 = vertices[triangles[t, 0], 1]
        e1x = vertices[triangles[t, 1], 0] - x0
        e1y = vertices[triangles[t, 1], 1] - y0
        e2x = vertices[triangles[t, 2], 0] - x0
        e2y = vertices[triangles[t, 2], 1] - y0
        det = e1x * e2y - e1y * e2x
        g[t, 1, 0] = e2y / det
        g[t, 1, 1] = -e2x / det
        g[t, 2, 0] = -e1y / det
        g[t, 2, 1] = e1x / det
        g[t, 0, 0] = -(g[t, 1, 0] + g[t, 2, 0])
        g[t, 0, 1] = -(g[t, 1, 1] + g[t, 2, 1])
        area[t] = 0.5 * det
    return g_arr, a_arr


cdef Py_ssize_t _count(cnp.int64_t[:, ::1] triangles, cnp.int64_t[::1] dof_of_vertex, int m):
    cdef Py_ssize_t t, a, b, cnt = 0
    for t in range(triangles.shape[0]):
        for a in range(3):
            if dof_of_vertex[triangles[t, a]] < 0:
                continue
            for b in range(3):
                if dof_of_vertex[triangles[t, b]] >= 0:
                    cnt += m * m
    return cnt


def stiffness_triplets(cnp.int64_t[:, ::1] triangles, double[:, :, ::1] grads,
                       double[::1] areas, double[:, :, ::1] coeff,
                       cnp.int64_t[::1] dof_of_vertex, int m):
    cdef Py_ssize_t nnz = _count(triangles, dof_of_vertex, m)
    rows_a = np.empty(nnz, dtype=np.int64)
    cols_a = np.empty(nnz, dtype=np.int64)
    vals_a = np.empty(nnz)
    cdef cnp.int64_t[::1] rows = rows_a
    cdef cnp.int64_t[::1] cols = cols_a
    cdef double[::1] vals = vals_a
    cdef Py_ssize_t t, a, b, al, be, i, j, k = 0
    cdef cnp.int64_t da, db
    cdef double s
    for t in range(triangles.shape[0]):
        for a in range(3):
            da = dof_of_vertex[triangles[t, a]]
            if da < 0:
                continue
            for al in range(m):
                for b in range(3):
                    db = dof_of_vertex[triangles[t, b]]
                    if db < 0:
                        continue
                    for be in range(m):
                        s = 0.0
                        for i in range(2):
                            for j in range(2):
                                s += coeff[t, al * 2 + i, be * 2 + j] * grads[t, a, i] * grads[t, b, j]
                        rows[k] = da * m + al
                        cols[k] = db * m + be
                        vals[k] = areas[t] * s
                        k += 1
    return rows_a, cols_a, vals_a


def mass_triplets(cnp.int64_t[:, ::1] triangles, double[::1] areas,
                  cnp.int64_t[::1] dof_of_vertex, int m):
    cdef Py_ssize_t nnz = _count(triangles, dof_of_vertex, m)
    rows_a = np.empty(nnz, dtype=np.int64)
    cols_a = np.empty(nnz, dtype=np.int64)
    vals_a = np.empty(nnz)
    cdef cnp.int64_t[::1] rows = rows_a
    cdef cnp.int64_t[::1] cols = cols_a
    cdef double[::1] vals = vals_a
    cdef Py_ssize_t t, a, b, al, be, k = 0
    cdef cnp.int64_t da, db
    cdef double w
    for t in range(triangles.shape[0]):
        for a in range(3):
            da = dof_of_vertex[triangles[t, a]]
            if da < 0:
                continue
            for al in range(m):
                for b in range(3):
                    db = dof_of_vertex[triangles[t, b]]
                    if db < 0:
                        continue
                    w = areas[t] * (2.0 if a == b else 1.0) / 12.0
                    for be in range(m):
                        rows[k] = da * m + al
                        cols[k] = db * m + be
                        vals[k] = w if al == be else 0.0
                        k += 1
    return rows_a, cols_a, vals_a


def field_gradients(double[:, ::1] values, cnp.int64_t[:, ::1] triangles, double[:, :, ::1] grads):
    cdef Py_ssize_t t, a, al, i, nt = triangles.shape[0], m = values.shape[1]
    out_a = np.zeros((nt, m, 2))
    cdef double[:, :, ::1] out = out_a
    for t in range(nt):
        for a in range(3):
            for al in range(m):
                for i in range(2):
                    out[t, al, i] += values[triangles[t, a], al] * grads[t, a, i]
    return out_a
