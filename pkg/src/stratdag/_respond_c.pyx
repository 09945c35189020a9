# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled best-response loop: per-agent multi-start projected-gradient
ascent with the same update rules as ``_respond_py.py_loop``."""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()

DEF MAXN = 64  # nodes + 1 upper bound for stack buffers

GROW = 1.3
SHRINK = 0.5


cdef inline double _poly_val(const double[::1] coef, Py_ssize_t lo, Py_ssize_t hi, double x) noexcept nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t k
    for k in range(hi - 1, lo - 1, -1):
        acc = (acc + coef[k]) * x
    return acc


cdef inline double _poly_deriv(const double[::1] coef, Py_ssize_t lo, Py_ssize_t hi, double x) noexcept nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t k
    for k in range(hi - 1, lo - 1, -1):
        acc = acc * x + (k - lo + 1) * coef[k]
    return acc


cdef inline void _forward(const long[::1] topo, const double[::1] const_, const long[::1] par_ptr,
                          const long[::1] par_idx, const long[::1] coef_ptr, const double[::1] coef,
                          const double[:, ::1] u, Py_ssize_t row, double* a, double* x, Py_ssize_t nn) noexcept nogil:
    cdef Py_ssize_t t, j, e
    cdef double acc
    for t in range(nn):
        j = topo[t]
        acc = const_[j] + u[row, j] + a[j]
        for e in range(par_ptr[j], par_ptr[j + 1]):
            acc += _poly_val(coef, coef_ptr[e], coef_ptr[e + 1], x[par_idx[e]])
        x[j] = acc


cdef inline double _score_grad(const double[::1] lin, const long[::1] poly_node, const long[::1] poly_ptr,
                               const double[::1] poly_coef, double* x, double* gx, Py_ssize_t nn) noexcept nogil:
    cdef Py_ssize_t j, k
    cdef double s = 0.0
    for j in range(nn):
        gx[j] = lin[j]
        s += lin[j] * x[j]
    for k in range(poly_node.shape[0]):
        j = poly_node[k]
        s += _poly_val(poly_coef, poly_ptr[k], poly_ptr[k + 1], x[j])
        gx[j] += _poly_deriv(poly_coef, poly_ptr[k], poly_ptr[k + 1], x[j])
    return s


cdef inline void _accumulate(const long[::1] topo, const long[::1] ch_ptr, const long[::1] ch_idx,
                             const long[::1] ch_edge, const long[::1] coef_ptr, const double[::1] coef,
                             double* x, double* z, Py_ssize_t nn) noexcept nogil:
    cdef Py_ssize_t t, j, s, e
    for t in range(nn - 1, -1, -1):
        j = topo[t]
        for s in range(ch_ptr[j], ch_ptr[j + 1]):
            e = ch_edge[s]
            z[j] += _poly_deriv(coef, coef_ptr[e], coef_ptr[e + 1], x[j]) * z[ch_idx[s]]


cdef inline void _project_l2(double* y, Py_ssize_t nm, double radius) noexcept nogil:
    cdef double nrm = 0.0
    cdef Py_ssize_t i
    for i in range(nm):
        nrm += y[i] * y[i]
    nrm = sqrt(nrm)
    if nrm > radius:
        for i in range(nm):
            y[i] *= radius / nrm
cdef inline void _project_l1(double* y, Py_ssize_t nm, double radius) noexcept nogil:
    cdef double total = 0.0
    cdef double srt[MAXN]
    cdef Py_ssize_t i, k
    cdef double key, csum, theta
    cdef Py_ssize_t rho
    for i in range(nm):
        total += fabs(y[i])
    if total <= radius:
        return
    for i in range(nm):
        srt[i] = fabs(y[i])
    # insertion sort, descending
    for i in range(1, nm):
        key = srt[i]
        k = i
        while k > 0 and srt[k - 1] < key:
            srt[k] = srt[k - 1]
            k -= 1
        srt[k] = key
    csum = 0.0
    theta = 0.0
    rho = 0
    for i in range(nm):
        csum += srt[i]
        if srt[i] - (csum - radius) / (i + 1) > 0.0:
            rho = i
            theta = (csum - radius) / (i + 1)
    for i in range(nm):
        key = fabs(y[i]) - theta
        if key < 0.0:
            key = 0.0
        y[i] = (1.0 if y[i] > 0.0 else (-1.0 if y[i] < 0.0 else 0.0)) * key


def pgd_loop(int kind_l1,
             const long[::1] topo, const double[::1] const_, const long[::1] par_ptr,
             const long[::1] par_idx, const long[::1] coef_ptr, const double[::1] coef,
             const long[::1] ch_ptr, const long[::1] ch_idx, const long[::1] ch_edge,
             const double[::1] lin, const long[::1] poly_node, const long[::1] poly_ptr,
             const double[::1] poly_coef,
             const double[:, ::1] u, const long[::1] mut_idx, const double[:, ::1] whiten,
             double radius, const double[:, :, ::1] starts, int max_iter,
             double[:, ::1] out_y, double[::1] out_obj):
    cdef Py_ssize_t m = u.shape[0]
    cdef Py_ssize_t nn = u.shape[1]
    cdef Py_ssize_t nm = mut_idx.shape[0]
    cdef Py_ssize_t n_starts = starts.shape[0]
    cdef Py_ssize_t row, s, i, it
    cdef double a[MAXN]
    cdef double x[MAXN]
    cdef double z[MAXN]
    cdef double y[MAXN]
    cdef double cand[MAXN]
    cdef double g[MAXN]
    cdef double gc[MAXN]
    cdef double best_obj, obj, obj_new, step, nrm, gw, floor_
    cdef bint better
    cdef int stall
    cdef double grow = GROW, shrink = SHRINK

    floor_ = radius * 1e-12
    with nogil:
        for row in range(m):
            best_obj = -1e308
            for i in range(nm):
                out_y[row, i] = 0.0
            for s in range(n_starts):
                for i in range(nm):
                    y[i] = starts[s, row, i]
                if kind_l1:
                    _project_l1(y, nm, radius)
                else:
                    _project_l2(y, nm, radius)
                obj = _eval(topo, const_, par_ptr, par_idx, coef_ptr, coef, ch_ptr, ch_idx, ch_edge,
                            lin, poly_node, poly_ptr, poly_coef, u, row, mut_idx, whiten, y, a, x, z, g, nn, nm)
                step = radius
                stall = 0
                for it in range(max_iter):
                    nrm = 0.0
                    for i in range(nm):
                        gw = g[i] / whiten[row, i]
                        gc[i] = gw
                        nrm += gw * gw
                    nrm = sqrt(nrm)
                    if nrm < 1e-300:
                        nrm = 1e-300
                    for i in range(nm):
                        cand[i] = y[i] + step * gc[i] / nrm
                    if kind_l1:
                        _project_l1(cand, nm, radius)
                    else:
                        _project_l2(cand, nm, radius)
                    obj_new = _eval(topo, const_, par_ptr, par_idx, coef_ptr, coef, ch_ptr, ch_idx, ch_edge,
                                    lin, poly_node, poly_ptr, poly_coef, u, row, mut_idx, whiten, cand, a, x, z, gc, nn, nm)
                    better = obj_new > obj + 1e-14 * (1.0 + fabs(obj))
                    if better:
                        for i in range(nm):
                            y[i] = cand[i]
                            g[i] = gc[i]
                        obj = obj_new
                        step *= grow
                        stall = 0
                    else:
                        step *= shrink
                        stall += 1
                        if stall >= 12 or step < floor_:
                            break
                if obj > best_obj:
                    best_obj = obj
                    for i in range(nm):
                        out_y[row, i] = y[i]
            out_obj[row] = best_obj


cdef inline double _eval(const long[::1] topo, const double[::1] const_, const long[::1] par_ptr,
                         const long[::1] par_idx, const long[::1] coef_ptr, const double[::1] coef,
                         const long[::1] ch_ptr, const long[::1] ch_idx, const long[::1] ch_edge,
                         const double[::1] lin, const long[::1] poly_node, const long[::1] poly_ptr,
                         const double[::1] poly_coef,
                         const double[:, ::1] u, Py_ssize_t row, const long[::1] mut_idx,
                         const double[:, ::1] whiten, double* y, double* a, double* x, double* z,
                         double* g_out, Py_ssize_t nn, Py_ssize_t nm) noexcept nogil:
    """Objective and mutable-coordinate gradient at whitened point ``y``."""
    cdef Py_ssize_t i
    cdef double s
    for i in range(nn):
        a[i] = 0.0
    for i in range(nm):
        a[mut_idx[i]] = y[i] / whiten[row, i]
    _forward(topo, const_, par_ptr, par_idx, coef_ptr, coef, u, row, a, x, nn)
    s = _score_grad(lin, poly_node, poly_ptr, poly_coef, x, z, nn)
    _accumulate(topo, ch_ptr, ch_idx, ch_edge, coef_ptr, coef, x, z, nn)
    for i in range(nm):
        g_out[i] = z[mut_idx[i]]
    return s
