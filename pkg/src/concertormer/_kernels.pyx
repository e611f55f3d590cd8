# cython: language_level=3
"""Compiled compute kernels: batched matmul and conv2d forward/grad-weight.

Accumulation runs in float64 with the reduction index ascending per output
element — the same order as the NumPy fallback — so both backends produce
bit-identical tensors. Outputs are partitioned over threads but every output
element is reduced sequentially by one thread, which keeps results independent
of the thread count. Built with -ffp-contract=off to keep one rounding per
add/multiply.
"""

import numpy as np

cimport cython
from cython.parallel cimport parallel, prange
from libc.stdlib cimport free, malloc

ctypedef fused real:
    float
    double

BACKEND = "cython"


@cython.boundscheck(False)
@cython.wraparound(False)
def matmul(const real[:, :, ::1] a, const real[:, :, ::1] b):
    """(B, m, p) @ (B, p, q) -> (B, m, q)."""
    cdef Py_ssize_t nb = a.shape[0], m = a.shape[1], p = a.shape[2], q = b.shape[2]
    if b.shape[0] != nb or b.shape[1] != p:
        raise ValueError("matmul: incompatible kernel shapes")
    out_arr = np.empty((nb, m, q), dtype=np.asarray(a).dtype)
    cdef real[:, :, ::1] out = out_arr
    cdef Py_ssize_t rows = nb * m
    cdef Py_ssize_t row, i, r, c, k
    cdef double av
    cdef double* acc
    with nogil, parallel():
        acc = <double*> malloc(q * sizeof(double))
        for row in prange(rows, schedule="static"):
            i = row // m
            r = row - i * m
            for c in range(q):
                acc[c] = 0.0
            for k in range(p):
                av = <double> a[i, r, k]
                for c in range(q):
                    acc[c] = acc[c] + av * (<double> b[i, k, c])
            for c in range(q):
                out[i, r, c] = <real> acc[c]
        free(acc)
    return out_arr


@cython.boundscheck(False)
@cython.wraparound(False)
def conv2d(const real[:, :, ::1] x, const real[:, :, :, ::1] w, Py_ssize_t stride,
           Py_ssize_t pt, Py_ssize_t pb, Py_ssize_t pl, Py_ssize_t pr):
    """Cross-correlation of x (h, w, cin) with w (kh, kw, cin/groups, cout)."""
    cdef Py_ssize_t h = x.shape[0], wd = x.shape[1], cin = x.shape[2]
    cdef Py_ssize_t kh = w.shape[0], kw = w.shape[1], cin_g = w.shape[2], cout = w.shape[3]
    cdef Py_ssize_t groups = cin // cin_g
    cdef Py_ssize_t cout_g = cout // groups
    cdef Py_ssize_t oh = (h + pt + pb - kh) // stride + 1
    cdef Py_ssize_t ow = (wd + pl + pr - kw) // stride + 1
    cdef bint depthwise = (cin_g == 1 and cout == cin)
    out_arr = np.empty((oh, ow, cout), dtype=np.asarray(x).dtype)
    cdef real[:, :, ::1] out = out_arr
    cdef Py_ssize_t oy, ox, dy, dx, ci, co, g, iy, ix
    cdef double xv
    cdef double* acc
    with nogil, parallel():
        acc = <double*> malloc(cout * sizeof(double))
        for oy in prange(oh, schedule="static"):
            for ox in range(ow):
                for co in range(cout):
                    acc[co] = 0.0
                for dy in range(kh):
                    iy = oy * stride + dy - pt
                    if iy < 0 or iy >= h:
                        continue
                    for dx in range(kw):
                        ix = ox * stride + dx - pl
                        if ix < 0 or ix >= wd:
                            continue
                        if groups == 1:
                            for ci in range(cin):
                                xv = <double> x[iy, ix, ci]
                                for co in range(cout):
                                    acc[co] = acc[co] + xv * (<double> w[dy, dx, ci, co])
                        elif depthwise:
                            for ci in range(cin):
                                acc[ci] = acc[ci] + (<double> x[iy, ix, ci]) * (<double> w[dy, dx, 0, ci])
                        else:
                            for g in range(groups):
                                for ci in range(cin_g):
                                    xv = <double> x[iy, ix, g * cin_g + ci]
                                    for co in range(cout_g):
                                        acc[g * cout_g + co] = acc[g * cout_g + co] + xv * (<double> w[dy, dx, ci, g * cout_g + co])
                for co in range(cout):
                    out[oy, ox, co] = <real> acc[co]
        free(acc)
    return out_arr


@cython.boundscheck(False)
@cython.wraparound(False)
def conv2d_grad_weight(const real[:, :, ::1] x, const real[:, :, ::1] gy,
                       Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride,
                       Py_ssize_t pt, Py_ssize_t pb, Py_ssize_t pl, Py_ssize_t pr,
                       Py_ssize_t groups):
    """Weight gradient; output pixels reduce in row-major ascending order.

    Parallel over the kernel's tap/channel cells, so each gw element is still
    one sequential reduction.
    """
    cdef Py_ssize_t h = x.shape[0], wd = x.shape[1], cin = x.shape[2]
    cdef Py_ssize_t oh = gy.shape[0], ow = gy.shape[1], cout = gy.shape[2]
    cdef Py_ssize_t cin_g = cin // groups
    cdef Py_ssize_t cout_g = cout // groups
    cdef bint depthwise = (cin_g == 1 and cout == cin)
    gw_arr = np.zeros((kh, kw, cin_g, cout), dtype=np.float64)
    cdef double[:, :, :, ::1] gw = gw_arr
    cdef Py_ssize_t cells = kh * kw * cin_g
    cdef Py_ssize_t cell, oy, ox, dy, dx, ci, co, g, iy, ix
    cdef double xv
    for cell in prange(cells, schedule="static", nogil=True):
        dy = cell // (kw * cin_g)
        dx = (cell // cin_g) % kw
        ci = cell % cin_g
        for oy in range(oh):
            iy = oy * stride + dy - pt
            if iy < 0 or iy >= h:
                continue
            for ox in range(ow):
                ix = ox * stride + dx - pl
                if ix < 0 or ix >= wd:
                    continue
                if groups == 1:
                    xv = <double> x[iy, ix, ci]
                    for co in range(cout):
                        gw[dy, dx, ci, co] += xv * (<double> gy[oy, ox, co])
                elif depthwise:
                    for co in range(cout):
                        gw[dy, dx, 0, co] += (<double> x[iy, ix, co]) * (<double> gy[oy, ox, co])
                else:
                    for g in range(groups):
                        xv = <double> x[iy, ix, g * cin_g + ci]
                        for co in range(cout_g):
                            gw[dy, dx, ci, g * cout_g + co] += xv * (<double> gy[oy, ox, g * cout_g + co])
    return gw_arr.astype(np.asarray(x).dtype, copy=False)
