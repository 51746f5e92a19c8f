# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled render kernels.

Arithmetic mirrors ``_pykernels`` operation for operation so both backends
produce bit-identical grids (build with -ffp-contract=off).
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, ceil, fabs, INFINITY

cnp.import_array()


def rasterize_min_depth(double[:, ::1] px, double[:, ::1] py, double[:, ::1] pz,
                        double x0, double dx, Py_ssize_t nx,
                        double y0, double dy, Py_ssize_t ny,
                        double min_area):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.full((ny, nx), np.inf)
    cdef double[:, ::1] depth = out
    cdef Py_ssize_t t, i, j, ilo, ihi, jlo, jhi
    cdef double ax, ay, bx, by, qx, qy, az, bz, qz
    cdef double area, xmin, xmax, ymin, ymax, cx, cy, w0, w1, w2, z
    for t in range(px.shape[0]):
        ax = px[t, 0]; bx = px[t, 1]; qx = px[t, 2]
        ay = py[t, 0]; by = py[t, 1]; qy = py[t, 2]
        az = pz[t, 0]; bz = pz[t, 1]; qz = pz[t, 2]
        area = (bx - ax) * (qy - ay) - (qx - ax) * (by - ay)
        if fabs(area) <= min_area:
            continue
        xmin = min(ax, min(bx, qx)); xmax = max(ax, max(bx, qx))
        ymin = min(ay, min(by, qy)); ymax = max(ay, max(by, qy))
        ilo = <Py_ssize_t>ceil((xmin - x0) / dx - 0.5)
        ihi = <Py_ssize_t>floor((xmax - x0) / dx - 0.5)
        jlo = <Py_ssize_t>ceil((ymin - y0) / dy - 0.5)
        jhi = <Py_ssize_t>floor((ymax - y0) / dy - 0.5)
        if ilo < 0:
            ilo = 0
        if jlo < 0:
            jlo = 0
        if ihi > nx - 1:
            ihi = nx - 1
        if jhi > ny - 1:
            jhi = ny - 1
        for j in range(jlo, jhi + 1):
            cy = y0 + (j + 0.5) * dy
            for i in range(ilo, ihi + 1):
                cx = x0 + (i + 0.5) * dx
                w0 = ((bx - cx) * (qy - cy) - (qx - cx) * (by - cy)) / area
                w1 = ((qx - cx) * (ay - cy) - (ax - cx) * (qy - cy)) / area
                w2 = ((ax - cx) * (by - cy) - (bx - cx) * (ay - cy)) / area
                if w0 >= 0.0 and w1 >= 0.0 and w2 >= 0.0:
                    z = w0 * az + w1 * bz + w2 * qz
                    if z < depth[j, i]:
                        depth[j, i] = z
    return out


def image_span(double[::1] sx, double[::1] sy, double[::1] sz,
               double a0, double da, Py_ssize_t na, double r0, double dr, Py_ssize_t nr):
    cdef Py_ssize_t k, n = 0
    cdef double fa, fr, lo = INFINITY, hi = -INFINITY
    for k in range(sx.shape[0]):
        fa = floor((sx[k] - a0) / da)
        fr = floor((sz[k] - r0) / dr)
        if fa < 0 or fr < 0 or fa >= na or fr >= nr:
            continue
        n += 1
        if sy[k] < lo:
            lo = sy[k]
        if sy[k] > hi:
            hi = sy[k]
    return lo, hi, n


def deposit(double[::1] sx, double[::1] sy, double[::1] sz, cnp.int64_t[::1] fid,
            double[::1] face_weight, double[::1] face_bias, double[:, ::1] depth,
            double x0, double dx, double y0, double dy,
            double a0, double da, Py_ssize_t na,
            double r0, double dr, Py_ssize_t nr, double tol):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] img_arr = np.zeros((nr, na))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] occ_arr = np.zeros((nr, na))
    cdef double[:, ::1] img = img_arr
    cdef double[:, ::1] occ = occ_arr
    cdef Py_ssize_t ny = depth.shape[0], nx = depth.shape[1]
    cdef Py_ssize_t k, ia, ir, i, j, f
    cdef double fa, fr, fi, fj
    for k in range(sx.shape[0]):
        fa = floor((sx[k] - a0) / da)
        fr = floor((sz[k] - r0) / dr)
        if fa < 0 or fr < 0 or fa >= na or fr >= nr:
            continue
        f = fid[k]
        ia = <Py_ssize_t>fa
        ir = <Py_ssize_t>fr
        fi = floor((sx[k] - x0) / dx)
        fj = floor((sy[k] - y0) / dy)
        if fi >= 0 and fj >= 0 and fi < nx and fj < ny:
            i = <Py_ssize_t>fi
            j = <Py_ssize_t>fj
            if sz[k] > depth[j, i] + tol + face_bias[f]:
                occ[ir, ia] += face_weight[f]
                continue
        img[ir, ia] += face_weight[f]
    return img_arr, occ_arr
