# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled leapfrog kernels for the flux-form wave stencil on the periodic grid.

The stencil here is the single source of truth for the spatial operator; the
pure-numpy fallback in ``_leapfrog_py`` mirrors it term by term.
"""
import numpy as np

cimport cython
cimport numpy as cnp

cnp.import_array()


cpdef void lap1d(const double[::1] u, const double[::1] ah,
                 double inv_h2, double[::1] out) nogil:
    """out = div(a grad u) with a sampled at half-nodes: ah[i] ~ a_{i+1/2}."""
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t i, ip, im
    for i in range(n):
        ip = i + 1 if i + 1 < n else 0
        im = i - 1 if i > 0 else n - 1
        out[i] = (ah[i] * (u[ip] - u[i]) - ah[im] * (u[i] - u[im])) * inv_h2


cpdef void leap1d(double[::1] u, double[::1] up, const double[::1] ah,
                  double inv_h2, double dt2, Py_ssize_t nsteps):
    """Advance nsteps of u_next = 2u - up + dt^2 L u, ping-ponging (u, up).

    On return u holds the final step and up the one before it.
    """
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t i, ip, im, s
    cdef double lu
    cdef double[::1] a_, b_
    for s in range(nsteps):
        if s % 2 == 0:
            a_ = u
            b_ = up
        else:
            a_ = up
            b_ = u
        for i in range(n):
            ip = i + 1 if i + 1 < n else 0
            im = i - 1 if i > 0 else n - 1
            lu = (ah[i] * (a_[ip] - a_[i]) - ah[im] * (a_[i] - a_[im])) * inv_h2
            b_[i] = 2.0 * a_[i] - b_[i] + dt2 * lu
    if nsteps % 2 == 1:
        for i in range(n):
            lu = u[i]
            u[i] = up[i]
            up[i] = lu


cpdef void lap2d(const double[:, ::1] u, const double[:, ::1] a11h,
                 const double[:, ::1] a22h, const double[:, ::1] a12,
                 double inv_h2, double[:, ::1] out) nogil:
    """Flux-form divergence with harmonic half-node diagonals and centered
    off-diagonal coupling: a11h[i,j] ~ A11 at (i+1/2,j), a22h[i,j] ~ A22 at
    (i,j+1/2), a12 at nodes."""
    cdef Py_ssize_t nx = u.shape[0]
    cdef Py_ssize_t ny = u.shape[1]
    cdef Py_ssize_t i, j, ip, im, jp, jm
    cdef double diag, mix
    for i in range(nx):
        ip = i + 1 if i + 1 < nx else 0
        im = i - 1 if i > 0 else nx - 1
        for j in range(ny):
            jp = j + 1 if j + 1 < ny else 0
            jm = j - 1 if j > 0 else ny - 1
            diag = (a11h[i, j] * (u[ip, j] - u[i, j])
                    - a11h[im, j] * (u[i, j] - u[im, j])
                    + a22h[i, j] * (u[i, jp] - u[i, j])
                    - a22h[i, jm] * (u[i, j] - u[i, jm]))
            mix = (a12[ip, j] * (u[ip, jp] - u[ip, jm])
                   - a12[im, j] * (u[im, jp] - u[im, jm])
                   + a12[i, jp] * (u[ip, jp] - u[im, jp])
                   - a12[i, jm] * (u[ip, jm] - u[im, jm]))
            out[i, j] = diag * inv_h2 + 0.25 * mix * inv_h2


cpdef void leap2d(double[:, ::1] u, double[:, ::1] up, const double[:, ::1] a11h,
                  const double[:, ::1] a22h, const double[:, ::1] a12,
                  double inv_h2, double dt2, Py_ssize_t nsteps):
    cdef Py_ssize_t nx = u.shape[0]
    cdef Py_ssize_t ny = u.shape[1]
    cdef Py_ssize_t i, j, ip, im, jp, jm, s
    cdef double diag, mix, tmp
    cdef double[:, ::1] a_, b_
    for s in range(nsteps):
        if s % 2 == 0:
            a_ = u
            b_ = up
        else:
            a_ = up
            b_ = u
        for i in range(nx):
            ip = i + 1 if i + 1 < nx else 0
            im = i - 1 if i > 0 else nx - 1
            for j in range(ny):
                jp = j + 1 if j + 1 < ny else 0
                jm = j - 1 if j > 0 else ny - 1
                diag = (a11h[i, j] * (a_[ip, j] - a_[i, j])
                        - a11h[im, j] * (a_[i, j] - a_[im, j])
                        + a22h[i, j] * (a_[i, jp] - a_[i, j])
                        - a22h[i, jm] * (a_[i, j] - a_[i, jm]))
                mix = (a12[ip, j] * (a_[ip, jp] - a_[ip, jm])
                       - a12[im, j] * (a_[im, jp] - a_[im, jm])
                       + a12[i, jp] * (a_[ip, jp] - a_[im, jp])
                       - a12[i, jm] * (a_[ip, jm] - a_[im, jm]))
                b_[i, j] = (2.0 * a_[i, j] - b_[i, j]
                            + dt2 * (diag * inv_h2 + 0.25 * mix * inv_h2))
    if nsteps % 2 == 1:
        for i in range(nx):
            for j in range(ny):
                tmp = u[i, j]
                u[i, j] = up[i, j]
                up[i, j] = tmp
