# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled time-step kernels for the 2D acoustic leapfrog scheme.

Mirrors ``_stencil_py`` exactly; see that module for the contract.
"""


def forward_step(double[:, ::1] prv, double[:, ::1] cur, double[:, ::1] nxt,
                 double[:, ::1] vdt2, double[:, ::1] mask,
                 double inv_dz2, double inv_dx2):
    cdef Py_ssize_t nz = cur.shape[0]
    cdef Py_ssize_t nx = cur.shape[1]
    cdef Py_ssize_t i, j
    cdef double c0 = -2.5
    cdef double c1 = 4.0 / 3.0
    cdef double c2 = -1.0 / 12.0
    cdef double lap
    for i in range(2, nz - 2):
        for j in range(2, nx - 2):
            lap = (c2 * (cur[i - 2, j] + cur[i + 2, j])
                   + c1 * (cur[i - 1, j] + cur[i + 1, j])
                   + c0 * cur[i, j]) * inv_dz2 \
                + (c2 * (cur[i, j - 2] + cur[i, j + 2])
                   + c1 * (cur[i, j - 1] + cur[i, j + 1])
                   + c0 * cur[i, j]) * inv_dx2
            nxt[i, j] = mask[i, j] * (2.0 * cur[i, j] - prv[i, j] + vdt2[i, j] * lap)
    # Damp cur after the sweep; it feeds the next step as the previous field.
    for i in range(2, nz - 2):
        for j in range(2, nx - 2):
            cur[i, j] = cur[i, j] * mask[i, j]


def adjoint_step(double[:, ::1] prv, double[:, ::1] cur, double[:, ::1] nxt,
                 double[:, ::1] w, double[:, ::1] vdt2, double[:, ::1] mask,
                 double inv_dz2, double inv_dx2):
    cdef Py_ssize_t nz = cur.shape[0]
    cdef Py_ssize_t nx = cur.shape[1]
    cdef Py_ssize_t i, j
    cdef double c0 = -2.5
    cdef double c1 = 4.0 / 3.0
    cdef double c2 = -1.0 / 12.0
    cdef double lap, damped
    for i in range(2, nz - 2):
        for j in range(2, nx - 2):
            w[i, j] = vdt2[i, j] * mask[i, j] * cur[i, j]
    for i in range(2, nz - 2):
        for j in range(2, nx - 2):
            lap = (c2 * (w[i - 2, j] + w[i + 2, j])
                   + c1 * (w[i - 1, j] + w[i + 1, j])
                   + c0 * w[i, j]) * inv_dz2 \
                + (c2 * (w[i, j - 2] + w[i, j + 2])
                   + c1 * (w[i, j - 1] + w[i, j + 1])
                   + c0 * w[i, j]) * inv_dx2
            damped = mask[i, j] * cur[i, j]
            nxt[i, j] = 2.0 * damped - mask[i, j] * prv[i, j] + lap
            prv[i, j] = damped
