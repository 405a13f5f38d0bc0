# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled one-sided Jacobi sweeps.

Works on the transposed working matrix so each column of the input is a
contiguous row. Mirrors ``_jacobi_py.jacobi_sweeps`` operation for operation.
"""
from libc.math cimport fabs, sqrt


def jacobi_sweeps(double[:, ::1] gt, double[:, ::1] vt, double tol, int max_sweeps, double floor=0.0):
    """Orthogonalize the rows of ``gt`` in place, accumulating rotations in ``vt``.

    Pairs where either squared row norm is ``<= floor`` are left alone: such a
    row is numerically zero and would otherwise keep rotating on round-off.
    Returns the number of sweeps used, or -1 if ``max_sweeps`` was exhausted.
    """
    cdef Py_ssize_t n = gt.shape[0]
    cdef Py_ssize_t m = gt.shape[1]
    cdef Py_ssize_t nv = vt.shape[1]
    cdef Py_ssize_t p, q, i
    cdef double alpha, beta, gamma, zeta, t, c, s, x, y
    cdef int sweep
    cdef bint rotated

    for sweep in range(1, max_sweeps + 1):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for i in range(m):
                    x = gt[p, i]
                    y = gt[q, i]
                    alpha += x * x
                    beta += y * y
                    gamma += x * y
                if gamma == 0.0 or alpha <= floor or beta <= floor or fabs(gamma) <= tol * sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                if fabs(zeta) > 1e150:
                    t = 0.5 / zeta
                elif zeta >= 0.0:
                    t = 1.0 / (zeta + sqrt(1.0 + zeta * zeta))
                else:
                    t = -1.0 / (-zeta + sqrt(1.0 + zeta * zeta))
                c = 1.0 / sqrt(1.0 + t * t)
                s = c * t
                for i in range(m):
                    x = gt[p, i]
                    y = gt[q, i]
                    gt[p, i] = c * x - s * y
                    gt[q, i] = s * x + c * y
                for i in range(nv):
                    x = vt[p, i]
                    y = vt[q, i]
                    vt[p, i] = c * x - s * y
                    vt[q, i] = s * x + c * y
        if not rotated:
            return sweep
    return -1
