# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled density-matrix kernels.

Same API and index conventions as ``_kernels_py``: batches of (B, D, D)
complex128 density matrices, qubit 0 = most significant basis bit.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND_NAME = "compiled"

ctypedef double complex cplx


cdef inline int _n_qubits(Py_ssize_t dim) except -1:
    cdef int n = 0
    cdef Py_ssize_t d = dim
    while d > 1:
        if d & 1:
            raise ValueError("dimension is not a power of two")
        d >>= 1
        n += 1
    return n


def apply_1q(cnp.ndarray[cplx, ndim=3] rho, cnp.ndarray[cplx, ndim=2] gate, int qubit):
    """Conjugate each density matrix by a single-qubit gate: U rho U^dag."""
    cdef Py_ssize_t nb = rho.shape[0]
    cdef Py_ssize_t dim = rho.shape[1]
    cdef int nq = _n_qubits(dim)
    cdef int shift = nq - 1 - qubit
    cdef Py_ssize_t mask = 1 << shift
    cdef Py_ssize_t low = mask - 1
    cdef cplx g00 = gate[0, 0], g01 = gate[0, 1], g10 = gate[1, 0], g11 = gate[1, 1]
    cdef cplx c00 = g00.conjugate(), c01 = g01.conjugate()
    cdef cplx c10 = g10.conjugate(), c11 = g11.conjugate()
    cdef cnp.ndarray[cplx, ndim=3] out = np.empty_like(rho)
    cdef cplx[:, :, ::1] r = rho
    cdef cplx[:, :, ::1] o = out
    cdef Py_ssize_t b, base, i0, i1, c, row
    cdef cplx v0, v1
    cdef Py_ssize_t half = dim >> 1
    for b in range(nb):
        # left multiply: rows
        for base in range(half):
            i0 = ((base >> shift) << (shift + 1)) | (base & low)
            i1 = i0 | mask
            for c in range(dim):
                v0 = r[b, i0, c]
                v1 = r[b, i1, c]
                o[b, i0, c] = g00 * v0 + g01 * v1
                o[b, i1, c] = g10 * v0 + g11 * v1
        # right multiply by U^dag: columns (in place on out)
        for row in range(dim):
            for base in range(half):
                i0 = ((base >> shift) << (shift + 1)) | (base & low)
                i1 = i0 | mask
                v0 = o[b, row, i0]
                v1 = o[b, row, i1]
                o[b, row, i0] = v0 * c00 + v1 * c01
                o[b, row, i1] = v0 * c10 + v1 * c11
    return out


def apply_cnot(cnp.ndarray[cplx, ndim=3] rho, int control, int target):
    """Conjugate each density matrix by CNOT(control, target)."""
    cdef Py_ssize_t nb = rho.shape[0]
    cdef Py_ssize_t dim = rho.shape[1]
    cdef int nq = _n_qubits(dim)
    cdef Py_ssize_t cmask = 1 << (nq - 1 - control)
    cdef Py_ssize_t tmask = 1 << (nq - 1 - target)
    cdef cnp.ndarray[cplx, ndim=3] out = np.empty_like(rho)
    cdef cplx[:, :, ::1] r = rho
    cdef cplx[:, :, ::1] o = out
    cdef Py_ssize_t b, i, j, pi, pj
    for b in range(nb):
        for i in range(dim):
            pi = i ^ tmask if i & cmask else i
            for j in range(dim):
                pj = j ^ tmask if j & cmask else j
                o[b, i, j] = r[b, pi, pj]
    return out


def depolarize(cnp.ndarray[cplx, ndim=3] rho, int qubit, double strength):
    """Single-qubit depolarizing channel.

    rho -> (1 - strength) * rho + strength * (I/2 tensored with tr_q rho).
    """
    cdef Py_ssize_t nb = rho.shape[0]
    cdef Py_ssize_t dim = rho.shape[1]
    cdef int nq = _n_qubits(dim)
    cdef int shift = nq - 1 - qubit
    cdef Py_ssize_t mask = 1 << shift
    cdef Py_ssize_t low = mask - 1
    cdef double keep = 1.0 - strength
    cdef double half_s = 0.5 * strength
    cdef cnp.ndarray[cplx, ndim=3] out = np.empty_like(rho)
    cdef cplx[:, :, ::1] r = rho
    cdef cplx[:, :, ::1] o = out
    cdef Py_ssize_t b, rb, cb, i0, i1, j0, j1
    cdef Py_ssize_t half = dim >> 1
    cdef cplx avg
    for b in range(nb):
        for rb in range(half):
            i0 = ((rb >> shift) << (shift + 1)) | (rb & low)
            i1 = i0 | mask
            for cb in range(half):
                j0 = ((cb >> shift) << (shift + 1)) | (cb & low)
                j1 = j0 | mask
                avg = half_s * (r[b, i0, j0] + r[b, i1, j1])
                o[b, i0, j0] = keep * r[b, i0, j0] + avg
                o[b, i1, j1] = keep * r[b, i1, j1] + avg
                o[b, i0, j1] = keep * r[b, i0, j1]
                o[b, i1, j0] = keep * r[b, i1, j0]
    return out
