# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Batched Bloch-vector integrator, compiled implementation.

Same interface and algorithm as `nvbath._kernel_py.evolve`; the intra-bath
sums go through BLAS dgemm over the (J, M) component blocks and all
elementwise stages are fused C loops.  Operation order mirrors the numpy
implementation so the two agree to rounding noise.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport isfinite, sqrt
from libc.string cimport memcpy
from scipy.linalg.cython_blas cimport dgemm, dgemv

from .errors import NumericalError

cnp.import_array()

ctypedef cnp.float64_t f64


cdef void _bath_gemm(double* d, double* y_bath, double* out, int J, int M) noexcept nogil:
    # out(J,M) = D(J,J) @ y_bath(J,M), all row-major
    cdef int m = M, n = J, k = J
    cdef double one = 1.0, zero = 0.0
    dgemm("N", "N", &m, &n, &k, &one, y_bath, &m, d, &k, &zero, out, &m)


cdef void _gemv_field(double* a, double* yz_bath, double* f0,
                      int J, int M, double half_sb) noexcept nogil:
    # f0(M) = half_sb * A(J) . yz_bath(J,M)
    cdef int m = M, n = J, inc = 1
    cdef double one = 1.0, zero = 0.0
    cdef Py_ssize_t i
    dgemv("N", &m, &n, &one, yz_bath, &m, a, &inc, &zero, f0, &inc)
    for i in range(M):
        f0[i] *= half_sb


cdef void _fields(
    double* yx, double* yy, double* yz,
    double* bx, double* by, double* bz,
    double* a, double* d, double* hz, double* f0,
    int K, int J, int M, int ba_row, double half_sb,
) noexcept nogil:
    cdef Py_ssize_t j, m, row
    cdef double aj
    cdef double* yzb
    if J > 0:
        _bath_gemm(d, yx + K * M, bx + K * M, J, M)
        _bath_gemm(d, yy + K * M, by + K * M, J, M)
        _bath_gemm(d, yz + K * M, bz + K * M, J, M)
        for j in range(J):
            row = (K + j) * M
            for m in range(M):
                bx[row + m] *= -0.25
                by[row + m] *= -0.25
                bz[row + m] *= 0.5
        if ba_row >= 0:
            yzb = yz + ba_row * M
            for j in range(J):
                row = (K + j) * M
                aj = half_sb * a[j]
                for m in range(M):
                    bz[row + m] += aj * yzb[m]
        for j in range(J):
            row = (K + j) * M
            for m in range(M):
                bz[row + m] += hz[j * M + m]
        _gemv_field(a, yz + K * M, f0, J, M, half_sb)
    else:
        for m in range(M):
            f0[m] = 0.0
    for j in range(K):
        row = j * M
        for m in range(M):
            bz[row + m] = f0[m]


cdef void _cross(double* bx, double* by, double* bz,
                 double* yx, double* yy, double* yz,
                 double* kx, double* ky, double* kz, Py_ssize_t nm) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(nm):
        kx[i] = by[i] * yz[i] - bz[i] * yy[i]
        ky[i] = bz[i] * yx[i] - bx[i] * yz[i]
        kz[i] = bx[i] * yy[i] - by[i] * yx[i]


cdef void _axpy_set(double* out, double* y0, double* k, double c, Py_ssize_t n) noexcept nogil:
    # out = y0 + c * k, rounding c*k first as the numpy path does
    cdef Py_ssize_t i
    cdef double ck
    for i in range(n):
        ck = c * k[i]
        out[i] = y0[i] + ck


cdef void _acc_add(double* acc, double* k, double w, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    cdef double wk
    for i in range(n):
        wk = w * k[i]
        acc[i] += wk


cdef int _renormalize(double* sx, double* sy, double* sz, Py_ssize_t nm) noexcept nogil:
    cdef Py_ssize_t i
    cdef double n2, inv
    for i in range(nm):
        n2 = sx[i] * sx[i] + sy[i] * sy[i] + sz[i] * sz[i]
        if not (n2 > 0.0) or not isfinite(n2):
            return 1
        inv = 1.0 / sqrt(n2)
        sx[i] *= inv
        sy[i] *= inv
        sz[i] *= inv
    return 0


cdef void _apply_pulse(double* sx, double* sy, double* sz,
                       double* mat, Py_ssize_t r, Py_ssize_t M) noexcept nogil:
    cdef Py_ssize_t m
    cdef double vx, vy, vz
    cdef Py_ssize_t row = r * M
    for m in range(M):
        vx = sx[row + m]
        vy = sy[row + m]
        vz = sz[row + m]
        sx[row + m] = mat[0] * vx + mat[1] * vy + mat[2] * vz
        sy[row + m] = mat[3] * vx + mat[4] * vy + mat[5] * vz
        sz[row + m] = mat[6] * vx + mat[7] * vy + mat[8] * vz


def evolve(
    cnp.ndarray[f64, ndim=3] state not None,
    int n_central,
    int backaction_row,
    A,
    D,
    hz,
    double sb_scale,
    double dt,
    long n_steps,
    pulse_steps,
    pulse_rows,
    pulse_mats,
    record_steps,
    record_rows,
    cnp.ndarray[f64, ndim=2] out_x not None,
    cnp.ndarray[f64, ndim=2] out_y not None,
    field_steps=None,
    out_field=None,
    bint renormalize=True,
):
    if state.shape[0] != 3:
        raise ValueError("state must have shape (3, N, M)")
    if not state.flags["C_CONTIGUOUS"]:
        raise ValueError("state must be C-contiguous")
    cdef Py_ssize_t N = state.shape[1]
    cdef Py_ssize_t M = state.shape[2]
    cdef int K = n_central
    cdef int J = <int>N - K

    cdef cnp.ndarray[f64, ndim=3] B = np.zeros((3, N, M))
    cdef cnp.ndarray[f64, ndim=3] Y0 = np.empty((3, N, M))
    cdef cnp.ndarray[f64, ndim=3] KV = np.empty((3, N, M))
    cdef cnp.ndarray[f64, ndim=3] ACC = np.empty((3, N, M))
    cdef cnp.ndarray[f64, ndim=1] f0 = np.empty(max(M, 1))
    cdef cnp.ndarray[f64, ndim=1] a_c = np.ascontiguousarray(A, dtype=np.float64).ravel()
    cdef cnp.ndarray[f64, ndim=2] d_c = (
        np.ascontiguousarray(D, dtype=np.float64)
        if np.asarray(D).size else np.zeros((1, 1))
    )
    cdef cnp.ndarray[f64, ndim=2] hz_c = (
        np.ascontiguousarray(hz, dtype=np.float64)
        if np.asarray(hz).size else np.zeros((1, 1))
    )

    cdef cnp.ndarray[cnp.int64_t, ndim=1] p_steps = np.ascontiguousarray(pulse_steps, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] p_rows = np.ascontiguousarray(pulse_rows, dtype=np.int64)
    cdef cnp.ndarray[f64, ndim=3] p_mats = np.ascontiguousarray(
        np.asarray(pulse_mats, dtype=np.float64).reshape(-1, 3, 3)
    )
    cdef cnp.ndarray[cnp.int64_t, ndim=1] r_steps = np.ascontiguousarray(record_steps, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] r_rows = np.ascontiguousarray(record_rows, dtype=np.int64)

    cdef cnp.ndarray[cnp.int64_t, ndim=1] f_steps
    cdef cnp.ndarray[f64, ndim=2] f_out
    if field_steps is None:
        f_steps = np.empty(0, dtype=np.int64)
        f_out = np.empty((0, max(M, 1)))
    else:
        f_steps = np.ascontiguousarray(field_steps, dtype=np.int64)
        f_out = out_field

    cdef double* sx = &state[0, 0, 0]
    cdef double* sy = &state[1, 0, 0]
    cdef double* sz = &state[2, 0, 0]
    cdef double* bxp = &B[0, 0, 0]
    cdef double* byp = &B[1, 0, 0]
    cdef double* bzp = &B[2, 0, 0]
    cdef double* y0p = &Y0[0, 0, 0]
    cdef double* kvp = &KV[0, 0, 0]
    cdef double* accp = &ACC[0, 0, 0]
    cdef double* f0p = &f0[0]
    cdef double* ap = &a_c[0] if a_c.shape[0] else NULL
    cdef double* dp = &d_c[0, 0]
    cdef double* hzp = &hz_c[0, 0]
    cdef Py_ssize_t nm = N * M
    cdef double half_sb = 0.5 * sb_scale
    cdef int ba = backaction_row

    cdef Py_ssize_t p = 0, q = 0, qf = 0
    cdef Py_ssize_t P = p_steps.shape[0], Q = r_steps.shape[0], Qf = f_steps.shape[0]
    cdef long step
    cdef int err = 0
    cdef Py_ssize_t mm

    # step-0 events
    while p < P and p_steps[p] == 0:
        _apply_pulse(sx, sy, sz, &p_mats[p, 0, 0], p_rows[p], M)
        p += 1
    while q < Q and r_steps[q] == 0:
        memcpy(&out_x[q, 0], sx + r_rows[q] * M, M * sizeof(double))
        memcpy(&out_y[q, 0], sy + r_rows[q] * M, M * sizeof(double))
        q += 1
    while qf < Qf and f_steps[qf] == 0:
        if J > 0:
            _gemv_field(ap, sz + K * M, f0p, J, <int>M, half_sb)
            memcpy(&f_out[qf, 0], f0p, M * sizeof(double))
        else:
            for mm in range(M):
                f_out[qf, mm] = 0.0
        qf += 1

    for step in range(1, n_steps + 1):
        with nogil:
            memcpy(y0p, sx, 3 * nm * sizeof(double))
            # k1
            _fields(sx, sy, sz, bxp, byp, bzp, ap, dp, hzp, f0p, K, J, <int>M, ba, half_sb)
            _cross(bxp, byp, bzp, sx, sy, sz, kvp, kvp + nm, kvp + 2 * nm, nm)
            memcpy(accp, kvp, 3 * nm * sizeof(double))
            _axpy_set(sx, y0p, kvp, 0.5 * dt, 3 * nm)
            # k2
            _fields(sx, sy, sz, bxp, byp, bzp, ap, dp, hzp, f0p, K, J, <int>M, ba, half_sb)
            _cross(bxp, byp, bzp, sx, sy, sz, kvp, kvp + nm, kvp + 2 * nm, nm)
            _axpy_set(sx, y0p, kvp, 0.5 * dt, 3 * nm)
            _acc_add(accp, kvp, 2.0, 3 * nm)
            # k3
            _fields(sx, sy, sz, bxp, byp, bzp, ap, dp, hzp, f0p, K, J, <int>M, ba, half_sb)
            _cross(bxp, byp, bzp, sx, sy, sz, kvp, kvp + nm, kvp + 2 * nm, nm)
            _axpy_set(sx, y0p, kvp, dt, 3 * nm)
            _acc_add(accp, kvp, 2.0, 3 * nm)
            # k4
            _fields(sx, sy, sz, bxp, byp, bzp, ap, dp, hzp, f0p, K, J, <int>M, ba, half_sb)
            _cross(bxp, byp, bzp, sx, sy, sz, kvp, kvp + nm, kvp + 2 * nm, nm)
            _acc_add(accp, kvp, 1.0, 3 * nm)
            _axpy_set(sx, y0p, accp, dt / 6.0, 3 * nm)
            if renormalize:
                err = _renormalize(sx, sy, sz, nm)
        if err:
            raise NumericalError(
                f"non-finite or zero spin norm at step {step} "
                "(coincident spins or unstable step size?)"
            )
        while p < P and p_steps[p] == step:
            _apply_pulse(sx, sy, sz, &p_mats[p, 0, 0], p_rows[p], M)
            p += 1
        while q < Q and r_steps[q] == step:
            memcpy(&out_x[q, 0], sx + r_rows[q] * M, M * sizeof(double))
            memcpy(&out_y[q, 0], sy + r_rows[q] * M, M * sizeof(double))
            q += 1
        while qf < Qf and f_steps[qf] == step:
            if J > 0:
                _gemv_field(ap, sz + K * M, f0p, J, <int>M, half_sb)
                memcpy(&f_out[qf, 0], f0p, M * sizeof(double))
            else:
                for mm in range(M):
                    f_out[qf, mm] = 0.0
            qf += 1
