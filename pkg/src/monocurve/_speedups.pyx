# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twin of the pure-NumPy kernels in `_kernels`: the elementwise
activation/tangent/reverse chains are fused into single C passes (no
temporaries), while the (n,w)x(w,w) products go through BLAS dgemm.
Signatures and semantics match `_kernels.forward` / `_kernels.backward`.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef void _mm_ab_t(double[:, ::1] A, double[:, ::1] B, double[:, ::1] C,
                   double beta) noexcept:
    # row-major C(M,N) = A(M,K) @ B(N,K)^T + beta*C, via column-major BLAS
    cdef int M = A.shape[0], K = A.shape[1], N = B.shape[0]
    cdef double alpha = 1.0
    cdef char ta = b'T', tb = b'N'
    dgemm(&ta, &tb, &N, &M, &K, &alpha, &B[0, 0], &K, &A[0, 0], &K, &beta, &C[0, 0], &N)


cdef void _mm_at_b(double[:, ::1] A, double[:, ::1] B, double[:, ::1] C,
                   double beta) noexcept:
    # row-major C(M,N) = A(K,M)^T @ B(K,N) + beta*C
    cdef int K = A.shape[0], M = A.shape[1], N = B.shape[1]
    cdef double alpha = 1.0
    cdef char ta = b'N', tb = b'T'
    dgemm(&ta, &tb, &N, &M, &K, &alpha, &B[0, 0], &N, &A[0, 0], &M, &beta, &C[0, 0], &N)


cdef void _mm_a_b(double[:, ::1] A, double[:, ::1] B, double[:, ::1] C,
                  double beta) noexcept:
    # row-major C(M,N) = A(M,K) @ B(K,N) + beta*C
    cdef int M = A.shape[0], K = A.shape[1], N = B.shape[1]
    cdef double alpha = 1.0
    cdef char ta = b'N', tb = b'N'
    dgemm(&ta, &tb, &N, &M, &K, &alpha, &B[0, 0], &N, &A[0, 0], &K, &beta, &C[0, 0], &N)


def forward(x, w_in, b, a_hidden, w_skip, a_out, w_out, b_out, has_skip,
            order=0, want_cache=False):
    if want_cache and order < 1:
        order = 1
    x = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] xv = x
    cdef double[::1] winv = np.ascontiguousarray(w_in, dtype=np.float64)
    cdef double[:, ::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    a_hidden = np.ascontiguousarray(a_hidden, dtype=np.float64)
    cdef double[:, ::1] skipv = np.ascontiguousarray(w_skip, dtype=np.float64)
    cdef double[::1] aoutv = np.ascontiguousarray(a_out, dtype=np.float64)
    cdef double woutc = float(w_out)
    cdef double boutc = float(b_out)
    cdef bint skip = bool(has_skip)
    cdef int ordc = int(order)
    cdef bint cachec = bool(want_cache)

    cdef Py_ssize_t n = xv.shape[0]
    cdef Py_ssize_t depth = bv.shape[0]
    cdef Py_ssize_t w = bv.shape[1]

    z_arr = np.empty((depth, n, w))
    zdot_arr = np.empty((depth, n, w)) if ordc >= 1 else None
    e1_arr = np.empty((depth, n, w)) if cachec else None
    e2_arr = np.empty((depth, n, w)) if cachec else None
    hdot_arr = np.empty((depth, n, w)) if cachec else None
    y_arr = np.empty(n)
    dy_arr = np.empty(n) if ordc >= 1 else None
    d2y_arr = np.empty(n) if ordc >= 2 else None

    cdef double[:, :, ::1] z = z_arr
    cdef double[:, :, ::1] zdot = zdot_arr if ordc >= 1 else z_arr
    cdef double[:, :, ::1] e1s = e1_arr if cachec else z_arr
    cdef double[:, :, ::1] e2s = e2_arr if cachec else z_arr
    cdef double[:, :, ::1] hdot = hdot_arr if cachec else z_arr
    cdef double[::1] y = y_arr
    cdef double[::1] dy = dy_arr if ordc >= 1 else y_arr
    cdef double[::1] d2y = d2y_arr if ordc >= 2 else y_arr

    # gemm workspaces: pre-activations and their first/second tangents
    pre_arr = np.empty((n, w))
    hd_arr = np.empty((n, w)) if ordc >= 1 else None
    zdd_arr = np.empty((n, w)) if ordc >= 2 else None
    hdd_arr = np.empty((n, w)) if ordc >= 2 else None
    cdef double[:, ::1] pre = pre_arr
    cdef double[:, ::1] hd = hd_arr if ordc >= 1 else pre_arr
    cdef double[:, ::1] zdd = zdd_arr if ordc >= 2 else pre_arr
    cdef double[:, ::1] hdd = hdd_arr if ordc >= 2 else pre_arr
    cdef double[:, ::1] A2

    cdef Py_ssize_t m, l, o
    cdef double xm, p, ex, d1, d2v, hv, acc, accd, accdd, wv

    # layer 0: pre = x*w_in + b0, fused with the activation
    for m in range(n):
        xm = xv[m]
        for o in range(w):
            wv = winv[o]
            p = wv * xm + bv[0, o]
            if p <= 0.0:
                ex = exp(p)
                z[0, m, o] = ex - 1.0
                d1 = ex
                d2v = ex
            else:
                z[0, m, o] = p
                d1 = 1.0
                d2v = 0.0
            if ordc >= 1:
                zdot[0, m, o] = d1 * wv
            if ordc >= 2:
                zdd[m, o] = d2v * wv * wv
            if cachec:
                e1s[0, m, o] = d1
                e2s[0, m, o] = d2v
                hdot[0, m, o] = wv

    for l in range(1, depth):
        A2 = a_hidden[l - 1]
        _mm_ab_t(z[l - 1], A2, pre, 0.0)
        if ordc >= 1:
            _mm_ab_t(zdot[l - 1], A2, hd, 0.0)
        if ordc >= 2:
            _mm_ab_t(zdd, A2, hdd, 0.0)
        for m in range(n):
            xm = xv[m]
            for o in range(w):
                p = pre[m, o] + bv[l, o]
                if skip:
                    p += skipv[l - 1, o] * xm
                if p <= 0.0:
                    ex = exp(p)
                    z[l, m, o] = ex - 1.0
                    d1 = ex
                    d2v = ex
                else:
                    z[l, m, o] = p
                    d1 = 1.0
                    d2v = 0.0
                if ordc >= 1:
                    hv = hd[m, o]
                    if skip:
                        hv += skipv[l - 1, o]
                    zdot[l, m, o] = d1 * hv
                    if ordc >= 2:
                        zdd[m, o] = d2v * hv * hv + d1 * hdd[m, o]
                    if cachec:
                        e1s[l, m, o] = d1
                        e2s[l, m, o] = d2v
                        hdot[l, m, o] = hv
                elif cachec:
                    e1s[l, m, o] = d1
                    e2s[l, m, o] = d2v

    for m in range(n):
        acc = boutc
        accd = 0.0
        accdd = 0.0
        for o in range(w):
            acc += aoutv[o] * z[depth - 1, m, o]
        if ordc >= 1:
            for o in range(w):
                accd += aoutv[o] * zdot[depth - 1, m, o]
        if ordc >= 2:
            for o in range(w):
                accdd += aoutv[o] * zdd[m, o]
        if skip:
            acc += woutc * xv[m]
            accd += woutc
        y[m] = acc
        if ordc >= 1:
            dy[m] = accd
        if ordc >= 2:
            d2y[m] = accdd

    cache = (x, z_arr, zdot_arr, e1_arr, e2_arr, hdot_arr) if cachec else None
    return y_arr, dy_arr, d2y_arr, cache


def backward(cache, w_in, a_hidden, w_skip, a_out, w_out, has_skip,
             gy, gdy=None, want_gx=False):
    x_arr, z_arr, zdot_arr, e1_arr, e2_arr, hdot_arr = cache
    cdef double[::1] xv = x_arr
    cdef double[:, :, ::1] z = z_arr
    cdef double[:, :, ::1] zdot = zdot_arr
    cdef double[:, :, ::1] e1s = e1_arr
    cdef double[:, :, ::1] e2s = e2_arr
    cdef double[:, :, ::1] hdot = hdot_arr
    cdef double[::1] winv = np.ascontiguousarray(w_in, dtype=np.float64)
    a_hidden = np.ascontiguousarray(a_hidden, dtype=np.float64)
    cdef double[:, ::1] skipv = np.ascontiguousarray(w_skip, dtype=np.float64)
    cdef double[::1] aoutv = np.ascontiguousarray(a_out, dtype=np.float64)
    cdef double woutc = float(w_out)
    cdef bint skip = bool(has_skip)
    cdef bint tangent = gdy is not None
    cdef bint wantgx = bool(want_gx)

    gy = np.ascontiguousarray(gy, dtype=np.float64)
    cdef double[::1] gyv = gy
    cdef double[::1] gdyv = np.ascontiguousarray(gdy, dtype=np.float64) if tangent else gy

    cdef Py_ssize_t n = xv.shape[0]
    cdef Py_ssize_t depth = z.shape[0]
    cdef Py_ssize_t w = z.shape[2]

    g_win_arr = np.zeros(w)
    g_b_arr = np.zeros((depth, w))
    g_A_arr = np.zeros((depth - 1, w, w))
    g_skip_arr = np.zeros((depth - 1, w))
    g_aout_arr = np.zeros(w)
    gx_arr = np.zeros(n) if wantgx else None

    cdef double[::1] g_win = g_win_arr
    cdef double[:, ::1] g_b = g_b_arr
    cdef double[:, :, ::1] g_A = g_A_arr
    cdef double[:, ::1] g_skip = g_skip_arr
    cdef double[::1] g_aout = g_aout_arr
    cdef double[::1] gx = gx_arr if wantgx else g_win
    cdef double g_wout = 0.0
    cdef double g_bout = 0.0

    # batch workspaces for the upstream chains
    gz_arr = np.empty((n, w))
    gh_arr = np.empty((n, w))
    gzd_arr = np.empty((n, w)) if tangent else None
    ghd_arr = np.empty((n, w)) if tangent else None
    cdef double[:, ::1] gz = gz_arr
    cdef double[:, ::1] gh = gh_arr
    cdef double[:, ::1] gzd = gzd_arr if tangent else gz_arr
    cdef double[:, ::1] ghd = ghd_arr if tangent else gz_arr
    cdef double[:, ::1] A2

    cdef Py_ssize_t m, l, o
    cdef double gym, gdym, xm, ghv, ghdv, accw, accb, gxm

    for m in range(n):
        gym = gyv[m]
        g_bout += gym
        for o in range(w):
            gz[m, o] = gym * aoutv[o]
            g_aout[o] += gym * z[depth - 1, m, o]
    if tangent:
        for m in range(n):
            gdym = gdyv[m]
            for o in range(w):
                gzd[m, o] = gdym * aoutv[o]
                g_aout[o] += gdym * zdot[depth - 1, m, o]
    if skip:
        for m in range(n):
            g_wout += gyv[m] * xv[m]
        if tangent:
            for m in range(n):
                g_wout += gdyv[m]
        if wantgx:
            for m in range(n):
                gx[m] = gyv[m] * woutc
    elif wantgx:
        for m in range(n):
            gx[m] = 0.0

    for l in range(depth - 1, 0, -1):
        # fused: gh = gz*e1 (+ gzd*e2*hdot), ghd = gzd*e1, plus the vector
        # reductions g_b, g_skip and the gx skip contribution
        accb = 0.0
        for m in range(n):
            xm = xv[m]
            gxm = 0.0
            if tangent:
                for o in range(w):
                    ghv = gz[m, o] * e1s[l, m, o] + gzd[m, o] * e2s[l, m, o] * hdot[l, m, o]
                    ghdv = gzd[m, o] * e1s[l, m, o]
                    gh[m, o] = ghv
                    ghd[m, o] = ghdv
                    g_b[l, o] += ghv
                    if skip:
                        g_skip[l - 1, o] += ghv * xm + ghdv
                        if wantgx:
                            gxm += ghv * skipv[l - 1, o]
            else:
                for o in range(w):
                    ghv = gz[m, o] * e1s[l, m, o]
                    gh[m, o] = ghv
                    g_b[l, o] += ghv
                    if skip:
                        g_skip[l - 1, o] += ghv * xm
                        if wantgx:
                            gxm += ghv * skipv[l - 1, o]
            if wantgx and skip:
                gx[m] += gxm
        A2 = a_hidden[l - 1]
        _mm_at_b(gh, z[l - 1], g_A[l - 1], 1.0)
        _mm_a_b(gh, A2, gz, 0.0)
        if tangent:
            _mm_at_b(ghd, zdot[l - 1], g_A[l - 1], 1.0)
            _mm_a_b(ghd, A2, gzd, 0.0)

    for m in range(n):
        xm = xv[m]
        gxm = 0.0
        if tangent:
            for o in range(w):
                ghv = gz[m, o] * e1s[0, m, o] + gzd[m, o] * e2s[0, m, o] * hdot[0, m, o]
                ghdv = gzd[m, o] * e1s[0, m, o]
                g_win[o] += ghv * xm + ghdv
                g_b[0, o] += ghv
                if wantgx:
                    gxm += ghv * winv[o]
        else:
            for o in range(w):
                ghv = gz[m, o] * e1s[0, m, o]
                g_win[o] += ghv * xm
                g_b[0, o] += ghv
                if wantgx:
                    gxm += ghv * winv[o]
        if wantgx:
            gx[m] += gxm

    return (g_win_arr, g_b_arr, g_A_arr, g_skip_arr, g_aout_arr,
            float(g_wout), float(g_bout), gx_arr)
