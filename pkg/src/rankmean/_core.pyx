"""Compiled pipeline for the N-matrix rank-preserving mean (ls shapes, chordal subspace).

Mirrors the NumPy implementation step for step so both backends agree to
rounding error: stacked compact SVD for the mean subspace, per-input
alignment SVDs, shape transport, then the fixed-point Karcher loop on the
p-by-p shapes. All LAPACK/BLAS calls go through SciPy's Cython bindings so
nothing re-enters the Python layer inside the loops.
"""

import numpy as np

from libc.math cimport acos, exp, fabs, log, sqrt

from scipy.linalg.cython_blas cimport dgemm
from scipy.linalg.cython_lapack cimport dgesdd, dsyevd

cdef double PI = 3.141592653589793238462643383279502884

STATUS_OK = 0
STATUS_AMBIGUOUS = 1
STATUS_CUT_LOCUS = 2
STATUS_OUT_OF_BALL = 3
STATUS_NO_CONVERGENCE = 4
STATUS_NUMERICAL = 5


cdef void _gemm(char ta, char tb, int m, int n, int k,
                double* a, int lda, double* b, int ldb,
                double beta, double* c, int ldc) noexcept nogil:
    cdef double one = 1.0
    dgemm(&ta, &tb, &m, &n, &k, &one, a, &lda, b, &ldb, &beta, c, &ldc)


cdef void _sym_from_eig(int p, double* v, double* f, double* tmp, double* out) noexcept nogil:
    # out = V diag(f) V^T, all column-major p x p
    cdef int a, k
    for k in range(p):
        for a in range(p):
            tmp[a + k * p] = v[a + k * p] * f[k]
    _gemm(b'N', b'T', p, p, p, tmp, p, v, p, 0.0, out, p)


cdef void _symmetrize(int p, double* a) noexcept nogil:
    cdef int i, j
    cdef double m
    for i in range(p):
        for j in range(i + 1, p):
            m = 0.5 * (a[i + j * p] + a[j + i * p])
            a[i + j * p] = m
            a[j + i * p] = m


cdef inline double _clip01(double v) noexcept nogil:
    if v < 0.0:
        return 0.0
    if v > 1.0:
        return 1.0
    return v


def mean_ls_chordal(double[:, :, ::1] u_stack, double[:, :, ::1] r2_stack,
                    double[::1] weights, double tol, int max_iter, double step,
                    bint ball_check, double ball_radius, double cut_margin,
                    double gap_tol):
    """Full mean pipeline on factored inputs.

    Returns ``(status, iterations, residual, W, T)`` with ``W`` the (n, p)
    mean-subspace basis and ``T`` the (p, p) mean shape. Non-zero status
    flags a precondition or convergence failure; negative status carries a
    LAPACK info code.
    """
    cdef int n_mats = u_stack.shape[0]
    cdef int n = u_stack.shape[1]
    cdef int p = u_stack.shape[2]
    cdef int np_tot = n_mats * p
    cdef int mn = n if n < np_tot else np_tot
    cdef int pp = p * p
    cdef int i, j, k, c, it, am
    cdef int info = 0
    cdef int minus_one = -1
    cdef double best, val, lam1, lam_p, lam_next, theta, ang_sq, sw
    cdef double resid = 0.0
    cdef double wkopt = 0.0
    cdef double cut_angle = 0.5 * PI - cut_margin

    # --- integer workspace (needed already for the size queries) ------------
    cdef int liwork_cap = 8 * mn
    if liwork_cap < 5 * p + 3:
        liwork_cap = 5 * p + 3
    if liwork_cap < 64:
        liwork_cap = 64
    iwork_arr = np.empty(liwork_cap, dtype=np.intc)
    cdef int[::1] iwork_mv = iwork_arr
    cdef int* iwork = &iwork_mv[0]

    # --- floating workspace size queries -------------------------------------
    cdef int lwork_big, lwork_small, lwork_ev, liwork_ev, lwork
    cdef double qdummy = 0.0
    dgesdd(<char*>b'S', &n, &np_tot, &qdummy, &n, &qdummy, &qdummy, &n,
           &qdummy, &mn, &wkopt, &minus_one, iwork, &info)
    if info != 0:
        return -info, 0, 0.0, None, None
    lwork_big = <int>wkopt
    dgesdd(<char*>b'A', &p, &p, &qdummy, &p, &qdummy, &qdummy, &p,
           &qdummy, &p, &wkopt, &minus_one, iwork, &info)
    if info != 0:
        return -info, 0, 0.0, None, None
    lwork_small = <int>wkopt
    dsyevd(<char*>b'V', <char*>b'L', &p, &qdummy, &p, &qdummy,
           &wkopt, &minus_one, iwork, &minus_one, &info)
    if info != 0:
        return -info, 0, 0.0, None, None
    lwork_ev = <int>wkopt
    liwork_ev = iwork[0]
    if liwork_ev > liwork_cap:
        return STATUS_NUMERICAL, 0, 0.0, None, None

    lwork = lwork_big
    if lwork_small > lwork:
        lwork = lwork_small
    if lwork_ev > lwork:
        lwork = lwork_ev
    work_arr = np.empty(lwork, dtype=np.float64)
    cdef double[::1] work_mv = work_arr
    cdef double* work = &work_mv[0]

    # --- floating buffers -----------------------------------------------------
    z_arr = np.empty(n * np_tot, dtype=np.float64)
    u_arr = np.empty(n * mn, dtype=np.float64)
    vt_arr = np.empty(mn * np_tot, dtype=np.float64)
    s_arr = np.empty(mn, dtype=np.float64)
    ts_arr = np.empty(n_mats * pp, dtype=np.float64)
    small_arr = np.empty(10 * pp + 3 * p, dtype=np.float64)
    cdef double[::1] z_mv = z_arr
    cdef double[::1] u_mv = u_arr
    cdef double[::1] vt_mv = vt_arr
    cdef double[::1] s_mv = s_arr
    cdef double[::1] ts_mv = ts_arr
    cdef double[::1] small_mv = small_arr
    cdef double* z = &z_mv[0]
    cdef double* u = &u_mv[0]
    cdef double* vt = &vt_mv[0]
    cdef double* s = &s_mv[0]
    cdef double* ts = &ts_mv[0]
    cdef double* cbuf = &small_mv[0]
    cdef double* osmall = cbuf + pp
    cdef double* vtsmall = osmall + pp
    cdef double* tmp1 = vtsmall + pp
    cdef double* tmp2 = tmp1 + pp
    cdef double* xbuf = tmp2 + pp
    cdef double* xs = xbuf + pp
    cdef double* xis = xs + pp
    cdef double* lbuf = xis + pp
    cdef double* evecs = lbuf + pp
    cdef double* ssmall = evecs + pp
    cdef double* evals = ssmall + p
    cdef double* fvals = evals + p

    # --- 1. mean subspace: compact SVD of the stacked scaled bases ----------
    for k in range(n_mats):
        sw = sqrt(weights[k])
        for j in range(p):
            c = (k * p + j) * n
            for i in range(n):
                z[i + c] = sw * u_stack[k, i, j]
    dgesdd(<char*>b'S', &n, &np_tot, z, &n, s, u, &n, vt, &mn,
           work, &lwork, iwork, &info)
    if info != 0:
        return -info, 0, 0.0, None, None

    # deterministic sign: largest-magnitude entry of each kept column >= 0
    for c in range(p):
        am = 0
        best = fabs(u[c * n])
        for i in range(1, n):
            val = fabs(u[i + c * n])
            if val > best:
                best = val
                am = i
        if u[am + c * n] < 0.0:
            for i in range(n):
                u[i + c * n] = -u[i + c * n]

    lam1 = s[0] * s[0]
    lam_p = s[p - 1] * s[p - 1]
    lam_next = s[p] * s[p] if p < mn else 0.0
    if lam1 <= 0.0 or lam_p - lam_next < gap_tol * lam1:
        return STATUS_AMBIGUOUS, 0, 0.0, None, None

    # --- 2. align every input with the mean subspace, transport shapes ------
    for k in range(n_mats):
        # C-contiguous (n, p) memory read column-major is exactly U_k^T (p x n)
        _gemm(b'N', b'N', p, p, n, &u_stack[k, 0, 0], p, u, n, 0.0, cbuf, p)
        dgesdd(<char*>b'A', &p, &p, cbuf, &p, ssmall, osmall, &p, vtsmall, &p,
               work, &lwork, iwork, &info)
        if info != 0:
            return -info, 0, 0.0, None, None
        theta = acos(_clip01(ssmall[p - 1]))
        if theta >= cut_angle:
            return STATUS_CUT_LOCUS, 0, 0.0, None, None
        if ball_check:
            ang_sq = 0.0
            for j in range(p):
                theta = acos(_clip01(ssmall[j]))
                ang_sq += theta * theta
            if sqrt(ang_sq) > ball_radius:
                return STATUS_OUT_OF_BALL, 0, 0.0, None, None
        # S_k = O^T R2 O, then T_k = OW S_k OW^T with OW^T = vtsmall
        _gemm(b'N', b'N', p, p, p, &r2_stack[k, 0, 0], p, osmall, p, 0.0, tmp1, p)
        _gemm(b'T', b'N', p, p, p, osmall, p, tmp1, p, 0.0, tmp2, p)
        _gemm(b'N', b'N', p, p, p, tmp2, p, vtsmall, p, 0.0, tmp1, p)
        _gemm(b'T', b'N', p, p, p, vtsmall, p, tmp1, p, 0.0, ts + k * pp, p)
        _symmetrize(p, ts + k * pp)

    # --- 3. Karcher (ls) mean of the transported shapes ----------------------
    for i in range(pp):
        xbuf[i] = 0.0
    for k in range(n_mats):
        for i in range(pp):
            xbuf[i] += weights[k] * ts[k * pp + i]

    cdef int iterations = 0
    cdef int status = STATUS_NO_CONVERGENCE
    for it in range(max_iter):
        iterations = it + 1
        for i in range(pp):
            evecs[i] = xbuf[i]
        dsyevd(<char*>b'V', <char*>b'L', &p, evecs, &p, evals,
               work, &lwork, iwork, &liwork_cap, &info)
        if info != 0:
            return -info, iterations, resid, None, None
        if evals[0] <= 0.0:
            return STATUS_NUMERICAL, iterations, resid, None, None
        for j in range(p):
            fvals[j] = sqrt(evals[j])
        _sym_from_eig(p, evecs, fvals, tmp1, xs)
        for j in range(p):
            fvals[j] = 1.0 / fvals[j]
        _sym_from_eig(p, evecs, fvals, tmp1, xis)

        for i in range(pp):
            lbuf[i] = 0.0
        for k in range(n_mats):
            _gemm(b'N', b'N', p, p, p, xis, p, ts + k * pp, p, 0.0, tmp1, p)
            _gemm(b'N', b'N', p, p, p, tmp1, p, xis, p, 0.0, evecs, p)
            _symmetrize(p, evecs)
            dsyevd(<char*>b'V', <char*>b'L', &p, evecs, &p, evals,
                   work, &lwork, iwork, &liwork_cap, &info)
            if info != 0:
                return -info, iterations, resid, None, None
            if evals[0] <= 0.0:
                return STATUS_NUMERICAL, iterations, resid, None, None
            for j in range(p):
                fvals[j] = log(evals[j])
            _sym_from_eig(p, evecs, fvals, tmp1, tmp2)
            for i in range(pp):
                lbuf[i] += weights[k] * tmp2[i]
        _symmetrize(p, lbuf)

        resid = 0.0
        for i in range(pp):
            resid += lbuf[i] * lbuf[i]
        resid = sqrt(resid)
        if resid < tol * p:
            status = STATUS_OK
            break

        for i in range(pp):
            evecs[i] = step * lbuf[i]
        dsyevd(<char*>b'V', <char*>b'L', &p, evecs, &p, evals,
               work, &lwork, iwork, &liwork_cap, &info)
        if info != 0:
            return -info, iterations, resid, None, None
        for j in range(p):
            fvals[j] = exp(evals[j])
        _sym_from_eig(p, evecs, fvals, tmp1, tmp2)
        _gemm(b'N', b'N', p, p, p, xs, p, tmp2, p, 0.0, tmp1, p)
        _gemm(b'N', b'N', p, p, p, tmp1, p, xs, p, 0.0, xbuf, p)
        _symmetrize(p, xbuf)

    # --- outputs --------------------------------------------------------------
    w_out = np.empty((n, p), dtype=np.float64)
    t_out = np.empty((p, p), dtype=np.float64)
    cdef double[:, ::1] w_mv = w_out
    cdef double[:, ::1] t_mv = t_out
    for j in range(p):
        for i in range(n):
            w_mv[i, j] = u[i + j * n]
    for j in range(p):
        for i in range(p):
            t_mv[i, j] = 0.5 * (xbuf[i + j * p] + xbuf[j + i * p])
    return status, iterations, resid, w_out, t_out
