# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_pykernels``; same signatures and status codes."""
import numpy as np

from libc.math cimport fabs, sqrt
from libc.stdlib cimport malloc, free


cdef inline double _update(double u_new, double u_old, double f_old, double back_old,
                           double k0, double fy, double r,
                           double *back_out, double *kt_out) nogil:
    cdef double f_tr = f_old + k0 * (u_new - u_old)
    cdef double xi = f_tr - back_old
    cdef double excess = fabs(xi) - fy
    cdef double s
    if excess <= 0.0:
        back_out[0] = back_old
        kt_out[0] = k0
        return f_tr
    s = 1.0 if xi > 0.0 else -1.0
    back_out[0] = back_old + r * excess * s
    kt_out[0] = r * k0
    return f_tr - (1.0 - r) * excess * s


def bilinear_update(double u_new, double u_old, double f_old, double back_old,
                    double k0, double fy, double r):
    cdef double back, kt
    cdef double f = _update(u_new, u_old, f_old, back_old, k0, fy, r, &back, &kt)
    return f, back, kt


def sdof_newmark(double[::1] ag, double dt, double m, double c, double k0, double fy,
                 double r, double u0, double v0, double beta, double gamma, double tol,
                 int max_iter):
    cdef Py_ssize_t n = ag.shape[0]
    u_arr = np.zeros(n)
    v_arr = np.zeros(n)
    a_arr = np.zeros(n)
    f_arr = np.zeros(n)
    if n == 0:
        return u_arr, v_arr, a_arr, f_arr, -1
    cdef double[::1] u = u_arr
    cdef double[::1] v = v_arr
    cdef double[::1] a = a_arr
    cdef double[::1] f = f_arr
    cdef double back, bi, kt, fi, un, vn, an, ui, vi, ai, p, res, du
    cdef double c1 = 1.0 / (beta * dt * dt)
    cdef double c2 = 1.0 / (beta * dt)
    cdef double c3 = 1.0 / (2.0 * beta) - 1.0
    cdef double g1 = gamma / (beta * dt)
    cdef double g2 = 1.0 - gamma / beta
    cdef double g3 = dt * (1.0 - gamma / (2.0 * beta))
    cdef Py_ssize_t i
    cdef int it
    cdef int status = -1
    with nogil:
        fi = _update(u0, 0.0, 0.0, 0.0, k0, fy, r, &back, &kt)
        un = u0
        vn = v0
        an = (-m * ag[0] - c * vn - fi) / m
        u[0] = un
        v[0] = vn
        a[0] = an
        f[0] = fi
        for i in range(1, n):
            p = -m * ag[i]
            ui = un
            it = 0
            while True:
                fi = _update(ui, un, f[i - 1], back, k0, fy, r, &bi, &kt)
                ai = c1 * (ui - un) - c2 * vn - c3 * an
                vi = g1 * (ui - un) + g2 * vn + g3 * an
                res = m * ai + c * vi + fi - p
                if fabs(res) <= tol:
                    break
                du = -res / (m * c1 + c * g1 + kt)
                ui = ui + du
                it += 1
                if fabs(du) <= 1e-15 * (fabs(ui) + 1e-300):
                    fi = _update(ui, un, f[i - 1], back, k0, fy, r, &bi, &kt)
                    ai = c1 * (ui - un) - c2 * vn - c3 * an
                    vi = g1 * (ui - un) + g2 * vn + g3 * an
                    break
                if it >= max_iter:
                    status = <int>i
                    break
            if status >= 0:
                break
            back = bi
            u[i] = ui
            v[i] = vi
            a[i] = ai
            f[i] = fi
            un = ui
            vn = vi
            an = ai
    return u_arr, v_arr, a_arr, f_arr, status


cdef void _state(Py_ssize_t n, double *ui, double *un, double *fst, double *back,
                 double *k, double *fy, double *r, double *fnew, double *bnew,
                 double *kt) nogil:
    cdef Py_ssize_t j
    cdef double dn, do
    for j in range(n):
        dn = ui[j] - (ui[j - 1] if j > 0 else 0.0)
        do = un[j] - (un[j - 1] if j > 0 else 0.0)
        fnew[j] = _update(dn, do, fst[j], back[j], k[j], fy[j], r[j], &bnew[j], &kt[j])


def mdof_newmark(double[::1] ag, double dt, double[::1] mass, double[::1] k0,
                 double[::1] fy, double[::1] r, double a0, double a1, double beta,
                 double gamma, double tol, int max_iter):
    cdef Py_ssize_t nt = ag.shape[0]
    cdef Py_ssize_t n = mass.shape[0]
    U_arr = np.zeros((nt, n))
    V_arr = np.zeros((nt, n))
    A_arr = np.zeros((nt, n))
    F_arr = np.zeros((nt, n))
    if nt == 0:
        return U_arr, V_arr, A_arr, F_arr, -1
    cdef double[:, ::1] U = U_arr
    cdef double[:, ::1] V = V_arr
    cdef double[:, ::1] A = A_arr
    cdef double[:, ::1] Fs = F_arr
    cdef double *work = <double *> malloc(20 * n * sizeof(double))
    if work == NULL:
        raise MemoryError()
    cdef double *m = work
    cdef double *k = work + n
    cdef double *fyv = work + 2 * n
    cdef double *rv = work + 3 * n
    cdef double *un = work + 4 * n
    cdef double *vn = work + 5 * n
    cdef double *an = work + 6 * n
    cdef double *fst = work + 7 * n
    cdef double *back = work + 8 * n
    cdef double *ui = work + 9 * n
    cdef double *vi = work + 10 * n
    cdef double *ai = work + 11 * n
    cdef double *fnew = work + 12 * n
    cdef double *bnew = work + 13 * n
    cdef double *kt = work + 14 * n
    cdef double *res = work + 15 * n
    cdef double *diag = work + 16 * n
    cdef double *upper = work + 17 * n
    cdef double *cp = work + 18 * n
    cdef double *dp = work + 19 * n
    cdef double c1 = 1.0 / (beta * dt * dt)
    cdef double c2 = 1.0 / (beta * dt)
    cdef double c3 = 1.0 / (2.0 * beta) - 1.0
    cdef double g1 = gamma / (beta * dt)
    cdef double g2 = 1.0 - gamma / beta
    cdef double g3 = dt * (1.0 - gamma / (2.0 * beta))
    cdef double rmax, umax, dmax, kv, den, lower_j, x
    cdef Py_ssize_t i, j
    cdef int it
    cdef int status = -1
    try:
        with nogil:
            for j in range(n):
                m[j] = mass[j]
                k[j] = k0[j]
                fyv[j] = fy[j]
                rv[j] = r[j]
                un[j] = 0.0
                vn[j] = 0.0
                an[j] = -ag[0]
                fst[j] = 0.0
                back[j] = 0.0
                A[0, j] = an[j]
            for i in range(1, nt):
                for j in range(n):
                    ui[j] = un[j]
                it = 0
                while True:
                    _state(n, ui, un, fst, back, k, fyv, rv, fnew, bnew, kt)
                    for j in range(n):
                        ai[j] = c1 * (ui[j] - un[j]) - c2 * vn[j] - c3 * an[j]
                        vi[j] = g1 * (ui[j] - un[j]) + g2 * vn[j] + g3 * an[j]
                    rmax = 0.0
                    for j in range(n):
                        # K0 v and internal forces, assembled story by story
                        kv = k[j] * (vi[j] - (vi[j - 1] if j > 0 else 0.0))
                        if j + 1 < n:
                            kv = kv - k[j + 1] * (vi[j + 1] - vi[j])
                        x = fnew[j]
                        if j + 1 < n:
                            x = x - fnew[j + 1]
                        res[j] = m[j] * ai[j] + a0 * m[j] * vi[j] + a1 * kv + x + m[j] * ag[i]
                        if fabs(res[j]) > rmax:
                            rmax = fabs(res[j])
                    if rmax <= tol:
                        break
                    for j in range(n):
                        diag[j] = m[j] * (c1 + g1 * a0) + g1 * a1 * k[j] + kt[j]
                        upper[j] = 0.0
                        if j + 1 < n:
                            diag[j] = diag[j] + g1 * a1 * k[j + 1] + kt[j + 1]
                            upper[j] = -(g1 * a1 * k[j + 1] + kt[j + 1])
                    # Thomas solve for du, stored back into res
                    cp[0] = upper[0] / diag[0] if n > 1 else 0.0
                    dp[0] = -res[0] / diag[0]
                    for j in range(1, n):
                        lower_j = upper[j - 1]
                        den = diag[j] - lower_j * cp[j - 1]
                        cp[j] = upper[j] / den if j < n - 1 else 0.0
                        dp[j] = (-res[j] - lower_j * dp[j - 1]) / den
                    res[n - 1] = dp[n - 1]
                    for j in range(n - 2, -1, -1):
                        res[j] = dp[j] - cp[j] * res[j + 1]
                    umax = 0.0
                    dmax = 0.0
                    for j in range(n):
                        ui[j] = ui[j] + res[j]
                        if fabs(ui[j]) > umax:
                            umax = fabs(ui[j])
                        if fabs(res[j]) > dmax:
                            dmax = fabs(res[j])
                    it += 1
                    if dmax <= 1e-15 * (umax + 1e-300):
                        _state(n, ui, un, fst, back, k, fyv, rv, fnew, bnew, kt)
                        for j in range(n):
                            ai[j] = c1 * (ui[j] - un[j]) - c2 * vn[j] - c3 * an[j]
                            vi[j] = g1 * (ui[j] - un[j]) + g2 * vn[j] + g3 * an[j]
                        break
                    if it >= max_iter:
                        status = <int>i
                        break
                if status >= 0:
                    break
                for j in range(n):
                    fst[j] = fnew[j]
                    back[j] = bnew[j]
                    un[j] = ui[j]
                    vn[j] = vi[j]
                    an[j] = ai[j]
                    U[i, j] = ui[j]
                    V[i, j] = vi[j]
                    A[i, j] = ai[j]
                    Fs[i, j] = fst[j]
    finally:
        free(work)
    return U_arr, V_arr, A_arr, F_arr, status


def adam_update(double[::1] p, const double[::1] g, double[::1] m, double[::1] v, mask,
                double lr, double beta1, double beta2, double eps, double c1, double c2):
    cdef Py_ssize_t i, n = p.shape[0]
    cdef const double[::1] mk
    cdef bint use_mask = mask is not None
    cdef double gi, step = lr / c1, inv_c2 = 1.0 / c2
    if use_mask:
        mk = mask
    else:
        mk = g
    with nogil:
        for i in range(n):
            gi = g[i]
            m[i] = beta1 * m[i] + (1.0 - beta1) * gi
            v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi
            p[i] -= step * m[i] / (sqrt(v[i] * inv_c2) + eps)
            if use_mask:
                p[i] *= mk[i]
