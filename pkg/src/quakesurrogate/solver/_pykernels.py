"""Pure-Python Newmark kernels (reference path and fallback for the Cython build).

Both kernels integrate ``M a + C v + F(u) = -M ag`` with the Newmark family
and a Newton iteration on a kinematic-hardening bilinear spring per step.
They return a status code instead of raising so the Cython twin can share the
exact calling convention: ``status == -1`` on success, otherwise the index of
the step that failed to converge.
"""
import numpy as np


def bilinear_update(u_new, u_old, f_old, back_old, k0, fy, r):
    """Return-map one displacement increment; returns ``(force, back, tangent)``."""
    f_tr = f_old + k0 * (u_new - u_old)
    xi = f_tr - back_old
    excess = abs(xi) - fy
    if excess <= 0.0:
        return f_tr, back_old, k0
    s = 1.0 if xi > 0.0 else -1.0
    return f_tr - (1.0 - r) * excess * s, back_old + r * excess * s, r * k0


def sdof_newmark(ag, dt, m, c, k0, fy, r, u0, v0, beta, gamma, tol, max_iter):
    n = ag.shape[0]
    u = np.zeros(n)
    v = np.zeros(n)
    a = np.zeros(n)
    f = np.zeros(n)
    if n == 0:
        return u, v, a, f, -1
    ag = [float(x) for x in ag]
    # the spring starts virgin at zero force; an initial offset is elastic
    fi, back, kt = bilinear_update(u0, 0.0, 0.0, 0.0, k0, fy, r)
    un, vn = u0, v0
    an = (-m * ag[0] - c * vn - fi) / m
    u[0], v[0], a[0], f[0] = un, vn, an, fi
    c1 = 1.0 / (beta * dt * dt)
    c2 = 1.0 / (beta * dt)
    c3 = 1.0 / (2.0 * beta) - 1.0
    g1 = gamma / (beta * dt)
    g2 = 1.0 - gamma / beta
    g3 = dt * (1.0 - gamma / (2.0 * beta))
    status = -1
    for i in range(1, n):
        p = -m * ag[i]
        ui = un
        it = 0
        while True:
            fi, bi, kt = bilinear_update(ui, un, f[i - 1], back, k0, fy, r)
            ai = c1 * (ui - un) - c2 * vn - c3 * an
            vi = g1 * (ui - un) + g2 * vn + g3 * an
            res = m * ai + c * vi + fi - p
            if abs(res) <= tol:
                break
            du = -res / (m * c1 + c * g1 + kt)
            ui += du
            it += 1
            if abs(du) <= 1e-15 * (abs(ui) + 1e-300):
                fi, bi, kt = bilinear_update(ui, un, f[i - 1], back, k0, fy, r)
                ai = c1 * (ui - un) - c2 * vn - c3 * an
                vi = g1 * (ui - un) + g2 * vn + g3 * an
                break
            if it >= max_iter:
                return u, v, a, f, i
        back = bi
        u[i], v[i], a[i], f[i] = ui, vi, ai, fi
        un, vn, an = ui, vi, ai
    return u, v, a, f, status


def _thomas(lower, diag, upper, rhs):
    """Solve a tridiagonal system; ``lower[i]`` couples rows i and i-1."""
    n = len(diag)
    cp = [0.0] * n
    dp = [0.0] * n
    cp[0] = upper[0] / diag[0] if n > 1 else 0.0
    dp[0] = rhs[0] / diag[0]
    for i in range(1, n):
        den = diag[i] - lower[i] * cp[i - 1]
        cp[i] = upper[i] / den if i < n - 1 else 0.0
        dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / den
    x = [0.0] * n
    x[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


def mdof_newmark(ag, dt, mass, k0, fy, r, a0, a1, beta, gamma, tol, max_iter):
    """Shear-building kernel; story ``j`` links floor ``j-1`` (ground for j=0) to ``j``.

    Damping is Rayleigh on the initial stiffness, ``C = a0 M + a1 K0``.
    Returns floor arrays ``(u, v, a)`` and story forces, each ``(n_steps, n)``.
    """
    nt = ag.shape[0]
    n = mass.shape[0]
    U = np.zeros((nt, n))
    V = np.zeros((nt, n))
    A = np.zeros((nt, n))
    Fs = np.zeros((nt, n))
    if nt == 0:
        return U, V, A, Fs, -1
    m = [float(x) for x in mass]
    k = [float(x) for x in k0]
    fyl = [float(x) for x in fy]
    rl = [float(x) for x in r]
    agl = [float(x) for x in ag]

    def k_times(kk, x):
        out = [0.0] * n
        for j in range(n):
            xb = x[j - 1] if j > 0 else 0.0
            out[j] += kk[j] * (x[j] - xb)
            if j > 0:
                out[j - 1] -= kk[j] * (x[j] - xb)
        return out

    def internal(fstory):
        out = [0.0] * n
        for j in range(n):
            out[j] += fstory[j]
            if j > 0:
                out[j - 1] -= fstory[j]
        return out

    c1 = 1.0 / (beta * dt * dt)
    c2 = 1.0 / (beta * dt)
    c3 = 1.0 / (2.0 * beta) - 1.0
    g1 = gamma / (beta * dt)
    g2 = 1.0 - gamma / beta
    g3 = dt * (1.0 - gamma / (2.0 * beta))

    un = [0.0] * n
    vn = [0.0] * n
    an = [-agl[0]] * n
    fst = [0.0] * n
    back = [0.0] * n
    for j in range(n):
        A[0, j] = an[j]
    for i in range(1, nt):
        ui = list(un)
        it = 0
        while True:
            fnew = [0.0] * n
            bnew = [0.0] * n
            kt = [0.0] * n
            for j in range(n):
                dn = ui[j] - (ui[j - 1] if j > 0 else 0.0)
                do = un[j] - (un[j - 1] if j > 0 else 0.0)
                fnew[j], bnew[j], kt[j] = bilinear_update(dn, do, fst[j], back[j],
                                                          k[j], fyl[j], rl[j])
            ai = [c1 * (ui[j] - un[j]) - c2 * vn[j] - c3 * an[j] for j in range(n)]
            vi = [g1 * (ui[j] - un[j]) + g2 * vn[j] + g3 * an[j] for j in range(n)]
            kv = k_times(k, vi)
            fint = internal(fnew)
            res = [m[j] * ai[j] + a0 * m[j] * vi[j] + a1 * kv[j] + fint[j] + m[j] * agl[i]
                   for j in range(n)]
            rmax = max(abs(x) for x in res)
            if rmax <= tol:
                break
            # tangent: M c1 + g1 (a0 M + a1 K0) + Kt, tridiagonal
            diag = [0.0] * n
            lower = [0.0] * n
            upper = [0.0] * n
            for j in range(n):
                diag[j] = m[j] * (c1 + g1 * a0) + g1 * a1 * k[j] + kt[j]
                if j + 1 < n:
                    diag[j] += g1 * a1 * k[j + 1] + kt[j + 1]
                    upper[j] = -(g1 * a1 * k[j + 1] + kt[j + 1])
                    lower[j + 1] = upper[j]
            du = _thomas(lower, diag, upper, [-x for x in res])
            umax = 0.0
            dmax = 0.0
            for j in range(n):
                ui[j] += du[j]
                umax = max(umax, abs(ui[j]))
                dmax = max(dmax, abs(du[j]))
            it += 1
            if dmax <= 1e-15 * (umax + 1e-300):
                for j in range(n):
                    dn = ui[j] - (ui[j - 1] if j > 0 else 0.0)
                    do = un[j] - (un[j - 1] if j > 0 else 0.0)
                    fnew[j], bnew[j], kt[j] = bilinear_update(dn, do, fst[j], back[j],
                                                              k[j], fyl[j], rl[j])
                ai = [c1 * (ui[j] - un[j]) - c2 * vn[j] - c3 * an[j] for j in range(n)]
                vi = [g1 * (ui[j] - un[j]) + g2 * vn[j] + g3 * an[j] for j in range(n)]
                break
            if it >= max_iter:
                return U, V, A, Fs, i
        fst = fnew
        back = bnew
        un, vn, an = ui, vi, ai
        U[i] = ui
        V[i] = vi
        A[i] = ai
        Fs[i] = fst
    return U, V, A, Fs, -1


def adam_update(p, g, m, v, mask, lr, beta1, beta2, eps, c1, c2):
    """In-place bias-corrected Adam step on flat float64 arrays; ``mask`` may be None."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    upd = np.sqrt(v / c2)
    upd += eps
    np.divide(m, upd, out=upd)
    upd *= lr / c1
    p -= upd
    if mask is not None:
        p *= mask
