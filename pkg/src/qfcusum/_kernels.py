"""Compiled inner loops: Gram-form coordinate descent and the scan sweep."""

import numpy as np
from numba import njit


@njit(cache=True)
def _soft(z, gamma):
    if z > gamma:
        return z - gamma
    if z < -gamma:
        return z + gamma
    return 0.0


@njit(cache=True)
def _objective(G, c, yty, m, lam, beta, q):
    # (1/m)||y - X b||^2 + lam/sqrt(m) ||b||_1 written through G = X'X, c = X'y, q = G b
    quad = 0.0
    lin = 0.0
    l1 = 0.0
    for j in range(beta.shape[0]):
        b = beta[j]
        if b != 0.0:
            quad += b * q[j]
            lin += b * c[j]
            l1 += abs(b)
    return (yty - 2.0 * lin + quad) / m + lam / np.sqrt(m) * l1


@njit(cache=True)
def _gram_times(G, beta, q):
    p = beta.shape[0]
    for j in range(p):
        q[j] = 0.0
    for k in range(p):
        bk = beta[k]
        if bk != 0.0:
            for j in range(p):
                q[j] += G[j, k] * bk


@njit(cache=True)
def _face_solve(G, c, thr, beta, active, na):
    # minimizer on the orthant face fixed by the signs of the nonzero beta[active];
    # kept only when it stays on that face, so it cannot raise the objective
    idx = np.empty(na, dtype=np.int64)
    k = 0
    for a in range(na):
        if beta[active[a]] != 0.0:
            idx[k] = active[a]
            k += 1
    if k == 0:
        return False
    A = np.empty((k, k))
    rhs = np.empty(k)
    for a in range(k):
        j = idx[a]
        rhs[a] = c[j] - thr * (1.0 if beta[j] > 0 else -1.0)
        for b in range(k):
            A[a, b] = G[j, idx[b]]
    try:
        sol = np.linalg.solve(A, rhs)
    except Exception:
        return False
    for a in range(k):
        v = sol[a]
        if not np.isfinite(v) or v * beta[idx[a]] <= 0.0:
            return False
    for a in range(k):
        beta[idx[a]] = sol[a]
    return True


INNER_BEFORE_SOLVE = 20


@njit(cache=True)
def _kkt(c, q, m, lam, beta):
    # largest violation of the optimality conditions, with q = G beta current
    pen = lam / np.sqrt(m)
    worst = 0.0
    for j in range(beta.shape[0]):
        g = -2.0 / m * (c[j] - q[j])
        b = beta[j]
        if b > 0.0:
            v = abs(g + pen)
        elif b < 0.0:
            v = abs(g - pen)
        else:
            v = abs(g) - pen
        if v > worst:
            worst = v
    return worst


@njit(cache=True)
def cd_gram(G, c, yty, m, lam, beta, tol, max_iter, check_descent):
    """Cyclic coordinate descent on the interval Lasso objective.

    ``G`` is the raw Gram ``X'X`` over the interval, ``c = X'y`` and ``m``
    the interval size.  ``beta`` is updated in place.

    Full sweeps over ``0..p-1`` alternate with sweeps restricted to the
    current support; convergence is declared only on a full sweep whose
    largest coordinate change is below ``tol`` and after which the KKT
    residual is at most ``tol`` as well.  Returns
    ``(sweeps, converged, descent_ok)``.
    """
    p = beta.shape[0]
    thr = 0.5 * lam * np.sqrt(m)
    q = np.empty(p)
    _gram_times(G, beta, q)
    active = np.empty(p, dtype=np.int64)
    descent_ok = True
    prev = np.inf
    if check_descent:
        prev = _objective(G, c, yty, m, lam, beta, q)
    sweeps = 0
    converged = False
    while sweeps < max_iter:
        sweeps += 1
        maxdelta = 0.0
        for j in range(p):
            gjj = G[j, j]
            bj = beta[j]
            if gjj <= 0.0:
                new = 0.0
            else:
                new = _soft(c[j] - q[j] + gjj * bj, thr) / gjj
            d = new - bj
            if d != 0.0:
                beta[j] = new
                for i in range(p):
                    q[i] += G[i, j] * d
                ad = abs(d)
                if ad > maxdelta:
                    maxdelta = ad
        if check_descent:
            cur = _objective(G, c, yty, m, lam, beta, q)
            if cur > prev + 1e-12 * max(1.0, abs(prev)):
                descent_ok = False
            prev = cur
        if maxdelta < tol and (maxdelta == 0.0 or _kkt(c, q, m, lam, beta) <= tol):
            converged = True
            break

        na = 0
        for j in range(p):
            if beta[j] != 0.0:
                active[na] = j
                na += 1
        # q is kept current on the support only until the next full sweep
        inner = 0
        while sweeps < max_iter:
            sweeps += 1
            inner += 1
            maxdelta = 0.0
            for a in range(na):
                j = active[a]
                gjj = G[j, j]
                bj = beta[j]
                new = _soft(c[j] - q[j] + gjj * bj, thr) / gjj
                d = new - bj
                if d != 0.0:
                    beta[j] = new
                    for b in range(na):
                        i = active[b]
                        q[i] += G[i, j] * d
                    ad = abs(d)
                    if ad > maxdelta:
                        maxdelta = ad
            if maxdelta < tol:
                break
            if inner % INNER_BEFORE_SOLVE == 0 and _face_solve(G, c, thr, beta, active, na):
                break
        _gram_times(G, beta, q)
        if check_descent:
            cur = _objective(G, c, yty, m, lam, beta, q)
            if cur > prev + 1e-12 * max(1.0, abs(prev)):
                descent_ok = False
            prev = cur
    return sweeps, converged, descent_ok


@njit(cache=True)
def _quad_parts(G, c, delta, beta):
    # returns (delta' G delta, delta' (c - G beta)) using only the support of delta
    p = delta.shape[0]
    dgd = 0.0
    cross = 0.0
    for k in range(p):
        dk = delta[k]
        if dk == 0.0:
            continue
        gk = 0.0
        gb = 0.0
        for j in range(p):
            gk += G[k, j] * delta[j]
            gb += G[k, j] * beta[j]
        dgd += dk * gk
        cross += dk * (c[k] - gb)
    return dgd, cross


@njit(cache=True)
def scan_sweep(x, y, xi, grid, lam, tol, max_iter, warm):
    """Fit both interval Lassos at every grid point and evaluate the statistic.

    Returns ``(qf, xi_part, sweeps_l, sweeps_r, conv_l, conv_r)`` where
    ``qf`` is the bias-corrected quadratic form and ``qf + xi_part`` the
    randomized statistic.
    """
    n, p = x.shape
    ng = grid.shape[0]
    qf = np.empty(ng)
    xi_part = np.empty(ng)
    sweeps_l = np.empty(ng, dtype=np.int64)
    sweeps_r = np.empty(ng, dtype=np.int64)
    conv_l = np.empty(ng, dtype=np.bool_)
    conv_r = np.empty(ng, dtype=np.bool_)

    G_tot = x.T @ x
    c_tot = x.T @ y
    yy_tot = 0.0
    sxy_tot = 0.0
    sxx_tot = np.zeros(p)
    for i in range(n):
        yy_tot += y[i] * y[i]
        sxy_tot += xi[i] * y[i]
        for j in range(p):
            sxx_tot[j] += xi[i] * x[i, j]

    G_l = np.zeros((p, p))
    c_l = np.zeros(p)
    sxx_l = np.zeros(p)
    yy_l = 0.0
    sxy_l = 0.0
    G_r = np.empty((p, p))
    c_r = np.empty(p)
    sxx_r = np.empty(p)
    beta_l = np.zeros(p)
    beta_r = np.zeros(p)
    delta = np.empty(p)

    prev = 0
    for k in range(ng):
        t = grid[k]
        for i in range(prev, t):
            yi = y[i]
            xiv = xi[i]
            for a in range(p):
                xa = x[i, a]
                c_l[a] += xa * yi
                sxx_l[a] += xiv * xa
                for b in range(p):
                    G_l[a, b] += xa * x[i, b]
            yy_l += yi * yi
            sxy_l += xiv * yi
        prev = t
        for a in range(p):
            c_r[a] = c_tot[a] - c_l[a]
            sxx_r[a] = sxx_tot[a] - sxx_l[a]
            for b in range(p):
                G_r[a, b] = G_tot[a, b] - G_l[a, b]
        yy_r = yy_tot - yy_l
        sxy_r = sxy_tot - sxy_l

        if not warm:
            beta_l[:] = 0.0
            beta_r[:] = 0.0
        m_l = float(t)
        m_r = float(n - t)
        s_l, cv_l, _ = cd_gram(G_l, c_l, yy_l, m_l, lam, beta_l, tol, max_iter, False)
        s_r, cv_r, _ = cd_gram(G_r, c_r, yy_r, m_r, lam, beta_r, tol, max_iter, False)
        sweeps_l[k] = s_l
        sweeps_r[k] = s_r
        conv_l[k] = cv_l
        conv_r[k] = cv_r

        for j in range(p):
            delta[j] = beta_l[j] - beta_r[j]
        dgd_l, cross_l = _quad_parts(G_l, c_l, delta, beta_l)
        dgd_r, cross_r = _quad_parts(G_r, c_r, delta, beta_r)
        xr_l = sxy_l
        xr_r = sxy_r
        for j in range(p):
            xr_l -= sxx_l[j] * beta_l[j]
            xr_r -= sxx_r[j] * beta_r[j]
        qf[k] = (0.5 * (dgd_l / m_l + dgd_r / m_r)
                 + 2.0 * cross_l / m_l - 2.0 * cross_r / m_r)
        xi_part[k] = xr_l / m_l - xr_r / m_r
    return qf, xi_part, sweeps_l, sweeps_r, conv_l, conv_r
