"""Hot loops: row-wise simplex projection, the ADMM iteration and the
multiplexer bin-doubling step.

Each kernel exists twice, a loop version compiled with numba and a
vectorised numpy version. ``QDTOMO_DISABLE_NUMBA`` selects the latter.
"""

import math

import numpy as np

from ._accel import HAVE_NUMBA, njit


# ---------------------------------------------------------------------------
# simplex projection


def _project_rows_np(A):
    A = np.asarray(A, dtype=np.float64)
    m, n = A.shape
    u = -np.sort(-A, axis=1, kind="stable")
    css = np.cumsum(u, axis=1) - 1.0
    ind = np.arange(1, n + 1)
    cond = u - css / ind > 0
    # last index where the condition holds (it holds on a prefix)
    last = n - 1 - np.argmax(cond[:, ::-1], axis=1)
    tau = css[np.arange(m), last] / (last + 1)
    return np.maximum(A - tau[:, None], 0.0)


@njit(cache=True)
def _project_rows_nb(A):
    m, n = A.shape
    out = np.empty_like(A)
    u = np.empty(n)
    for i in range(m):
        # insertion sort, descending; rows are short
        for j in range(n):
            v = A[i, j]
            p = j
            while p > 0 and u[p - 1] < v:
                u[p] = u[p - 1]
                p -= 1
            u[p] = v
        css = 0.0
        tau = 0.0
        for j in range(n):
            css += u[j]
            t = (css - 1.0) / (j + 1)
            if u[j] - t > 0.0:
                tau = t
        for j in range(n):
            v = A[i, j] - tau
            out[i, j] = v if v > 0.0 else 0.0
    return out


def project_rows(A):
    """Euclidean projection of every row of ``A`` onto the probability simplex."""
    A = np.ascontiguousarray(A, dtype=np.float64)
    if HAVE_NUMBA:
        return _project_rows_nb(A)
    return _project_rows_np(A)


# ---------------------------------------------------------------------------
# ADMM on  min sum_n 1/2 th_n' H_n th_n - q_n' th_n   s.t. rows of Theta in simplex
#
# H_n = V_n diag(lam_n) V_n'.  Z is the feasible copy, U the scaled dual.


def _admm_np(V, lam, q, Z, U, rho, alpha, max_iter, eps_p, eps_d, h, adapt_iters, check_every,
             shared):
    K, N = Z.shape
    Vt = np.ascontiguousarray(np.transpose(V, (0, 2, 1)))
    qt = np.einsum("nkj,kn->jn", V, q)
    hist = np.empty(max_iter)
    r = np.inf
    X = Z.copy()
    it = 0
    for it in range(max_iter):
        W = Z - U
        if shared:
            X = V[0] @ ((qt + rho * (Vt[0] @ W)) / (lam[0] + rho)[:, None])
        else:
            t = np.matmul(Vt, W.T[:, :, None])[:, :, 0]
            X = np.matmul(V, ((qt.T + rho * t) / (lam + rho))[:, :, None])[:, :, 0].T
        Xh = alpha * X + (1.0 - alpha) * Z
        Zp = Z
        Z = _project_rows_np(Xh + U)
        Up = U
        U = U + Xh - Z
        hist[it] = math.sqrt(np.sum((Z - Zp) ** 2) + np.sum((U - Up) ** 2))
        if it < adapt_iters and it % check_every == check_every - 1:
            rp = np.sqrt(np.sum((X - Z) ** 2) / max(np.sum(X * X), np.sum(Z * Z), 1e-300))
            rd = np.sqrt(np.sum((Z - Zp) ** 2) / max(np.sum(U * U), 1e-300))
            if rp > 10.0 * rd:
                rho *= 2.0
                U = U / 2.0
            elif rd > 10.0 * rp:
                rho /= 2.0
                U = U * 2.0
        if it % check_every == 0 or it == max_iter - 1:
            r = np.max(np.abs(X - Z))
            if r <= eps_p:
                g = _grad_np(V, Vt, lam, q, Z)
                if np.max(np.abs(Z - _project_rows_np(Z - g / h))) <= eps_d:
                    break
    g = _grad_np(V, Vt, lam, q, Z)
    kkt = np.max(np.abs(Z - _project_rows_np(Z - g / h)))
    return Z, U, X, rho, it + 1, r, kkt, hist[: it + 1]


def _grad_np(V, Vt, lam, q, Z):
    t = np.matmul(Vt, Z.T[:, :, None])[:, :, 0] * lam
    return np.matmul(V, t[:, :, None])[:, :, 0].T - q


@njit(cache=True)
def _prox_nb(V, Vt, lam, qt, W, rho, shared, X):
    """X = V ((V' q + rho V' W) / (lam + rho)), column by column."""
    K, N = W.shape
    if shared:
        T = np.dot(Vt[0], W)
        for j in range(K):
            d = 1.0 / (lam[0, j] + rho)
            for n in range(N):
                T[j, n] = (qt[j, n] + rho * T[j, n]) * d
        X[:, :] = np.dot(V[0], T)
    else:
        w = np.empty(K)
        for n in range(N):
            for k in range(K):
                w[k] = W[k, n]
            t = np.dot(Vt[n], w)
            for j in range(K):
                t[j] = (qt[j, n] + rho * t[j]) / (lam[n, j] + rho)
            xn = np.dot(V[n], t)
            for k in range(K):
                X[k, n] = xn[k]


@njit(cache=True)
def _grad_nb(V, Vt, lam, q, Z, shared):
    K, N = Z.shape
    if shared:
        T = np.dot(Vt[0], Z)
        for j in range(K):
            for n in range(N):
                T[j, n] *= lam[0, j]
        return np.dot(V[0], T) - q
    g = np.empty((K, N))
    z = np.empty(K)
    for n in range(N):
        for k in range(K):
            z[k] = Z[k, n]
        t = np.dot(Vt[n], z) * lam[n]
        gn = np.dot(V[n], t)
        for k in range(K):
            g[k, n] = gn[k] - q[k, n]
    return g


@njit(cache=True)
def _admm_nb(V, Vt, lam, q, Z, U, rho, alpha, max_iter, eps_p, eps_d, h, adapt_iters,
             check_every, shared):
    K, N = Z.shape
    Z = Z.copy()
    U = U.copy()
    X = np.empty((K, N))
    Zp = np.empty((K, N))
    Xh = np.empty((K, N))
    W = np.empty((K, N))
    qt = np.empty((K, N))
    for n in range(N):
        col = np.dot(Vt[n], np.ascontiguousarray(q[:, n]))
        for j in range(K):
            qt[j, n] = col[j]
    hist = np.empty(max_iter)
    r = np.inf
    kkt = np.inf
    it = 0
    for it in range(max_iter):
        for k in range(K):
            for n in range(N):
                W[k, n] = Z[k, n] - U[k, n]
        _prox_nb(V, Vt, lam, qt, W, rho, shared, X)
        for k in range(K):
            for n in range(N):
                Xh[k, n] = alpha * X[k, n] + (1.0 - alpha) * Z[k, n]
                Zp[k, n] = Z[k, n]
        Z = _project_rows_nb(Xh + U)
        dz = 0.0
        du = 0.0
        for k in range(K):
            for n in range(N):
                d = Xh[k, n] - Z[k, n]
                U[k, n] += d
                du += d * d
                e = Z[k, n] - Zp[k, n]
                dz += e * e
        hist[it] = math.sqrt(dz + du)
        if it < adapt_iters and it % check_every == check_every - 1:
            # residuals normalised by the iterate and dual magnitudes
            rp = 0.0
            nx = 0.0
            nz = 0.0
            nu = 0.0
            for k in range(K):
                for n in range(N):
                    rp += (X[k, n] - Z[k, n]) ** 2
                    nx += X[k, n] ** 2
                    nz += Z[k, n] ** 2
                    nu += U[k, n] ** 2
            rp = math.sqrt(rp / max(nx, nz, 1e-300))
            rd = math.sqrt(dz / max(nu, 1e-300))
            if rp > 10.0 * rd:
                rho *= 2.0
                U /= 2.0
            elif rd > 10.0 * rp:
                rho /= 2.0
                U *= 2.0
        if it % check_every == 0 or it == max_iter - 1:
            r = 0.0
            for k in range(K):
                for n in range(N):
                    a = abs(X[k, n] - Z[k, n])
                    if a > r:
                        r = a
            if r <= eps_p:
                g = _grad_nb(V, Vt, lam, q, Z, shared)
                P = _project_rows_nb(Z - g / h)
                kkt = 0.0
                for k in range(K):
                    for n in range(N):
                        a = abs(Z[k, n] - P[k, n])
                        if a > kkt:
                            kkt = a
                if kkt <= eps_d:
                    break
    g = _grad_nb(V, Vt, lam, q, Z, shared)
    P = _project_rows_nb(Z - g / h)
    kkt = np.max(np.abs(Z - P))
    return Z, U, X, rho, it + 1, r, kkt, hist[: it + 1]


def admm(V, lam, q, Z, U, rho, *, alpha=1.6, max_iter=50_000, eps_p=1e-8, eps_d=1e-6,
         adapt_iters=100, check_every=10):
    """Run the splitting iteration from the state ``(Z, U, rho)``.

    ``V[n]``/``lam[n]`` diagonalise the Hessian of column ``n`` and ``q`` is the
    linear term, so the objective is ``sum_n 0.5 z_n' H_n z_n - q_n' z_n``.
    Returns ``(Z, U, X, rho, iterations, primal, kkt, history)`` where the
    history holds the combined step length ``sqrt(|dZ|^2 + |dU|^2)``.
    """
    V = np.ascontiguousarray(V, dtype=np.float64)
    lam = np.ascontiguousarray(lam, dtype=np.float64)
    q = np.ascontiguousarray(q, dtype=np.float64)
    Z = np.ascontiguousarray(Z, dtype=np.float64)
    U = np.ascontiguousarray(U, dtype=np.float64)
    h = float(lam.max())
    shared = bool(np.all(V == V[0]) and np.all(lam == lam[0]))
    if HAVE_NUMBA:
        Vt = np.ascontiguousarray(np.transpose(V, (0, 2, 1)))
        return _admm_nb(V, Vt, lam, q, Z, U, float(rho), float(alpha), int(max_iter),
                        float(eps_p), float(eps_d), h, int(adapt_iters), int(check_every), shared)
    return _admm_np(V, lam, q, Z, U, float(rho), float(alpha), int(max_iter), float(eps_p),
                    float(eps_d), h, int(adapt_iters), int(check_every), shared)


def gradient(V, lam, q, Z):
    """Gradient ``H_n z_n - q_n`` of the quadratic objective, column by column."""
    V = np.ascontiguousarray(V, dtype=np.float64)
    Vt = np.ascontiguousarray(np.transpose(V, (0, 2, 1)))
    lam = np.ascontiguousarray(lam, dtype=np.float64)
    q = np.ascontiguousarray(q, dtype=np.float64)
    Z = np.ascontiguousarray(Z, dtype=np.float64)
    if HAVE_NUMBA:
        return _grad_nb(V, Vt, lam, q, Z, False)
    return _grad_np(V, Vt, lam, q, Z)


# ---------------------------------------------------------------------------
# bin doubling:  B2[k] = sum_x C(k,x) T^(k-x) R^x  conv(B[x], B[k-x])


def _split_weights(M, R):
    k = np.arange(M + 1)
    lg = np.array([math.lgamma(i + 1.0) for i in range(M + 1)])
    W = np.zeros((M + 1, M + 1))
    for kk in range(M + 1):
        x = k[: kk + 1]
        W[kk, : kk + 1] = np.exp(lg[kk] - lg[x] - lg[kk - x]
                                 + (kk - x) * math.log1p(-R) + x * math.log(R))
    return W


def _double_np(B, R):
    M1, nb = B.shape
    W = _split_weights(M1 - 1, R)
    out = np.zeros((M1, 2 * nb - 1))
    for kk in range(M1):
        x = np.arange(kk + 1)
        # weighted outer products of the two halves, then anti-diagonal sums
        outer = np.einsum("x,xa,xb->ab", W[kk, : kk + 1], B[x], B[kk - x])
        for a in range(nb):
            out[kk, a: a + nb] += outer[a]
    return out


@njit(cache=True)
def _double_nb(B, R):
    M1, nb = B.shape
    out = np.zeros((M1, 2 * nb - 1))
    lR = math.log(R)
    lT = math.log1p(-R)
    for kk in range(M1):
        lk = math.lgamma(kk + 1.0)
        for x in range(kk + 1):
            w = math.exp(lk - math.lgamma(x + 1.0) - math.lgamma(kk - x + 1.0)
                         + (kk - x) * lT + x * lR)
            for a in range(nb):
                ba = B[x, a]
                if ba == 0.0:
                    continue
                for b in range(nb):
                    out[kk, a + b] += w * ba * B[kk - x, b]
    return out


def double_bins(B, R):
    """One doubling step of the multiplexer: two copies of ``B`` behind a
    splitter of reflectivity ``R``."""
    B = np.ascontiguousarray(B, dtype=np.float64)
    if HAVE_NUMBA:
        return _double_nb(B, float(R))
    return _double_np(B, float(R))
