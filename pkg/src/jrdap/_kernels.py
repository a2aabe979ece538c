"""Compiled inner loop of the alternating JRDAP solve.

Mirrors ``filters._jrdap_batch`` step for step for one range cell, without
trace recording. Small Hermitian systems are solved with an in-place
Cholesky factorization; a cell whose matrix fails to factor is flagged so the
caller can redo it on the pivoted fallback path.

Status codes: 0 converged, 1 factorization failure, 2 hit ``max_iter``.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _chol_solve(A, b):
    """Solve A x = b for Hermitian positive definite A. Returns (x, ok)."""
    n = A.shape[0]
    Lf = np.zeros((n, n), dtype=np.complex128)
    for j in range(n):
        d = A[j, j].real
        for k in range(j):
            d -= (Lf[j, k] * np.conj(Lf[j, k])).real
        if not d > 0.0:
            return b.copy(), False
        dj = np.sqrt(d)
        Lf[j, j] = dj
        for i in range(j + 1, n):
            acc = A[i, j]
            for k in range(j):
                acc -= Lf[i, k] * np.conj(Lf[j, k])
            Lf[i, j] = acc / dj
    z = np.empty(n, dtype=np.complex128)
    for i in range(n):
        acc = b[i]
        for k in range(i):
            acc -= Lf[i, k] * z[k]
        z[i] = acc / Lf[i, i]
    x = np.empty(n, dtype=np.complex128)
    for i in range(n - 1, -1, -1):
        acc = z[i]
        for k in range(i + 1, n):
            acc -= np.conj(Lf[k, i]) * x[k]
        x[i] = acc / Lf[i, i]
    return x, True


@njit(cache=True)
def jrdap_range_cell(T, phi, U, coupling_conj, coeffs, D, s, rho, psi, Y, noise_power,
                     has_clutter, eta, max_iter, u0, est, iters, status):
    K, N, _ = T.shape
    P = (K + 1) // 2
    Q = phi.shape[0]
    Nc = coeffs.shape[0]
    tk = np.empty(K, dtype=np.complex128)
    Rv = np.empty((P, P), dtype=np.complex128)
    g = np.empty(P, dtype=np.complex128)
    Ru = np.empty((N, N), dtype=np.complex128)
    c = np.empty(N, dtype=np.complex128)
    beta = np.empty(Q, dtype=np.complex128)
    for q in range(Q):
        u = u0.copy()
        v = np.zeros(P, dtype=np.complex128)
        status[q] = 0
        it_used = 0
        converged = False
        for it in range(1, max_iter + 1):
            it_used = it
            # v-step
            unorm2 = 0.0
            for i in range(N):
                unorm2 += (u[i] * np.conj(u[i])).real
            for k in range(K):
                acc = 0j
                for i in range(N):
                    row = 0j
                    for j in range(N):
                        row += T[k, i, j] * u[j]
                    acc += np.conj(u[i]) * row
                tk[k] = acc
            uUu = 0.0
            if has_clutter:
                acc = 0j
                for i in range(N):
                    row = 0j
                    for j in range(N):
                        row += U[i, j] * u[j]
                    acc += np.conj(u[i]) * row
                uUu = acc.real
            for a in range(P):
                for b in range(P):
                    val = tk[b - a + P - 1]
                    if has_clutter:
                        val += uUu * coupling_conj[a, b]
                    if a == b:
                        val += noise_power * unorm2
                    Rv[a, b] = val
            su = 0j
            for i in range(N):
                su += np.conj(s[i]) * u[i]
            for p in range(P):
                g[p] = rho[q] * su * np.exp(-2j * np.pi * p * psi[q])
            v, ok = _chol_solve(Rv, g)
            if not ok:
                status[q] = 1
                break
            vnorm2 = 0.0
            for p in range(P):
                vnorm2 += (v[p] * np.conj(v[p])).real
            if vnorm2 == 0.0:
                converged = True
                break
            # u-step
            for qq in range(Q):
                acc = 0j
                for p in range(P):
                    acc += v[p] * D[p, qq]
                beta[qq] = acc
            for i in range(N):
                for j in range(N):
                    Ru[i, j] = 0j
            for qq in range(Q):
                w = (beta[qq] * np.conj(beta[qq])).real
                if w != 0.0:
                    for i in range(N):
                        for j in range(N):
                            Ru[i, j] += w * phi[qq, i, j]
            if has_clutter:
                wc = 0.0
                for ic in range(Nc):
                    acc = 0j
                    for p in range(P):
                        acc += coeffs[ic, p] * v[p]
                    wc += (acc * np.conj(acc)).real
                for i in range(N):
                    for j in range(N):
                        Ru[i, j] += wc * U[i, j]
            for i in range(N):
                Ru[i, i] += noise_power * vnorm2
            for i in range(N):
                c[i] = rho[q] * beta[q] * s[i]
            ut, ok = _chol_solve(Ru, c)
            if not ok:
                status[q] = 1
                break
            nrm = 0.0
            for i in range(N):
                nrm += (ut[i] * np.conj(ut[i])).real
            nrm = np.sqrt(nrm)
            if nrm == 0.0:
                converged = True
                break
            du = 0.0
            for i in range(N):
                un = ut[i] / nrm
                diff = un - u[i]
                du += (diff * np.conj(diff)).real
                u[i] = un
            for p in range(P):
                v[p] *= nrm
            if np.sqrt(du) <= eta:
                converged = True
                break
        if not converged and status[q] == 0:
            status[q] = 2
        iters[q] = it_used
        acc = 0j
        for i in range(N):
            row = 0j
            for p in range(P):
                row += Y[i, p] * v[p]
            acc += np.conj(u[i]) * row
        est[q] = acc
