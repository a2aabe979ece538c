"""Range-Doppler processors.

Four estimators share one normalization: a unit-amplitude, perfectly
aligned, noise-free target maps to |x_hat| = 1.

* ``spc_mtd``  - per-pulse matched filter, then Doppler DFT across pulses.
* ``jrdmf``    - joint matched filter (d(psi_q) (x) s)^H y(l).
* ``ampc_*``   - full NP-dimensional MMSE filter per cell.
* ``jrdap_*``  - rank-one MMSE filter conj(v) (x) u found by alternating
  minimization over v (P-dim) and u (N-dim).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .covariance import CovarianceModel, pulse_coupling
from .scene import DataCube
from .waveform import DopplerGrid, PowerPrior, doppler_matrix


class NumericalError(RuntimeError):
    """Factorization failure, tagged with cell coordinates and a condition estimate."""

    def __init__(self, message, cell=None, condition=None):
        super().__init__(message)
        self.cell = cell
        self.condition = condition


@dataclass
class RangeDopplerMap:
    """L x Q complex estimates; row l-1 holds range cell l."""

    estimates: np.ndarray
    method: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.estimates = np.asarray(self.estimates, dtype=complex)
        if self.estimates.ndim != 2:
            raise ValueError("range-Doppler map must be 2-D")

    @property
    def shape(self):
        return self.estimates.shape

    def power(self):
        return np.abs(self.estimates) ** 2

    def db(self, floor=1e-30):
        return 10.0 * np.log10(np.maximum(self.power(), floor))


@dataclass
class AmpcFilter:
    h: np.ndarray
    cost: float = float("nan")


@dataclass
class JrdapFactors:
    """Converged (or last) factor pair of one cell.

    ``v`` is rescaled by the norm of the unnormalized range filter whenever u
    is normalized, so conj(v) (x) u always equals the exact minimizer of the
    latest half-step.
    """

    u: np.ndarray
    v: np.ndarray
    iterations_used: int
    cost_trace: np.ndarray          # J(u^i, v^i), i = 1..iterations_used
    half_cost_trace: np.ndarray     # J(u^{i-1}, v^i)
    u_change: np.ndarray            # ||u^i - u^{i-1}||
    estimate_trace: np.ndarray      # x_hat^i

    @property
    def h(self):
        return np.kron(self.v.conj(), self.u)


def _mf_norm(s, P):
    return float(np.vdot(s, s).real) * P


def spc_mtd(cube: DataCube, s, grid: DopplerGrid) -> RangeDopplerMap:
    """Sequential pulse compression then MTD.

    y_mf,p(l) = s^H y_p(l); x_hat(l, q) = sum_p y_mf,p(l) e^{-j2pi(p-1)psi_q} / (||s||^2 P).
    """
    s = np.asarray(s, dtype=complex)
    _check_cube(cube, s)
    P = cube.num_pulses
    t0 = time.perf_counter()
    mf = np.stack([
        np.correlate(cube.samples[p], s, mode="valid")[: cube.num_range_cells] for p in range(P)
    ])                                                         # (P, L); correlate conjugates s
    est = mf.T @ doppler_matrix(grid, P).conj() / _mf_norm(s, P)
    return RangeDopplerMap(est, "spc_mtd", {"seconds": time.perf_counter() - t0})


def jrdmf(cube: DataCube, s, grid: DopplerGrid) -> RangeDopplerMap:
    """Joint range-Doppler matched filter on the stacked windows."""
    s = np.asarray(s, dtype=complex)
    _check_cube(cube, s)
    P = cube.num_pulses
    t0 = time.perf_counter()
    D = doppler_matrix(grid, P)
    H = np.stack([np.kron(D[:, q], s) for q in range(grid.num_cells)], axis=1)   # (NP, Q)
    Ystack = np.stack([cube.stacked(ell) for ell in range(1, cube.num_range_cells + 1)])
    est = Ystack @ H.conj() / _mf_norm(s, P)
    return RangeDopplerMap(est, "jrdmf", {"seconds": time.perf_counter() - t0})


def _check_cube(cube, s):
    if cube.waveform_length != s.size:
        raise ValueError(f"cube built for N={cube.waveform_length}, waveform has {s.size} samples")


def estimate_prior(rd_map: RangeDopplerMap, noise_power, floor_ratio=1e-4) -> PowerPrior:
    """rho(l, q) = max(|x_hat(l, q)|^2, floor_ratio * sigma_n^2)."""
    if not np.all(np.isfinite(rd_map.estimates)):
        raise ValueError("map has non-finite entries")
    return PowerPrior(np.maximum(rd_map.power(), floor_ratio * noise_power))


class HermitianSolver:
    """Cholesky factorization with an LU fallback; never forms an inverse."""

    def __init__(self, A, cell=None):
        self.A = A
        try:
            self._chol = sla.cho_factor(A, lower=True, check_finite=False)
            self._lu = None
        except (np.linalg.LinAlgError, sla.LinAlgError):
            self._chol = None
            try:
                self._lu = sla.lu_factor(A, check_finite=False)
            except (np.linalg.LinAlgError, sla.LinAlgError, ValueError) as exc:
                raise NumericalError(f"factorization failed at cell {cell}: {exc}", cell,
                                     np.linalg.cond(A)) from exc
            if np.any(np.diag(self._lu[0]) == 0):
                raise NumericalError(f"singular system at cell {cell}", cell, np.inf)

    @property
    def method(self):
        return "cholesky" if self._chol is not None else "lu"

    def solve(self, b):
        if self._chol is not None:
            return sla.cho_solve(self._chol, b, check_finite=False)
        return sla.lu_solve(self._lu, b, check_finite=False)


def ampc_cell(ell, q, cube: DataCube, model: CovarianceModel, R=None):
    """Full-dimension MMSE estimate at one cell.

    h = (R_t(l) + R_c + sigma_n^2 I)^{-1} rho(l, q) (d(psi_q) (x) s),
    x_hat = h^H y(l).

    Returns
    -------
    estimate : complex
    filt : AmpcFilter
    """
    if R is None:
        R = model.full(ell)
    r = model.cross(ell, q)
    h = HermitianSolver(R, (ell, q)).solve(r)
    rho = model.prior.rho[ell - 1, q]
    return complex(np.vdot(h, cube.stacked(ell))), AmpcFilter(h, float(rho - np.vdot(h, r).real))


def ampc_map(cube: DataCube, model: CovarianceModel, reuse_factorization=True, cells=None) -> RangeDopplerMap:
    """AMPC over every cell.

    With ``reuse_factorization`` the q-independent matrix R(l) is factored
    once per range cell and reused for all Q right-hand sides; otherwise
    every cell factors its own copy (the per-cell cost of the plain formula).
    """
    L, Q = model.L, model.Q
    est = np.zeros((L, Q), dtype=complex)
    cost = np.full((L, Q), np.nan)
    Rc = model.clutter() if model.has_clutter else 0.0
    Rn = model.noise()
    rows = range(1, L + 1) if cells is None else sorted({c[0] for c in cells})
    t0 = time.perf_counter()
    n_cells = 0
    for ell in rows:
        qs = range(Q) if cells is None else [c[1] for c in cells if c[0] == ell]
        R = model.target(ell) + Rc + Rn
        y = cube.stacked(ell)
        rho = model.prior.rho[ell - 1]
        if reuse_factorization:
            solver = HermitianSolver(R, (ell, None))
            qs = list(qs)
            rhs = np.stack([model.cross(ell, q) for q in qs], axis=1)
            H = solver.solve(rhs)
            est[ell - 1, qs] = H.conj().T @ y
            cost[ell - 1, qs] = rho[qs] - np.einsum("nq,nq->q", H.conj(), rhs).real
            n_cells += len(qs)
        else:
            for q in qs:
                est[ell - 1, q], f = ampc_cell(ell, q, cube, model, R=R)
                cost[ell - 1, q] = f.cost
                n_cells += 1
    elapsed = time.perf_counter() - t0
    return RangeDopplerMap(est, "ampc", {"seconds": elapsed, "cells": n_cells, "cost": cost,
                                         "reuse_factorization": reuse_factorization})


class _RangeContext:
    """Per-range-cell quantities shared by every Doppler cell (precomputed once)."""

    def __init__(self, ell, cube: DataCube, model: CovarianceModel):
        self.ell = ell
        self.model = model
        self.Y = cube.matrix(ell)                                  # (N, P)
        self.phi = model.phi_stack(ell)                            # (Q, N, N)
        self.T = model.aggregates(ell, self.phi)                   # (2P-1, N, N)
        self.rho = model.prior.rho[ell - 1]
        P = model.num_pulses
        self.lag_index = np.arange(P)[None, :] - np.arange(P)[:, None] + P - 1
        self.D = doppler_matrix(model.grid, P)                     # (P, Q)


def _batched_solve(A, b, ell, qs):
    """Solve A[k] x[k] = b[k] for a stack of Hermitian positive definite systems.

    Batched Cholesky, then the two triangular systems; a per-cell pivoted
    fallback handles any stack that fails to factor.
    """
    try:
        c = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        out = np.empty_like(b)
        for k in range(A.shape[0]):
            out[k] = HermitianSolver(A[k], (ell, int(qs[k]))).solve(b[k])
        return out
    z = np.linalg.solve(c, b)
    return np.linalg.solve(np.conj(np.swapaxes(c, -1, -2)), z)


def _jrdap_batch(ctx: _RangeContext, qs, eta, max_iter, u0=None, reference=None, record=True):
    """Run the alternating minimization for the Doppler cells ``qs`` of one range cell.

    Every cell follows its own stopping rule; converged cells are frozen.
    """
    m = ctx.model
    N, P = m.N, m.num_pulses
    qs = np.asarray(qs)
    B = len(qs)
    s = m.s
    U = np.asarray(m.upsilon)
    has_clutter = m.has_clutter
    coupling_conj = pulse_coupling(m.coefficients).conj() if has_clutter else None
    sn = m.noise_power
    eyeP, eyeN = np.eye(P), np.eye(N)
    psi = m.grid.values[qs]
    steer_conj = np.exp(-2j * np.pi * np.outer(psi, np.arange(P)))   # (B, P): e^{-j2pi p psi_q}
    rho = ctx.rho[qs]
    D = ctx.D

    if u0 is None:
        u0 = s / np.linalg.norm(s)
    u = np.tile(np.asarray(u0, dtype=complex), (B, 1))
    v = np.zeros((B, P), dtype=complex)
    iters = np.zeros(B, dtype=int)
    active = np.ones(B, dtype=bool)
    hist = {k: [[] for _ in range(B)] for k in ("cost", "half", "du", "est")}

    for it in range(1, max_iter + 1):
        a = np.flatnonzero(active)
        if a.size == 0:
            break
        ua = u[a]
        # v-step: (R~_t + R~_c + R~_n) v = rho (s^H u) e^{-j2pi p psi_q}
        K = ctx.T.shape[0]
        Tu = (ctx.T.reshape(K * N, N) @ ua.T).reshape(K, N, -1)     # (K, N, b)
        tk = np.einsum("bi,kib->bk", ua.conj(), Tu)
        Rv = tk[:, ctx.lag_index]
        unorm2 = np.einsum("bi,bi->b", ua.conj(), ua).real
        if has_clutter:
            uUu = np.einsum("bi,ij,bj->b", ua.conj(), U, ua).real
            Rv = Rv + uUu[:, None, None] * coupling_conj[None]
        Rv = Rv + (sn * unorm2)[:, None, None] * eyeP
        g = (rho[a] * (ua.conj() @ s))[:, None] * steer_conj[a]
        va = _batched_solve(Rv, g[..., None], ctx.ell, qs[a])[..., 0]
        half = rho[a] - np.einsum("bp,bp->b", va.conj(), g).real

        # u-step: (R-_t + R-_c + R-_n) u = rho beta_q s
        beta = va @ D                                              # (b, Q)
        Q = ctx.phi.shape[0]
        Ru = (np.abs(beta) ** 2 @ ctx.phi.reshape(Q, N * N)).reshape(-1, N, N)
        if has_clutter:
            beta_i = va @ m.coefficients.T                         # (b, Nc)
            Ru = Ru + np.sum(np.abs(beta_i) ** 2, axis=1)[:, None, None] * U
        vnorm2 = np.einsum("bp,bp->b", va.conj(), va).real
        Ru = Ru + (sn * vnorm2)[:, None, None] * eyeN
        own_beta = beta[np.arange(a.size), qs[a]]
        c = (rho[a] * own_beta)[:, None] * s[None, :]

        zero = vnorm2 == 0.0
        ut = np.zeros_like(ua)
        if np.any(~zero):
            nz = np.flatnonzero(~zero)
            ut[nz] = _batched_solve(Ru[nz], c[nz][..., None], ctx.ell, qs[a][nz])[..., 0]
        full = rho[a] - np.einsum("bi,bi->b", ut.conj(), c).real
        nrm = np.linalg.norm(ut, axis=1)
        u_new = ua.copy()
        ok = nrm > 0
        u_new[ok] = ut[ok] / nrm[ok, None]
        va[ok] *= nrm[ok, None]
        full[~ok] = half[~ok]
        du = np.linalg.norm(u_new - ua, axis=1)

        u[a] = u_new
        v[a] = va
        iters[a] = it
        if record or reference is not None:
            est = np.einsum("bi,ip,bp->b", u_new.conj(), ctx.Y, va)
            for j, b_ in enumerate(a):
                hist["cost"][b_].append(full[j])
                hist["half"][b_].append(half[j])
                hist["du"][b_].append(du[j])
                hist["est"][b_].append(est[j])
        done = du <= eta
        active[a[done]] = False

    est = np.einsum("bi,ip,bp->b", u.conj(), ctx.Y, v)
    factors = []
    if record:
        for b_ in range(B):
            factors.append(JrdapFactors(
                u=u[b_], v=v[b_], iterations_used=int(iters[b_]),
                cost_trace=np.asarray(hist["cost"][b_]),
                half_cost_trace=np.asarray(hist["half"][b_]),
                u_change=np.asarray(hist["du"][b_]),
                estimate_trace=np.asarray(hist["est"][b_]),
            ))
    return est, iters, factors, active


def jrdap_cell(ell, q, cube: DataCube, model: CovarianceModel, eta=1e-6, max_iter=1000, u0=None):
    """Alternating MMSE estimate at one cell.

    Returns
    -------
    estimate : complex
    factors : JrdapFactors
    """
    if u0 is not None:
        u0 = np.asarray(u0, dtype=complex)
        if abs(np.linalg.norm(u0) - 1.0) > 1e-9:
            raise ValueError("u0 must have unit norm")
    ctx = _RangeContext(ell, cube, model)
    est, _, factors, _ = _jrdap_batch(ctx, [q], eta, max_iter, u0=u0)
    return complex(est[0]), factors[0]


def jrdap_map(cube: DataCube, model: CovarianceModel, eta=1e-6, max_iter=1000, u0=None,
              record_traces=False, reference: Optional[RangeDopplerMap] = None,
              compiled=True) -> RangeDopplerMap:
    """JRDAP over all cells.

    Upsilon is built once; per range cell the 2P-1 Doppler aggregates are
    precomputed before the Doppler loop. Without trace recording the loop
    runs in the compiled kernel; cells it cannot factor are redone on the
    pivoted fallback path. With ``reference`` (the SPC & MTD map) the
    per-iteration estimation error |x_ref - x_hat^i| is stored in
    ``meta['error_traces']``.
    """
    L, Q = model.L, model.Q
    N, P = model.N, model.num_pulses
    est = np.zeros((L, Q), dtype=complex)
    iters = np.zeros((L, Q), dtype=int)
    unconverged = np.zeros((L, Q), dtype=bool)
    keep = record_traces or reference is not None
    use_kernel = compiled and not keep
    if use_kernel:
        from ._kernels import jrdap_range_cell
    traces = {}
    if u0 is None:
        u0 = model.s / np.linalg.norm(model.s)
    u0 = np.ascontiguousarray(u0, dtype=complex)
    t0 = time.perf_counter()
    U = np.ascontiguousarray(model.upsilon, dtype=complex)
    if model.has_clutter:
        coupling_conj = pulse_coupling(model.coefficients).conj()
        coeffs = np.ascontiguousarray(model.coefficients)
    else:
        coupling_conj = np.zeros((P, P), dtype=complex)
        coeffs = np.zeros((0, P), dtype=complex)
    psi = model.grid.values
    for ell in range(1, L + 1):
        ctx = _RangeContext(ell, cube, model)
        if use_kernel:
            e = np.zeros(Q, dtype=complex)
            it = np.zeros(Q, dtype=np.int64)
            status = np.zeros(Q, dtype=np.int64)
            jrdap_range_cell(ctx.T, ctx.phi, U, coupling_conj, coeffs, ctx.D, model.s,
                             np.ascontiguousarray(ctx.rho), psi, ctx.Y, float(model.noise_power),
                             model.has_clutter, float(eta), int(max_iter), u0, e, it, status)
            failed = np.flatnonzero(status == 1)
            if failed.size:
                e_f, it_f, _, still_f = _jrdap_batch(ctx, failed, eta, max_iter, u0=u0, record=False)
                e[failed], it[failed] = e_f, it_f
                status[failed] = np.where(still_f, 2, 0)
            still = status == 2
        else:
            e, it, factors, still = _jrdap_batch(ctx, np.arange(Q), eta, max_iter, u0=u0, record=keep)
            if keep:
                for q, f in enumerate(factors):
                    traces[(ell, q)] = f
        est[ell - 1] = e
        iters[ell - 1] = it
        unconverged[ell - 1] = still
    elapsed = time.perf_counter() - t0
    meta = {"seconds": elapsed, "cells": L * Q, "iterations": iters, "unconverged": unconverged,
            "eta": eta, "max_iter": max_iter, "compiled": use_kernel}
    if keep:
        meta["factors"] = traces
    if reference is not None:
        meta["error_traces"] = {
            cell: np.abs(reference.estimates[cell[0] - 1, cell[1]] - f.estimate_trace)
            for cell, f in traces.items()
        }
    return RangeDopplerMap(est, "jrdap", meta)
