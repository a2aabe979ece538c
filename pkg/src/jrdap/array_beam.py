"""
Transmit-side array math: ULA steering vectors, beampatterns and the
complex-beampattern-modulation (CBM) weight dictionary.

Each dictionary entry solves the minimax sidelobe problem

    min_w  max_{theta in sidelobe grid} |w^H a(theta)|
    s.t.   w^H a(theta_t) = 1,  w^H a(theta_c) = Delta_k exp(j phi_k)

The two equalities are eliminated exactly (affine parametrisation of the
feasible set) and the remaining second-order cone program is solved with a
log-barrier interior-point method.

Angles are degrees at the API surface and radians internally.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class DesignError(ValueError):
    """Invalid beam design request."""


class InfeasibleDesignError(DesignError):
    """The equality constraints cannot be satisfied simultaneously."""


class DesignConvergenceError(RuntimeError):
    """Interior-point solver ran out of iterations.

    The best iterate found so far is attached as ``best_weights`` together
    with its peak sidelobe level ``best_psl`` (linear).
    """

    def __init__(self, message, best_weights, best_psl):
        super().__init__(message)
        self.best_weights = best_weights
        self.best_psl = best_psl


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array.

    Attributes
    ----------
    num_elements : int
        Number of elements M (>= 2).
    spacing : float
        Inter-element spacing in wavelengths, d/lambda.
    """

    num_elements: int
    spacing: float = 0.5

    def __post_init__(self):
        if int(self.num_elements) != self.num_elements or self.num_elements < 2:
            raise ValueError(f"num_elements must be an integer >= 2, got {self.num_elements}")
        if not self.spacing > 0:
            raise ValueError(f"spacing must be positive, got {self.spacing}")


@dataclass(frozen=True)
class BeamDesignSpec:
    """Constraint set for one CBM dictionary.

    Attributes
    ----------
    target_angle : float
        Mainlobe direction theta_t in degrees.
    comm_angle : float or None
        Communication receiver direction theta_c in degrees. ``None`` drops
        the communication constraint (plain minimax beam).
    sidelobe_region : sequence of (lo, hi)
        Closed angle intervals in degrees forming the radar sidelobe region.
    sll_levels : sequence of float
        Communication sidelobe levels Delta as linear amplitudes in (0, 1).
    phases : sequence of float
        Communication phases phi in radians.

    The dictionary has K = len(sll_levels) * len(phases) entries, ordered
    level-major: entry ``k = i * len(phases) + j`` uses ``sll_levels[i]`` and
    ``phases[j]``.
    """

    target_angle: float
    comm_angle: Optional[float]
    sidelobe_region: Sequence[tuple] = ()
    sll_levels: Sequence[float] = (1.0,)
    phases: Sequence[float] = (0.0,)

    def __post_init__(self):
        object.__setattr__(self, "sidelobe_region", tuple(tuple(map(float, iv)) for iv in self.sidelobe_region))
        object.__setattr__(self, "sll_levels", tuple(float(v) for v in self.sll_levels))
        object.__setattr__(self, "phases", tuple(float(v) for v in self.phases))
        for lo, hi in self.sidelobe_region:
            if lo > hi:
                raise DesignError(f"empty sidelobe interval ({lo}, {hi})")
        if _in_region(self.target_angle, self.sidelobe_region):
            raise DesignError(f"target angle {self.target_angle} lies inside the sidelobe region")
        if self.comm_angle is not None:
            if self.sidelobe_region and not _in_region(self.comm_angle, self.sidelobe_region):
                raise DesignError(f"communication angle {self.comm_angle} must lie inside the sidelobe region")
            for lvl in self.sll_levels:
                if not 0.0 < lvl < 1.0:
                    raise DesignError(f"sidelobe levels must be in (0, 1), got {lvl}")
        if not self.sll_levels or not self.phases:
            raise DesignError("need at least one level and one phase")

    @property
    def symbols(self):
        """List of (Delta, phi) pairs in dictionary order."""
        return [(d, p) for d in self.sll_levels for p in self.phases]

    @property
    def num_symbols(self):
        return len(self.sll_levels) * len(self.phases)


@dataclass
class BeamDictionary:
    """Designed CBM weight vectors.

    Attributes
    ----------
    weights : ndarray, shape (K, M)
        Row k is the weight vector for symbol k.
    levels, phases : ndarray, shape (K,)
        Communication amplitude (linear) and phase of each entry.
    achieved_psl : ndarray, shape (K,)
        Peak sidelobe level over the design grid, linear amplitude.
    psl_traces : list of ndarray
        Epigraph value after each outer barrier iteration, per entry.
    """

    weights: np.ndarray
    levels: np.ndarray
    phases: np.ndarray
    achieved_psl: np.ndarray
    psl_traces: list = field(default_factory=list)

    def __len__(self):
        return self.weights.shape[0]

    @property
    def num_elements(self):
        return self.weights.shape[1]


def _in_region(theta, region):
    return any(lo <= theta <= hi for lo, hi in region)


def steering_vector(geometry: ArrayGeometry, theta) -> np.ndarray:
    """ULA steering vector.

    Element m (0-based) is ``exp(-j 2 pi m (d/lambda) sin(theta))``.

    Parameters
    ----------
    geometry : ArrayGeometry
    theta : float or array_like
        Angle(s) in degrees within [-90, 90].

    Returns
    -------
    ndarray
        Shape (M,) for a scalar angle, (len(theta), M) for an array.
    """
    th = np.asarray(theta, dtype=float)
    if np.any(~np.isfinite(th)) or np.any(np.abs(th) > 90.0):
        raise ValueError(f"steering angle must lie in [-90, 90] degrees, got {theta}")
    m = np.arange(geometry.num_elements)
    phase = -2j * np.pi * geometry.spacing * np.sin(np.deg2rad(th))[..., None] * m
    return np.exp(phase)


def beampattern(w, geometry: ArrayGeometry, thetas) -> np.ndarray:
    """Complex beampattern ``w^H a(theta_i)`` on an angle grid (degrees)."""
    w = np.asarray(w, dtype=complex)
    if w.ndim != 1 or w.shape[0] != geometry.num_elements:
        raise ValueError(f"weight vector must have length {geometry.num_elements}, got shape {w.shape}")
    A = steering_vector(geometry, np.atleast_1d(thetas))
    return A @ w.conj()


def sidelobe_grid(region, step=0.5) -> np.ndarray:
    """Discretise a union of closed intervals at ``step`` degrees."""
    if step <= 0:
        raise ValueError("sidelobe grid step must be positive")
    pts = []
    for lo, hi in region:
        n = int(np.floor((hi - lo) / step + 1e-9))
        pts.append(lo + step * np.arange(n + 1))
        if hi - pts[-1][-1] > 1e-9:
            pts.append(np.array([hi]))
    if not pts:
        return np.zeros(0)
    return np.unique(np.concatenate(pts))


def _equality_system(geometry, target_angle, comm_angle, level, phase):
    """Return (w0, B): min-norm feasible point and orthonormal null-space basis."""
    cols = [steering_vector(geometry, target_angle)]
    rhs = [1.0 + 0j]
    if comm_angle is not None:
        cols.append(steering_vector(geometry, comm_angle))
        # w^H a = c  <=>  a^H w = conj(c)
        rhs.append(level * np.exp(-1j * phase))
    A = np.stack(cols, axis=1)
    rhs = np.asarray(rhs)
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] < 1e-8 * sv[0]:
        raise InfeasibleDesignError(
            f"steering vectors at {target_angle} and {comm_angle} degrees are collinear; "
            "mainlobe and communication constraints conflict"
        )
    w0 = A @ np.linalg.solve(A.conj().T @ A, rhs)
    # Null space of A^H from the full SVD.
    _, _, vh = np.linalg.svd(A.conj().T)
    B = vh[A.shape[1]:].conj().T
    return w0, B


class _SocpBarrier:
    """min t  s.t.  ||G_i x + f_i|| <= t, solved by a log-barrier method.

    ``G`` has shape (m, 2, n) and ``f`` shape (m, 2): each cone constraint
    is the real 2-vector form of one complex sidelobe sample.
    """

    def __init__(self, G, f, gap_tol=1e-9, max_outer=60, max_newton=80, mu_factor=8.0):
        self.G = G
        self.f = f
        self.gap_tol = gap_tol
        self.max_outer = max_outer
        self.max_newton = max_newton
        self.mu_factor = mu_factor

    def _residuals(self, x):
        return self.G @ x + self.f

    def _peak(self, x):
        e = self._residuals(x)
        return float(np.sqrt(np.max(np.einsum("ij,ij->i", e, e))))

    def _barrier(self, x, t):
        e = self._residuals(x)
        s = t * t - np.einsum("ij,ij->i", e, e)
        if t <= 0 or np.any(s <= 0):
            return np.inf, e, s
        return -np.sum(np.log(s)), e, s

    def _newton_system(self, x, t, mu):
        G = self.G
        e = self._residuals(x)
        s = t * t - np.einsum("ij,ij->i", e, e)
        # grad of s_i: [-2 G_i^T e_i ; 2t]
        Ge = np.einsum("mkn,mk->mn", G, e)
        ds = np.concatenate([-2.0 * Ge, np.full((len(s), 1), 2.0 * t)], axis=1)
        inv_s = 1.0 / s
        grad = -(ds * inv_s[:, None]).sum(axis=0)
        grad[-1] += mu
        H = (ds * inv_s[:, None] ** 2).T @ ds
        GtG = np.einsum("mkn,mkp,m->np", G, G, inv_s)
        n = G.shape[2]
        H[:n, :n] += 2.0 * GtG
        H[n, n] -= 2.0 * inv_s.sum()
        return grad, H

    def solve(self, x0):
        m = self.G.shape[0]
        n = self.G.shape[2]
        x = np.array(x0, dtype=float)
        peak = self._peak(x)
        t = 1.5 * peak + 1e-3
        mu = 2.0 * m / t
        trace = []
        best_x, best_peak = x.copy(), peak
        for _ in range(self.max_outer):
            for _ in range(self.max_newton):
                grad, H = self._newton_system(x, t, mu)
                try:
                    step = -np.linalg.solve(H, grad)
                except np.linalg.LinAlgError:
                    step = -np.linalg.lstsq(H, grad, rcond=None)[0]
                decrement = -grad @ step
                if decrement / 2.0 <= 1e-11:
                    break
                f0 = mu * t + self._barrier(x, t)[0]
                alpha = 1.0
                while alpha > 1e-14:
                    xn, tn = x + alpha * step[:n], t + alpha * step[n]
                    fn = mu * tn + self._barrier(xn, tn)[0]
                    if np.isfinite(fn) and fn <= f0 - 0.25 * alpha * decrement:
                        break
                    alpha *= 0.5
                else:
                    break
                x, t = xn, tn
            peak = self._peak(x)
            if peak < best_peak:
                best_x, best_peak = x.copy(), peak
            trace.append(t)
            if 2.0 * m / mu < self.gap_tol:
                return x, np.asarray(trace), True
            mu *= self.mu_factor
        return best_x, np.asarray(trace), False


def minimax_weights(geometry, target_angle, comm_angle, level, phase, grid_deg, **solver_opts):
    """Solve one minimax design problem.

    Returns
    -------
    w : ndarray, shape (M,)
    psl : float
        max over ``grid_deg`` of |w^H a(theta)| (linear).
    trace : ndarray
        Epigraph value per outer barrier iteration.
    """
    w0, B = _equality_system(geometry, target_angle, comm_angle, level, phase)
    grid_deg = np.asarray(grid_deg, dtype=float)
    if grid_deg.size == 0 or B.shape[1] == 0:
        pat = beampattern(w0, geometry, grid_deg) if grid_deg.size else np.zeros(0)
        psl = float(np.max(np.abs(pat))) if pat.size else 0.0
        return w0, psl, np.array([psl])

    A = steering_vector(geometry, grid_deg)          # (m, M)
    f = A @ w0.conj()                                # w0^H a_i
    g = A @ B.conj()                                 # (m, n): a_i^T conj(B)
    # r_i = f_i + g_i . zeta with zeta = conj(z), w = w0 + B z
    G = np.empty((len(grid_deg), 2, 2 * g.shape[1]))
    G[:, 0, : g.shape[1]] = g.real
    G[:, 0, g.shape[1]:] = -g.imag
    G[:, 1, : g.shape[1]] = g.imag
    G[:, 1, g.shape[1]:] = g.real
    F = np.stack([f.real, f.imag], axis=1)

    solver = _SocpBarrier(G, F, **solver_opts)
    x, trace, ok = solver.solve(np.zeros(G.shape[2]))
    n = g.shape[1]
    zeta = x[:n] + 1j * x[n:]
    w = w0 + B @ zeta.conj()
    psl = float(np.max(np.abs(A @ w.conj())))
    if not ok:
        raise DesignConvergenceError(
            f"barrier method did not reach gap {solver.gap_tol} in {solver.max_outer} outer iterations",
            w, psl,
        )
    return w, psl, trace


def design_cbm_dictionary(spec: BeamDesignSpec, geometry: ArrayGeometry, sidelobe_grid_step=0.5, **solver_opts) -> BeamDictionary:
    """Design all K = L1 * Q1 CBM weight vectors.

    Raises
    ------
    InfeasibleDesignError
        If the mainlobe and communication constraints conflict.
    DesignConvergenceError
        If the interior-point solver does not converge for some entry.
    """
    if sidelobe_grid_step <= 0:
        raise DesignError("sidelobe_grid_step must be positive")
    grid = sidelobe_grid(spec.sidelobe_region, sidelobe_grid_step)
    ws, psls, traces, lv, ph = [], [], [], [], []
    for level, phase in spec.symbols:
        w, psl, trace = minimax_weights(
            geometry, spec.target_angle, spec.comm_angle, level, phase, grid, **solver_opts
        )
        ws.append(w)
        psls.append(psl)
        traces.append(trace)
        lv.append(level)
        ph.append(phase)
    return BeamDictionary(
        weights=np.asarray(ws),
        levels=np.asarray(lv),
        phases=np.asarray(ph),
        achieved_psl=np.asarray(psls),
        psl_traces=traces,
    )


def draw_symbols(num_symbols, num_pulses, seed=None) -> np.ndarray:
    """Uniform K-ary symbol stream from a seeded generator."""
    rng = np.random.default_rng(seed)
    return rng.integers(0, num_symbols, size=num_pulses)


def select_pulse_weights(dictionary: BeamDictionary, symbols=None, *, num_pulses=None, seed=None) -> np.ndarray:
    """Per-pulse transmit weights W (M x P).

    Column p is ``dictionary.weights[symbols[p]]``. Without ``symbols`` a
    uniform stream of length ``num_pulses`` is drawn from ``seed``.
    """
    K = len(dictionary)
    if symbols is None:
        if num_pulses is None:
            raise ValueError("num_pulses is required when no symbol stream is given")
        symbols = draw_symbols(K, num_pulses, seed)
    symbols = np.asarray(symbols)
    if symbols.ndim != 1 or not np.issubdtype(symbols.dtype, np.integer):
        raise ValueError("symbols must be a 1-D integer sequence")
    if np.any(symbols < 0) or np.any(symbols >= K):
        bad = symbols[(symbols < 0) | (symbols >= K)]
        raise ValueError(f"symbol(s) {bad.tolist()} outside [0, {K})")
    return dictionary.weights[symbols].T.copy()
