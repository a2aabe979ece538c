"""Second-order statistics of the stacked window y(l) and their projections.

Full NP x NP forms (pulse-major blocks, block (l1, l2) is N x N):

    R_t(l)[l1, l2] = sum_q Phi(l, q) exp(j 2 pi (l1 - l2) psi_q)
    R_c[l1, l2]    = sum_i b_i[l1] conj(b_i[l2]) Upsilon,  b_i[p] = w_p^H a(theta_i)
    R_n            = sigma_n^2 I

For the factored filter h = conj(v) (x) u the same expectations collapse to
P x P forms at fixed u and N x N forms at fixed v; both are built here
without ever forming the NP x NP matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .scene import CubeRenderer, complex_normal
from .waveform import DopplerGrid, PowerPrior, build_phi_stack, build_upsilon, doppler_matrix


def doppler_aggregates(phi_stack, grid: DopplerGrid, num_pulses) -> np.ndarray:
    """T_k = sum_q Phi(q) exp(j 2 pi k psi_q) for k = -(P-1)..P-1.

    Returns shape (2P-1, N, N); lag k lives at index k + P - 1.
    """
    lags = np.arange(-(num_pulses - 1), num_pulses)
    E = np.exp(2j * np.pi * np.outer(lags, grid.values))          # (2P-1, Q)
    Q, N, _ = phi_stack.shape
    return (E @ phi_stack.reshape(Q, N * N)).reshape(-1, N, N)


def rt_from_aggregates(T, num_pulses) -> np.ndarray:
    """Block-Toeplitz R_t from its 2P-1 distinct blocks."""
    P = num_pulses
    N = T.shape[1]
    R = np.empty((P * N, P * N), dtype=complex)
    for l1 in range(P):
        for l2 in range(P):
            R[l1 * N : (l1 + 1) * N, l2 * N : (l2 + 1) * N] = T[l1 - l2 + P - 1]
    return R


def assemble_Rt(ell, prior: PowerPrior, s, grid: DopplerGrid, num_pulses) -> np.ndarray:
    """Target covariance R_t(l), NP x NP."""
    return rt_from_aggregates(doppler_aggregates(build_phi_stack(ell, prior, s), grid, num_pulses), num_pulses)


def pulse_coupling(coefficients) -> np.ndarray:
    """C[l1, l2] = sum_i b_i[l1] conj(b_i[l2]) from the (N_c, P) gain matrix."""
    b = np.asarray(coefficients)
    return b.T @ b.conj()


def assemble_Rc(coefficients, upsilon) -> np.ndarray:
    """Clutter covariance R_c, NP x NP, from per-pulse gains and Upsilon."""
    return np.kron(pulse_coupling(coefficients), upsilon)


# --- projections at fixed u (P x P) -------------------------------------------------

def reduced_target_cov(T, u) -> np.ndarray:
    """R~_t[l1, l2] = u^H (sum_q Phi e^{-j2pi(l1-l2)psi_q}) u = u^H T_{l2-l1} u."""
    P = (T.shape[0] + 1) // 2
    t = np.einsum("i,kij,j->k", u.conj(), T, u)
    idx = np.arange(P)[None, :] - np.arange(P)[:, None] + P - 1
    return t[idx]


def reduced_clutter_cov(coefficients, upsilon, u) -> np.ndarray:
    """R~_c[l1, l2] = sum_i conj(b_i[l1]) b_i[l2] u^H Upsilon u."""
    return pulse_coupling(coefficients).conj() * np.vdot(u, upsilon @ u)


def reduced_noise_cov(noise_power, u, num_pulses) -> np.ndarray:
    return noise_power * np.vdot(u, u).real * np.eye(num_pulses)


# --- projections at fixed v (N x N) -------------------------------------------------

def range_target_cov(phi_stack, grid: DopplerGrid, v) -> np.ndarray:
    """R-_t = sum_q |beta_q|^2 Phi(q), beta_q = sum_p v[p] e^{j 2 pi p psi_q}."""
    beta = v @ doppler_matrix(grid, v.size)
    return np.einsum("q,qij->ij", np.abs(beta) ** 2, phi_stack)


def range_clutter_cov(coefficients, upsilon, v) -> np.ndarray:
    """R-_c = sum_i |beta_i|^2 Upsilon, beta_i = sum_p v[p] b_i[p]."""
    beta = np.asarray(coefficients) @ v
    return float(np.sum(np.abs(beta) ** 2)) * upsilon


def range_noise_cov(noise_power, v, N) -> np.ndarray:
    return noise_power * np.vdot(v, v).real * np.eye(N)


# --- dense contractions of a full NP x NP matrix (oracles for the projections) ------

def contract_fixed_u(R, u, num_pulses) -> np.ndarray:
    """P x P matrix M with v^H M v = h^H R h for h = conj(v) (x) u.

    Entry (l1, l2) is u^H R[l2, l1] u, i.e. the transpose of (I (x) u)^H R (I (x) u).
    """
    E = np.kron(np.eye(num_pulses), np.asarray(u).reshape(-1, 1))
    return (E.conj().T @ R @ E).T


def contract_fixed_v(R, v, N) -> np.ndarray:
    """N x N matrix M with u^H M u = h^H R h for h = conj(v) (x) u."""
    E = np.kron(np.asarray(v).conj().reshape(-1, 1), np.eye(N))
    return E.conj().T @ R @ E


@dataclass
class CovarianceModel:
    """Everything the MMSE filters assume about the scene.

    Attributes
    ----------
    s : ndarray (N,)
    grid : DopplerGrid
    num_pulses : int
    prior : PowerPrior
        rho(l, q), L x Q.
    coefficients : ndarray (N_c, P)
        Clutter gains w_p^H a(theta_i).
    clutter_power : float
    noise_power : float
    """

    s: np.ndarray
    grid: DopplerGrid
    num_pulses: int
    prior: PowerPrior
    coefficients: np.ndarray
    clutter_power: float
    noise_power: float
    _upsilon: np.ndarray = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=complex)
        self.coefficients = np.asarray(self.coefficients, dtype=complex).reshape(-1, self.num_pulses)
        if self.prior.shape[1] != self.grid.num_cells:
            raise ValueError(f"prior has {self.prior.shape[1]} Doppler cells, grid has {self.grid.num_cells}")

    @property
    def N(self):
        return self.s.size

    @property
    def L(self):
        return self.prior.shape[0]

    @property
    def Q(self):
        return self.grid.num_cells

    @property
    def has_clutter(self):
        return self.coefficients.shape[0] > 0 and self.clutter_power > 0

    @property
    def upsilon(self):
        if self._upsilon is None:
            self._upsilon = build_upsilon(self.s, self.clutter_power)
        return self._upsilon

    def with_prior(self, prior):
        return CovarianceModel(self.s, self.grid, self.num_pulses, prior, self.coefficients,
                               self.clutter_power, self.noise_power)

    def phi_stack(self, ell):
        return build_phi_stack(ell, self.prior, self.s)

    def aggregates(self, ell, phi_stack=None):
        if phi_stack is None:
            phi_stack = self.phi_stack(ell)
        return doppler_aggregates(phi_stack, self.grid, self.num_pulses)

    def target(self, ell):
        return rt_from_aggregates(self.aggregates(ell), self.num_pulses)

    def clutter(self):
        return assemble_Rc(self.coefficients, self.upsilon)

    def noise(self):
        return self.noise_power * np.eye(self.N * self.num_pulses)

    def full(self, ell):
        return self.target(ell) + self.clutter() + self.noise()

    def jrdmf_vector(self, q):
        """d(psi_q) (x) s."""
        d = np.exp(2j * np.pi * self.grid.values[q] * np.arange(self.num_pulses))
        return np.kron(d, self.s)

    def cross(self, ell, q):
        """E{y(l) x*(l, q)} = rho(l, q) d(psi_q) (x) s."""
        return self.prior.rho[ell - 1, q] * self.jrdmf_vector(q)

    def cost(self, ell, q, h, R=None):
        """Analytic MMSE cost E|x - h^H y|^2 under this model."""
        if R is None:
            R = self.full(ell)
        rho = self.prior.rho[ell - 1, q]
        r = self.cross(ell, q)
        return float(rho - 2.0 * np.vdot(h, r).real + np.vdot(h, R @ h).real)


# --- Monte-Carlo oracles ------------------------------------------------------------

_COMPONENTS = ("target", "clutter", "noise")


def _draw_component(component, model: CovarianceModel, renderer, rng, batch):
    N, P, L = model.N, model.num_pulses, model.L
    if component == "target":
        field_ = complex_normal(rng, model.prior.rho, (batch, L, model.Q))
        return renderer.targets(field_), field_
    if component == "clutter":
        Nc = model.coefficients.shape[0]
        resp = complex_normal(rng, model.clutter_power, (batch, Nc, L + 2 * N - 2))
        return renderer.clutter(resp, model.coefficients), None
    if component == "noise":
        return complex_normal(rng, model.noise_power, (batch, P, L + N - 1)), None
    raise ValueError(f"unknown component {component!r}; expected one of {_COMPONENTS}")


def mc_covariance_oracle(component, model: CovarianceModel, ell, num_draws, seed=None, batch=2000) -> np.ndarray:
    """Empirical E{y(l) y(l)^H} of one scene component.

    Independent scene realizations are rendered through the synthesis path
    (convolution with s, per-pulse Doppler rotation or clutter gain) and the
    outer products of the stacked window are averaged.
    """
    if num_draws < 1000:
        raise ValueError("num_draws must be at least 1000")
    rng = np.random.default_rng(seed)
    renderer = CubeRenderer(model.s, model.grid, model.num_pulses, model.L)
    N, P = model.N, model.num_pulses
    acc = np.zeros((N * P, N * P), dtype=complex)
    done = 0
    while done < num_draws:
        b = min(batch, num_draws - done)
        cubes, _ = _draw_component(component, model, renderer, rng, b)
        y = cubes[:, :, ell - 1 : ell - 1 + N].reshape(b, N * P)
        acc += y.T @ y.conj()
        done += b
    return acc / num_draws


def mc_cost_oracle(model: CovarianceModel, ell, q, u, v, num_draws, seed=None, batch=2000) -> float:
    """Empirical E|x(l, q) - u^H Y(l) v|^2 over full scene realizations."""
    rng = np.random.default_rng(seed)
    renderer = CubeRenderer(model.s, model.grid, model.num_pulses, model.L)
    N = model.N
    total = 0.0
    done = 0
    while done < num_draws:
        b = min(batch, num_draws - done)
        y, field_ = _draw_component("target", model, renderer, rng, b)
        if model.has_clutter:
            y = y + _draw_component("clutter", model, renderer, rng, b)[0]
        y = y + _draw_component("noise", model, renderer, rng, b)[0]
        Y = y[:, :, ell - 1 : ell - 1 + N]                      # (b, P, N) = Y(l)^T
        est = np.einsum("i,bpi,p->b", u.conj(), Y, v)
        total += float(np.sum(np.abs(field_[:, ell - 1, q] - est) ** 2))
        done += b
    return total / num_draws
