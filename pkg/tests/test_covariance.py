import numpy as np
import pytest
from hypothesis import given, strategies as st

from jrdap.covariance import (CovarianceModel, assemble_Rc, assemble_Rt, contract_fixed_u,
                              contract_fixed_v, mc_cost_oracle, mc_covariance_oracle, pulse_coupling,
                              range_clutter_cov, range_target_cov, reduced_clutter_cov,
                              reduced_target_cov)
from jrdap.waveform import DopplerGrid, PowerPrior, build_phi, build_upsilon, lfm_waveform

from conftest import crandn


def make_model(rng, N=4, P=3, Q=4, L=6, Nc=5, sc=0.7, sn=1.0):
    s = lfm_waveform(N, 1e-6, 1e6).samples
    prior = PowerPrior(rng.exponential(size=(L, Q)))
    coeffs = crandn(rng, Nc, P) * 0.5
    return CovarianceModel(s, DopplerGrid(Q), P, prior, coeffs, sc, sn)


def naive_Rt(ell, prior, s, grid, P):
    N = s.size
    R = np.zeros((N * P, N * P), dtype=complex)
    for l1 in range(P):
        for l2 in range(P):
            blk = sum(build_phi(ell, q, prior, s) * np.exp(2j * np.pi * (l1 - l2) * grid.values[q])
                      for q in range(grid.num_cells))
            R[l1 * N:(l1 + 1) * N, l2 * N:(l2 + 1) * N] = blk
    return R


def test_Rt_trivial_and_naive(rng):
    m = make_model(rng)
    assert np.all(assemble_Rt(2, PowerPrior(np.zeros((6, 4))), m.s, m.grid, 3) == 0)
    R1 = assemble_Rt(2, m.prior, m.s, m.grid, 1)
    np.testing.assert_allclose(R1, sum(build_phi(2, q, m.prior, m.s) for q in range(4)), atol=1e-12)
    for ell in (1, 3, 6):
        np.testing.assert_allclose(m.target(ell), naive_Rt(ell, m.prior, m.s, m.grid, 3), atol=1e-12)


def test_Rc_forms(rng):
    m = make_model(rng)
    U = build_upsilon(m.s, 0.7)
    assert np.all(assemble_Rc(np.zeros((0, 3)), U) == 0)
    b = crandn(rng, 5)
    R = assemble_Rc(np.tile(b[:, None], (1, 3)), U)
    blk = np.sum(np.abs(b) ** 2) * U
    for i in range(3):
        for j in range(3):
            np.testing.assert_allclose(R[i * 4:(i + 1) * 4, j * 4:(j + 1) * 4], blk, atol=1e-12)
    naive = np.zeros((12, 12), dtype=complex)
    for i in range(5):
        for l1 in range(3):
            for l2 in range(3):
                naive[l1 * 4:(l1 + 1) * 4, l2 * 4:(l2 + 1) * 4] += m.coefficients[i, l1] * np.conj(m.coefficients[i, l2]) * U
    np.testing.assert_allclose(m.clutter(), naive, atol=1e-12)


def _rel(A, B):
    return np.linalg.norm(A - B) / np.linalg.norm(B)


def test_mc_target_matches_closed_form(rng):
    m = make_model(rng)
    for ell in (1, 4):
        assert _rel(mc_covariance_oracle("target", m, ell, 20000, seed=5), m.target(ell)) < 0.05


def test_mc_clutter_matches_closed_form(rng):
    m = make_model(rng)
    assert _rel(mc_covariance_oracle("clutter", m, 3, 20000, seed=6), m.clutter()) < 0.05
    ncbm = CovarianceModel(m.s, m.grid, 3, m.prior, np.tile(m.coefficients[:, :1], (1, 3)), 0.7, 1.0)
    assert _rel(mc_covariance_oracle("clutter", ncbm, 3, 20000, seed=7), ncbm.clutter()) < 0.05


def test_mc_noise(rng):
    m = make_model(rng)
    K = 20000
    R = mc_covariance_oracle("noise", m, 2, K, seed=8)
    np.testing.assert_allclose(np.diag(R).real, 1.0, atol=5 / np.sqrt(K))
    off = R - np.diag(np.diag(R))
    assert np.max(np.abs(off)) < 5 / np.sqrt(K)
    with pytest.raises(ValueError):
        mc_covariance_oracle("noise", m, 2, 999)
    with pytest.raises(ValueError):
        mc_covariance_oracle("plasma", m, 2, 1000)


@given(st.integers(0, 2 ** 31))
def test_projection_identities(seed):
    rng = np.random.default_rng(seed)
    m = make_model(rng, N=int(rng.integers(2, 6)), P=int(rng.integers(1, 5)), Q=int(rng.integers(1, 6)))
    ell = int(rng.integers(1, m.L + 1))
    u, v = crandn(rng, m.N), crandn(rng, m.num_pulses)
    Rt, Rc = m.target(ell), m.clutter()
    tol = 1e-10
    assert _rel(reduced_target_cov(m.aggregates(ell), u), contract_fixed_u(Rt, u, m.num_pulses)) < tol
    assert _rel(range_target_cov(m.phi_stack(ell), m.grid, v), contract_fixed_v(Rt, v, m.N)) < tol
    assert _rel(reduced_clutter_cov(m.coefficients, m.upsilon, u), contract_fixed_u(Rc, u, m.num_pulses)) < tol
    assert _rel(range_clutter_cov(m.coefficients, m.upsilon, v), contract_fixed_v(Rc, v, m.N)) < tol


@given(st.integers(0, 2 ** 31))
def test_contractions_reproduce_quadratic_form(seed):
    rng = np.random.default_rng(seed)
    m = make_model(rng)
    u, v = crandn(rng, m.N), crandn(rng, m.num_pulses)
    R = m.full(3)
    h = np.kron(v.conj(), u)
    q = np.vdot(h, R @ h)
    assert np.vdot(v, contract_fixed_u(R, u, 3) @ v) == pytest.approx(q, rel=1e-12)
    assert np.vdot(u, contract_fixed_v(R, v, m.N) @ u) == pytest.approx(q, rel=1e-12)


@given(st.integers(0, 2 ** 31))
def test_covariances_hermitian_psd(seed):
    rng = np.random.default_rng(seed)
    m = make_model(rng)
    ell = int(rng.integers(1, m.L + 1))
    for M in (m.target(ell), m.clutter(), m.noise(), m.full(ell)):
        tr = np.trace(M).real
        assert np.max(np.abs(M - M.conj().T)) <= 1e-12 * tr
        assert np.linalg.eigvalsh(M).min() >= -1e-10 * tr


def test_noise_forms_exact(rng):
    m = make_model(rng, sn=2.5)
    np.testing.assert_array_equal(m.noise(), 2.5 * np.eye(12))


def test_mc_cost_matches_analytic(rng):
    m = make_model(rng)
    u, v = crandn(rng, 4), crandn(rng, 3) * 0.1
    ana = m.cost(3, 1, np.kron(v.conj(), u))
    mc = mc_cost_oracle(m, 3, 1, u, v, 20000, seed=3)
    assert mc == pytest.approx(ana, rel=0.05)


@given(st.floats(0.1, 10.0), st.integers(0, 2 ** 31))
def test_scale_invariance_mc_cost(gamma, seed):
    rng = np.random.default_rng(seed)
    m = make_model(rng, L=4)
    u, v = crandn(rng, 4), crandn(rng, 3) * 0.1
    a = mc_cost_oracle(m, 2, 1, u, v, 1000, seed=seed)
    b = mc_cost_oracle(m, 2, 1, gamma * u, v / gamma, 1000, seed=seed)
    assert b == pytest.approx(a, rel=1e-10)
    assert m.cost(2, 1, np.kron((v / gamma).conj(), gamma * u)) == pytest.approx(m.cost(2, 1, np.kron(v.conj(), u)), rel=1e-10)


def test_pulse_coupling_definition(rng):
    b = crandn(rng, 5, 3)
    C = pulse_coupling(b)
    assert C[0, 1] == pytest.approx(np.sum(b[:, 0] * b[:, 1].conj()))
