import numpy as np
import pytest
from hypothesis import given, strategies as st

from jrdap.waveform import (DopplerGrid, PowerPrior, build_phi, build_phi_stack, build_upsilon,
                            doppler_matrix, doppler_steering, lfm_waveform, load_waveform,
                            save_waveform, shift_matrix, shifted_waveform)

from conftest import crandn


def naive_shift(s, n):
    N = len(s)
    return np.array([s[i - n] if 0 <= i - n < N else 0 for i in range(N)], dtype=complex)


def naive_phi(ell, q, rho, s):
    N = len(s)
    L = rho.shape[0]
    out = np.zeros((N, N), dtype=complex)
    for n in range(-N + 1, N):
        lab = n + ell
        if 1 <= lab <= L:
            sn = naive_shift(s, n)
            for i in range(N):
                for j in range(N):
                    out[i, j] += rho[lab - 1, q] * sn[i] * np.conj(sn[j])
    return out


def test_lfm_paper_parameters():
    wf = lfm_waveform(32, 4e-6, 4e6, 1e9)
    assert len(wf) == 32
    np.testing.assert_allclose(np.abs(wf.samples), 1.0, atol=1e-15)
    assert abs(np.vdot(wf.samples, wf.samples)) == pytest.approx(32.0)


def test_lfm_zero_chirp_is_pure_tone():
    wf = lfm_waveform(8, 1e-6, 0.0, 1.3e6)
    ph = np.unwrap(np.angle(wf.samples))
    np.testing.assert_allclose(np.diff(ph, 2), 0.0, atol=1e-12)


def test_lfm_matches_direct_phase_formula():
    N, tau, B, f0 = 16, 2e-6, 3e6, 0.25e6
    t = np.arange(N) * tau / N
    want = np.exp(2j * np.pi * (f0 * t + B / (2 * tau) * t ** 2))
    np.testing.assert_allclose(lfm_waveform(N, tau, B, f0).samples, want, atol=1e-12)


def test_lfm_rejects_bad_input():
    with pytest.raises(ValueError):
        lfm_waveform(1, 1e-6, 1e6)
    with pytest.raises(ValueError):
        lfm_waveform(8, 0.0, 1e6)


def test_shift_examples():
    s = np.arange(1, 6).astype(complex)
    np.testing.assert_array_equal(shifted_waveform(s, 0), s)
    np.testing.assert_array_equal(shifted_waveform(s, 2), [0, 0, 1, 2, 3])
    np.testing.assert_array_equal(shifted_waveform(s, -2), [3, 4, 5, 0, 0])
    np.testing.assert_array_equal(shifted_waveform(s, 7), np.zeros(5))


@given(st.integers(2, 12), st.integers(-15, 15))
def test_shift_support_count(N, n):
    s = np.exp(1j * np.arange(N))
    out = shifted_waveform(s, n)
    assert np.count_nonzero(out) == min(N, max(0, N - abs(n)))
    np.testing.assert_array_equal(out, naive_shift(s, n))


def test_shift_matrix_rows():
    s = np.exp(0.3j * np.arange(4))
    S = shift_matrix(s)
    assert S.shape == (7, 4)
    for k, n in enumerate(range(-3, 4)):
        np.testing.assert_array_equal(S[k], shifted_waveform(s, n))


def test_phi_trivial_cases():
    s = lfm_waveform(6, 1e-6, 1e6).samples
    assert np.all(build_phi(3, 1, PowerPrior(np.zeros((5, 4))), s) == 0)
    rho = np.zeros((5, 4))
    rho[2, 1] = 1.0
    np.testing.assert_allclose(build_phi(3, 1, PowerPrior(rho), s), np.outer(s, s.conj()), atol=1e-14)


def test_phi_matches_naive_sum(rng):
    s = crandn(rng, 4)
    rho = rng.exponential(size=(7, 3))
    prior = PowerPrior(rho)
    for ell in (1, 4, 7):
        for q in range(3):
            np.testing.assert_allclose(build_phi(ell, q, prior, s), naive_phi(ell, q, rho, s), atol=1e-12)
    stack = build_phi_stack(2, prior, s)
    assert stack.shape == (3, 4, 4)


def test_phi_index_errors():
    prior = PowerPrior(np.ones((3, 2)))
    with pytest.raises(ValueError):
        build_phi(0, 0, prior, np.ones(3))
    with pytest.raises(ValueError):
        build_phi(1, 2, prior, np.ones(3))


def test_upsilon(rng):
    s = crandn(rng, 4)
    assert np.all(build_upsilon(s, 0.0) == 0)
    naive = sum(np.outer(naive_shift(s, n), naive_shift(s, n).conj()) for n in range(-3, 4))
    np.testing.assert_allclose(build_upsilon(s, 2.5), 2.5 * naive, atol=1e-12)
    u = lfm_waveform(9, 1e-6, 1e6).samples
    assert np.trace(build_upsilon(u, 0.7)).real == pytest.approx(0.7 * 81)
    with pytest.raises(ValueError):
        build_upsilon(s, -1.0)


@given(st.integers(2, 8), st.integers(1, 6), st.integers(1, 5), st.integers(0, 2 ** 31))
def test_phi_hermitian_psd(N, L, Q, seed):
    rng = np.random.default_rng(seed)
    s = crandn(rng, N)
    prior = PowerPrior(rng.exponential(size=(L, Q)))
    ell = int(rng.integers(1, L + 1))
    for M in list(build_phi_stack(ell, prior, s)) + [build_upsilon(s, 1.3)]:
        tr = np.trace(M).real
        assert np.max(np.abs(M - M.conj().T)) <= 1e-12 * max(tr, 1.0)
        assert np.linalg.eigvalsh(M).min() >= -1e-10 * tr


def test_doppler_grid_and_steering():
    g = DopplerGrid(8)
    np.testing.assert_allclose(g.values, -0.5 + np.arange(8) / 8)
    assert np.all(np.diff(g.values) > 0)
    np.testing.assert_allclose(doppler_steering(g, 4, 5), 1.0)
    np.testing.assert_allclose(doppler_steering(DopplerGrid(2), 0, 2), [1, -1], atol=1e-15)
    d = doppler_steering(g, 3, 7)
    np.testing.assert_allclose(np.abs(d), 1.0)
    assert np.vdot(d, d).real == pytest.approx(7)
    np.testing.assert_allclose(doppler_matrix(g, 7)[:, 3], d)
    with pytest.raises(ValueError):
        doppler_steering(g, 8, 3)
    with pytest.raises(ValueError):
        DopplerGrid(0)


def test_prior_guard_band_and_validation():
    p = PowerPrior(np.arange(6.0).reshape(3, 2))
    win = p.window(1, 2)
    np.testing.assert_array_equal(win[:2], 0.0)
    np.testing.assert_array_equal(win[2], [0, 1])
    with pytest.raises(ValueError):
        PowerPrior(-np.ones((2, 2)))


def test_waveform_roundtrip(tmp_path):
    wf = lfm_waveform(12, 4e-6, 4e6, 1e9)
    save_waveform(tmp_path / "w.txt", wf)
    back = load_waveform(tmp_path / "w.txt")
    np.testing.assert_array_equal(back.samples, wf.samples)
    assert back.pulse_width == wf.pulse_width and back.bandwidth == wf.bandwidth
