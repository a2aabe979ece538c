"""Transmit waveform, Doppler grid and the shift-outer-product matrices.

``build_phi`` and ``build_upsilon`` are the N x N building blocks of every
covariance used by the adaptive filters:

    Phi(l, q) = sum_{n=-N+1}^{N-1} rho(n + l, q) s_n s_n^H
    Upsilon   = sigma_c^2 sum_{n=-N+1}^{N-1} s_n s_n^H

where ``s_n`` is the waveform delayed by n samples with zero fill.
Range cells ``l`` are 1-based labels in [1, L]; Doppler cells ``q`` are
0-based in [0, Q).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Waveform:
    """Sampled transmit pulse.

    Attributes
    ----------
    samples : ndarray, shape (N,)
    pulse_width : float
        Seconds.
    bandwidth : float
        Hz.
    start_frequency : float
        Hz.
    """

    samples: np.ndarray
    pulse_width: float = 0.0
    bandwidth: float = 0.0
    start_frequency: float = 0.0

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=complex)
        if s.ndim != 1 or s.size < 2:
            raise ValueError("waveform needs at least two samples")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return self.samples.size

    @property
    def energy(self):
        return float(np.vdot(self.samples, self.samples).real)


@dataclass(frozen=True)
class DopplerGrid:
    """Q-point normalized Doppler grid, psi_q = -0.5 + q/Q for q = 0..Q-1."""

    num_cells: int

    def __post_init__(self):
        if int(self.num_cells) != self.num_cells or self.num_cells < 1:
            raise ValueError(f"Doppler grid needs a positive integer size, got {self.num_cells}")

    @property
    def values(self) -> np.ndarray:
        return -0.5 + np.arange(self.num_cells) / self.num_cells

    def __len__(self):
        return self.num_cells


@dataclass
class PowerPrior:
    """Power prior rho(l, q) over the processing window.

    ``rho[l - 1, q]`` holds rho(l, q); any range label outside [1, L] reads
    as zero (guard band).
    """

    rho: np.ndarray

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        if self.rho.ndim != 2:
            raise ValueError("prior must be an L x Q array")
        if np.any(self.rho < 0) or not np.all(np.isfinite(self.rho)):
            raise ValueError("prior entries must be finite and nonnegative")

    @property
    def shape(self):
        return self.rho.shape

    def window(self, ell, half_width) -> np.ndarray:
        """rho(ell + n, :) for n = -half_width..half_width, zero outside [1, L].

        Returns an array of shape (2 * half_width + 1, Q).
        """
        L, Q = self.rho.shape
        labels = ell + np.arange(-half_width, half_width + 1)
        out = np.zeros((labels.size, Q))
        inside = (labels >= 1) & (labels <= L)
        out[inside] = self.rho[labels[inside] - 1]
        return out


def lfm_waveform(N, pulse_width, bandwidth, start_frequency=0.0) -> Waveform:
    """Linear FM pulse sampled at t_i = i * pulse_width / N.

    ``s(i) = exp(j 2 pi (f0 t_i + B / (2 tau) t_i^2))``. The phase is wrapped
    before exponentiation so a GHz start frequency does not lose precision.
    """
    if N < 2 or pulse_width <= 0 or bandwidth < 0:
        raise ValueError("lfm_waveform needs N >= 2, pulse_width > 0, bandwidth >= 0")
    i = np.arange(N, dtype=float)
    dt = pulse_width / N
    # cycles = f0*t + k/2*t^2, evaluated in reduced form to keep |phase| small
    cycles = np.mod(start_frequency * dt * i, 1.0) + np.mod(bandwidth / (2.0 * pulse_width) * dt * dt * i * i, 1.0)
    return Waveform(np.exp(2j * np.pi * cycles), pulse_width, bandwidth, start_frequency)


def shifted_waveform(s, n) -> np.ndarray:
    """Delay ``s`` by ``n`` samples (advance for n < 0) with zero fill."""
    s = np.asarray(s)
    N = s.size
    out = np.zeros(N, dtype=complex)
    if abs(n) >= N:
        return out
    if n >= 0:
        out[n:] = s[: N - n]
    else:
        out[: N + n] = s[-n:]
    return out


def shift_matrix(s) -> np.ndarray:
    """All shifts s_n, n = -N+1..N-1, stacked as rows: shape (2N-1, N)."""
    s = np.asarray(s, dtype=complex)
    N = s.size
    return np.stack([shifted_waveform(s, n) for n in range(-N + 1, N)])


def build_phi(ell, q, prior: PowerPrior, s) -> np.ndarray:
    """Phi(ell, q) = sum_n rho(n + ell, q) s_n s_n^H for one cell."""
    L, Q = prior.shape
    if not 1 <= ell <= L:
        raise ValueError(f"range cell {ell} outside [1, {L}]")
    if not 0 <= q < Q:
        raise ValueError(f"Doppler cell {q} outside [0, {Q})")
    return build_phi_stack(ell, prior, s)[q]


def build_phi_stack(ell, prior: PowerPrior, s) -> np.ndarray:
    """Phi(ell, q) for every Doppler cell: shape (Q, N, N)."""
    S = shift_matrix(s)                          # (2N-1, N)
    N = S.shape[1]
    rho = prior.window(ell, N - 1)               # (2N-1, Q)
    # sum_n rho[n,q] S[n,i] conj(S[n,j])
    return np.einsum("nq,ni,nj->qij", rho, S, S.conj(), optimize=True)


def build_upsilon(s, clutter_power) -> np.ndarray:
    """Upsilon = sigma_c^2 sum_n s_n s_n^H."""
    if clutter_power < 0:
        raise ValueError("clutter power must be nonnegative")
    S = shift_matrix(s)
    return clutter_power * (S.T @ S.conj())


def doppler_steering(grid: DopplerGrid, q, num_pulses) -> np.ndarray:
    """Temporal steering vector d(psi_q) = [1, e^{j2pi psi}, ..., e^{j2pi(P-1)psi}]."""
    if not 0 <= q < grid.num_cells:
        raise ValueError(f"Doppler cell {q} outside [0, {grid.num_cells})")
    return np.exp(2j * np.pi * grid.values[q] * np.arange(num_pulses))


def doppler_matrix(grid: DopplerGrid, num_pulses) -> np.ndarray:
    """All steering vectors as columns: D[p, q] = exp(j 2 pi p psi_q)."""
    return np.exp(2j * np.pi * np.outer(np.arange(num_pulses), grid.values))


def save_waveform(path, waveform: Waveform):
    """Write one "re im" row per sample."""
    s = waveform.samples
    header = f"N={s.size} tau={waveform.pulse_width!r} B={waveform.bandwidth!r} f0={waveform.start_frequency!r}"
    np.savetxt(path, np.column_stack([s.real, s.imag]), fmt="%.17g", header=header)


def load_waveform(path) -> Waveform:
    data = np.loadtxt(path, ndmin=2)
    meta = {}
    with open(path) as fh:
        first = fh.readline()
    if first.startswith("#"):
        for tok in first[1:].split():
            k, _, v = tok.partition("=")
            meta[k] = float(v)
    return Waveform(
        data[:, 0] + 1j * data[:, 1],
        meta.get("tau", 0.0),
        meta.get("B", 0.0),
        meta.get("f0", 0.0),
    )
