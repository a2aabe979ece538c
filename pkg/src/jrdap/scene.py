"""Scene description and synthesis of the slow-time / fast-time data cube.

Fast-time sample labels run over m = 1..L+N-1; the cube stores them at
column m-1. A scatterer at range label k contributes ``amp * s(i)`` to
sample k + i. The window vector for range cell l is
``y_p(l) = [y_p(l), ..., y_p(l+N-1)]``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import convolution_matrix

from .array_beam import ArrayGeometry, steering_vector
from .waveform import DopplerGrid, Waveform, doppler_matrix


@dataclass(frozen=True)
class Target:
    """Swerling-I point target.

    ``range_cell`` is a 1-based label in [1, L], ``doppler_cell`` a 0-based
    index in [0, Q). ``snr_db`` is the per-sample, pre-compression ratio
    E|x|^2 / sigma_n^2.
    """

    angle: float
    range_cell: int
    doppler_cell: int
    snr_db: float


@dataclass(frozen=True)
class ClutterField:
    """Stationary clutter patches evenly spread over an angle interval."""

    num_patches: int
    patch_power: float
    angle_min: float = -60.0
    angle_max: float = 60.0

    def __post_init__(self):
        if self.num_patches < 0:
            raise ValueError("num_patches must be >= 0")
        if self.patch_power < 0:
            raise ValueError("patch_power must be >= 0")

    @property
    def angles(self) -> np.ndarray:
        return np.linspace(self.angle_min, self.angle_max, self.num_patches)


@dataclass(frozen=True)
class Scene:
    """Targets, clutter and noise over a window of ``num_range_cells`` cells.

    Target SNRs are referenced to ``reference_power``, which defaults to the
    noise power. Set it explicitly to synthesize noise-free scenes with
    nonzero targets.
    """

    targets: tuple
    clutter: ClutterField
    noise_power: float
    num_range_cells: int
    reference_power: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        if self.noise_power < 0:
            raise ValueError("noise_power must be >= 0")
        if self.num_range_cells < 1:
            raise ValueError("num_range_cells must be >= 1")
        if self.reference_power is not None and self.reference_power < 0:
            raise ValueError("reference_power must be >= 0")

    @property
    def snr_reference(self):
        return self.noise_power if self.reference_power is None else self.reference_power


@dataclass
class SceneRealization:
    """Random draws behind one cube.

    ``clutter_responses`` covers range labels 2-N .. L+N-1 (every label that
    reaches a window sample), so it has L + 2N - 2 columns.
    """

    target_amplitudes: np.ndarray
    clutter_responses: np.ndarray
    noise: np.ndarray
    seed: Optional[int]
    field_truth: Optional[np.ndarray] = None


@dataclass
class DataCube:
    """Received samples y_p(m), shape (P, L + N - 1)."""

    samples: np.ndarray
    waveform_length: int
    num_range_cells: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=complex)
        expected = self.num_range_cells + self.waveform_length - 1
        if self.samples.ndim != 2 or self.samples.shape[1] != expected:
            raise ValueError(
                f"cube must have shape (P, L+N-1) = (P, {expected}), got {self.samples.shape}"
            )

    @property
    def num_pulses(self):
        return self.samples.shape[0]

    def _check(self, ell):
        if not 1 <= ell <= self.num_range_cells:
            raise IndexError(f"range cell {ell} outside [1, {self.num_range_cells}]")

    def matrix(self, ell) -> np.ndarray:
        """Y(l): N x P, column p is y_p(l)."""
        self._check(ell)
        N = self.waveform_length
        return self.samples[:, ell - 1 : ell - 1 + N].T.copy()

    def stacked(self, ell) -> np.ndarray:
        """y(l): length NP, pulse-major blocks of N fast-time samples."""
        self._check(ell)
        N = self.waveform_length
        return self.samples[:, ell - 1 : ell - 1 + N].reshape(-1)

    def windows(self) -> np.ndarray:
        """Y(l) for every l: shape (L, N, P)."""
        N = self.waveform_length
        win = np.lib.stride_tricks.sliding_window_view(self.samples, N, axis=1)  # (P, L, N)
        return np.ascontiguousarray(win.transpose(1, 2, 0))


def complex_normal(rng, power, size):
    """i.i.d. circular complex Gaussian with E|z|^2 = power."""
    scale = np.sqrt(np.asarray(power, dtype=float) / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def clutter_modulation_coefficients(W, clutter: ClutterField, geometry: Optional[ArrayGeometry] = None) -> np.ndarray:
    """Per-pulse clutter gains: entry (i, p) = w_p^H a(theta_i), shape (N_c, P)."""
    W = np.asarray(W, dtype=complex)
    if geometry is None:
        geometry = ArrayGeometry(W.shape[0])
    if W.shape[0] != geometry.num_elements:
        raise ValueError(f"W has {W.shape[0]} rows, array has {geometry.num_elements} elements")
    if clutter.num_patches == 0:
        return np.zeros((0, W.shape[1]), dtype=complex)
    A = steering_vector(geometry, clutter.angles)   # (Nc, M)
    return A @ W.conj()


def clutter_power_for_cnr(cnr_db, noise_power, s, ncbm_coefficients) -> float:
    """Patch power sigma_c^2 giving the requested per-sample CNR.

    CNR is the clutter power per received sample under a constant
    transmit weight (``ncbm_coefficients`` = w_1^H a(theta_i)) relative to
    the noise power: sigma_c^2 ||s||^2 sum_i |w_1^H a(theta_i)|^2 / sigma_n^2.
    """
    gain = float(np.sum(np.abs(ncbm_coefficients) ** 2))
    energy = float(np.vdot(s, s).real)
    if gain == 0.0:
        return 0.0
    return noise_power * 10.0 ** (cnr_db / 10.0) / (energy * gain)


class CubeRenderer:
    """Linear map from scatterer fields and noise to cube samples.

    Works on arbitrary leading batch dimensions so Monte-Carlo oracles can
    render many realizations in one call.
    """

    def __init__(self, s, grid: DopplerGrid, num_pulses, num_range_cells):
        self.s = np.asarray(s, dtype=complex)
        self.N = self.s.size
        self.L = num_range_cells
        self.P = num_pulses
        self.grid = grid
        self.D = doppler_matrix(grid, num_pulses)                       # (P, Q)
        # target labels 1..L -> samples 1..L+N-1
        self.conv_target = convolution_matrix(self.s, self.L, mode="full")   # (L+N-1, L)
        # clutter labels 2-N..L+N-1 -> keep samples 1..L+N-1
        full = convolution_matrix(self.s, self.L + 2 * self.N - 2, mode="full")
        self.conv_clutter = full[self.N - 1 : self.N - 1 + self.L + self.N - 1]

    @property
    def num_samples(self):
        return self.L + self.N - 1

    def targets(self, field):
        """field[..., L, Q] impulse responses x(k, q) -> (..., P, L+N-1)."""
        z = np.einsum("pq,...kq->...pk", self.D, field)               # (..., P, L)
        return z @ self.conv_target.T

    def clutter(self, responses, coefficients):
        """responses[..., Nc, L+2N-2], coefficients (Nc, P) -> (..., P, L+N-1)."""
        echoes = responses @ self.conv_clutter.T                         # (..., Nc, L+N-1)
        return np.einsum("ip,...im->...pm", coefficients, echoes)


def synthesize(scene: Scene, W, waveform: Waveform, grid: DopplerGrid, seed=None, geometry: Optional[ArrayGeometry] = None):
    """Draw one CPI of received data.

    Each target contributes a Swerling-I complex amplitude times the
    transmit gain w_p^H a(theta) (exactly 1 on the designed mainlobe),
    delayed to its range label and rotated by exp(j 2 pi (p-1) psi_q0).
    Clutter patch i contributes a Gaussian response convolved with s and
    scaled per pulse by w_p^H a(theta_i). Noise is white with power
    ``scene.noise_power``.

    Returns
    -------
    cube : DataCube
    realization : SceneRealization
    """
    W = np.asarray(W, dtype=complex)
    s = waveform.samples
    N, L = s.size, scene.num_range_cells
    if W.ndim != 2:
        raise ValueError("W must be an M x P matrix")
    if geometry is None:
        geometry = ArrayGeometry(W.shape[0])
    if W.shape[0] != geometry.num_elements:
        raise ValueError(f"W has {W.shape[0]} rows, array has {geometry.num_elements} elements")
    P = W.shape[1]
    Q = grid.num_cells
    for t in scene.targets:
        if not 1 <= t.range_cell <= L or not 0 <= t.doppler_cell < Q:
            raise ValueError(f"target {t} outside the {L} x {Q} range-Doppler grid")

    rng = np.random.default_rng(seed)
    renderer = CubeRenderer(s, grid, P, L)
    samples = np.zeros((P, renderer.num_samples), dtype=complex)

    amps = complex_normal(
        rng, [scene.snr_reference * 10.0 ** (t.snr_db / 10.0) for t in scene.targets], len(scene.targets)
    )
    truth = np.zeros((L, Q), dtype=complex)
    pulses = np.arange(P)
    for t, amp in zip(scene.targets, amps):
        gain = steering_vector(geometry, t.angle) @ W.conj()          # (P,)
        rot = np.exp(2j * np.pi * grid.values[t.doppler_cell] * pulses)
        k = t.range_cell - 1
        samples[:, k : k + N] += (amp * gain * rot)[:, None] * s[None, :]
        truth[k, t.doppler_cell] += amp

    coeffs = clutter_modulation_coefficients(W, scene.clutter, geometry)
    responses = complex_normal(rng, scene.clutter.patch_power, (scene.clutter.num_patches, L + 2 * N - 2))
    if scene.clutter.num_patches:
        samples += renderer.clutter(responses, coeffs)

    noise = complex_normal(rng, scene.noise_power, samples.shape)
    samples += noise
    cube = DataCube(samples, N, L)
    return cube, SceneRealization(amps, responses, noise, seed, truth)


_HEADER = struct.Struct("<5q")


def save_cube(path, cube: DataCube, num_doppler_cells, num_elements):
    """Binary cube: header (P, L, N, Q, M) as little-endian int64, then
    interleaved re/im float64 samples in row-major (pulse, fast-time) order."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(cube.num_pulses, cube.num_range_cells, cube.waveform_length,
                              int(num_doppler_cells), int(num_elements)))
        inter = np.empty(cube.samples.shape + (2,), dtype="<f8")
        inter[..., 0] = cube.samples.real
        inter[..., 1] = cube.samples.imag
        fh.write(inter.tobytes())


def load_cube(path):
    """Inverse of :func:`save_cube`. Returns (cube, header dict)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated cube header")
    P, L, N, Q, M = _HEADER.unpack_from(raw)
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    n = P * (L + N - 1) * 2
    if body.size != n:
        raise ValueError(f"{path}: expected {n} floats after header, found {body.size}")
    body = body.reshape(P, L + N - 1, 2)
    cube = DataCube(body[..., 0] + 1j * body[..., 1], N, L)
    return cube, {"P": P, "L": L, "N": N, "Q": Q, "M": M}
