"""Real orthonormal Fourier basis and non-parametric spectrum estimation.

Coefficients live in the real harmonic basis: one DC row, a (cos, sin)
pair of rows per frequency 0 < nu < T/2 and, for even T, a Nyquist row.
All rows have unit norm, so the transform is orthogonal and a stationary
prior is diagonal with equal variance on both members of a pair.

For the unnormalised complex DFT ``s_nu = sum_t exp(-2 pi i nu t / T) z_t``
one has ``E|s_nu|^2 = T * tau(nu)`` at every frequency, where ``tau`` is
the per-coefficient variance stored here (see ``SpectralPrior.dft_power``).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np


class LengthMismatch(ValueError):
    code = "LengthMismatch"


class TooFewControls(ValueError):
    code = "TooFewControls"


class PanelMismatch(ValueError):
    code = "PanelMismatch"


#: relative floor applied to prior variances before inversion
TAU_FLOOR = 1e-12


@dataclass(frozen=True)
class HarmonicBasis:
    T: int

    def __post_init__(self):
        if self.T < 1:
            raise LengthMismatch("series length must be positive")

    @cached_property
    def freq(self) -> np.ndarray:
        """Frequency index of each basis row."""
        T = self.T
        nu = [0]
        for f in range(1, (T - 1) // 2 + 1):
            nu += [f, f]
        if T % 2 == 0:
            nu.append(T // 2)
        return np.array(nu)

    @cached_property
    def is_sin(self) -> np.ndarray:
        mask = np.zeros(self.T, dtype=bool)
        mask[2:2 * ((self.T - 1) // 2) + 1:2] = True
        return mask

    @property
    def n_freq(self) -> int:
        return self.T // 2 + 1

    @cached_property
    def basis(self) -> np.ndarray:
        T = self.T
        t = np.arange(T)
        rows = np.empty((T, T))
        phase = 2.0 * np.pi * np.outer(self.freq, t) / T
        rows[:] = np.sqrt(2.0 / T) * np.where(self.is_sin[:, None], np.sin(phase), np.cos(phase))
        rows[0] = 1.0 / np.sqrt(T)
        if T % 2 == 0:
            rows[-1] = np.cos(np.pi * t) / np.sqrt(T)
        rows.setflags(write=False)
        return rows

    def analyze(self, series) -> np.ndarray:
        return analyze(self, series)

    def synthesize(self, coeffs) -> np.ndarray:
        return synthesize(self, coeffs)

    def expand(self, per_freq: np.ndarray) -> np.ndarray:
        """Broadcast a per-frequency array onto the basis rows."""
        return np.asarray(per_freq)[self.freq]


def analyze(basis: HarmonicBasis, series) -> np.ndarray:
    """Coefficients of ``series`` (last axis = time)."""
    x = np.asarray(series, dtype=float)
    if x.shape[-1] != basis.T:
        raise LengthMismatch(f"series length {x.shape[-1]} != basis length {basis.T}")
    return x @ basis.basis.T


def synthesize(basis: HarmonicBasis, coeffs) -> np.ndarray:
    c = np.asarray(coeffs, dtype=float)
    if c.shape[-1] != basis.T:
        raise LengthMismatch(f"coefficient length {c.shape[-1]} != basis length {basis.T}")
    return c @ basis.basis


@dataclass(frozen=True)
class SpectralPrior:
    freqs: np.ndarray
    var: np.ndarray
    n_controls: int
    T: int

    def coefficient_variance(self, floor: bool = False) -> np.ndarray:
        """Prior variance of every basis coefficient (length T)."""
        tau = self.floored() if floor else self.var
        return HarmonicBasis(self.T).expand(tau)

    def floored(self) -> np.ndarray:
        top = float(np.max(self.var)) if self.var.size else 0.0
        if top <= 0:
            return np.full_like(self.var, TAU_FLOOR)
        return np.maximum(self.var, TAU_FLOOR * top)

    def dft_power(self) -> np.ndarray:
        """Power in the unnormalised complex DFT convention."""
        return self.T * self.var

    def marginal_variance(self) -> np.ndarray:
        """Per-time prior variance, diag(R P R^T); constant for a stationary prior."""
        B = HarmonicBasis(self.T).basis
        return np.einsum("kt,k,kt->t", B, self.coefficient_variance(), B)


def _pool_z(z, pool, controls_only) -> np.ndarray:
    from .gaussianize import GaussianizedPanel

    if isinstance(z, GaussianizedPanel):
        panel = z.demeaned.base
        arr = np.asarray(z.z)
        if pool is None:
            pool = panel.control_indices if controls_only else np.arange(panel.n_units)
    else:
        arr = np.atleast_2d(np.asarray(z, dtype=float))
        if pool is None:
            pool = np.arange(arr.shape[0])
    return arr[np.asarray(pool, dtype=int)]


def _pair_mean(products: np.ndarray, basis: HarmonicBasis) -> np.ndarray:
    """Average per-row values over rows sharing a frequency."""
    counts = np.bincount(basis.freq, minlength=basis.n_freq)
    sums = np.zeros(basis.n_freq, dtype=products.dtype)
    np.add.at(sums, basis.freq, products)
    return sums / counts


def estimate_prior(z, basis: HarmonicBasis, controls_only: bool = True,
                   pool: Sequence[int] | None = None) -> SpectralPrior:
    """Cross-unit mean of squared coefficients, tied within each (cos, sin) pair.

    ``z`` is a GaussianizedPanel or a plain (units x T) array; ``pool``
    selects the units explicitly.
    """
    sample = _pool_z(z, pool, controls_only)
    if sample.shape[0] < 2:
        raise TooFewControls(f"need at least 2 control units, got {sample.shape[0]}")
    coeffs = analyze(basis, sample)
    tau = _pair_mean(np.mean(coeffs ** 2, axis=0), basis)
    if not np.any(tau > 0):
        warnings.warn("all prior variances are zero", stacklevel=2)
    return SpectralPrior(np.arange(basis.n_freq), tau, int(sample.shape[0]), basis.T)


@dataclass(frozen=True)
class BlockSpectralPrior:
    """Per-frequency Hermitian cross-spectral matrices over k variables.

    ``blocks[nu, a, b] = E[c_a c_b + s_a s_b]/2 + i E[c_a s_b - s_a c_b]/2``
    where (c, s) are the orthonormal cos/sin coefficients at nu. The real
    part is the co-spectrum; the imaginary part (quadrature spectrum)
    vanishes at DC and Nyquist.
    """

    freqs: np.ndarray
    blocks: np.ndarray
    n_controls: int
    T: int

    @property
    def k(self) -> int:
        return self.blocks.shape[1]

    def auto(self, a: int) -> np.ndarray:
        return self.blocks[:, a, a].real

    def cross(self, a: int, b: int) -> np.ndarray:
        return self.blocks[:, a, b]

    def covariance_matrix(self) -> np.ndarray:
        """Dense prior covariance of the stacked coefficients (variable-major)."""
        basis = HarmonicBasis(self.T)
        T, k = self.T, self.k
        cov = np.zeros((k * T, k * T))
        re = self.blocks.real[basis.freq]
        im = self.blocks.imag[basis.freq]
        rows = np.arange(T)
        sin_rows = np.flatnonzero(basis.is_sin)
        cos_rows = sin_rows - 1
        for a in range(k):
            for b in range(k):
                sub = np.zeros((T, T))
                sub[rows, rows] = re[:, a, b]
                # quadrature terms couple cos_nu of one variable to sin_nu of the other
                sub[cos_rows, sin_rows] = im[cos_rows, a, b]
                sub[sin_rows, cos_rows] = -im[cos_rows, a, b]
                cov[a * T:(a + 1) * T, b * T:(b + 1) * T] = sub
        return 0.5 * (cov + cov.T)

    def single(self, a: int) -> SpectralPrior:
        return SpectralPrior(self.freqs, self.auto(a).copy(), self.n_controls, self.T)


def _project_psd(h: np.ndarray) -> np.ndarray:
    h = 0.5 * (h + h.conj().T)
    w, v = np.linalg.eigh(h)
    if w.min() >= 0:
        return h
    return (v * np.clip(w, 0.0, None)) @ v.conj().T


def estimate_block_prior(z_list: Sequence, basis: HarmonicBasis,
                         pool: Sequence[int] | None = None,
                         controls_only: bool = True) -> BlockSpectralPrior:
    samples = [_pool_z(z, pool, controls_only) for z in z_list]
    shapes = {s.shape for s in samples}
    if len(shapes) != 1:
        raise PanelMismatch(f"variables disagree on units/times: {sorted(shapes)}")
    n = samples[0].shape[0]
    if n < 2:
        raise TooFewControls(f"need at least 2 control units, got {n}")
    coeffs = np.stack([analyze(basis, s) for s in samples])  # (k, units, T)
    k = len(samples)
    blocks = np.zeros((basis.n_freq, k, k), dtype=complex)
    co = np.einsum("aut,but->abt", coeffs, coeffs) / n
    for a in range(k):
        for b in range(k):
            blocks[:, a, b] = _pair_mean(co[a, b], basis)
    sin_rows = np.flatnonzero(basis.is_sin)
    cos_rows = sin_rows - 1
    if sin_rows.size:
        c, s = coeffs[:, :, cos_rows], coeffs[:, :, sin_rows]
        quad = (np.einsum("auf,buf->abf", c, s) - np.einsum("auf,buf->abf", s, c)) / (2 * n)
        blocks[basis.freq[cos_rows]] += 1j * np.moveaxis(quad, -1, 0)
    blocks = np.stack([_project_psd(b) for b in blocks])
    return BlockSpectralPrior(np.arange(basis.n_freq), blocks, n, basis.T)
