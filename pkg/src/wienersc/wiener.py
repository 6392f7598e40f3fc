"""MAP (Wiener filter) reconstruction of a unit's series from its observed window.

With prior coefficient covariance P, synthesis matrix R (z = R s) and
observation noise N on the observed times only, the posterior is Gaussian:

    s_hat = (P^-1 + R^T N^-1 R)^-1 R^T N^-1 z_obs
    C_s   = (P^-1 + R^T N^-1 R)^-1,      C_z = R C_s R^T

Everything here is evaluated in the equivalent observation-space form

    s_hat = P A^T G^-1 y,   C_s = P - P A^T G^-1 A P,   G = A P A^T + N

(A = observed rows of R), which never inverts P and stays well conditioned
when the noise is tiny and some prior variances are near zero. Unobserved
times are dropped from the likelihood rather than given a large variance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg

from .gaussianize import TransformPipeline
from .spectral import TAU_FLOOR, BlockSpectralPrior, HarmonicBasis, PanelMismatch, SpectralPrior

#: default pre-treatment noise std in standardized z units
DEFAULT_EPSILON = 1e-3


class SingularSystem(np.linalg.LinAlgError):
    code = "SingularSystem"


@dataclass(frozen=True)
class NoiseModel:
    sigma: np.ndarray
    observed_mask: np.ndarray

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=float)
        mask = np.asarray(self.observed_mask, dtype=bool)
        if sigma.shape != mask.shape:
            raise ValueError("sigma and observed_mask lengths differ")
        if np.any(sigma[mask] <= 0):
            raise ValueError("observed times need a positive noise std")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "observed_mask", mask)

    @classmethod
    def pre_treatment(cls, T: int, t0_index: int, epsilon: float = DEFAULT_EPSILON) -> "NoiseModel":
        """Noise std ``epsilon`` on times 0..t0_index, nothing observed afterwards."""
        mask = np.arange(T) <= t0_index
        return cls(np.where(mask, epsilon, np.inf), mask)

    @classmethod
    def full(cls, T: int, epsilon: float = DEFAULT_EPSILON) -> "NoiseModel":
        return cls(np.full(T, float(epsilon)), np.ones(T, dtype=bool))

    @property
    def observed(self) -> np.ndarray:
        return np.flatnonzero(self.observed_mask)


@dataclass(frozen=True)
class CounterfactualResult:
    s_hat: np.ndarray
    z_hat: np.ndarray
    d_hat: np.ndarray
    C_s: np.ndarray
    C_z: np.ndarray
    band_lo: np.ndarray
    band_hi: np.ndarray

    @property
    def z_std(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.C_z), 0.0, None))


def _sym(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def _gaussian_update(P: np.ndarray, A: np.ndarray, noise_var: np.ndarray,
                     y: np.ndarray | None, want_cov: bool = True):
    """Posterior mean / covariance for y = A s + n, s ~ N(0, P), n ~ N(0, diag(noise_var))."""
    if A.shape[0] == 0:
        mean = np.zeros(P.shape[0])
        return mean, (P.copy() if want_cov else None)
    PAt = P @ A.T
    G = _sym(A @ PAt) + np.diag(noise_var)
    try:
        cho = linalg.cho_factor(G, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    mean = None
    if y is not None:
        x = linalg.cho_solve(cho, y, check_finite=False)
        # one step of iterative refinement keeps the residual at round-off level
        r = y - G @ x
        x = x + linalg.cho_solve(cho, r, check_finite=False)
        # normwise relative residual (backward error)
        scale = np.linalg.norm(G, 2) * np.linalg.norm(x) + np.linalg.norm(y)
        if scale > 0 and np.linalg.norm(y - G @ x) > 1e-10 * scale:
            raise SingularSystem("linear solve did not reach relative residual 1e-10")
        mean = PAt @ x
    cov = None
    if want_cov:
        cov = _sym(P - PAt @ linalg.cho_solve(cho, PAt.T, check_finite=False))
    return mean, cov


def _single_setup(prior: SpectralPrior, basis: HarmonicBasis, noise: NoiseModel):
    if prior.T != basis.T or noise.sigma.size != basis.T:
        raise PanelMismatch("prior, basis and noise model disagree on series length")
    P = np.diag(prior.coefficient_variance(floor=True))
    obs = noise.observed
    A = basis.basis.T[obs]
    return P, A, noise.sigma[obs] ** 2, obs


def solve_map(prior: SpectralPrior, basis: HarmonicBasis, z_obs, noise: NoiseModel) -> np.ndarray:
    """MAP Fourier coefficients given the observed part of ``z_obs``."""
    P, A, nvar, obs = _single_setup(prior, basis, noise)
    y = np.asarray(z_obs, dtype=float)[obs]
    s_hat, _ = _gaussian_update(P, A, nvar, y, want_cov=False)
    return s_hat


def posterior_covariance(prior: SpectralPrior, basis: HarmonicBasis,
                         noise: NoiseModel) -> tuple[np.ndarray, np.ndarray]:
    """Fourier-space and time-domain (z) posterior covariances."""
    P, A, nvar, _ = _single_setup(prior, basis, noise)
    _, C_s = _gaussian_update(P, A, nvar, None)
    R = basis.basis.T
    return C_s, _sym(R @ C_s @ R.T)


def objective(prior: SpectralPrior, basis: HarmonicBasis, z_obs, noise: NoiseModel, s) -> float:
    """Negative log-posterior up to a constant (chi^2 of the data plus prior term)."""
    s = np.asarray(s, dtype=float)
    obs = noise.observed
    resid = (basis.synthesize(s) - np.asarray(z_obs, dtype=float))[obs]
    data = float(np.sum(resid ** 2 / noise.sigma[obs] ** 2))
    return data + float(np.sum(s ** 2 / prior.coefficient_variance(floor=True)))


def solve_map_joint(prior: BlockSpectralPrior, basis: HarmonicBasis,
                    z_obs: Sequence, noises: Sequence[NoiseModel],
                    return_cov: bool = False):
    """Joint MAP over the stacked coefficients of k correlated variables.

    Returns a list of per-variable coefficient vectors, plus the full
    stacked posterior covariance when ``return_cov`` is set.
    """
    k = prior.k
    if len(z_obs) != k or len(noises) != k:
        raise PanelMismatch(f"expected {k} variables, got {len(z_obs)} series / {len(noises)} noise models")
    T = basis.T
    if prior.T != T or any(n.sigma.size != T for n in noises):
        raise PanelMismatch("variables disagree on series length")
    P = prior.covariance_matrix()
    # floor the diagonal the same way the single-variable path does
    diag = np.diag(P).copy()
    if diag.max() > 0:
        P[np.diag_indices_from(P)] = np.maximum(diag, TAU_FLOOR * diag.max())
    R = basis.basis.T
    rows, ys, nvar = [], [], []
    for v, (z, noise) in enumerate(zip(z_obs, noises)):
        obs = noise.observed
        block = np.zeros((obs.size, k * T))
        block[:, v * T:(v + 1) * T] = R[obs]
        rows.append(block)
        ys.append(np.asarray(z, dtype=float)[obs])
        nvar.append(noise.sigma[obs] ** 2)
    A = np.vstack(rows)
    mean, cov = _gaussian_update(P, A, np.concatenate(nvar), np.concatenate(ys), want_cov=return_cov)
    s_hats = [mean[v * T:(v + 1) * T] for v in range(k)]
    return (s_hats, cov) if return_cov else s_hats


def to_data_space(result: CounterfactualResult | tuple, pipeline: TransformPipeline,
                  mean_series) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Map a z-space prediction and its 1-sigma band back to data units.

    Bands are transformed quantiles (z_hat +/- std), exact for a monotone map.
    ``result`` is a CounterfactualResult or a ``(z_hat, C_z)`` pair.
    """
    if isinstance(result, CounterfactualResult):
        z_hat, C_z = result.z_hat, result.C_z
    else:
        z_hat, C_z = result
    z_hat = np.asarray(z_hat, dtype=float)
    sd = np.sqrt(np.clip(np.diag(C_z), 0.0, None))
    mean_series = np.asarray(mean_series, dtype=float)
    d_hat = pipeline.inverse(z_hat) + mean_series
    lo = pipeline.inverse(z_hat - sd) + mean_series
    hi = pipeline.inverse(z_hat + sd) + mean_series
    return d_hat, lo, hi


def counterfactual(prior: SpectralPrior, basis: HarmonicBasis, z_obs, noise: NoiseModel,
                   pipeline: TransformPipeline, mean_series) -> CounterfactualResult:
    P, A, nvar, obs = _single_setup(prior, basis, noise)
    y = np.asarray(z_obs, dtype=float)[obs]
    s_hat, C_s = _gaussian_update(P, A, nvar, y)
    R = basis.basis.T
    z_hat = R @ s_hat
    C_z = _sym(R @ C_s @ R.T)
    d_hat, lo, hi = to_data_space((z_hat, C_z), pipeline, mean_series)
    return CounterfactualResult(s_hat, z_hat, d_hat, C_s, C_z, lo, hi)


def counterfactual_from_joint(s_hat: np.ndarray, C_s: np.ndarray, basis: HarmonicBasis,
                              pipeline: TransformPipeline, mean_series) -> CounterfactualResult:
    R = basis.basis.T
    z_hat = R @ s_hat
    C_z = _sym(R @ C_s @ R.T)
    d_hat, lo, hi = to_data_space((z_hat, C_z), pipeline, mean_series)
    return CounterfactualResult(s_hat, z_hat, d_hat, C_s, C_z, lo, hi)
