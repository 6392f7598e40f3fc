"""Monotone Gaussianizing transform: arcsinh, then Yeo-Johnson, then affine.

The forward map is

    z = (yj(a * asinh(x / a), lam) - loc) / scale

Each stage is strictly increasing, so the composition is a bijection from
the reals onto its range and ranks are preserved. ``a = inf`` switches the
arcsinh stage off.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from . import kernels
from .panel import DemeanedPanel


class DegenerateData(ValueError):
    code = "DegenerateData"


# fit grid
N_SCALE_GRID = 25
LAMBDA_GRID = np.linspace(-2.0, 3.0, 51)
# refinement box, relative to the pooled std (scale) and absolute (lambda)
_LOG_SCALE_BOUNDS = (math.log(1e-3), math.log(1e6))
_LAMBDA_BOUNDS = (-4.0, 5.0)


def yeo_johnson(x, lmbda: float):
    """Yeo-Johnson power transform, elementwise; accepts scalars or arrays."""
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    out = kernels.pipeline_forward(arr, math.inf, float(lmbda), 0.0, 1.0)
    return float(out[0]) if np.ndim(x) == 0 else out.reshape(np.shape(x))


@dataclass(frozen=True)
class TransformPipeline:
    arcsinh_scale: float = math.inf
    yj_lambda: float = 1.0
    loc: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if not self.arcsinh_scale > 0:
            raise ValueError("arcsinh_scale must be positive")
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    @classmethod
    def identity(cls) -> "TransformPipeline":
        return cls()

    @property
    def params(self) -> tuple[float, float, float, float]:
        return (self.arcsinh_scale, self.yj_lambda, self.loc, self.scale)

    def forward(self, x):
        return _apply(kernels.pipeline_forward, x, self.params)

    def inverse(self, z):
        return _apply(kernels.pipeline_inverse, z, self.params)

    def log_jacobian(self, x):
        """log dz/dx, summed over the three stages."""
        return _apply(kernels.pipeline_log_jacobian, x, self.params)

    def with_extra_affine(self, shift: float, factor: float) -> "TransformPipeline":
        """Same nonlinear stages, output mapped further by z -> (z - shift) * factor."""
        if not factor > 0:
            raise ValueError("factor must be positive")
        return TransformPipeline(self.arcsinh_scale, self.yj_lambda,
                                 self.loc + shift * self.scale, self.scale / factor)

    def to_dict(self) -> dict:
        return {
            "stages": [
                {"name": "arcsinh", "scale": _enc(self.arcsinh_scale)},
                {"name": "yeo_johnson", "lambda": self.yj_lambda},
                {"name": "affine", "loc": self.loc, "scale": self.scale},
            ]
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TransformPipeline":
        stages = {s["name"]: s for s in data["stages"]}
        return cls(
            arcsinh_scale=_dec(stages["arcsinh"]["scale"]),
            yj_lambda=float(stages["yeo_johnson"]["lambda"]),
            loc=float(stages["affine"]["loc"]),
            scale=float(stages["affine"]["scale"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "TransformPipeline":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _enc(v: float):
    return "inf" if math.isinf(v) else v


def _dec(v) -> float:
    return math.inf if v == "inf" else float(v)


def _apply(fn, x, params):
    arr = np.asarray(x, dtype=float)
    out = fn(np.atleast_1d(arr), *params)
    return float(out[0]) if arr.ndim == 0 else np.reshape(out, arr.shape)


def forward(p: TransformPipeline, x):
    return p.forward(x)


def inverse(p: TransformPipeline, z):
    return p.inverse(z)


def log_jacobian(p: TransformPipeline, x):
    return p.log_jacobian(x)


def fit_values(x: np.ndarray) -> TransformPipeline:
    """Maximum-likelihood fit of the transform to a pooled sample.

    Coarse grid over (a, lambda), then Nelder-Mead on (log a, lambda).
    loc/scale are the sample mean/std after the nonlinear stages.
    """
    x = np.asarray(x, dtype=float).ravel()
    std = float(np.std(x))
    if x.size < 2 or not std > 0:
        raise DegenerateData("pooled residuals have zero variance")

    log_std = math.log(std)
    scale_grid = std * np.logspace(-1.0, 1.0, N_SCALE_GRID)
    nll = kernels.profile_nll_grid(x, scale_grid, LAMBDA_GRID)
    i, j = np.unravel_index(np.argmin(nll), nll.shape)
    best = (float(nll[i, j]), math.log(scale_grid[i]), float(LAMBDA_GRID[j]))

    def objective(theta):
        rel_log_a, lam = theta[0] - log_std, theta[1]
        if not (_LOG_SCALE_BOUNDS[0] <= rel_log_a <= _LOG_SCALE_BOUNDS[1]
                and _LAMBDA_BOUNDS[0] <= lam <= _LAMBDA_BOUNDS[1]):
            return math.inf
        return kernels.profile_nll(x, math.exp(theta[0]), lam)

    res = minimize(objective, np.array(best[1:]), method="Nelder-Mead",
                   options={"fatol": 1e-6, "xatol": 1e-6, "maxiter": 2000})
    log_a, lam = (res.x if res.fun <= best[0] else best[1:])
    a = math.exp(log_a)

    u = kernels.pipeline_forward(x, a, float(lam), 0.0, 1.0)
    return TransformPipeline(a, float(lam), float(np.mean(u)), float(np.std(u)))


def fit_pipeline(demeaned: DemeanedPanel, fit_on: bool = True,
                 pool: Sequence[int] | None = None) -> TransformPipeline:
    """Fit the transform on pooled residuals.

    ``fit_on`` restricts the sample to control units (the default); ``pool``
    names the fitting units explicitly and overrides it.
    """
    panel = demeaned.base
    if pool is None:
        pool = panel.control_indices if fit_on else np.arange(panel.n_units)
    pool = np.asarray(pool, dtype=int)
    if pool.size < 2:
        raise DegenerateData("need at least two units to fit the transform")
    return fit_values(demeaned.residuals[pool])


@dataclass(frozen=True)
class GaussianizedPanel:
    pipeline: TransformPipeline
    z: np.ndarray
    demeaned: DemeanedPanel


def gaussianize(demeaned: DemeanedPanel, pipeline: TransformPipeline,
                pool: Sequence[int] | None = None) -> GaussianizedPanel:
    z = pipeline.forward(demeaned.residuals)
    z.setflags(write=False)
    if pool is None:
        pool = demeaned.base.control_indices
    pooled = z[np.asarray(pool, dtype=int)]
    if pipeline != TransformPipeline.identity():
        m, v = float(np.mean(pooled)), float(np.var(pooled))
        if abs(m) > 0.05 or abs(v - 1.0) > 0.1:
            warnings.warn(f"gaussianized controls have mean {m:.3f}, variance {v:.3f}",
                          stacklevel=2)
    return GaussianizedPanel(pipeline, z, demeaned)
