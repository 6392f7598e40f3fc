"""Significance of a post-treatment departure from the counterfactual.

Two tests on the post-treatment window, both using the Gaussian
likelihood of the transformed observations ``z_obs`` with the window
block of the posterior covariance:

* a-posteriori upper limit: the alternative reproduces the data exactly,
  so the likelihood ratio is exp(chi^2 / 2);
* a-priori polynomial test: the alternative shifts the counterfactual by
  ``alpha k + beta k^2`` (k = periods since treatment) and is marginalised
  over a flat prior learnt from control units, giving a Bayes factor.

Every likelihood compares the same observed data under different means,
so the data Jacobian of the transform cancels in all ratios; it is still
available from ``data_log_jacobian``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from . import kernels
from .gaussianize import TransformPipeline

DEFAULT_GRID = 201
_JITTER = 1e-10


class SingularCovariance(np.linalg.LinAlgError):
    code = "SingularCovariance"


class EmptyPrior(ValueError):
    code = "EmptyPrior"


class QuadratureUnderflow(FloatingPointError):
    code = "QuadratureUnderflow"


class NonFiniteModel(FloatingPointError):
    code = "NonFiniteModel"


@dataclass(frozen=True)
class PostWindow:
    times: np.ndarray
    z_obs: np.ndarray
    z_cf: np.ndarray
    C_post: np.ndarray
    d_cf: np.ndarray
    d_obs: np.ndarray
    mean: np.ndarray
    pipeline: TransformPipeline = field(default_factory=TransformPipeline)

    def __post_init__(self):
        n = len(self.times)
        for name in ("z_obs", "z_cf", "d_cf", "d_obs", "mean"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} length differs from window length {n}")
        if np.shape(self.C_post) != (n, n):
            raise ValueError("C_post shape does not match the window")

    @classmethod
    def from_counterfactual(cls, result, z_unit, d_unit, mean_series, pipeline,
                            t0_index: int, extra_noise: float = 0.0) -> "PostWindow":
        """Slice everything after ``t0_index``; ``extra_noise`` (std) is added to C_post."""
        sl = slice(t0_index + 1, None)
        C = np.array(result.C_z[sl, sl])
        if extra_noise:
            C = C + extra_noise ** 2 * np.eye(C.shape[0])
        return cls(np.arange(len(result.z_hat))[sl], np.asarray(z_unit)[sl], result.z_hat[sl], C,
                   result.d_hat[sl], np.asarray(d_unit, dtype=float)[sl],
                   np.asarray(mean_series)[sl], pipeline)

    @property
    def K(self) -> int:
        return len(self.times)

    @property
    def steps(self) -> np.ndarray:
        """Periods elapsed since treatment, 1..K."""
        return np.arange(1, self.K + 1, dtype=float)

    def to_z(self, model) -> np.ndarray:
        return self.pipeline.forward(np.asarray(model, dtype=float) - self.mean)

    def cholesky(self) -> np.ndarray:
        C = 0.5 * (self.C_post + self.C_post.T)
        try:
            return linalg.cholesky(C, lower=True)
        except linalg.LinAlgError:
            pass
        try:
            return linalg.cholesky(C + _JITTER * np.eye(self.K), lower=True)
        except linalg.LinAlgError as exc:
            raise SingularCovariance("window covariance is singular even after jitter") from exc


@dataclass(frozen=True)
class PolyModel:
    alpha: float = 0.0
    beta: float = 0.0


def interpolated_model(win: PostWindow, alpha: float) -> np.ndarray:
    """Linear interpolation between counterfactual (0) and observed data (1)."""
    return alpha * (win.d_obs - win.d_cf) + win.d_cf


def poly_model(win: PostWindow, m: PolyModel) -> np.ndarray:
    k = win.steps
    return win.d_cf + m.alpha * k + m.beta * k * k


def _chi2(L: np.ndarray, resid: np.ndarray) -> float:
    w = linalg.solve_triangular(L, resid, lower=True)
    return float(w @ w)


def _log_norm(L: np.ndarray) -> float:
    """-1/2 log det(2 pi C) from the Cholesky factor."""
    return -0.5 * L.shape[0] * math.log(2 * math.pi) - float(np.sum(np.log(np.diag(L))))


def model_log_likelihood(win: PostWindow, model, pipeline: TransformPipeline | None = None) -> float:
    """Gaussian log-density of ``z_obs`` given a data-space model series."""
    if pipeline is not None and pipeline != win.pipeline:
        win = _replace_pipeline(win, pipeline)
    mu = win.to_z(model)
    if not np.all(np.isfinite(mu)):
        raise NonFiniteModel("model maps to non-finite z values")
    L = win.cholesky()
    return _log_norm(L) - 0.5 * _chi2(L, win.z_obs - mu)


def data_log_jacobian(win: PostWindow) -> float:
    """log |dz/dd| summed over the observed window (cancels in every ratio)."""
    return float(np.sum(win.pipeline.log_jacobian(win.d_obs - win.mean)))


def _replace_pipeline(win: PostWindow, pipeline: TransformPipeline) -> PostWindow:
    z_obs = pipeline.forward(win.d_obs - win.mean)
    z_cf = pipeline.forward(win.d_cf - win.mean)
    return PostWindow(win.times, z_obs, z_cf, win.C_post, win.d_cf, win.d_obs, win.mean, pipeline)


def upper_limit_ratio(win: PostWindow) -> tuple[float, float]:
    """(chi^2, exp(chi^2/2)) of the observed window against the counterfactual."""
    chi2 = _chi2(win.cholesky(), win.z_cf - win.z_obs)
    return chi2, _safe_exp(0.5 * chi2)


def _safe_exp(x: float) -> float:
    return math.exp(x) if x < 709.0 else math.inf


def fit_poly(win: PostWindow, order: int = 2) -> PolyModel:
    """Least-squares polynomial fit of (observed - counterfactual) in data units."""
    k = win.steps
    design = np.column_stack([k ** p for p in range(1, order + 1)])
    coef, *_ = np.linalg.lstsq(design, win.d_obs - win.d_cf, rcond=None)
    return PolyModel(float(coef[0]), float(coef[1]) if order > 1 else 0.0)


@dataclass(frozen=True)
class LinearConstraint:
    """Admissible where ``ca * alpha + cb * beta + c0 <= 0``."""

    ca: float
    cb: float
    c0: float
    label: str = ""

    def __call__(self, alpha, beta):
        return self.ca * np.asarray(alpha) + self.cb * np.asarray(beta) + self.c0 <= 0.0


def reduction_constraints(K: int) -> list[LinearConstraint]:
    """Model never above the counterfactual: alpha k + beta k^2 <= 0 for k = 1..K."""
    return [LinearConstraint(k, k * k, 0.0, "reduction") for k in range(1, K + 1)]


def nonnegativity_constraints(d_cf: Sequence[float]) -> list[LinearConstraint]:
    """Model never negative in data units: d_cf_k + alpha k + beta k^2 >= 0."""
    return [LinearConstraint(-k, -k * k, -float(d), "nonnegative")
            for k, d in enumerate(d_cf, start=1)]


@dataclass(frozen=True)
class PriorBox:
    alpha_range: tuple[float, float]
    beta_range: tuple[float, float]
    constraints: tuple[LinearConstraint, ...] = ()

    def with_constraints(self, extra: Sequence[LinearConstraint]) -> "PriorBox":
        box = PriorBox(self.alpha_range, self.beta_range, self.constraints + tuple(extra))
        box.check_nonempty()
        return box

    def admissible(self, alpha, beta) -> np.ndarray:
        alpha, beta = np.broadcast_arrays(np.asarray(alpha, float), np.asarray(beta, float))
        (a0, a1), (b0, b1) = self.alpha_range, self.beta_range
        ok = (alpha >= a0) & (alpha <= a1) & (beta >= b0) & (beta <= b1)
        for c in self.constraints:
            ok &= c(alpha, beta)
        return ok

    def beta_interval(self, alpha: float) -> tuple[float, float]:
        """Admissible beta range on the line of constant alpha (hi < lo when empty)."""
        lo, hi = self.beta_range
        for c in self.constraints:
            rest = c.ca * alpha + c.c0
            if c.cb > 0:
                hi = min(hi, -rest / c.cb)
            elif c.cb < 0:
                lo = max(lo, -rest / c.cb)
            elif rest > 0:
                return 1.0, 0.0
        return lo, hi

    def check_nonempty(self, n: int = 2001) -> None:
        a0, a1 = self.alpha_range
        for a in np.linspace(a0, a1, n if a1 > a0 else 1):
            lo, hi = self.beta_interval(float(a))
            if hi >= lo:
                return
        raise EmptyPrior("constraints leave no admissible (alpha, beta)")


def _hull_constraints(points: np.ndarray) -> list[LinearConstraint]:
    from scipy.spatial import ConvexHull, QhullError

    try:
        hull = ConvexHull(points)
    except (QhullError, ValueError):
        return []
    return [LinearConstraint(float(a), float(b), float(c), "hull") for a, b, c in hull.equations]


def fit_prior_box(placebo_fits: Sequence, constraints: Sequence[LinearConstraint] = (),
                  mode: str = "bbox") -> PriorBox:
    """Flat prior support spanning the control units' polynomial fits.

    ``mode="hull"`` restricts the bounding box to the convex hull of the fits.
    """
    pts = np.array([(f.alpha, f.beta) if isinstance(f, PolyModel) else tuple(f)
                    for f in placebo_fits], dtype=float)
    if len(pts) < 2:
        raise EmptyPrior("need at least two control fits")
    extra = list(constraints)
    if mode == "hull":
        extra += _hull_constraints(pts)
    elif mode != "bbox":
        raise ValueError(f"unknown prior-box mode {mode!r}")
    box = PriorBox((float(pts[:, 0].min()), float(pts[:, 0].max())),
                   (float(pts[:, 1].min()), float(pts[:, 1].max())), tuple(extra))
    box.check_nonempty()
    return box


@dataclass(frozen=True)
class HypothesisResult:
    chi2: float
    upper_ratio: float
    log_pA: float
    log_pB_marginal: float
    bayes_factor: float
    ml_ratio: float
    ml_point: PolyModel
    log_bayes_factor: float = 0.0
    log_ml_ratio: float = 0.0

    def to_dict(self) -> dict:
        def num(x):
            return x if math.isfinite(x) else None

        return {
            "chi2": self.chi2,
            "upper_ratio": num(self.upper_ratio),
            "log_upper_ratio": 0.5 * self.chi2,
            "log_pA": self.log_pA,
            "log_pB_marginal": self.log_pB_marginal,
            "bayes_factor": num(self.bayes_factor),
            "log_bayes_factor": self.log_bayes_factor,
            "ml_ratio": num(self.ml_ratio),
            "log_ml_ratio": self.log_ml_ratio,
            "ml_point": {"alpha": self.ml_point.alpha, "beta": self.ml_point.beta},
        }


def _nodes(lo: float, hi: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Trapezoid nodes/weights; a zero-width range is a single unit-weight node."""
    if hi <= lo:
        return np.array([lo]), np.array([1.0])
    x = np.linspace(lo, hi, n)
    w = np.full(n, (hi - lo) / (n - 1))
    w[[0, -1]] *= 0.5
    return x, w


def log_likelihood_grid(win: PostWindow, alphas, betas) -> np.ndarray:
    """-chi^2/2 of every (alpha, beta) node on an outer-product grid."""
    L = win.cholesky()
    q = kernels.grid_quadform(win.d_cf - win.mean, np.atleast_1d(alphas), np.atleast_1d(betas),
                              win.z_obs, L, *win.pipeline.params)
    return -0.5 * q


def bayes_factor(win: PostWindow, box: PriorBox, grid: int = DEFAULT_GRID) -> HypothesisResult:
    """Marginal likelihood over the admissible prior region versus the counterfactual.

    Integration is an iterated trapezoid rule: for each alpha node the beta
    nodes span exactly the admissible interval on that line (the region is
    convex because every constraint is linear), so the boundary is resolved
    without staircase error. Degenerate (zero-width) prior axes collapse to
    a point.
    """
    chi2, upper = upper_limit_ratio(win)
    L = win.cholesky()
    log_norm = _log_norm(L)
    # p_A goes through the same model path as the quadrature nodes, so a
    # prior collapsed onto (0, 0) gives a Bayes factor of exactly one
    ll_null = float(log_likelihood_grid(win, [0.0], [0.0])[0, 0])
    log_pA = log_norm + ll_null

    a_nodes, a_w = _nodes(*box.alpha_range, grid)
    beta_flat = box.beta_range[1] <= box.beta_range[0]
    terms, areas = [], []
    best = (-math.inf, 0.0, 0.0)
    for a, wa in zip(a_nodes, a_w):
        lo, hi = box.beta_interval(float(a))
        if hi < lo:
            continue
        if beta_flat:
            b_nodes, b_w = np.array([lo]), np.array([1.0])
        elif hi == lo:
            continue  # a line of zero admissible width carries no area
        else:
            b_nodes, b_w = _nodes(lo, hi, grid)
        ll = log_likelihood_grid(win, [a], b_nodes)[0]
        with np.errstate(divide="ignore"):
            terms.append(ll + np.log(wa * b_w))
        areas.append(wa * b_w.sum())
        j = int(np.argmax(ll))
        if ll[j] > best[0]:
            best = (float(ll[j]), float(a), float(b_nodes[j]))
    area = float(np.sum(areas)) if areas else 0.0
    if area <= 0:
        raise EmptyPrior("admissible prior region has zero area at this resolution")
    log_int = float(logsumexp(np.concatenate(terms)))
    if not math.isfinite(log_int):
        raise QuadratureUnderflow("likelihood underflows everywhere on the prior support")
    log_pB = log_norm + log_int - math.log(area)
    log_bf = log_pB - log_pA
    log_ml = best[0] - ll_null
    return HypothesisResult(chi2, upper, log_pA, log_pB, _safe_exp(log_bf), _safe_exp(log_ml),
                            PolyModel(best[1], best[2]), log_bf, log_ml)


def bayes_factor_mc(win: PostWindow, box: PriorBox, n_samples: int = 1_000_000,
                    seed: int = 0, chunk: int = 50_000) -> float:
    """Monte Carlo Bayes factor: uniform draws over the box, rejection on constraints.

    Evaluated with plain NumPy (no compiled kernel) as an independent check
    on the quadrature.
    """
    rng = np.random.default_rng(seed)
    L = win.cholesky()
    k = win.steps
    base = win.d_cf - win.mean
    chi2_a = _chi2(L, win.z_obs - win.pipeline.forward(base))
    acc, kept = [], 0
    (a0, a1), (b0, b1) = box.alpha_range, box.beta_range
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        done += m
        a = rng.uniform(a0, a1, m)
        b = rng.uniform(b0, b1, m)
        ok = box.admissible(a, b)
        a, b = a[ok], b[ok]
        kept += a.size
        if not a.size:
            continue
        models = base + a[:, None] * k + b[:, None] * k * k
        mu = win.pipeline.forward(models)
        w = linalg.solve_triangular(L, (win.z_obs - mu).T, lower=True)
        acc.append(-0.5 * np.sum(w * w, axis=0))
    if kept == 0:
        raise EmptyPrior("no Monte Carlo draw landed in the admissible region")
    return float(np.exp(logsumexp(np.concatenate(acc)) - math.log(kept) + 0.5 * chi2_a))


def likelihood_surface(win: PostWindow, box: PriorBox, grid: int = DEFAULT_GRID):
    """Log likelihood ratio to the counterfactual on the rectangular box grid.

    Returns (alphas, betas, log_ratio[n_alpha, n_beta], admissible mask).
    """
    a0, a1 = box.alpha_range
    b0, b1 = box.beta_range
    alphas = np.linspace(a0, a1, grid)
    betas = np.linspace(b0, b1, grid)
    ll_null = log_likelihood_grid(win, [0.0], [0.0])[0, 0]
    log_ratio = log_likelihood_grid(win, alphas, betas) - ll_null
    mask = box.admissible(alphas[:, None], betas[None, :])
    return alphas, betas, log_ratio, mask
