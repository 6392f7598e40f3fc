"""Pure NumPy implementation of the hot kernels.

Mirrors ``_kernels.pyx`` function for function; ``wienersc.kernels`` picks
whichever is importable. Arguments are the four transform parameters
``(a, lam, loc, scale)``; ``a = inf`` disables the arcsinh stage.
"""

import math

import numpy as np


def _asinh_stage(x, a):
    if math.isinf(a):
        return x
    return a * np.arcsinh(x / a)


def _asinh_stage_inv(y, a):
    if math.isinf(a):
        return y
    with np.errstate(over="ignore"):
        return a * np.sinh(y / a)


def _asinh_stage_logd(x, a):
    if math.isinf(a):
        return np.zeros_like(x)
    return -np.log(np.hypot(1.0, x / a))


def _yj(y, lam):
    out = np.empty_like(y)
    pos = y >= 0
    yp, yn = y[pos], y[~pos]
    with np.errstate(over="ignore", invalid="ignore"):
        if abs(lam) < 1e-12:
            out[pos] = np.log1p(yp)
        else:
            out[pos] = np.expm1(lam * np.log1p(yp)) / lam
        mu = 2.0 - lam
        if abs(mu) < 1e-12:
            out[~pos] = -np.log1p(-yn)
        else:
            out[~pos] = -np.expm1(mu * np.log1p(-yn)) / mu
    return out


def _yj_inv(z, lam):
    out = np.empty_like(z)
    pos = z >= 0
    zp, zn = z[pos], z[~pos]
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        if abs(lam) < 1e-12:
            out[pos] = np.expm1(zp)
        else:
            arg = lam * zp
            # beyond the bounded range of the forward map the preimage is +inf
            out[pos] = np.where(arg > -1.0, np.expm1(np.log1p(np.maximum(arg, -1.0)) / lam), np.inf)
        mu = 2.0 - lam
        if abs(mu) < 1e-12:
            out[~pos] = -np.expm1(-zn)
        else:
            arg = -mu * zn
            out[~pos] = np.where(arg > -1.0, -np.expm1(np.log1p(np.maximum(arg, -1.0)) / mu), -np.inf)
    return out


def _yj_logd(y, lam):
    return np.where(y >= 0, (lam - 1.0) * np.log1p(np.abs(y)), (1.0 - lam) * np.log1p(np.abs(y)))


def pipeline_forward(x, a, lam, loc, scale):
    x = np.asarray(x, dtype=float)
    return (_yj(_asinh_stage(x, a), lam) - loc) / scale


def pipeline_inverse(z, a, lam, loc, scale):
    z = np.asarray(z, dtype=float)
    return _asinh_stage_inv(_yj_inv(z * scale + loc, lam), a)


def pipeline_log_jacobian(x, a, lam, loc, scale):
    x = np.asarray(x, dtype=float)
    y = _asinh_stage(x, a)
    return _asinh_stage_logd(x, a) + _yj_logd(y, lam) - math.log(scale)


def profile_nll(x, a, lam):
    """Negative profile log-likelihood of the nonlinear stages (up to a constant).

    loc/scale are profiled out at their MLE, leaving
    ``n/2 log var(y) - sum log|dy/dx|``.
    """
    x = np.asarray(x, dtype=float)
    y = _asinh_stage(x, a)
    with np.errstate(over="ignore", invalid="ignore"):
        u = _yj(y, lam)
        var = np.var(u)
    if not np.isfinite(var) or var <= 0.0:
        return math.inf
    logd = _asinh_stage_logd(x, a) + _yj_logd(y, lam)
    return 0.5 * x.size * math.log(var) - float(np.sum(logd))


def grid_quadform(base, alphas, betas, z_obs, chol, a, lam, loc, scale):
    """chi^2 of ``z_obs`` against every polynomial model on an (alpha, beta) grid.

    ``base`` is the counterfactual in residual data units; the model at
    node (i, j) is ``base + alphas[i] k + betas[j] k^2`` with k = 1..K,
    mapped through the transform. ``chol`` is the lower Cholesky factor of
    the window covariance.
    """
    base = np.asarray(base, dtype=float)
    k = np.arange(1, base.size + 1, dtype=float)
    alphas = np.asarray(alphas, dtype=float)
    betas = np.asarray(betas, dtype=float)
    out = np.empty((alphas.size, betas.size))
    from scipy.linalg import solve_triangular

    for i, al in enumerate(alphas):
        models = base + al * k + betas[:, None] * k * k
        mu = pipeline_forward(models, a, lam, loc, scale)
        resid = (z_obs - mu).T
        w = solve_triangular(chol, resid, lower=True, check_finite=False)
        q = np.sum(w * w, axis=0)
        out[i] = np.where(np.isfinite(q), q, np.inf)
    return out


def profile_nll_grid(x, scales, lambdas):
    """``profile_nll`` on the outer product of arcsinh scales and lambdas."""
    x = np.asarray(x, dtype=float).ravel()
    out = np.empty((len(scales), len(lambdas)))
    for i, a in enumerate(scales):
        y = _asinh_stage(x, float(a))
        logd_a = float(np.sum(_asinh_stage_logd(x, float(a))))
        pos = y >= 0
        ell = np.log1p(np.abs(y))
        l_diff = float(ell[pos].sum() - ell[~pos].sum())
        for j, lam in enumerate(lambdas):
            with np.errstate(over="ignore", invalid="ignore"):
                var = np.var(_yj(y, float(lam)))
            if not np.isfinite(var) or var <= 0.0:
                out[i, j] = math.inf
            else:
                out[i, j] = 0.5 * x.size * math.log(var) - logd_a - (lam - 1.0) * l_diff
    return out
