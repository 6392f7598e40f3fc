"""End-to-end analysis of one unit: demean, Gaussianize, learn the spectrum, predict, test."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .gaussianize import TransformPipeline, fit_values
from .hypothesis import (
    HypothesisResult,
    PolyModel,
    PostWindow,
    bayes_factor,
    fit_poly,
    fit_prior_box,
    nonnegativity_constraints,
    reduction_constraints,
)
from .panel import PanelData
from .spectral import HarmonicBasis, estimate_block_prior, estimate_prior
from .wiener import (
    DEFAULT_EPSILON,
    CounterfactualResult,
    NoiseModel,
    counterfactual,
    counterfactual_from_joint,
    solve_map_joint,
)


@dataclass(frozen=True)
class AnalysisConfig:
    """Numerical knobs shared by every stage.

    ``transform`` is ``"fit"``, ``"none"`` or a fixed TransformPipeline.
    """

    epsilon: float = DEFAULT_EPSILON
    transform: str | TransformPipeline = "fit"
    include_treated_in_mean: bool = False
    poly_order: int = 2
    grid: int = 201
    prior_box: str = "bbox"
    constraints: tuple[str, ...] = ("reduction", "nonnegative")
    window_noise: bool = False
    shared_transform: bool = False
    exclude_treated_from_pools: bool = True

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.poly_order not in (1, 2):
            raise ValueError("poly_order must be 1 or 2")
        if self.grid < 2:
            raise ValueError("grid must be at least 2")
        unknown = set(self.constraints) - {"reduction", "nonnegative"}
        if unknown:
            raise ValueError(f"unknown constraints {sorted(unknown)}")


@dataclass(frozen=True)
class VariableState:
    """One variable's transform and Gaussianized panel for a given control pool."""

    mean_series: np.ndarray
    residuals: np.ndarray
    pipeline: TransformPipeline
    z: np.ndarray


@dataclass(frozen=True)
class UnitAnalysis:
    unit: int
    pool: tuple[int, ...]
    variables: tuple[VariableState, ...]
    prior: object
    result: CounterfactualResult
    window: PostWindow
    covariate_results: tuple[CounterfactualResult, ...] = field(default=())

    @property
    def primary(self) -> VariableState:
        return self.variables[0]


def _pipeline_for(values: np.ndarray, config: AnalysisConfig,
                  fixed: TransformPipeline | None) -> TransformPipeline:
    if fixed is not None:
        return fixed
    if isinstance(config.transform, TransformPipeline):
        return config.transform
    if config.transform == "none":
        return TransformPipeline.identity()
    if config.transform == "fit":
        return fit_values(values)
    raise ValueError(f"unknown transform mode {config.transform!r}")


def prepare_variable(values: np.ndarray, unit: int, pool: Sequence[int], config: AnalysisConfig,
                     pipeline: TransformPipeline | None = None) -> VariableState:
    pool = np.asarray(pool, dtype=int)
    mean_pool = np.union1d(pool, [unit]) if config.include_treated_in_mean else pool
    mean_series = values[mean_pool].mean(axis=0)
    residuals = values - mean_series
    pipe = _pipeline_for(residuals[pool], config, pipeline)
    return VariableState(mean_series, residuals, pipe, pipe.forward(residuals))


def default_pool(panel: PanelData, unit: int, config: AnalysisConfig) -> tuple[int, ...]:
    """Every unit except ``unit`` itself and (by default) the treated unit."""
    skip = {unit}
    if config.exclude_treated_from_pools:
        skip.add(panel.treated_index)
    return tuple(i for i in range(panel.n_units) if i not in skip)


def analyze_unit(panel: PanelData, unit: int, config: AnalysisConfig = AnalysisConfig(),
                 pool: Sequence[int] | None = None, covariates: Sequence[PanelData] = (),
                 pipelines: Sequence[TransformPipeline] | None = None) -> UnitAnalysis:
    """Counterfactual for ``unit`` learnt from ``pool`` (never containing ``unit``).

    With covariates the prior is the joint cross-spectrum; covariates are
    observed over the whole window, the primary variable only up to t0.
    """
    if pool is None:
        pool = default_pool(panel, unit, config)
    pool = tuple(int(i) for i in pool)
    if unit in pool:
        raise ValueError("a unit may not be in its own prior pool")
    T, t0 = panel.n_times, panel.t0_index
    basis = HarmonicBasis(T)
    sources = [panel, *covariates]
    fixed = list(pipelines) if pipelines is not None else [None] * len(sources)
    states = tuple(prepare_variable(p.values, unit, pool, config, f) for p, f in zip(sources, fixed))
    primary = states[0]
    noise = NoiseModel.pre_treatment(T, t0, config.epsilon)

    if not covariates:
        prior = estimate_prior(primary.z, basis, pool=pool)
        result = counterfactual(prior, basis, primary.z[unit], noise, primary.pipeline,
                                primary.mean_series)
        cov_results: tuple = ()
    else:
        prior = estimate_block_prior([s.z for s in states], basis, pool=pool)
        noises = [noise] + [NoiseModel.full(T, config.epsilon)] * len(covariates)
        s_hats, C = solve_map_joint(prior, basis, [s.z[unit] for s in states], noises,
                                    return_cov=True)
        results = [counterfactual_from_joint(s_hats[v], C[v * T:(v + 1) * T, v * T:(v + 1) * T],
                                             basis, s.pipeline, s.mean_series)
                   for v, s in enumerate(states)]
        result, cov_results = results[0], tuple(results[1:])

    window = PostWindow.from_counterfactual(
        result, primary.z[unit], panel.values[unit], primary.mean_series, primary.pipeline, t0,
        extra_noise=config.epsilon if config.window_noise else 0.0)
    return UnitAnalysis(unit, pool, states, prior, result, window, cov_results)


def unit_constraints(window: PostWindow, config: AnalysisConfig) -> list:
    out = []
    if "reduction" in config.constraints:
        out += reduction_constraints(window.K)
    if "nonnegative" in config.constraints:
        out += nonnegativity_constraints(window.d_cf)
    return out


def hypothesis_for_unit(analysis: UnitAnalysis, fits: Sequence[PolyModel],
                        config: AnalysisConfig) -> HypothesisResult:
    """Both hypothesis tests for one unit given the control polynomial fits."""
    box = fit_prior_box(fits, unit_constraints(analysis.window, config), mode=config.prior_box)
    if config.poly_order == 1:
        box = type(box)(box.alpha_range, (0.0, 0.0), box.constraints)
        box.check_nonempty()
    return bayes_factor(analysis.window, box, grid=config.grid)


def control_analyses(panel: PanelData, config: AnalysisConfig,
                     covariates: Sequence[PanelData] = (),
                     shared: Sequence[TransformPipeline] | None = None) -> dict[int, UnitAnalysis]:
    """Leave-self-out counterfactual for every control unit."""
    return {int(u): analyze_unit(panel, int(u), config, covariates=covariates, pipelines=shared)
            for u in panel.control_indices}


def shared_pipelines(panel: PanelData, config: AnalysisConfig,
                     covariates: Sequence[PanelData] = ()) -> list[TransformPipeline]:
    """Transforms fitted once on all controls (the ``shared_transform`` shortcut)."""
    pool = panel.control_indices
    return [prepare_variable(p.values, panel.treated_index, pool, config).pipeline
            for p in (panel, *covariates)]


@dataclass(frozen=True)
class TreatedReport:
    analysis: UnitAnalysis
    hypothesis: HypothesisResult
    control_fits: dict[int, PolyModel]
    controls: dict[int, UnitAnalysis]


def analyze_treated(panel: PanelData, config: AnalysisConfig = AnalysisConfig(),
                    covariates: Sequence[PanelData] = ()) -> TreatedReport:
    """Counterfactual and hypothesis tests for the treated unit.

    The flat polynomial prior comes from every control's fit to its own
    leave-self-out counterfactual.
    """
    shared = shared_pipelines(panel, config, covariates) if config.shared_transform else None
    controls = control_analyses(panel, config, covariates, shared)
    fits = {u: fit_poly(a.window, config.poly_order) for u, a in controls.items()}
    treated = analyze_unit(panel, panel.treated_index, config, covariates=covariates,
                           pipelines=shared)
    hyp = hypothesis_for_unit(treated, list(fits.values()), config)
    return TreatedReport(treated, hyp, fits, controls)
