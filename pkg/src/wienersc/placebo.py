"""Placebo sweep: every control takes a turn as the pseudo-treated unit."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .hypothesis import HypothesisResult, fit_poly
from .panel import PanelData
from .pipeline import (
    AnalysisConfig,
    UnitAnalysis,
    analyze_unit,
    hypothesis_for_unit,
    shared_pipelines,
)


@dataclass(frozen=True)
class PlaceboRecord:
    unit: str
    is_treated: bool
    ok: bool
    bayes_factor: float | None = None
    log_bayes_factor: float | None = None
    upper_ratio: float | None = None
    chi2: float | None = None
    ml_ratio: float | None = None
    effect_ref: float | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        out = asdict(self)
        for key, val in out.items():
            if isinstance(val, float) and not math.isfinite(val):
                out[key] = None
        return out


@dataclass(frozen=True)
class PlaceboReport:
    records: tuple[PlaceboRecord, ...]
    treated: PlaceboRecord
    ratio_of_max: float | None
    ref_time: int | None

    def to_dict(self) -> dict:
        ratio = self.ratio_of_max
        return {
            "ref_time": self.ref_time,
            "ratio_of_max": ratio if ratio is not None and math.isfinite(ratio) else None,
            "treated": self.treated.to_dict(),
            "controls": [r.to_dict() for r in self.records],
        }

    def ok_controls(self) -> list[PlaceboRecord]:
        return [r for r in self.records if r.ok]


def _record(unit: str, is_treated: bool, analysis: UnitAnalysis, hyp: HypothesisResult,
            ref_offset: int | None) -> PlaceboRecord:
    effect = None
    if ref_offset is not None:
        effect = float(analysis.result.d_hat[ref_offset] - analysis.window.d_obs[
            ref_offset - analysis.window.times[0]])
    return PlaceboRecord(unit, is_treated, True, hyp.bayes_factor, hyp.log_bayes_factor,
                         hyp.upper_ratio, hyp.chi2, hyp.ml_ratio, effect)


def _failure(unit: str, is_treated: bool, exc: Exception) -> PlaceboRecord:
    return PlaceboRecord(unit, is_treated, False, error=f"{type(exc).__name__}: {exc}")


def run_placebo(panel: PanelData, config: AnalysisConfig = AnalysisConfig(),
                covariates: Sequence[PanelData] = (), ref_time: int | None = None,
                workers: int = 1) -> PlaceboReport:
    """Leave-self-out analysis of every control plus the treated unit.

    Each control's counterfactual is learnt from the other controls (the
    treated unit is excluded from every pool unless the config says
    otherwise). Its polynomial prior box spans the fits of all *other*
    controls. Per-unit failures become flagged records.
    """
    ref_offset = None
    if ref_time is not None:
        ref_offset = panel.time_index(ref_time)
        if ref_offset <= panel.t0_index:
            raise ValueError("reference time must fall after treatment")
    shared = shared_pipelines(panel, config, covariates) if config.shared_transform else None
    controls = [int(u) for u in panel.control_indices]

    def analyze(u):
        try:
            return analyze_unit(panel, u, config, covariates=covariates, pipelines=shared)
        except Exception as exc:  # noqa: BLE001 - recorded per unit
            return exc

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            analyses = dict(zip(controls, pool.map(analyze, controls)))
    else:
        analyses = {u: analyze(u) for u in controls}

    fits = {u: fit_poly(a.window, config.poly_order) for u, a in analyses.items()
            if isinstance(a, UnitAnalysis)}

    def test(u):
        a = analyses[u]
        name = panel.unit_ids[u]
        if not isinstance(a, UnitAnalysis):
            return _failure(name, False, a)
        try:
            others = [f for v, f in fits.items() if v != u]
            return _record(name, False, a, hypothesis_for_unit(a, others, config), ref_offset)
        except Exception as exc:  # noqa: BLE001
            return _failure(name, False, exc)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            records = tuple(pool.map(test, controls))
    else:
        records = tuple(test(u) for u in controls)

    t = panel.treated_index
    try:
        a = analyze_unit(panel, t, config, covariates=covariates, pipelines=shared)
        treated = _record(panel.unit_ids[t], True, a,
                          hypothesis_for_unit(a, list(fits.values()), config), ref_offset)
    except Exception as exc:  # noqa: BLE001
        treated = _failure(panel.unit_ids[t], True, exc)

    ok_logs = [r.log_bayes_factor for r in records if r.ok]
    ratio = None
    if treated.ok and ok_logs:
        diff = treated.log_bayes_factor - max(ok_logs)
        ratio = math.exp(diff) if diff < 709 else math.inf
    return PlaceboReport(records, treated, ratio, ref_time)


def placebo_rows(report: PlaceboReport) -> list[dict]:
    """Flat rows (treated first) for CSV export."""
    return [report.treated.to_dict()] + [r.to_dict() for r in report.records]


def median_control_factor(report: PlaceboReport) -> float:
    return float(np.median([r.bayes_factor for r in report.ok_controls()]))
