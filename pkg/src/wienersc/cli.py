"""Command-line front end.

    wienersc counterfactual --data sales.csv --treated CA --t0 1988 --out res
    wienersc hypothesis --config run.cfg
    wienersc placebo --config run.cfg --workers 4
    wienersc spectrum --config run.cfg --covariate income.csv
    wienersc fit-transform --config run.cfg

Flags override values read from ``--config``. Every subcommand writes its
artifacts under ``--out``; on failure it exits 1 and writes a JSON error
object to stderr and ``<out>/error.json``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .hypothesis import bayes_factor_mc, fit_prior_box, likelihood_surface
from .io import write_csv, write_json
from .panel import PanelData, align_covariate, load_panel, read_panel_csv
from .pipeline import (
    analyze_treated,
    analyze_unit,
    prepare_variable,
    unit_constraints,
)
from .placebo import placebo_rows, run_placebo
from .spectral import HarmonicBasis, estimate_block_prior, estimate_prior


def _load(cfg: RunConfig) -> tuple[PanelData, list[PanelData], list[str]]:
    panel = load_panel(cfg.data, cfg.treated, cfg.t0)
    covs = [align_covariate(panel, *read_panel_csv(p)) for p in cfg.covariates]
    names = [Path(cfg.data).stem] + [Path(p).stem for p in cfg.covariates]
    return panel, covs, names


def _effects(panel: PanelData, d_hat: np.ndarray) -> dict:
    """Counterfactual minus observed after treatment (positive = reduction)."""
    t = panel.treated_index
    post = range(panel.t0_index + 1, panel.n_times)
    return {str(panel.times[i]): float(d_hat[i] - panel.values[t, i]) for i in post}


def _counterfactual_rows(panel, values, result, mean_series):
    return [
        (panel.times[i], result.d_hat[i], result.band_lo[i], result.band_hi[i],
         values[i], mean_series[i])
        for i in range(panel.n_times)
    ]


_CF_HEADER = ("time", "d_hat", "band_lo", "band_hi", "observed", "national_mean")


def cmd_counterfactual(cfg: RunConfig) -> int:
    panel, covs, names = _load(cfg)
    a = analyze_unit(panel, panel.treated_index, cfg.analysis(), covariates=covs)
    t = panel.treated_index
    out = Path(cfg.out)
    write_csv(out / "counterfactual.csv", _CF_HEADER,
              _counterfactual_rows(panel, panel.values[t], a.result, a.primary.mean_series))
    for name, cov, res, state in zip(names[1:], covs, a.covariate_results, a.variables[1:]):
        write_csv(out / f"counterfactual_{name}.csv", _CF_HEADER,
                  _counterfactual_rows(panel, cov.values[t], res, state.mean_series))
    z = a.primary.z[t]
    pre = slice(0, panel.t0_index + 1)
    effects = _effects(panel, a.result.d_hat)
    summary = {
        "treated": panel.treated_id,
        "t0": panel.times[panel.t0_index],
        "epsilon": cfg.epsilon,
        "variables": names,
        "transform": a.primary.pipeline.to_dict(),
        "max_pre_treatment_z_residual": float(np.max(np.abs(a.result.z_hat[pre] - z[pre]))),
        "effect": effects,
        "effect_std": {str(panel.times[i]): float(a.result.z_std[i])
                       for i in range(panel.t0_index + 1, panel.n_times)},
    }
    if cfg.ref_year is not None:
        summary[f"effect_{cfg.ref_year}"] = effects[str(cfg.ref_year)]
    write_json(out / "summary.json", summary)
    return 0


def cmd_hypothesis(cfg: RunConfig) -> int:
    panel, covs, _ = _load(cfg)
    config = cfg.analysis()
    report = analyze_treated(panel, config, covs)
    win = report.analysis.window
    box = fit_prior_box(list(report.control_fits.values()),
                        unit_constraints(win, config), mode=config.prior_box)
    if config.poly_order == 1:
        box = type(box)(box.alpha_range, (0.0, 0.0), box.constraints)
    alphas, betas, log_ratio, mask = likelihood_surface(win, box, cfg.grid)
    out = Path(cfg.out)
    write_csv(out / "likelihood_surface.csv", ("alpha", "beta", "log_ratio", "admissible"),
              ((alphas[i], betas[j], log_ratio[i, j], bool(mask[i, j]))
               for i in range(alphas.size) for j in range(betas.size)))
    doc = report.hypothesis.to_dict()
    doc.update({
        "treated": panel.treated_id,
        "t0": panel.times[panel.t0_index],
        "grid": cfg.grid,
        "poly_order": cfg.poly_order,
        "prior_box": {"mode": cfg.prior_box, "alpha": list(box.alpha_range),
                      "beta": list(box.beta_range),
                      "constraints": sorted({c.label for c in box.constraints})},
        "control_fits": {panel.unit_ids[u]: {"alpha": f.alpha, "beta": f.beta}
                         for u, f in report.control_fits.items()},
    })
    if cfg.mc_samples:
        doc["monte_carlo"] = {"samples": cfg.mc_samples, "seed": cfg.seed,
                              "bayes_factor": bayes_factor_mc(win, box, cfg.mc_samples, cfg.seed)}
    write_json(out / "hypothesis.json", doc)
    return 0


_PLACEBO_HEADER = ("unit", "is_treated", "ok", "bayes_factor", "log_bayes_factor",
                   "upper_ratio", "chi2", "ml_ratio", "effect_ref", "error")


def cmd_placebo(cfg: RunConfig) -> int:
    panel, covs, _ = _load(cfg)
    report = run_placebo(panel, cfg.analysis(), covs, ref_time=cfg.ref_year, workers=cfg.workers)
    out = Path(cfg.out)
    write_json(out / "placebo.json", report.to_dict())
    write_csv(out / "placebo.csv", _PLACEBO_HEADER,
              ([row[k] for k in _PLACEBO_HEADER] for row in placebo_rows(report)))
    return 0


def cmd_spectrum(cfg: RunConfig) -> int:
    panel, covs, names = _load(cfg)
    config = cfg.analysis()
    pool = panel.control_indices
    basis = HarmonicBasis(panel.n_times)
    states = [prepare_variable(p.values, panel.treated_index, pool, config)
              for p in (panel, *covs)]
    out = Path(cfg.out) / "spectrum.csv"
    if not covs:
        prior = estimate_prior(states[0].z, basis, pool=pool)
        write_csv(out, ("nu", f"tau_{names[0]}"), zip(prior.freqs, prior.var))
        return 0
    block = estimate_block_prior([s.z for s in states], basis, pool=pool)
    header = ["nu"] + [f"tau_{n}" for n in names]
    pairs = [(a, b) for a in range(len(names)) for b in range(a + 1, len(names))]
    for a, b in pairs:
        header += [f"cross_{names[a]}_{names[b]}", f"quad_{names[a]}_{names[b]}"]
    rows = []
    for f in range(basis.n_freq):
        row = [int(block.freqs[f])] + [block.blocks[f, a, a].real for a in range(len(names))]
        for a, b in pairs:
            row += [block.blocks[f, a, b].real, block.blocks[f, a, b].imag]
        rows.append(row)
    write_csv(out, header, rows)
    return 0


def cmd_fit_transform(cfg: RunConfig) -> int:
    panel, covs, names = _load(cfg)
    config = cfg.analysis()
    out = Path(cfg.out)
    for i, (name, p) in enumerate(zip(names, (panel, *covs))):
        state = prepare_variable(p.values, panel.treated_index, panel.control_indices, config)
        fname = "transform.json" if i == 0 else f"transform_{name}.json"
        write_json(out / fname, state.pipeline.to_dict())
    return 0


COMMANDS = {
    "counterfactual": cmd_counterfactual,
    "hypothesis": cmd_hypothesis,
    "placebo": cmd_placebo,
    "spectrum": cmd_spectrum,
    "fit-transform": cmd_fit_transform,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value run-config file")
    common.add_argument("--data", type=Path)
    common.add_argument("--covariate", type=Path, action="append", dest="covariates")
    common.add_argument("--treated")
    common.add_argument("--t0", type=int)
    common.add_argument("--epsilon", type=float)
    common.add_argument("--transform", help="fit | none | load:PATH")
    common.add_argument("--poly-order", type=int, choices=(1, 2))
    common.add_argument("--grid", type=int)
    common.add_argument("--out", type=Path)
    common.add_argument("--seed", type=int, help="seed for the Monte Carlo cross-check")
    common.add_argument("--mc-samples", type=int,
                        help="hypothesis: also estimate the Bayes factor from N uniform draws")
    common.add_argument("--prior-box", choices=("bbox", "hull"))
    common.add_argument("--include-treated-in-mean", action="store_const", const=True)
    common.add_argument("--ref-year", type=int)
    common.add_argument("--shared-transform", action="store_const", const=True)
    common.add_argument("--window-noise", action="store_const", const=True,
                        help="add epsilon^2 to the post-window covariance")
    common.add_argument("--include-treated-in-pools", action="store_const", const=True,
                        help="let placebo pools contain the treated unit")
    common.add_argument("--workers", type=int)

    parser = argparse.ArgumentParser(prog="wienersc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def _config_from_args(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {k: v for k, v in vars(args).items() if k not in ("config", "command")}
    if overrides.get("covariates") is not None:
        overrides["covariates"] = tuple(overrides["covariates"])
    return cfg.updated(**overrides).validate()


def _error(exc: BaseException) -> dict:
    code = getattr(exc, "code", None)
    if not isinstance(code, str):
        code = "FileNotFound" if isinstance(exc, FileNotFoundError) else type(exc).__name__
    return {"error": code, "message": str(exc)}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = args.out
    try:
        cfg = _config_from_args(args)
        out = cfg.out
        return COMMANDS[args.command](cfg)
    except Exception as exc:  # noqa: BLE001 - reported as JSON
        err = _error(exc)
        print(json.dumps(err), file=sys.stderr)
        if out is not None:
            try:
                write_json(Path(out) / "error.json", err)
            except OSError:
                pass
        return 1


if __name__ == "__main__":
    sys.exit(main())
