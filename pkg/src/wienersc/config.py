"""Run configuration and its sidecar file.

The sidecar is plain ``key = value`` text, one setting per line. Blank
lines and ``#`` comments are ignored; ``covariate`` may repeat. Relative
paths resolve against the sidecar's directory. Example::

    # California tobacco run
    data = sales.csv
    covariate = income.csv
    treated = CA
    t0 = 1988
    epsilon = 1e-3
    transform = fit
    poly_order = 2
    grid = 201
    prior_box = bbox
    ref_year = 2000
    out = results
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .gaussianize import TransformPipeline
from .pipeline import AnalysisConfig


class ConfigError(ValueError):
    code = "ConfigError"


class FileNotFound(FileNotFoundError):
    code = "FileNotFound"


_BOOL = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}
_PATH_KEYS = {"data", "out"}


@dataclass(frozen=True)
class RunConfig:
    data: Path | None = None
    covariates: tuple[Path, ...] = ()
    treated: str | None = None
    t0: int | None = None
    epsilon: float = 1e-3
    transform: str = "fit"
    poly_order: int = 2
    grid: int = 201
    out: Path = Path("out")
    seed: int = 0
    mc_samples: int = 0
    prior_box: str = "bbox"
    include_treated_in_mean: bool = False
    ref_year: int | None = None
    shared_transform: bool = False
    window_noise: bool = False
    include_treated_in_pools: bool = False
    constraints: tuple[str, ...] = ("reduction", "nonnegative")
    workers: int = 1

    def validate(self) -> "RunConfig":
        if self.data is None:
            raise ConfigError("no data file given")
        for p in (self.data, *self.covariates):
            if not Path(p).is_file():
                raise FileNotFound(f"{p}: no such file")
        if self.treated is None or self.t0 is None:
            raise ConfigError("treated unit and t0 are required")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.prior_box not in ("bbox", "hull"):
            raise ConfigError("prior_box must be bbox or hull")
        if self.poly_order not in (1, 2):
            raise ConfigError("poly_order must be 1 or 2")
        if self.mc_samples < 0:
            raise ConfigError("mc_samples must be non-negative")
        if self.transform.startswith("load:"):
            path = Path(self.transform[5:])
            if not path.is_file():
                raise FileNotFound(f"{path}: no such transform file")
        elif self.transform not in ("fit", "none"):
            raise ConfigError("transform must be fit, none or load:PATH")
        return self

    def analysis(self) -> AnalysisConfig:
        transform: str | TransformPipeline = self.transform
        if self.transform.startswith("load:"):
            transform = TransformPipeline.load(self.transform[5:])
        return AnalysisConfig(
            epsilon=self.epsilon,
            transform=transform,
            include_treated_in_mean=self.include_treated_in_mean,
            poly_order=self.poly_order,
            grid=self.grid,
            prior_box=self.prior_box,
            constraints=self.constraints,
            window_noise=self.window_noise,
            shared_transform=self.shared_transform,
            exclude_treated_from_pools=not self.include_treated_in_pools,
        )

    def updated(self, **overrides) -> "RunConfig":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


def _convert(key: str, raw: str, base: Path):
    types = {f.name: f.type for f in fields(RunConfig)}
    if key in _PATH_KEYS:
        return base / raw
    if key == "covariate":
        return base / raw
    if key == "transform" and raw.startswith("load:"):
        return "load:" + str(base / raw[5:])
    kind = types[key]
    try:
        if "bool" in kind:
            return _BOOL[raw.lower()]
        if kind.startswith("int"):
            return int(raw)
        if kind.startswith("float"):
            return float(raw)
        if kind.startswith("tuple[str"):
            return tuple(s.strip() for s in raw.split(",") if s.strip())
    except (KeyError, ValueError):
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw


def parse_config_text(text: str, base: Path = Path(".")) -> dict:
    known = {f.name for f in fields(RunConfig)} | {"covariate"}
    values: dict = {}
    covariates: list[Path] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        val = _convert(key, raw, base)
        if key == "covariate":
            covariates.append(val)
        else:
            values[key] = val
    if covariates:
        values["covariates"] = tuple(covariates)
    return values


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFound(f"{path}: no such config file")
    return RunConfig(**parse_config_text(path.read_text(), path.parent))
