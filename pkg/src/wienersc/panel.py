"""Panel data container, CSV ingestion and cross-unit demeaning."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class PanelError(ValueError):
    """Base class for panel validation failures."""

    code = "PanelError"


class MissingCell(PanelError):
    code = "MissingCell"


class RaggedRows(PanelError):
    code = "RaggedRows"


class UnknownUnit(PanelError):
    code = "UnknownUnit"


class T0OutOfRange(PanelError):
    code = "T0OutOfRange"


class NonUniformTimeStep(PanelError):
    code = "NonUniformTimeStep"


@dataclass(frozen=True)
class PanelData:
    """Rectangular unit x time outcome matrix with one treated unit.

    ``t0_index`` points at the last pre-treatment period.
    """

    unit_ids: tuple[str, ...]
    times: tuple[int, ...]
    values: np.ndarray
    treated_index: int
    t0_index: int

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "unit_ids", tuple(str(u) for u in self.unit_ids))
        object.__setattr__(self, "times", tuple(int(t) for t in self.times))
        _validate(self)

    @property
    def n_units(self) -> int:
        return len(self.unit_ids)

    @property
    def n_times(self) -> int:
        return len(self.times)

    @property
    def control_indices(self) -> np.ndarray:
        idx = np.arange(self.n_units)
        return idx[idx != self.treated_index]

    @property
    def treated_id(self) -> str:
        return self.unit_ids[self.treated_index]

    def unit_index(self, unit: str) -> int:
        try:
            return self.unit_ids.index(str(unit))
        except ValueError:
            raise UnknownUnit(f"unit {unit!r} not in panel") from None

    def time_index(self, time: int) -> int:
        try:
            return self.times.index(int(time))
        except ValueError:
            raise T0OutOfRange(f"time {time!r} not in panel") from None

    def with_treated(self, unit: str | int) -> "PanelData":
        idx = unit if isinstance(unit, (int, np.integer)) else self.unit_index(unit)
        return PanelData(self.unit_ids, self.times, self.values, int(idx), self.t0_index)


def _validate(panel: PanelData) -> None:
    v = panel.values
    if v.ndim != 2 or v.shape != (len(panel.unit_ids), len(panel.times)):
        raise RaggedRows(
            f"values shape {v.shape} does not match "
            f"{len(panel.unit_ids)} units x {len(panel.times)} times"
        )
    if not np.all(np.isfinite(v)):
        i, t = np.argwhere(~np.isfinite(v))[0]
        raise MissingCell(f"missing value for unit {panel.unit_ids[i]!r} at time {panel.times[t]}")
    if len(panel.unit_ids) < 2:
        raise UnknownUnit("panel needs at least one control unit")
    if len(set(panel.unit_ids)) != len(panel.unit_ids):
        raise RaggedRows("duplicate unit labels")
    if not 0 <= panel.treated_index < len(panel.unit_ids):
        raise UnknownUnit(f"treated index {panel.treated_index} out of range")
    if len(panel.times) < 2:
        raise T0OutOfRange("need at least one pre- and one post-treatment period")
    steps = np.diff(panel.times)
    if steps[0] <= 0 or np.any(steps != steps[0]):
        raise NonUniformTimeStep("time labels must be strictly increasing with a constant step")
    if not 0 <= panel.t0_index < len(panel.times) - 1:
        raise T0OutOfRange(
            f"t0 index {panel.t0_index} leaves no pre- or post-treatment period"
        )


def _parse_time(label: str) -> int:
    try:
        as_float = float(label)
    except ValueError:
        raise NonUniformTimeStep(f"time label {label!r} is not numeric") from None
    if not as_float.is_integer():
        raise NonUniformTimeStep(f"time label {label!r} is not an integer period")
    return int(as_float)


def read_panel_csv(path: str | Path) -> tuple[list[str], list[int], np.ndarray]:
    """Read a wide CSV (unit label column, one column per period).

    Returns unit labels, time labels and the value matrix without any
    treated-unit bookkeeping.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [row for row in csv.reader(fh) if any(cell.strip() for cell in row)]
    if not rows:
        raise RaggedRows(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    times = [_parse_time(h.strip()) for h in header[1:]]
    units, values = [], []
    for lineno, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise RaggedRows(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        units.append(row[0].strip())
        cells = []
        for t, cell in zip(times, row[1:]):
            cell = cell.strip()
            if not cell:
                raise MissingCell(f"{path}:{lineno}: empty value for {row[0]!r} at {t}")
            try:
                cells.append(float(cell))
            except ValueError:
                raise MissingCell(f"{path}:{lineno}: unparseable value {cell!r}") from None
        values.append(cells)
    return units, times, np.array(values, dtype=float).reshape(len(units), len(times))


def load_panel(path: str | Path, treated: str, t0: int) -> PanelData:
    """Load and validate a panel; ``t0`` is the label of the last pre-treatment period."""
    units, times, values = read_panel_csv(path)
    if str(treated) not in units:
        raise UnknownUnit(f"treated unit {treated!r} not found in {path}")
    t0 = int(t0)
    if t0 not in times:
        raise T0OutOfRange(f"t0={t0} is not a column of {path}")
    return PanelData(units, times, values, units.index(str(treated)), times.index(t0))


def align_covariate(primary: PanelData, units: Sequence[str], times: Sequence[int],
                    values: np.ndarray) -> PanelData:
    """Reorder a covariate panel to the primary panel's unit order."""
    if list(times) != list(primary.times):
        raise RaggedRows("covariate time grid differs from the primary panel")
    lookup = {u: i for i, u in enumerate(units)}
    missing = [u for u in primary.unit_ids if u not in lookup]
    if missing:
        raise UnknownUnit(f"covariate lacks units {missing}")
    order = [lookup[u] for u in primary.unit_ids]
    return PanelData(primary.unit_ids, primary.times, np.asarray(values)[order],
                     primary.treated_index, primary.t0_index)


@dataclass(frozen=True)
class DemeanedPanel:
    base: PanelData
    mean_series: np.ndarray
    residuals: np.ndarray
    pool: tuple[int, ...] = field(default=())


def demean(panel: PanelData, include_treated: bool = False,
           pool: Sequence[int] | None = None) -> DemeanedPanel:
    """Subtract the per-period cross-unit mean.

    The mean runs over control units unless ``include_treated`` is set.
    ``pool`` overrides the averaging set entirely (used for leave-one-out runs).
    """
    if pool is None:
        pool = np.arange(panel.n_units) if include_treated else panel.control_indices
    pool = np.asarray(pool, dtype=int)
    mean_series = panel.values[pool].mean(axis=0)
    residuals = panel.values - mean_series
    mean_series.setflags(write=False)
    residuals.setflags(write=False)
    return DemeanedPanel(panel, mean_series, residuals, tuple(int(i) for i in pool))
