import csv
from pathlib import Path

import numpy as np
import pytest

from wienersc.panel import PanelData
from wienersc.spectral import HarmonicBasis, SpectralPrior


def red_noise(rng, n_units, T, corr=3.0):
    """Unit-variance stationary series with a Lorentzian spectrum of width ``corr``."""
    nu = np.fft.rfftfreq(T) * T
    amp = 1.0 / (1.0 + (nu / corr) ** 2)
    c = (rng.normal(size=(n_units, nu.size)) + 1j * rng.normal(size=(n_units, nu.size))) * np.sqrt(amp)
    x = np.fft.irfft(c, n=T)
    return x / x.std()


def synthetic_panel(seed=1, n_units=39, T=48, t0_index=18, effect=None, scale=20.0,
                    first_time=1970):
    """Red-noise panel around a shared trend; ``effect`` is subtracted from unit 0 after t0."""
    rng = np.random.default_rng(seed)
    x = red_noise(rng, n_units, T) * scale + 100 + np.linspace(30, -40, T)
    if effect is not None:
        x[0, t0_index + 1:] -= effect
    units = [f"u{i}" for i in range(n_units)]
    return PanelData(units, list(range(first_time, first_time + T)), x, 0, t0_index)


def write_panel_csv(path, units, times, values, fmt="{:.10g}"):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["unit", *times])
        for u, row in zip(units, values):
            w.writerow([u, *(fmt.format(v) for v in row)])
    return path


def random_prior(rng, T, lo=0.1, hi=3.0):
    n_freq = T // 2 + 1
    return SpectralPrior(np.arange(n_freq), rng.uniform(lo, hi, n_freq), 10, T)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_panel():
    return synthetic_panel(seed=3, n_units=12, T=24, t0_index=11)


@pytest.fixture(scope="session")
def basis16():
    return HarmonicBasis(16)


# criterion number -> (ok, one-line detail); filled by test_acceptance
ACCEPTANCE: dict[int, tuple[str, str]] = {}


def record_criterion(number: int, status: str, detail: str) -> None:
    ACCEPTANCE[number] = (status, detail)
    print(f"criterion {number}: {status} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {status} - {detail}")
