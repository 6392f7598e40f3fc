import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from wienersc.gaussianize import fit_pipeline, gaussianize
from wienersc.panel import demean
from wienersc.spectral import (
    HarmonicBasis,
    LengthMismatch,
    PanelMismatch,
    TooFewControls,
    analyze,
    estimate_block_prior,
    estimate_prior,
    synthesize,
)

lengths = st.integers(1, 40)


def naive_coefficients(x):
    """Direct O(T^2) projection onto DC, cos/sin pairs and Nyquist."""
    T = x.size
    t = np.arange(T)
    out = [x.sum() / math.sqrt(T)]
    for f in range(1, (T - 1) // 2 + 1):
        out.append(math.sqrt(2 / T) * sum(x[j] * math.cos(2 * math.pi * f * j / T) for j in t))
        out.append(math.sqrt(2 / T) * sum(x[j] * math.sin(2 * math.pi * f * j / T) for j in t))
    if T % 2 == 0:
        out.append(sum(x[j] * (-1) ** j for j in t) / math.sqrt(T))
    return np.array(out)


class TestBasis:
    @pytest.mark.parametrize("T", [1, 2, 3, 4, 7, 16, 48, 49])
    def test_orthonormal(self, T):
        B = HarmonicBasis(T).basis
        np.testing.assert_allclose(B @ B.T, np.eye(T), atol=1e-10)

    @pytest.mark.parametrize("T", [5, 16, 17])
    def test_frequency_layout(self, T):
        b = HarmonicBasis(T)
        assert b.freq.size == T
        assert b.n_freq == T // 2 + 1
        assert set(b.freq) == set(range(b.n_freq))
        assert b.is_sin.sum() == (T - 1) // 2

    def test_constant_series(self):
        b = HarmonicBasis(12)
        c = analyze(b, np.full(12, 2.5))
        assert c[0] == pytest.approx(2.5 * math.sqrt(12))
        np.testing.assert_allclose(c[1:], 0, atol=1e-10)

    def test_pure_cosine(self):
        T, nu = 20, 3
        b = HarmonicBasis(T)
        c = analyze(b, np.cos(2 * np.pi * nu * np.arange(T) / T))
        row = np.flatnonzero((b.freq == nu) & ~b.is_sin)[0]
        assert abs(c[row]) > 1
        np.testing.assert_allclose(np.delete(c, row), 0, atol=1e-10)

    @pytest.mark.parametrize("T", [6, 9, 16])
    def test_matches_naive_projection(self, rng, T):
        x = rng.standard_normal(T)
        np.testing.assert_allclose(analyze(HarmonicBasis(T), x), naive_coefficients(x), atol=1e-10)

    def test_unit_dc_synthesis(self):
        b = HarmonicBasis(9)
        e = np.zeros(9)
        e[0] = 1
        np.testing.assert_allclose(synthesize(b, e), np.full(9, 1 / 3), atol=1e-15)

    def test_length_mismatch(self):
        b = HarmonicBasis(8)
        with pytest.raises(LengthMismatch):
            analyze(b, np.zeros(7))
        with pytest.raises(LengthMismatch):
            synthesize(b, np.zeros(9))

    def test_round_trip_many(self, rng):
        b = HarmonicBasis(30)
        x = rng.standard_normal((100, 30))
        np.testing.assert_allclose(b.synthesize(b.analyze(x)), x, atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(lengths.flatmap(lambda T: st.tuples(
    arrays(np.float64, T, elements=st.floats(-1e3, 1e3)),
    arrays(np.float64, T, elements=st.floats(-1e3, 1e3)),
    st.floats(-10, 10), st.floats(-10, 10))))
def test_parseval_and_linearity(args):
    x, y, a, b = args
    basis = HarmonicBasis(x.size)
    scale = 1 + np.abs(x).sum() + np.abs(y).sum()
    assert abs(np.linalg.norm(analyze(basis, x)) - np.linalg.norm(x)) <= 1e-10 * scale
    lhs = analyze(basis, a * x + b * y)
    rhs = a * analyze(basis, x) + b * analyze(basis, y)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10 * scale * (1 + abs(a) + abs(b)))


class TestEstimatePrior:
    def test_matches_fft_power(self, rng):
        # tau(nu) = mean |rfft|^2 / T for every frequency, DC and Nyquist included
        for T in (15, 16):
            z = rng.standard_normal((30, T))
            prior = estimate_prior(z, HarmonicBasis(T))
            expected = np.mean(np.abs(np.fft.rfft(z, axis=1)) ** 2, axis=0) / T
            np.testing.assert_allclose(prior.var, expected, rtol=1e-12)
            np.testing.assert_allclose(prior.dft_power(), T * expected, rtol=1e-12)

    def test_white_noise_is_flat(self):
        rng = np.random.default_rng(7)
        n, T = 500, 32
        prior = estimate_prior(rng.standard_normal((n, T)), HarmonicBasis(T))
        # each tau is a chi^2 mean with n (edge) or 2n (paired) degrees of freedom
        dof = np.where((prior.freqs == 0) | (prior.freqs == T // 2), n, 2 * n)
        sigma = np.sqrt(2 / dof)
        assert np.all(np.abs(prior.var - 1) < 5 * sigma)

    def test_injected_sinusoid_dominates(self, rng):
        T, nu = 40, 5
        t = np.arange(T)
        phases = rng.uniform(0, 2 * np.pi, 50)
        z = 0.3 * rng.standard_normal((50, T)) + 3 * np.cos(2 * np.pi * nu * t / T + phases[:, None])
        tau = estimate_prior(z, HarmonicBasis(T)).var
        assert np.all(tau[nu] >= 10 * np.delete(tau, nu))

    def test_zero_panel_warns(self):
        with pytest.warns(UserWarning):
            prior = estimate_prior(np.zeros((4, 8)), HarmonicBasis(8))
        assert np.all(prior.var == 0)
        assert np.all(prior.floored() > 0)

    def test_too_few_controls(self):
        with pytest.raises(TooFewControls):
            estimate_prior(np.zeros((1, 8)), HarmonicBasis(8))

    def test_shift_invariance(self, rng):
        z = rng.standard_normal((25, 21))
        b = HarmonicBasis(21)
        tau = estimate_prior(z, b).var
        for k in (1, 5, 13):
            np.testing.assert_allclose(estimate_prior(np.roll(z, k, axis=1), b).var, tau, atol=1e-10)

    def test_marginal_variance_is_constant(self, rng):
        prior = estimate_prior(rng.standard_normal((10, 14)), HarmonicBasis(14))
        m = prior.marginal_variance()
        np.testing.assert_allclose(m, np.full_like(m, m.mean()), rtol=1e-10)
        # sum of coefficient variances spreads evenly over time
        assert m.mean() == pytest.approx(prior.coefficient_variance().sum() / 14)

    def test_gaussianized_panel_uses_controls(self, small_panel):
        d = demean(small_panel)
        g = gaussianize(d, fit_pipeline(d))
        b = HarmonicBasis(small_panel.n_times)
        prior = estimate_prior(g, b)
        assert prior.n_controls == small_panel.n_units - 1
        np.testing.assert_allclose(prior.var, estimate_prior(g.z[1:], b).var)


class TestBlockPrior:
    def test_matches_fft_cross_spectrum(self, rng):
        for T in (11, 12):
            a = rng.standard_normal((40, T))
            bb = 0.6 * np.roll(a, 1, axis=1) + rng.standard_normal((40, T))
            block = estimate_block_prior([a, bb], HarmonicBasis(T))
            Xa, Xb = np.fft.rfft(a, axis=1), np.fft.rfft(bb, axis=1)
            np.testing.assert_allclose(block.cross(0, 1), np.mean(Xa * Xb.conj(), axis=0) / T,
                                       atol=1e-12)
            np.testing.assert_allclose(block.auto(0), estimate_prior(a, HarmonicBasis(T)).var)

    def test_independent_variables_decouple(self):
        rng = np.random.default_rng(11)
        a, b = rng.standard_normal((2, 500, 24))
        block = estimate_block_prior([a, b], HarmonicBasis(24))
        assert np.max(np.abs(block.cross(0, 1))) < 0.1

    def test_duplicate_variable_fully_correlated(self, rng):
        a = rng.standard_normal((30, 16))
        block = estimate_block_prior([a, a], HarmonicBasis(16))
        np.testing.assert_allclose(block.cross(0, 1), block.auto(0), atol=1e-12)
        np.testing.assert_allclose(block.auto(1), block.auto(0))

    def test_blocks_psd_and_cauchy_schwarz(self, rng):
        z = [rng.standard_normal((6, 20)) for _ in range(3)]
        block = estimate_block_prior(z, HarmonicBasis(20))
        for h in block.blocks:
            np.testing.assert_allclose(h, h.conj().T, atol=1e-12)
            assert np.linalg.eigvalsh(h).min() >= -1e-10
            d = np.real(np.diag(h))
            assert np.all(np.abs(h) <= np.sqrt(np.outer(d, d)) + 1e-10)
        P = block.covariance_matrix()
        np.testing.assert_allclose(P, P.T)
        assert np.linalg.eigvalsh(P).min() >= -1e-10

    def test_stacked_covariance_matches_sample(self, rng):
        # the dense prior equals the cos/sin-tied sample covariance of stacked coefficients
        T = 10
        a = rng.standard_normal((50, T))
        b = a[:, ::-1] + rng.standard_normal((50, T))
        basis = HarmonicBasis(T)
        P = estimate_block_prior([a, b], basis).covariance_matrix()
        ca, cb = analyze(basis, a), analyze(basis, b)
        S = np.concatenate([ca, cb], axis=1)
        emp = S.T @ S / 50
        for f in range(1, (T - 1) // 2 + 1):
            c, s = np.flatnonzero(basis.freq == f)
            pair = 0.5 * (emp[np.ix_([c, T + c], [c, T + c])] + emp[np.ix_([s, T + s], [s, T + s])])
            for u in (c, s):
                np.testing.assert_allclose(P[np.ix_([u, T + u], [u, T + u])], pair, atol=1e-12)
            quad = 0.5 * (emp[np.ix_([c, T + c], [s, T + s])] - emp[np.ix_([s, T + s], [c, T + c])])
            np.testing.assert_allclose(P[np.ix_([c, T + c], [s, T + s])], quad, atol=1e-12)

    def test_panel_mismatch(self, rng):
        with pytest.raises(PanelMismatch):
            estimate_block_prior([rng.standard_normal((5, 8)), rng.standard_normal((6, 8))],
                                 HarmonicBasis(8))

    def test_single_variable_view(self, rng):
        z = rng.standard_normal((9, 13))
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            block = estimate_block_prior([z], HarmonicBasis(13))
        np.testing.assert_allclose(block.single(0).var, estimate_prior(z, HarmonicBasis(13)).var)
