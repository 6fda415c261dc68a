"""Test suite for statistical and dynamical diagnostics."""

import math

import numpy as np
import pytest

from src.errors import InvalidInputError
from src.models.kse import KseParams
from src.models.modal import CoefficientSeries
from src.models.quadratic import ModelProvenance, QuadraticModel
from src.numerics.diagnostics import (
    _hessian_tensor,
    acf,
    assimilation_errors,
    bifurcation_extrema,
    coefficient_magnitude_fraction,
    energy_spectrum,
    kinetic_energy_series,
    local_extrema,
    lyapunov_spectrum,
    pdf_estimate,
)


@pytest.fixture
def ramp() -> CoefficientSeries:
    t = np.arange(10.0)
    return CoefficientSeries(times=t, values=[t, np.ones(10)])


class TestStatistics:
    """Test cases for spectra, densities and autocorrelations."""

    def test_energy_spectrum_window(self, ramp: CoefficientSeries):
        report = energy_spectrum(ramp, (2.0, 4.0))
        np.testing.assert_allclose(report.energies, [29.0 / 3.0, 1.0])
        assert report.labels == ["a1", "a2"], "unlabelled series fall back to a1, a2, ..."
        assert report.window == (2.0, 4.0)

    def test_energy_spectrum_full_range(self, ramp: CoefficientSeries):
        labelled = ramp.model_copy(update={"labels": ["cos_1", "sin_1"]})
        report = energy_spectrum(labelled)
        assert report.labels == ["cos_1", "sin_1"]
        assert report.energies[0] == pytest.approx(np.mean(np.arange(10.0) ** 2))

    @pytest.mark.parametrize("window", [(-1.0, 3.0), (2.0, 20.0), (5.0, 4.0)])
    def test_energy_spectrum_bad_window(self, ramp: CoefficientSeries, window):
        with pytest.raises(InvalidInputError):
            energy_spectrum(ramp, window)

    def test_kinetic_energy_series(self, ramp: CoefficientSeries):
        np.testing.assert_allclose(kinetic_energy_series(ramp), np.arange(10.0) ** 2 + 1.0)

    def test_pdf_is_normalized(self):
        samples = np.random.default_rng(0).standard_normal(10_000)
        report = pdf_estimate(samples, bins=50)
        assert report.density.size == 50 and report.edges.size == 51
        assert np.sum(report.density * np.diff(report.edges)) == pytest.approx(1.0)
        assert report.centers[np.argmax(report.density)] == pytest.approx(0.0, abs=0.5)

    def test_pdf_of_constant(self):
        with pytest.raises(InvalidInputError):
            pdf_estimate(np.ones(10))

    def test_acf_alternating(self):
        """A +1/-1 sequence has biased lag-1 autocorrelation -(N-1)/N."""
        x = np.tile([1.0, -1.0], 50)
        values = acf(x, 2)
        assert values[0] == 1.0
        assert values[1] == pytest.approx(-99 / 100)
        assert values[2] == pytest.approx(98 / 100)

    def test_acf_of_ornstein_uhlenbeck(self, ou_series: CoefficientSeries):
        """OU correlations decay like exp(-lag dt)."""
        values = acf(ou_series.values[0], 100)
        assert values[100] == pytest.approx(math.exp(-1.0), abs=0.25)
        assert np.all(np.abs(values) <= 1.0 + 1e-12)

    @pytest.mark.parametrize("samples, lag", [(np.ones(5), 2), (np.arange(5.0), 5)])
    def test_acf_invalid(self, samples, lag):
        with pytest.raises(InvalidInputError):
            acf(samples, lag)


class TestExtrema:
    """Test cases for extrema and parameter sweeps."""

    def test_strict_extrema(self):
        minima, maxima = local_extrema([0.0, 2.0, 1.0, 3.0, 0.0, 0.0, 0.0])
        np.testing.assert_array_equal(minima, [1.0])
        np.testing.assert_array_equal(maxima, [2.0, 3.0])

    def test_short_series(self):
        minima, maxima = local_extrema([1.0, 2.0])
        assert minima.size == 0 and maxima.size == 0

    def test_sweep_with_injected_simulator(self):
        """Periodic energies give two distinct extrema, steady ones none."""

        def energy(params: KseParams, burn_in: float, window: float) -> np.ndarray:
            t = np.linspace(burn_in, burn_in + window, 2001)
            if params.nu > 5:
                return np.full_like(t, 3.0)
            return 2.0 + np.cos(2 * np.pi * t)

        sweep = [KseParams(nu=nu) for nu in (4.0, 6.0, 4.5)]
        points = bifurcation_extrema(sweep, burn_in=0.0, window=10.0, simulate=energy, threads=2)
        assert [p.nu for p in points] == [4.0, 6.0, 4.5], "results keep sweep order"
        assert [p.distinct_count for p in points] == [2, 0, 2]
        np.testing.assert_allclose(points[0].maxima, 3.0)

    @pytest.mark.parametrize("sweep, burn_in, window", [([], 0.0, 1.0), ([KseParams()], -1.0, 1.0), ([KseParams()], 0.0, 0.0)])
    def test_invalid_sweep(self, sweep, burn_in, window):
        with pytest.raises(InvalidInputError):
            bifurcation_extrema(sweep, burn_in, window)


class TestLyapunov:
    """Test cases for Lyapunov exponents."""

    def test_linear_model(self):
        """A diagonal linear model has its eigenvalues as exponents."""
        model = QuadraticModel.from_coefficients(
            np.hstack([np.diag([-1.0, -2.0, 0.5]), np.zeros((3, 6))]), ModelProvenance.LEARNED
        )
        report = lyapunov_spectrum(model, 3, t_window=10.0, dt=0.01, a0=np.ones(3))
        np.testing.assert_allclose(report.exponents, [0.5, -1.0, -2.0], atol=1e-6)
        assert report.t_window == pytest.approx(10.0)

    def test_hessian_gives_jacobian(self):
        rng = np.random.default_rng(5)
        theta = rng.standard_normal((3, 9))
        model = QuadraticModel.from_coefficients(theta, ModelProvenance.LEARNED)
        a = rng.standard_normal(3)
        np.testing.assert_allclose(model.linear + _hessian_tensor(model) @ a, model.jacobian(a), atol=1e-12)

    @pytest.mark.parametrize("k", [0, 4])
    def test_invalid_count(self, k: int):
        model = QuadraticModel.from_coefficients(np.zeros((3, 9)), ModelProvenance.LEARNED)
        with pytest.raises(InvalidInputError):
            lyapunov_spectrum(model, k, 1.0, 0.01)


class TestAssimilationErrors:
    def test_relative_errors(self, ramp: CoefficientSeries):
        errors = assimilation_errors(ramp, 0.9 * ramp.values, range(2))
        np.testing.assert_allclose(errors, [0.1, 0.1])

    def test_shape_mismatch(self, ramp: CoefficientSeries):
        with pytest.raises(InvalidInputError):
            assimilation_errors(ramp, np.zeros((1, 10)), [0])

    def test_zero_truth(self):
        truth = CoefficientSeries(times=np.arange(3.0), values=np.zeros((1, 3)))
        with pytest.raises(InvalidInputError):
            assimilation_errors(truth, np.zeros((1, 3)), [0])


class TestCoefficientMagnitudes:
    def test_fraction(self):
        theta = np.zeros((2, 5))
        theta[0, 2], theta[0, 3], theta[1, 4] = 0.1, -1.0, 10.0
        model = QuadraticModel.from_coefficients(theta, ModelProvenance.LEARNED)
        assert coefficient_magnitude_fraction(model, 0.5, 20.0) == pytest.approx(2 / 3)

    def test_no_quadratic_terms(self):
        model = QuadraticModel.from_coefficients(np.eye(2, 5), ModelProvenance.LEARNED)
        assert math.isnan(coefficient_magnitude_fraction(model, 0.0, 1.0))
