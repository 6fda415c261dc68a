"""Test suite for Galerkin models, thresholding and model simulation."""

import math

import numpy as np
import pytest

from src.errors import BlowUpError, InvalidInputError
from src.models.kse import KseParams
from src.models.modal import Basis, BasisKind
from src.models.quadratic import ModelProvenance, QuadraticModel, pair_position
from src.numerics.basis import fourier_basis
from src.numerics.galerkin import (
    fourier_galerkin,
    pod_galerkin,
    quadratic_energy_residual,
    simulate_model,
    threshold_model,
)


def _scalar_model(linear: float, quadratic: float = 0.0, noise: float = 0.0) -> QuadraticModel:
    theta = np.array([[linear, quadratic]])
    return QuadraticModel.from_coefficients(
        theta, ModelProvenance.LEARNED, noise=np.array([[noise]])
    )


class TestFourierGalerkin:
    """Test cases for the exact Fourier-Galerkin model."""

    def test_term_count(self, kse_params: KseParams):
        """Twenty Fourier modes give 20 linear and 275 quadratic terms."""
        model = fourier_galerkin(10, kse_params)
        assert model.n == 20
        assert model.term_count == 295, f"expected 295 terms, got {model.term_count}"
        assert model.provenance == ModelProvenance.FOURIER_GALERKIN

    def test_linear_part_is_diagonal(self, kse_params: KseParams):
        model = fourier_galerkin(4, kse_params)
        beta = fourier_basis(4, kse_params).eigenvalues
        np.testing.assert_allclose(model.linear, np.diag(beta))

    def test_energy_conserving_nonlinearity(self, kse_params: KseParams):
        """a . Q(a) vanishes for every state."""
        assert quadratic_energy_residual(fourier_galerkin(6, kse_params)) < 1e-12

    def test_second_harmonic_coefficients(self, kse_params: KseParams):
        """cos_1^2 and sin_1^2 drive sin_2 with opposite signs."""
        model = fourier_galerkin(2, kse_params)
        theta = model.coefficient_matrix()
        n, L = model.n, kse_params.L
        kappa = 2 * math.pi / L
        expected = kse_params.gamma * kappa * L / 4 * (2 / L) ** 1.5
        # modes: cos_1, cos_2, sin_1, sin_2
        assert theta[3, n + pair_position(0, 0, n)] == pytest.approx(expected, rel=1e-12)
        assert theta[3, n + pair_position(2, 2, n)] == pytest.approx(-expected, rel=1e-12)
        assert theta[0, n + pair_position(0, 0, n)] == 0.0, "structural zeros must be exact"

    def test_translation_equivariance(self, kse_params: KseParams):
        """Shifting the field rotates each (cos_n, sin_n) pair; the drift commutes with it."""
        size = 4
        model = fourier_galerkin(size, kse_params)
        labels = fourier_basis(size, kse_params).labels
        cos_rows = [labels.index((0, k)) for k in range(1, size + 1)]
        sin_rows = [labels.index((1, k)) for k in range(1, size + 1)]
        phase = 0.37 * np.arange(1, size + 1)

        def shift(a: np.ndarray) -> np.ndarray:
            out = a.copy()
            c, s = a[cos_rows], a[sin_rows]
            out[cos_rows] = c * np.cos(phase) - s * np.sin(phase)
            out[sin_rows] = c * np.sin(phase) + s * np.cos(phase)
            return out

        a = np.random.default_rng(3).standard_normal(model.n)
        np.testing.assert_allclose(
            model.drift(shift(a)), shift(model.drift(a)), rtol=1e-10, atol=1e-12,
            err_msg="paired modes must share a wavenumber",
        )


class TestPodGalerkin:
    """Test cases for quadrature-based Galerkin projection."""

    def test_matches_fourier_galerkin_on_fourier_modes(self, kse_params: KseParams):
        """Projecting onto Fourier modes held as a POD basis gives the exact model."""
        fourier = fourier_basis(3, kse_params)
        as_pod = Basis(kind=BasisKind.POD, L=fourier.L, coefficients=fourier.coefficients)
        approx = pod_galerkin(as_pod, kse_params).coefficient_matrix()
        exact = fourier_galerkin(3, kse_params).coefficient_matrix()
        np.testing.assert_allclose(approx, exact, atol=1e-12)

    def test_energy_conserving(self, kse_params: KseParams):
        rng = np.random.default_rng(3)
        coefficients = np.zeros((4, 9), dtype=complex)
        coefficients[:, 1:] = rng.standard_normal((4, 8)) + 1j * rng.standard_normal((4, 8))
        basis = Basis(kind=BasisKind.POD, L=kse_params.L, coefficients=coefficients)
        model = pod_galerkin(basis, kse_params)
        assert quadratic_energy_residual(model) < 1e-10

    def test_rejects_fourier_basis(self, kse_params: KseParams):
        with pytest.raises(InvalidInputError):
            pod_galerkin(fourier_basis(2, kse_params), kse_params)


class TestThresholding:
    """Test cases for magnitude thresholding."""

    def test_keeps_largest_terms(self, kse_params: KseParams):
        model = fourier_galerkin(4, kse_params)
        total = model.term_count
        kept = threshold_model(model, 0.5)

        assert kept.term_count == math.ceil(0.5 * total)
        assert kept.provenance == ModelProvenance.THRESHOLDED
        original = np.abs(model.coefficient_matrix())
        survivors = kept.term_mask()
        assert original[survivors].min() >= original[~survivors].max(), "survivors must dominate"
        np.testing.assert_array_equal(kept.coefficient_matrix()[survivors], model.coefficient_matrix()[survivors])

    def test_explicit_keep_count(self, kse_params: KseParams):
        assert threshold_model(fourier_galerkin(2, kse_params), 0.0, n_keep=3).term_count == 3

    def test_term_count_shrinks_with_fraction(self, kse_params: KseParams):
        """Survivors at a larger fraction are a subset of those at a smaller one."""
        model = fourier_galerkin(4, kse_params)
        kept = [threshold_model(model, s) for s in (0.0, 0.2, 0.5, 0.8, 0.95)]
        counts = [k.term_count for k in kept]
        assert counts == sorted(counts, reverse=True), f"term counts should not grow: {counts}"
        for denser, sparser in zip(kept, kept[1:]):
            assert not np.any(sparser.term_mask() & ~denser.term_mask())

    @pytest.mark.parametrize("fraction", [-0.1, 1.0])
    def test_invalid_fraction(self, kse_params: KseParams, fraction: float):
        with pytest.raises(InvalidInputError):
            threshold_model(fourier_galerkin(2, kse_params), fraction)


class TestSimulateModel:
    """Test cases for RK4 plus Euler-Maruyama integration."""

    def test_deterministic_decay(self):
        series = simulate_model(_scalar_model(-1.0), np.array([2.0]), t_end=3.0, dt=0.01)
        np.testing.assert_allclose(series.values[0], 2.0 * np.exp(-series.times), rtol=1e-8)
        assert len(series) == 301

    def test_save_stride_and_offset(self):
        series = simulate_model(
            _scalar_model(-1.0), np.array([1.0]), t_end=1.0, dt=0.01, save_stride=10, t_start=5.0
        )
        np.testing.assert_allclose(series.times, 5.0 + 0.1 * np.arange(11))

    def test_seeded_noise_is_reproducible(self):
        model = _scalar_model(-1.0, noise=1.0)
        first = simulate_model(model, np.zeros(1), 10.0, 0.01, seed=4)
        second = simulate_model(model, np.zeros(1), 10.0, 0.01, seed=4)
        other = simulate_model(model, np.zeros(1), 10.0, 0.01, seed=5)
        np.testing.assert_array_equal(first.values, second.values)
        assert not np.array_equal(first.values, other.values)

    def test_stationary_variance(self):
        """da = -a dt + dW has stationary variance 1/2."""
        series = simulate_model(_scalar_model(-1.0, noise=1.0), np.zeros(1), 500.0, 0.01, seed=1)
        assert 0.35 < np.var(series.values[0, 1000:]) < 0.65

    def test_blow_up(self):
        """da = a^2 dt from a(0) = 10 explodes near t = 0.1."""
        with pytest.raises(BlowUpError) as info:
            simulate_model(_scalar_model(0.0, quadratic=1.0), np.array([10.0]), 1.0, 0.001)
        assert 0.09 < info.value.last_stable_time < 0.11

    def test_initial_state_shape(self):
        with pytest.raises(InvalidInputError):
            simulate_model(_scalar_model(-1.0), np.zeros(2), 1.0, 0.01)
