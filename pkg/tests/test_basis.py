"""Test suite for Fourier and POD bases, projection and reconstruction."""

import numpy as np
import pytest

from src.errors import InsufficientDataError, InvalidInputError, RankDeficiencyError
from src.models.kse import KseParams, SpatioTemporalField
from src.models.modal import BasisKind
from src.numerics.basis import (
    accumulate_covariance,
    fourier_basis,
    fourier_eigenvalues,
    pod_basis,
    pod_energy_fractions,
    project,
    project_chunks,
    reconstruct,
)


@pytest.fixture
def params() -> KseParams:
    return KseParams(Nx=64)


@pytest.fixture
def two_mode_field(params: KseParams) -> SpatioTemporalField:
    """u = 3 cos(2 pi j/Ns) cos(kx) + sin(2 pi j/Ns) sin(2kx) over one full period."""
    Ns = 200
    phase = 2 * np.pi * np.arange(Ns) / Ns
    x = params.grid()
    kappa = 2 * np.pi / params.L
    values = 3.0 * np.outer(np.cos(kappa * x), np.cos(phase)) + np.outer(
        np.sin(2 * kappa * x), np.sin(phase)
    )
    return SpatioTemporalField(grid=x, times=0.1 * np.arange(Ns), values=values, L=params.L)


class TestFourierBasis:
    """Test cases for the linear-operator eigenbasis."""

    def test_orthonormal(self, params: KseParams):
        basis = fourier_basis(5, params)
        np.testing.assert_allclose(basis.gram(), np.eye(10), atol=1e-12)

    def test_ordering_and_labels(self, params: KseParams):
        basis = fourier_basis(3, params)
        assert basis.kind == BasisKind.FOURIER
        assert basis.mode_labels() == ["cos_1", "cos_2", "cos_3", "sin_1", "sin_2", "sin_3"]

    def test_eigenvalues_match_operator(self, params: KseParams):
        """beta_n is the linear symbol at wavenumber 2 pi n / L."""
        beta = fourier_eigenvalues(4, params)
        np.testing.assert_allclose(beta, params.linear_symbol()[1:5], rtol=1e-12)

    def test_unstable_modes_of_default_regime(self, kse_params: KseParams):
        """With L = 20 pi the first three wavenumbers grow."""
        beta = fourier_eigenvalues(10, kse_params)
        np.testing.assert_allclose(beta, -0.0008 * np.arange(1, 11) ** 4 + 0.01 * np.arange(1, 11) ** 2)
        assert list(beta > 0) == [True] * 3 + [False] * 7

    def test_invalid_size(self, params: KseParams):
        with pytest.raises(InvalidInputError):
            fourier_basis(0, params)


class TestProjection:
    """Test cases for projection and reconstruction."""

    def test_project_known_amplitudes(self, params: KseParams):
        """a_k = dx sum u phi_k recovers amplitudes scaled by sqrt(L/2)."""
        x = params.grid()
        kappa = 2 * np.pi / params.L
        u = 2.0 * np.cos(kappa * x) + 0.5 * np.sin(3 * kappa * x)
        field = SpatioTemporalField(grid=x, times=[0.0], values=u[:, None], L=params.L)
        series = project(field, fourier_basis(4, params))

        expected = np.zeros(8)
        expected[0] = 2.0 * np.sqrt(params.L / 2)
        expected[6] = 0.5 * np.sqrt(params.L / 2)
        np.testing.assert_allclose(series.values[:, 0], expected, atol=1e-12)
        assert series.labels[6] == "sin_3"

    def test_reconstruct_in_span(self, two_mode_field: SpatioTemporalField, params: KseParams):
        basis = fourier_basis(2, params)
        rebuilt = reconstruct(project(two_mode_field, basis), basis, two_mode_field.grid)
        np.testing.assert_allclose(rebuilt.values, two_mode_field.values, atol=1e-12)

    def test_chunked_projection(self, two_mode_field: SpatioTemporalField, params: KseParams):
        basis = fourier_basis(2, params)
        chunks = [
            two_mode_field.model_copy(
                update={"times": two_mode_field.times[s], "values": two_mode_field.values[:, s]}
            )
            for s in (slice(0, 70), slice(70, 200))
        ]
        joined = project_chunks(chunks, basis)
        np.testing.assert_allclose(joined.values, project(two_mode_field, basis).values)

    def test_length_mismatch(self, two_mode_field: SpatioTemporalField):
        with pytest.raises(InvalidInputError):
            project(two_mode_field, fourier_basis(2, KseParams(L=10.0)))

    def test_reconstruct_size_mismatch(self, two_mode_field: SpatioTemporalField, params: KseParams):
        series = project(two_mode_field, fourier_basis(2, params))
        with pytest.raises(InvalidInputError):
            reconstruct(series, fourier_basis(3, params), two_mode_field.grid)


class TestPodBasis:
    """Test cases for snapshot POD."""

    def test_recovers_dominant_modes(self, two_mode_field: SpatioTemporalField, params: KseParams):
        """POD of a two-mode field returns those modes in energy order."""
        pod = pod_basis(two_mode_field, 2, snapshot_stride=1)
        fourier = fourier_basis(2, params)

        assert pod.kind == BasisKind.POD
        np.testing.assert_allclose(pod.gram(), np.eye(2), atol=1e-10)
        np.testing.assert_allclose(pod.coefficients[0, :3], fourier.coefficients[0], atol=1e-10)
        np.testing.assert_allclose(pod.coefficients[1, :3], fourier.coefficients[3], atol=1e-10)
        np.testing.assert_allclose(pod_energy_fractions(pod), [0.9, 1.0], atol=1e-10)

    def test_rank_deficient(self, two_mode_field: SpatioTemporalField):
        with pytest.raises(RankDeficiencyError):
            pod_basis(two_mode_field, 3, snapshot_stride=1)

    def test_too_few_snapshots(self, two_mode_field: SpatioTemporalField):
        with pytest.raises(InsufficientDataError):
            pod_basis(two_mode_field, 3, snapshot_stride=100)

    def test_accumulated_covariance(self, two_mode_field: SpatioTemporalField):
        """Chunked accumulation equals the one-shot covariance."""
        halves = [
            two_mode_field.model_copy(
                update={"times": two_mode_field.times[s], "values": two_mode_field.values[:, s]}
            )
            for s in (slice(0, 100), slice(100, 200))
        ]
        covariance, L = accumulate_covariance(halves, snapshot_stride=1)
        U = two_mode_field.values
        np.testing.assert_allclose(covariance, two_mode_field.dx / U.shape[1] * U @ U.T, atol=1e-12)
        assert L == two_mode_field.L

    def test_energy_fractions_need_pod(self, params: KseParams):
        with pytest.raises(InvalidInputError):
            pod_energy_fractions(fourier_basis(2, params))
