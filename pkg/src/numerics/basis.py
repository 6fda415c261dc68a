"""Fourier and POD bases, projection and reconstruction.

This module handles:
1. Eigenfunctions of the linear KSE operator (Fourier basis)
2. POD modes by the method of snapshots on the spatial covariance
3. Projection of fields onto a basis and reconstruction from amplitudes
"""

import logging
from typing import Iterable

import numpy as np
from scipy import linalg

from src.errors import InsufficientDataError, InvalidInputError, RankDeficiencyError
from src.models.kse import KseParams, SpatioTemporalField
from src.models.modal import Basis, BasisKind, CoefficientSeries

logger = logging.getLogger(__name__)

POD_FOURIER_PAIRS = 64
RANK_TOLERANCE = 1e-12


def fourier_eigenvalues(N: int, params: KseParams) -> np.ndarray:
    """beta_n = -16 nu pi^4 n^4 / L^4 + 4 D pi^2 n^2 / L^2 for n = 1..N."""
    n = np.arange(1, N + 1, dtype=float)
    L = params.L
    return -16.0 * params.nu * np.pi**4 * n**4 / L**4 + 4.0 * params.D * np.pi**2 * n**2 / L**2


def fourier_basis(N: int, params: KseParams) -> Basis:
    """Build the 2N modes sqrt(2/L) cos(2 pi n x/L), sqrt(2/L) sin(2 pi n x/L).

    Modes are ordered cos 1..N then sin 1..N.
    """
    if N < 1:
        raise InvalidInputError(f"N must be at least 1, got {N}")
    amplitude = np.sqrt(2.0 / params.L)
    coefficients = np.zeros((2 * N, N + 1), dtype=complex)
    n = np.arange(1, N + 1)
    coefficients[n - 1, n] = amplitude
    coefficients[N + n - 1, n] = -1j * amplitude
    beta = fourier_eigenvalues(N, params)
    labels = [(0, int(k)) for k in n] + [(1, int(k)) for k in n]
    unstable = int(np.sum(beta > 0))
    logger.debug(f"Fourier basis with {2 * N} modes, {2 * unstable} unstable directions")
    return Basis(
        kind=BasisKind.FOURIER,
        L=params.L,
        coefficients=coefficients,
        labels=labels,
        eigenvalues=np.concatenate([beta, beta]),
    )


def samples_to_coefficients(samples: np.ndarray, pairs: int) -> np.ndarray:
    """Convert real periodic samples (rows) to truncated coefficients c_0..c_pairs.

    The result reproduces the samples through Re sum_k c_k exp(i k kappa x)
    on the sample grid when pairs >= Nx/2.
    """
    samples = np.atleast_2d(samples)
    Nx = samples.shape[1]
    spectrum = np.fft.rfft(samples, axis=1) / Nx
    K = min(pairs, Nx // 2)
    coefficients = np.zeros((samples.shape[0], pairs + 1), dtype=complex)
    coefficients[:, 1 : K + 1] = 2.0 * spectrum[:, 1 : K + 1]
    if K == Nx // 2:
        coefficients[:, K] = spectrum[:, K]
    return coefficients


def _fix_sign(coefficients: np.ndarray) -> np.ndarray:
    """Flip each mode so its largest coefficient has positive real part.

    Modes whose dominant coefficient is purely imaginary use -Im instead.
    """
    fixed = coefficients.copy()
    for row in fixed:
        top = row[np.argmax(np.abs(row))]
        if abs(top.real) > 1e-8 * abs(top):
            sign = np.sign(top.real)
        else:
            sign = -np.sign(top.imag)
        if sign < 0:
            row *= -1.0
    return fixed


def pod_basis(
    field: SpatioTemporalField, N: int, snapshot_stride: int = 10
) -> Basis:
    """Compute N POD modes from the spatial covariance of the snapshots.

    C_x = (dx / Ns) U U^T is eigendecomposed; eigenvectors are scaled to
    unit L^2 norm and stored as 64-pair Fourier truncations.

    Raises:
        InsufficientDataError: fewer snapshots than requested modes
        RankDeficiencyError: N exceeds the numerical rank of the snapshots
    """
    if N < 1 or snapshot_stride < 1:
        raise InvalidInputError("N and snapshot_stride must be positive")
    snapshots = field.values[:, ::snapshot_stride]
    Ns = snapshots.shape[1]
    if Ns < N:
        raise InsufficientDataError(f"{Ns} snapshots cannot support {N} POD modes")
    if N > field.Nx:
        raise RankDeficiencyError(f"{N} modes exceed the grid size {field.Nx}")

    covariance = (field.dx / Ns) * (snapshots @ snapshots.T)
    return pod_basis_from_covariance(covariance, N, field.L)


def pod_basis_from_covariance(covariance: np.ndarray, N: int, L: float) -> Basis:
    """POD modes from an accumulated spatial covariance (dx / Ns) U U^T."""
    Nx = covariance.shape[0]
    dx = L / Nx
    eigenvalues, eigenvectors = linalg.eigh(covariance)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = np.clip(eigenvalues[order], 0.0, None)
    eigenvectors = eigenvectors[:, order]

    if eigenvalues[0] <= 0 or eigenvalues[N - 1] <= RANK_TOLERANCE * eigenvalues[0]:
        raise RankDeficiencyError(
            f"snapshot covariance has numerical rank below {N} "
            f"(lambda_{N} = {eigenvalues[N - 1]:.3e})"
        )

    modes = eigenvectors[:, :N].T / np.sqrt(dx)
    coefficients = _fix_sign(samples_to_coefficients(modes, POD_FOURIER_PAIRS))
    basis = Basis(
        kind=BasisKind.POD,
        L=L,
        coefficients=coefficients,
        covariance_eigenvalues=eigenvalues,
    )
    captured = pod_energy_fractions(basis)[-1]
    logger.info(f"✅ POD basis with {N} modes captures {100 * captured:.2f}% of the energy")
    return basis


def accumulate_covariance(chunks: Iterable[SpatioTemporalField], snapshot_stride: int = 10) -> tuple[np.ndarray, float]:
    """Sum (dx / Ns) U U^T over chunked snapshots.

    Striding is applied per chunk. Returns the covariance and the domain length.
    """
    total = None
    count = 0
    L = None
    for chunk in chunks:
        snapshots = chunk.values[:, ::snapshot_stride]
        product = snapshots @ snapshots.T
        total = product if total is None else total + product
        count += snapshots.shape[1]
        L = chunk.L
    if total is None or count == 0:
        raise InsufficientDataError("no snapshots to build a covariance from")
    return (L / total.shape[0] / count) * total, L


def pod_energy_fractions(basis: Basis) -> np.ndarray:
    """Cumulative share of the snapshot energy captured by modes 1..n."""
    if basis.covariance_eigenvalues is None:
        raise InvalidInputError("energy fractions need a POD basis")
    eigenvalues = basis.covariance_eigenvalues
    return np.cumsum(eigenvalues[: basis.size]) / np.sum(eigenvalues)


def _check_compatible(field_L: float, basis: Basis, Nx: int) -> None:
    if not np.isclose(field_L, basis.L, rtol=1e-12):
        raise InvalidInputError(f"field length {field_L} differs from basis length {basis.L}")
    if basis.max_wavenumber > Nx // 2:
        logger.warning(
            f"⚠️ Basis resolves wavenumber {basis.max_wavenumber} beyond the grid Nyquist {Nx // 2}"
        )


def project(field: SpatioTemporalField, basis: Basis) -> CoefficientSeries:
    """a_k(t_j) = dx * sum_i u(x_i, t_j) phi_k(x_i)."""
    _check_compatible(field.L, basis, field.Nx)
    modes = basis.evaluate(field.grid)
    return CoefficientSeries(
        times=field.times,
        values=field.dx * (modes @ field.values),
        basis_id=basis.identifier,
        labels=basis.mode_labels(),
    )


def project_chunks(chunks: Iterable[SpatioTemporalField], basis: Basis) -> CoefficientSeries:
    """Project a chunked field and join the amplitudes in time order."""
    parts = [project(chunk, basis) for chunk in chunks]
    if not parts:
        raise InsufficientDataError("no snapshots to project")
    return CoefficientSeries(
        times=np.concatenate([p.times for p in parts]),
        values=np.concatenate([p.values for p in parts], axis=1),
        basis_id=basis.identifier,
        labels=basis.mode_labels(),
    )


def reconstruct(series: CoefficientSeries, basis: Basis, grid: np.ndarray) -> SpatioTemporalField:
    """u_G(x, t) = sum_k a_k(t) phi_k(x) on the given grid."""
    if series.n != basis.size:
        raise InvalidInputError(
            f"series has {series.n} components but the basis has {basis.size} modes"
        )
    grid = np.asarray(grid, dtype=float)
    modes = basis.evaluate(grid)
    return SpatioTemporalField(
        grid=grid, times=series.times, values=modes.T @ series.values, L=basis.L
    )
