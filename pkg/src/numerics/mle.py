"""Closed-form maximum-likelihood fits of quadratic SDE models.

Drift coefficients are per-equation least squares over the selected
library columns, solved by QR. The noise covariance is the quadratic
variation of one-step forward residuals.
"""

from concurrent.futures import ThreadPoolExecutor
import logging
from typing import Optional

import numpy as np
from scipy import linalg

from src.config.settings import resolve_threads
from src.errors import IllPosedFitError, InvalidInputError
from src.models.causal import FeatureLibrary, FitOptions, ModelStructure
from src.models.modal import CoefficientSeries
from src.models.quadratic import ModelProvenance, QuadraticModel, monomial_pairs
from src.models.reports import ResidualReport
from src.numerics.causal import finite_diff_derivatives

logger = logging.getLogger(__name__)

RANK_TOLERANCE = 1e-12
JITTER_START = 1e-12
JITTER_LIMIT = 1e-6
RESIDUAL_BLOCK = 50_000


def _design_matrix(states: np.ndarray, columns: np.ndarray, include_constant: bool) -> np.ndarray:
    """Sample-by-feature matrix for the chosen library columns."""
    n = states.shape[0]
    J, K = monomial_pairs(n)
    parts = []
    for column in columns:
        if column < n:
            parts.append(states[column])
        else:
            parts.append(states[J[column - n]] * states[K[column - n]])
    if include_constant:
        parts.append(np.ones(states.shape[1]))
    if not parts:
        return np.empty((states.shape[1], 0))
    return np.column_stack(parts)


def _solve_equation(X: np.ndarray, y: np.ndarray, equation: int) -> np.ndarray:
    """Least squares by QR; rank deficiency is treated with ridge rows."""
    s = X.shape[1]
    if s == 0:
        return np.zeros(0)
    if X.shape[0] < s:
        raise IllPosedFitError(f"{s} terms but only {X.shape[0]} samples", equation)
    Q, R = linalg.qr(X, mode="economic", check_finite=False)
    diagonal = np.abs(np.diag(R))
    if diagonal.min() > RANK_TOLERANCE * diagonal.max():
        return linalg.solve_triangular(R, Q.T @ y, check_finite=False)

    scale = float(np.sum(X * X)) / s
    if not np.isfinite(scale) or scale <= 0:
        raise IllPosedFitError("feature submatrix is zero or non-finite", equation)
    jitter = JITTER_START * scale
    while jitter <= JITTER_LIMIT * scale * (1 + 1e-9):
        augmented = np.vstack([X, np.sqrt(jitter) * np.eye(s)])
        Q, R = linalg.qr(augmented, mode="economic", check_finite=False)
        diagonal = np.abs(np.diag(R))
        if diagonal.min() > RANK_TOLERANCE * diagonal.max():
            logger.warning(f"⚠️ Equation {equation} needed ridge jitter {jitter:.3e}")
            rhs = np.concatenate([y, np.zeros(s)])
            return linalg.solve_triangular(R, Q.T @ rhs, check_finite=False)
        jitter *= 10.0
    raise IllPosedFitError("feature submatrix is rank deficient after jitter", equation)


def fit_coefficients(
    mask: np.ndarray,
    states: np.ndarray,
    targets: np.ndarray,
    include_constant: bool = False,
    threads: Optional[int] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Regress each target row on its selected library columns.

    Args:
        mask: n x M boolean structure
        states: (n, N) states a(t_j)
        targets: (n, N) regression targets for each equation
        include_constant: also fit a constant per equation
        threads: worker threads (CROM_THREADS when None)

    Returns:
        the n x M coefficient matrix and the constant vector
    """
    mask = np.asarray(mask, dtype=bool)
    n = states.shape[0]
    if targets.shape != states.shape:
        raise InvalidInputError("states and targets must have equal shapes")
    if mask.shape != (n, n + n * (n + 1) // 2):
        raise InvalidInputError(f"structure shape {mask.shape} does not match n={n}")

    def solve(i: int) -> np.ndarray:
        columns = np.flatnonzero(mask[i])
        X = _design_matrix(states, columns, include_constant)
        return _solve_equation(X, targets[i], i + 1)

    with ThreadPoolExecutor(max_workers=resolve_threads(threads)) as pool:
        solutions = list(pool.map(solve, range(n)))

    theta = np.zeros(mask.shape)
    constant = np.zeros(n)
    for i, solution in enumerate(solutions):
        columns = np.flatnonzero(mask[i])
        theta[i, columns] = solution[: columns.size]
        if include_constant:
            constant[i] = solution[-1]
    return theta, constant


def quadratic_variation(model: QuadraticModel, series: CoefficientSeries) -> np.ndarray:
    """Sigma = (1 / (K dt)) sum_j r_j r_j^T for r_j = a^{j+1} - a^j - f(a^j) dt."""
    drift = model.drift_function()
    a = series.values
    dt = series.dt
    K = a.shape[1] - 1
    total = np.zeros((model.n, model.n))
    for begin in range(0, K, RESIDUAL_BLOCK):
        stop = min(begin + RESIDUAL_BLOCK, K)
        current = a[:, begin:stop]
        residual = a[:, begin + 1 : stop + 1] - current - drift(current) * dt
        total += residual @ residual.T
    return total / (K * dt)


def noise_from_covariance(covariance: np.ndarray) -> np.ndarray:
    """Square root sigma with sigma sigma^T = covariance.

    Cholesky factor when positive definite, otherwise the eigen square root
    truncated to the numerical rank; a zero covariance gives sigma = 0.
    """
    n = covariance.shape[0]
    symmetric = 0.5 * (covariance + covariance.T)
    try:
        return linalg.cholesky(symmetric, lower=True)
    except linalg.LinAlgError:
        pass
    eigenvalues, eigenvectors = linalg.eigh(symmetric)
    top = eigenvalues.max() if eigenvalues.size else 0.0
    if top <= 0:
        return np.zeros((n, n))
    keep = eigenvalues > RANK_TOLERANCE * top
    logger.info(f"Noise covariance has numerical rank {int(keep.sum())} of {n}")
    return eigenvectors[:, keep] * np.sqrt(eigenvalues[keep])[None, :]


def fit_mle(
    structure: ModelStructure,
    lib: FeatureLibrary,
    series: CoefficientSeries,
    opts: FitOptions,
    threads: Optional[int] = None,
) -> QuadraticModel:
    """Fit drift coefficients and noise amplitude for a selected structure.

    Targets are finite-difference derivatives minus the quadratic terms of
    the known model; those terms are added back into the returned model.
    The known model's linear and constant parts are ignored.

    Raises:
        IllPosedFitError: if an equation's regression has no unique solution
    """
    if structure.mask.shape != (lib.n, lib.M) or series.n != lib.n:
        raise InvalidInputError("structure, library and series dimensions differ")
    known = opts.known_Q
    if known is not None and known.n != lib.n:
        raise InvalidInputError("known model dimension differs from the library")

    window = finite_diff_derivatives(series, opts.derivative_scheme)
    states = series.values[:, window.start : window.stop]
    targets = window.values
    if known is not None:
        targets = targets - known.quadratic_part(states)

    logger.info(
        f"🚀 Fitting {structure.term_count} terms on {states.shape[1]} samples "
        f"({opts.derivative_scheme} differences)"
    )
    theta, constant = fit_coefficients(
        structure.mask, states, targets, opts.include_constant, threads
    )
    if known is not None:
        theta[:, lib.n :] += known.coefficient_matrix()[:, lib.n :]

    drift_only = QuadraticModel.from_coefficients(
        theta, ModelProvenance.LEARNED, constant=constant, basis_id=series.basis_id
    )
    sigma = noise_from_covariance(quadratic_variation(drift_only, series))
    logger.info(f"✅ Fitted model with {drift_only.term_count} terms, max |sigma| {np.max(np.abs(sigma)):.3e}")
    return drift_only.model_copy(update={"noise": sigma})


def residual_stats(
    model: QuadraticModel, series: CoefficientSeries, opts: FitOptions
) -> ResidualReport:
    """Mean and covariance of da/dt - f(a) over a series.

    Equations whose |mean| exceeds 0.1 std are flagged as candidates for a
    constant forcing term.
    """
    if model.n != series.n:
        raise InvalidInputError("model and series dimensions differ")
    window = finite_diff_derivatives(series, opts.derivative_scheme)
    states = series.values[:, window.start : window.stop]
    residual = window.values - model.drift(states)
    mean = residual.mean(axis=1)
    covariance = np.atleast_2d(np.cov(residual))
    std = np.sqrt(np.diag(covariance))
    flagged = [int(i) for i in np.flatnonzero(np.abs(mean) > 0.1 * std)]
    for i in flagged:
        logger.info(f"Equation {i + 1} residual mean {mean[i]:.3e} suggests a constant forcing")
    return ResidualReport(mean=mean, covariance=covariance, flagged=flagged)
