"""Galerkin quadratic models of the KSE and their simulation.

This module handles:
1. Fourier-Galerkin models from exact trigonometric triple integrals
2. POD-Galerkin models by quadrature of the Fourier-represented modes
3. Magnitude thresholding of a model, optionally refitted on data
4. RK4 plus additive Euler–Maruyama simulation of quadratic SDEs
"""

import logging
import math
from typing import Optional

import numpy as np

from src.errors import BlowUpError, InvalidInputError
from src.models.causal import (
    FeatureLibrary,
    FitOptions,
    ModelStructure,
    StrategyKind,
    ThresholdRecord,
    ThresholdStrategy,
)
from src.models.kse import KseParams
from src.models.modal import Basis, BasisKind, CoefficientSeries
from src.models.quadratic import ModelProvenance, QuadraticModel, monomial_pairs
from src.numerics.basis import fourier_basis
from src.numerics.mle import fit_mle

logger = logging.getLogger(__name__)

QUADRATURE_POINTS = 512
BLOW_UP_LIMIT = 1e8
NOISE_BLOCK = 4096


def aggregate_monomials(T: np.ndarray) -> np.ndarray:
    """Fold T[i, j, k] (coefficient of a_j a_k in equation i) onto j <= k.

    The coefficient of a_j a_k, j < k, is T[i, j, k] + T[i, k, j].

    Returns:
        n x n(n+1)/2 matrix in monomial_pairs order
    """
    n = T.shape[0]
    J, K = monomial_pairs(n)
    folded = T[:, J, K] + T[:, K, J]
    diagonal = J == K
    folded[:, diagonal] = T[:, J[diagonal], K[diagonal]]
    return folded


def _from_dense(
    linear: np.ndarray,
    quadratic: np.ndarray,
    provenance: ModelProvenance,
    basis_id: str,
) -> QuadraticModel:
    theta = np.concatenate([linear, quadratic], axis=1)
    return QuadraticModel.from_coefficients(theta, provenance, basis_id=basis_id)


def fourier_galerkin(N: int, params: KseParams) -> QuadraticModel:
    """Galerkin projection of the KSE onto the first 2N Fourier eigenmodes.

    Each mode is a pair of exponentials exp(+-i n kappa x) with unit
    factors 1 (cos) or -+i (sin); triple integrals vanish unless the
    frequencies sum to zero and then equal L. The unit sums are exact
    small integers, so structurally zero coefficients are exactly zero.
    """
    basis = fourier_basis(N, params)
    n = basis.size
    freq = np.array([label[1] for label in basis.labels], dtype=float)
    is_sin = np.array([label[0] == 1 for label in basis.labels])

    signs = np.array([1.0, -1.0])
    # units[m, a]: unit factor of mode m at frequency signs[a] * freq[m]
    units = np.where(
        is_sin[:, None], np.array([-1j, 1j])[None, :], np.array([1.0 + 0j, 1.0 + 0j])[None, :]
    )

    # axes: i, j, k, a (sign for j), b (sign for k), c (sign for i)
    s_i = (signs[None, :] * freq[:, None])[:, None, None, None, None, :]
    s_j = (signs[None, :] * freq[:, None])[None, :, None, :, None, None]
    s_k = (signs[None, :] * freq[:, None])[None, None, :, None, :, None]
    u_i = units[:, None, None, None, None, :]
    u_j = units[None, :, None, :, None, None]
    u_k = units[None, None, :, None, :, None]

    resonant = (s_i + s_j + s_k) == 0
    terms = np.where(resonant, u_j * (1j * s_k) * u_k * u_i, 0.0)
    unit_sums = terms.sum(axis=(3, 4, 5)).real

    # B(u, v) = -gamma u v_x; each exponential carries sqrt(2/L)/2
    kappa = 2.0 * np.pi / params.L
    scale = -params.gamma * params.L * kappa * (math.sqrt(2.0 / params.L) / 2.0) ** 3
    quadratic = scale * aggregate_monomials(unit_sums)

    model = _from_dense(
        np.diag(basis.eigenvalues), quadratic, ModelProvenance.FOURIER_GALERKIN, basis.identifier
    )
    logger.info(f"✅ Fourier-Galerkin model: n={n}, {model.term_count} terms")
    return model


def pod_galerkin(basis: Basis, params: KseParams) -> QuadraticModel:
    """Galerkin projection of the KSE onto a POD basis.

    Mode derivatives come from the Fourier representation; inner products
    use the rectangle rule on a 512-point grid, exact for the truncations.

    Raises:
        InvalidInputError: if the basis is not a POD basis
    """
    if basis.kind != BasisKind.POD:
        raise InvalidInputError(f"pod_galerkin needs a POD basis, got {basis.kind}")
    if 3 * basis.max_wavenumber >= QUADRATURE_POINTS:
        raise InvalidInputError("basis truncation too fine for the quadrature grid")

    grid = np.arange(QUADRATURE_POINTS) * basis.L / QUADRATURE_POINTS
    weight = basis.L / QUADRATURE_POINTS
    phi = basis.evaluate(grid)
    phi_x = basis.evaluate(grid, derivative=1)
    operator = -params.nu * basis.evaluate(grid, derivative=4) - params.D * basis.evaluate(grid, derivative=2)

    linear = weight * phi @ operator.T
    T = -params.gamma * weight * np.einsum("iq,jq,kq->ijk", phi, phi, phi_x, optimize=True)
    model = _from_dense(linear, aggregate_monomials(T), ModelProvenance.POD_GALERKIN, basis.identifier)
    logger.info(f"✅ POD-Galerkin model: n={basis.size}, {model.term_count} terms")
    return model


def quadratic_energy_residual(model: QuadraticModel, samples: int = 1000, seed: int = 0) -> float:
    """Largest |a . Q(a)| / (|a|^3 max|coef|) over random states."""
    rng = np.random.default_rng(seed)
    states = rng.standard_normal((model.n, samples))
    J, K = monomial_pairs(model.n)
    quadratic = model.coefficient_matrix()[:, model.n :]
    top = np.max(np.abs(quadratic)) if quadratic.size else 0.0
    if top == 0.0:
        return 0.0
    energy = np.sum(states * (quadratic @ (states[J] * states[K])), axis=0)
    norms = np.linalg.norm(states, axis=0)
    return float(np.max(np.abs(energy) / (norms**3 * top)))


def threshold_model(
    model: QuadraticModel,
    sparsity_fraction: float,
    training: Optional[CoefficientSeries] = None,
    opts: Optional[FitOptions] = None,
    n_keep: Optional[int] = None,
) -> QuadraticModel:
    """Keep the largest-magnitude drift terms of a model.

    ceil((1 - sparsity_fraction) * term_count) terms survive, ranked by
    |coefficient| with ties going to the smaller library index. With
    training data the surviving structure is refitted by maximum likelihood.

    Args:
        model: source model
        sparsity_fraction: share of terms to drop, in [0, 1)
        training: optional series for the refit
        opts: fit options for the refit
        n_keep: explicit number of terms to keep, overriding the fraction

    Returns:
        thresholded model
    """
    if not 0.0 <= sparsity_fraction < 1.0:
        raise InvalidInputError(f"sparsity fraction must lie in [0, 1), got {sparsity_fraction}")
    theta = model.coefficient_matrix()
    n, M = theta.shape
    # the constant acts as an extra library column placed first
    full = np.concatenate([model.constant[:, None], theta], axis=1)
    rows, cols = np.nonzero(full)
    total = rows.size
    if total == 0:
        raise InvalidInputError("model has no terms to threshold")

    keep = n_keep if n_keep is not None else math.ceil((1.0 - sparsity_fraction) * total - 1e-9)
    keep = max(0, min(keep, total))
    order = np.lexsort((rows, cols, -np.abs(full[rows, cols])))[:keep]
    mask = np.zeros_like(full, dtype=bool)
    mask[rows[order], cols[order]] = True

    empty = np.flatnonzero(~mask.any(axis=1))
    for equation in empty:
        logger.warning(f"⚠️ Equation {equation + 1} lost all its drift terms; it is pure noise now")
    logger.info(f"Thresholded model keeps {keep} of {total} terms")

    if training is not None:
        structure = ModelStructure(
            mask=mask[:, 1:],
            threshold_record=ThresholdRecord(
                strategy=ThresholdStrategy(kind=StrategyKind.GLOBAL_SPARSITY, value=sparsity_fraction),
                selected=int(mask[:, 1:].sum()),
            ),
        )
        fit_opts = opts or FitOptions()
        refit = fit_mle(structure, FeatureLibrary(n=n), training, fit_opts)
        return refit.model_copy(update={"provenance": ModelProvenance.THRESHOLDED})

    kept = np.where(mask, full, 0.0)
    return QuadraticModel.from_coefficients(
        kept[:, 1:],
        ModelProvenance.THRESHOLDED,
        constant=kept[:, 0],
        noise=model.noise,
        basis_id=model.basis_id,
    )


def simulate_model(
    model: QuadraticModel,
    a0: np.ndarray,
    t_end: float,
    dt: float,
    seed: int = 0,
    save_stride: int = 1,
    t_start: float = 0.0,
) -> CoefficientSeries:
    """Integrate da = f(a) dt + sigma dW by RK4 plus additive noise.

    a^{j+1} = RK4(f, a^j, dt) + sigma sqrt(dt) xi_j, xi_j drawn from a
    generator seeded with seed. The initial state and every save_stride-th
    step are saved.

    Raises:
        BlowUpError: if |a| exceeds 1e8 or becomes non-finite
    """
    if dt <= 0 or t_end <= 0:
        raise InvalidInputError("dt and t_end must be positive")
    if save_stride < 1:
        raise InvalidInputError("save_stride must be positive")
    a = np.asarray(a0, dtype=float).copy()
    if a.shape != (model.n,):
        raise InvalidInputError(f"a0 must have length {model.n}")

    drift = model.drift_function()
    sigma = model.noise
    noisy = bool(np.any(sigma))
    rng = np.random.default_rng(seed)
    sqrt_dt = math.sqrt(dt)
    n_steps = int(round(t_end / dt))
    n_saved = n_steps // save_stride + 1

    saved = np.empty((model.n, n_saved))
    saved[:, 0] = a
    block = np.empty((0, sigma.shape[1]))
    last_stable = t_start
    half = 0.5 * dt

    for step in range(1, n_steps + 1):
        k1 = drift(a)
        k2 = drift(a + half * k1)
        k3 = drift(a + half * k2)
        k4 = drift(a + dt * k3)
        a = a + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if noisy:
            index = (step - 1) % NOISE_BLOCK
            if index == 0:
                block = rng.standard_normal((NOISE_BLOCK, sigma.shape[1]))
            a = a + sqrt_dt * (sigma @ block[index])
        time = t_start + step * dt
        if not np.all(np.isfinite(a)) or np.linalg.norm(a) > BLOW_UP_LIMIT:
            raise BlowUpError(f"model state left the admissible range at t={time:.6g}", last_stable)
        last_stable = time
        if step % save_stride == 0:
            saved[:, step // save_stride] = a

    times = t_start + dt * save_stride * np.arange(n_saved)
    return CoefficientSeries(times=times, values=saved, basis_id=model.basis_id)
