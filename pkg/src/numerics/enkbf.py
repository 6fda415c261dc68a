"""Ensemble Kalman–Bucy filtering of unobserved ROM modes.

The state is split into observed modes y (the first r) and unobserved
modes z. Each ensemble member follows

    dz = [g2(y, z) - N (g1(y, z) - dy/dt)] dt + sigma22 dW2 - N sigma11 dW1

where the gain N pairs z-deviations with g1-deviations under the metric
of the observation noise sigma11 sigma11^T.
"""

import logging
import math
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy import linalg

from src.errors import DivergenceError, InvalidInputError, RegularizationError
from src.models.assimilation import (
    AssimilationResult,
    EnsembleState,
    ObservationStream,
    RegularizationPolicy,
)
from src.models.modal import CoefficientSeries
from src.models.quadratic import QuadraticModel

logger = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e8
NOISE_BLOCK = 1000

BlockDrift = Callable[[np.ndarray, np.ndarray], np.ndarray]


class ModelBlocks(NamedTuple):
    """Observed/unobserved partition of a model."""

    g1: BlockDrift
    g2: BlockDrift
    sigma11: np.ndarray
    sigma22: np.ndarray


def _stack(y: np.ndarray, z: np.ndarray) -> np.ndarray:
    if z.ndim == 1:
        return np.concatenate([y, z])
    return np.concatenate([np.broadcast_to(y[:, None], (y.size, z.shape[1])), z], axis=0)


def padded_noise(model: QuadraticModel) -> np.ndarray:
    """Noise matrix padded with zero columns to n x n when d < n."""
    sigma = model.noise
    if sigma.shape[1] >= model.n:
        return sigma
    return np.hstack([sigma, np.zeros((model.n, model.n - sigma.shape[1]))])


def split_model(model: QuadraticModel, r: int) -> ModelBlocks:
    """Split a model into observed (first r) and unobserved blocks.

    Off-diagonal noise blocks are dropped.
    """
    if not 1 <= r < model.n:
        raise InvalidInputError(f"observed count must satisfy 1 <= r < {model.n}, got {r}")
    drift = model.drift_function()
    sigma = padded_noise(model)

    def g1(y: np.ndarray, z: np.ndarray) -> np.ndarray:
        return drift(_stack(y, z))[:r]

    def g2(y: np.ndarray, z: np.ndarray) -> np.ndarray:
        return drift(_stack(y, z))[r:]

    return ModelBlocks(g1, g2, sigma[:r, :r], sigma[r:, r:])


def enkbf_gain(
    ensemble: EnsembleState,
    y_obs_t: np.ndarray,
    drift: BlockDrift,
    noise: np.ndarray,
    reg: RegularizationPolicy = RegularizationPolicy(),
) -> np.ndarray:
    """Gain (1/(p-1)) sum_l (z_l - zbar)(g_l - gbar)^T C_reg^{-1}.

    g_l = drift(y_obs_t, z_l) and C_reg = noise noise^T + eps I.

    Raises:
        InvalidInputError: fewer than two members
        RegularizationError: the gain is not finite
    """
    Z = ensemble.members
    p = Z.shape[1]
    if p < 2:
        raise InvalidInputError("the gain needs at least two ensemble members")
    G = np.atleast_2d(drift(np.asarray(y_obs_t, dtype=float), Z))
    return _gain_from_values(Z, G, noise @ noise.T, reg)


def _gain_from_values(
    Z: np.ndarray, G: np.ndarray, covariance: np.ndarray, reg: RegularizationPolicy
) -> np.ndarray:
    p = Z.shape[1]
    dz = Z - Z.mean(axis=1, keepdims=True)
    dg = G - G.mean(axis=1, keepdims=True)
    cross = dz @ dg.T / (p - 1)
    regularized = covariance + reg.epsilon(covariance) * np.eye(covariance.shape[0])
    gain = linalg.solve(regularized, cross.T, assume_a="pos", check_finite=False).T
    if not np.all(np.isfinite(gain)):
        raise RegularizationError("filter gain is not finite")
    return gain


def observation_stream(series: CoefficientSeries, r: int) -> ObservationStream:
    """Observe the first r amplitudes; derivatives by central differences."""
    if not 1 <= r <= series.n:
        raise InvalidInputError(f"cannot observe {r} of {series.n} components")
    y = series.values[:r]
    return ObservationStream(
        times=series.times,
        y_obs=y,
        y_dot_obs=np.gradient(y, series.dt, axis=1),
    )


def enkbf_run(
    model: QuadraticModel,
    obs: ObservationStream,
    r: int,
    p: int,
    z0_policy: str = "zero",
    seed: int = 0,
    reg: RegularizationPolicy = RegularizationPolicy(),
    z0: Optional[np.ndarray] = None,
) -> AssimilationResult:
    """Run the ensemble Kalman–Bucy filter along an observation stream.

    Members advance by Euler–Maruyama with the gain recomputed every step.
    Each member draws from its own child of SeedSequence(seed), so results
    do not depend on how the work is scheduled.

    Returns:
        posterior mean and per-component ensemble spread at every obs time

    Raises:
        DivergenceError: a member norm exceeds 1e8 or becomes non-finite
    """
    if obs.r != r:
        raise InvalidInputError(f"stream observes {obs.r} modes but r={r}")
    if p < 2:
        raise InvalidInputError("the ensemble needs at least two members")
    blocks = split_model(model, r)
    q = model.n - r

    if z0_policy == "zero":
        Z = np.zeros((q, p))
    elif z0_policy == "given":
        if z0 is None or np.shape(z0) != (q,):
            raise InvalidInputError(f"z0 of length {q} is required for the given policy")
        Z = np.tile(np.asarray(z0, dtype=float)[:, None], (1, p))
    else:
        raise InvalidInputError(f"unknown z0 policy {z0_policy}")

    drift = model.drift_function()
    sigma11, sigma22 = blocks.sigma11, blocks.sigma22
    R = sigma11 @ sigma11.T
    dt = obs.dt
    sqrt_dt = math.sqrt(dt)
    generators = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(p)]

    Nt = obs.times.size
    means = np.empty((q, Nt))
    spreads = np.empty((q, Nt))
    means[:, 0] = Z.mean(axis=1)
    spreads[:, 0] = Z.std(axis=1, ddof=1)
    noise = np.empty((0, model.n, p))

    logger.info(f"🚀 EnKBF with p={p}, r={r}, {Nt - 1} steps of dt={dt:.3g}")
    for j in range(Nt - 1):
        index = j % NOISE_BLOCK
        if index == 0:
            noise = np.stack([g.standard_normal((NOISE_BLOCK, model.n)) for g in generators], axis=2)
        y = obs.y_obs[:, j]
        F = drift(_stack(y, Z))
        G1, G2 = F[:r], F[r:]
        gain = _gain_from_values(Z, G1, R, reg)
        dW1 = sqrt_dt * noise[index, :r]
        dW2 = sqrt_dt * noise[index, r:]
        innovation = G1 - obs.y_dot_obs[:, j][:, None]
        Z = Z + (G2 - gain @ innovation) * dt + sigma22 @ dW2 - gain @ (sigma11 @ dW1)

        time = obs.times[j + 1]
        if not np.all(np.isfinite(Z)) or np.max(np.linalg.norm(Z, axis=0)) > DIVERGENCE_LIMIT:
            raise DivergenceError("ensemble member diverged", time)
        means[:, j + 1] = Z.mean(axis=1)
        spreads[:, j + 1] = Z.std(axis=1, ddof=1)

    logger.info("✅ EnKBF finished")
    return AssimilationResult(times=obs.times, mean=means, spread=spreads)


def kalman_bucy_reference(
    linear: np.ndarray,
    sigma: np.ndarray,
    r: int,
    obs: ObservationStream,
    m0: Optional[np.ndarray] = None,
    P0: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact Kalman–Bucy filter for da = A a dt + sigma dW with y = a[:r] observed.

    Integrated by forward Euler on the observation grid with dy = ydot dt:
        dm = (A21 y + A22 m) dt + K (dy - (A11 y + A12 m) dt), K = P A12^T R^{-1}
        dP = A22 P + P A22^T + S22 - P A12^T R^{-1} A12 P

    Returns:
        posterior means (n-r, Nt) and covariances (n-r, n-r, Nt)
    """
    n = linear.shape[0]
    q = n - r
    full_sigma = sigma if sigma.shape[1] >= n else np.hstack([sigma, np.zeros((n, n - sigma.shape[1]))])
    A11, A12 = linear[:r, :r], linear[:r, r:]
    A21, A22 = linear[r:, :r], linear[r:, r:]
    R_inv = linalg.inv(full_sigma[:r, :r] @ full_sigma[:r, :r].T)
    S22 = full_sigma[r:, r:] @ full_sigma[r:, r:].T

    m = np.zeros(q) if m0 is None else np.asarray(m0, dtype=float).copy()
    P = np.zeros((q, q)) if P0 is None else np.asarray(P0, dtype=float).copy()
    dt = obs.dt
    Nt = obs.times.size
    means = np.empty((q, Nt))
    covariances = np.empty((q, q, Nt))
    means[:, 0], covariances[:, :, 0] = m, P
    for j in range(Nt - 1):
        y = obs.y_obs[:, j]
        K = P @ A12.T @ R_inv
        innovation = obs.y_dot_obs[:, j] - (A11 @ y + A12 @ m)
        m = m + (A21 @ y + A22 @ m + K @ innovation) * dt
        P = P + (A22 @ P + P @ A22.T + S22 - P @ A12.T @ R_inv @ A12 @ P) * dt
        means[:, j + 1], covariances[:, :, j + 1] = m, P
    return means, covariances
