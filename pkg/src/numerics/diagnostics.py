"""Statistics and dynamical diagnostics for judging ROM fidelity.

This module handles:
1. Modal energy spectra, kinetic-energy densities and autocorrelations
2. Leading Lyapunov exponents of quadratic models by QR renormalization
3. Local extrema of kinetic-energy series and parameter sweeps over nu
4. Relative errors of assimilated modes and coefficient magnitude shares
"""

from concurrent.futures import ThreadPoolExecutor
import logging
import math
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import signal

from src.config.settings import resolve_threads
from src.errors import BlowUpError, InvalidInputError
from src.models.kse import KseParams
from src.models.modal import CoefficientSeries
from src.models.quadratic import QuadraticModel
from src.models.reports import BifurcationPoint, DensityReport, LyapunovReport, SpectrumReport
from src.numerics.spectral_kse import cosine_initial_condition, kinetic_energy, simulate_kse

logger = logging.getLogger(__name__)

BLOW_UP_LIMIT = 1e8

EnergySimulator = Callable[[KseParams, float, float], np.ndarray]


def _labels(series: CoefficientSeries) -> list[str]:
    if series.labels is not None:
        return list(series.labels)
    return [f"a{k + 1}" for k in range(series.n)]


def energy_spectrum(series: CoefficientSeries, window: Optional[tuple[float, float]] = None) -> SpectrumReport:
    """Time-averaged modal energies E_k = mean of a_k^2 over a window.

    Raises:
        InvalidInputError: if the window lies outside the series or is empty
    """
    if window is None:
        window = (float(series.times[0]), float(series.times[-1]))
    t0, t1 = window
    if t1 < t0:
        raise InvalidInputError(f"window end {t1} precedes its start {t0}")
    if t0 < series.times[0] - 1e-9 or t1 > series.times[-1] + 1e-9:
        raise InvalidInputError(
            f"window [{t0}, {t1}] is outside the series range "
            f"[{series.times[0]}, {series.times[-1]}]"
        )
    part = series.window(t0, t1) if len(series) > 1 else series
    if len(part) == 0:
        raise InvalidInputError("no samples inside the averaging window")
    energies = np.mean(part.values**2, axis=1)
    return SpectrumReport(labels=_labels(series), energies=energies, window=(t0, t1))


def kinetic_energy_series(series: CoefficientSeries) -> np.ndarray:
    """E(t) = sum_k a_k(t)^2 for orthonormal modal amplitudes."""
    return np.sum(series.values**2, axis=0)


def pdf_estimate(samples: np.ndarray, bins: int = 100) -> DensityReport:
    """Histogram density on equal-width bins over [min, max]."""
    samples = np.asarray(samples, dtype=float).ravel()
    if bins < 1:
        raise InvalidInputError("bins must be positive")
    if samples.size < 2 or np.ptp(samples) == 0.0:
        raise InvalidInputError("a density needs at least two distinct samples")
    density, edges = np.histogram(samples, bins=bins, density=True)
    return DensityReport(edges=edges, density=density)


def acf(samples: np.ndarray, max_lag: int) -> np.ndarray:
    """Normalized autocorrelation for lags 0..max_lag.

    Uses the biased autocovariance (divided by N) computed by FFT, so
    ACF(0) = 1 exactly.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if not 0 <= max_lag < x.size:
        raise InvalidInputError(f"max_lag must lie in [0, {x.size}), got {max_lag}")
    x = x - x.mean()
    variance = float(np.dot(x, x))
    if variance == 0.0:
        raise InvalidInputError("autocorrelation of a constant series is undefined")
    full = signal.correlate(x, x, mode="full", method="fft")
    lags = full[x.size - 1 : x.size + max_lag]
    out = lags / variance
    out[0] = 1.0
    return out


def local_extrema(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Strict local minima and maxima by a 3-point stencil.

    Returns:
        (minima, maxima) values in time order
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size < 3:
        return np.empty(0), np.empty(0)
    left, mid, right = v[:-2], v[1:-1], v[2:]
    minima = mid[(mid < left) & (mid < right)]
    maxima = mid[(mid > left) & (mid > right)]
    return minima, maxima


def _kse_energy(params: KseParams, burn_in: float, window: float) -> np.ndarray:
    field = simulate_kse(
        params,
        cosine_initial_condition(params),
        t_end=burn_in + window,
        t_start_save=burn_in,
    )
    return kinetic_energy(field)


def bifurcation_extrema(
    params_sweep: Sequence[KseParams],
    burn_in: float,
    window: float,
    simulate: Optional[EnergySimulator] = None,
    threads: Optional[int] = None,
) -> list[BifurcationPoint]:
    """Local extrema of the kinetic energy for each nu in a sweep.

    Args:
        params_sweep: parameter sets, typically differing only in nu
        burn_in: discarded transient length
        window: length of the analysed E(t) series
        simulate: returns E(t) for (params, burn_in, window); the full KSE
            from a cosine initial condition when None
        threads: worker threads (CROM_THREADS when None)

    Returns:
        one BifurcationPoint per sweep entry, in sweep order
    """
    if not params_sweep:
        raise InvalidInputError("empty parameter sweep")
    if burn_in < 0 or window <= 0:
        raise InvalidInputError("burn_in must be non-negative and window positive")
    run = simulate or _kse_energy

    def evaluate(params: KseParams) -> BifurcationPoint:
        minima, maxima = local_extrema(run(params, burn_in, window))
        return BifurcationPoint(nu=params.nu, minima=minima, maxima=maxima)

    logger.info(f"🚀 Bifurcation sweep over {len(params_sweep)} values of nu")
    with ThreadPoolExecutor(max_workers=resolve_threads(threads)) as pool:
        points = list(pool.map(evaluate, params_sweep))
    for point in points:
        logger.info(f"nu={point.nu:.4g}: {point.distinct_count} distinct extrema")
    return points


def _hessian_tensor(model: QuadraticModel) -> np.ndarray:
    """H with J(a) = linear + H @ a."""
    n = model.n
    H = np.zeros((n, n, n))
    if model.quad_terms.size:
        i, j, k = model.quad_terms.T
        np.add.at(H, (i, j, k), model.quad_coefs)
        np.add.at(H, (i, k, j), model.quad_coefs)
    return H


def lyapunov_spectrum(
    model: QuadraticModel,
    k: int,
    t_window: float,
    dt: float,
    renorm_stride: int = 10,
    a0: Optional[np.ndarray] = None,
    t_transient: float = 0.0,
    seed: int = 0,
) -> LyapunovReport:
    """Leading k Lyapunov exponents of the model drift (noise ignored).

    The state and k tangent vectors advance together by RK4; tangents are
    re-orthonormalized by QR every renorm_stride steps and the logs of
    |diag R| are averaged over t_window.

    Raises:
        BlowUpError: if the trajectory leaves the admissible range
    """
    n = model.n
    if not 1 <= k <= n:
        raise InvalidInputError(f"k must satisfy 1 <= k <= {n}, got {k}")
    if dt <= 0 or t_window <= 0 or renorm_stride < 1:
        raise InvalidInputError("dt, t_window and renorm_stride must be positive")

    drift = model.drift_function()
    linear = model.linear.copy()
    H = _hessian_tensor(model)

    if a0 is None:
        a = 0.1 * np.random.default_rng(seed).standard_normal(n)
    else:
        a = np.asarray(a0, dtype=float).copy()
        if a.shape != (n,):
            raise InvalidInputError(f"a0 must have length {n}")

    half = 0.5 * dt

    def rates(state: np.ndarray, tangents: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return drift(state), (linear + H @ state) @ tangents

    def advance(state: np.ndarray, tangents: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        k1, l1 = rates(state, tangents)
        k2, l2 = rates(state + half * k1, tangents + half * l1)
        k3, l3 = rates(state + half * k2, tangents + half * l2)
        k4, l4 = rates(state + dt * k3, tangents + dt * l3)
        return (
            state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4),
            tangents + (dt / 6.0) * (l1 + 2.0 * l2 + 2.0 * l3 + l4),
        )

    def check(state: np.ndarray, time: float) -> None:
        if not np.all(np.isfinite(state)) or np.linalg.norm(state) > BLOW_UP_LIMIT:
            raise BlowUpError(f"trajectory left the admissible range at t={time:.6g}", time - dt)

    for step in range(int(round(t_transient / dt))):
        k1 = drift(a)
        k2 = drift(a + half * k1)
        k3 = drift(a + half * k2)
        k4 = drift(a + dt * k3)
        a = a + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        check(a, (step + 1) * dt)

    V = np.eye(n)[:, :k]
    sums = np.zeros(k)
    n_steps = max(renorm_stride, int(round(t_window / dt)))
    n_steps -= n_steps % renorm_stride
    logger.info(f"🚀 Lyapunov exponents: k={k}, {n_steps} steps of dt={dt:.3g}")
    for step in range(1, n_steps + 1):
        a, V = advance(a, V)
        if step % renorm_stride == 0:
            check(a, t_transient + step * dt)
            V, R = np.linalg.qr(V)
            sums += np.log(np.abs(np.diag(R)))

    exponents = np.sort(sums / (n_steps * dt))[::-1]
    logger.info(f"✅ Leading exponents {np.array2string(exponents[:3], precision=5)}")
    return LyapunovReport(
        exponents=exponents, t_window=n_steps * dt, dt=dt, renorm_stride=renorm_stride
    )


def assimilation_errors(
    truth: CoefficientSeries,
    posterior_mean: np.ndarray,
    mode_range: Sequence[int],
) -> np.ndarray:
    """Per-mode relative L2 errors ||truth - mean|| / ||truth||.

    Args:
        truth: true amplitudes of the modes being assimilated, aligned with
            the posterior sample times
        posterior_mean: (n_modes, Nt) posterior means, row m estimating
            truth row m
        mode_range: 0-based rows to evaluate

    Raises:
        InvalidInputError: if shapes differ or a truth mode has zero norm
    """
    estimate = np.asarray(posterior_mean, dtype=float)
    if estimate.shape != truth.values.shape:
        raise InvalidInputError(
            f"posterior shape {estimate.shape} differs from truth {truth.values.shape}"
        )
    rows = np.asarray(list(mode_range), dtype=int)
    reference = np.linalg.norm(truth.values[rows], axis=1)
    if np.any(reference == 0.0):
        raise InvalidInputError("relative error is undefined for a zero truth mode")
    return np.linalg.norm(truth.values[rows] - estimate[rows], axis=1) / reference


def coefficient_magnitude_fraction(model: QuadraticModel, lo: float, hi: float) -> float:
    """Share of nonzero quadratic coefficients with lo <= |c| <= hi."""
    magnitudes = np.abs(model.quad_coefs[model.quad_coefs != 0.0])
    if magnitudes.size == 0:
        return math.nan
    inside = (magnitudes >= lo) & (magnitudes <= hi)
    return float(inside.mean())
