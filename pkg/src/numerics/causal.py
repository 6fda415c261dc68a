"""Causation entropy of library terms under a Gaussian approximation.

This module handles:
1. The linear plus quadratic feature library and its evaluation
2. Finite-difference time derivatives aligned with feature columns
3. Causation entropies from log-determinants of covariance submatrices
4. Structure selection by thresholds, sparsity levels or gaps
"""

from concurrent.futures import ThreadPoolExecutor
import logging
import math
from typing import NamedTuple, Optional

import numpy as np
from scipy import linalg

from src.config.settings import resolve_threads
from src.errors import DegenerateLibraryError, InsufficientDataError, InvalidInputError
from src.models.causal import (
    CausationMatrix,
    DerivativeScheme,
    FeatureLibrary,
    ModelStructure,
    StrategyKind,
    StructureComparison,
    ThresholdRecord,
    ThresholdStrategy,
)
from src.models.modal import CoefficientSeries
from src.models.quadratic import QuadraticModel, monomial_pairs

logger = logging.getLogger(__name__)

JITTER_START = 1e-12
JITTER_LIMIT = 1e-6
COVARIANCE_BLOCK = 20_000


class DerivativeWindow(NamedTuple):
    """Derivatives valid for sample indices start..stop-1."""

    values: np.ndarray
    start: int
    stop: int


def build_library(n: int) -> FeatureLibrary:
    """Library a_1..a_n followed by a_j a_k, j <= k, in lexicographic order."""
    if n < 1:
        raise InvalidInputError(f"library dimension must be positive, got {n}")
    return FeatureLibrary(n=n)


def library_features(values: np.ndarray) -> np.ndarray:
    """Evaluate the linear and quadratic monomials of an (n, Nt) array."""
    J, K = monomial_pairs(values.shape[0])
    return np.concatenate([values, values[J] * values[K]], axis=0)


def evaluate_library(lib: FeatureLibrary, series: CoefficientSeries) -> np.ndarray:
    """Feature matrix with row m holding f_m(a(t_j))."""
    if series.n != lib.n:
        raise InvalidInputError(f"series dimension {series.n} differs from library {lib.n}")
    return library_features(series.values)


def finite_diff_derivatives(
    series: CoefficientSeries, scheme: DerivativeScheme = DerivativeScheme.CENTRAL
) -> DerivativeWindow:
    """Time derivatives by central or forward differences.

    Central differences are valid on [1, Nt-1), forward ones on [0, Nt-1)
    (0-based, half-open).

    Raises:
        InsufficientDataError: too few samples for the scheme
    """
    a = series.values
    Nt = a.shape[1]
    if scheme == DerivativeScheme.CENTRAL:
        if Nt < 3:
            raise InsufficientDataError("central differences need at least 3 samples")
        return DerivativeWindow((a[:, 2:] - a[:, :-2]) / (2.0 * series.dt), 1, Nt - 1)
    if Nt < 2:
        raise InsufficientDataError("forward differences need at least 2 samples")
    return DerivativeWindow((a[:, 1:] - a[:, :-1]) / series.dt, 0, Nt - 1)


def _log_det(S: np.ndarray, index: np.ndarray, name: str) -> float:
    """Natural log-determinant of S[index, index] by Cholesky, with jitter."""
    sub = S[np.ix_(index, index)]
    dim = sub.shape[0]
    if dim == 0:
        return 0.0
    base = np.trace(sub) / dim
    jitter = 0.0
    while True:
        try:
            factor = linalg.cholesky(sub + jitter * np.eye(dim), lower=True, check_finite=False)
            diagonal = np.diag(factor)
            if np.all(diagonal > 0) and np.all(np.isfinite(diagonal)):
                if jitter:
                    logger.debug(f"{name} needed jitter {jitter:.3e}")
                return 2.0 * float(np.sum(np.log(diagonal)))
        except linalg.LinAlgError:
            pass
        jitter = JITTER_START * base if jitter == 0.0 else 10.0 * jitter
        if base <= 0 or jitter > JITTER_LIMIT * base * (1 + 1e-9):
            raise DegenerateLibraryError("Cholesky failed after jitter escalation", name)


def causation_entropy_from_covariance(
    S: np.ndarray,
    n_features: int,
    n_extra: int = 0,
    threads: Optional[int] = None,
    clamp: bool = True,
) -> CausationMatrix:
    """Causation entropies from a grand covariance.

    S is ordered as [features (M), targets (n), extra conditioning (E)].
    For target X, candidate Z = f_m and conditioning set Y (all other
    features plus the extra rows),
    C = (log det R_XY - log det R_Y - log det R_XYZ + log det R_YZ) / (2 ln 2).

    Args:
        S: grand covariance matrix
        n_features: number of library features M
        n_extra: number of extra conditioning rows E at the end
        threads: worker threads (CROM_THREADS when None)
        clamp: replace negative roundoff values by 0

    Returns:
        CausationMatrix of shape (n, M) in bits
    """
    S = np.asarray(S, dtype=float)
    M = n_features
    n = S.shape[0] - M - n_extra
    if n < 1 or S.shape != (S.shape[0], S.shape[0]):
        raise InvalidInputError("covariance layout does not match the feature count")
    if not np.all(np.isfinite(S)):
        raise InvalidInputError("covariance has non-finite entries")

    features = np.arange(M)
    extra = np.arange(M + n, M + n + n_extra)
    conditioning = [np.concatenate([np.delete(features, m), extra]) for m in range(M)]
    all_conditioning = np.concatenate([features, extra])

    with ThreadPoolExecutor(max_workers=resolve_threads(threads)) as pool:
        log_yz = _log_det(S, all_conditioning, "R_YZ")
        log_y = list(pool.map(lambda m: _log_det(S, conditioning[m], f"R_Y(m={m + 1})"), range(M)))
        log_xyz = list(
            pool.map(
                lambda i: _log_det(S, np.concatenate([[M + i], all_conditioning]), f"R_XYZ(i={i + 1})"),
                range(n),
            )
        )
        pairs = [(i, m) for i in range(n) for m in range(M)]
        log_xy = list(
            pool.map(
                lambda im: _log_det(
                    S,
                    np.concatenate([[M + im[0]], conditioning[im[1]]]),
                    f"R_XY(i={im[0] + 1}, m={im[1] + 1})",
                ),
                pairs,
            )
        )

    log_xy = np.array(log_xy).reshape(n, M)
    raw = 0.5 * (log_xy - np.array(log_y)[None, :] - np.array(log_xyz)[:, None] + log_yz) / math.log(2.0)
    min_raw = float(raw.min())
    if min_raw < 0:
        logger.debug(f"Smallest raw causation entropy {min_raw:.3e} bits")
    values = np.maximum(raw, 0.0) if clamp else raw
    return CausationMatrix(values=values, min_raw_value=min_raw)


def causation_entropy_matrix(
    features: np.ndarray,
    derivatives: np.ndarray,
    extra: Optional[np.ndarray] = None,
    threads: Optional[int] = None,
    clamp: bool = True,
) -> CausationMatrix:
    """Causation entropies of M features for n derivative targets.

    Raises:
        InsufficientDataError: fewer than M + n + 1 samples
    """
    features = np.atleast_2d(features)
    derivatives = np.atleast_2d(derivatives)
    blocks = [features, derivatives] + ([np.atleast_2d(extra)] if extra is not None else [])
    N = features.shape[1]
    if any(block.shape[1] != N for block in blocks):
        raise InvalidInputError("features, derivatives and extra rows need equal column counts")
    stacked_rows = sum(block.shape[0] for block in blocks)
    if N < stacked_rows + 1:
        raise InsufficientDataError(f"{N} samples cannot support {stacked_rows} variables")
    S = np.cov(np.concatenate(blocks, axis=0))
    n_extra = 0 if extra is None else np.atleast_2d(extra).shape[0]
    return causation_entropy_from_covariance(S, features.shape[0], n_extra, threads, clamp)


def training_covariance(
    series: CoefficientSeries,
    scheme: DerivativeScheme = DerivativeScheme.CENTRAL,
    known: Optional[QuadraticModel] = None,
    block: int = COVARIANCE_BLOCK,
) -> tuple[np.ndarray, int]:
    """Grand covariance of [features, derivatives, Q(a)] accumulated in blocks.

    Avoids materialising the full feature matrix for long series.

    Returns:
        the covariance and the number of samples used
    """
    window = finite_diff_derivatives(series, scheme)
    states = series.values[:, window.start : window.stop]
    N = states.shape[1]

    def rows(columns: slice) -> np.ndarray:
        parts = [library_features(states[:, columns]), window.values[:, columns]]
        if known is not None:
            parts.append(known.quadratic_part(states[:, columns]))
        return np.concatenate(parts, axis=0)

    shift = rows(slice(0, min(block, N))).mean(axis=1)
    total = np.zeros(shift.size)
    outer = np.zeros((shift.size, shift.size))
    for begin in range(0, N, block):
        chunk = rows(slice(begin, min(begin + block, N))) - shift[:, None]
        total += chunk.sum(axis=1)
        outer += chunk @ chunk.T
    mean = total / N
    covariance = (outer - N * np.outer(mean, mean)) / (N - 1)
    return covariance, N


def causation_entropy_from_series(
    series: CoefficientSeries,
    scheme: DerivativeScheme = DerivativeScheme.CENTRAL,
    known: Optional[QuadraticModel] = None,
    threads: Optional[int] = None,
    clamp: bool = True,
) -> CausationMatrix:
    """Causation-entropy matrix of the quadratic library on a training series.

    With a known model part, its quadratic terms evaluated on the data are
    added to every conditioning set.
    """
    lib = build_library(series.n)
    S, N = training_covariance(series, scheme, known)
    n_extra = 0 if known is None else series.n
    if N < S.shape[0] + 1:
        raise InsufficientDataError(f"{N} samples cannot support {S.shape[0]} variables")
    logger.info(f"🚀 Causation entropies for {series.n} x {lib.M} entries from {N} samples")
    cem = causation_entropy_from_covariance(S, lib.M, n_extra, threads, clamp)
    logger.info("✅ Causation entropies computed")
    return cem


def _top_mask(values: np.ndarray, count: int) -> tuple[np.ndarray, float]:
    """Mask of the count largest entries, ties to smaller (column, row)."""
    rows, cols = np.indices(values.shape)
    flat_rows, flat_cols, flat = rows.ravel(), cols.ravel(), values.ravel()
    order = np.lexsort((flat_rows, flat_cols, -flat))[:count]
    mask = np.zeros(values.shape, dtype=bool)
    mask[flat_rows[order], flat_cols[order]] = True
    cutoff = float(flat[order[-1]]) if count else float("inf")
    return mask, cutoff


def gap_cutoff(values: np.ndarray, floor: float) -> float:
    """Geometric midpoint of the largest log10 jump among values above floor."""
    candidates = np.sort(values[values > floor].ravel())[::-1]
    if candidates.size < 2:
        return floor
    logs = np.log10(candidates)
    jumps = logs[:-1] - logs[1:]
    top = int(np.argmax(jumps))
    return float(np.sqrt(candidates[top] * candidates[top + 1]))


def _keep_count(fraction: float, size: int) -> int:
    return math.ceil((1.0 - fraction) * size - 1e-9)


def select_structure(cem: CausationMatrix, strategy: ThresholdStrategy) -> ModelStructure:
    """Select model terms from causation entropies.

    Strategies:
        global_threshold: keep entries > value
        global_sparsity: keep the top (1 - value) n M entries
        per_equation_sparsity: keep the top (1 - value) M entries of each row
        gap: keep entries above the midpoint of the largest gap above value

    Ties go to the smaller library index.
    """
    values = cem.values
    n, M = values.shape
    cutoffs: list[float] = []

    if strategy.kind == StrategyKind.GLOBAL_THRESHOLD:
        mask = values > strategy.value
        cutoffs = [strategy.value]
    elif strategy.kind == StrategyKind.GLOBAL_SPARSITY:
        mask, cutoff = _top_mask(values, _keep_count(strategy.value, n * M))
        cutoffs = [cutoff]
    elif strategy.kind == StrategyKind.PER_EQUATION_SPARSITY:
        count = _keep_count(strategy.value, M)
        mask = np.zeros(values.shape, dtype=bool)
        for i in range(n):
            row_mask, cutoff = _top_mask(values[i : i + 1], count)
            mask[i] = row_mask[0]
            cutoffs.append(cutoff)
    else:
        cutoff = gap_cutoff(values, strategy.value)
        mask = values > cutoff
        cutoffs = [cutoff]

    selected = int(mask.sum())
    logger.info(f"Selected {selected} of {n * M} terms with {strategy.kind}")
    return ModelStructure(
        mask=mask,
        threshold_record=ThresholdRecord(strategy=strategy, cutoffs=cutoffs, selected=selected),
    )


def compare_structures(learned: np.ndarray, reference: np.ndarray) -> StructureComparison:
    """Count agreements between two n x M term masks."""
    learned = np.asarray(learned, dtype=bool)
    reference = np.asarray(reference, dtype=bool)
    if learned.shape != reference.shape:
        raise InvalidInputError("structures have different shapes")
    n = learned.shape[0]
    missed = reference & ~learned
    return StructureComparison(
        true_positives=int(np.sum(learned & reference)),
        false_positives=int(np.sum(learned & ~reference)),
        misses=int(missed.sum()),
        misses_all_quadratic=not bool(missed[:, :n].any()),
        reference_count=int(reference.sum()),
    )
