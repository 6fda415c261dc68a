"""Canned end-to-end experiments behind `repro`.

This module handles:
1. fourier-recovery: learn the Fourier-Galerkin ROM back from its own trajectory
2. pod-hierarchy: causation-based POD ROMs at several sparsities against POD-Galerkin
3. da-partial: EnKBF recovery of unobserved POD modes with two 90%-sparsity ROMs

Every experiment runs at full scale or, with --desk, at a reduced scale
that finishes on a workstation.
"""

import argparse
import json
import logging
from typing import Any, Callable, Iterator

import numpy as np

from src.cli.commands import emit, override, resolve_config, run_context
from src.cli.runtime import RunContext
from src.config.settings import RunConfig
from src.errors import BlowUpError, DivergenceError
from src.models.assimilation import RegularizationPolicy
from src.models.causal import (
    CausationMatrix,
    FeatureLibrary,
    FitOptions,
    StrategyKind,
    ThresholdStrategy,
)
from src.models.kse import KseParams, SpatioTemporalField
from src.models.modal import Basis, CoefficientSeries
from src.models.quadratic import QuadraticModel
from src.numerics.basis import (
    accumulate_covariance,
    pod_basis_from_covariance,
    pod_energy_fractions,
    project_chunks,
    reconstruct,
)
from src.numerics.causal import (
    build_library,
    causation_entropy_from_series,
    compare_structures,
    select_structure,
)
from src.numerics.diagnostics import (
    assimilation_errors,
    coefficient_magnitude_fraction,
    kinetic_energy_series,
)
from src.numerics.enkbf import enkbf_run, observation_stream
from src.numerics.galerkin import fourier_galerkin, pod_galerkin, simulate_model, threshold_model
from src.numerics.mle import fit_mle
from src.numerics.spectral_kse import cosine_initial_condition, iter_kse
from src.storage.artifacts import (
    save_basis,
    save_causation_matrix,
    save_field,
    save_model,
    save_structure,
    write_csv,
)

logger = logging.getLogger(__name__)

HIERARCHY_SPARSITIES = (0.2, 0.5, 0.9)
DA_SPARSITY = 0.9
DA_MODES = range(3, 10)

# statistics window and long-run stability window of the hierarchy ROMs
HIERARCHY_WINDOWS = {"desk": (2.0e3, 1.0e4), "full": (2.5e5, 3.6e4)}
# coefficient band counted for the magnitude statistic
MAGNITUDE_RANGE = (1.0e-5, 1.0e-1)
RECONSTRUCTION_SAMPLES = 1000


def desk_profile(config: RunConfig, experiment: str) -> RunConfig:
    """Reduced-scale settings of an experiment."""
    config = override(config, "training", t_start=1.0e4, t_end=1.4e4, stride=1)
    if experiment == "da-partial":
        config = override(config, "assimilation", p=100, t_start=0.0, t_end=500.0)
    return config


def _rom_trajectory(model: QuadraticModel, config: RunConfig) -> CoefficientSeries:
    """Spin a model up to the training start and record the training window."""
    dt = config.kse.dt
    seed = config.seeds.simulation
    a = 0.1 * np.random.default_rng(seed).standard_normal(model.n)
    t_start, t_end = config.training.t_start, config.training.t_end
    spin_steps = int(round(t_start / dt))
    if spin_steps:
        spin = simulate_model(model, a, spin_steps * dt, dt, seed=seed, save_stride=spin_steps)
        a = spin.values[:, -1]
    return simulate_model(
        model,
        a,
        t_end - t_start,
        dt,
        seed=seed + 1,
        save_stride=config.training.stride,
        t_start=t_start,
    )


def _fit_options(config: RunConfig) -> FitOptions:
    return FitOptions(include_constant=config.fit.include_constant, derivative_scheme=config.fit.scheme)


def fourier_recovery(config: RunConfig, run: RunContext) -> dict[str, Any]:
    """Recover the sparse Fourier-Galerkin structure from its trajectory."""
    params = config.kse.params()
    truth = fourier_galerkin(config.basis.size // 2, params)
    run.register(save_model(run.path("galerkin.crom"), truth), "model")

    series = _rom_trajectory(truth, config)
    cem = causation_entropy_from_series(series, config.library.derivative_scheme)
    lib = build_library(truth.n)
    run.register(save_causation_matrix(run.path("causation.crom"), cem, lib.labels()), "matrix")

    strategy = ThresholdStrategy(kind=config.threshold.strategy, value=config.threshold.value)
    structure = select_structure(cem, strategy)
    run.register(save_structure(run.path("structure.crom"), structure), "structure")
    comparison = compare_structures(structure.mask, truth.term_mask())

    learned = fit_mle(structure, lib, series, _fit_options(config))
    run.register(save_model(run.path("learned.crom"), learned), "model")
    beta = np.diag(truth.linear)
    linear_error = np.abs(np.diag(learned.linear) - beta) / np.abs(beta)

    return {
        "samples": len(series),
        "true_terms": comparison.reference_count,
        "recovered_terms": comparison.true_positives,
        "false_positives": comparison.false_positives,
        "misses": comparison.misses,
        "misses_all_quadratic": comparison.misses_all_quadratic,
        "linear_terms_recovered": int(structure.mask[:, : truth.n].diagonal().sum()),
        "linear_max_relative_error": float(linear_error.max()),
        "max_noise": float(np.max(np.abs(learned.noise))),
        "cutoffs": structure.threshold_record.cutoffs,
    }


class PodTraining:
    """Everything derived from one KSE training run on a POD basis."""

    def __init__(self, params: KseParams, basis: Basis, series: CoefficientSeries, u_last: np.ndarray) -> None:
        self.params = params
        self.basis = basis
        self.series = series
        self.u_last = u_last


def _remember_last(chunks: Iterator[SpatioTemporalField], store: dict) -> Iterator[SpatioTemporalField]:
    for chunk in chunks:
        store["u"] = chunk.values[:, -1].copy()
        yield chunk


def pod_training(config: RunConfig, run: RunContext) -> PodTraining:
    """Two chunked KSE passes: POD snapshots first, then the projected series."""
    params = config.kse.params()
    u0 = cosine_initial_condition(params)
    t_start, t_end = config.training.t_start, config.training.t_end

    snapshots = iter_kse(params, u0, t_end, config.basis.snapshot_stride, t_start)
    covariance, L = accumulate_covariance(snapshots, snapshot_stride=1)
    basis = pod_basis_from_covariance(covariance, config.basis.size, L)
    run.register(save_basis(run.path("basis.crom"), basis), "basis")

    store: dict = {}
    chunks = _remember_last(iter_kse(params, u0, t_end, config.training.stride, t_start), store)
    series = project_chunks(chunks, basis)
    return PodTraining(params, basis, series, store["u"])


def _energy_statistics(model: QuadraticModel, a0: np.ndarray, t_window: float, config: RunConfig) -> dict[str, Any]:
    try:
        run = simulate_model(model, a0, t_window, config.kse.dt, seed=config.seeds.simulation, save_stride=10)
    except BlowUpError as e:
        logger.warning(f"⚠️ ROM blew up after t={e.last_stable_time:.6g}")
        return {"stable": False, "blow_up_time": e.last_stable_time}
    energy = kinetic_energy_series(run)
    return {"stable": True, "energy_mean": float(energy.mean()), "energy_std": float(energy.std())}


def hierarchy_models(
    cem: CausationMatrix,
    lib: FeatureLibrary,
    series: CoefficientSeries,
    galerkin: QuadraticModel,
    sparsity: float,
    opts: FitOptions,
) -> dict[str, QuadraticModel]:
    """ROMs compared at one sparsity fraction.

    Returns:
        per_equation and global causation ROMs, and the POD-Galerkin model
        thresholded by coefficient magnitude and refitted on the series
    """
    models: dict[str, QuadraticModel] = {}
    for name, kind in (("per_equation", StrategyKind.PER_EQUATION_SPARSITY), ("global", StrategyKind.GLOBAL_SPARSITY)):
        structure = select_structure(cem, ThresholdStrategy(kind=kind, value=sparsity))
        models[name] = fit_mle(structure, lib, series, opts)
    models["thresholded"] = threshold_model(galerkin, sparsity, series, opts)
    return models


def _save_reconstruction(run: RunContext, name: str, series: CoefficientSeries, basis: Basis, params: KseParams) -> None:
    window = series.values.shape[1] - min(RECONSTRUCTION_SAMPLES, series.values.shape[1])
    tail = CoefficientSeries(times=series.times[window:], values=series.values[:, window:])
    run.register(save_field(run.path(f"{name}_field.crom"), reconstruct(tail, basis, params.grid())), "field")


def pod_hierarchy(config: RunConfig, run: RunContext, scale: str) -> dict[str, Any]:
    """Causation ROMs at 20%, 50% and 90% sparsity against the POD-Galerkin benchmark.

    At every sparsity the per-equation causation ROM is compared with the
    global-sparsity causation ROM and with the thresholded POD-Galerkin
    baseline. Reconstructed fields of the projected truth and of the densest
    causation ROM are written as artifacts.
    """
    stats_window, stability_window = HIERARCHY_WINDOWS[scale]
    training = pod_training(config, run)
    series = training.series
    fractions = pod_energy_fractions(training.basis)
    opts = _fit_options(config)

    cem = causation_entropy_from_series(series, config.library.derivative_scheme)
    lib = FeatureLibrary(n=series.n)
    run.register(save_causation_matrix(run.path("causation.crom"), cem, lib.labels()), "matrix")

    galerkin = pod_galerkin(training.basis, training.params)
    run.register(save_model(run.path("galerkin.crom"), galerkin), "model")

    reference = kinetic_energy_series(series)
    a0 = series.values[:, -1]
    summary: dict[str, Any] = {
        "captured_fraction_3": float(fractions[min(2, fractions.size - 1)]),
        "captured_fraction_10": float(fractions[min(9, fractions.size - 1)]),
        "training_energy_mean": float(reference.mean()),
        "training_energy_std": float(reference.std()),
        "galerkin": {
            "terms": galerkin.term_count,
            "magnitude_fraction": coefficient_magnitude_fraction(galerkin, *MAGNITUDE_RANGE),
            **_energy_statistics(galerkin, a0, stats_window, config),
        },
        "models": {},
        "global": {},
        "thresholded": {},
    }
    _save_reconstruction(run, "training", series, training.basis, training.params)

    rows = []
    for sparsity in HIERARCHY_SPARSITIES:
        tag = f"{int(round(100 * sparsity))}"
        models = hierarchy_models(cem, lib, series, galerkin, sparsity, opts)
        row = [sparsity]
        for name, key in (("per_equation", "models"), ("global", "global"), ("thresholded", "thresholded")):
            model = models[name]
            filename = f"rom_{tag}.crom" if name == "per_equation" else f"{name}_{tag}.crom"
            run.register(save_model(run.path(filename), model), "model")
            entry = {
                "terms": model.term_count,
                "magnitude_fraction": coefficient_magnitude_fraction(model, *MAGNITUDE_RANGE),
                **_energy_statistics(model, a0, stats_window, config),
            }
            summary[key][tag] = entry
            row += [model.term_count, entry.get("energy_mean", np.nan), entry.get("energy_std", np.nan)]

        if sparsity == HIERARCHY_SPARSITIES[0]:
            densest = models["per_equation"]
            long_run = _energy_statistics(densest, a0, stability_window, config)
            summary["models"][tag]["long_run_stable"] = long_run["stable"]
            try:
                rom = simulate_model(
                    densest, a0, RECONSTRUCTION_SAMPLES * config.kse.dt, config.kse.dt, seed=config.seeds.simulation
                )
                _save_reconstruction(run, f"rom_{tag}", rom, training.basis, training.params)
            except BlowUpError as e:
                logger.warning(f"⚠️ No reconstruction for rom_{tag}: blew up after t={e.last_stable_time:.6g}")
        rows.append(row)

    header = ["sparsity"]
    for name in ("per_equation", "global", "thresholded"):
        header += [f"{name}_terms", f"{name}_energy_mean", f"{name}_energy_std"]
    run.register(write_csv(run.path("hierarchy.csv"), np.array(rows), header), "csv")
    return summary


def da_partial(config: RunConfig, run: RunContext) -> dict[str, Any]:
    """EnKBF with a causation ROM against a thresholded POD-Galerkin baseline."""
    settings = config.assimilation
    training = pod_training(config, run)
    series = training.series
    lib = FeatureLibrary(n=series.n)
    opts = _fit_options(config)

    cem = causation_entropy_from_series(series, config.library.derivative_scheme)
    structure = select_structure(
        cem, ThresholdStrategy(kind=StrategyKind.PER_EQUATION_SPARSITY, value=DA_SPARSITY)
    )
    models = {
        "causation": fit_mle(structure, lib, series, opts),
        "thresholded": threshold_model(pod_galerkin(training.basis, training.params), DA_SPARSITY, series, opts),
    }

    chunks = iter_kse(training.params, training.u_last, settings.t_end - settings.t_start)
    truth = project_chunks(chunks, training.basis)
    truth = truth.model_copy(update={"times": truth.times + settings.t_start})
    obs = observation_stream(truth, settings.r)
    hidden = CoefficientSeries(times=truth.times, values=truth.values[settings.r :])
    modes = [m - settings.r for m in DA_MODES if settings.r <= m < series.n]
    reg = RegularizationPolicy(floor=settings.epsilon_floor, relative=settings.epsilon_relative)
    z0 = hidden.values[:, 0] if settings.z0_policy == "given" else None

    summary: dict[str, Any] = {"members": settings.p, "observed": settings.r}
    for name, model in models.items():
        run.register(save_model(run.path(f"{name}.crom"), model), "model")
        try:
            result = enkbf_run(
                model, obs, settings.r, settings.p, settings.z0_policy, config.seeds.assimilation, reg, z0=z0
            )
        except DivergenceError as e:
            logger.warning(f"⚠️ {name} ROM filter diverged at t={e.time:.6g}")
            summary[name] = {"terms": model.term_count, "diverged_at": e.time, "mean_error": float("inf")}
            continue
        errors = assimilation_errors(hidden, result.mean, modes)
        labels = [f"a{m + settings.r + 1}" for m in modes]
        run.register(write_csv(run.path(f"errors_{name}.csv"), errors[:, None], ["relative_l2"], labels), "csv")
        run.register(
            write_csv(
                run.path(f"posterior_{name}.csv"),
                np.column_stack([result.times, result.mean.T]),
                ["t", *[f"a{k + 1}" for k in range(settings.r, series.n)]],
            ),
            "csv",
        )
        summary[name] = {
            "terms": model.term_count,
            "mean_error": float(errors.mean()),
            "errors": dict(zip(labels, (float(e) for e in errors))),
        }
    causal, baseline = summary["causation"]["mean_error"], summary["thresholded"]["mean_error"]
    summary["improvement"] = float(1.0 - causal / baseline) if np.isfinite(baseline) and baseline > 0 else 1.0
    return summary


EXPERIMENTS: dict[str, Callable[[RunConfig, RunContext, str], dict[str, Any]]] = {
    "fourier-recovery": lambda config, run, scale: fourier_recovery(config, run),
    "pod-hierarchy": pod_hierarchy,
    "da-partial": lambda config, run, scale: da_partial(config, run),
}


def repro(args: argparse.Namespace) -> int:
    """Run a canned experiment and check its outputs against the previous run."""
    config = resolve_config(args)
    scale = "desk" if args.desk else "full"
    if args.desk:
        config = desk_profile(config, args.experiment)
    if not args.out:
        config = override(config, "output", directory=f"{config.output.directory}/{args.experiment}-{scale}")

    with run_context(f"repro {args.experiment}", config, args) as run:
        summary = EXPERIMENTS[args.experiment](config, run, scale)
        summary["experiment"] = args.experiment
        summary["scale"] = scale
        path = run.path("summary.json")
        path.write_text(json.dumps(summary, indent=2, sort_keys=True))
        run.register(path, "summary")
        verdict = run.compare()
        if verdict is None:
            logger.info("No earlier run with this config to compare against")
        summary["identical_to_previous"] = verdict
    emit(summary)
    return 0


def register_repro(subparsers) -> None:
    p = subparsers.add_parser("repro", help="canned end-to-end experiments")
    p.add_argument("experiment", choices=sorted(EXPERIMENTS))
    p.add_argument("--desk", action="store_true", help="reduced desk-scale profile")
    p.set_defaults(handler=repro)
