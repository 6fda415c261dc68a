"""Subcommand handlers.

Each handler resolves the run configuration from --config plus its own
flags, runs one pipeline stage inside a RunContext and prints a JSON
summary on stdout. Every flag that changes the outputs, input file paths
included, is folded into the config first, so the run.cfg written next
to the outputs replays the run.
"""

import argparse
import json
import logging
from pathlib import Path
from typing import Any

import numpy as np

from src.cli.runtime import RunContext
from src.config.settings import RunConfig, read_run_config
from src.errors import InsufficientDataError, UsageError
from src.models.assimilation import RegularizationPolicy
from src.models.causal import (
    DerivativeScheme,
    FeatureLibrary,
    FitOptions,
    StrategyKind,
    ThresholdStrategy,
)
from src.models.kse import KseParams
from src.models.modal import BasisKind, CoefficientSeries
from src.numerics.basis import fourier_basis, pod_basis, pod_energy_fractions, project
from src.numerics.causal import causation_entropy_from_series, select_structure
from src.numerics.diagnostics import (
    acf,
    assimilation_errors,
    bifurcation_extrema,
    energy_spectrum,
    kinetic_energy_series,
    local_extrema,
    lyapunov_spectrum,
    pdf_estimate,
)
from src.numerics.enkbf import enkbf_run, observation_stream
from src.numerics.galerkin import (
    fourier_galerkin,
    pod_galerkin,
    quadratic_energy_residual,
    simulate_model,
    threshold_model,
)
from src.numerics.mle import fit_mle, residual_stats
from src.numerics.spectral_kse import cosine_initial_condition, kinetic_energy, simulate_kse
from src.storage import plots
from src.storage.artifacts import (
    load_basis,
    load_field,
    load_model,
    load_series,
    load_structure,
    save_basis,
    save_causation_matrix,
    save_field,
    save_model,
    save_series,
    save_structure,
    write_csv,
)

logger = logging.getLogger(__name__)


def run_context(command: str, config: RunConfig, args: argparse.Namespace) -> RunContext:
    """RunContext for a command, honouring the startup catalog check."""
    return RunContext(
        command, config, catalog_url=args.catalog, use_catalog=getattr(args, "use_catalog", True)
    )


def emit(summary: dict[str, Any]) -> None:
    """Print a command summary on stdout."""
    print(json.dumps(summary, indent=2, sort_keys=True))


def override(config: RunConfig, section: str, **values: Any) -> RunConfig:
    """Return a validated copy of config with non-None values replaced in a section."""
    updates = {key: value for key, value in values.items() if value is not None}
    if not updates:
        return config
    data = config.model_dump()
    data[section] = {**data[section], **updates}
    return RunConfig.model_validate(data)


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Base config from --config (defaults otherwise) plus output flags."""
    config = read_run_config(args.config) if args.config else RunConfig()
    return override(
        config,
        "output",
        directory=args.out,
        csv=True if args.csv else None,
        plots=False if args.no_plots else None,
    )


def with_inputs(config: RunConfig, args: argparse.Namespace, *names: str) -> RunConfig:
    """Record the input files given on the command line as absolute paths."""
    given = {name: getattr(args, name, None) for name in names}
    return override(
        config, "inputs", **{name: str(Path(path).resolve()) for name, path in given.items() if path}
    )


def require_input(config: RunConfig, name: str, what: str) -> str:
    path = getattr(config.inputs, name)
    if not path:
        raise UsageError(f"{what} needs --{name} (or [inputs] {name})")
    return path


def fourier_pairs(config: RunConfig) -> int:
    """Number of cos/sin pairs of a Fourier basis of the configured size."""
    if config.basis.size % 2:
        raise UsageError(f"a Fourier basis needs an even size (cos/sin pairs), got {config.basis.size}")
    return config.basis.size // 2


def training_series(series: CoefficientSeries, config: RunConfig) -> CoefficientSeries:
    """Restrict a series to the configured training window and stride."""
    window = series.window(config.training.t_start, config.training.t_end)
    if len(window) < 3:
        raise InsufficientDataError(
            f"series [{series.times[0]}, {series.times[-1]}] has too few samples in the "
            f"training window [{config.training.t_start}, {config.training.t_end}]"
        )
    return window.strided(config.training.stride)


def fit_options(config: RunConfig) -> FitOptions:
    known = config.inputs.known
    return FitOptions(
        include_constant=config.fit.include_constant,
        derivative_scheme=config.fit.scheme,
        known_Q=load_model(known) if known else None,
    )


def _series_csv(path: Path, times: np.ndarray, values: np.ndarray, labels: list[str]) -> Path:
    return write_csv(path, np.column_stack([times, values.T]), ["t", *labels])


def simulate(args: argparse.Namespace) -> int:
    """Run the spectral KSE solver and write the field file.

    Args:
        args: parsed command-line arguments

    Returns:
        process exit code
    """
    config = override(
        resolve_config(args),
        "kse",
        t_end=args.t_end,
        save_stride=args.save_stride,
        t_start_save=args.t_start_save,
    )
    params = config.kse.params()
    with run_context("simulate", config, args) as run:
        field = simulate_kse(
            params,
            cosine_initial_condition(params),
            config.kse.t_end,
            config.kse.save_stride,
            config.kse.t_start_save,
        )
        run.register(save_field(run.path("field.crom"), field), "field", mirror=True)
        energy = kinetic_energy(field)
        summary = {
            "snapshots": len(field),
            "t_first": float(field.times[0]),
            "t_last": float(field.times[-1]),
            "energy_mean": float(energy.mean()),
        }
    emit(summary)
    return 0


def basis(args: argparse.Namespace) -> int:
    """Build a Fourier basis, or a POD basis from a field file."""
    config = override(resolve_config(args), "basis", kind=args.kind, size=args.size)
    config = with_inputs(config, args, "field")
    params = config.kse.params()
    with run_context("basis", config, args) as run:
        if config.basis.kind == BasisKind.FOURIER:
            result = fourier_basis(fourier_pairs(config), params)
            summary: dict[str, Any] = {"unstable_directions": int(np.sum(result.eigenvalues > 0))}
        else:
            field = require_input(config, "field", "a POD basis")
            result = pod_basis(load_field(field), config.basis.size, config.basis.snapshot_stride)
            fractions = pod_energy_fractions(result)
            write_csv(run.path("pod_energy.csv"), fractions[:, None], ["captured_fraction"])
            run.register(run.path("pod_energy.csv"), "csv")
            summary = {"captured_fraction": [float(f) for f in fractions]}
        run.register(save_basis(run.path("basis.crom"), result), "basis", mirror=True)
        summary.update({"kind": str(result.kind), "size": result.size, "identifier": result.identifier})
    emit(summary)
    return 0


def project_field(args: argparse.Namespace) -> int:
    """Project a field file onto a basis file."""
    config = with_inputs(resolve_config(args), args, "field", "basis")
    with run_context("project", config, args) as run:
        field = load_field(require_input(config, "field", "project"))
        series = project(field, load_basis(require_input(config, "basis", "project")))
        run.register(save_series(run.path("series.crom"), series), "series", mirror=True)
        summary = {"components": series.n, "samples": len(series), "basis_id": series.basis_id}
    emit(summary)
    return 0


def galerkin(args: argparse.Namespace) -> int:
    """Write a Fourier- or POD-Galerkin model, optionally thresholded."""
    config = override(resolve_config(args), "basis", kind=args.kind, size=args.size)
    config = override(config, "galerkin", threshold=args.threshold)
    config = with_inputs(config, args, "basis", "training")
    params = config.kse.params()
    with run_context("galerkin", config, args) as run:
        if config.basis.kind == BasisKind.FOURIER:
            model = fourier_galerkin(fourier_pairs(config), params)
        else:
            model = pod_galerkin(load_basis(require_input(config, "basis", "a POD-Galerkin model")), params)
        summary: dict[str, Any] = {
            "galerkin_terms": model.term_count,
            "energy_residual": quadratic_energy_residual(model),
        }
        if config.galerkin.threshold is not None:
            path = config.inputs.training
            training = training_series(load_series(path), config) if path else None
            model = threshold_model(model, config.galerkin.threshold, training, fit_options(config))
            summary["thresholded_terms"] = model.term_count
        run.register(save_model(run.path("model.crom"), model), "model", mirror=True)
        summary["provenance"] = str(model.provenance)
    emit(summary)
    return 0


def _strategy(args: argparse.Namespace, config: RunConfig) -> ThresholdStrategy:
    chosen = [
        (StrategyKind.GLOBAL_THRESHOLD, args.theta),
        (StrategyKind.GLOBAL_SPARSITY, args.global_sparsity),
        (StrategyKind.PER_EQUATION_SPARSITY, args.per_eq_sparsity),
        (StrategyKind.GAP, args.gap),
    ]
    for kind, value in chosen:
        if value is not None:
            return ThresholdStrategy(kind=kind, value=value)
    return ThresholdStrategy(kind=config.threshold.strategy, value=config.threshold.value)


def centropy(args: argparse.Namespace) -> int:
    """Causation-entropy matrix and selected structure for a series."""
    config = override(resolve_config(args), "library", derivative_scheme=args.scheme)
    strategy = _strategy(args, config)
    config = override(config, "threshold", strategy=strategy.kind, value=strategy.value)
    config = with_inputs(config, args, "series", "known")
    with run_context("centropy", config, args) as run:
        series = training_series(load_series(require_input(config, "series", "centropy")), config)
        known = load_model(config.inputs.known) if config.inputs.known else None
        cem = causation_entropy_from_series(series, config.library.derivative_scheme, known)
        lib = FeatureLibrary(n=series.n)
        labels = lib.labels()
        run.register(save_causation_matrix(run.path("causation.crom"), cem, labels), "matrix")
        rows = [f"da{i + 1}/dt" for i in range(series.n)]
        run.register(write_csv(run.path("causation.csv"), cem.values, labels, rows), "csv")
        structure = select_structure(cem, strategy)
        run.register(save_structure(run.path("structure.crom"), structure), "structure", mirror=True)
        summary = {
            "shape": list(cem.shape),
            "selected": structure.term_count,
            "cutoffs": structure.threshold_record.cutoffs,
            "min_raw_value": cem.min_raw_value,
        }
    emit(summary)
    return 0


def fit(args: argparse.Namespace) -> int:
    """Maximum-likelihood fit of a selected structure."""
    config = override(
        resolve_config(args),
        "fit",
        include_constant=True if args.constant else None,
        scheme=args.scheme,
    )
    config = with_inputs(config, args, "structure", "series", "known")
    with run_context("fit", config, args) as run:
        structure = load_structure(require_input(config, "structure", "fit"))
        series = training_series(load_series(require_input(config, "series", "fit")), config)
        opts = fit_options(config)
        model = fit_mle(structure, FeatureLibrary(n=series.n), series, opts)
        run.register(save_model(run.path("model.crom"), model), "model", mirror=True)
        report = residual_stats(model, series, opts)
        std = np.sqrt(np.diag(report.covariance))
        write_csv(run.path("residuals.csv"), np.column_stack([report.mean, std]), ["mean", "std"])
        run.register(run.path("residuals.csv"), "csv")
        summary = {
            "terms": model.term_count,
            "max_noise": float(np.max(np.abs(model.noise))),
            "flagged_equations": [i + 1 for i in report.flagged],
        }
    emit(summary)
    return 0


def rom_sim(args: argparse.Namespace) -> int:
    """Seeded simulation of a quadratic model."""
    config = override(resolve_config(args), "rom", t_end=args.t_end, dt=args.dt, save_stride=args.save_stride)
    config = with_inputs(config, args, "model", "initial")
    settings = config.rom
    with run_context("rom-sim", config, args) as run:
        model = load_model(require_input(config, "model", "rom-sim"))
        seed = config.seeds.simulation
        if config.inputs.initial:
            a0 = load_series(config.inputs.initial).values[:, 0]
        else:
            a0 = 0.1 * np.random.default_rng(seed).standard_normal(model.n)
        dt = settings.dt or config.kse.dt
        series = simulate_model(model, a0, settings.t_end, dt, seed=seed, save_stride=settings.save_stride)
        run.register(save_series(run.path("series.crom"), series), "series", mirror=True)
        energy = kinetic_energy_series(series)
        summary = {"samples": len(series), "energy_mean": float(energy.mean()), "energy_std": float(energy.std())}
    emit(summary)
    return 0


def assimilate(args: argparse.Namespace) -> int:
    """EnKBF recovery of the unobserved modes of an observed series."""
    config = override(
        resolve_config(args),
        "assimilation",
        r=args.r,
        p=args.p,
        t_start=args.t_start,
        t_end=args.t_end,
    )
    config = with_inputs(config, args, "model", "series")
    settings = config.assimilation
    with run_context("assimilate", config, args) as run:
        model = load_model(require_input(config, "model", "assimilate"))
        truth = load_series(require_input(config, "series", "assimilate")).window(settings.t_start, settings.t_end)
        if len(truth) < 2:
            raise InsufficientDataError("observation window holds fewer than two samples")
        obs = observation_stream(truth, settings.r)
        reg = RegularizationPolicy(floor=settings.epsilon_floor, relative=settings.epsilon_relative)
        z0 = truth.values[settings.r :, 0] if settings.z0_policy == "given" else None
        result = enkbf_run(
            model,
            obs,
            settings.r,
            settings.p,
            settings.z0_policy,
            config.seeds.assimilation,
            reg,
            z0=z0,
        )
        labels = [f"a{k + 1}" for k in range(settings.r, model.n)]
        run.register(_series_csv(run.path("posterior_mean.csv"), result.times, result.mean, labels), "csv")
        run.register(_series_csv(run.path("posterior_spread.csv"), result.times, result.spread, labels), "csv")
        summary: dict[str, Any] = {"steps": int(result.times.size - 1), "members": settings.p}
        if truth.n == model.n:
            hidden = CoefficientSeries(times=truth.times, values=truth.values[settings.r :])
            errors = assimilation_errors(hidden, result.mean, range(hidden.n))
            write_csv(run.path("errors.csv"), errors[:, None], ["relative_l2"], labels)
            run.register(run.path("errors.csv"), "csv")
            summary["relative_errors"] = dict(zip(labels, (float(e) for e in errors)))
        if config.output.plots:
            curves = {f"{labels[0]} posterior": result.mean[0]}
            if truth.n == model.n:
                curves[f"{labels[0]} truth"] = truth.values[settings.r]
            run.register(plots.line_plot(run.path("posterior.svg"), result.times, curves, xlabel="t"), "plot")
    emit(summary)
    return 0


def _stats_config(args: argparse.Namespace) -> RunConfig:
    sweep = args.nu_sweep or (None, None, None)
    config = override(
        resolve_config(args),
        "stats",
        bins=args.bins,
        max_lag=args.max_lag,
        lyap_k=args.lyap_k,
        lyap_window=args.lyap_window,
        lyap_dt=args.lyap_dt,
        lyap_transient=args.lyap_transient,
        renorm_stride=args.renorm_stride,
        nu_start=sweep[0],
        nu_stop=sweep[1],
        nu_count=int(sweep[2]) if sweep[2] is not None else None,
        burn_in=args.burn_in,
        sweep_window=args.sweep_window,
    )
    return with_inputs(config, args, "series", "field", "model")


def _stats_samples(run: RunContext, config: RunConfig) -> tuple[np.ndarray, np.ndarray, dict[str, Any]]:
    summary: dict[str, Any] = {}
    if config.inputs.series:
        series = load_series(config.inputs.series)
        report = energy_spectrum(series)
        write_csv(run.path("spectrum.csv"), report.energies[:, None], ["energy"], report.labels)
        run.register(run.path("spectrum.csv"), "csv")
        if config.output.plots:
            run.register(
                plots.bar_plot(run.path("spectrum.svg"), report.labels, report.energies, ylabel="E_k"),
                "plot",
            )
        summary["spectrum"] = dict(zip(report.labels, (float(e) for e in report.energies)))
        return series.times, kinetic_energy_series(series), summary
    field = load_field(config.inputs.field)
    return field.times, kinetic_energy(field), summary


def stats(args: argparse.Namespace) -> int:
    """Spectrum, PDF, ACF, extrema, Lyapunov and sweep diagnostics."""
    config = _stats_config(args)
    settings, inputs = config.stats, config.inputs
    sweep = (settings.nu_start, settings.nu_stop, settings.nu_count)
    if not (inputs.series or inputs.field or inputs.model or None not in sweep):
        raise UsageError("stats needs --series, --field, --model or --nu-sweep")
    with run_context("stats", config, args) as run:
        summary: dict[str, Any] = {}
        if inputs.series or inputs.field:
            times, energy, summary = _stats_samples(run, config)
            density = pdf_estimate(energy, settings.bins)
            write_csv(run.path("pdf.csv"), np.column_stack([density.centers, density.density]), ["E", "density"])
            run.register(run.path("pdf.csv"), "csv")
            max_lag = min(settings.max_lag, energy.size - 1)
            correlation = acf(energy, max_lag)
            lags = (times[1] - times[0]) * np.arange(max_lag + 1) if times.size > 1 else np.zeros(1)
            write_csv(run.path("acf.csv"), np.column_stack([lags, correlation]), ["lag", "acf"])
            run.register(run.path("acf.csv"), "csv")
            minima, maxima = local_extrema(energy)
            extrema = np.concatenate(
                [np.column_stack([-np.ones(minima.size), minima]), np.column_stack([np.ones(maxima.size), maxima])]
            )
            write_csv(run.path("extrema.csv"), extrema.reshape(-1, 2), ["kind", "value"])
            run.register(run.path("extrema.csv"), "csv")
            if config.output.plots:
                run.register(plots.line_plot(run.path("energy.svg"), times, {"E": energy}, xlabel="t"), "plot")
                run.register(plots.line_plot(run.path("pdf.svg"), density.centers, {"pdf": density.density}, xlabel="E"), "plot")
                run.register(plots.line_plot(run.path("acf.svg"), lags, {"acf": correlation}, xlabel="lag"), "plot")
            summary.update(
                {
                    "energy_mean": float(energy.mean()),
                    "energy_std": float(energy.std()),
                    "minima": int(minima.size),
                    "maxima": int(maxima.size),
                }
            )

        if inputs.model:
            model = load_model(inputs.model)
            report = lyapunov_spectrum(
                model,
                min(settings.lyap_k, model.n),
                settings.lyap_window,
                settings.lyap_dt or config.kse.dt,
                settings.renorm_stride,
                t_transient=settings.lyap_transient,
                seed=config.seeds.simulation,
            )
            write_csv(run.path("lyapunov.csv"), report.exponents[:, None], ["exponent"])
            run.register(run.path("lyapunov.csv"), "csv")
            summary["lyapunov"] = [float(x) for x in report.exponents]

        if None not in sweep:
            base = config.kse.params().model_dump()
            nus = np.linspace(settings.nu_start, settings.nu_stop, settings.nu_count)
            sweep_params = [KseParams(**{**base, "nu": float(nu)}) for nu in nus]
            points = bifurcation_extrema(sweep_params, settings.burn_in, settings.sweep_window)
            rows = [
                (point.nu, kind, value)
                for point in points
                for kind, values in ((-1.0, point.minima), (1.0, point.maxima))
                for value in values
            ]
            write_csv(run.path("bifurcation.csv"), np.array(rows).reshape(-1, 3), ["nu", "kind", "value"])
            run.register(run.path("bifurcation.csv"), "csv")
            if config.output.plots and rows:
                table = np.array(rows)
                run.register(
                    plots.scatter_plot(run.path("bifurcation.svg"), [(table[:, 0], table[:, 2])], xlabel="nu", ylabel="E extrema"),
                    "plot",
                )
            summary["distinct_extrema"] = {f"{p.nu:.6g}": p.distinct_count for p in points}
    emit(summary)
    return 0


def add_common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="run config file ([section] key = value)")
    parser.add_argument("--out", help="output directory (overrides [output] directory)")
    parser.add_argument("--csv", action="store_true", help="write CSV mirrors of binary artifacts")
    parser.add_argument("--no-plots", action="store_true", help="skip SVG plots")
    parser.add_argument("--catalog", help="run catalog URL (defaults to CROM_CATALOG_URL)")


def register_commands(subparsers) -> None:
    """Attach every pipeline subcommand to an argparse subparser group.

    Options default to None so that values from --config apply unless a
    flag is given; input files may also come from the [inputs] section.
    """
    schemes = [s.value for s in DerivativeScheme]

    p = subparsers.add_parser("simulate", help="simulate the KSE")
    p.add_argument("--t-end", type=float)
    p.add_argument("--save-stride", type=int)
    p.add_argument("--t-start-save", type=float)
    p.set_defaults(handler=simulate)

    p = subparsers.add_parser("basis", help="build a Fourier or POD basis")
    p.add_argument("--kind", choices=[k.value for k in BasisKind])
    p.add_argument("--size", type=int)
    p.add_argument("--field", help="field file (POD only)")
    p.set_defaults(handler=basis)

    p = subparsers.add_parser("project", help="project a field onto a basis")
    p.add_argument("--field")
    p.add_argument("--basis")
    p.set_defaults(handler=project_field)

    p = subparsers.add_parser("galerkin", help="write a Galerkin model")
    p.add_argument("--kind", choices=[k.value for k in BasisKind])
    p.add_argument("--size", type=int)
    p.add_argument("--basis", help="POD basis file")
    p.add_argument("--threshold", type=float, help="sparsity fraction of the thresholded baseline")
    p.add_argument("--training", help="series file for refitting the thresholded model")
    p.set_defaults(handler=galerkin)

    p = subparsers.add_parser("centropy", help="causation entropies and structure selection")
    p.add_argument("--series")
    p.add_argument("--known", help="model file whose quadratic part is conditioned on")
    p.add_argument("--scheme", choices=schemes)
    strategy = p.add_mutually_exclusive_group()
    strategy.add_argument("--theta", type=float, help="global threshold in bits")
    strategy.add_argument("--global-sparsity", type=float)
    strategy.add_argument("--per-eq-sparsity", type=float)
    strategy.add_argument("--gap", type=float, help="gap threshold above this floor")
    p.set_defaults(handler=centropy)

    p = subparsers.add_parser("fit", help="maximum-likelihood fit of a structure")
    p.add_argument("--structure")
    p.add_argument("--series")
    p.add_argument("--known", help="model file whose quadratic part is taken as known")
    p.add_argument("--constant", action="store_true", help="fit a constant forcing per equation")
    p.add_argument("--scheme", choices=schemes)
    p.set_defaults(handler=fit)

    p = subparsers.add_parser("rom-sim", help="simulate a quadratic model")
    p.add_argument("--model")
    p.add_argument("--t-end", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--save-stride", type=int)
    p.add_argument("--initial", help="series file whose first sample is the initial state")
    p.set_defaults(handler=rom_sim)

    p = subparsers.add_parser("assimilate", help="EnKBF on the leading observed modes")
    p.add_argument("--model")
    p.add_argument("--series", help="series whose leading r modes are observed")
    p.add_argument("--r", type=int)
    p.add_argument("--p", type=int)
    p.add_argument("--t-start", type=float)
    p.add_argument("--t-end", type=float)
    p.set_defaults(handler=assimilate)

    p = subparsers.add_parser("stats", help="statistical and dynamical diagnostics")
    source = p.add_mutually_exclusive_group()
    source.add_argument("--series")
    source.add_argument("--field")
    p.add_argument("--bins", type=int)
    p.add_argument("--max-lag", type=int)
    p.add_argument("--model", help="model file for Lyapunov exponents")
    p.add_argument("--lyap-k", type=int)
    p.add_argument("--lyap-window", type=float)
    p.add_argument("--lyap-dt", type=float)
    p.add_argument("--lyap-transient", type=float)
    p.add_argument("--renorm-stride", type=int)
    p.add_argument("--nu-sweep", type=float, nargs=3, metavar=("START", "STOP", "COUNT"))
    p.add_argument("--burn-in", type=float)
    p.add_argument("--sweep-window", type=float)
    p.set_defaults(handler=stats)
