"""Test suite for the command-line pipeline."""

import json
from pathlib import Path

import numpy as np
import pytest
from sqlmodel import Session, select

from src.config.settings import read_run_config
from src.database.connection import get_engine
from src.main import build_parser, main
from src.models.catalog import RunRecord, RunStatus
from src.models.modal import CoefficientSeries
from src.models.quadratic import ModelProvenance, QuadraticModel
from src.numerics.galerkin import simulate_model
from src.storage.artifacts import load_model, load_series, load_structure, save_model, save_series


@pytest.fixture
def small_config(tmp_path: Path) -> Path:
    """A coarse grid with a training window starting at zero."""
    path = tmp_path / "small.cfg"
    path.write_text(
        "[kse]\nNx = 32\nt_end = 2.0\nsave_stride = 10\n"
        "[training]\nt_start = 0.0\nt_end = 200.0\n"
    )
    return path


@pytest.fixture
def run_cli(tmp_path: Path, catalog_url: str, capsys):
    """Run main() in its own output directory and return (code, summary, directory)."""

    def run(name: str, *argv: str) -> tuple[int, dict, Path]:
        out = tmp_path / name
        code = main([*argv, "--out", str(out), "--catalog", catalog_url, "--no-plots"])
        captured = capsys.readouterr().out
        summary = json.loads(captured) if code == 0 else {}
        return code, summary, out

    return run


class TestParser:
    """Test cases for argument parsing."""

    def test_every_subcommand_is_registered(self):
        parser = build_parser()
        choices = parser._subparsers._group_actions[0].choices
        assert set(choices) == {
            "simulate", "basis", "project", "galerkin", "centropy", "fit", "rom-sim", "assimilate", "stats", "repro",
        }

    @pytest.mark.parametrize(
        "argv",
        [[], ["bogus"], ["simulate", "--t-end", "abc"], ["centropy", "--series", "s", "--theta", "1", "--gap", "1"]],
    )
    def test_usage_errors(self, argv):
        assert main(argv) == 1


class TestPipeline:
    """Test cases for the file-to-file commands."""

    def test_simulate_project_and_stats(self, run_cli, small_config: Path, catalog_url: str):
        code, summary, sim_dir = run_cli("sim", "simulate", "--config", str(small_config))
        assert code == 0
        assert summary["snapshots"] == 21 and summary["t_last"] == pytest.approx(2.0)
        assert (sim_dir / "field.crom").exists() and (sim_dir / "run.cfg").exists()

        code, summary, basis_dir = run_cli("basis", "basis", "--config", str(small_config), "--kind", "fourier", "--size", "6")
        assert code == 0 and summary["unstable_directions"] == 6

        code, summary, proj_dir = run_cli(
            "proj", "project", "--field", str(sim_dir / "field.crom"), "--basis", str(basis_dir / "basis.crom")
        )
        assert code == 0 and summary["components"] == 6
        assert load_series(proj_dir / "series.crom").labels[0] == "cos_1"

        code, summary, stats_dir = run_cli("stats", "stats", "--series", str(proj_dir / "series.crom"), "--bins", "5", "--max-lag", "4")
        assert code == 0
        for name in ("spectrum.csv", "pdf.csv", "acf.csv", "extrema.csv"):
            assert (stats_dir / name).exists(), f"{name} should be written"
        assert set(summary["spectrum"]) == {"cos_1", "cos_2", "cos_3", "sin_1", "sin_2", "sin_3"}

        with Session(get_engine(catalog_url)) as session:
            runs = session.exec(select(RunRecord)).all()
        assert [r.Command for r in runs] == ["simulate", "basis", "project", "stats"]
        assert all(r.Status == RunStatus.SUCCEEDED for r in runs)

    def test_csv_mirrors(self, tmp_path: Path, small_config: Path, catalog_url: str, capsys):
        out = tmp_path / "mirrored"
        code = main(["simulate", "--config", str(small_config), "--out", str(out), "--catalog", catalog_url, "--csv"])
        capsys.readouterr()
        assert code == 0
        assert (out / "field.csv").read_text().startswith("t,"), "field mirror should start with a time column"

    def test_galerkin_and_rom_sim(self, run_cli, small_config: Path):
        code, summary, gal_dir = run_cli("gal", "galerkin", "--config", str(small_config), "--kind", "fourier", "--size", "6")
        assert code == 0
        assert summary["provenance"] == "fourier-galerkin"
        assert summary["energy_residual"] < 1e-12

        code, summary, thr_dir = run_cli(
            "thr", "galerkin", "--config", str(small_config), "--kind", "fourier", "--size", "6", "--threshold", "0.5"
        )
        assert code == 0 and summary["provenance"] == "thresholded"
        assert summary["thresholded_terms"] < summary["galerkin_terms"]

        code, summary, sim_dir = run_cli("rom", "rom-sim", "--model", str(gal_dir / "model.crom"), "--t-end", "1.0")
        assert code == 0 and summary["samples"] == 101

    def test_centropy_and_fit(self, run_cli, small_config: Path, ou_series: CoefficientSeries, tmp_path: Path):
        series_path = save_series(tmp_path / "ou.crom", ou_series)
        code, summary, ce_dir = run_cli(
            "ce", "centropy", "--config", str(small_config), "--series", str(series_path),
            "--scheme", "forward", "--per-eq-sparsity", "0.8",
        )
        assert code == 0
        assert summary["shape"] == [2, 5] and summary["selected"] == 2
        header = (ce_dir / "causation.csv").read_text().splitlines()
        assert header[0] == ",a1,a2,a1*a1,a1*a2,a2*a2"
        assert header[1].startswith("da1/dt,")
        np.testing.assert_array_equal(load_structure(ce_dir / "structure.crom").mask.diagonal(), [True, True])

        code, summary, fit_dir = run_cli(
            "fit", "fit", "--config", str(small_config), "--structure", str(ce_dir / "structure.crom"),
            "--series", str(series_path), "--scheme", "forward",
        )
        assert code == 0 and summary["terms"] == 2
        model = load_model(fit_dir / "model.crom")
        assert np.all(np.diag(model.linear) < 0), "fitted OU drift should be damping"
        assert (fit_dir / "residuals.csv").exists()

    def test_assimilate(self, run_cli, tmp_path: Path):
        theta = np.zeros((3, 9))
        theta[:, :3] = [[-1.0, 1.0, 0.0], [0.0, -1.0, 0.5], [0.0, 0.0, -1.0]]
        model = QuadraticModel.from_coefficients(theta, ModelProvenance.LEARNED, noise=0.5 * np.eye(3))
        model_path = save_model(tmp_path / "linear.crom", model)
        truth = simulate_model(model, np.ones(3), 5.0, 0.01, seed=2)
        series_path = save_series(tmp_path / "truth.crom", truth)

        code, summary, da_dir = run_cli(
            "da", "assimilate", "--model", str(model_path), "--series", str(series_path),
            "--r", "1", "--p", "10", "--t-start", "0", "--t-end", "5",
        )
        assert code == 0
        assert summary["steps"] == 500 and summary["members"] == 10
        assert set(summary["relative_errors"]) == {"a2", "a3"}
        for name in ("posterior_mean.csv", "posterior_spread.csv", "errors.csv"):
            assert (da_dir / name).exists()


class TestReplay:
    """Test cases for re-running a command from the run.cfg it wrote."""

    def test_rom_sim_replays_from_run_config(self, run_cli, small_config: Path):
        _, _, gal_dir = run_cli("gal", "galerkin", "--config", str(small_config), "--kind", "fourier", "--size", "4")
        code, first, rom_dir = run_cli(
            "rom", "rom-sim", "--model", str(gal_dir / "model.crom"), "--t-end", "0.5", "--save-stride", "10"
        )
        assert code == 0 and first["samples"] == 6

        written = read_run_config(rom_dir / "run.cfg")
        assert (written.rom.t_end, written.rom.save_stride) == (0.5, 10), "flags must land in run.cfg"
        assert written.inputs.model == str((gal_dir / "model.crom").resolve())

        code, second, replay_dir = run_cli("replay", "rom-sim", "--config", str(rom_dir / "run.cfg"))
        assert code == 0 and second == first
        np.testing.assert_array_equal(
            load_series(replay_dir / "series.crom").values, load_series(rom_dir / "series.crom").values
        )

    def test_thresholded_galerkin_replays(self, run_cli, small_config: Path):
        code, first, thr_dir = run_cli(
            "thr", "galerkin", "--config", str(small_config), "--kind", "fourier", "--size", "6", "--threshold", "0.5"
        )
        assert code == 0
        assert read_run_config(thr_dir / "run.cfg").galerkin.threshold == 0.5

        code, second, _ = run_cli("thr-replay", "galerkin", "--config", str(thr_dir / "run.cfg"))
        assert code == 0
        assert second["thresholded_terms"] == first["thresholded_terms"]

    def test_stats_options_are_recorded(self, run_cli, tmp_path: Path, ou_series: CoefficientSeries):
        series_path = save_series(tmp_path / "ou.crom", ou_series)
        code, _, stats_dir = run_cli("st", "stats", "--series", str(series_path), "--bins", "7", "--max-lag", "3")
        assert code == 0
        written = read_run_config(stats_dir / "run.cfg")
        assert (written.stats.bins, written.stats.max_lag) == (7, 3)
        assert written.inputs.series == str(series_path.resolve())
        assert len((stats_dir / "acf.csv").read_text().splitlines()) == 5, "header plus lags 0..3"


class TestExitCodes:
    """Test cases for failure reporting."""

    def test_missing_artifact(self, run_cli, tmp_path: Path):
        code, _, _ = run_cli("x", "project", "--field", str(tmp_path / "nope.crom"), "--basis", str(tmp_path / "nope.crom"))
        assert code == 2

    def test_wrong_artifact_role(self, run_cli, small_config: Path):
        code, _, gal_dir = run_cli("gal", "galerkin", "--config", str(small_config), "--kind", "fourier", "--size", "2")
        assert code == 0
        code, _, _ = run_cli("bad", "stats", "--series", str(gal_dir / "model.crom"))
        assert code == 2

    @pytest.mark.parametrize("command", ["basis", "galerkin"])
    def test_odd_fourier_size(self, run_cli, small_config: Path, command: str):
        """Fourier modes come in cos/sin pairs, so odd sizes are rejected."""
        code, _, out = run_cli("odd", command, "--config", str(small_config), "--kind", "fourier", "--size", "5")
        assert code == 1
        assert not (out / "model.crom").exists() and not (out / "basis.crom").exists()

    def test_pod_without_field(self, run_cli, small_config: Path):
        code, _, _ = run_cli("pod", "basis", "--config", str(small_config), "--kind", "pod")
        assert code == 1

    def test_empty_training_window(self, run_cli, tmp_path: Path, ou_series: CoefficientSeries):
        """Default training starts at t = 1e4, after the series ends."""
        series_path = save_series(tmp_path / "ou.crom", ou_series)
        code, _, _ = run_cli("ce", "centropy", "--series", str(series_path))
        assert code == 3

    def test_invalid_config_value(self, run_cli, tmp_path: Path):
        path = tmp_path / "bad.cfg"
        path.write_text("[kse]\nnu = -1\n")
        code, _, _ = run_cli("bad", "simulate", "--config", str(path))
        assert code == 1

    def test_failed_run_is_recorded(self, run_cli, small_config: Path, catalog_url: str):
        run_cli("pod", "basis", "--config", str(small_config), "--kind", "pod")
        with Session(get_engine(catalog_url)) as session:
            run = session.exec(select(RunRecord)).one()
        assert run.Status == RunStatus.FAILED and "--field" in run.Message

    def test_stats_without_inputs(self, run_cli):
        code, _, _ = run_cli("none", "stats")
        assert code == 1


class TestReproducibility:
    """Test cases for the repro comparison against the catalog."""

    @pytest.mark.slow
    def test_repeated_run_is_identical(self, tmp_path: Path, catalog_url: str, capsys):
        path = tmp_path / "repro.cfg"
        path.write_text(
            "[training]\nt_start = 200.0\nt_end = 260.0\n"
            "[threshold]\nstrategy = global_sparsity\nvalue = 0.5\n"
        )
        argv = ["repro", "fourier-recovery", "--config", str(path), "--out", str(tmp_path / "repro"),
                "--catalog", catalog_url, "--no-plots"]

        assert main(argv) == 0
        first = json.loads(capsys.readouterr().out)
        assert first["identical_to_previous"] is None, "First run has nothing to compare against"

        assert main(argv) == 0
        second = json.loads(capsys.readouterr().out)
        assert second["identical_to_previous"] is True, "Same config must reproduce the same artifacts"
        assert second["recovered_terms"] == first["recovered_terms"]
