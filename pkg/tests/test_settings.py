"""Test suite for environment settings and run configuration files."""

from pathlib import Path

import pytest

from src.config.settings import (
    RunConfig,
    load_environment,
    read_run_config,
    resolve_threads,
    write_run_config,
)
from src.errors import ArtifactIOError, UsageError
from src.models.causal import StrategyKind
from src.models.modal import BasisKind


class TestEnvironment:
    """Test cases for CROM_* environment handling."""

    def test_threads_from_environment(self, monkeypatch):
        """CROM_THREADS caps the worker count."""
        monkeypatch.setenv("CROM_THREADS", "3")
        assert load_environment().threads == 3, "CROM_THREADS should be honored"
        assert resolve_threads() == 3, "resolve_threads should fall back to CROM_THREADS"

    def test_explicit_threads_win(self, monkeypatch):
        """An explicit thread count overrides the environment."""
        monkeypatch.setenv("CROM_THREADS", "3")
        assert resolve_threads(5) == 5

    @pytest.mark.parametrize("value", ["zero", "0", "-2"])
    def test_invalid_threads(self, monkeypatch, value: str):
        """Non-numeric or non-positive CROM_THREADS is a usage error."""
        monkeypatch.setenv("CROM_THREADS", value)
        with pytest.raises(UsageError):
            load_environment()

    def test_non_positive_explicit_threads(self):
        with pytest.raises(UsageError):
            resolve_threads(0)


class TestRunConfig:
    """Test cases for the run configuration model and its file format."""

    def test_defaults(self):
        """Defaults describe the chaotic regime and the gap strategy."""
        config = RunConfig()
        assert config.kse.nu == 8.0 and config.kse.Nx == 128, "KSE defaults should be the chaotic regime"
        assert config.basis.kind == BasisKind.FOURIER
        assert config.threshold.strategy == StrategyKind.GAP
        assert config.output.plots and not config.output.csv

    def test_write_then_read(self, tmp_path: Path):
        """A written config reads back to the same values and hash."""
        config = RunConfig.model_validate(
            {"kse": {"nu": 7.25, "t_end": 123.5}, "basis": {"kind": "pod", "size": 12}}
        )
        path = write_run_config(config, tmp_path / "run.cfg")
        text = path.read_text()
        assert "[kse]" in text and "nu = 7.25" in text, "Config should use [section] key = value"

        loaded = read_run_config(path)
        assert loaded == config, "Round trip should preserve every value"
        assert loaded.config_hash() == config.config_hash()

    def test_partial_file_keeps_defaults(self, tmp_path: Path):
        path = tmp_path / "partial.cfg"
        path.write_text("[threshold]\nstrategy = per_equation_sparsity\nvalue = 0.9\n")
        config = read_run_config(path)
        assert config.threshold.strategy == StrategyKind.PER_EQUATION_SPARSITY
        assert config.threshold.value == 0.9
        assert config.kse == RunConfig().kse, "Unlisted sections should keep defaults"

    def test_hash_depends_on_values(self):
        base = RunConfig()
        changed = RunConfig.model_validate({"seeds": {"simulation": 1}})
        assert base.config_hash() != changed.config_hash(), "Different seeds must hash differently"

    def test_unset_optional_keys_round_trip(self, tmp_path: Path):
        """None values are left out of the file and read back as None."""
        config = RunConfig.model_validate(
            {"rom": {"t_end": 50.0, "save_stride": 10}, "inputs": {"model": "/data/100%/model.crom"}}
        )
        path = write_run_config(config, tmp_path / "run.cfg")
        text = path.read_text()
        assert "dt =" not in text and "initial =" not in text, "Unset keys should not be written"

        loaded = read_run_config(path)
        assert loaded.rom.dt is None and loaded.inputs.initial is None
        assert loaded.inputs.model == "/data/100%/model.crom", "Paths must survive without interpolation"
        assert loaded == config

    def test_missing_file(self, tmp_path: Path):
        with pytest.raises(ArtifactIOError):
            read_run_config(tmp_path / "absent.cfg")

    @pytest.mark.parametrize(
        "content",
        [
            "[nonsense]\nkey = 1\n",
            "[kse]\nbogus = 1\n",
            "[kse]\nnu = -1\n",
            "[basis]\nkind = wavelet\n",
            "[kse]\nNx = 7\n",
        ],
    )
    def test_invalid_content(self, tmp_path: Path, content: str):
        """Unknown sections or keys and invalid values are usage errors."""
        path = tmp_path / "bad.cfg"
        path.write_text(content)
        with pytest.raises(UsageError):
            read_run_config(path)

    def test_unparsable_file(self, tmp_path: Path):
        path = tmp_path / "broken.cfg"
        path.write_text("no section header here\n")
        with pytest.raises(ArtifactIOError):
            read_run_config(path)

    def test_section_params(self):
        """The [kse] section yields plain equation parameters."""
        params = RunConfig.model_validate({"kse": {"nu": 4.0}}).kse.params()
        assert params.nu == 4.0
        assert not hasattr(params, "t_end")
