"""Environment and run configuration.

This module handles:
1. Environment settings loaded from .env / the process environment
2. The RunConfig model with one section per pipeline stage
3. Reading and writing run configs in the [section] key = value format
"""

import configparser
import hashlib
import json
import os
from pathlib import Path
from typing import Literal, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError

from src.errors import ArtifactIOError, UsageError
from src.models.causal import DerivativeScheme, StrategyKind
from src.models.kse import KseParams
from src.models.modal import BasisKind


class EnvironmentSettings(BaseModel):
    """Process-level settings taken from CROM_* environment variables."""

    threads: int = Field(ge=1)
    log_level: str = "INFO"
    log_dir: str = "logs"
    catalog_url: str = "sqlite:///crom_catalog.db"


def load_environment() -> EnvironmentSettings:
    """Load .env (if present) and read the CROM_* variables."""
    load_dotenv()
    try:
        return EnvironmentSettings(
            threads=int(os.getenv("CROM_THREADS", str(os.cpu_count() or 1))),
            log_level=os.getenv("CROM_LOG_LEVEL", "INFO"),
            log_dir=os.getenv("CROM_LOG_DIR", "logs"),
            catalog_url=os.getenv("CROM_CATALOG_URL", "sqlite:///crom_catalog.db"),
        )
    except (ValueError, ValidationError) as e:
        raise UsageError(f"Invalid CROM_* environment setting: {e}") from e


def resolve_threads(threads: int | None = None) -> int:
    """Return threads if given, else the CROM_THREADS cap."""
    if threads is not None:
        if threads < 1:
            raise UsageError(f"thread count must be positive, got {threads}")
        return threads
    return load_environment().threads


class KseSection(KseParams):
    """KSE parameters plus the run length and snapshot schedule."""

    t_end: float = Field(1.4e4, gt=0)
    save_stride: int = Field(1, ge=1)
    t_start_save: float = 0.0

    def params(self) -> KseParams:
        return KseParams(**self.model_dump(include=set(KseParams.model_fields)))


class BasisSection(BaseModel):
    kind: BasisKind = BasisKind.FOURIER
    size: int = Field(20, ge=1)
    snapshot_stride: int = Field(10, ge=1)


class TrainingSection(BaseModel):
    t_start: float = 1.0e4
    t_end: float = 5.0e4
    stride: int = Field(1, ge=1)


class LibrarySection(BaseModel):
    derivative_scheme: DerivativeScheme = DerivativeScheme.CENTRAL


class ThresholdSection(BaseModel):
    strategy: StrategyKind = StrategyKind.GAP
    value: float = 1e-3


class FitSection(BaseModel):
    include_constant: bool = False
    scheme: DerivativeScheme = DerivativeScheme.CENTRAL


class AssimilationSection(BaseModel):
    r: int = Field(3, ge=1)
    p: int = Field(500, ge=2)
    t_start: float = 0.0
    t_end: float = 2000.0
    epsilon_floor: float = Field(1e-12, ge=0)
    epsilon_relative: float = Field(1e-6, ge=0)
    z0_policy: Literal["zero", "given"] = "zero"


class InputsSection(BaseModel):
    """Artifact files read by a command, recorded so a run can be replayed."""

    field: Optional[str] = None
    basis: Optional[str] = None
    series: Optional[str] = None
    training: Optional[str] = None
    structure: Optional[str] = None
    model: Optional[str] = None
    known: Optional[str] = None
    initial: Optional[str] = None


class GalerkinSection(BaseModel):
    threshold: Optional[float] = Field(None, description="sparsity fraction of the thresholded baseline")


class RomSection(BaseModel):
    t_end: float = Field(1.0e3, gt=0)
    dt: Optional[float] = Field(None, gt=0, description="defaults to [kse] dt")
    save_stride: int = Field(1, ge=1)


class StatsSection(BaseModel):
    bins: int = Field(100, ge=1)
    max_lag: int = Field(1000, ge=0)
    lyap_k: int = Field(3, ge=1)
    lyap_window: float = Field(1.0e4, gt=0)
    lyap_dt: Optional[float] = Field(None, gt=0)
    lyap_transient: float = Field(0.0, ge=0)
    renorm_stride: int = Field(10, ge=1)
    nu_start: Optional[float] = None
    nu_stop: Optional[float] = None
    nu_count: Optional[int] = Field(None, ge=1)
    burn_in: float = Field(1.0e3, ge=0)
    sweep_window: float = Field(1.0e3, gt=0)


class SeedsSection(BaseModel):
    simulation: int = 2024
    assimilation: int = 7


class OutputSection(BaseModel):
    directory: str = "runs"
    csv: bool = False
    plots: bool = True


class RunConfig(BaseModel):
    """Fully resolved configuration of a pipeline run."""

    kse: KseSection = KseSection()
    basis: BasisSection = BasisSection()
    training: TrainingSection = TrainingSection()
    library: LibrarySection = LibrarySection()
    threshold: ThresholdSection = ThresholdSection()
    fit: FitSection = FitSection()
    galerkin: GalerkinSection = GalerkinSection()
    rom: RomSection = RomSection()
    assimilation: AssimilationSection = AssimilationSection()
    seeds: SeedsSection = SeedsSection()
    stats: StatsSection = StatsSection()
    inputs: InputsSection = InputsSection()
    output: OutputSection = OutputSection()

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form."""
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_run_config(config: RunConfig, path: str | Path) -> Path:
    """Write a config as [section] key = value text.

    Floats use repr so that reading the file back gives identical values.
    Unset optional keys are left out and read back as None.
    """
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for section, values in config.model_dump().items():
        parser[section] = {key: _format_value(v) for key, v in values.items() if v is not None}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as handle:
        parser.write(handle)
    os.replace(tmp, path)
    return path


def read_run_config(path: str | Path) -> RunConfig:
    """Read a config file; missing sections and keys keep their defaults.

    Raises:
        ArtifactIOError: if the file is missing or unparsable
        UsageError: if a value is invalid or a section/key is unknown
    """
    path = Path(path)
    if not path.is_file():
        raise ArtifactIOError(f"Config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read(path)
    except configparser.Error as e:
        raise ArtifactIOError(f"Unparsable config file {path}: {e}") from e

    known = RunConfig.model_fields
    raw: dict[str, dict[str, str]] = {}
    for section in parser.sections():
        if section not in known:
            raise UsageError(f"Unknown config section [{section}] in {path}")
        allowed = known[section].annotation.model_fields
        unknown = set(parser[section]) - set(allowed)
        if unknown:
            raise UsageError(f"Unknown keys {sorted(unknown)} in [{section}]")
        raw[section] = dict(parser[section])
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as e:
        raise UsageError(f"Invalid config {path}: {e}") from e
