"""Diagnostic reports written by the stats and repro commands."""

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator


class SpectrumReport(BaseModel):
    """Time-averaged modal energies E_k over a window."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    labels: list[str]
    energies: np.ndarray
    window: tuple[float, float]

    @field_validator("energies", mode="before")
    @classmethod
    def as_float_array(cls, v):
        return np.asarray(v, dtype=float)


class DensityReport(BaseModel):
    """Histogram density estimate."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    edges: np.ndarray
    density: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])


class LyapunovReport(BaseModel):
    """Leading Lyapunov exponents in natural-log units per time."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    exponents: np.ndarray
    t_window: float
    dt: float
    renorm_stride: int


class ResidualReport(BaseModel):
    """Per-equation residual statistics of a model on training data."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    mean: np.ndarray
    covariance: np.ndarray
    flagged: list[int]


class BifurcationPoint(BaseModel):
    """Local extrema of the kinetic energy for one parameter value."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    nu: float
    minima: np.ndarray
    maxima: np.ndarray

    @property
    def distinct_count(self) -> int:
        values = np.concatenate([self.minima, self.maxima])
        if values.size == 0:
            return 0
        scale = max(1.0, float(np.max(np.abs(values))))
        return int(np.unique(np.round(values / scale, 6)).size)
