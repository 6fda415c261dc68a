"""Observation streams and ensembles for continuous-time filtering."""

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class ObservationStream(BaseModel):
    """Continuously observed amplitudes y(t) and their time derivative.

    y_obs and y_dot_obs have shape (r, Nt).
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    times: np.ndarray
    y_obs: np.ndarray
    y_dot_obs: np.ndarray

    @field_validator("times", "y_obs", "y_dot_obs", mode="before")
    @classmethod
    def as_float_array(cls, v):
        return np.asarray(v, dtype=float)

    @model_validator(mode="after")
    def check_layout(self) -> "ObservationStream":
        if self.y_obs.ndim != 2 or self.y_obs.shape[0] < 1:
            raise ValueError("y_obs must be an (r, Nt) matrix with r >= 1")
        if self.y_obs.shape != self.y_dot_obs.shape:
            raise ValueError("y_obs and y_dot_obs shapes differ")
        if self.y_obs.shape[1] != self.times.size:
            raise ValueError("one observation per sample time is required")
        if self.times.size > 2:
            steps = np.diff(self.times)
            if np.max(np.abs(steps - steps.mean())) > 1e-9 * steps.mean():
                raise ValueError("observation times must be uniformly spaced")
        return self

    @property
    def r(self) -> int:
        return self.y_obs.shape[0]

    @property
    def dt(self) -> float:
        return float((self.times[-1] - self.times[0]) / (self.times.size - 1))


class EnsembleState(BaseModel):
    """p members of dimension n - r, stored as columns."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    members: np.ndarray
    time: float = 0.0

    @field_validator("members", mode="before")
    @classmethod
    def as_float_matrix(cls, v):
        return np.asarray(v, dtype=float)

    @model_validator(mode="after")
    def check_size(self) -> "EnsembleState":
        if self.members.ndim != 2 or self.members.shape[1] < 2:
            raise ValueError("an ensemble needs at least two members as columns")
        return self

    @property
    def p(self) -> int:
        return self.members.shape[1]


class RegularizationPolicy(BaseModel):
    """C_reg = C + eps I with eps = max(floor, relative * max diag C)."""

    model_config = ConfigDict(frozen=True)

    floor: float = Field(1e-12, ge=0)
    relative: float = Field(1e-6, ge=0)

    def epsilon(self, covariance: np.ndarray) -> float:
        diagonal = np.diag(covariance)
        top = float(diagonal.max()) if diagonal.size else 0.0
        return max(self.floor, self.relative * top)


class AssimilationResult(BaseModel):
    """Posterior mean and ensemble spread of the unobserved block."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    times: np.ndarray
    mean: np.ndarray
    spread: np.ndarray
