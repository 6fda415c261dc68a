"""Kuramoto–Sivashinsky parameters and space–time solution fields.

This module contains the pydantic models shared by the spectral solver,
the basis layer and the artifact store:
1. KseParams, the equation and discretization parameters
2. SpatioTemporalField, a snapshot matrix u(x_i, t_j) with its grid
"""

import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class KseParams(BaseModel):
    """Parameters of u_t = -nu u_xxxx - D u_xx - gamma u u_x on (0, L).

    Defaults are the chaotic regime used throughout the package.
    """

    model_config = ConfigDict(frozen=True)

    nu: float = Field(8.0, gt=0, description="biharmonic diffusion")
    D: float = Field(1.0, gt=0, description="anti-diffusion")
    L: float = Field(20.0 * math.pi, gt=0, description="domain length")
    gamma: float = Field(1.0, gt=0, description="advection strength")
    dt: float = Field(0.01, gt=0, description="time step")
    Nx: int = Field(128, description="grid points / Fourier mode pairs")

    @field_validator("Nx")
    @classmethod
    def validate_grid_size(cls, v: int) -> int:
        if v < 8 or v % 2:
            raise ValueError("Nx must be even and at least 8")
        return v

    @property
    def dx(self) -> float:
        """Grid spacing."""
        return self.L / self.Nx

    def grid(self) -> np.ndarray:
        """Return the Nx equally spaced points of [0, L)."""
        return np.arange(self.Nx) * self.dx

    def wavenumbers(self) -> np.ndarray:
        """Return the non-negative wavenumbers 2*pi*k/L of the rfft layout."""
        return 2.0 * np.pi * np.arange(self.Nx // 2 + 1) / self.L

    def linear_symbol(self) -> np.ndarray:
        """Fourier multiplier of -nu d^4/dx^4 - D d^2/dx^2 per rfft wavenumber."""
        k = self.wavenumbers()
        return -self.nu * k**4 + self.D * k**2


class SpatioTemporalField(BaseModel):
    """A space–time snapshot matrix with its grid and sample times.

    values has shape (Nx, number of times); column j is u(., times[j]).
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    grid: np.ndarray
    times: np.ndarray
    values: np.ndarray
    L: float = Field(gt=0)

    @field_validator("grid", "times", "values", mode="before")
    @classmethod
    def as_float_array(cls, v):
        return np.asarray(v, dtype=float)

    @model_validator(mode="after")
    def check_layout(self) -> "SpatioTemporalField":
        if self.values.ndim != 2:
            raise ValueError("values must be a 2-D (Nx, Nt) matrix")
        if self.values.shape != (self.grid.size, self.times.size):
            raise ValueError(
                f"values shape {self.values.shape} does not match "
                f"grid ({self.grid.size}) and times ({self.times.size})"
            )
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if self.values.size:
            means = np.abs(self.values.mean(axis=0))
            rms = np.sqrt(np.mean(self.values**2, axis=0))
            if np.any(means > 1e-10 * rms):
                raise ValueError("every snapshot must have zero spatial mean")
        return self

    @property
    def Nx(self) -> int:
        return self.grid.size

    @property
    def dx(self) -> float:
        return self.L / self.grid.size

    def __len__(self) -> int:
        return self.times.size
