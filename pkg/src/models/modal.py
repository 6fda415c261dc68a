"""Orthonormal spatial bases and modal amplitude series."""

from enum import Enum
import hashlib

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class BasisKind(str, Enum):
    """Kinds of spatial bases."""

    FOURIER = "fourier"
    POD = "pod"

    def __str__(self) -> str:
        return self.value


class Basis(BaseModel):
    """An orthonormal set of mean-zero spatial modes on (0, L).

    Every mode is held as truncated complex Fourier coefficients c_k,
    k = 0..K, with phi(x) = Re sum_k c_k exp(i 2 pi k x / L); c_0 is always 0.
    Fourier bases also keep their (l, n) labels and eigenvalues beta_n;
    POD bases keep the covariance eigenvalues they were ranked by.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    kind: BasisKind
    L: float = Field(gt=0)
    coefficients: np.ndarray
    labels: list[tuple[int, int]] | None = None
    eigenvalues: np.ndarray | None = None
    covariance_eigenvalues: np.ndarray | None = None

    @field_validator("coefficients", mode="before")
    @classmethod
    def as_complex_matrix(cls, v):
        return np.atleast_2d(np.asarray(v, dtype=complex))

    @model_validator(mode="after")
    def check_sizes(self) -> "Basis":
        if self.labels is not None and len(self.labels) != self.size:
            raise ValueError("one label per mode is required")
        if self.eigenvalues is not None and len(self.eigenvalues) != self.size:
            raise ValueError("one eigenvalue per mode is required")
        return self

    @property
    def size(self) -> int:
        """Number of modes n."""
        return self.coefficients.shape[0]

    @property
    def max_wavenumber(self) -> int:
        """Truncation K of the Fourier representation."""
        return self.coefficients.shape[1] - 1

    @property
    def identifier(self) -> str:
        """Short provenance tag, stable for identical bases."""
        digest = hashlib.sha256(
            np.ascontiguousarray(self.coefficients).tobytes()
        ).hexdigest()[:12]
        return f"{self.kind.value}-{self.size}-{digest}"

    def mode_labels(self) -> list[str]:
        """Human-readable mode names (cos_n/sin_n or pod_k)."""
        if self.labels is not None:
            return [f"{'cos' if ell == 0 else 'sin'}_{n}" for ell, n in self.labels]
        return [f"pod_{k + 1}" for k in range(self.size)]

    def spectral_coefficients(self, derivative: int = 0) -> np.ndarray:
        """Coefficients of the derivative of given order, (i k kappa)^m c_k."""
        k = np.arange(self.max_wavenumber + 1)
        factor = (1j * 2.0 * np.pi * k / self.L) ** derivative
        return self.coefficients * factor[None, :]

    def evaluate(self, grid: np.ndarray, derivative: int = 0) -> np.ndarray:
        """Sample every mode (or a derivative) on the given points.

        Returns:
            real matrix of shape (n, len(grid))
        """
        grid = np.asarray(grid, dtype=float)
        k = np.arange(self.max_wavenumber + 1)
        phases = np.exp(1j * 2.0 * np.pi * np.outer(k, grid) / self.L)
        return np.real(self.spectral_coefficients(derivative) @ phases)

    def gram(self) -> np.ndarray:
        """Exact L^2(0, L) inner products of the modes."""
        c = self.coefficients[:, 1:]
        return 0.5 * self.L * np.real(c @ c.conj().T)


class CoefficientSeries(BaseModel):
    """Uniformly sampled time series a(t) of modal amplitudes.

    values has shape (n, Nt).
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    times: np.ndarray
    values: np.ndarray
    basis_id: str = "unspecified"
    labels: list[str] | None = None

    @field_validator("times", "values", mode="before")
    @classmethod
    def as_float_array(cls, v):
        return np.asarray(v, dtype=float)

    @model_validator(mode="after")
    def check_uniform(self) -> "CoefficientSeries":
        if self.values.ndim != 2 or self.values.shape[1] != self.times.size:
            raise ValueError(
                f"values shape {self.values.shape} does not match "
                f"{self.times.size} sample times"
            )
        if self.labels is not None and len(self.labels) != self.values.shape[0]:
            raise ValueError("one label per component is required")
        if self.times.size > 2:
            step = (self.times[-1] - self.times[0]) / (self.times.size - 1)
            if step <= 0:
                raise ValueError("times must be increasing")
            ideal = self.times[0] + step * np.arange(self.times.size)
            scale = max(abs(self.times[0]), abs(self.times[-1]), step)
            if np.max(np.abs(self.times - ideal)) > 1e-12 * scale:
                raise ValueError("times must be uniformly spaced")
        return self

    @property
    def n(self) -> int:
        """State dimension."""
        return self.values.shape[0]

    @property
    def dt(self) -> float:
        """Sample spacing."""
        if self.times.size < 2:
            raise ValueError("a single sample has no spacing")
        return float((self.times[-1] - self.times[0]) / (self.times.size - 1))

    def __len__(self) -> int:
        return self.times.size

    def window(self, t_start: float, t_end: float) -> "CoefficientSeries":
        """Samples with t_start <= t <= t_end (with a half-step tolerance)."""
        tol = 0.5 * self.dt if self.times.size > 1 else 0.0
        keep = (self.times >= t_start - tol) & (self.times <= t_end + tol)
        return self.model_copy(
            update={"times": self.times[keep], "values": self.values[:, keep]}
        )

    def strided(self, stride: int) -> "CoefficientSeries":
        """Every stride-th sample."""
        if stride < 1:
            raise ValueError("stride must be positive")
        return self.model_copy(
            update={"times": self.times[::stride], "values": self.values[:, ::stride]}
        )
