"""Stochastic quadratic reduced-order models.

This module contains:
1. the monomial ordering shared by models and feature libraries
2. QuadraticModel, da = (b + A a + Q(a)) dt + sigma dW
3. vectorized drift and Jacobian evaluation
"""

from enum import Enum
from typing import Callable

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator


class ModelProvenance(str, Enum):
    """Where a quadratic model came from."""

    FOURIER_GALERKIN = "fourier-galerkin"
    POD_GALERKIN = "pod-galerkin"
    THRESHOLDED = "thresholded"
    LEARNED = "learned"

    def __str__(self) -> str:
        return self.value


def monomial_pairs(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs (j, k), j <= k, of the quadratic monomials a_j a_k.

    Pairs are in lexicographic order, the order used by feature libraries.
    """
    j, k = np.triu_indices(n)
    return j.astype(np.int64), k.astype(np.int64)


def pair_position(j: int, k: int, n: int) -> int:
    """Position of the monomial a_j a_k (0-based, j <= k) among all pairs."""
    if j > k:
        j, k = k, j
    return j * n - j * (j - 1) // 2 + (k - j)


class QuadraticModel(BaseModel):
    """A quadratic SDE for modal amplitudes.

    Quadratic terms are stored sparsely: row t of quad_terms is the
    0-based triple (i, j, k), j <= k, for the monomial a_j a_k in
    equation i, with coefficient quad_coefs[t].
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    linear: np.ndarray
    quad_terms: np.ndarray
    quad_coefs: np.ndarray
    constant: np.ndarray
    noise: np.ndarray
    provenance: ModelProvenance
    basis_id: str = "unspecified"

    @field_validator("linear", "quad_coefs", "constant", "noise", mode="before")
    @classmethod
    def as_float_array(cls, v):
        return np.asarray(v, dtype=float)

    @field_validator("quad_terms", mode="before")
    @classmethod
    def as_index_table(cls, v):
        return np.asarray(v, dtype=np.int64).reshape(-1, 3)

    @model_validator(mode="after")
    def check_consistency(self) -> "QuadraticModel":
        n = self.linear.shape[0]
        if self.linear.shape != (n, n):
            raise ValueError("linear part must be square")
        if self.constant.shape != (n,):
            raise ValueError(f"constant must have length {n}")
        if self.noise.ndim != 2 or self.noise.shape[0] != n:
            raise ValueError(f"noise must have {n} rows")
        if self.quad_coefs.shape != (self.quad_terms.shape[0],):
            raise ValueError("one coefficient per quadratic term is required")
        if self.quad_terms.size:
            if self.quad_terms.min() < 0 or self.quad_terms.max() >= n:
                raise ValueError("quadratic term index out of range")
            if np.any(self.quad_terms[:, 1] > self.quad_terms[:, 2]):
                raise ValueError("quadratic terms need j <= k")
            if np.unique(self.quad_terms, axis=0).shape[0] != self.quad_terms.shape[0]:
                raise ValueError("duplicate quadratic terms")
        return self

    @classmethod
    def from_coefficients(
        cls,
        theta: np.ndarray,
        provenance: ModelProvenance,
        constant: np.ndarray | None = None,
        noise: np.ndarray | None = None,
        basis_id: str = "unspecified",
    ) -> "QuadraticModel":
        """Build a model from an n x M coefficient matrix in library order.

        Columns 0..n-1 are the linear terms, the rest the monomials of
        monomial_pairs(n). Zero entries are not stored.
        """
        theta = np.asarray(theta, dtype=float)
        n = theta.shape[0]
        J, K = monomial_pairs(n)
        if theta.shape != (n, n + J.size):
            raise ValueError(f"coefficient matrix must be {n} x {n + J.size}")
        rows, cols = np.nonzero(theta[:, n:])
        terms = np.column_stack([rows, J[cols], K[cols]])
        return cls(
            linear=theta[:, :n].copy(),
            quad_terms=terms,
            quad_coefs=theta[:, n:][rows, cols],
            constant=np.zeros(n) if constant is None else constant,
            noise=np.zeros((n, n)) if noise is None else noise,
            provenance=provenance,
            basis_id=basis_id,
        )

    @property
    def n(self) -> int:
        """State dimension."""
        return self.linear.shape[0]

    @property
    def library_size(self) -> int:
        """Number of linear plus quadratic monomials, n + n(n+1)/2."""
        return self.n + self.n * (self.n + 1) // 2

    @property
    def term_count(self) -> int:
        """Nonzero drift terms: linear, quadratic and constant."""
        return int(
            np.count_nonzero(self.linear)
            + np.count_nonzero(self.quad_coefs)
            + np.count_nonzero(self.constant)
        )

    def coefficient_matrix(self) -> np.ndarray:
        """Dense n x M coefficients in library order (constant excluded)."""
        n = self.n
        theta = np.zeros((n, self.library_size))
        theta[:, :n] = self.linear
        if self.quad_terms.size:
            i, j, k = self.quad_terms.T
            cols = n + j * n - j * (j - 1) // 2 + (k - j)
            theta[i, cols] = self.quad_coefs
        return theta

    def term_mask(self) -> np.ndarray:
        """Boolean n x M mask of the nonzero drift terms."""
        return self.coefficient_matrix() != 0.0

    def drift_function(self) -> Callable[[np.ndarray], np.ndarray]:
        """Return a fast drift evaluator for states of shape (n,) or (n, p)."""
        n = self.n
        J, K = monomial_pairs(n)
        quadratic = self.coefficient_matrix()[:, n:]
        linear = self.linear.copy()
        constant = self.constant.copy()

        def drift(a: np.ndarray) -> np.ndarray:
            monomials = a[J] * a[K]
            out = linear @ a + quadratic @ monomials
            if a.ndim == 1:
                return out + constant
            return out + constant[:, None]

        return drift

    def drift(self, a: np.ndarray) -> np.ndarray:
        """Evaluate b + A a + Q(a) at one state (n,) or many states (n, p)."""
        return self.drift_function()(np.asarray(a, dtype=float))

    def quadratic_part(self, a: np.ndarray) -> np.ndarray:
        """Evaluate Q(a) alone."""
        a = np.asarray(a, dtype=float)
        J, K = monomial_pairs(self.n)
        return self.coefficient_matrix()[:, self.n :] @ (a[J] * a[K])

    def jacobian_function(self) -> Callable[[np.ndarray], np.ndarray]:
        """Return an evaluator of the drift Jacobian at a single state."""
        n = self.n
        J, K = monomial_pairs(n)
        quadratic = self.coefficient_matrix()[:, n:]
        linear = self.linear.copy()
        rows = np.arange(J.size)

        def jacobian(a: np.ndarray) -> np.ndarray:
            # d(a_j a_k)/da, with a_j^2 picking up 2 a_j
            dmono = np.zeros((J.size, n))
            np.add.at(dmono, (rows, J), a[K])
            np.add.at(dmono, (rows, K), a[J])
            return linear + quadratic @ dmono

        return jacobian

    def jacobian(self, a: np.ndarray) -> np.ndarray:
        """Drift Jacobian at a single state."""
        return self.jacobian_function()(np.asarray(a, dtype=float))
