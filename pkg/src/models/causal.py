"""Feature libraries, causation-entropy matrices and selected structures."""

from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.models.quadratic import QuadraticModel, monomial_pairs, pair_position


class DerivativeScheme(str, Enum):
    """Finite-difference schemes for time derivatives."""

    CENTRAL = "central"
    FORWARD = "forward"

    def __str__(self) -> str:
        return self.value


class StrategyKind(str, Enum):
    """Ways of turning causation entropies into a model structure."""

    GLOBAL_THRESHOLD = "global_threshold"
    GLOBAL_SPARSITY = "global_sparsity"
    PER_EQUATION_SPARSITY = "per_equation_sparsity"
    GAP = "gap"

    def __str__(self) -> str:
        return self.value


class FeatureLibrary(BaseModel):
    """Linear then quadratic monomials of an n-dimensional state.

    terms holds 0-based index tuples: (j,) for a_j and (j, k), j <= k,
    for a_j a_k, in lexicographic order.
    """

    model_config = ConfigDict(frozen=True)

    n: int = Field(ge=1)

    @property
    def M(self) -> int:
        return self.n + self.n * (self.n + 1) // 2

    @property
    def terms(self) -> list[tuple[int, ...]]:
        J, K = monomial_pairs(self.n)
        return [(j,) for j in range(self.n)] + list(zip(J.tolist(), K.tolist()))

    def index_of(self, term: tuple[int, ...]) -> int:
        """0-based position of a term in the library."""
        if len(term) == 1:
            if not 0 <= term[0] < self.n:
                raise ValueError(f"no linear term {term}")
            return term[0]
        j, k = sorted(term)
        if not 0 <= j <= k < self.n:
            raise ValueError(f"no quadratic term {term}")
        return self.n + pair_position(j, k, self.n)

    def labels(self) -> list[str]:
        """Printable names, 1-based: a1, a2, ..., a1*a1, a1*a2, ..."""
        return [
            "*".join(f"a{index + 1}" for index in term) for term in self.terms
        ]


class CausationMatrix(BaseModel):
    """n x M causation entropies in bits."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    values: np.ndarray
    base: int = 2
    min_raw_value: float = 0.0

    @field_validator("values", mode="before")
    @classmethod
    def as_float_matrix(cls, v):
        return np.atleast_2d(np.asarray(v, dtype=float))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


class ThresholdStrategy(BaseModel):
    """A selection rule and its parameter (threshold, fraction or gap floor)."""

    model_config = ConfigDict(frozen=True)

    kind: StrategyKind
    value: float

    @model_validator(mode="after")
    def check_value(self) -> "ThresholdStrategy":
        if self.kind in (
            StrategyKind.GLOBAL_SPARSITY,
            StrategyKind.PER_EQUATION_SPARSITY,
        ) and not 0.0 <= self.value < 1.0:
            raise ValueError("sparsity fraction must lie in [0, 1)")
        if self.kind == StrategyKind.GAP and self.value < 0:
            raise ValueError("gap floor must be non-negative")
        return self


class ThresholdRecord(BaseModel):
    """Strategy applied plus the numeric cutoffs it produced."""

    strategy: ThresholdStrategy
    cutoffs: list[float] = []
    selected: int = 0


class ModelStructure(BaseModel):
    """Boolean n x M selection mask over a feature library."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    mask: np.ndarray
    threshold_record: ThresholdRecord

    @field_validator("mask", mode="before")
    @classmethod
    def as_bool_matrix(cls, v):
        return np.atleast_2d(np.asarray(v, dtype=bool))

    @model_validator(mode="after")
    def check_count(self) -> "ModelStructure":
        if int(self.mask.sum()) != self.threshold_record.selected:
            raise ValueError("mask count and recorded selection disagree")
        return self

    @property
    def term_count(self) -> int:
        return int(self.mask.sum())

    @property
    def n(self) -> int:
        return self.mask.shape[0]


class StructureComparison(BaseModel):
    """Agreement of a learned structure with a reference structure."""

    true_positives: int
    false_positives: int
    misses: int
    misses_all_quadratic: bool
    reference_count: int


class FitOptions(BaseModel):
    """Options of the maximum-likelihood fit."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    include_constant: bool = False
    known_Q: Optional[QuadraticModel] = None
    derivative_scheme: DerivativeScheme = DerivativeScheme.CENTRAL
