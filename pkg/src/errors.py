"""Error hierarchy shared by the numerical modules and the command line.

Every error carries the process exit code the CLI reports for it:
1. usage errors (bad flags, incompatible inputs)
2. artifact I/O errors (missing, truncated or foreign files)
3. numerical failures (blow-up, degeneracy, divergence)
"""


class CromError(Exception):
    """Base class for all errors raised by this package."""

    exit_code: int = 1

    def __init__(self, message: str) -> None:
        super().__init__(message)
        self.message = message


class UsageError(CromError):
    """Invalid command-line usage or incompatible inputs."""

    exit_code = 1


class ArtifactIOError(CromError):
    """An artifact file could not be read or written."""

    exit_code = 2


class NumericalError(CromError):
    """Base class for numerical failures."""

    exit_code = 3


class InvalidInputError(NumericalError):
    """Input data violates a precondition of a numerical operation."""


class InsufficientDataError(NumericalError):
    """Too few samples for the requested computation."""


class BlowUpError(NumericalError):
    """A time integration left the admissible range."""

    def __init__(self, message: str, last_stable_time: float) -> None:
        super().__init__(f"{message} (last stable time {last_stable_time:.6g})")
        self.last_stable_time = last_stable_time


class RankDeficiencyError(NumericalError):
    """Requested more modes than the snapshot set supports."""


class DegenerateLibraryError(NumericalError):
    """A covariance submatrix stayed singular after jitter escalation."""

    def __init__(self, message: str, submatrix: str) -> None:
        super().__init__(f"{message} [{submatrix}]")
        self.submatrix = submatrix


class IllPosedFitError(NumericalError):
    """A regression problem has no well-defined solution."""

    def __init__(self, message: str, equation: int) -> None:
        super().__init__(f"{message} (equation {equation})")
        self.equation = equation


class DivergenceError(NumericalError):
    """An ensemble member left the admissible range."""

    def __init__(self, message: str, time: float) -> None:
        super().__init__(f"{message} at t={time:.6g}")
        self.time = time


class RegularizationError(NumericalError):
    """The regularized filter gain is not finite."""
