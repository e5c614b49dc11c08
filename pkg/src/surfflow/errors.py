"""Exception hierarchy.

Each class maps to a CLI exit code (see :mod:`surfflow.cli`).
"""


class SurfflowError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(SurfflowError, ValueError):
    """Invalid or unparsable run configuration."""

    exit_code = 2

    def __init__(self, message, problems=None):
        self.problems = list(problems or [])
        if self.problems:
            message = message + "\n" + "\n".join(f"  - {p}" for p in self.problems)
        super().__init__(message)


class MeshError(SurfflowError, ValueError):
    """Mesh cannot be parsed or violates a structural invariant."""

    exit_code = 3


class SolverError(SurfflowError, RuntimeError):
    """A linear solve failed to converge or broke down."""

    exit_code = 4


class LinearDependenceError(SolverError):
    """Harmonic candidates stayed rank deficient after all redraws."""


class BlowUpError(SurfflowError, FloatingPointError):
    """Non-finite values appeared in the flow state."""

    exit_code = 5
