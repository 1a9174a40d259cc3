"""Exception hierarchy shared across the package."""


class CNLSError(Exception):
    """Base class for all package errors."""


class ParameterError(CNLSError, ValueError):
    """Invalid or inconsistent parameters."""


class ConstructionError(CNLSError, ValueError):
    """A profile could not be sampled on the grid."""


class EvaluationError(CNLSError, ValueError):
    """A functional could not be evaluated (non-finite input)."""


class NumericalIntegrityError(CNLSError, ArithmeticError):
    """A manifestly nonnegative quantity came out negative beyond round-off."""


class SolverOverflow(CNLSError, ArithmeticError):
    """A time step produced non-finite values.

    ``last_state`` holds the last finite snapshot.
    """

    def __init__(self, message, last_state=None):
        super().__init__(message)
        self.last_state = last_state


class ResolutionError(CNLSError, ValueError):
    """Quadrature or grid too coarse for the requested evaluation."""


class NoScalingError(CNLSError, ValueError):
    """The constraint cannot be reached by amplitude scaling (P <= 0)."""


class InfeasibleError(CNLSError, ValueError):
    """No admissible candidate in a family."""


class NoGroundStateError(CNLSError, RuntimeError):
    """Ground-state iteration collapsed or diverged."""


class ContractError(CNLSError, ValueError):
    """A precondition of an operation was violated."""


class ConfigError(CNLSError, ValueError):
    """Configuration document failed validation."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
