"""Exception hierarchy shared by every qcsim module."""


class QcsimError(Exception):
    """Base class for all qcsim failures."""


class DimensionError(QcsimError, ValueError):
    """Operator/state shapes are incompatible or outside the allowed range."""


class TruncationError(QcsimError):
    """A Fock truncation is too small for the requested state."""


class ValidityError(QcsimError):
    """A density matrix lost Hermiticity, trace or positivity beyond tolerance."""


class StepFailure(QcsimError):
    """A stochastic step produced a catastrophically non-positive state.

    Carries the step index, trajectory seed and minimum eigenvalue when known.
    """

    def __init__(self, message, step=None, seed=None, min_eigenvalue=None):
        super().__init__(message)
        self.step = step
        self.seed = seed
        self.min_eigenvalue = min_eigenvalue


class ConvergenceError(QcsimError):
    """Steady-state search did not converge within the allowed time."""


class StabilityError(QcsimError, ValueError):
    """Time step violates a stability bound."""


class QuadratureError(QcsimError):
    """Node doubling changed a quadrature result by more than its tolerance."""


class ScenarioError(QcsimError, ValueError):
    """Scenario document failed validation."""
