"""Exception types raised across the package."""


class StenoflowError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(StenoflowError, ValueError):
    pass


class DomainError(StenoflowError, ValueError):
    pass


class StateValidityError(StenoflowError, ValueError):
    """A (A, Q) state with non-positive area was encountered."""


class HyperbolicityError(StenoflowError, ArithmeticError):
    """The flux Jacobian lost real eigenvalues."""


class InvalidInvariantsError(StenoflowError, ValueError):
    pass


class BoundarySolveError(StenoflowError, RuntimeError):
    pass


class StepFailure(StenoflowError, RuntimeError):
    """A Runge-Kutta stage produced an invalid state."""

    def __init__(self, message, *, t=None, element=None, state=None):
        super().__init__(message)
        self.t = t
        self.element = element
        self.state = state


class SolverError(StenoflowError, RuntimeError):
    def __init__(self, message, *, t=None, element=None, state=None):
        super().__init__(message)
        self.t = t
        self.element = element
        self.state = state


class BVPSolveError(StenoflowError, RuntimeError):
    def __init__(self, message, residual_history=()):
        super().__init__(message)
        self.residual_history = list(residual_history)


class ConfigError(StenoflowError, ValueError):
    pass
