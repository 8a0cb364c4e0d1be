"""Exception hierarchy shared by all greenkam modules."""


class GreenKamError(Exception):
    """Base class for every error raised by the package."""


class ModelDomainError(GreenKamError):
    """A Hamiltonian evaluation produced a non-finite value."""


class ConvexityError(GreenKamError):
    """Newton inversion of the fiber derivative did not converge."""


class IntegrationAccuracyError(GreenKamError):
    """Energy drift of an integrated orbit exceeded the configured budget."""

    def __init__(self, message, drift=None, budget=None):
        super().__init__(message)
        self.drift = drift
        self.budget = budget


class ConjugatePointError(GreenKamError):
    """The Riccati flow blew up: a conjugate vector was met along the orbit."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class LimitNotReachedError(GreenKamError):
    """Doubling sequence for a Green bundle did not settle before T_max."""

    def __init__(self, message, tail=None, horizon=None):
        super().__init__(message)
        self.tail = tail
        self.horizon = horizon


class UnderflowError(GreenKamError):
    """A QR factor had a vanishing diagonal entry."""


class ActionError(GreenKamError):
    """Discrete action minimisation failed; ``arc`` holds the best candidate."""

    def __init__(self, message, arc=None):
        super().__init__(message)
        self.arc = arc


class NonConvergenceError(GreenKamError):
    """A fixed-point iteration hit ``max_iter``."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history if history is not None else []


class ConjugacyError(GreenKamError):
    """The conjugate weak KAM pair has an empty equality set."""


class ScenarioError(GreenKamError):
    """Invalid scenario file; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
