"""Exception hierarchy shared by every module."""


class NonlocalDecayError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParameter(NonlocalDecayError, ValueError):
    pass


class HypothesisViolated(NonlocalDecayError):
    """A kernel does not satisfy the positivity-near-the-diagonal assumption."""


class Unsupported(NonlocalDecayError):
    pass


class DegenerateKernel(NonlocalDecayError):
    """The kernel symbol touches its maximum away from the zero frequency."""


class StepRejected(NonlocalDecayError):
    pass


class InsufficientData(NonlocalDecayError):
    pass


class NoConvergence(NonlocalDecayError):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class PositivityLost(NonlocalDecayError):
    pass


class ConfigError(NonlocalDecayError):
    """Malformed or inconsistent experiment configuration."""

    def __init__(self, message, line=None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
