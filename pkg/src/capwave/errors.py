"""Exception hierarchy shared by all modules."""


class CapwaveError(Exception):
    """Base class for solver errors."""


class InvalidParameters(CapwaveError, ValueError):
    pass


class NonZeroMean(CapwaveError, ValueError):
    pass


class InvalidDepth(CapwaveError, ValueError):
    pass


class DomainFault(CapwaveError, ArithmeticError):
    """A pointwise map was evaluated at a singular tuple."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class StagnantConfiguration(CapwaveError, ArithmeticError):
    """min Wkh fell below the stagnation floor."""

    def __init__(self, message, min_wkh=None):
        super().__init__(message)
        self.min_wkh = min_wkh


class MeanDefect(CapwaveError, ArithmeticError):
    """A quantity that must have zero mean does not."""


class AliasOverflow(CapwaveError, ArithmeticError):
    pass


class DegenerateQuadratic(CapwaveError, ArithmeticError):
    pass


class KernelOverflow(CapwaveError, ArithmeticError):
    pass


class NoSignChange(CapwaveError, ArithmeticError):
    pass


class NoConvergence(CapwaveError, RuntimeError):
    """Newton failed; ``best`` holds the best iterate and its diagnostics."""

    def __init__(self, message, best=None, history=None):
        super().__init__(message)
        self.best = best
        self.history = history or []


class LeftDomain(NoConvergence):
    """A Newton iterate violated the stagnation floor."""


class IndexOutOfRange(CapwaveError, IndexError):
    pass
