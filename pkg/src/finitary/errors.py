"""Exception hierarchy shared by all modules."""


class FinitaryError(Exception):
    """Base class for every error raised by this package."""


class DistributionError(FinitaryError, ValueError):
    pass


class NegativeProbability(DistributionError):
    pass


class MassDeviation(DistributionError):
    pass


class InvalidTailRate(DistributionError):
    pass


class EmptySupport(DistributionError):
    pass


class ZeroSurvival(DistributionError):
    pass


class OutsideRadius(FinitaryError, ValueError):
    pass


class MuInfeasible(FinitaryError, ValueError):
    pass


class LatticeInput(FinitaryError, ValueError):
    pass


class DegenerateFit(FinitaryError):
    pass


class ImpossibleBlock(FinitaryError, ValueError):
    pass


class BoundedJump(FinitaryError, ValueError):
    """Raised when the regeneration coder is handed a bounded jump law.

    Bounded laws have to go through :func:`finitary.renewal_coder.cftp_code_bounded`.
    """


class LatticeJump(LatticeInput):
    pass


class HazardVanishes(FinitaryError, ValueError):
    pass


class ScanBudgetExceeded(FinitaryError, RuntimeError):
    pass


class CftpBudgetExceeded(FinitaryError, RuntimeError):
    pass


class ChainError(FinitaryError, ValueError):
    pass


class NotIrreducible(ChainError):
    pass


class Periodic(ChainError):
    pass


class BadRows(ChainError):
    pass


class TailNotResolved(ChainError):
    pass


class ImpossibleLength(ChainError):
    pass


class TooFewSamples(FinitaryError, ValueError):
    pass
