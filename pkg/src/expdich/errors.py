"""Exception hierarchy shared by all modules."""


class DichotomyError(Exception):
    """Base class for every error raised by the package."""


class ContractError(DichotomyError, ValueError):
    """An argument violates a documented precondition."""


class GapViolationError(DichotomyError):
    """A spectrum has an eigenvalue inside a gap that was required to be empty."""


class NoGapError(DichotomyError):
    """No usable singular-value gap separates the stable and unstable directions."""


class CollapseError(DichotomyError):
    """A propagated frame lost rank."""


class DegeneracyError(DichotomyError):
    """A covector family or preimage computation became degenerate."""


class TransversalityError(DichotomyError):
    """Two subspaces do not form a direct sum to working precision."""


class ConditioningError(DichotomyError):
    """A restricted transition is numerically singular."""


class HypothesisError(DichotomyError):
    """A hypothesis of a certification procedure does not hold."""


class DomainError(DichotomyError):
    """A simulation would leave the trustworthy part of the truncated domain."""


class SeparationError(DichotomyError):
    """Localized cutoffs of distinct wells overlap."""
