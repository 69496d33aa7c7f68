"""Exception hierarchy.

Two families matter to callers (and to the CLI exit codes):

* ``InputError``: the data or the request is malformed (exit code 1).
* ``NumericalError``: the data are well formed but the computation has no
  usable answer, e.g. a diverging Cox fit (exit code 2).
"""

from __future__ import annotations

from dataclasses import dataclass


class SurvivalError(Exception):
    """Base class for all package errors."""


class InputError(SurvivalError, ValueError):
    pass


class NumericalError(SurvivalError, ArithmeticError):
    pass


@dataclass(frozen=True)
class Violation:
    subject_id: object
    kind: str
    reason: str

    def __str__(self) -> str:
        return f"subject {self.subject_id!r}: {self.kind}: {self.reason}"


class RecordError(InputError):
    """Raised by record validation.

    The exception class is that of the first violation found; ``violations``
    lists every problem in the input so they can all be reported at once.
    """

    def __init__(self, violations: list[Violation]):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations[:10])
        more = len(self.violations) - 10
        if more > 0:
            lines += f"; ... and {more} more"
        super().__init__(lines)


class NonPositiveDuration(RecordError):
    pass


class OverlappingIntervals(RecordError):
    pass


class UnknownState(RecordError):
    pass


class SelfTransition(RecordError):
    pass


class NonFiniteInput(InputError):
    pass


class EmptyData(InputError):
    pass


class UnknownTransition(InputError):
    pass


class NotSurvivalData(InputError):
    pass


class OneGroupEmpty(InputError):
    pass


class InvalidSpec(InputError):
    pass


class EmptyStudy(InputError):
    pass


class DegenerateVariance(NumericalError):
    pass


class SingularCovariance(NumericalError):
    def __init__(self, message: str, rank: int):
        super().__init__(message)
        self.rank = rank


class NegativeDiagonal(NumericalError):
    pass


class RiskSetEmpty(NumericalError):
    pass


class SingularInformation(NumericalError):
    pass


class MonotoneLikelihood(NumericalError):
    """The partial likelihood keeps increasing along some direction.

    ``fit`` holds the last (non-converged) iterate.
    """

    def __init__(self, message: str, fit=None):
        super().__init__(message)
        self.fit = fit
