"""Exception types shared across the package.

Every error raised for bad input or a failed construction derives from
``EdtlabError`` so the command line can map it to exit status 1.
"""


class EdtlabError(Exception):
    """Base class for domain errors."""


class EmptyWordError(EdtlabError, ValueError):
    """An operation needed a nonempty word."""


class FactorRangeError(EdtlabError, IndexError):
    """A factor range fell outside the word."""


class ParseError(EdtlabError, ValueError):
    """A serialized object could not be read."""


class GrammarError(EdtlabError, ValueError):
    """A grammar, transducer or rule violates its structural invariants."""


class BudgetExceeded(EdtlabError):
    """A search or construction ran past its configured budget."""

    def __init__(self, message: str, bound: int | None = None):
        super().__init__(message)
        self.bound = bound


class DerivationError(EdtlabError, ValueError):
    """A derivation trace does not follow the rules of its grammar."""


class WitnessError(EdtlabError, ValueError):
    """Parameters or words are invalid for the counterexample family."""


class StepError(EdtlabError, ValueError):
    """A reverse derivation step does not apply to a tuple."""


class WeightBoundError(StepError):
    """A tuple's total weight exceeds the derivation bound."""


class TransferError(EdtlabError, AssertionError):
    """The decomposition case analysis produced no valid decomposition.

    At full-strength parameters this would contradict the transfer
    propositions, so it is raised rather than papered over.
    """
