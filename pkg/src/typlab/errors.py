"""Exception taxonomy shared by all typlab modules."""


class TyplabError(Exception):
    """Base class for all domain errors raised by typlab."""


# ---------------------------------------------------------------- core_stats

class EmptySupport(TyplabError):
    """No strictly positive probability entries remain."""


class DuplicateId(TyplabError):
    """The same token id appears more than once in a raw distribution."""


class NonFinite(TyplabError):
    """A probability is NaN, infinite, or negative."""


class NumericInconsistency(TyplabError):
    """An internal numeric identity failed beyond tolerance."""


class SupportMismatch(TyplabError):
    """Cross-entropy requested where p places mass outside q's support."""


class EmptyString(TyplabError):
    """An empirical distribution was requested for an empty token list."""


class UnknownToken(TyplabError):
    """A token id falls outside the declared alphabet."""


# --------------------------------------------------------------------- trace

class HeaderMissing(TyplabError):
    """A trace stream does not begin with a header record."""


class MalformedRecord(TyplabError):
    """A trace line could not be parsed or violates the record schema."""

    def __init__(self, line_number: int, reason: str):
        super().__init__(f"line {line_number}: {reason}")
        self.line_number = line_number
        self.reason = reason


class IndexGap(TyplabError):
    """Step indices are not consecutive starting at 1."""


class ChosenNotInSupport(TyplabError):
    """A step's chosen token id is absent from its recorded distribution."""


class SinkFailure(TyplabError):
    """Writing a trace to the output sink failed."""


class EmptyTrace(TyplabError):
    """An operation requiring at least one step received none."""


# ------------------------------------------------------------------- sources

class MaxAttemptsExceeded(TyplabError):
    """Grammar-filtered sampling gave up before producing an accepted string."""

    def __init__(self, attempts: int):
        super().__init__(f"no accepted string after {attempts} attempts")
        self.attempts = attempts


# -------------------------------------------------------------------- oracle

class CapExceeded(TyplabError):
    """Requested enumeration exceeds the configured V**n cap."""


class UnsupportedModel(TyplabError):
    """Exact enumeration is not defined for this source variant."""


class EmptyLanguageAtLengthN(TyplabError):
    """The grammar accepts no string at the requested length."""


class BoundViolated(TyplabError):
    """An exact enumeration contradicted a proven inequality.

    This falsifies the implementation, not the theory; the offending
    strings are attached for inspection.
    """

    def __init__(self, name: str, counterexamples):
        super().__init__(f"bound {name!r} violated ({len(counterexamples)} counterexamples)")
        self.name = name
        self.counterexamples = counterexamples


# ---------------------------------------------------------------- typicality

class ZeroProbabilityPath(TyplabError):
    """A scored token has probability below the floor under the scorer."""

    def __init__(self, position: int, token: int):
        super().__init__(f"token {token} at position {position} has zero probability under scorer")
        self.position = position
        self.token = token


# ----------------------------------------------------------------------- cli

class ConfigError(TyplabError):
    """Invalid command-line or config-file parameters."""
