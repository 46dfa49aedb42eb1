"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: configuration problems exit 2,
precondition failures exit 3, numeric failures exit 4.
"""


class CritlabError(Exception):
    """Base class for all library errors."""

    exit_code = 4


class InvalidConfiguration(CritlabError, ValueError):
    exit_code = 2


class InvalidInput(CritlabError, ValueError):
    exit_code = 3


class ResourceLimit(CritlabError):
    exit_code = 3


class ManifoldMismatch(CritlabError, ValueError):
    exit_code = 3


class NotAdmissible(CritlabError, ValueError):
    """The field is outside H_f^+: its weighted q-mass is not positive."""

    exit_code = 3


class PreconditionFailure(CritlabError):
    exit_code = 3


class UnsupportedDimension(PreconditionFailure):
    pass


class NoCrossing(PreconditionFailure):
    """A bisection bracket does not contain a sign change."""


class ResolutionError(PreconditionFailure):
    pass


class NumericFailure(CritlabError):
    exit_code = 4
