"""Exception hierarchy.

Every error carries a short machine-readable ``code`` used by the CLI when it
reports failures on a single line.
"""


class GeoquantError(Exception):
    code = "error"


class DomainError(GeoquantError, ValueError):
    code = "domain"


class PreconditionError(GeoquantError, ValueError):
    code = "precondition"


class SingularityError(GeoquantError, ValueError):
    code = "singular"


class NonDifferentiableError(GeoquantError, ValueError):
    """Raised where the objective has a kink (an atom with ``r(0) > 0``).

    The subgradient data is attached so callers can still reason about the
    point: ``dist`` is the distribution-function value and ``atom_slack`` the
    radius ``r(0) * P[{x}]``.
    """

    code = "nondifferentiable"

    def __init__(self, message, dist=None, atom_slack=0.0):
        super().__init__(message)
        self.dist = dist
        self.atom_slack = atom_slack


class UniquenessError(PreconditionError):
    code = "uniqueness"


class HypothesisError(PreconditionError):
    """A sandwich/CLT hypothesis gate failed."""

    code = "hypothesis"


class ConditioningError(GeoquantError, ArithmeticError):
    code = "conditioning"


class SpecParseError(GeoquantError, ValueError):
    """Bad regularizer or generator spec string (CLI exit status 2)."""

    code = "parse"
