"""Exception hierarchy shared by every chemokin package.

Each class carries a stable ``code`` that the command line maps to an exit
status and that shows up in log lines.
"""

__all__ = [
    "ChemokinError",
    "BadConfig",
    "AssumptionViolation",
    "CflViolation",
    "SpecViolation",
    "NonFiniteInput",
    "PositivityViolation",
    "LeftDomain",
    "NoContraction",
    "NoSignChange",
    "EmptyField",
    "DumpError",
    "VerificationFailed",
]


class ChemokinError(Exception):
    code = "solver-error"

    def __str__(self):
        return f"[{self.code}] {super().__str__()}"


class BadConfig(ChemokinError):
    code = "bad-config"


class AssumptionViolation(ChemokinError):
    code = "assumption-violation"


class CflViolation(ChemokinError):
    code = "cfl-violation"


class SpecViolation(ChemokinError):
    code = "spec-violation"


class NonFiniteInput(ChemokinError):
    code = "non-finite-input"


class PositivityViolation(ChemokinError):
    code = "positivity-violation"


class LeftDomain(ChemokinError):
    code = "left-domain"


class NoContraction(ChemokinError):
    code = "no-contraction"


class NoSignChange(ChemokinError):
    code = "no-sign-change"


class EmptyField(ChemokinError):
    code = "empty-field"


class DumpError(ChemokinError):
    code = "io-error"


class VerificationFailed(ChemokinError):
    code = "verification-failed"
