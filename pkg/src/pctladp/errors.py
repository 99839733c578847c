"""Exception hierarchy.  The CLI maps each family to an exit code."""


class PctlAdpError(Exception):
    exit_code = 1


class InputError(PctlAdpError, ValueError):
    """Malformed user input: files, distributions, hyperparameters."""

    exit_code = 2


class StructuralError(InputError):
    """Arrays whose shapes or supports do not line up."""


class PctlSyntaxError(InputError):
    def __init__(self, message: str, offset: int, expected=()):
        self.offset = offset
        self.expected = tuple(sorted(set(expected)))
        detail = f" (expected one of: {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{message} at offset {offset}{detail}")


class ResolutionError(InputError):
    """An atomic proposition that the MDP does not label."""


class UnsupportedFormulaError(InputError):
    pass


class InfeasibleTranslationError(InputError):
    """The epsilon-adjusted probability bound leaves [0, 1]."""


class SamplingCoverageError(PctlAdpError):
    def __init__(self, message: str, state=None):
        self.state = state
        super().__init__(message)


class ConvergenceError(PctlAdpError):
    exit_code = 3


class DivergenceError(ConvergenceError):
    pass


class NonMixingError(ConvergenceError):
    def __init__(self, message: str, state=None):
        self.state = state
        super().__init__(message)


class OffPolicyError(PctlAdpError):
    pass


class ConstraintViolation(PctlAdpError):
    exit_code = 4
