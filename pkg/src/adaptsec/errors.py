"""Exception types shared across the package."""


class AdaptsecError(Exception):
    """Base class for all package errors."""


class DslSyntaxError(AdaptsecError):
    """Malformed DSL text; carries position and what was expected."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        loc = f" (line {line}, col {column})" if line is not None else ""
        super().__init__(f"{message}{loc}")


class DanglingReferenceError(AdaptsecError):
    pass


class CycleError(AdaptsecError):
    pass


class UnknownAssumptionError(AdaptsecError):
    pass


class ParamTypeError(AdaptsecError):
    pass


class UnknownSchemaError(AdaptsecError):
    pass


class ArityMismatchError(AdaptsecError):
    pass


class UnboundVariableError(AdaptsecError):
    pass


class InapplicableActionError(AdaptsecError):
    """An action could not be applied during replay; carries the 1-based time."""

    def __init__(self, message: str, time: int):
        self.time = time
        super().__init__(f"{message} (at time {time})")


class HorizonError(AdaptsecError):
    pass


class NoCandidateError(AdaptsecError):
    """No template matched any action of the violating trace."""


class InterventionRequiredError(AdaptsecError):
    """Learning could not pick a control automatically; a human must choose.

    Carries the evaluated candidates so a plan can turn them into a choice
    question for the engineer.
    """

    def __init__(self, message: str, candidates=()):
        self.candidates = list(candidates)
        super().__init__(message)


class OutOfOrderEventError(AdaptsecError):
    """Event timestamp regressed; carries the last timestamp seen on the stream."""

    def __init__(self, message: str, last_seen: int):
        self.last_seen = last_seen
        super().__init__(message)


class InsufficientSamplesError(AdaptsecError):
    pass


class InterventionStateError(AdaptsecError):
    """Answering an intervention that is not pending, or with a bad schema."""


class AnswerSchemaError(AdaptsecError):
    pass


class ScenarioError(AdaptsecError):
    pass


class NonEnactableControlError(AdaptsecError):
    pass
