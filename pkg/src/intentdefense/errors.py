"""Exception hierarchy shared by all subsystems."""


class IntentDefenseError(Exception):
    """Base class; the CLI maps every subclass to exit code 1."""


class KBError(IntentDefenseError):
    pass


class KBParseError(KBError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class DanglingReferenceError(KBError):
    def __init__(self, identifier: str, context: str = ""):
        msg = f"unresolved reference {identifier!r}"
        if context:
            msg += f" in {context}"
        super().__init__(msg)
        self.identifier = identifier


class DuplicateIdError(KBError):
    def __init__(self, identifier: str, kind: str):
        super().__init__(f"duplicate {kind} {identifier!r}")
        self.identifier = identifier


class UnknownIdentifierError(KBError):
    def __init__(self, identifier: str, kind: str = "identifier"):
        super().__init__(f"unknown {kind} {identifier!r}")
        self.identifier = identifier


class UnknownRestrictionError(KBError):
    pass


class InvalidKnowledgeBase(KBError):
    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations)
        super().__init__(f"knowledge base violates invariants: {lines}")


class ContractError(IntentDefenseError):
    """A caller broke an operation's precondition."""


class NotFoundError(ContractError):
    pass


class ImpossibleObservationError(IntentDefenseError):
    pass


class ScenarioError(IntentDefenseError):
    pass


class EnforcementError(IntentDefenseError):
    """Translation failure; reported back to the defender as misimplementation."""

    reason = "enforcement"


class NoCapableSF(EnforcementError):
    reason = "no-capable-sf"


class MissingParameter(EnforcementError):
    reason = "missing-parameter"
