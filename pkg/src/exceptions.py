from typing import Iterable, Optional


class ReplanError(Exception):
    """Base class for every error raised by the replanning lab."""


# --- PDDL front end ---

class PDDLError(ReplanError):
    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.message = message
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")


class PDDLSyntaxError(PDDLError):
    pass


class PDDLSemanticError(PDDLError):
    pass


# --- Plans ---

class PlanError(ReplanError):
    pass


class PreconditionError(PlanError):
    def __init__(self, action: str, missing: Iterable):
        self.action = action
        self.missing = sorted(missing)
        listed = " ".join(str(a) for a in self.missing)
        super().__init__(f"{action}: unsatisfied preconditions {listed}")


class StepFailure(PlanError):
    def __init__(self, index: int, action: str, missing: Iterable):
        self.index = index
        self.action = action
        self.missing = sorted(missing)
        listed = " ".join(str(a) for a in self.missing)
        super().__init__(f"step {index} {action} failed, missing {listed}")


class PlanParseError(PlanError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"{message} (line {line})" if line is not None else message)


# --- Compilation ---

class CompileError(ReplanError):
    pass


# --- Planning ---

class PlannerError(ReplanError):
    pass


class BudgetExceeded(PlannerError):
    pass


class NoPlanWithinBound(PlannerError):
    pass


class ExternalSolverError(PlannerError):
    pass


class ExternalPlanInvalid(PlannerError):
    pass


# --- Scenarios ---

class PerturbationError(ReplanError):
    pass


class BenchError(ReplanError):
    """Benchmark output that cannot be summarised or plotted."""
