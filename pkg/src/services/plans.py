"""
Plan execution, validation, plan-difference metrics and commitment
extraction.
"""
import re
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Collection, FrozenSet, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

from ..exceptions import PlanParseError, PreconditionError, StepFailure
from .grounding import instantiate
from .pddl_types import ActionSignature, GroundAction, GroundAtom, Problem, SoftGoal, State

Plan = Tuple[GroundAction, ...]


@dataclass(frozen=True)
class StateTrace:
    states: Tuple[State, ...]

    @property
    def final(self) -> State:
        return self.states[-1]

    def __len__(self) -> int:
        return len(self.states)

    def ever_true(self, a: GroundAtom) -> bool:
        return any(a in s for s in self.states)


class Commitment(NamedTuple):
    atom: GroundAtom

    def __str__(self) -> str:
        return str(self.atom)


class PlanDiffMetrics(NamedTuple):
    set_diff: int
    sym_diff: int


@dataclass(frozen=True)
class ValidationResult:
    valid: bool
    unmet_hard_goals: FrozenSet[GroundAtom]
    unsatisfied_soft_goals: FrozenSet[SoftGoal]
    penalty_sum: Fraction
    failed_step: Optional[int] = None
    missing: Tuple[GroundAtom, ...] = ()
    trace: Optional[StateTrace] = None


def apply(s: State, a: GroundAction) -> State:
    missing = a.precond - s
    if missing:
        raise PreconditionError(str(a), missing)
    return (s - a.delete) | a.add


def _run(init: State, plan: Sequence[GroundAction]) -> Tuple[List[State], Optional[StepFailure]]:
    states = [init]
    for i, a in enumerate(plan):
        missing = a.precond - states[-1]
        if missing:
            return states, StepFailure(i, str(a), missing)
        states.append((states[-1] - a.delete) | a.add)
    return states, None


def simulate(prob: Problem, plan: Sequence[GroundAction]) -> StateTrace:
    states, failure = _run(prob.init, plan)
    if failure is not None:
        raise failure
    return StateTrace(tuple(states))


def unsatisfied_soft_goals(prob: Problem, trace: StateTrace) -> FrozenSet[SoftGoal]:
    """Achievement semantics: a soft goal counts once its atom held in any trace state."""
    return frozenset(sg for sg in prob.soft_goals if not trace.ever_true(sg.atom))


def validate(prob: Problem, plan: Sequence[GroundAction]) -> ValidationResult:
    states, failure = _run(prob.init, plan)
    trace = StateTrace(tuple(states))
    unmet = frozenset(prob.hard_goals - trace.final) if failure is None else frozenset(prob.hard_goals)
    unsat = unsatisfied_soft_goals(prob, trace)
    return ValidationResult(
        valid=failure is None and not unmet,
        unmet_hard_goals=unmet,
        unsatisfied_soft_goals=unsat,
        penalty_sum=sum((sg.penalty for sg in unsat), Fraction(0)),
        failed_step=failure.index if failure else None,
        missing=tuple(failure.missing) if failure else (),
        trace=trace,
    )


def _signatures(plan: Iterable[Union[GroundAction, ActionSignature]]) -> List[ActionSignature]:
    return [p.signature if isinstance(p, GroundAction) else ActionSignature(p[0], tuple(p[1])) for p in plan]


def plan_diff(old: Iterable, new: Iterable, multiset: bool = False) -> PlanDiffMetrics:
    """|old \\ new| and |old △ new| over action signatures."""
    a, b = _signatures(old), _signatures(new)
    if multiset:
        ca, cb = Counter(a), Counter(b)
        lost = sum((ca - cb).values())
        return PlanDiffMetrics(lost, lost + sum((cb - ca).values()))
    sa, sb = set(a), set(b)
    return PlanDiffMetrics(len(sa - sb), len(sa ^ sb))


def extract_commitments(prob: Problem, plan: Sequence[GroundAction],
                        commitment_preds: Collection[str]) -> FrozenSet[Commitment]:
    simulate(prob, plan)
    preds = set(commitment_preds)
    return frozenset(Commitment(e) for a in plan for e in a.add if e.predicate in preds)


def honored_commitments(prob: Problem, plan: Sequence[GroundAction],
                        commitments: Iterable[Commitment]) -> FrozenSet[Commitment]:
    """Commitments holding in the initial state or achieved somewhere on the plan's trace."""
    states, _ = _run(prob.init, plan)
    trace = StateTrace(tuple(states))
    return frozenset(c for c in commitments if trace.ever_true(c.atom))


# --- Plan files ---

_STEP = re.compile(r"^\s*(?:\d+(?:\.\d+)?\s*:\s*)?\(\s*([^()\s]+)((?:\s+[^()\s]+)*)\s*\)\s*(?:\[[^\]]*\])?\s*$")


def read_plan(text: str) -> List[ActionSignature]:
    """One `(name arg ...)` per line; `;` comments, `N:` prefixes and `[d]` suffixes are tolerated."""
    out: List[ActionSignature] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(";", 1)[0].strip()
        if not line:
            continue
        m = _STEP.match(line)
        if not m:
            raise PlanParseError(f"cannot read plan step '{line}'", lineno)
        out.append(ActionSignature(m.group(1).lower(), tuple(x.lower() for x in m.group(2).split())))
    return out


def write_plan(plan: Iterable[Union[GroundAction, ActionSignature]]) -> str:
    return "".join(f"{sig}\n" for sig in _signatures(plan))


def resolve_plan(prob: Problem, signatures: Iterable[ActionSignature]) -> Plan:
    return tuple(instantiate(prob, s.name, s.args) for s in signatures)
