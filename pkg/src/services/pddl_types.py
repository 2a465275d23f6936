"""
Typed STRIPS model shared by every service: schemas, ground atoms/actions,
states, soft goals and problems.

Hot-path values (atoms, signatures, soft goals) are NamedTuples so they hash
as plain tuples; the structural containers are frozen dataclasses.
"""
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Dict, FrozenSet, Literal, NamedTuple, Optional, Tuple

from ..exceptions import PDDLSemanticError

OBJECT = "object"


class TypedParam(NamedTuple):
    name: str
    type: str = OBJECT


class LiftedAtom(NamedTuple):
    predicate: str
    args: Tuple[str, ...]

    def __str__(self) -> str:
        return f"({' '.join((self.predicate,) + self.args)})"


class GroundAtom(NamedTuple):
    predicate: str
    args: Tuple[str, ...]

    def __str__(self) -> str:
        return f"({' '.join((self.predicate,) + self.args)})"


def atom(predicate: str, *args: str) -> GroundAtom:
    return GroundAtom(predicate, tuple(args))


class ActionSignature(NamedTuple):
    """Action identity used by plan diffs: name plus ordered arguments."""
    name: str
    args: Tuple[str, ...]

    def __str__(self) -> str:
        return f"({' '.join((self.name,) + self.args)})"


State = FrozenSet[GroundAtom]


@dataclass(frozen=True)
class PredicateSchema:
    name: str
    params: Tuple[TypedParam, ...] = ()

    @property
    def arity(self) -> int:
        return len(self.params)


@dataclass(frozen=True)
class ActionSchema:
    name: str
    params: Tuple[TypedParam, ...]
    precond: FrozenSet[LiftedAtom]
    add: FrozenSet[LiftedAtom]
    delete: FrozenSet[LiftedAtom]


@dataclass(frozen=True)
class Domain:
    name: str
    types: Dict[str, str] = field(default_factory=dict)  # child -> parent
    predicates: Dict[str, PredicateSchema] = field(default_factory=dict)
    actions: Dict[str, ActionSchema] = field(default_factory=dict)
    requirements: Tuple[str, ...] = (":strips", ":typing")

    def has_type(self, name: str) -> bool:
        return name == OBJECT or name in self.types

    def ancestors(self, name: str) -> Tuple[str, ...]:
        chain = [name]
        while chain[-1] != OBJECT:
            parent = self.types.get(chain[-1], OBJECT)
            if parent in chain:
                raise PDDLSemanticError(f"cyclic type hierarchy through '{parent}'")
            chain.append(parent)
        return tuple(chain)

    def is_subtype(self, name: str, ancestor: str) -> bool:
        return ancestor in self.ancestors(name)


@dataclass(frozen=True)
class GroundAction:
    name: str
    args: Tuple[str, ...]
    precond: FrozenSet[GroundAtom]
    add: FrozenSet[GroundAtom]
    delete: FrozenSet[GroundAtom]

    @property
    def signature(self) -> ActionSignature:
        return ActionSignature(self.name, self.args)

    def applicable(self, state: State) -> bool:
        return self.precond <= state

    def __str__(self) -> str:
        return str(self.signature)


class SoftGoal(NamedTuple):
    atom: GroundAtom
    penalty: Fraction = Fraction(1)


MetricKind = Literal["plan-length", "penalty-sum", "weighted-sum"]


@dataclass(frozen=True)
class Metric:
    kind: MetricKind = "plan-length"
    w_len: Fraction = Fraction(1)
    w_pen: Fraction = Fraction(1)

    @classmethod
    def plan_length(cls) -> "Metric":
        return cls("plan-length")

    @classmethod
    def penalty_sum(cls) -> "Metric":
        return cls("penalty-sum")

    @classmethod
    def weighted_sum(cls, w_len, w_pen) -> "Metric":
        return cls("weighted-sum", Fraction(w_len), Fraction(w_pen))


@dataclass(frozen=True)
class Problem:
    name: str
    domain: Domain
    objects: Dict[str, str]
    init: State
    hard_goals: FrozenSet[GroundAtom]
    soft_goals: FrozenSet[SoftGoal] = frozenset()
    metric: Metric = Metric()

    def objects_of_type(self, type_name: str) -> Tuple[str, ...]:
        return tuple(sorted(o for o, t in self.objects.items() if self.domain.is_subtype(t, type_name)))

    def replace(self, **changes) -> "Problem":
        return replace(self, **changes)

    @property
    def soft_goal_atoms(self) -> FrozenSet[GroundAtom]:
        return frozenset(sg.atom for sg in self.soft_goals)


def check_atom(domain: Domain, objects: Dict[str, str], a: GroundAtom,
               line: Optional[int] = None, column: Optional[int] = None) -> None:
    """Raises PDDLSemanticError unless `a` is well-typed over `objects`."""
    schema = domain.predicates.get(a.predicate)
    if schema is None:
        raise PDDLSemanticError(f"unknown predicate '{a.predicate}'", line, column)
    if len(a.args) != schema.arity:
        raise PDDLSemanticError(
            f"predicate '{a.predicate}' expects {schema.arity} arguments, got {len(a.args)}", line, column)
    for arg, param in zip(a.args, schema.params):
        if arg not in objects:
            raise PDDLSemanticError(f"undeclared object '{arg}' in {a}", line, column)
        if not domain.is_subtype(objects[arg], param.type):
            raise PDDLSemanticError(
                f"object '{arg}' of type '{objects[arg]}' does not fit '{param.type}' in {a}", line, column)


def check_action_schema(domain: Domain, action: ActionSchema,
                        line: Optional[int] = None, column: Optional[int] = None) -> None:
    names = [p.name for p in action.params]
    if len(set(names)) != len(names):
        raise PDDLSemanticError(f"duplicate parameter in action '{action.name}'", line, column)
    ptypes = {p.name: p.type for p in action.params}
    for p in action.params:
        if not domain.has_type(p.type):
            raise PDDLSemanticError(f"unknown type '{p.type}' in action '{action.name}'", line, column)
    for lit in action.precond | action.add | action.delete:
        schema = domain.predicates.get(lit.predicate)
        if schema is None:
            raise PDDLSemanticError(f"unknown predicate '{lit.predicate}' in action '{action.name}'", line, column)
        if len(lit.args) != schema.arity:
            raise PDDLSemanticError(
                f"predicate '{lit.predicate}' expects {schema.arity} arguments in action '{action.name}'",
                line, column)
        for arg, param in zip(lit.args, schema.params):
            if arg not in ptypes:
                raise PDDLSemanticError(f"variable '{arg}' is not a parameter of action '{action.name}'", line, column)
            if not domain.is_subtype(ptypes[arg], param.type):
                raise PDDLSemanticError(
                    f"variable '{arg}' of type '{ptypes[arg]}' cannot fill '{param.type}' in '{action.name}'",
                    line, column)
    clash = action.add & action.delete
    if clash:
        listed = " ".join(sorted(str(c) for c in clash))
        raise PDDLSemanticError(f"action '{action.name}' both adds and deletes {listed}", line, column)
