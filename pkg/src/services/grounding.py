"""
Instantiates lifted action schemas over typed objects.

`ground(prob, prune=False)` is the complete typed-tuple instantiation;
`prune=True` binds parameters one at a time, rejects bindings that violate a
static precondition as soon as it is fully bound, and finally keeps only
actions whose preconditions are reachable in the delete relaxation.
"""
import itertools
from typing import Dict, FrozenSet, Iterable, List, Sequence, Set, Tuple

from ..exceptions import PDDLSemanticError
from .pddl_types import ActionSchema, Domain, GroundAction, GroundAtom, LiftedAtom, Problem


def static_predicates(domain: Domain) -> FrozenSet[str]:
    """Predicates that no action adds or deletes."""
    touched = {lit.predicate for a in domain.actions.values() for lit in a.add | a.delete}
    return frozenset(domain.predicates) - touched


def _bind(lits: Iterable[LiftedAtom], binding: Dict[str, str]) -> FrozenSet[GroundAtom]:
    return frozenset(GroundAtom(l.predicate, tuple(binding[v] for v in l.args)) for l in lits)


def _make(schema: ActionSchema, args: Sequence[str]) -> GroundAction:
    binding = {p.name: o for p, o in zip(schema.params, args)}
    return GroundAction(
        name=schema.name,
        args=tuple(args),
        precond=_bind(schema.precond, binding),
        add=_bind(schema.add, binding),
        delete=_bind(schema.delete, binding),
    )


def instantiate(prob: Problem, name: str, args: Sequence[str]) -> GroundAction:
    """Builds one ground action, checking arity and argument types."""
    schema = prob.domain.actions.get(name)
    if schema is None:
        raise PDDLSemanticError(f"unknown action '{name}'")
    if len(args) != len(schema.params):
        raise PDDLSemanticError(f"action '{name}' expects {len(schema.params)} arguments, got {len(args)}")
    for arg, param in zip(args, schema.params):
        otype = prob.objects.get(arg)
        if otype is None:
            raise PDDLSemanticError(f"undeclared object '{arg}' in ({name} {' '.join(args)})")
        if not prob.domain.is_subtype(otype, param.type):
            raise PDDLSemanticError(f"object '{arg}' does not fit parameter {param.name} - {param.type} of '{name}'")
    return _make(schema, args)


def _candidates(prob: Problem, schema: ActionSchema) -> List[Tuple[str, ...]]:
    return [prob.objects_of_type(p.type) for p in schema.params]


def _ground_schema_pruned(prob: Problem, schema: ActionSchema, static: FrozenSet[str]) -> List[GroundAction]:
    candidates = _candidates(prob, schema)
    names = [p.name for p in schema.params]
    position = {n: i for i, n in enumerate(names)}
    # static checks become decidable once their last variable is bound
    checks: Dict[int, List[LiftedAtom]] = {}
    for lit in schema.precond:
        if lit.predicate in static:
            last = max((position[v] for v in lit.args), default=-1)
            checks.setdefault(last, []).append(lit)
    out: List[GroundAction] = []
    init = prob.init
    for lit in checks.get(-1, []):
        if GroundAtom(lit.predicate, ()) not in init:
            return out

    binding: Dict[str, str] = {}

    def extend(i: int) -> None:
        if i == len(names):
            out.append(_make(schema, [binding[n] for n in names]))
            return
        for obj in candidates[i]:
            binding[names[i]] = obj
            if all(GroundAtom(l.predicate, tuple(binding[v] for v in l.args)) in init for l in checks.get(i, ())):
                extend(i + 1)
        binding.pop(names[i], None)

    extend(0)
    return out


def relaxed_reachable(init: Iterable[GroundAtom], actions: Iterable[GroundAction]) -> Tuple[Set[GroundAtom], List[GroundAction]]:
    """Delete-relaxation fixpoint: reachable atoms and the actions that fire."""
    reached: Set[GroundAtom] = set(init)
    pending = list(actions)
    fired: List[GroundAction] = []
    changed = True
    while changed:
        changed = False
        rest = []
        for a in pending:
            if a.precond <= reached:
                fired.append(a)
                if not a.add <= reached:
                    reached |= a.add
                    changed = True
            else:
                rest.append(a)
        pending = rest
    return reached, fired


def ground(prob: Problem, prune: bool = True) -> List[GroundAction]:
    schemas = sorted(prob.domain.actions.values(), key=lambda s: s.name)
    if not prune:
        return [
            _make(schema, args)
            for schema in schemas
            for args in itertools.product(*_candidates(prob, schema))
        ]
    static = static_predicates(prob.domain)
    actions = [a for schema in schemas for a in _ground_schema_pruned(prob, schema, static)]
    _, fired = relaxed_reachable(prob.init, actions)
    keep = set(id(a) for a in fired)
    return [a for a in actions if id(a) in keep]
