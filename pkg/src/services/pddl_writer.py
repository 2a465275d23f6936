"""
PDDL writer for domains and problems (plain STRIPS and the PDDL3
simple-preference dialect).
"""
from fractions import Fraction
from typing import Iterable, List, Literal

from ..exceptions import PDDLSemanticError
from .pddl_types import OBJECT, ActionSchema, Domain, Problem, TypedParam

Dialect = Literal["plain", "pddl3"]


def _num(value: Fraction) -> str:
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"(/ {value.numerator} {value.denominator})"


def _typed(params: Iterable[TypedParam]) -> str:
    return " ".join(f"{p.name} - {p.type}" for p in params)


def _atoms(atoms: Iterable, indent: str) -> List[str]:
    return [f"{indent}{a}" for a in sorted(atoms)]


def _action(a: ActionSchema) -> List[str]:
    lines = [f"  (:action {a.name}", f"    :parameters ({_typed(a.params)})"]
    pre = sorted(str(p) for p in a.precond)
    lines.append(f"    :precondition (and {' '.join(pre)})" if pre else "    :precondition ()")
    effects = sorted(str(e) for e in a.add) + sorted(f"(not {e})" for e in a.delete)
    lines.append(f"    :effect (and {' '.join(effects)})")
    lines.append("  )")
    return lines


def emit_domain(domain: Domain) -> str:
    lines = [f"(define (domain {domain.name})", f"  (:requirements {' '.join(domain.requirements)})"]
    if domain.types:
        by_parent = {}
        for child, parent in sorted(domain.types.items()):
            by_parent.setdefault(parent, []).append(child)
        decl = " ".join(f"{' '.join(children)} - {parent}" for parent, children in sorted(by_parent.items()))
        lines.append(f"  (:types {decl})")
    lines.append("  (:predicates")
    for pred in sorted(domain.predicates.values(), key=lambda p: p.name):
        body = f"{pred.name} {_typed(pred.params)}".strip()
        lines.append(f"    ({body})")
    lines.append("  )")
    for a in sorted(domain.actions.values(), key=lambda a: a.name):
        lines.extend(_action(a))
    lines.append(")")
    return "\n".join(lines) + "\n"


def preference_names(prob: Problem) -> dict:
    """Stable preference naming: pref0.. in sorted soft-goal atom order."""
    return {sg.atom: f"pref{i}" for i, sg in enumerate(sorted(prob.soft_goals))}


def emit(prob: Problem, dialect: Dialect = "pddl3") -> str:
    if dialect == "plain" and prob.soft_goals:
        raise PDDLSemanticError(f"problem '{prob.name}' has soft goals; use the pddl3 dialect")
    if prob.soft_goals and prob.metric.kind == "plan-length":
        raise PDDLSemanticError(
            f"problem '{prob.name}' has soft goals but a plan-length metric; use penalty-sum or weighted-sum")

    lines = [f"(define (problem {prob.name})", f"  (:domain {prob.domain.name})"]
    by_type = {}
    for obj, t in sorted(prob.objects.items()):
        by_type.setdefault(t, []).append(obj)
    lines.append("  (:objects")
    for t, objs in sorted(by_type.items()):
        lines.append(f"    {' '.join(objs)} - {t}" if t != OBJECT else f"    {' '.join(objs)}")
    lines.append("  )")
    lines.append("  (:init")
    lines.extend(_atoms(prob.init, "    "))
    lines.append("  )")

    names = preference_names(prob)
    goal_lines = _atoms(prob.hard_goals, "    ")
    goal_lines += [f"    (preference {names[sg.atom]} {sg.atom})" for sg in sorted(prob.soft_goals)]
    lines.append("  (:goal (and")
    lines.extend(goal_lines)
    lines.append("  ))")

    metric = prob.metric
    terms = []
    for sg in sorted(prob.soft_goals):
        violated = f"(is-violated {names[sg.atom]})"
        terms.append(violated if sg.penalty == 1 else f"(* {_num(sg.penalty)} {violated})")
    if metric.kind == "weighted-sum":
        lines.append(f"  (:metric minimize (+ (* {_num(metric.w_len)} (total-time)) "
                     f"(* {_num(metric.w_pen)} (+ {' '.join(terms)}))))")
    elif terms:
        lines.append(f"  (:metric minimize (+ {' '.join(terms)}))")
    lines.append(")")
    return "\n".join(lines) + "\n"
