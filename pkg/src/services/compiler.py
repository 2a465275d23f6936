"""
Replanning constraint sets and their compilation onto soft goals.

Each replanning model contributes a constraint set built from the old plan:
restart contributes nothing, similarity contributes one constraint per ground
action to keep, commitment contributes one constraint per commitment atom.
Constraints become soft goals over monotone marker fluents
(`<action>-executed`, `<predicate>-achieved`) set by instrumented action
copies named `<action>-marked`.
"""
import os
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Collection, Dict, FrozenSet, Literal, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

from apify import Actor

from ..exceptions import CompileError
from .grounding import instantiate
from .pddl_types import (
    ActionSchema,
    ActionSignature,
    Domain,
    GroundAction,
    GroundAtom,
    LiftedAtom,
    Metric,
    PredicateSchema,
    Problem,
    SoftGoal,
)
from .pddl_writer import emit, emit_domain
from .plans import Commitment, extract_commitments, simulate

EXECUTED = "-executed"
ACHIEVED = "-achieved"
MARKED = "-marked"

Scope = Literal["suffix", "full"]


class ReplanModel(str, Enum):
    RESTART = "restart"
    SIMILARITY = "similarity"
    COMMITMENT = "commitment"


class SimilarityConstraint(NamedTuple):
    signature: ActionSignature
    penalty: Fraction = Fraction(1)


class CommitmentConstraint(NamedTuple):
    commitment: Commitment
    penalty: Fraction = Fraction(1)


@dataclass(frozen=True)
class EmptyConstraints:
    def __len__(self) -> int:
        return 0


@dataclass(frozen=True)
class ActionSimilarity:
    constraints: Tuple[SimilarityConstraint, ...] = ()

    def __len__(self) -> int:
        return len(self.constraints)


@dataclass(frozen=True)
class Commitments:
    constraints: Tuple[CommitmentConstraint, ...] = ()
    predicates: FrozenSet[str] = frozenset()

    def __len__(self) -> int:
        return len(self.constraints)


ConstraintSet = Union[EmptyConstraints, ActionSimilarity, Commitments]
Provenance = Union[SimilarityConstraint, CommitmentConstraint]


@dataclass(frozen=True)
class CompiledProblem:
    problem: Problem
    source: Problem
    model: ReplanModel = ReplanModel.RESTART
    provenance: Dict[GroundAtom, Provenance] = field(default_factory=dict)
    instrumented: Dict[str, str] = field(default_factory=dict)  # copy -> original
    markers: FrozenSet[str] = frozenset()

    @classmethod
    def identity(cls, prob: Problem, model: ReplanModel = ReplanModel.RESTART) -> "CompiledProblem":
        return cls(problem=prob, source=prob, model=model)


# --- Constraint sets ---

def build_constraints(model: ReplanModel, prob: Problem, old_plan: Sequence[GroundAction],
                      executed_prefix_len: int, commitment_preds: Collection[str] = (),
                      scope: Scope = "suffix", default_penalty=1,
                      penalties: Optional[Mapping] = None) -> ConstraintSet:
    """
    `prob` is the original problem the old plan was made for. `penalties`
    overrides the default per constraint, keyed by ActionSignature (similarity)
    or GroundAtom (commitment).
    """
    model = ReplanModel(model)
    if not 0 <= executed_prefix_len <= len(old_plan):
        raise CompileError(f"executed prefix {executed_prefix_len} outside plan of length {len(old_plan)}")
    simulate(prob, old_plan[:executed_prefix_len])
    penalties = penalties or {}
    default_penalty = Fraction(default_penalty)

    if model is ReplanModel.RESTART:
        return EmptyConstraints()

    if model is ReplanModel.SIMILARITY:
        kept = old_plan[executed_prefix_len:] if scope == "suffix" else old_plan
        seen = []
        for a in kept:
            if a.signature not in seen:
                seen.append(a.signature)
        return ActionSimilarity(tuple(
            SimilarityConstraint(sig, Fraction(penalties.get(sig, default_penalty))) for sig in seen))

    commitments = sorted(extract_commitments(prob, old_plan, commitment_preds))
    return Commitments(
        tuple(CommitmentConstraint(c, Fraction(penalties.get(c.atom, default_penalty))) for c in commitments),
        frozenset(commitment_preds),
    )


def constraint_scope_plan(old_plan: Sequence[GroundAction], executed_prefix_len: int, scope: Scope) -> Tuple[GroundAction, ...]:
    """The part of the old plan that similarity constraints and diff metrics are measured against."""
    return tuple(old_plan[executed_prefix_len:] if scope == "suffix" else old_plan)


# --- Compilation ---

def _marker_schema(name: str, params) -> PredicateSchema:
    return PredicateSchema(name, tuple(params))


def _check_free(domain: Domain, predicate_names: Collection[str], action_names: Collection[str]) -> None:
    for p in predicate_names:
        if p in domain.predicates:
            raise CompileError(f"marker predicate '{p}' collides with a domain predicate")
    for a in action_names:
        if a in domain.actions:
            raise CompileError(f"instrumented action '{a}' collides with a domain action")


def _compiled_domain(domain: Domain, markers: Dict[str, PredicateSchema],
                     copies: Dict[str, ActionSchema], replace_originals: bool) -> Domain:
    actions = {n: a for n, a in domain.actions.items()
               if not (replace_originals and f"{n}{MARKED}" in copies)}
    actions.update(copies)
    predicates = dict(domain.predicates)
    predicates.update(markers)
    return Domain(
        name=f"{domain.name}-replan",
        types=dict(domain.types),
        predicates=predicates,
        actions=actions,
        requirements=domain.requirements,
    )


def compile_action_similarity(prob_perturbed: Problem, cs: ActionSimilarity,
                              replace_originals: bool = False) -> CompiledProblem:
    if not isinstance(cs, ActionSimilarity):
        raise CompileError(f"expected action-similarity constraints, got {type(cs).__name__}")
    if not cs.constraints:
        return CompiledProblem.identity(prob_perturbed, ReplanModel.SIMILARITY)
    domain = prob_perturbed.domain

    lifted = []
    for c in cs.constraints:
        schema = domain.actions.get(c.signature.name)
        if schema is None:
            raise CompileError(f"constraint {c.signature} references unknown action '{c.signature.name}'")
        if len(c.signature.args) != len(schema.params):
            raise CompileError(f"constraint {c.signature} does not match the arity of '{schema.name}'")
        if schema.name not in lifted:
            lifted.append(schema.name)

    markers: Dict[str, PredicateSchema] = {}
    copies: Dict[str, ActionSchema] = {}
    instrumented: Dict[str, str] = {}
    _check_free(domain, [f"{n}{EXECUTED}" for n in lifted], [f"{n}{MARKED}" for n in lifted])
    for name in lifted:
        schema = domain.actions[name]
        marker = f"{name}{EXECUTED}"
        markers[marker] = _marker_schema(marker, schema.params)
        copy = f"{name}{MARKED}"
        copies[copy] = ActionSchema(
            name=copy,
            params=schema.params,
            precond=schema.precond,
            add=schema.add | {LiftedAtom(marker, tuple(p.name for p in schema.params))},
            delete=schema.delete,
        )
        instrumented[copy] = name

    soft = []
    provenance: Dict[GroundAtom, Provenance] = {}
    for c in cs.constraints:
        goal = GroundAtom(f"{c.signature.name}{EXECUTED}", c.signature.args)
        soft.append(SoftGoal(goal, c.penalty))
        provenance[goal] = c

    new_domain = _compiled_domain(domain, markers, copies, replace_originals)
    Actor.log.info(f"🧩 Similarity compilation: {len(soft)} soft goals, {len(copies)} instrumented actions.")
    return CompiledProblem(
        problem=prob_perturbed.replace(
            domain=new_domain,
            soft_goals=frozenset(soft),
            metric=Metric.penalty_sum(),
        ),
        source=prob_perturbed,
        model=ReplanModel.SIMILARITY,
        provenance=provenance,
        instrumented=instrumented,
        markers=frozenset(markers),
    )


def compile_commitments(prob_perturbed: Problem, cs: Commitments,
                        replace_originals: bool = False) -> CompiledProblem:
    if not isinstance(cs, Commitments):
        raise CompileError(f"expected commitment constraints, got {type(cs).__name__}")
    if not cs.constraints:
        return CompiledProblem.identity(prob_perturbed, ReplanModel.COMMITMENT)
    domain = prob_perturbed.domain

    preds = sorted(cs.predicates | {c.commitment.atom.predicate for c in cs.constraints})
    for p in preds:
        if p not in domain.predicates:
            raise CompileError(f"commitment predicate '{p}' is not declared in domain '{domain.name}'")

    markers = {f"{p}{ACHIEVED}": _marker_schema(f"{p}{ACHIEVED}", domain.predicates[p].params) for p in preds}
    relevant_actions = [a for a in sorted(domain.actions) if any(l.predicate in preds for l in domain.actions[a].add)]
    _check_free(domain, markers, [f"{a}{MARKED}" for a in relevant_actions])

    copies: Dict[str, ActionSchema] = {}
    instrumented: Dict[str, str] = {}
    for name in relevant_actions:
        schema = domain.actions[name]
        extra = {LiftedAtom(f"{l.predicate}{ACHIEVED}", l.args) for l in schema.add if l.predicate in preds}
        copy = f"{name}{MARKED}"
        copies[copy] = ActionSchema(copy, schema.params, schema.precond, schema.add | extra, schema.delete)
        instrumented[copy] = name

    soft = []
    provenance: Dict[GroundAtom, Provenance] = {}
    premarked = set()
    for c in cs.constraints:
        a = c.commitment.atom
        goal = GroundAtom(f"{a.predicate}{ACHIEVED}", a.args)
        soft.append(SoftGoal(goal, c.penalty))
        provenance[goal] = c
        if a in prob_perturbed.init:
            premarked.add(goal)

    new_domain = _compiled_domain(domain, markers, copies, replace_originals)
    Actor.log.info(f"🧩 Commitment compilation: {len(soft)} soft goals ({len(premarked)} already held), "
                   f"{len(copies)} instrumented actions.")
    return CompiledProblem(
        problem=prob_perturbed.replace(
            domain=new_domain,
            init=prob_perturbed.init | premarked,
            soft_goals=frozenset(soft),
            metric=Metric.penalty_sum(),
        ),
        source=prob_perturbed,
        model=ReplanModel.COMMITMENT,
        provenance=provenance,
        instrumented=instrumented,
        markers=frozenset(markers),
    )


def compile_problem(model: ReplanModel, prob_perturbed: Problem, cs: ConstraintSet,
                    replace_originals: bool = False) -> CompiledProblem:
    model = ReplanModel(model)
    if model is ReplanModel.RESTART or isinstance(cs, EmptyConstraints):
        return CompiledProblem.identity(prob_perturbed, model)
    if model is ReplanModel.SIMILARITY:
        return compile_action_similarity(prob_perturbed, cs, replace_originals)
    return compile_commitments(prob_perturbed, cs, replace_originals)


def to_preferences(cp: CompiledProblem) -> Problem:
    """The compiled problem in the PDDL3 simple-preference form."""
    prob = cp.problem
    if not prob.soft_goals:
        return prob.replace(metric=Metric.plan_length())
    requirements = prob.domain.requirements
    if ":preferences" not in requirements:
        requirements = requirements + (":preferences",)
    domain = Domain(prob.domain.name, prob.domain.types, prob.domain.predicates, prob.domain.actions, requirements)
    metric = prob.metric if prob.metric.kind != "plan-length" else Metric.penalty_sum()
    return prob.replace(domain=domain, metric=metric)


# --- Plan mapping ---

def strip_markers(cp: CompiledProblem, plan: Sequence[GroundAction]) -> Tuple[GroundAction, ...]:
    """Maps a plan of the compiled problem onto the perturbed problem."""
    return tuple(instantiate(cp.source, cp.instrumented.get(a.name, a.name), a.args) for a in plan)


def instrument(cp: CompiledProblem, plan: Sequence[GroundAction]) -> Tuple[GroundAction, ...]:
    """Maps a plan of the perturbed problem onto the compiled problem, using copies where they exist."""
    actions = cp.problem.domain.actions
    out = []
    for a in plan:
        name = f"{a.name}{MARKED}" if f"{a.name}{MARKED}" in actions else a.name
        out.append(instantiate(cp.problem, name, a.args))
    return tuple(out)


def write_compiled(cp: CompiledProblem, out_dir: str) -> Tuple[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    prob = to_preferences(cp)
    domain_path = os.path.join(out_dir, "domain.pddl")
    problem_path = os.path.join(out_dir, "problem.pddl")
    with open(domain_path, "w") as f:
        f.write(emit_domain(prob.domain))
    with open(problem_path, "w") as f:
        f.write(emit(prob, "pddl3" if prob.soft_goals else "plain"))
    return domain_path, problem_path
