import dataclasses
import random
from fractions import Fraction

import pytest

from src.exceptions import CompileError, StepFailure
from src.models import PlannerConfig
from src.services.compiler import (
    ACHIEVED,
    MARKED,
    ActionSimilarity,
    CommitmentConstraint,
    Commitments,
    EmptyConstraints,
    ReplanModel,
    SimilarityConstraint,
    build_constraints,
    compile_action_similarity,
    compile_commitments,
    compile_problem,
    instrument,
    strip_markers,
    to_preferences,
    write_compiled,
)
from src.services.grounding import ground
from src.services.pddl_parser import parse_domain, parse_problem
from src.services.pddl_types import ActionSignature, PredicateSchema, TypedParam, atom
from src.services.planner import penalty_of, solve
from src.services.plans import Commitment, honored_commitments, read_plan, resolve_plan, simulate, validate

from conftest import SHUTTLE_PLAN

PREDS = ("holding", "at")


@pytest.fixture
def old_plan(shuttle):
    return resolve_plan(shuttle, read_plan(SHUTTLE_PLAN))


@pytest.fixture
def dropped(shuttle, old_plan):
    """b1 slips out of the gripper in room b after two executed steps."""
    state = simulate(shuttle, old_plan[:2]).final
    state = (state - {atom("holding", "b1")}) | {atom("at", "b1", "b"), atom("handfree")}
    return shuttle.replace(init=state)


def test_restart_has_no_constraints(shuttle, old_plan, dropped):
    cs = build_constraints(ReplanModel.RESTART, shuttle, old_plan, 2)
    assert isinstance(cs, EmptyConstraints) and len(cs) == 0
    cp = compile_problem("restart", dropped, cs)
    assert cp.problem is dropped
    assert cp.provenance == {}


def test_similarity_constraints_cover_unexecuted_suffix(shuttle, old_plan):
    cs = build_constraints("similarity", shuttle, old_plan, 2)
    assert isinstance(cs, ActionSimilarity)
    assert [c.signature for c in cs.constraints] == [
        ActionSignature("move", ("b", "c")), ActionSignature("drop", ("b1", "c"))]
    assert all(c.penalty == 1 for c in cs.constraints)
    full = build_constraints("similarity", shuttle, old_plan, 2, scope="full")
    assert len(full) == 4


def test_similarity_constraints_are_distinct(shuttle):
    plan = resolve_plan(shuttle, read_plan("(move a b)\n(move b a)\n(move a b)\n(pick b1 a)"))
    cs = build_constraints("similarity", shuttle, plan, 0)
    assert [str(c.signature) for c in cs.constraints] == ["(move a b)", "(move b a)", "(pick b1 a)"]


def test_commitment_constraints(shuttle, old_plan):
    cs = build_constraints("commitment", shuttle, old_plan, 2, commitment_preds=PREDS)
    assert isinstance(cs, Commitments)
    assert {c.commitment.atom for c in cs.constraints} == {atom("holding", "b1"), atom("at", "b1", "c")}


def test_custom_penalties(shuttle, old_plan):
    cs = build_constraints("similarity", shuttle, old_plan, 2, default_penalty=2,
                           penalties={ActionSignature("drop", ("b1", "c")): 5})
    assert [c.penalty for c in cs.constraints] == [Fraction(2), Fraction(5)]


def test_prefix_must_execute(shuttle, old_plan):
    with pytest.raises(StepFailure):
        build_constraints("similarity", shuttle, old_plan[1:], 3)
    with pytest.raises(CompileError):
        build_constraints("similarity", shuttle, old_plan, 9)


def test_action_similarity_compilation(shuttle, old_plan, dropped):
    cs = build_constraints("similarity", shuttle, old_plan, 2)
    cp = compile_action_similarity(dropped, cs)
    dom = cp.problem.domain
    assert dom.name == "shuttle-replan"
    assert set(dom.predicates) == set(shuttle.domain.predicates) | {"move-executed", "drop-executed"}
    assert dom.predicates["move-executed"].params == shuttle.domain.actions["move"].params
    assert set(dom.actions) == {"move", "pick", "drop", "move-marked", "drop-marked"}
    assert cp.problem.soft_goal_atoms == {atom("move-executed", "b", "c"), atom("drop-executed", "b1", "c")}
    assert cp.problem.hard_goals == dropped.hard_goals
    assert cp.problem.init == dropped.init
    assert cp.problem.metric.kind == "penalty-sum"
    assert set(cp.provenance) == cp.problem.soft_goal_atoms
    assert isinstance(cp.provenance[atom("move-executed", "b", "c")], SimilarityConstraint)
    assert cp.instrumented == {"move-marked": "move", "drop-marked": "drop"}


def test_markers_are_monotone(shuttle, old_plan, dropped):
    for model in ("similarity", "commitment"):
        cs = build_constraints(model, shuttle, old_plan, 2, PREDS)
        cp = compile_problem(model, dropped, cs)
        for action in cp.problem.domain.actions.values():
            assert not any(l.predicate in cp.markers for l in action.delete | action.precond)


def test_replace_originals(shuttle, old_plan, dropped):
    cs = build_constraints("similarity", shuttle, old_plan, 2)
    cp = compile_action_similarity(dropped, cs, replace_originals=True)
    assert set(cp.problem.domain.actions) == {"pick", "move-marked", "drop-marked"}


def test_zero_constraints_is_identity(dropped):
    assert compile_action_similarity(dropped, ActionSimilarity()).problem == dropped
    assert compile_commitments(dropped, Commitments()).problem == dropped


def test_marker_collision(shuttle, old_plan, dropped):
    schemas = dict(dropped.domain.predicates)
    schemas["move-executed"] = PredicateSchema("move-executed", (TypedParam("?x", "room"),))
    clashing = dropped.replace(domain=dataclasses.replace(dropped.domain, predicates=schemas))
    cs = build_constraints("similarity", shuttle, old_plan, 2)
    with pytest.raises(CompileError, match="collides"):
        compile_action_similarity(clashing, cs)


def test_similarity_constraint_on_unknown_action(dropped):
    cs = ActionSimilarity((SimilarityConstraint(ActionSignature("fly", ("a",))),))
    with pytest.raises(CompileError, match="unknown action 'fly'"):
        compile_action_similarity(dropped, cs)


def test_commitment_compilation_premarks_held_atoms(shuttle, old_plan, dropped):
    # at(b1, b) holds in the perturbed state already
    cs = Commitments((CommitmentConstraint(Commitment(atom("at", "b1", "b"))),
                      CommitmentConstraint(Commitment(atom("holding", "b1")))), frozenset(PREDS))
    cp = compile_commitments(dropped, cs)
    assert atom(f"at{ACHIEVED}", "b1", "b") in cp.problem.init
    assert atom(f"holding{ACHIEVED}", "b1") not in cp.problem.init
    assert set(cp.instrumented) == {f"pick{MARKED}", f"drop{MARKED}"}
    assert validate(cp.problem, ()).unsatisfied_soft_goals == {
        sg for sg in cp.problem.soft_goals if sg.atom == atom(f"holding{ACHIEVED}", "b1")}


def test_undeclared_commitment_predicate(dropped):
    cs = Commitments((CommitmentConstraint(Commitment(atom("handfree"))),), frozenset({"towing"}))
    with pytest.raises(CompileError, match="'towing' is not declared"):
        compile_commitments(dropped, cs)


def test_wrong_constraint_kind(dropped):
    with pytest.raises(CompileError):
        compile_action_similarity(dropped, Commitments())


def test_to_preferences(shuttle, old_plan, dropped):
    cs = build_constraints("similarity", shuttle, old_plan, 2)
    prob = to_preferences(compile_action_similarity(dropped, cs))
    assert ":preferences" in prob.domain.requirements
    assert prob.metric.kind == "penalty-sum"
    plain = to_preferences(compile_problem("restart", dropped, EmptyConstraints()))
    assert plain.soft_goals == frozenset()
    assert plain.metric.kind == "plan-length"


def test_write_compiled_round_trips(tmp_path, shuttle, old_plan, dropped):
    cs = build_constraints("commitment", shuttle, old_plan, 2, PREDS)
    cp = compile_commitments(dropped, cs)
    domain_path, problem_path = write_compiled(cp, str(tmp_path))
    dom = parse_domain(open(domain_path).read())
    prob = parse_problem(open(problem_path).read(), dom)
    assert prob.soft_goals == cp.problem.soft_goals
    assert prob.init == cp.problem.init
    assert set(dom.actions) == set(cp.problem.domain.actions)


def test_strip_and_instrument_preserve_hard_goals(shuttle, old_plan, dropped):
    for model in ("similarity", "commitment"):
        cs = build_constraints(model, shuttle, old_plan, 2, PREDS)
        cp = compile_problem(model, dropped, cs)
        result = solve(cp, PlannerConfig.exhaustive())
        stripped = strip_markers(cp, result.plan)
        assert validate(cp.problem, result.plan).valid
        assert validate(dropped, stripped).valid
        assert all(not a.name.endswith(MARKED) for a in stripped)
        back = instrument(cp, stripped)
        assert validate(cp.problem, back).valid
        assert validate(cp.problem, back).penalty_sum == result.penalty_sum == 0


def _random_walk(prob, actions, rng, steps):
    state, plan = prob.init, []
    for _ in range(steps):
        options = [a for a in actions if a.precond <= state]
        if not options:
            break
        a = rng.choice(options)
        plan.append(a)
        state = (state - a.delete) | a.add
    return plan


def test_penalty_agreement_on_random_plans(shuttle, old_plan, dropped):
    rng = random.Random(11)
    checked = 0
    for model in ("similarity", "commitment"):
        cs = build_constraints(model, shuttle, old_plan, 2, PREDS, scope="full")
        cp = compile_problem(model, dropped, cs, replace_originals=True)
        actions = ground(cp.problem)
        for _ in range(120):
            plan = _random_walk(cp.problem, actions, rng, rng.randint(0, 10))
            stripped = strip_markers(cp, plan)
            if model == "similarity":
                used = {a.signature for a in stripped}
                by_hand = sum(c.penalty for c in cs.constraints if c.signature not in used)
            else:
                honored = honored_commitments(dropped, stripped, [c.commitment for c in cs.constraints])
                by_hand = sum(c.penalty for c in cs.constraints if c.commitment not in honored)
            assert penalty_of(cp, plan) == validate(cp.problem, plan).penalty_sum == by_hand
            checked += 1
    assert checked == 240


@pytest.mark.slow
def test_compilations_are_sound_on_warehouse_scenarios():
    from src.models import InstanceSpec
    from src.services.warehouses import make_scenario

    quick = PlannerConfig(anytime=False)
    checked = 0
    for seed in range(17):
        for packages in (1, 2, 3):
            kind = "fall" if (seed + packages) % 2 else "breakdown"
            scenario = make_scenario(InstanceSpec(num_packages=packages, seed=seed), kind, quick)
            perturbed = scenario.perturbed_problem
            restart = solve(perturbed, quick)
            for model in ("similarity", "commitment"):
                cs = build_constraints(model, scenario.problem, scenario.original_plan, scenario.prefix_len,
                                       ("holding", "on", "towing", "delivered"))
                cp = compile_problem(model, perturbed, cs)
                compiled = solve(cp, quick)
                assert validate(perturbed, strip_markers(cp, compiled.plan)).valid
                assert validate(cp.problem, instrument(cp, restart.plan)).valid
            checked += 1
    assert checked >= 50
