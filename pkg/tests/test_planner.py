from fractions import Fraction

import pytest

from src.exceptions import BudgetExceeded, NoPlanWithinBound
from src.models import InstanceSpec, PlannerConfig
from src.services.compiler import build_constraints, compile_problem
from src.services.planner import OPTIMAL, TIMEOUT, UNSOLVABLE, brute_force, penalty_of, solve
from src.services.pddl_types import SoftGoal, atom
from src.services.plans import validate
from src.services.warehouses import make_scenario

EXHAUSTIVE = PlannerConfig.exhaustive()


def with_soft_goals(prob, *atoms, penalty=1):
    return prob.replace(soft_goals=frozenset(SoftGoal(a, Fraction(penalty)) for a in atoms))


def test_finds_shortest_plan(shuttle):
    result = solve(shuttle, EXHAUSTIVE)
    assert result.status == OPTIMAL
    assert result.plan_length == 4
    assert validate(shuttle, result.plan).valid
    assert result.objective == pytest.approx(0.04)


def test_default_config_returns_valid_plan(shuttle):
    result = solve(shuttle)
    assert result.solved
    assert validate(shuttle, result.plan).valid


def test_goal_count_heuristic(shuttle):
    result = solve(shuttle, PlannerConfig(heuristic="goal-count", stop_at_penalty_bound=False))
    assert result.plan_length == 4


def test_hard_goals_already_true(shuttle):
    done = shuttle.replace(hard_goals=frozenset({atom("at", "b2", "a")}))
    result = solve(done)
    assert result.plan == ()
    assert result.objective == 0


def test_unreachable_soft_goals_are_forced_penalties(shuttle):
    done = shuttle.replace(hard_goals=frozenset())
    stuck = done.replace(init=done.init - {atom("handfree")})
    prob = with_soft_goals(stuck, atom("holding", "b1"), atom("holding", "b2"), atom("at", "b1", "c"))
    result = solve(prob)
    assert result.plan == ()
    assert result.penalty_sum == 3


def test_unsolvable(shuttle):
    cut = shuttle.replace(init=shuttle.init - {atom("connected", "b", "c")})
    result = solve(cut, EXHAUSTIVE)
    assert result.status == UNSOLVABLE
    assert result.plan is None


def test_node_budget_without_incumbent_times_out(shuttle):
    result = solve(shuttle, PlannerConfig(node_budget=1))
    assert result.status == TIMEOUT
    assert not result.solved


def test_soft_goal_worth_its_detour(shuttle):
    prob = with_soft_goals(shuttle, atom("at", "b2", "c"))
    cheap_steps = solve(prob, EXHAUSTIVE)
    assert cheap_steps.penalty_sum == 0
    assert cheap_steps.plan_length == 10
    costly_steps = solve(prob, PlannerConfig.exhaustive(w_len=1.0))
    assert costly_steps.penalty_sum == 1
    assert costly_steps.plan_length == 4


def test_reported_penalty_matches_validation(shuttle):
    prob = with_soft_goals(shuttle, atom("at", "b2", "b"), atom("holding", "b2"), penalty=2)
    result = solve(prob, EXHAUSTIVE)
    check = validate(prob, result.plan)
    assert check.valid
    assert result.penalty_sum == check.penalty_sum == penalty_of(prob, result.plan)
    assert result.objective == pytest.approx(0.01 * result.plan_length + float(result.penalty_sum))


def test_incumbents_never_get_worse(shuttle):
    prob = with_soft_goals(shuttle, atom("at", "b2", "c"), atom("at", "b2", "b"))
    result = solve(prob, EXHAUSTIVE)
    trail = list(result.incumbents)
    assert trail == sorted(trail, reverse=True)
    assert trail[-1] == pytest.approx(result.objective)


def test_deterministic(shuttle):
    prob = with_soft_goals(shuttle, atom("at", "b2", "c"))
    first, second = solve(prob, EXHAUSTIVE), solve(prob, EXHAUSTIVE)
    assert first.plan == second.plan
    assert first.nodes_expanded == second.nodes_expanded
    assert first.incumbents == second.incumbents


# --- Oracle ---

def test_brute_force_empty_plan(shuttle):
    done = shuttle.replace(hard_goals=frozenset({atom("at", "b1", "a")}))
    assert brute_force(done, max_len=0).plan == ()


def test_brute_force_bound_too_small(shuttle):
    with pytest.raises(NoPlanWithinBound):
        brute_force(shuttle, max_len=3)


def test_brute_force_guard(shuttle):
    with pytest.raises(BudgetExceeded):
        brute_force(shuttle, max_len=6, guard=5)


@pytest.mark.parametrize("soft, w_len", [
    ((), 0.01),
    ((atom("at", "b2", "c"),), 0.01),
    ((atom("at", "b2", "c"),), 1.0),
    ((atom("at", "b2", "b"), atom("holding", "b2")), 0.01),
])
def test_matches_brute_force_on_shuttle(shuttle, soft, w_len):
    prob = with_soft_goals(shuttle, *soft)
    result = solve(prob, PlannerConfig.exhaustive(w_len=w_len))
    oracle = brute_force(prob, max_len=12, w_len=w_len)
    assert result.objective == pytest.approx(oracle.objective)


@pytest.mark.slow
def test_matches_brute_force_on_tiny_replanning_problems():
    tiny = dict(forklifts=1, transports=1, gridsquares=3)
    agree, total = 0, 0
    for seed in range(10):
        for kind in ("fall", "breakdown"):
            scenario = make_scenario(InstanceSpec(num_packages=1, seed=seed, **tiny), kind)
            for model in ("similarity", "commitment"):
                cs = build_constraints(model, scenario.problem, scenario.original_plan, scenario.prefix_len,
                                       ("holding", "on", "towing", "delivered"))
                cp = compile_problem(model, scenario.perturbed_problem, cs)
                result = solve(cp, EXHAUSTIVE)
                assert result.status == OPTIMAL
                # independent of the candidate, so a longer cheaper plan would show up
                oracle = brute_force(cp, max_len=max(8, result.plan_length + 4))
                total += 1
                agree += result.objective == pytest.approx(oracle.objective)
    assert total == 40
    assert agree >= 0.95 * total
