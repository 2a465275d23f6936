"""
Embedded net-benefit planner.

Objective of a plan: w_len * |plan| + penalty of the soft goals it never
achieves. Hard goals are never traded away.

`solve` is an anytime weighted best-first search over (state, achieved soft
goals) nodes:

  order  = residual + w_len * (g + h_weight * h)
  bound  = residual + w_len * (g + h_max(hard goals))      (admissible)

where `residual` is the penalty of soft goals that are neither achieved nor
reachable in the delete relaxation, and `h` is the FF relaxed-plan length for
the hard goals plus, when `pursue_soft_goals` is set, the still-open reachable
soft goals. Nodes whose bound cannot beat the incumbent are pruned, so an
exhausted open list proves the incumbent optimal.

`brute_force` is the breadth-first oracle used to certify small instances.
"""
import heapq
import itertools
import random
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple, Union

from apify import Actor

from ..exceptions import BudgetExceeded, NoPlanWithinBound
from ..models import PlannerConfig
from .compiler import CompiledProblem
from .grounding import ground
from .pddl_types import GroundAction, Problem
from .plans import Plan

EPS = 1e-9
INF = float("inf")

OPTIMAL = "optimal-for-budget"
SATISFICING = "satisficing"
TIMEOUT = "timeout"
UNSOLVABLE = "unsolvable"


@dataclass(frozen=True)
class PlanResult:
    plan: Optional[Plan]
    penalty_sum: Fraction
    plan_length: int
    objective: float
    wall_time: float  # milliseconds
    nodes_expanded: int
    status: str
    incumbents: Tuple[float, ...] = field(default=(), compare=False)

    @property
    def solved(self) -> bool:
        return self.plan is not None


class SearchTask:
    """
    Integer encoding of a grounded problem. Atoms that appear in no
    precondition, hard goal or soft goal are dropped; actions that become
    identical after dropping them are merged, keeping the first. Ground actions
    shadowed by an instrumented copy (`instrumented`: copy -> original name) are
    dropped: the copy only adds monotone markers.
    """

    def __init__(self, prob: Problem, seed: int = 0, instrumented: Optional[Mapping[str, str]] = None):
        grounded = ground(prob, prune=True)
        if instrumented:
            shadowed = {(instrumented[a.name], a.args) for a in grounded if a.name in instrumented}
            grounded = [a for a in grounded if (a.name, a.args) not in shadowed]
        grounded.sort(key=lambda a: (a.name, a.args))
        if seed:
            random.Random(seed).shuffle(grounded)

        relevant = set(prob.hard_goals) | prob.soft_goal_atoms
        for a in grounded:
            relevant |= a.precond
        self.atoms = sorted(relevant)
        self.index = {a: i for i, a in enumerate(self.atoms)}
        idx = self.index

        def enc(atoms) -> FrozenSet[int]:
            return frozenset(idx[x] for x in atoms if x in idx)

        self.actions: List[GroundAction] = []
        self.pre: List[FrozenSet[int]] = []
        self.add: List[FrozenSet[int]] = []
        self.dele: List[FrozenSet[int]] = []
        self.by_signature: Dict = {}
        seen: Dict[Tuple, int] = {}
        for a in grounded:
            key = (enc(a.precond), enc(a.add), enc(a.delete))
            if key in seen:
                self.by_signature[a.signature] = seen[key]
                continue
            seen[key] = len(self.actions)
            self.by_signature[a.signature] = len(self.actions)
            self.actions.append(a)
            self.pre.append(key[0])
            self.add.append(key[1])
            self.dele.append(key[2])

        self.init = enc(prob.init)
        self.goals = enc(prob.hard_goals)
        soft = sorted(prob.soft_goals)
        self.soft_goals = soft
        self.soft_atoms = [idx[sg.atom] for sg in soft]
        self.soft_penalty = [float(sg.penalty) for sg in soft]
        self.soft_bits = {}
        for i, a in enumerate(self.soft_atoms):
            self.soft_bits[a] = self.soft_bits.get(a, 0) | (1 << i)
        self.full_mask = (1 << len(soft)) - 1

        n = len(self.atoms)
        self.pre_of: List[List[int]] = [[] for _ in range(n)]
        self.add_of: List[List[int]] = [[] for _ in range(n)]
        self.no_pre: List[int] = []
        for i in range(len(self.actions)):
            if not self.pre[i]:
                self.no_pre.append(i)
            for f in self.pre[i]:
                self.pre_of[f].append(i)
            for f in self.add[i]:
                self.add_of[f].append(i)
        self.pre_count = [len(p) for p in self.pre]

    # --- state helpers ---

    def mask_of(self, state: FrozenSet[int], mask: int = 0) -> int:
        for f in state:
            bit = self.soft_bits.get(f)
            if bit:
                mask |= bit
        return mask

    def penalty(self, mask: int) -> float:
        return sum(p for i, p in enumerate(self.soft_penalty) if not mask >> i & 1)

    def unsatisfied(self, mask: int) -> int:
        return len(self.soft_penalty) - bin(mask).count("1")

    def successors(self, state: FrozenSet[int]):
        for i, pre in enumerate(self.pre):
            if pre <= state:
                yield i, (state - self.dele[i]) | self.add[i]

    def encode_plan(self, plan: Sequence[GroundAction]) -> List[int]:
        return [self.by_signature[a.signature] for a in plan]

    # --- relaxation ---

    def relaxed(self, state: FrozenSet[int], open_soft: List[int], want_plan: bool, goal_count: bool):
        """
        Builds the relaxed planning graph from `state`.
        Returns (h, h_max of hard goals, reachable open soft atoms); h is INF
        when a hard goal is unreachable.
        """
        level: Dict[int, int] = {f: 0 for f in state}
        act_level: Dict[int, int] = {}
        counters = list(self.pre_count)
        ready = list(self.no_pre)
        for f in state:
            for a in self.pre_of[f]:
                counters[a] -= 1
                if counters[a] == 0:
                    ready.append(a)
        targets = set(self.goals) | set(open_soft)
        missing = targets - level.keys()
        layer = 0
        while ready and missing:
            frontier = []
            for a in ready:
                if a in act_level:
                    continue
                act_level[a] = layer
                for f in self.add[a]:
                    if f not in level:
                        level[f] = layer + 1
                        frontier.append(f)
            ready = []
            for f in frontier:
                missing.discard(f)
                for a in self.pre_of[f]:
                    counters[a] -= 1
                    if counters[a] == 0:
                        ready.append(a)
            layer += 1

        if any(g not in level for g in self.goals):
            return INF, INF, []
        h_max = max((level[g] for g in self.goals), default=0)
        reachable_soft = [f for f in open_soft if f in level]
        chosen_targets = list(self.goals) + reachable_soft

        if goal_count:
            return sum(1 for t in set(chosen_targets) if level[t] > 0), h_max, reachable_soft
        if not want_plan:
            return 0, h_max, reachable_soft

        # FF relaxed plan extraction, first achievers at the layer below
        by_level: Dict[int, set] = {}
        for t in chosen_targets:
            if level[t] > 0:
                by_level.setdefault(level[t], set()).add(t)
        top = max(by_level, default=0)
        chosen = set()
        for lv in range(top, 0, -1):
            achieved_here = set()
            for g in sorted(by_level.get(lv, ())):
                if g in achieved_here:
                    continue
                best = None
                best_cost = INF
                for a in self.add_of[g]:
                    if act_level.get(a) == lv - 1:
                        cost = sum(level[p] for p in self.pre[a])
                        if cost < best_cost:
                            best, best_cost = a, cost
                chosen.add(best)
                achieved_here |= self.add[best]
                for p in self.pre[best]:
                    if level[p] > 0:
                        by_level.setdefault(level[p], set()).add(p)
        return len(chosen), h_max, reachable_soft


def _as_compiled(cp: Union[CompiledProblem, Problem]) -> CompiledProblem:
    return cp if isinstance(cp, CompiledProblem) else CompiledProblem.identity(cp)


def _result(task: SearchTask, actions: Optional[List[int]], mask: int, cfg_w_len: float,
            started: float, nodes: int, status: str, incumbents=()) -> PlanResult:
    wall = (time.perf_counter() - started) * 1000.0
    if actions is None:
        return PlanResult(None, Fraction(0), 0, INF, wall, nodes, status, tuple(incumbents))
    penalty = sum((sg.penalty for i, sg in enumerate(task.soft_goals) if not mask >> i & 1), Fraction(0))
    plan = tuple(task.actions[i] for i in actions)
    return PlanResult(plan, penalty, len(plan), cfg_w_len * len(plan) + float(penalty), wall, nodes,
                      status, tuple(incumbents))


def solve(cp: Union[CompiledProblem, Problem], cfg: Optional[PlannerConfig] = None,
          task: Optional[SearchTask] = None) -> PlanResult:
    cfg = cfg or PlannerConfig()
    cp = _as_compiled(cp)
    started = time.perf_counter()
    task = task or SearchTask(cp.problem, cfg.seed, cp.instrumented)
    w = cfg.w_len
    goal_count = cfg.heuristic == "goal-count"
    deadline = started + cfg.time_budget

    def evaluate(state, mask):
        open_soft = [task.soft_atoms[i] for i in range(len(task.soft_atoms)) if not mask >> i & 1]
        h, h_max, reach = task.relaxed(state, open_soft, True, goal_count)
        if h == INF:
            return None
        reach = set(reach)
        residual = sum(task.soft_penalty[i] for i in range(len(task.soft_atoms))
                       if not mask >> i & 1 and task.soft_atoms[i] not in reach)
        if not cfg.pursue_soft_goals and not goal_count:
            h, _, _ = task.relaxed(state, [], True, False)
        return h, h_max, residual

    root_mask = task.mask_of(task.init)
    root_eval = evaluate(task.init, root_mask)
    if root_eval is None:
        Actor.log.info(f"🚫 {cp.problem.name}: hard goals relaxed-unreachable, unsolvable.")
        return _result(task, None, 0, w, started, 0, UNSOLVABLE)
    penalty_bound = root_eval[2]

    states = [task.init]
    masks = [root_mask]
    gs = [0]
    parents = [-1]
    via = [-1]
    best_g = {(task.init, root_mask): 0}
    seq = itertools.count()
    h, h_max, residual = root_eval
    open_list = [(residual + w * cfg.h_weight * h, h, task.unsatisfied(root_mask), next(seq), 0, h_max, residual)]

    incumbent: Optional[int] = None
    inc_obj = INF
    inc_penalty = INF
    trail: List[float] = []
    expanded = 0
    exhausted = False
    stop_reason = None

    def path(node: int) -> List[int]:
        out = []
        while parents[node] != -1:
            out.append(via[node])
            node = parents[node]
        return out[::-1]

    while True:
        if not open_list:
            exhausted = True
            break
        _, _, _, _, node, h_max, residual = heapq.heappop(open_list)
        state, mask, g = states[node], masks[node], gs[node]
        if best_g.get((state, mask), INF) < g:
            continue
        if w * (g + h_max) + residual >= inc_obj - EPS:
            continue
        if expanded >= cfg.node_budget or time.perf_counter() > deadline:
            stop_reason = "budget"
            break

        if task.goals <= state:
            penalty = task.penalty(mask)
            obj = w * g + penalty
            if obj < inc_obj - EPS:
                incumbent, inc_obj, inc_penalty = node, obj, penalty
                trail.append(obj)
                Actor.log.debug(f"⭐ incumbent objective {obj:.4f} (length {g}, penalty {penalty:g})")
            if not cfg.anytime:
                stop_reason = "first"
                break
            if cfg.stop_at_penalty_bound and inc_penalty <= penalty_bound + EPS:
                stop_reason = "bound"
                break

        expanded += 1
        for a, nxt in task.successors(state):
            nmask = task.mask_of(task.add[a], mask)
            ng = g + 1
            key = (nxt, nmask)
            if best_g.get(key, INF) <= ng:
                continue
            ev = evaluate(nxt, nmask)
            if ev is None:
                continue
            nh, nh_max, nres = ev
            if w * (ng + nh_max) + nres >= inc_obj - EPS:
                continue
            best_g[key] = ng
            states.append(nxt)
            masks.append(nmask)
            gs.append(ng)
            parents.append(node)
            via.append(a)
            f = nres + w * (ng + cfg.h_weight * nh)
            heapq.heappush(open_list, (f, nh, task.unsatisfied(nmask), next(seq), len(states) - 1, nh_max, nres))

    if incumbent is None:
        status = UNSOLVABLE if exhausted else TIMEOUT
        result = _result(task, None, 0, w, started, expanded, status)
    else:
        status = OPTIMAL if exhausted else SATISFICING
        result = _result(task, path(incumbent), masks[incumbent], w, started, expanded, status, trail)
    Actor.log.info(f"🔎 {cp.problem.name}: {result.status}, objective {result.objective:.4f}, "
                   f"{result.nodes_expanded} nodes, {result.wall_time:.0f} ms"
                   + (f" (stopped: {stop_reason})" if stop_reason else ""))
    return result


def penalty_of(cp: Union[CompiledProblem, Problem], plan: Sequence[GroundAction],
               task: Optional[SearchTask] = None) -> Fraction:
    """The planner's own penalty evaluation of `plan` (achievement semantics)."""
    cp = _as_compiled(cp)
    task = task or SearchTask(cp.problem)
    state = task.init
    mask = task.mask_of(state)
    for i in task.encode_plan(plan):
        state = (state - task.dele[i]) | task.add[i]
        mask = task.mask_of(task.add[i], mask)
    return sum((sg.penalty for i, sg in enumerate(task.soft_goals) if not mask >> i & 1), Fraction(0))


def brute_force(cp: Union[CompiledProblem, Problem], max_len: int, w_len: float = 0.01,
                guard: int = 10_000_000) -> PlanResult:
    """Exhaustive breadth-first enumeration up to `max_len` steps."""
    cp = _as_compiled(cp)
    started = time.perf_counter()
    task = SearchTask(cp.problem, instrumented=cp.instrumented)
    root = (task.init, task.mask_of(task.init))
    parent: Dict[Tuple, Tuple] = {root: (None, -1)}
    frontier = [root]
    best: Optional[Tuple] = None
    best_obj = INF
    visits = 0

    for depth in range(max_len + 1):
        nxt_frontier = []
        for key in frontier:
            state, mask = key
            if task.goals <= state:
                obj = w_len * depth + task.penalty(mask)
                if obj < best_obj - EPS:
                    best, best_obj = key, obj
            if depth == max_len:
                continue
            for a, nxt in task.successors(state):
                visits += 1
                if visits > guard:
                    raise BudgetExceeded(f"brute force exceeded {guard} node visits")
                nkey = (nxt, task.mask_of(task.add[a], mask))
                if nkey in parent:
                    continue
                parent[nkey] = (key, a)
                nxt_frontier.append(nkey)
        frontier = nxt_frontier
        if not frontier:
            break

    if best is None:
        raise NoPlanWithinBound(f"no plan of length <= {max_len} reaches the hard goals")
    actions = []
    key = best
    while parent[key][0] is not None:
        key, a = parent[key]
        actions.append(a)
    return _result(task, actions[::-1], best[1], w_len, started, visits, OPTIMAL)
