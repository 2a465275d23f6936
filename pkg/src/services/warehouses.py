"""
Warehouses benchmark family: the domain, a seeded instance generator and the
two perturbation kinds (package falls, carrier breakdowns).
"""
import random
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import networkx as nx
from apify import Actor

from ..exceptions import PerturbationError, PlannerError
from ..models import CarrierBreaks, InstanceSpec, PackageFalls, Perturbation, PerturbationKind, PlannerConfig, ScenarioRecord
from .pddl_parser import parse_atoms, parse_domain
from .pddl_types import Domain, GroundAtom, Problem, State, atom
from .planner import solve
from .plans import Plan, read_plan, resolve_plan, simulate, validate, write_plan

DOMAIN_FILE = Path(__file__).resolve().parent.parent / "data" / "warehouses.pddl"

MAX_PERTURB_DRAWS = 50


@lru_cache(maxsize=1)
def warehouse_domain() -> Domain:
    return parse_domain(DOMAIN_FILE.read_text())


def instance_id(spec: InstanceSpec) -> str:
    return f"wh-p{spec.num_packages:02d}-s{spec.seed}"


def gridsquare_graph(n: int, rng: random.Random, extra_edge_ratio: float = 0.3) -> nx.Graph:
    """Random spanning tree over g1..gn plus extra random edges."""
    names = [f"g{i}" for i in range(1, n + 1)]
    graph = nx.Graph()
    graph.add_nodes_from(names)
    for i in range(1, n):
        graph.add_edge(names[i], names[rng.randrange(i)])
    index = {g: i for i, g in enumerate(names)}
    # non_edges orientation follows set order, so normalize before sampling
    non_edges = sorted(tuple(sorted(e, key=index.__getitem__)) for e in nx.non_edges(graph))
    extra = min(len(non_edges), round(extra_edge_ratio * n))
    graph.add_edges_from(rng.sample(non_edges, extra))
    if not nx.is_connected(graph):
        raise AssertionError("gridsquare graph is disconnected")
    return graph


def generate_instance(spec: InstanceSpec) -> Problem:
    """Deterministic in `spec`; hard goals are packaged(p) for every package."""
    domain = warehouse_domain()
    rng = random.Random(f"warehouses-{spec.num_packages}-{spec.seed}")

    graph = gridsquare_graph(spec.n_gridsquares, rng, spec.extra_edge_ratio)
    squares = sorted(graph.nodes, key=lambda g: int(g[1:]))
    packages = [f"p{i}" for i in range(1, spec.num_packages + 1)]
    shelves = [f"s{i}" for i in range(1, spec.n_shelves + 1)]
    forklifts = [f"f{i}" for i in range(1, spec.n_forklifts + 1)]
    transports = [f"t{i}" for i in range(1, spec.n_transports + 1)]
    towtrucks = [f"w{i}" for i in range(1, spec.tow_trucks + 1)]
    garages = [f"r{i}" for i in range(1, spec.garages + 1)]
    packagers = [f"k{i}" for i in range(1, spec.packagers + 1)]

    objects = {}
    for names, type_name in ((squares, "gridsquare"), (packages, "package"), (shelves, "shelf"),
                             (forklifts, "forklift"), (transports, "transport"), (towtrucks, "towtruck"),
                             (garages, "garage"), (packagers, "packager")):
        objects.update({o: type_name for o in names})

    init = set()
    for u, v in graph.edges:
        init |= {atom("connected", u, v), atom("connected", v, u)}
    for s in shelves:
        access = rng.sample(squares, 2 if rng.random() < 0.3 else 1)
        init |= {atom("accessible", s, g) for g in access}
    for p in packages:
        init.add(atom("stocked", p, rng.choice(shelves)))
    for c in forklifts + transports:
        init |= {atom("at", c, rng.choice(squares)), atom("operational", c)}
    for f in forklifts:
        init.add(atom("free", f))
    for w in towtrucks:
        init |= {atom("at", w, rng.choice(squares)), atom("tow-free", w)}
    for r in garages:
        init.add(atom("at-garage", r, rng.choice(squares)))
    for k in packagers:
        init.add(atom("packager-at", k, rng.choice(squares)))

    return Problem(
        name=instance_id(spec),
        domain=domain,
        objects=objects,
        init=frozenset(init),
        hard_goals=frozenset(atom("packaged", p) for p in packages),
    )


# --- Perturbations ---

def _location(state: State, vehicle: str) -> Optional[str]:
    for a in state:
        if a.predicate == "at" and a.args[0] == vehicle:
            return a.args[1]
    return None


def _fall(state: State, k: int, rng: random.Random) -> Optional[Tuple[Perturbation, State]]:
    carried: List[Tuple[GroundAtom, str, str]] = []
    for a in sorted(state):
        if a.predicate == "holding":
            carried.append((a, a.args[1], a.args[0]))
        elif a.predicate == "on":
            carried.append((a, a.args[0], a.args[1]))
    carried = [(a, p, c) for a, p, c in carried if _location(state, c) is not None]
    if not carried:
        return None
    lost, package, carrier = rng.choice(carried)
    square = _location(state, carrier)
    mutated = (state - {lost}) | {atom("fallen", package, square)}
    if lost.predicate == "holding":
        mutated |= {atom("free", carrier)}
    return PackageFalls(package=package, gridsquare=square, prefix_len=k), frozenset(mutated)


def _breakdown(prob: Problem, plan: Plan, state: State, k: int,
               rng: random.Random) -> Optional[Tuple[Perturbation, State]]:
    used = sorted({
        arg for a in plan[k:] for arg in a.args
        if arg in prob.objects and prob.domain.is_subtype(prob.objects[arg], "carrier") and atom("operational", arg) in state
    })
    if not used:
        return None
    carrier = rng.choice(used)
    mutated = (state - {atom("operational", carrier)}) | {atom("broken", carrier)}
    return CarrierBreaks(carrier=carrier, prefix_len=k), frozenset(mutated)


def perturb(prob: Problem, plan: Sequence, kind: PerturbationKind, seed: int,
            max_draws: int = MAX_PERTURB_DRAWS) -> Tuple[Perturbation, State]:
    """
    Executes a random prefix of `plan` and mutates the state it ends in.
    Draws that leave the old suffix executable are discarded.
    """
    plan = tuple(plan)
    if len(plan) < 2:
        raise PerturbationError(f"plan of length {len(plan)} leaves no execution point to perturb")
    trace = simulate(prob, plan)
    rng = random.Random(f"perturb-{kind}-{seed}")
    for _ in range(max_draws):
        k = rng.randint(1, len(plan) - 1)
        state = trace.states[k]
        drawn = _fall(state, k, rng) if kind == "fall" else _breakdown(prob, plan, state, k, rng)
        if drawn is None:
            continue
        perturbation, mutated = drawn
        if validate(prob.replace(init=mutated), plan[k:]).valid:
            continue
        return perturbation, mutated
    raise PerturbationError(f"no {kind} perturbation of {prob.name} invalidates the plan after {max_draws} draws")


# --- Scenarios ---

@dataclass(frozen=True)
class Scenario:
    instance: str
    spec: InstanceSpec
    problem: Problem
    original_plan: Plan
    perturbation: Perturbation
    perturbed_state: State

    @property
    def prefix_len(self) -> int:
        return self.perturbation.prefix_len

    @property
    def perturbed_problem(self) -> Problem:
        return self.problem.replace(init=self.perturbed_state)

    def to_record(self) -> ScenarioRecord:
        return ScenarioRecord(
            instance=self.instance,
            spec=self.spec,
            original_plan=write_plan(self.original_plan).splitlines(),
            perturbation=self.perturbation,
            perturbed_state=sorted(str(a) for a in self.perturbed_state),
        )

    @classmethod
    def from_record(cls, record: ScenarioRecord) -> "Scenario":
        """Rebuilds the problem from its spec; the plan and I' are taken verbatim."""
        problem = generate_instance(record.spec)
        plan = resolve_plan(problem, read_plan("\n".join(record.original_plan)))
        state = parse_atoms("\n".join(record.perturbed_state), problem)
        return cls(record.instance, record.spec, problem, plan, record.perturbation, state)


def make_scenario(spec: InstanceSpec, kind: PerturbationKind,
                  planner_cfg: Optional[PlannerConfig] = None) -> Scenario:
    """Plans the generated instance from scratch, then perturbs the plan's execution."""
    problem = generate_instance(spec)
    result = solve(problem, planner_cfg or PlannerConfig(anytime=False))
    if not result.solved:
        raise PlannerError(f"no original plan for {problem.name} ({result.status})")
    perturbation, state = perturb(problem, result.plan, kind, spec.seed)
    Actor.log.info(f"🏭 {problem.name}: plan of {len(result.plan)} steps, {kind} after step {perturbation.prefix_len}.")
    return Scenario(instance_id(spec), spec, problem, result.plan, perturbation, state)
