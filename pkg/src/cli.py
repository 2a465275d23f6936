"""
Command line surface: gen, plan, replan, compile, simulate, diff, bench, plot, actor.
"""
import argparse
import asyncio
import json
import logging
import os
import sys
from typing import List, Optional

from apify import Actor
from pydantic import ValidationError

from .exceptions import ReplanError
from .models import BenchConfig, CompileOptions, InstanceSpec, PlannerConfig, ScenarioRecord
from .services.compiler import EmptyConstraints, build_constraints, compile_problem, write_compiled
from .services.external import EXTERNAL_PREFIX, solve_external
from .services.harness import run_scenario
from .services.pddl_parser import parse_atoms, parse_domain, parse_problem
from .services.pddl_writer import emit, emit_domain
from .services.planner import solve
from .services.plans import plan_diff, read_plan, resolve_plan, validate, write_plan
from .services.plots import emit_plots
from .services.warehouses import Scenario, generate_instance, instance_id, make_scenario

LOG_LEVEL_ENV = "REPLAN_LOG_LEVEL"


def _read(path: str) -> str:
    with open(path) as f:
        return f.read()


def _write(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as f:
        f.write(text)


def _load_problem(domain_path: str, problem_path: str):
    return parse_problem(_read(problem_path), parse_domain(_read(domain_path)))


def _load_scenario(path: str) -> Scenario:
    return Scenario.from_record(ScenarioRecord.model_validate_json(_read(path)))


def _planner_config(args) -> PlannerConfig:
    overrides = {}
    if getattr(args, "time_budget", None) is not None:
        overrides["time_budget"] = args.time_budget
    if getattr(args, "node_budget", None) is not None:
        overrides["node_budget"] = args.node_budget
    if getattr(args, "w_len", None) is not None:
        overrides["w_len"] = args.w_len
    return PlannerConfig(**overrides)


def _compile_options(args, **fields) -> CompileOptions:
    if getattr(args, "commitment_preds", None):
        fields["commitment_preds"] = args.commitment_preds
    return CompileOptions(**fields)


def _solve(cp, cfg: PlannerConfig, solver: str):
    if solver.startswith(EXTERNAL_PREFIX):
        return solve_external(cp, solver, cfg.time_budget, cfg.w_len)
    return solve(cp, cfg)


# --- Subcommands ---

def cmd_gen(args) -> int:
    spec = InstanceSpec(num_packages=args.packages, seed=args.seed)
    problem = generate_instance(spec)
    _write(os.path.join(args.out, "domain.pddl"), emit_domain(problem.domain))
    _write(os.path.join(args.out, f"{instance_id(spec)}.pddl"), emit(problem, "plain"))
    if args.kind:
        scenario = make_scenario(spec, args.kind, _planner_config(args).model_copy(update={"anytime": False}))
        _write(os.path.join(args.out, f"{scenario.instance}.json"), scenario.to_record().model_dump_json(indent=2))
    Actor.log.info(f"🏭 Wrote {instance_id(spec)} to {args.out}.")
    return 0


def cmd_plan(args) -> int:
    problem = _load_problem(args.domain, args.problem)
    result = _solve(compile_problem("restart", problem, EmptyConstraints()), _planner_config(args), args.solver)
    if not result.solved:
        print(f"; {result.status}")
        return 1
    text = write_plan(result.plan)
    if args.out:
        _write(args.out, text)
    print(text, end="")
    print(f"; status {result.status}, length {result.plan_length}, penalty {result.penalty_sum}, "
          f"objective {result.objective:.4f}")
    return 0


def cmd_replan(args) -> int:
    scenario = _load_scenario(args.scenario)
    opts = _compile_options(args, scope=args.scope)
    record = run_scenario(scenario, args.strategy, _planner_config(args), opts, args.solver)
    print(record.model_dump_json())
    return 0 if record.status == "ok" else 1


def cmd_compile(args) -> int:
    if args.scenario:
        scenario = _load_scenario(args.scenario)
        problem, old_plan, k, perturbed = (scenario.problem, scenario.original_plan,
                                           scenario.prefix_len, scenario.perturbed_problem)
    else:
        if not (args.domain and args.problem and args.plan and args.state and args.prefix is not None):
            raise SystemExit("compile needs --scenario, or --domain --problem --plan --state --prefix")
        problem = _load_problem(args.domain, args.problem)
        old_plan = resolve_plan(problem, read_plan(_read(args.plan)))
        k = args.prefix
        perturbed = problem.replace(init=parse_atoms(_read(args.state), problem))
    opts = _compile_options(args, scope=args.scope, replace_originals=args.replace_originals)
    cs = build_constraints(args.model, problem, old_plan, k, opts.commitment_preds, opts.scope)
    cp = compile_problem(args.model, perturbed, cs, opts.replace_originals)
    domain_path, problem_path = write_compiled(cp, args.out)
    print(f"{domain_path}\n{problem_path}")
    return 0


def cmd_simulate(args) -> int:
    problem = _load_problem(args.domain, args.problem)
    plan = resolve_plan(problem, read_plan(_read(args.plan)))
    result = validate(problem, plan)
    print(json.dumps({
        "valid": result.valid,
        "failed_step": result.failed_step,
        "missing": [str(a) for a in result.missing],
        "unmet_hard_goals": sorted(str(a) for a in result.unmet_hard_goals),
        "unsatisfied_soft_goals": sorted(str(sg.atom) for sg in result.unsatisfied_soft_goals),
        "penalty_sum": str(result.penalty_sum),
    }, indent=2))
    return 0 if result.valid else 1


def cmd_diff(args) -> int:
    old = read_plan(_read(args.old))
    new = read_plan(_read(args.new))
    diff = plan_diff(old, new, multiset=args.multiset)
    print(json.dumps(diff._asdict()))
    return 0


def cmd_bench(args) -> int:
    from .main import run_bench

    cfg = BenchConfig.from_file(args.config) if args.config else BenchConfig()
    updates = {}
    if args.workers:
        updates["workers"] = args.workers
    if args.solver:
        updates["solver"] = args.solver
    if args.time_budget:
        updates["planner"] = cfg.planner.model_copy(update={"time_budget": args.time_budget})
    cfg = cfg.model_copy(update=updates)
    state = run_bench(cfg, args.out)
    for name, path in state["outputs"].items():
        if path:
            print(f"{name}: {path}")
    return 0


def cmd_plot(args) -> int:
    written = emit_plots(args.csv, args.out, render=args.render)
    for paths in written.values():
        print("\n".join(paths))
    return 0


def cmd_actor(args) -> int:
    from .main import main as actor_main

    asyncio.run(actor_main())
    return 0


# --- Parser ---

def _budget_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--time-budget", type=float, help="Search time budget in seconds")
    p.add_argument("--node-budget", type=int, help="Search node budget")
    p.add_argument("--w-len", type=float, help="Weight of plan length in the objective")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="replan", description="Replanning benchmark on the Warehouses domain.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="Generate an instance, optionally with a perturbed scenario")
    p.add_argument("--packages", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kind", choices=["fall", "breakdown"], help="Also plan and perturb into a scenario file")
    p.add_argument("--out", default=".")
    _budget_flags(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("plan", help="Solve a PDDL problem")
    p.add_argument("domain")
    p.add_argument("problem")
    p.add_argument("--out")
    p.add_argument("--solver", default="embedded", help="'embedded' or 'external:<command template>'")
    _budget_flags(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("replan", help="Run one strategy on a scenario file")
    p.add_argument("--scenario", required=True)
    p.add_argument("--strategy", choices=["restart", "similarity", "commitment"], required=True)
    p.add_argument("--scope", choices=["suffix", "full"], default="suffix")
    p.add_argument("--commitment-preds", nargs="+", metavar="PRED",
                   help="Commitment-relevant predicates (default: holding on towing delivered)")
    p.add_argument("--solver", default="embedded")
    _budget_flags(p)
    p.set_defaults(func=cmd_replan)

    p = sub.add_parser("compile", help="Write the compiled replanning problem as PDDL3")
    p.add_argument("--model", choices=["restart", "similarity", "commitment"], required=True)
    p.add_argument("--scenario")
    p.add_argument("--domain")
    p.add_argument("--problem")
    p.add_argument("--plan")
    p.add_argument("--state", help="Perturbed state as a list of ground atoms")
    p.add_argument("--prefix", type=int, help="Number of executed steps of --plan")
    p.add_argument("--scope", choices=["suffix", "full"], default="suffix")
    p.add_argument("--commitment-preds", nargs="+", metavar="PRED",
                   help="Commitment-relevant predicates (default: holding on towing delivered)")
    p.add_argument("--replace-originals", action="store_true")
    p.add_argument("--out", default="compiled")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("simulate", help="Validate a plan against a problem")
    p.add_argument("domain")
    p.add_argument("problem")
    p.add_argument("plan")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("diff", help="Set and symmetric difference of two plans")
    p.add_argument("old")
    p.add_argument("new")
    p.add_argument("--multiset", action="store_true")
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("bench", help="Run the full benchmark")
    p.add_argument("--config", help="YAML benchmark configuration")
    p.add_argument("--out")
    p.add_argument("--workers", type=int)
    p.add_argument("--solver")
    p.add_argument("--time-budget", type=float)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("plot", help="Emit plot data files and renderer scripts")
    p.add_argument("csv")
    p.add_argument("--out", default="plots")
    p.add_argument("--render", action="store_true", help="Also render PNGs")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("actor", help="Run as an Apify actor")
    p.set_defaults(func=cmd_actor)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=os.getenv(LOG_LEVEL_ENV, "INFO").upper(), format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ReplanError, ValidationError, OSError) as e:
        Actor.log.error(f"❌ {args.command}: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
