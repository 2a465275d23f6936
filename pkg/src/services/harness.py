"""
Experiment harness: runs each replanning strategy on each scenario and
measures time, plan length, set/symmetric difference against the old plan
and violated commitments for every returned plan, whatever was optimized.
"""
import concurrent.futures
import json
import os
import time
from typing import Iterable, List, NamedTuple, Optional, Tuple

import pandas as pd
from apify import Actor

from ..exceptions import BenchError, PerturbationError, PlannerError
from ..models import (
    CSV_COLUMNS,
    BenchConfig,
    CompileOptions,
    InstanceSpec,
    MetricsRecord,
    PerturbationKind,
    PlannerConfig,
    ScenarioRecord,
    Strategy,
)
from .compiler import build_constraints, compile_problem, constraint_scope_plan, strip_markers
from .external import EXTERNAL_PREFIX, solve_external
from .planner import TIMEOUT, PlanResult, solve
from .plans import extract_commitments, honored_commitments, plan_diff
from .warehouses import Scenario, make_scenario

STRATEGY_ORDER = {"restart": 0, "similarity": 1, "commitment": 2}


def _solve(cp, planner_cfg: PlannerConfig, solver: str) -> PlanResult:
    if solver.startswith(EXTERNAL_PREFIX):
        return solve_external(cp, solver, planner_cfg.time_budget, planner_cfg.w_len)
    return solve(cp, planner_cfg)


def run_scenario(scenario: Scenario, strategy: Strategy, planner_cfg: Optional[PlannerConfig] = None,
                 compile_opts: Optional[CompileOptions] = None, solver: str = "embedded") -> MetricsRecord:
    planner_cfg = planner_cfg or PlannerConfig()
    compile_opts = compile_opts or CompileOptions()
    base = dict(instance=scenario.instance, seed=scenario.spec.seed, packages=scenario.spec.num_packages,
                strategy=strategy, scope=compile_opts.scope)
    old_plan = scenario.original_plan
    k = scenario.prefix_len

    started = time.perf_counter()
    cs = build_constraints(strategy, scenario.problem, old_plan, k, compile_opts.commitment_preds,
                           compile_opts.scope, compile_opts.default_penalty)
    cp = compile_problem(strategy, scenario.perturbed_problem, cs, compile_opts.replace_originals)
    try:
        result = _solve(cp, planner_cfg, solver)
    except PlannerError as e:
        Actor.log.error(f"❌ {scenario.instance}/{strategy}: {e}")
        return MetricsRecord(status="unsolvable", **base)
    elapsed = (time.perf_counter() - started) * 1000.0

    if not result.solved:
        status = "timeout" if result.status == TIMEOUT else "unsolvable"
        Actor.log.warning(f"⚠️ {scenario.instance}/{strategy}: {status}, no data point.")
        return MetricsRecord(status=status, **base)

    new_plan = strip_markers(cp, result.plan)
    diff = plan_diff(constraint_scope_plan(old_plan, k, compile_opts.scope), new_plan)
    commitments = extract_commitments(scenario.problem, old_plan, compile_opts.commitment_preds)
    honored = honored_commitments(scenario.perturbed_problem, new_plan, commitments)
    return MetricsRecord(
        status="ok",
        time_ms=elapsed,
        plan_len=len(new_plan),
        set_diff=diff.set_diff,
        sym_diff=diff.sym_diff,
        violations=len(commitments) - len(honored),
        objective=result.objective,
        penalty=float(result.penalty_sum),
        **base,
    )


# --- Jobs (top-level so they pickle into worker processes) ---

class ScenarioJob(NamedTuple):
    spec: InstanceSpec
    kind: PerturbationKind
    planner: PlannerConfig


class StrategyJob(NamedTuple):
    record: ScenarioRecord
    strategy: Strategy
    planner: PlannerConfig
    compile: CompileOptions
    solver: str


def scenario_jobs(cfg: BenchConfig) -> List[ScenarioJob]:
    """Seeds per size count up from base_seed; perturbation kinds cycle with them."""
    lo, hi = cfg.packages
    jobs = []
    for n in range(lo, hi + 1):
        for i in range(cfg.seeds_per_size):
            spec = InstanceSpec(num_packages=n, seed=cfg.base_seed + i)
            jobs.append(ScenarioJob(spec, cfg.kinds[i % len(cfg.kinds)], cfg.scenario_planner))
    return jobs


def build_scenario(job: ScenarioJob) -> Optional[ScenarioRecord]:
    try:
        return make_scenario(job.spec, job.kind, job.planner).to_record()
    except (PerturbationError, PlannerError) as e:
        Actor.log.warning(f"⚠️ Skipping scenario p{job.spec.num_packages} seed {job.spec.seed}: {e}")
        return None


def run_strategy(job: StrategyJob) -> MetricsRecord:
    scenario = Scenario.from_record(job.record)
    return run_scenario(scenario, job.strategy, job.planner, job.compile, job.solver)


def _map(fn, jobs: list, workers: int, sink: Optional[list] = None) -> list:
    """
    Runs jobs inline or in a process pool. Results are returned in job order
    and also appended to `sink` as they finish, so an interrupted run keeps them.
    """
    sink = sink if sink is not None else []
    if workers <= 1:
        results = []
        for job in jobs:
            results.append(fn(job))
            sink.append(results[-1])
        return results
    results = [None] * len(jobs)
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as executor:
        futures = {executor.submit(fn, job): i for i, job in enumerate(jobs)}
        try:
            for future in concurrent.futures.as_completed(futures):
                results[futures[future]] = future.result()
                sink.append(results[futures[future]])
        except KeyboardInterrupt:
            executor.shutdown(wait=False, cancel_futures=True)
            raise
    return results


def generate_scenarios(cfg: BenchConfig) -> List[ScenarioRecord]:
    records = _map(build_scenario, scenario_jobs(cfg), cfg.workers)
    return [r for r in records if r is not None]


def sort_records(records: Iterable[MetricsRecord]) -> List[MetricsRecord]:
    return sorted(records, key=lambda r: (r.instance, STRATEGY_ORDER[r.strategy]))


def strategy_planner(cfg: BenchConfig, strategy: Strategy) -> PlannerConfig:
    """
    Restart is plain planning from scratch: the first plan found is its answer.
    The compiled strategies spend the budget on their metric, as preference
    planners do, instead of returning once the penalty lower bound is met.
    """
    if not cfg.optimize_preferences:
        return cfg.planner
    if strategy == "restart":
        return cfg.planner.model_copy(update={"anytime": False})
    return cfg.planner.model_copy(update={"anytime": True, "stop_at_penalty_bound": False})


def run_strategies(cfg: BenchConfig, scenarios: List[ScenarioRecord],
                   done: Optional[List[MetricsRecord]] = None) -> List[MetricsRecord]:
    jobs = [StrategyJob(rec, s, strategy_planner(cfg, s), cfg.compile, cfg.solver)
            for rec in scenarios for s in cfg.strategies]
    Actor.log.info(f"🏁 Running {len(jobs)} replanning jobs on {cfg.workers} worker(s).")
    return sort_records(_map(run_strategy, jobs, cfg.workers, done))


# --- Output ---

def write_csv(records: Iterable[MetricsRecord], path: str) -> str:
    frame = pd.DataFrame([r.csv_row() for r in sort_records(records)], columns=CSV_COLUMNS)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    frame.to_csv(path, index=False)
    return path


def read_results(path: str) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path)
    except pd.errors.EmptyDataError as e:
        raise BenchError(f"{path}: empty file") from e
    if list(frame.columns) != CSV_COLUMNS:
        raise BenchError(f"{path}: unexpected columns {list(frame.columns)}")
    if frame.empty:
        raise BenchError(f"{path}: no result rows")
    return frame


def summarize(frame: pd.DataFrame) -> pd.DataFrame:
    """Means per (packages, strategy) over ok rows, with ok/total counts."""
    metrics = ["time_ms", "plan_len", "set_diff", "sym_diff", "violations"]
    ok = frame[frame["status"] == "ok"]
    means = ok.groupby(["packages", "strategy"])[metrics].mean()
    counts = frame.groupby(["packages", "strategy"]).agg(
        runs=("status", "size"), ok=("status", lambda s: int((s == "ok").sum())))
    summary = counts.join(means).reset_index()
    summary["order"] = summary["strategy"].map(STRATEGY_ORDER)
    return summary.sort_values(["packages", "order"]).drop(columns="order").reset_index(drop=True)


def write_scenarios(records: Iterable[ScenarioRecord], out_dir: str) -> List[str]:
    target = os.path.join(out_dir, "scenarios")
    os.makedirs(target, exist_ok=True)
    paths = []
    for rec in records:
        path = os.path.join(target, f"{rec.instance}.json")
        with open(path, "w") as f:
            f.write(rec.model_dump_json(indent=2))
        paths.append(path)
    return paths


def write_results(cfg: BenchConfig, records: List[MetricsRecord], out_dir: Optional[str] = None,
                  partial: bool = False) -> Tuple[str, Optional[str]]:
    out_dir = out_dir or cfg.out_dir
    csv_path = write_csv(records, os.path.join(out_dir, "results.csv"))
    meta = {"scope": cfg.compile.scope, "partial": partial, "rows": len(records), "config": cfg.model_dump()}
    with open(os.path.join(out_dir, "results.meta.json"), "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
    if not records or not any(r.status == "ok" for r in records):
        Actor.log.warning("⚠️ No ok rows; summary.csv not written.")
        return csv_path, None
    summary_path = os.path.join(out_dir, "summary.csv")
    summarize(read_results(csv_path)).to_csv(summary_path, index=False, float_format="%.3f")
    Actor.log.info(f"💾 Wrote {len(records)} rows to {csv_path} and the summary to {summary_path}.")
    return csv_path, summary_path
