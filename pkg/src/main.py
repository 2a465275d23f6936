import asyncio
from typing import Dict, List, Optional, TypedDict

from apify import Actor
from langgraph.graph import END, StateGraph

from .models import BenchConfig, MetricsRecord, ScenarioRecord
from .services.harness import generate_scenarios, run_strategies, write_results, write_scenarios


# --- State Definition ---
class BenchState(TypedDict):
    config: BenchConfig
    out_dir: str
    push: bool
    scenarios: List[ScenarioRecord]
    records: List[MetricsRecord]
    outputs: Dict[str, Optional[str]]


# --- Nodes ---

async def generate_scenarios_node(state: BenchState):
    """Generates every instance, plans it from scratch and perturbs the execution."""
    config = state['config']
    lo, hi = config.packages
    Actor.log.info(f"🏭 Generating scenarios for {lo}..{hi} packages, {config.seeds_per_size} seeds each.")
    scenarios = generate_scenarios(config)
    write_scenarios(scenarios, state['out_dir'])
    Actor.log.info(f"📚 Queued {len(scenarios)} scenarios for replanning.")
    return {"scenarios": scenarios}


async def run_strategies_node(state: BenchState):
    config = state['config']
    done: List[MetricsRecord] = []
    try:
        records = run_strategies(config, state['scenarios'], done)
    except KeyboardInterrupt:
        Actor.log.warning(f"⚠️ Interrupted; flushing {len(done)} finished rows.")
        write_results(config, done, state['out_dir'], partial=True)
        raise

    if state['push']:
        for record in records:
            await Actor.push_data(record.model_dump())
        Actor.log.info(f"✅ Pushed {len(records)} rows to the dataset.")
    return {"records": records}


async def write_results_node(state: BenchState):
    csv_path, summary_path = write_results(state['config'], state['records'], state['out_dir'])
    return {"outputs": {"results": csv_path, "summary": summary_path}}


def build_workflow():
    workflow = StateGraph(BenchState)
    workflow.add_node("generate_scenarios", generate_scenarios_node)
    workflow.add_node("run_strategies", run_strategies_node)
    workflow.add_node("write_results", write_results_node)

    workflow.set_entry_point("generate_scenarios")
    workflow.add_edge("generate_scenarios", "run_strategies")
    workflow.add_edge("run_strategies", "write_results")
    workflow.add_edge("write_results", END)
    return workflow.compile()


async def run_bench_async(config: BenchConfig, out_dir: Optional[str] = None, push: bool = False) -> BenchState:
    app = build_workflow()
    return await app.ainvoke({
        "config": config,
        "out_dir": out_dir or config.out_dir,
        "push": push,
        "scenarios": [],
        "records": [],
        "outputs": {},
    })


def run_bench(config: BenchConfig, out_dir: Optional[str] = None) -> BenchState:
    """Runs the whole benchmark; results.csv, summary.csv and scenarios/ land in out_dir."""
    return asyncio.run(run_bench_async(config, out_dir))


# --- Main Entry ---

async def main():
    async with Actor:
        raw_input = await Actor.get_input() or {}
        config = BenchConfig(**raw_input)
        if config.solver != "embedded":
            Actor.log.warning("⚠️ External solvers are not available on the platform. Using the embedded planner.")
            config = config.model_copy(update={"solver": "embedded"})
        await run_bench_async(config, push=True)


if __name__ == '__main__':
    asyncio.run(main())
