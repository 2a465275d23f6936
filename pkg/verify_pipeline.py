import sys
import os
import asyncio
import tempfile

# Add src to path
sys.path.append(os.path.join(os.getcwd(), 'src'))

TINY = dict(forklifts=1, transports=1, gridsquares=3)

async def test_imports():
    print("Testing Imports...")
    try:
        from src.models import BenchConfig, MetricsRecord, ScenarioRecord
        from src.services.compiler import compile_problem
        from src.services.planner import solve
        from src.services.harness import run_scenario
        from src.services.plots import emit_plots
        print("[OK] Imports successful.")
    except Exception as e:
        print(f"[FAIL] Import failed: {e}")
        return

async def test_domain():
    print("\nTesting Domain Round Trip...")
    try:
        from src.services.pddl_parser import parse_domain
        from src.services.pddl_writer import emit_domain
        from src.services.warehouses import warehouse_domain

        dom = warehouse_domain()
        again = parse_domain(emit_domain(dom))
        assert again == dom, "emitted domain does not parse back identically"
        print(f"[OK] Domain '{dom.name}' has {len(dom.actions)} actions and survives a round trip.")
    except Exception as e:
        print(f"[FAIL] Domain check failed: {e}")

async def test_strategies():
    print("\nTesting Strategies on a Tiny Scenario...")
    try:
        from src.models import InstanceSpec, PlannerConfig
        from src.services.harness import run_scenario
        from src.services.warehouses import make_scenario

        scenario = make_scenario(InstanceSpec(num_packages=1, seed=0, **TINY), "fall")
        for strategy in ("restart", "similarity", "commitment"):
            rec = run_scenario(scenario, strategy, PlannerConfig.exhaustive())
            assert rec.status == "ok", f"{strategy} returned {rec.status}"
            if strategy == "similarity":
                assert rec.penalty == rec.set_diff, "similarity penalty disagrees with set difference"
            if strategy == "commitment":
                assert rec.penalty == rec.violations, "commitment penalty disagrees with violations"
            print(f"[OK] {strategy}: len={rec.plan_len} set_diff={rec.set_diff} "
                  f"sym_diff={rec.sym_diff} violations={rec.violations}")
    except Exception as e:
        print(f"[FAIL] Strategy run failed: {e}")

async def test_bench():
    print("\nTesting Benchmark Workflow...")
    try:
        from src.main import run_bench_async
        from src.models import BenchConfig

        with tempfile.TemporaryDirectory() as out:
            cfg = BenchConfig(packages=(1, 1), seeds_per_size=2, optimize_preferences=False)
            state = await run_bench_async(cfg, out)
            print(f"[OK] Workflow wrote {len(state['records'])} rows to {state['outputs']['results']}.")
    except Exception as e:
        print(f"[FAIL] Benchmark workflow failed: {e}")

async def main():
    await test_imports()
    await test_domain()
    await test_strategies()
    await test_bench()

if __name__ == "__main__":
    asyncio.run(main())
