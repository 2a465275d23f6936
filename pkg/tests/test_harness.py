import json
import os

import pandas as pd
import pytest
from pydantic import ValidationError

from src.exceptions import BenchError
from src.main import run_bench
from src.models import CSV_COLUMNS, BenchConfig, CompileOptions, InstanceSpec, MetricsRecord, PlannerConfig
from src.services.harness import (
    read_results,
    run_scenario,
    scenario_jobs,
    sort_records,
    strategy_planner,
    summarize,
    write_csv,
    write_results,
    write_scenarios,
)
from src.services.plots import PLOTS, emit_plots, series_table
from src.services.warehouses import make_scenario

TINY = dict(forklifts=1, transports=1, gridsquares=3)


@pytest.fixture(scope="module")
def scenarios():
    return [make_scenario(InstanceSpec(num_packages=1, seed=seed, **TINY), kind)
            for seed, kind in ((0, "fall"), (1, "breakdown"), (2, "fall"))]


def _row(instance, packages, strategy, status="ok", **metrics):
    values = dict(time_ms=1.0, plan_len=5, set_diff=1, sym_diff=2, violations=0) if status == "ok" else {}
    values.update(metrics)
    return MetricsRecord(instance=instance, seed=0, packages=packages, strategy=strategy, status=status, **values)


@pytest.fixture
def rows():
    return [
        _row("wh-p01-s0", 1, "restart", plan_len=6, set_diff=3),
        _row("wh-p01-s0", 1, "similarity", plan_len=7, set_diff=0),
        _row("wh-p01-s0", 1, "commitment", plan_len=7, set_diff=1),
        _row("wh-p01-s1", 1, "restart", plan_len=4, set_diff=1),
        _row("wh-p01-s1", 1, "similarity", status="timeout"),
        _row("wh-p01-s1", 1, "commitment", plan_len=5, set_diff=2),
        _row("wh-p02-s0", 2, "commitment", plan_len=9),
        _row("wh-p02-s0", 2, "similarity", plan_len=8),
        _row("wh-p02-s0", 2, "restart", status="unsolvable"),
    ]


# --- Strategy runs ---

@pytest.mark.parametrize("strategy", ["restart", "similarity", "commitment"])
def test_run_scenario_ok_rows(scenarios, strategy):
    for scenario in scenarios:
        rec = run_scenario(scenario, strategy, PlannerConfig.exhaustive())
        assert rec.status == "ok"
        assert rec.instance == scenario.instance
        assert rec.packages == 1 and rec.seed == scenario.spec.seed
        assert rec.time_ms > 0
        assert rec.plan_len >= 1
        assert rec.sym_diff >= rec.set_diff >= 0


def test_restart_optimizes_nothing_but_length(scenarios):
    rec = run_scenario(scenarios[0], "restart", PlannerConfig.exhaustive())
    assert rec.penalty == 0
    assert rec.objective == pytest.approx(0.01 * rec.plan_len)


def test_optimized_penalty_matches_measured_metric(scenarios):
    for scenario in scenarios:
        sim = run_scenario(scenario, "similarity", PlannerConfig.exhaustive())
        assert sim.penalty == sim.set_diff
        com = run_scenario(scenario, "commitment", PlannerConfig.exhaustive())
        assert com.penalty == com.violations


def test_replanning_models_stay_closer_than_restart(scenarios):
    for scenario in scenarios:
        restart = run_scenario(scenario, "restart", PlannerConfig.exhaustive())
        sim = run_scenario(scenario, "similarity", PlannerConfig.exhaustive())
        assert sim.set_diff <= restart.set_diff


def test_full_scope_measures_the_whole_plan(scenarios):
    scenario = scenarios[0]
    rec = run_scenario(scenario, "similarity", PlannerConfig.exhaustive(), CompileOptions(scope="full"))
    assert rec.scope == "full"
    assert rec.penalty == rec.set_diff


def test_exhausted_budget_yields_timeout_row(scenarios):
    rec = run_scenario(scenarios[0], "commitment", PlannerConfig(node_budget=1))
    assert rec.status == "timeout"
    assert rec.plan_len is None and rec.time_ms is None
    assert rec.csv_row()["plan_len"] == ""


# --- Records ---

def test_metrics_record_validation():
    with pytest.raises(ValidationError):
        MetricsRecord(instance="x", seed=0, packages=1, strategy="restart", status="ok")
    with pytest.raises(ValidationError):
        MetricsRecord(instance="x", seed=0, packages=1, strategy="restart", status="timeout", plan_len=3)
    with pytest.raises(ValidationError):
        _row("x", 1, "restart", set_diff=-1)


def test_csv_row_formats_time():
    row = _row("wh-p01-s0", 1, "restart", time_ms=12.34567).csv_row()
    assert list(row) == CSV_COLUMNS
    assert row["time_ms"] == "12.346"


def test_sort_records_uses_strategy_order(rows):
    ordered = sort_records(reversed(rows))
    assert [(r.instance, r.strategy) for r in ordered[:3]] == [
        ("wh-p01-s0", "restart"), ("wh-p01-s0", "similarity"), ("wh-p01-s0", "commitment")]


# --- Configuration ---

def test_scenario_jobs_cover_range():
    cfg = BenchConfig(packages=(1, 3), seeds_per_size=4)
    jobs = scenario_jobs(cfg)
    assert len(jobs) == 12
    assert len(jobs) * len(cfg.strategies) == 36
    assert [j.kind for j in jobs[:4]] == ["fall", "breakdown", "fall", "breakdown"]
    assert {j.spec.num_packages for j in jobs} == {1, 2, 3}
    assert all(j.planner == cfg.scenario_planner for j in jobs)


def test_strategy_planners_model_preference_search():
    cfg = BenchConfig(planner=PlannerConfig(time_budget=7))
    restart = strategy_planner(cfg, "restart")
    assert not restart.anytime and restart.time_budget == 7
    for strategy in ("similarity", "commitment"):
        planner = strategy_planner(cfg, strategy)
        assert planner.anytime and not planner.stop_at_penalty_bound
        assert planner.time_budget == 7
    assert cfg.planner.stop_at_penalty_bound
    plain = BenchConfig(optimize_preferences=False)
    assert all(strategy_planner(plain, s) == plain.planner for s in plain.strategies)


def test_preference_search_keeps_the_bounded_answer(scenarios):
    cfg = BenchConfig(planner=PlannerConfig(time_budget=60))
    for scenario in scenarios:
        for strategy in ("similarity", "commitment"):
            bounded = run_scenario(scenario, strategy, cfg.planner)
            optimized = run_scenario(scenario, strategy, strategy_planner(cfg, strategy))
            assert optimized.status == bounded.status == "ok"
            assert optimized.penalty <= bounded.penalty
            assert optimized.objective <= bounded.objective + 1e-9


@pytest.mark.parametrize("bad", [
    dict(packages=(0, 3)),
    dict(packages=(5, 2)),
    dict(packages=(1, 13)),
    dict(strategies=[]),
    dict(strategies=["greedy"]),
    dict(kinds=[]),
    dict(planner={"time_budget": 0}),
    dict(unknown_option=True),
])
def test_bench_config_rejects(bad):
    with pytest.raises(ValidationError):
        BenchConfig(**bad)


def test_bench_config_from_yaml(tmp_path):
    path = tmp_path / "bench.yaml"
    path.write_text(
        "packages: [2, 4]\n"
        "seeds_per_size: 2\n"
        "strategies: [restart, commitment]\n"
        "planner:\n  time_budget: 5\n  w_len: 0.1\n"
        "compile:\n  scope: full\n"
    )
    cfg = BenchConfig.from_file(str(path))
    assert cfg.packages == (2, 4)
    assert cfg.strategies == ["restart", "commitment"]
    assert cfg.planner.time_budget == 5 and cfg.planner.w_len == 0.1
    assert cfg.compile.scope == "full"
    assert cfg.compile.commitment_preds == ["holding", "on", "towing", "delivered"]


def test_empty_yaml_is_default_config(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text("")
    assert BenchConfig.from_file(str(path)) == BenchConfig()


# --- Output files ---

def test_write_and_read_results(tmp_path, rows):
    cfg = BenchConfig(out_dir=str(tmp_path))
    csv_path, summary_path = write_results(cfg, rows)
    frame = read_results(csv_path)
    assert list(frame.columns) == CSV_COLUMNS
    assert len(frame) == len(rows)
    assert frame["strategy"].tolist()[:3] == ["restart", "similarity", "commitment"]
    assert pd.isna(frame.loc[frame["status"] == "timeout", "plan_len"]).all()
    meta = json.loads((tmp_path / "results.meta.json").read_text())
    assert meta["scope"] == "suffix" and meta["partial"] is False and meta["rows"] == 9
    assert os.path.exists(summary_path)


def test_rewriting_identical_records_is_byte_identical(tmp_path, rows):
    first = write_csv(rows, str(tmp_path / "a.csv"))
    second = write_csv(list(reversed(rows)), str(tmp_path / "b.csv"))
    assert open(first).read() == open(second).read()


def test_summary_means_over_ok_rows(tmp_path, rows):
    frame = read_results(write_csv(rows, str(tmp_path / "results.csv")))
    summary = summarize(frame)
    assert summary[["packages", "strategy"]].values.tolist() == [
        [1, "restart"], [1, "similarity"], [1, "commitment"],
        [2, "restart"], [2, "similarity"], [2, "commitment"]]
    one_restart = summary.iloc[0]
    assert one_restart["plan_len"] == 5 and one_restart["set_diff"] == 2
    one_sim = summary.iloc[1]
    assert one_sim["runs"] == 2 and one_sim["ok"] == 1 and one_sim["plan_len"] == 7
    assert pd.isna(summary.iloc[3]["plan_len"])


def test_no_ok_rows_skips_summary(tmp_path):
    cfg = BenchConfig(out_dir=str(tmp_path))
    _, summary_path = write_results(cfg, [_row("wh-p01-s0", 1, "restart", status="timeout")], partial=True)
    assert summary_path is None
    assert json.loads((tmp_path / "results.meta.json").read_text())["partial"] is True


def test_read_results_rejects_bad_files(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(BenchError, match="empty"):
        read_results(str(empty))
    header = tmp_path / "header.csv"
    header.write_text(",".join(CSV_COLUMNS) + "\n")
    with pytest.raises(BenchError, match="no result rows"):
        read_results(str(header))
    wrong = tmp_path / "wrong.csv"
    wrong.write_text("a,b\n1,2\n")
    with pytest.raises(BenchError, match="unexpected columns"):
        read_results(str(wrong))


def test_write_scenarios(tmp_path, scenarios):
    paths = write_scenarios([s.to_record() for s in scenarios], str(tmp_path))
    assert [os.path.basename(p) for p in paths] == ["wh-p01-s0.json", "wh-p01-s1.json", "wh-p01-s2.json"]
    assert json.loads(open(paths[1]).read())["perturbation"]["kind"] == "breakdown"


# --- Plots ---

def test_series_table_omits_failed_rows(tmp_path, rows):
    frame = read_results(write_csv(rows, str(tmp_path / "results.csv")))
    table = series_table(frame, "plan_len")
    assert list(table.columns) == ["restart", "similarity", "commitment"]
    assert table.loc[1, "similarity"] == 7
    assert pd.isna(table.loc[2, "restart"])


def test_emit_plots_writes_data_and_scripts(tmp_path, rows):
    csv_path = write_csv(rows, str(tmp_path / "results.csv"))
    written = emit_plots(csv_path, str(tmp_path / "plots"))
    assert set(written) == {spec.metric for spec in PLOTS}
    data = pd.read_csv(tmp_path / "plots" / "set_diff.csv", index_col="packages")
    assert list(data.columns) == ["restart", "similarity", "commitment"]
    time_script = (tmp_path / "plots" / "plot_time_ms.py").read_text()
    assert "LOG_SCALE = True" in time_script
    assert "LOG_SCALE = False" in (tmp_path / "plots" / "plot_plan_len.py").read_text()


def test_emit_plots_renders_png(tmp_path, rows):
    csv_path = write_csv(rows, str(tmp_path / "results.csv"))
    written = emit_plots(csv_path, str(tmp_path / "plots"), render=True)
    assert all(os.path.exists(paths[-1]) and paths[-1].endswith(".png") for paths in written.values())


def test_emit_plots_without_ok_rows(tmp_path):
    csv_path = write_csv([_row("wh-p01-s0", 1, "restart", status="timeout")], str(tmp_path / "results.csv"))
    with pytest.raises(BenchError):
        emit_plots(csv_path, str(tmp_path / "plots"))


# --- Desk-scale orderings ---

@pytest.mark.slow
def test_desk_scale_strategy_orderings(tmp_path):
    cfg = BenchConfig(packages=(1, 4), seeds_per_size=4, planner=PlannerConfig(time_budget=60),
                      workers=max(1, min(4, os.cpu_count() or 1)))
    state = run_bench(cfg, str(tmp_path))
    frame = read_results(state["outputs"]["results"])
    ok = frame[frame["status"] == "ok"]
    assert ok.groupby("strategy").size().min() >= 12

    # orderings are compared on instances every strategy solved
    common = ok.groupby("instance").filter(lambda g: len(g) == 3)
    means = common.groupby("strategy")[["time_ms", "set_diff", "sym_diff", "violations"]].mean()
    print(f"\n{common['instance'].nunique()} common instances\n{means.round(3)}")
    others = means.drop(index="restart")
    assert means.loc["restart", "time_ms"] < others["time_ms"].min()
    for metric in ("set_diff", "sym_diff"):
        assert means.loc["similarity", metric] < means.drop(index="similarity")[metric].min(), metric
    # forced violations tie the strategies on many instances
    assert means.loc["commitment", "violations"] <= means.drop(index="commitment")["violations"].min()

    buckets = common.groupby(["packages", "strategy"])[["set_diff", "violations"]].mean().unstack("strategy")
    non_surrogate = ((buckets["violations"]["similarity"] > buckets["violations"]["restart"])
                     | (buckets["set_diff"]["commitment"] > buckets["set_diff"]["similarity"]))
    assert non_surrogate.any()
