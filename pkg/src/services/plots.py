"""
Plot artifacts for a results CSV: per metric, a data file with the mean over
ok rows per (packages, strategy) and a standalone matplotlib script that
renders it. Timed-out and unsolvable rows contribute no points.
"""
import os
from typing import Dict, List, NamedTuple

import pandas as pd
from apify import Actor

from ..exceptions import BenchError
from .harness import STRATEGY_ORDER, read_results


class PlotSpec(NamedTuple):
    metric: str
    ylabel: str
    log_scale: bool = False


PLOTS: List[PlotSpec] = [
    PlotSpec("time_ms", "Time taken to replan (ms)", log_scale=True),
    PlotSpec("plan_len", "Plan size (number of actions)"),
    PlotSpec("set_diff", "Set difference (actions) vs. original plan"),
    PlotSpec("sym_diff", "Symmetric difference (actions) vs. original plan"),
    PlotSpec("violations", "Commitments violated"),
]

SCRIPT = '''"""Renders {metric}.csv to {metric}.png."""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

LOG_SCALE = {log_scale}

frame = pd.read_csv("{metric}.csv", index_col="packages")
fig, ax = plt.subplots(figsize=(6, 4))
for strategy in frame.columns:
    series = frame[strategy].dropna()
    ax.plot(series.index, series.values, marker="o", label=strategy)
if LOG_SCALE:
    ax.set_yscale("log")
ax.set_xlabel("Number of packages")
ax.set_ylabel("{ylabel}")
ax.legend()
fig.tight_layout()
fig.savefig("{metric}.png", dpi=150)
'''


def series_table(frame: pd.DataFrame, metric: str) -> pd.DataFrame:
    ok = frame[frame["status"] == "ok"]
    if ok.empty:
        raise BenchError("no ok rows to plot")
    table = ok.pivot_table(index="packages", columns="strategy", values=metric, aggfunc="mean")
    strategies = sorted(frame["strategy"].unique(), key=STRATEGY_ORDER.get)
    return table.reindex(columns=strategies)


def _render(table: pd.DataFrame, spec: PlotSpec, png_path: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for strategy in table.columns:
        series = table[strategy].dropna()
        ax.plot(series.index, series.values, marker="o", label=strategy)
    if spec.log_scale:
        ax.set_yscale("log")
    ax.set_xlabel("Number of packages")
    ax.set_ylabel(spec.ylabel)
    ax.legend()
    fig.tight_layout()
    fig.savefig(png_path, dpi=150)
    plt.close(fig)


def emit_plots(csv_path: str, out_dir: str, render: bool = False) -> Dict[str, List[str]]:
    """Returns, per metric, the files written."""
    frame = read_results(csv_path)
    os.makedirs(out_dir, exist_ok=True)
    written: Dict[str, List[str]] = {}
    for spec in PLOTS:
        table = series_table(frame, spec.metric)
        data_path = os.path.join(out_dir, f"{spec.metric}.csv")
        table.to_csv(data_path, float_format="%.3f")
        script_path = os.path.join(out_dir, f"plot_{spec.metric}.py")
        with open(script_path, "w") as f:
            f.write(SCRIPT.format(metric=spec.metric, ylabel=spec.ylabel, log_scale=spec.log_scale))
        written[spec.metric] = [data_path, script_path]
        if render:
            png_path = os.path.join(out_dir, f"{spec.metric}.png")
            _render(table, spec, png_path)
            written[spec.metric].append(png_path)
    Actor.log.info(f"📈 Wrote {len(PLOTS)} plot data files and renderer scripts to {out_dir}.")
    return written
