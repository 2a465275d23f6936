import math
from typing import Annotated, List, Literal, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator

Strategy = Literal["restart", "similarity", "commitment"]
PerturbationKind = Literal["fall", "breakdown"]

WAREHOUSE_COMMITMENT_PREDICATES = ["holding", "on", "towing", "delivered"]


class InstanceSpec(BaseModel):
    num_packages: int = Field(default=1, ge=1, le=12)
    seed: int = 0
    # Explicit overrides of the scaling functions (tiny test instances)
    forklifts: Optional[int] = Field(default=None, ge=1)
    transports: Optional[int] = Field(default=None, ge=1)
    shelves: Optional[int] = Field(default=None, ge=1)
    gridsquares: Optional[int] = Field(default=None, ge=2)
    extra_edge_ratio: float = Field(default=0.3, ge=0.0, description="Extra edges per gridsquare beyond the spanning tree")
    # held constant per instance
    tow_trucks: Literal[1] = 1
    garages: Literal[1] = 1
    packagers: Literal[1] = 1

    @property
    def n_forklifts(self) -> int:
        return self.forklifts or math.ceil(self.num_packages / 2) + 1

    @property
    def n_transports(self) -> int:
        return self.transports or math.ceil(self.num_packages / 2)

    @property
    def n_shelves(self) -> int:
        return self.shelves or self.num_packages

    @property
    def n_gridsquares(self) -> int:
        return self.gridsquares or 2 * self.num_packages + 4


class PackageFalls(BaseModel):
    kind: Literal["fall"] = "fall"
    package: str
    gridsquare: str
    prefix_len: int = Field(ge=1)


class CarrierBreaks(BaseModel):
    kind: Literal["breakdown"] = "breakdown"
    carrier: str
    prefix_len: int = Field(ge=1)


Perturbation = Annotated[Union[PackageFalls, CarrierBreaks], Field(discriminator="kind")]


class PlannerConfig(BaseModel):
    time_budget: float = Field(default=60.0, gt=0, description="Seconds")
    node_budget: int = Field(default=5_000_000, gt=0)
    w_len: float = Field(default=0.01, ge=0)
    heuristic: Literal["relaxed-plan", "goal-count"] = "relaxed-plan"
    anytime: bool = True
    seed: int = 0
    h_weight: float = Field(default=5.0, ge=1.0)
    pursue_soft_goals: bool = True
    stop_at_penalty_bound: bool = True

    @classmethod
    def exhaustive(cls, **overrides) -> "PlannerConfig":
        """Budgets large enough to exhaust small instances; proves optimality."""
        base = dict(time_budget=600.0, node_budget=10_000_000, anytime=True, stop_at_penalty_bound=False)
        base.update(overrides)
        return cls(**base)


class CompileOptions(BaseModel):
    scope: Literal["suffix", "full"] = "suffix"
    replace_originals: bool = False
    commitment_preds: List[str] = Field(default_factory=lambda: list(WAREHOUSE_COMMITMENT_PREDICATES))
    default_penalty: float = Field(default=1.0, ge=0)


class ScenarioRecord(BaseModel):
    """Replayable scenario file: the generated problem is rebuilt from `spec`."""
    instance: str
    spec: InstanceSpec
    original_plan: List[str]
    perturbation: Perturbation
    perturbed_state: List[str]

    @property
    def seed(self) -> int:
        return self.spec.seed

    @property
    def prefix_len(self) -> int:
        return self.perturbation.prefix_len


CSV_COLUMNS = ["instance", "seed", "packages", "strategy", "time_ms", "plan_len",
               "set_diff", "sym_diff", "violations", "status"]


class MetricsRecord(BaseModel):
    instance: str
    seed: int
    packages: int
    strategy: Strategy
    status: Literal["ok", "timeout", "unsolvable"]
    time_ms: Optional[float] = Field(default=None, ge=0)
    plan_len: Optional[int] = Field(default=None, ge=0)
    set_diff: Optional[int] = Field(default=None, ge=0)
    sym_diff: Optional[int] = Field(default=None, ge=0)
    violations: Optional[int] = Field(default=None, ge=0)
    # Not part of the CSV; kept for planner/metric agreement checks
    objective: Optional[float] = None
    penalty: Optional[float] = None
    scope: Literal["suffix", "full"] = "suffix"

    @model_validator(mode="after")
    def _metrics_only_when_ok(self):
        metric_fields = (self.time_ms, self.plan_len, self.set_diff, self.sym_diff, self.violations)
        if self.status != "ok" and any(v is not None for v in metric_fields):
            raise ValueError(f"{self.status} rows carry no metric values")
        if self.status == "ok" and any(v is None for v in metric_fields):
            raise ValueError("ok rows need every measurement")
        return self

    def csv_row(self) -> dict:
        row = {}
        for col in CSV_COLUMNS:
            value = getattr(self, col)
            if value is None:
                row[col] = ""
            elif isinstance(value, float):
                row[col] = f"{value:.3f}"
            else:
                row[col] = value
        return row


class BenchConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    packages: Tuple[int, int] = (1, 12)
    seeds_per_size: int = Field(default=4, ge=1)
    base_seed: int = 0
    strategies: List[Strategy] = Field(default_factory=lambda: ["restart", "similarity", "commitment"])
    kinds: List[PerturbationKind] = Field(default_factory=lambda: ["fall", "breakdown"])
    planner: PlannerConfig = Field(default_factory=PlannerConfig)
    scenario_planner: PlannerConfig = Field(
        default_factory=lambda: PlannerConfig(anytime=False, time_budget=120.0),
        description="Planner used for the original plan of each scenario")
    optimize_preferences: bool = Field(
        default=True,
        description="Similarity and commitment keep improving their metric until the budget ends or optimality "
                    "is proved; restart takes its first plan. False runs every strategy with `planner` as given")
    compile: CompileOptions = Field(default_factory=CompileOptions)
    solver: str = Field(default="embedded", description="'embedded' or 'external:<command template>'")
    workers: int = Field(default=1, ge=1)
    out_dir: str = "bench-out"

    @model_validator(mode="after")
    def _check_range(self):
        lo, hi = self.packages
        if lo < 1 or hi > 12 or lo > hi:
            raise ValueError(f"package range {self.packages} must be non-empty within 1..12")
        if not self.strategies:
            raise ValueError("at least one strategy is required")
        if not self.kinds:
            raise ValueError("at least one perturbation kind is required")
        return self

    @classmethod
    def from_file(cls, path: str) -> "BenchConfig":
        with open(path) as f:
            data = yaml.safe_load(f) or {}
        return cls(**data)
