"""
Runs a compiled problem through an external PDDL3 preference planner.

The command template may use {domain}, {problem}, {plan_out} and {timeout};
the returned plan is re-validated and its penalty recomputed here, so an
external planner's own metric report is never trusted.
"""
import glob
import os
import shlex
import subprocess
import tempfile
import time
from fractions import Fraction
from typing import Optional

from apify import Actor

from ..exceptions import ExternalPlanInvalid, ExternalSolverError, PDDLSemanticError, PlanParseError
from .compiler import CompiledProblem, write_compiled
from .planner import INF, SATISFICING, TIMEOUT, PlanResult
from .plans import read_plan, resolve_plan, validate

SCRATCH_ENV = "REPLAN_SCRATCH_DIR"
EXTERNAL_PREFIX = "external:"


def scratch_root() -> Optional[str]:
    root = os.getenv(SCRATCH_ENV)
    if root:
        os.makedirs(root, exist_ok=True)
    return root


def _plan_file(plan_out: str) -> Optional[str]:
    """The plan file itself, or the last of the numbered `plan_out.N` files anytime planners write."""
    if os.path.exists(plan_out):
        return plan_out
    numbered = [p for p in glob.glob(f"{glob.escape(plan_out)}.*") if p.rsplit(".", 1)[-1].isdigit()]
    if not numbered:
        return None
    return max(numbered, key=lambda p: int(p.rsplit(".", 1)[-1]))


def solve_external(cp: CompiledProblem, command_template: str, timeout: float,
                   w_len: float = 0.01, scratch_dir: Optional[str] = None) -> PlanResult:
    if command_template.startswith(EXTERNAL_PREFIX):
        command_template = command_template[len(EXTERNAL_PREFIX):]
    started = time.perf_counter()

    with tempfile.TemporaryDirectory(prefix="replan-", dir=scratch_dir or scratch_root()) as work:
        domain_path, problem_path = write_compiled(cp, work)
        plan_out = os.path.join(work, "plan.txt")
        command = command_template.format(domain=domain_path, problem=problem_path,
                                          plan_out=plan_out, timeout=int(timeout))
        Actor.log.info(f"🛠️ External solver: {command}")
        try:
            proc = subprocess.run(shlex.split(command), capture_output=True, text=True, timeout=timeout, cwd=work)
        except subprocess.TimeoutExpired:
            Actor.log.warning(f"⏱️ External solver timed out after {timeout:g} s.")
            wall = (time.perf_counter() - started) * 1000.0
            return PlanResult(None, Fraction(0), 0, INF, wall, 0, TIMEOUT)
        except OSError as e:
            raise ExternalSolverError(f"cannot run '{command}': {e}") from e

        found = _plan_file(plan_out)
        if proc.returncode != 0 and found is None:
            tail = (proc.stderr or proc.stdout or "").strip().splitlines()[-5:]
            raise ExternalSolverError(f"solver exited with {proc.returncode}: {' | '.join(tail)}")
        if found is None:
            raise ExternalSolverError(f"solver wrote no plan to {plan_out}")
        with open(found) as f:
            text = f.read()

    try:
        plan = resolve_plan(cp.problem, read_plan(text))
    except (PlanParseError, PDDLSemanticError) as e:
        raise ExternalPlanInvalid(f"unreadable plan from external solver: {e}") from e
    check = validate(cp.problem, plan)
    if not check.valid:
        raise ExternalPlanInvalid(
            f"external plan fails at step {check.failed_step} or leaves hard goals unmet: "
            f"{sorted(str(g) for g in check.unmet_hard_goals)}")

    wall = (time.perf_counter() - started) * 1000.0
    return PlanResult(plan, check.penalty_sum, len(plan), w_len * len(plan) + float(check.penalty_sum),
                      wall, 0, SATISFICING)
