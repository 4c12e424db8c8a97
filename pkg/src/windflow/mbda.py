"""Benders decomposition with scenario-partitioned subproblems.

The master chooses stage-1 thermal dispatch against a growing pool of cuts;
each subproblem prices one contiguous block of scenarios at the broadcast
dispatch (anchor rows p_i = p_hat with duals mu_i) and returns one new cut

    Cost_w^n  >=  Cost_w^n(p_hat)  +  sum_i mu_i (p_i - p_hat_i).

Load shedding (plus a surplus sink at generator buses) keeps every
subproblem feasible at any anchor, so there are no feasibility cuts.  The
per-subproblem recourse variables in the master are floored at zero, which
bounds iteration 1 when the pool is empty.

Bounds: LB is the latest master objective (non-decreasing as cuts
accumulate), UB the best incumbent  sum C(p_hat) + sum_n Cost_w^n.  The loop
stops when (UB - LB) / max(|UB|, 1e-6) falls under the gap target.

Parallel mode farms block solves out to a thread pool bounded by the worker
count; results are merged in ascending block order, so serial and parallel
runs produce identical cut pools and traces.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import acopf
from .conic import (STATUS_OPTIMAL, ConicProgram, Solution, SolverOptions,
                    SolverError, solve)
from .grid import GridCase
from .stochastic import (METHOD_PARALLEL, METHOD_SERIAL, StochasticSolution,
                         scenario_limits, scenario_tag, summarize_scenarios)
from .wind import ScenarioSet

GAP_EPS = 1e-6   # relative-gap denominator floor


@dataclass
class MbdaOptions:
    gap: float = 0.02
    max_iter: int = 50
    solver: SolverOptions = field(default_factory=SolverOptions)


# ---------------------------------------------------------------------------
# partition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Partition:
    """Contiguous scenario blocks, sizes differing by at most one."""

    blocks: tuple[tuple[int, ...], ...]   # 0-based scenario indices
    workers_requested: int
    note: str = ""

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)


def partition_scenarios(n_scenarios: int, workers: int) -> Partition:
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if n_scenarios < 1:
        raise ValueError("cannot partition an empty scenario set")
    note = ""
    n_blocks = workers
    if workers > n_scenarios:
        n_blocks = n_scenarios
        note = (f"worker count {workers} clamped to {n_scenarios} "
                "(one scenario per block minimum)")
    size, extra = divmod(n_scenarios, n_blocks)
    blocks = []
    start = 0
    for n in range(n_blocks):
        width = size + (1 if n < extra else 0)
        blocks.append(tuple(range(start, start + width)))
        start += width
    return Partition(tuple(blocks), workers, note)


# ---------------------------------------------------------------------------
# cuts and state
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BendersCut:
    subproblem: int
    iteration: int
    intercept: float                 # block recourse cost at the anchor
    mu: dict[str, float]             # $ per pu of each generator's dispatch
    anchor: dict[str, float]

    def value_at(self, p: dict[str, float]) -> float:
        return self.intercept + sum(m * (p[g] - self.anchor[g])
                                    for g, m in self.mu.items())

    def to_dict(self) -> dict:
        return {"subproblem": self.subproblem, "iteration": self.iteration,
                "intercept": self.intercept, "mu": dict(self.mu),
                "anchor": dict(self.anchor)}


@dataclass
class TraceRow:
    iteration: int
    lower_bound: float
    upper_bound: float
    gap: float
    wall_ms: float

    def key(self) -> tuple:
        """Determinism-relevant part (wall time excluded)."""
        return (self.iteration, self.lower_bound, self.upper_bound, self.gap)


@dataclass
class BendersState:
    n_blocks: int
    iteration: int = 0
    cuts: list[BendersCut] = field(default_factory=list)
    incumbent: dict[str, float] | None = None
    upper_bound: float = math.inf
    lower_bound: float = -math.inf
    trace: list[TraceRow] = field(default_factory=list)

    def gap(self) -> float:
        if not math.isfinite(self.upper_bound):
            return math.inf
        return ((self.upper_bound - self.lower_bound)
                / max(abs(self.upper_bound), GAP_EPS))


# ---------------------------------------------------------------------------
# master
# ---------------------------------------------------------------------------

def solve_master(state: BendersState, case: GridCase,
                 opts: SolverOptions | None = None) -> tuple[dict[str, float], float]:
    """Dispatch against the cut pool; returns (p_hat, lower bound)."""
    prog = ConicProgram(f"master:{case.name}:k{state.iteration}")
    p_var = acopf.add_stage1_vars(prog, case, with_cost=True)
    costw = {n: prog.add_var(f"costw:{n}", lb=0.0)
             for n in range(state.n_blocks)}
    for n in range(state.n_blocks):
        prog.add_cost(costw[n], lin=1.0)
    for cut in state.cuts:
        coeffs = {costw[cut.subproblem]: -1.0}
        rhs = -cut.intercept
        for g, m in cut.mu.items():
            coeffs[p_var[g]] = coeffs.get(p_var[g], 0.0) + m
            rhs += m * cut.anchor[g]
        prog.add_ineq(f"cut:{cut.subproblem}:{cut.iteration}", coeffs, rhs)
    sol = solve(prog, opts)
    if not sol.optimal:
        raise SolverError(f"master solve ended {sol.status} at iteration "
                          f"{state.iteration}")
    p_hat = {g: sol.values[v] for g, v in p_var.items()}
    return p_hat, sol.objective


# ---------------------------------------------------------------------------
# subproblems
# ---------------------------------------------------------------------------

@dataclass
class SubproblemProgram:
    """A block's program, built once; anchors re-pointed between iterations."""
    block: int
    indices: tuple[int, ...]
    program: ConicProgram
    p_var: dict[str, str]


@dataclass
class SubproblemResult:
    block: int
    cost: float
    mu: dict[str, float]
    shed_mw: float
    values: dict[str, float]


def build_subproblem(case: GridCase, scenarios: ScenarioSet,
                     indices, block: int = 0) -> SubproblemProgram:
    """Recourse program for one scenario block: stage-1 variables carry no
    cost and are pinned to the broadcast dispatch by anchor rows."""
    idx = tuple(int(i) for i in indices)
    prog = ConicProgram(f"sub:{case.name}:b{block}")
    p_var = acopf.add_stage1_vars(prog, case, with_cost=False)
    for gid, var in p_var.items():
        prog.add_eq(acopf.anchor_row(gid), {var: 1.0}, 0.0)
    for i in idx:
        j = i + 1
        acopf.add_scenario_block(
            prog, case, scenario_tag(j), p_var,
            wind_limit=scenario_limits(scenarios, j),
            weight=float(scenarios.probabilities[i]),
            shed=True, dump=True)
    return SubproblemProgram(block, idx, prog, p_var)


def solve_subproblem(case: GridCase, scenarios: ScenarioSet, indices,
                     p_hat: dict[str, float],
                     opts: SolverOptions | None = None,
                     prebuilt: SubproblemProgram | None = None) -> SubproblemResult:
    """Price one block at the anchored dispatch; mu are the anchor-row duals."""
    sub = prebuilt or build_subproblem(case, scenarios, indices)
    for gid in sub.p_var:
        sub.program.set_rhs(acopf.anchor_row(gid), p_hat[gid])
    sol = solve(sub.program, opts)
    if not sol.optimal:
        raise SolverError(f"subproblem {sub.block} ended {sol.status}")
    mu = {gid: sol.eq_duals[acopf.anchor_row(gid)] for gid in sub.p_var}
    s = case.s_base_mva
    shed = sum(v * case.bus(name.split(":")[2]).p_load
               for name, v in sol.values.items()
               if name.startswith("shed:")) * s
    return SubproblemResult(sub.block, sol.objective, mu, shed, sol.values)


# ---------------------------------------------------------------------------
# engine
# ---------------------------------------------------------------------------

def stage1_cost(case: GridCase, p: dict[str, float]) -> float:
    return sum(g.cost(p[g.id]) for g in case.generators)


def run_mbda(case: GridCase, scenarios: ScenarioSet, workers: int = 1,
             mode: str = "serial",
             opts: MbdaOptions | None = None) -> tuple[StochasticSolution, BendersState]:
    """Full decomposition loop.

    mode "serial" solves blocks in a plain loop, "parallel" through a thread
    pool capped at the worker count; both merge results in ascending block
    order, so traces and cut pools are identical between modes.
    """
    if mode not in ("serial", "parallel"):
        raise ValueError(f"unknown mode {mode!r}")
    opts = opts or MbdaOptions()
    part = partition_scenarios(scenarios.card, workers)
    state = BendersState(n_blocks=part.n_blocks)
    subs = [build_subproblem(case, scenarios, blk, n)
            for n, blk in enumerate(part.blocks)]
    incumbent_values: list[dict[str, float]] | None = None
    converged = False

    # n_blocks equals the clamped worker count, which bounds in-flight solves
    pool = (ThreadPoolExecutor(max_workers=part.n_blocks)
            if mode == "parallel" else None)
    try:
        while state.iteration < opts.max_iter:
            t0 = time.perf_counter()
            state.iteration += 1
            p_hat, lb = solve_master(state, case, opts.solver)
            state.lower_bound = lb

            def run_block(sub: SubproblemProgram) -> SubproblemResult:
                return solve_subproblem(case, scenarios, sub.indices, p_hat,
                                        opts.solver, prebuilt=sub)

            if pool is not None:
                results = list(pool.map(run_block, subs))
            else:
                results = [run_block(sub) for sub in subs]
            results.sort(key=lambda r: r.block)   # deterministic reduction

            total = stage1_cost(case, p_hat) + sum(r.cost for r in results)
            if total < state.upper_bound:
                state.upper_bound = total
                state.incumbent = dict(p_hat)
                incumbent_values = [r.values for r in results]
            for r in results:
                state.cuts.append(BendersCut(r.block, state.iteration,
                                             r.cost, dict(r.mu), dict(p_hat)))
            wall_ms = (time.perf_counter() - t0) * 1e3
            state.trace.append(TraceRow(state.iteration, state.lower_bound,
                                        state.upper_bound, state.gap(),
                                        wall_ms))
            if state.gap() <= opts.gap:
                converged = True
                break
    finally:
        if pool is not None:
            pool.shutdown()

    merged: dict[str, float] = {}
    if incumbent_values:
        for vals in incumbent_values:
            merged.update(vals)
    as_solution = Solution(STATUS_OPTIMAL, state.upper_bound, merged, {},
                           "merged")
    points = {j: acopf.recover_physical(case, as_solution, scenario_tag(j))
              for j in range(1, scenarios.card + 1)}
    method = METHOD_PARALLEL if mode == "parallel" else METHOD_SERIAL
    solution = StochasticSolution(
        method, state.upper_bound, dict(state.incumbent or {}), points,
        summarize_scenarios(case, scenarios, points),
        upper_bound=state.upper_bound, lower_bound=state.lower_bound,
        converged=converged)
    return solution, state
