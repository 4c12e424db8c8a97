"""Two-stage stochastic SOC-ACOPF: build, solve monolithically, size, VSS.

Stage 1 fixes thermal active dispatch p_i before wind reveals itself; stage 2
re-dispatches everything else (reactive power, wind output, flows, voltages,
shedding) per scenario.  The program is one conic model: shared ``pg:<gen>``
variables plus one full network block per scenario tagged by its 1-based
scenario index, weighted by the scenario probability in the objective.

The value of the stochastic solution (VSS) compares planning on the
expected-availability scenario against planning on the full set: solve the
one-scenario model, freeze its stage-1 dispatch inside the full model (load
shedding keeps that evaluation feasible), and subtract the true stochastic
optimum.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import acopf
from .acopf import OperatingPoint, WindLimit
from .conic import ConicProgram, SolverOptions, SolverError, solve
from .grid import GridCase
from .wind import ScenarioSet, expected_scenario

METHOD_SINGLE = "SingleStage"
METHOD_SERIAL = "SerialBDA"
METHOD_PARALLEL = "ParallelBDA"


def scenario_tag(j: int) -> str:
    """Block tag for 1-based scenario index j."""
    return str(j)


def scenario_limits(scn: ScenarioSet, j: int) -> dict[str, WindLimit]:
    """Per-farm availability of 1-based scenario j as builder input."""
    row = j - 1
    return {fid: WindLimit(p_max=float(scn.p_max[row, e]),
                           q_min=float(-scn.q_max[row, e]),
                           q_max=float(scn.q_max[row, e]))
            for e, fid in enumerate(scn.farm_ids)}


@dataclass
class TwoStageModel:
    case: GridCase
    scenarios: ScenarioSet
    program: ConicProgram
    stage1_vars: dict[str, str]
    tags: tuple[str, ...]


def build_two_stage(case: GridCase, scenarios: ScenarioSet) -> TwoStageModel:
    """Assemble the monolithic two-stage program (shedding always present)."""
    case_farms = {f.id for f in case.wind_farms}
    scen_farms = set(scenarios.farm_ids)
    if case_farms != scen_farms:
        raise ValueError(
            f"scenario farms {sorted(scen_farms)} do not match case farms "
            f"{sorted(case_farms)}")

    prog = ConicProgram(f"two-stage:{case.name}")
    p_var = acopf.add_stage1_vars(prog, case, with_cost=True)
    tags = []
    for j in range(1, scenarios.card + 1):
        tag = scenario_tag(j)
        tags.append(tag)
        acopf.add_scenario_block(
            prog, case, tag, p_var,
            wind_limit=scenario_limits(scenarios, j),
            weight=float(scenarios.probabilities[j - 1]),
            shed=True, dump=True)
    return TwoStageModel(case, scenarios, prog, p_var, tuple(tags))


# ---------------------------------------------------------------------------
# model size
# ---------------------------------------------------------------------------

@dataclass
class ModelSizeReport:
    formula_n_var: int
    formula_n_con: int
    actual_n_var: int
    actual_n_con: int
    mapping_note: str

    def to_dict(self) -> dict:
        return dict(self.__dict__)


_MAPPING_NOTE = (
    "Formula counts per scenario: 5 variables per line, 1 reactive dispatch "
    "per generator, 2 per wind farm, 1 voltage per bus, plus one shared "
    "active dispatch per generator; constraints 2 per AC bus, 5 per AC line, "
    "1 per DC bus, 5 per DC line, converter shunt/switching/modulation and "
    "SVC window rows, 2 wind bound rows per farm, 2 voltage bounds per bus, "
    "2 shared dispatch bounds per generator. Actual counts differ in "
    "bookkeeping: DC-side lines carry 2 variables (no reactive pair), each "
    "loaded bus adds a shedding fraction and generator buses a surplus "
    "variable, affine converter losses fold into balance rows instead of "
    "standing alone, variable bounds are box bounds rather than rows, and "
    "each capacity/loss cone counts as one constraint."
)


def formula_sizes(case: GridCase, n_scenarios: int) -> tuple[int, int]:
    """Published closed-form variable/constraint counts for the model family."""
    J = n_scenarios
    L = len(case.lines)
    G = len(case.generators)
    E = len(case.wind_farms)
    I = len(case.buses)
    n_var = J * (5 * L + G + 2 * E + I) + G

    i_ac = sum(1 for b in case.buses if b.kind in ("AC", "PC"))
    i_dc = sum(1 for b in case.buses if b.kind == "DC")
    l_ac = sum(1 for l in case.lines if l.kind in ("AC", "PC_TRANSFORMER"))
    l_dc = sum(1 for l in case.lines
               if l.kind in ("DC_MONO", "DC_BI", "VSC_CONVERTER"))
    l_svc = sum(1 for l in case.lines if l.kind == "SVC")
    conv = len(case.converters)
    csh = len(case.converters)
    sw = len(case.statcoms)
    n_con = J * (2 * i_ac + 5 * l_ac + i_dc + 5 * l_dc + csh + sw
                 + 2 * conv + 2 * l_svc + 2 * E + 2 * I) + 2 * G
    return n_var, n_con


def model_size(model: TwoStageModel) -> ModelSizeReport:
    n_var, n_con = formula_sizes(model.case, model.scenarios.card)
    prog = model.program
    actual_con = prog.num_eq + prog.num_ineq + prog.num_cones
    return ModelSizeReport(n_var, n_con, prog.num_vars, actual_con,
                           _MAPPING_NOTE)


# ---------------------------------------------------------------------------
# solutions
# ---------------------------------------------------------------------------

@dataclass
class StochasticSolution:
    method: str
    objective: float
    stage1_p: dict[str, float]
    scenario_points: dict[int, OperatingPoint] = field(default_factory=dict)
    scenario_summary: list[dict] = field(default_factory=list)
    upper_bound: float | None = None
    lower_bound: float | None = None
    converged: bool = True

    def to_json(self, indent: int | None = 2) -> str:
        doc = {
            "method": self.method,
            "objective": self.objective,
            "converged": self.converged,
            "stage1_p_pu": dict(self.stage1_p),
            "bounds": (None if self.upper_bound is None else
                       {"upper": self.upper_bound, "lower": self.lower_bound}),
            "scenarios": self.scenario_summary,
        }
        return json.dumps(doc, indent=indent)


def summarize_scenarios(case: GridCase, scn: ScenarioSet,
                        points: dict[int, OperatingPoint]) -> list[dict]:
    """Per-scenario digest: probability-weighted cost share, shed, spill."""
    s = case.s_base_mva
    cost1 = {f.id: f.cost_c1 for f in case.wind_farms}
    out = []
    for j in sorted(points):
        pt = points[j]
        pi = float(scn.probabilities[j - 1])
        wind_cost = sum(cost1[fid] * p for fid, p in pt.farm_p.items())
        shed_cost = 0.0
        for bid, sp in pt.shed_p.items():
            b = case.bus(bid)
            frac = sp / b.p_load if b.p_load else 0.0
            price = abs(b.p_load) if b.p_load else abs(b.q_load)
            shed_cost += case.voll * price * frac
        dump_cost = case.voll * sum(pt.dump_p.values())
        curtail = 0.0
        for e, fid in enumerate(scn.farm_ids):
            curtail += float(scn.p_max[j - 1, e]) - pt.farm_p.get(fid, 0.0)
        out.append({
            "j": j,
            "pi": pi,
            "objective_share": pi * (wind_cost + shed_cost + dump_cost),
            "shed_mw": sum(pt.shed_p.values()) * s,
            "dump_mw": sum(pt.dump_p.values()) * s,
            "curtailment_mw": curtail * s,
        })
    return out


def solve_single_stage(model: TwoStageModel,
                       opts: SolverOptions | None = None) -> StochasticSolution:
    """Solve the monolithic program; the M-BDA benchmark objective."""
    sol = solve(model.program, opts)
    if not sol.optimal:
        size = model_size(model)
        raise SolverError(
            f"single-stage solve ended {sol.status} on a model with "
            f"{size.actual_n_var} variables / {size.actual_n_con} constraints "
            f"({model.scenarios.card} scenarios)")
    stage1 = {g: sol.values[v] for g, v in model.stage1_vars.items()}
    points = {j: acopf.recover_physical(model.case, sol, scenario_tag(j))
              for j in range(1, model.scenarios.card + 1)}
    return StochasticSolution(
        METHOD_SINGLE, sol.objective, stage1, points,
        summarize_scenarios(model.case, model.scenarios, points))


# ---------------------------------------------------------------------------
# value of the stochastic solution
# ---------------------------------------------------------------------------

@dataclass
class VssResult:
    cost_deterministic: float
    cost_stochastic: float
    vss: float
    stage1_deterministic: dict[str, float]
    stage1_stochastic: dict[str, float]

    def __iter__(self):
        return iter((self.cost_deterministic, self.cost_stochastic, self.vss))

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps({"cost_deterministic": self.cost_deterministic,
                           "cost_stochastic": self.cost_stochastic,
                           "vss": self.vss}, indent=indent)


def compute_vss(case: GridCase, scenarios: ScenarioSet,
                opts: SolverOptions | None = None) -> VssResult:
    """Cost of planning on the expected scenario minus the stochastic optimum.

    Three solves: (1) the one-scenario expected-availability model giving the
    deterministic dispatch, (2) the full model with stage 1 anchored to that
    dispatch (shedding keeps it feasible), (3) the free stochastic model.
    """
    det_model = build_two_stage(case, expected_scenario(scenarios))
    det_sol = solve_single_stage(det_model, opts)

    full = build_two_stage(case, scenarios)
    stoch_sol = solve_single_stage(full, opts)

    by_id = {g.id: g for g in case.generators}
    for gid, var in full.stage1_vars.items():
        # clip away solver-tolerance excursions so the anchor row cannot
        # contradict the variable's own box
        g = by_id[gid]
        p_fix = min(max(det_sol.stage1_p[gid], g.p_min), g.p_max)
        full.program.add_eq(acopf.anchor_row(gid), {var: 1.0}, p_fix)
    fixed = solve(full.program, opts)
    if not fixed.optimal:
        raise SolverError(f"anchored evaluation solve ended {fixed.status}")

    return VssResult(fixed.objective, stoch_sol.objective,
                     fixed.objective - stoch_sol.objective,
                     det_sol.stage1_p, stoch_sol.stage1_p)
