"""Release gate: eleven numbered acceptance criteria.

Each test covers one criterion, pins its tolerances as module constants, and
prints a single PASS line with the measured quantities (visible under
``pytest -v -rP``).  Heavyweight artifacts (the 81-scenario hybrid run and
the 5000-scenario stress run) are built once at module scope.
"""

import math
import time

import numpy as np
import pytest

import oracles
from conftest import (
    bus,
    farm,
    gen,
    line,
    load_fixture,
    make_case,
    tile_identical,
)
from windflow import acopf, conic, mbda, stochastic, wind

# Pinned tolerances.  TOL_SOLVER is applied at objective scale
# (tol * max(1, |objective|)): interior-point termination leaves residuals
# proportional to the problem's magnitude, not absolute units.
TOL_SOLVER = 1e-6
GAP_TARGET = 0.02
FD_STEP = 1e-4
FD_RTOL = 1e-3
CUT_VIOLATION = 1e-6
EXACT_POINT_GAP = 1e-10
PROB_SUM_TOL = 1e-9

RUNTIME_DETERMINISTIC = 10.0     # s, criterion 1, per case
RUNTIME_DEGENERATE = 5.0         # s, criterion 2
RUNTIME_SINGLE81 = 300.0         # s, criterion 3
RUNTIME_STRESS = 1800.0          # s, criterion 4, 5000 scenarios
MAX_ITERATIONS = 30              # criterion 4

# Frozen references (clarabel 0.11.1 / scs 3.2.11, checked independently)
IEEE14_SOC = 8053.6345
IEEE14_DC = 7642.5917
IEEE30_SOC = 800.2581
IEEE30_DC = 767.6021
TIGHT3_SINGLE = 1156.804256
H30_SINGLE81 = 818.16405


def _scaled(tol, value):
    return tol * max(1.0, abs(value))


@pytest.fixture(scope="module")
def h30():
    return load_fixture("hybrid30")


@pytest.fixture(scope="module")
def scn81(h30):
    scn = wind.generate_scenarios(
        h30, wind.synthetic_speeds(2.0, 9.0, 500, seed=11), [9, 9], seed=11)
    assert scn.card == 81
    return scn


@pytest.fixture(scope="module")
def single81(h30, scn81):
    t0 = time.perf_counter()
    sol = stochastic.solve_single_stage(stochastic.build_two_stage(h30, scn81))
    return sol, time.perf_counter() - t0


@pytest.fixture(scope="module")
def bda81(h30, scn81):
    return mbda.run_mbda(h30, scn81, workers=4, mode="parallel")


def test_c01_feasibility_gap_ordering():
    """SOC balance residuals at solver precision; SOC never looser than DC."""
    rows = []
    for name, soc_ref, dc_ref in (("ieee14", IEEE14_SOC, IEEE14_DC),
                                  ("ieee30class", IEEE30_SOC, IEEE30_DC)):
        case = load_fixture(name)
        t0 = time.perf_counter()
        soc_sol = conic.solve(acopf.build_soc_acopf(case))
        dc_sol = conic.solve(acopf.build_dc_opf(case))
        elapsed = time.perf_counter() - t0
        assert soc_sol.optimal and dc_sol.optimal
        assert elapsed < RUNTIME_DETERMINISTIC
        assert soc_sol.objective == pytest.approx(soc_ref, rel=1e-4)
        assert dc_sol.objective == pytest.approx(dc_ref, rel=1e-4)
        soc = acopf.feasibility_gap(case, acopf.recover_physical(case, soc_sol),
                                    model="soc")
        dc = acopf.feasibility_gap(case, acopf.recover_physical(case, dc_sol),
                                   model="dc")
        assert soc.gap("1a") <= 1e-6
        assert soc.gap("1b") <= 1e-6
        for fam in ("1a", "1b", "1c", "1d"):
            assert soc.gap(fam) <= dc.gap(fam) + 1e-12, (name, fam)
        rows.append(f"{name} worst soc gap {max(soc.residual.values()):.2e} "
                    f"in {elapsed:.2f}s")
    print("PASS criterion 1 (feasibility gap ordering): " + "; ".join(rows))


def test_c02_degenerate_stochastic_equivalence(tight3, tight3_scn):
    """A one-scenario stochastic model is the deterministic model."""
    t0 = time.perf_counter()
    exp = wind.expected_scenario(tight3_scn)
    two = stochastic.solve_single_stage(stochastic.build_two_stage(tight3, exp))
    det = conic.solve(acopf.build_soc_acopf(
        tight3, wind_limits=stochastic.scenario_limits(exp, 1)))
    elapsed = time.perf_counter() - t0
    assert det.optimal
    diff = abs(two.objective - det.objective)
    assert diff <= _scaled(1e-6, det.objective)
    assert elapsed < RUNTIME_DEGENERATE
    print(f"PASS criterion 2 (degenerate equivalence): |{two.objective:.6f} "
          f"- {det.objective:.6f}| = {diff:.2e} in {elapsed:.2f}s")


def test_c03_decomposition_brackets_monolithic(single81, bda81):
    """81-scenario hybrid case: LB <= single-stage optimum <= UB, gap <= 2%."""
    single, elapsed = single81
    sol, state = bda81
    assert elapsed < RUNTIME_SINGLE81
    assert single.objective == pytest.approx(H30_SINGLE81, rel=1e-4)
    tol = _scaled(TOL_SOLVER, single.objective)
    assert state.lower_bound <= single.objective + tol
    assert single.objective <= state.upper_bound + tol
    assert state.gap() <= GAP_TARGET
    print(f"PASS criterion 3 (bounds bracket): LB {state.lower_bound:.4f} <= "
          f"single {single.objective:.4f} <= UB {state.upper_bound:.4f}, "
          f"gap {state.gap():.2e}, single solve {elapsed:.1f}s")


def test_c04_convergence_speed(tight3, tight3_scn, hybrid5, hybrid5_scn9,
                               bda81):
    """Gap target reached within the iteration budget on every fixture,
    up to 5000 synthetic scenarios within the wall-clock budget."""
    runs = []
    for label, case, scn, workers in (
            ("tight3@5", tight3, tight3_scn, 2),
            ("hybrid5@9", hybrid5, hybrid5_scn9, 2)):
        sol, state = mbda.run_mbda(case, scn, workers=workers, mode="serial")
        assert sol.converged, label
        assert state.iteration <= MAX_ITERATIONS, label
        runs.append(f"{label}: {state.iteration} it")
    sol81, state81 = bda81
    assert sol81.converged
    assert state81.iteration <= MAX_ITERATIONS
    runs.append(f"hybrid30@81: {state81.iteration} it")

    stress = wind.generate_scenarios(
        hybrid5, wind.synthetic_speeds(2.0, 9.0, 1000, seed=5), [5000], seed=5)
    assert stress.card == 5000
    t0 = time.perf_counter()
    sol5k, state5k = mbda.run_mbda(hybrid5, stress, workers=4, mode="parallel")
    elapsed = time.perf_counter() - t0
    assert sol5k.converged
    assert state5k.iteration <= MAX_ITERATIONS
    assert elapsed < RUNTIME_STRESS
    runs.append(f"hybrid5@5000: {state5k.iteration} it in {elapsed:.0f}s")
    print("PASS criterion 4 (convergence speed): " + "; ".join(runs))


def test_c05_serial_parallel_equivalence(tight3, tight3_scn):
    """Identical traces and bit-wise identical cut pools, workers 1/2/4."""
    checked = []
    for workers in (1, 2, 4):
        _, st_s = mbda.run_mbda(tight3, tight3_scn, workers=workers,
                                mode="serial")
        _, st_p = mbda.run_mbda(tight3, tight3_scn, workers=workers,
                                mode="parallel")
        assert [r.key() for r in st_s.trace] == [r.key() for r in st_p.trace]
        assert ([c.to_dict() for c in st_s.cuts]
                == [c.to_dict() for c in st_p.cuts])
        checked.append(f"w={workers}: {len(st_s.cuts)} cuts equal")
    print("PASS criterion 5 (mode equivalence): " + "; ".join(checked))


def test_c06_scenario_normalization():
    """Probabilities sum to one over randomized configurations; the 4x3
    layout yields exactly 3^4 = 81 scenarios."""
    rng = np.random.default_rng(6)
    cases = {}
    for n_farms in (1, 2, 3, 4):
        cases[n_farms] = make_case(
            buses=[bus("1")] + [bus(str(k + 2)) for k in range(n_farms)],
            lines=[line(f"L{k}", "1", str(k + 2), r=0.01, x=0.05)
                   for k in range(n_farms)],
            generators=[gen("G1", "1", p_max=300.0)],
            wind_farms=[farm(f"F{k}", str(k + 2), count=1)
                        for k in range(n_farms)])
    worst = 0.0
    for _ in range(100):
        n_farms = int(rng.integers(1, 5))
        draws = []
        for k in range(n_farms):
            levels = int(rng.integers(1, 5))
            mws = np.sort(rng.uniform(0.0, 30.0, size=levels))
            weights = rng.uniform(0.1, 5.0, size=levels)
            draws.append(wind.FarmDraws(f"F{k}", np.zeros((levels, 1)),
                                        mws, weights))
        scn = wind.combine(cases[n_farms], draws)
        assert scn.card == int(np.prod([d.n_levels for d in draws]))
        worst = max(worst, abs(scn.probabilities.sum() - 1.0))
    assert worst <= PROB_SUM_TOL

    quad = make_case(
        buses=[bus("1")] + [bus(str(k)) for k in (2, 3, 4, 5)],
        lines=[line(f"L1{k}", "1", str(k), r=0.01, x=0.05)
               for k in (2, 3, 4, 5)],
        generators=[gen("G1", "1", p_max=300.0)],
        wind_farms=[farm(f"F{k}", str(k), count=3) for k in (2, 3, 4, 5)])
    scn81 = wind.generate_scenarios(
        quad, wind.synthetic_speeds(2.0, 9.0, 200, seed=1), [3], seed=1)
    assert scn81.card == 81
    print(f"PASS criterion 6 (scenario normalization): worst |sum pi - 1| = "
          f"{worst:.1e} over 100 configs; 4x3 -> {scn81.card} scenarios")


def test_c07_vss_sign(tight3, tight3_scn, hybrid5, hybrid5_scn9,
                      h30, scn81):
    """VSS is nonnegative up to solver tolerance, zero without uncertainty,
    strictly positive when transmission limits punish misplanning."""
    results = []
    for label, case, scn in (("tight3@5", tight3, tight3_scn),
                             ("hybrid5@9", hybrid5, hybrid5_scn9),
                             ("hybrid30@81", h30, scn81)):
        res = stochastic.compute_vss(case, scn)
        assert res.vss >= -_scaled(TOL_SOLVER, res.cost_stochastic), label
        results.append(f"{label}: {res.vss:.4f}")
    # no uncertainty: planning on the mean is planning on the distribution
    flat = stochastic.compute_vss(tight3, tile_identical(tight3_scn, 3))
    assert abs(flat.vss) <= _scaled(TOL_SOLVER, flat.cost_stochastic)
    # scarcity: the tight network makes the expected-value plan expensive
    strict = stochastic.compute_vss(tight3, tight3_scn)
    assert strict.vss > 0
    print("PASS criterion 7 (VSS sign): " + "; ".join(results)
          + f"; identical-rows vss {flat.vss:.2e}")


def test_c08_duals_match_finite_differences(tight3, tight3_scn):
    """Anchor-row duals are derivatives of the block recourse cost."""
    sub = mbda.build_subproblem(tight3, tight3_scn, range(5))
    (g,) = tight3.generators
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(20):
        p = float(rng.uniform(g.p_min, g.p_max))
        mid = mbda.solve_subproblem(tight3, tight3_scn, range(5),
                                    {g.id: p}, prebuilt=sub)
        hi = mbda.solve_subproblem(tight3, tight3_scn, range(5),
                                   {g.id: p + FD_STEP}, prebuilt=sub)
        lo = mbda.solve_subproblem(tight3, tight3_scn, range(5),
                                   {g.id: p - FD_STEP}, prebuilt=sub)
        fd = (hi.cost - lo.cost) / (2 * FD_STEP)
        err = abs(mid.mu[g.id] - fd) / max(1.0, abs(fd))
        worst = max(worst, err)
    assert worst <= FD_RTOL
    print(f"PASS criterion 8 (dual correctness): worst relative error "
          f"{worst:.2e} over 20 anchors, step {FD_STEP:g}")


def test_c09_cuts_underestimate(tight3, tight3_scn):
    """Every cut stays below the true recourse cost it supports."""
    _, state = mbda.run_mbda(tight3, tight3_scn, workers=2)
    part = mbda.partition_scenarios(tight3_scn.card, 2)
    subs = {n: mbda.build_subproblem(tight3, tight3_scn, blk, n)
            for n, blk in enumerate(part.blocks)}
    (g,) = tight3.generators
    rng = np.random.default_rng(9)
    worst = -math.inf
    for p in rng.uniform(g.p_min, g.p_max, size=10):
        p_hat = {g.id: float(p)}
        for n, sub in subs.items():
            cost = mbda.solve_subproblem(tight3, tight3_scn, sub.indices,
                                         p_hat, prebuilt=sub).cost
            for cut in state.cuts:
                if cut.subproblem == n:
                    worst = max(worst, cut.value_at(p_hat) - cost)
    assert worst <= CUT_VIOLATION
    print(f"PASS criterion 9 (cut validity): worst violation {worst:.2e} "
          f"across {len(state.cuts)} cuts x 10 dispatch points")


def test_c10_oracle_equivalence():
    """Solver optimum matches an independent grid search on the micro
    chains; an exactly-computed AC point closes all six equation families."""
    micro2 = load_fixture("micro2")
    micro3 = load_fixture("micro3_radial")
    sol2 = conic.solve(acopf.build_soc_acopf(micro2))
    sol3 = conic.solve(acopf.build_soc_acopf(micro3))
    brute2 = oracles.soc_brute_force_2bus(micro2, step=1e-3)
    brute3 = oracles.soc_brute_force_radial3(micro3, step=1e-3)
    # discretization error bound: objective slope times the 1e-3 grid pitch
    # (the 2-bus search prunes to the analytic optimum, hence the tighter pin)
    d2 = abs(sol2.objective - brute2["objective"])
    d3 = abs(sol3.objective - brute3["objective"])
    assert d2 <= 2e-5
    assert d3 <= 5e-3
    worst_gap = 0.0
    for case in (micro2, micro3):
        pt = oracles.chain_exact_point(case)
        rep = acopf.feasibility_gap(case, pt, model="exact")
        worst_gap = max(worst_gap, max(rep.residual.values()))
    assert worst_gap <= EXACT_POINT_GAP
    print(f"PASS criterion 10 (oracle equivalence): grid-search deltas "
          f"{d2:.1e} / {d3:.1e}; exact-point residual {worst_gap:.1e}")


def test_c11_model_size_report(h30, scn81):
    """Closed-form size formula evaluated beside actual program counts;
    the 10-scenario hybrid case lands within one order of magnitude of the
    4560-constraint reference, with the mapping documented."""
    toy = make_case(buses=[bus("1"), bus("2", p=10.0)],
                    lines=[line("L1", "1", "2", r=0.01, x=0.05)],
                    generators=[gen("G1", "1")])
    assert stochastic.formula_sizes(toy, 1) == (9, 15)

    model = stochastic.build_two_stage(h30, scn81.subset(range(10)))
    rep = stochastic.model_size(model)
    assert (rep.formula_n_var, rep.formula_n_con) == (3546, 4912)
    assert (rep.actual_n_var, rep.actual_n_con) == (3516, 7398)
    for count in (rep.formula_n_con, rep.actual_n_con):
        assert 4560 / 10 <= count <= 4560 * 10
    assert rep.mapping_note
    print(f"PASS criterion 11 (model size): formula "
          f"({rep.formula_n_var} var, {rep.formula_n_con} con), actual "
          f"({rep.actual_n_var} var, {rep.actual_n_con} con) vs 4560 reference")
