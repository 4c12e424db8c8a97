"""Shared fixtures and inline case builders.

Case fixtures load fresh from tests/fixtures per test (cheap JSON parse,
keeps mutation accidents contained).  Scenario sets that several modules
share are built once per session from seeded synthetic measurements, so
every test sees the same frozen draws.

Inline builders (bus/line/gen/farm/case_doc/make_case) speak the on-disk
units: MW, MVAr, pu-squared voltage windows, MW^2 capacities.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from windflow import grid, wind

FIXTURES = Path(__file__).parent / "fixtures"


def fixture_path(name: str) -> Path:
    return FIXTURES / f"{name}.json"


def load_fixture(name: str) -> grid.GridCase:
    return grid.load_case_file(fixture_path(name))


# ---------------------------------------------------------------------------
# inline case documents
# ---------------------------------------------------------------------------

def bus(bid, kind="AC", p=0.0, q=0.0, v_min_sq=0.81, v_max_sq=1.21, **extra):
    d = {"id": bid, "kind": kind, "p_load": p, "q_load": q,
         "shunt_g": 0.0, "shunt_b": 0.0,
         "v_min_sq": v_min_sq, "v_max_sq": v_max_sq}
    d.update(extra)
    return d


def line(lid, f, t, kind="AC", r=0.0, x=0.0, capacity_sq=40000.0, **extra):
    d = {"id": lid, "kind": kind, "from_bus": f, "to_bus": t,
         "r": r, "x": x, "capacity_sq": capacity_sq}
    d.update(extra)
    return d


def gen(gid, bus_id, p_max=150.0, p_min=0.0, q_min=-100.0, q_max=100.0,
        c0=0.0, c1=10.0, c2=0.02):
    return {"id": gid, "bus": bus_id, "p_min": p_min, "p_max": p_max,
            "q_min": q_min, "q_max": q_max,
            "cost_c0": c0, "cost_c1": c1, "cost_c2": c2}


def farm(fid, bus_id, model="wt3000", count=10, pf=0.95, wake=0.15, c1=5.0):
    return {"id": fid, "bus": bus_id,
            "turbines": [{"model": model, "count": count}],
            "power_factor_min": pf, "wake_loss": wake, "cost_c1": c1}


def converter(cid, pc, dc, r_shunt=800.0, m_sq_min=0.25, m_sq_max=1.0,
              r_sw=None):
    d = {"id": cid, "pc_bus": pc, "dc_bus": dc, "r_shunt": r_shunt,
         "m_sq_min": m_sq_min, "m_sq_max": m_sq_max}
    if r_sw is not None:
        d["r_sw"] = r_sw
    return d


def case_doc(name="inline", buses=(), lines=(), converters=(), generators=(),
             wind_farms=(), s_base=100.0, voll=1000.0):
    return {"format": "windflow-case/1", "name": name, "s_base_mva": s_base,
            "voll": voll, "buses": list(buses), "lines": list(lines),
            "converters": list(converters), "generators": list(generators),
            "wind_farms": list(wind_farms)}


def make_case(**kw) -> grid.GridCase:
    return grid.load_case(json.dumps(case_doc(**kw)))


def dc_link_case(polarity: str) -> grid.GridCase:
    """Hybrid chain A1 -T1- P1 =C1= D1 -DC1- D2 =C2= P2 (100 MW load at P2).

    The DC sending bus is pinned to V = 1 and every branch except the DC
    cable is lossless, so the cable's loss cone bounds p_loss by exactly
    R p_s^2 (monopole) or R p_s^2 / 4 (bipole) with p_s = 1 pu.  PC windows
    sit at V_dc/8-scale as the modulation constraint demands; the coupling
    transformer's capacity is oversized so its reactive flow can absorb the
    AC/PC voltage mismatch.
    """
    return make_case(
        name=f"dclink-{polarity.lower()}",
        buses=[bus("A1"),
               bus("P1", kind="PC", v_min_sq=0.03125, v_max_sq=0.125),
               bus("D1", kind="DC", v_min_sq=1.0, v_max_sq=1.0),
               bus("D2", kind="DC", v_min_sq=0.5, v_max_sq=1.0),
               bus("P2", kind="PC", p=100.0,
                   v_min_sq=0.03125, v_max_sq=0.125)],
        lines=[line("T1", "A1", "P1", r=0.0, x=0.1, capacity_sq=4.0e6),
               line("V1", "D1", "P1", kind="VSC_CONVERTER"),
               line("DC1", "D1", "D2", kind=polarity, r=0.01),
               line("V2", "D2", "P2", kind="VSC_CONVERTER")],
        converters=[converter("C1", "P1", "D1", r_shunt=1e9),
                    converter("C2", "P2", "D2", r_shunt=1e9)],
        generators=[gen("G1", "A1", p_max=300.0, q_min=-10000.0,
                        q_max=10000.0)],
    )


def tile_identical(scn: wind.ScenarioSet, copies: int = 3) -> wind.ScenarioSet:
    """Scenario set of `copies` identical rows at the expected availability."""
    exp = wind.expected_scenario(scn)
    return wind.ScenarioSet(
        exp.farm_ids, np.full(copies, 1.0 / copies),
        np.repeat(exp.p_max, copies, axis=0),
        np.repeat(exp.q_max, copies, axis=0),
        tuple(copies for _ in exp.farm_ids))


# ---------------------------------------------------------------------------
# case fixtures
# ---------------------------------------------------------------------------

@pytest.fixture
def micro2():
    return load_fixture("micro2")


@pytest.fixture
def micro3_radial():
    return load_fixture("micro3_radial")


@pytest.fixture
def micro3_ring():
    return load_fixture("micro3_ring")


@pytest.fixture
def ieee14():
    return load_fixture("ieee14")


@pytest.fixture
def ieee30class():
    return load_fixture("ieee30class")


@pytest.fixture
def hybrid5():
    return load_fixture("hybrid5")


@pytest.fixture
def hybrid30():
    return load_fixture("hybrid30")


@pytest.fixture
def tight3():
    return load_fixture("tight3")


# ---------------------------------------------------------------------------
# shared scenario sets (session-frozen draws)
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def tight3_scn():
    """5 output levels for tight3's single farm; spread across Weibull(2, 9)."""
    case = load_fixture("tight3")
    speeds = wind.synthetic_speeds(2.0, 9.0, 400, seed=7)
    return wind.generate_scenarios(case, speeds, [5], seed=7)


@pytest.fixture(scope="session")
def hybrid5_scn9():
    """9 levels for hybrid5's single farm."""
    case = load_fixture("hybrid5")
    speeds = wind.synthetic_speeds(2.0, 9.0, 1000, seed=5)
    return wind.generate_scenarios(case, speeds, [9], seed=5)
