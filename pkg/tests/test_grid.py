"""Case schema parsing, per-unit conversion, validation, incidence."""

import json

import numpy as np
import pytest

from windflow import grid
from windflow.grid import CaseError, incidence, load_case, natural_key, validate

from conftest import bus, case_doc, converter, farm, gen, line, make_case


# ---------------------------------------------------------------------------
# parsing and per-unit conversion
# ---------------------------------------------------------------------------

def test_load_micro2_counts(micro2):
    assert micro2.name == "micro2"
    assert len(micro2.buses) == 2
    assert len(micro2.lines) == 1
    assert len(micro2.generators) == 1
    assert micro2.s_base_mva == 100.0


def test_per_unit_conversion():
    case = make_case(
        buses=[bus("1", p=120.0, q=30.0, shunt_g=2.0, shunt_b=19.0),
               bus("2", p=0.0)],
        lines=[line("L1", "1", "2", r=0.01, x=0.05, capacity_sq=40000.0)],
        generators=[gen("G1", "1", p_max=250.0, q_min=-80.0, q_max=90.0,
                        c0=3.0, c1=12.0, c2=0.015)],
        voll=1000.0)
    b1 = case.bus("1")
    # MW / MVAr become per-unit on a 100 MVA base
    assert b1.p_load == pytest.approx(1.2, abs=1e-15)
    assert b1.q_load == pytest.approx(0.3, abs=1e-15)
    assert b1.shunt_g == pytest.approx(0.02, abs=1e-15)
    assert b1.shunt_b == pytest.approx(0.19, abs=1e-15)
    # MW^2 capacity becomes pu^2
    assert case.line("L1").capacity_sq == pytest.approx(4.0, abs=1e-15)
    g1 = case.generators[0]
    assert g1.p_max == pytest.approx(2.5, abs=1e-15)
    assert g1.q_min == pytest.approx(-0.8, abs=1e-15)
    # cost coefficients rescale so cost(p_pu) == cost(p_mw)
    assert g1.cost_c0 == 3.0
    assert g1.cost_c1 == pytest.approx(1200.0, abs=1e-12)
    assert g1.cost_c2 == pytest.approx(150.0, abs=1e-12)
    assert g1.cost(2.5) == pytest.approx(3.0 + 12.0 * 250.0 + 0.015 * 250.0 ** 2,
                                         rel=1e-12)
    # $/MWh voll scales like c1
    assert case.voll == pytest.approx(100000.0, abs=1e-9)


def test_voltage_window_normalized_by_base_kv():
    case = make_case(
        buses=[bus("1", base_kv=2.0, v_min_sq=3.24, v_max_sq=4.84), bus("2")],
        lines=[line("L1", "1", "2", r=0.01, x=0.05)],
        generators=[gen("G1", "1")])
    b1 = case.bus("1")
    assert b1.v_min_sq == pytest.approx(0.81, rel=1e-12)
    assert b1.v_max_sq == pytest.approx(1.21, rel=1e-12)


def test_default_voll_is_100x_marginal_cost():
    # marginal cost at p_max: c1 + 2*c2*p = 10 + 2*0.02*150 = 16 $/MWh
    case = make_case(
        buses=[bus("1", p=50.0), bus("2")],
        lines=[line("L1", "1", "2", r=0.01, x=0.05)],
        generators=[gen("G1", "1")], voll=None)
    # internal voll is per-unit-power scaled: 100 * 16 * s_base
    assert case.voll == pytest.approx(100 * 16.0 * 100.0, rel=1e-12)


def test_bad_json_raises():
    with pytest.raises(CaseError, match="not valid JSON"):
        load_case("{nope")


def test_wrong_format_tag_raises():
    doc = case_doc(buses=[bus("1")], lines=[], generators=[])
    doc["format"] = "windflow-case/99"
    with pytest.raises(CaseError, match="unsupported case format"):
        load_case(json.dumps(doc))


def test_missing_required_field_raises():
    doc = case_doc(buses=[bus("1")], lines=[], generators=[])
    del doc["buses"][0]["v_min_sq"]
    with pytest.raises(CaseError, match="bus 1: missing"):
        load_case(json.dumps(doc))


def test_missing_capacity_raises():
    doc = case_doc(buses=[bus("1"), bus("2")],
                   lines=[line("L1", "1", "2", r=0.01, x=0.05)],
                   generators=[gen("G1", "1")])
    del doc["lines"][0]["capacity_sq"]
    with pytest.raises(CaseError, match="line L1: missing"):
        load_case(json.dumps(doc))


def test_natural_key_orders_digit_ids_numerically():
    ids = ["10", "2", "1", "B7", "B10"]
    assert sorted(ids, key=natural_key) == ["1", "2", "10", "B10", "B7"]


# ---------------------------------------------------------------------------
# round trip
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("name", ["micro2", "hybrid30"])
def test_json_round_trip(name, request):
    case = request.getfixturevalue(name)
    again = load_case(grid.case_to_json(case))
    assert again == case


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def test_ieee14_validates_clean(ieee14):
    rep = validate(ieee14)
    assert rep.ok
    assert rep.issues == []


def test_hybrid30_topology(hybrid30):
    rep = validate(hybrid30)
    assert rep.ok, rep.issues
    kinds = {k: len(hybrid30.buses_of_kind(k)) for k in ("AC", "PC", "DC")}
    assert kinds == {"AC": 30, "PC": 7, "DC": 7}
    lk = {k: len(hybrid30.lines_of_kind(k))
          for k in ("AC", "VSC_CONVERTER", "DC_MONO", "DC_BI", "SVC")}
    assert lk == {"AC": 46, "VSC_CONVERTER": 7, "DC_MONO": 3,
                  "DC_BI": 2, "SVC": 2}
    assert len(hybrid30.converters) == 7
    assert len(hybrid30.generators) == 6
    assert len(hybrid30.wind_farms) == 2
    # two stations carry switching resistance, i.e. run as STATCOMs
    assert sorted(c.id for c in hybrid30.statcoms) == ["CS18", "CS4"]


def test_generator_must_sit_on_ac_bus():
    case = make_case(
        buses=[bus("1"), bus("D1", kind="DC", v_min_sq=0.9, v_max_sq=1.1)],
        lines=[line("C1", "D1", "1", kind="DC_MONO", r=0.01)],
        generators=[gen("G1", "D1")])
    rep = validate(case)
    assert any("generator G1: must sit on an AC bus" in m for m in rep.issues)


def test_pc_bus_rejects_reactive_load():
    case = make_case(
        buses=[bus("1"), bus("P1", kind="PC", q=5.0,
                             v_min_sq=0.03125, v_max_sq=0.125),
               bus("D1", kind="DC", v_min_sq=0.9, v_max_sq=1.1)],
        lines=[line("T1", "1", "P1", r=0.0, x=0.05),
               line("C1", "D1", "P1", kind="VSC_CONVERTER", r=0.005)],
        converters=[converter("CS1", "P1", "D1")],
        generators=[gen("G1", "1")])
    rep = validate(case)
    assert any("bus P1: PC buses carry no reactive load" in m
               for m in rep.issues)


def test_converter_line_direction_checked():
    # VSC line written PC -> DC is flagged
    case = make_case(
        buses=[bus("1"), bus("P1", kind="PC", v_min_sq=0.03125, v_max_sq=0.125),
               bus("D1", kind="DC", v_min_sq=0.9, v_max_sq=1.1)],
        lines=[line("T1", "1", "P1", r=0.0, x=0.05),
               line("C1", "P1", "D1", kind="VSC_CONVERTER", r=0.005)],
        converters=[converter("CS1", "P1", "D1")],
        generators=[gen("G1", "1")])
    rep = validate(case)
    assert any("line C1: VSC_CONVERTER lines run DC -> PC" in m
               for m in rep.issues)


def test_modulation_window_bounds_checked():
    case = make_case(
        buses=[bus("1"), bus("P1", kind="PC", v_min_sq=0.03125, v_max_sq=0.15),
               bus("D1", kind="DC", v_min_sq=0.9, v_max_sq=1.1)],
        lines=[line("T1", "1", "P1", r=0.0, x=0.05),
               line("C1", "D1", "P1", kind="VSC_CONVERTER", r=0.005)],
        converters=[converter("CS1", "P1", "D1", m_sq_max=1.2)],
        generators=[gen("G1", "1")])
    rep = validate(case)
    assert any("modulation window must lie within m_sq in [0.25, 1]" in m
               for m in rep.issues)


def test_svc_needs_ordered_susceptance_window():
    case = make_case(
        buses=[bus("1", p=10.0), bus("2")],
        lines=[line("L1", "1", "2", r=0.01, x=0.05),
               line("SVC1", "2", "2t", kind="SVC", b_min=0.3, b_max=0.1)],
        generators=[gen("G1", "1")])
    rep = validate(case)
    assert any("line SVC1: SVC needs b_min <= b_max" in m for m in rep.issues)


def test_svc_terminal_must_dangle():
    case = make_case(
        buses=[bus("1", p=10.0), bus("2")],
        lines=[line("L1", "1", "2", r=0.01, x=0.05),
               line("SVC1", "2", "1", kind="SVC", b_min=-0.1, b_max=0.3)],
        generators=[gen("G1", "1")])
    rep = validate(case)
    assert any("SVC terminal '1' must be a dangling id" in m
               for m in rep.issues)


def test_disconnected_grid_flagged():
    case = make_case(
        buses=[bus("1"), bus("2"), bus("3")],
        lines=[line("L1", "1", "2", r=0.01, x=0.05)],
        generators=[gen("G1", "1")])
    rep = validate(case)
    assert any("not connected" in m for m in rep.issues)


def test_raise_if_failed_collects_issues():
    case = make_case(
        buses=[bus("1"), bus("2")],
        lines=[line("L1", "1", "2", r=-0.01, x=0.05)],
        generators=[gen("G1", "1")])
    rep = validate(case)
    with pytest.raises(CaseError, match="line L1: r must be >= 0"):
        rep.raise_if_failed()


# ---------------------------------------------------------------------------
# incidence
# ---------------------------------------------------------------------------

def test_incidence_simple_line(micro2):
    a_plus, a_minus, bi, li = incidence(micro2)
    j = li["L12"]
    col_plus = a_plus[:, j]
    col_minus = a_minus[:, j]
    assert col_plus[bi["1"]] == 1.0 and col_plus[bi["2"]] == -1.0
    assert col_minus[bi["1"]] == 1.0 and col_minus[bi["2"]] == 0.0


def test_incidence_column_sums_on_ring(micro3_ring):
    a_plus, a_minus, _, _ = incidence(micro3_ring)
    # every line lands somewhere: oriented columns cancel, loss columns don't
    assert np.allclose(a_plus.sum(axis=0), 0.0)
    assert np.allclose(a_minus.sum(axis=0), 1.0)


def test_incidence_svc_column_has_single_entry():
    case = make_case(
        buses=[bus("1", p=10.0), bus("2")],
        lines=[line("L1", "1", "2", r=0.01, x=0.05),
               line("SVC1", "2", "2t", kind="SVC", b_min=-0.1, b_max=0.3)],
        generators=[gen("G1", "1")])
    a_plus, a_minus, bi, li = incidence(case)
    j = li["SVC1"]
    # the phantom terminal is not a case bus, so only the +1 entry exists
    assert a_plus[:, j].sum() == 1.0
    assert a_minus[:, j].sum() == 1.0
    assert a_plus[bi["2"], j] == 1.0


def test_ac_cycles_ring_vs_radial(micro3_ring, micro3_radial):
    ring = grid.ac_cycles(micro3_ring)
    assert len(ring) == 1
    assert len(ring[0]) == 3
    assert grid.ac_cycles(micro3_radial) == []


def test_slack_bus_lowest_gen_bus(hybrid30):
    assert hybrid30.slack_bus() == "1"


def test_total_load_matches_fixture(ieee14):
    p, q = ieee14.total_load()
    doc_p = 259.0 / 100.0  # sum of MW loads in the file, per unit
    assert p == pytest.approx(doc_p, rel=1e-12)
    assert q > 0
