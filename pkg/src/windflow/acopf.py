"""Optimal power flow builders: SOC relaxation, DC approximation, AC gaps.

The SOC model works on voltage-square variables V = v^2 and per-line loss
variables.  Per AC-behaving line (kinds AC, PC_TRANSFORMER):

* drop      V_s - V_r = 2 R p_s + 2 X q_s - R p_loss - X q_loss
* angle     theta_l = X p_s - R q_s          (small-angle, |v| ~ 1)
* coupling  p_loss X = q_loss R
* cone      q_loss >= (p_s^2 + q_s^2) X / V_s,   q_loss <= K X
* capacity  p_s^2 + q_s^2 <= K

DC cables use active power only: mono-polar loss p_loss >= p_s^2 R / V_s with
drop V_s - V_r = 2 R p_s - R p_loss; bi-polar loss p_loss >= p_s^2 R / (4 V_s)
with drop V_s - V_r = R p_s - R p_loss.  A VSC_CONVERTER line is a mono-style
series path without a drop row; the converter's modulation window
8 V_pc <= m_sq_max V_dc and m_sq_min V_dc <= 8 V_pc couples the two sides
instead.  Converter filter/switching losses are affine DC-side loads
V_dc / r_shunt (+ V_dc / r_sw for a STATCOM).  An SVC contributes a reactive
flow bounded by -b_max V_s <= q_s <= -b_min V_s.

Balance rows place each line's loss at its sending bus:

    p_gen + p_wind - load = sum_l (A+ p_s + A- p_loss) + G V  (and q analog).

Variable names are ``<field>:<scenario>:<element>`` with stage-1 generator
dispatch untagged (``pg:<gen>``); constraint rows follow the same scheme, so
callers can locate rows (e.g. Benders anchors) by name.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

from .conic import ConicProgram, Solution
from .grid import GridCase, AC_LINE_KINDS, DC_LINE_KINDS

DET_TAG = "0"   # scenario tag used by the deterministic builders


@dataclass(frozen=True)
class WindLimit:
    """Per-farm availability in one scenario (per-unit)."""
    p_max: float
    q_min: float
    q_max: float
    p_min: float = 0.0


# ---------------------------------------------------------------------------
# name scheme
# ---------------------------------------------------------------------------

def vname(prefix: str, tag: str, elem: str) -> str:
    return f"{prefix}:{tag}:{elem}"


def gen_p_var(gen_id: str) -> str:
    return f"pg:{gen_id}"


def anchor_row(gen_id: str) -> str:
    return f"anchor:-:{gen_id}"


# ---------------------------------------------------------------------------
# SOC scenario block
# ---------------------------------------------------------------------------

def add_stage1_vars(prog: ConicProgram, case: GridCase, with_cost: bool = True) -> dict[str, str]:
    """Thermal active dispatch variables (shared across scenario blocks)."""
    p_var = {}
    for g in case.generators:
        name = prog.add_var(gen_p_var(g.id), lb=g.p_min, ub=g.p_max)
        if with_cost:
            prog.add_cost(name, lin=g.cost_c1, quad=g.cost_c2)
            prog.add_const_cost(g.cost_c0)
        p_var[g.id] = name
    return p_var


def add_scenario_block(prog: ConicProgram, case: GridCase, tag: str,
                       p_var: dict[str, str], *,
                       wind_limit: dict[str, WindLimit] | None = None,
                       weight: float = 1.0,
                       shed: bool = False,
                       dump: bool = False) -> None:
    """Append one network operating state (one scenario) to the program.

    p_var maps generator id -> existing program variable for its active
    output.  weight scales this block's objective contribution (wind energy
    cost, shedding, dumping).  With shed=True every loaded bus gets a
    curtailment fraction in [0, 1] priced at VoLL and every bus with a
    standing V-proportional draw gets a bounded relief slack priced at twice
    VoLL; with dump=True generator buses may spill surplus at VoLL.  Together
    these keep anchored blocks feasible for any in-box stage-1 dispatch.
    """
    V = {b.id: prog.add_var(vname("V", tag, b.id), lb=b.v_min_sq, ub=b.v_max_sq)
         for b in case.buses}

    q_var = {}
    for g in case.generators:
        q_var[g.id] = prog.add_var(vname("qg", tag, g.id), lb=g.q_min, ub=g.q_max)

    pw, qw = {}, {}
    if wind_limit is not None:
        for f in case.wind_farms:
            lim = wind_limit[f.id]
            pw[f.id] = prog.add_var(vname("pw", tag, f.id), lb=lim.p_min, ub=lim.p_max)
            qw[f.id] = prog.add_var(vname("qw", tag, f.id), lb=lim.q_min, ub=lim.q_max)
            if f.cost_c1:
                prog.add_cost(pw[f.id], lin=weight * f.cost_c1)

    qc = {c.id: prog.add_var(vname("qc", tag, c.id)) for c in case.converters}

    # per-line variables, cones, drop/angle rows
    ps, qs, pl, ql = {}, {}, {}, {}
    for l in case.lines:
        k2 = l.capacity_sq
        cap = math.sqrt(k2)
        if l.kind in AC_LINE_KINDS:
            ps[l.id] = prog.add_var(vname("ps", tag, l.id))
            qs[l.id] = prog.add_var(vname("qs", tag, l.id))
            pl[l.id] = prog.add_var(vname("pl", tag, l.id), lb=0.0, ub=k2 * l.r)
            ql[l.id] = prog.add_var(vname("ql", tag, l.id), lb=0.0, ub=k2 * l.x)
            th = prog.add_var(vname("th", tag, l.id))
            prog.add_eq(vname("ang", tag, l.id),
                        {th: 1.0, ps[l.id]: -l.x, qs[l.id]: l.r}, 0.0)
            prog.add_eq(vname("losscpl", tag, l.id),
                        {pl[l.id]: l.x, ql[l.id]: -l.r}, 0.0)
            prog.add_eq(vname("drop", tag, l.id),
                        {V[l.from_bus]: 1.0, V[l.to_bus]: -1.0,
                         ps[l.id]: -2.0 * l.r, qs[l.id]: -2.0 * l.x,
                         pl[l.id]: l.r, ql[l.id]: l.x}, 0.0)
            # q_loss V_s / X >= p_s^2 + q_s^2  (rotated cone)
            prog.add_rsoc(vname("lcone", tag, l.id),
                          {ql[l.id]: 0.5 / l.x}, {V[l.from_bus]: 1.0},
                          [{ps[l.id]: 1.0}, {qs[l.id]: 1.0}])
            prog.add_rsoc(vname("kcone", tag, l.id),
                          0.5 * k2, 1.0,
                          [{ps[l.id]: 1.0}, {qs[l.id]: 1.0}])
        elif l.kind == "SVC":
            qs[l.id] = prog.add_var(vname("qs", tag, l.id))
            vs = V[l.from_bus]
            prog.add_ineq(vname("svclo", tag, l.id),
                          {qs[l.id]: -1.0, vs: -l.b_max}, 0.0)
            prog.add_ineq(vname("svchi", tag, l.id),
                          {qs[l.id]: 1.0, vs: l.b_min}, 0.0)
        else:  # DC_MONO, DC_BI, VSC_CONVERTER
            ps[l.id] = prog.add_var(vname("ps", tag, l.id), lb=-cap, ub=cap)
            quarter = 4.0 if l.kind == "DC_BI" else 1.0
            pl[l.id] = prog.add_var(vname("pl", tag, l.id),
                                    lb=0.0, ub=k2 * l.r / quarter)
            if l.r > 0.0:
                # p_loss >= p_s^2 R / (quarter * V_s)
                prog.add_rsoc(vname("lcone", tag, l.id),
                              {pl[l.id]: quarter / (2.0 * l.r)},
                              {V[l.from_bus]: 1.0}, [{ps[l.id]: 1.0}])
            if l.kind == "DC_MONO":
                prog.add_eq(vname("drop", tag, l.id),
                            {V[l.from_bus]: 1.0, V[l.to_bus]: -1.0,
                             ps[l.id]: -2.0 * l.r, pl[l.id]: l.r}, 0.0)
            elif l.kind == "DC_BI":
                prog.add_eq(vname("drop", tag, l.id),
                            {V[l.from_bus]: 1.0, V[l.to_bus]: -1.0,
                             ps[l.id]: -l.r, pl[l.id]: l.r}, 0.0)
            # VSC_CONVERTER: voltages couple through the modulation window

    # modulation windows
    for c in case.converters:
        prog.add_ineq(vname("modlo", tag, c.id),
                      {V[c.pc_bus]: 8.0, V[c.dc_bus]: -c.m_sq_max}, 0.0)
        prog.add_ineq(vname("modhi", tag, c.id),
                      {V[c.pc_bus]: -8.0, V[c.dc_bus]: c.m_sq_min}, 0.0)

    shed_var, dump_var = {}, {}
    if shed:
        for b in case.buses:
            if b.p_load != 0.0 or b.q_load != 0.0:
                sv = prog.add_var(vname("shed", tag, b.id), lb=0.0, ub=1.0)
                shed_var[b.id] = sv
                price = abs(b.p_load) if b.p_load != 0.0 else abs(b.q_load)
                prog.add_cost(sv, lin=weight * case.voll * price)
    if dump:
        for bid in {g.bus for g in case.generators}:
            dv = prog.add_var(vname("dump", tag, bid), lb=0.0)
            dump_var[bid] = dv
            prog.add_cost(dv, lin=weight * case.voll)

    gens_at: dict[str, list] = {}
    for g in case.generators:
        gens_at.setdefault(g.bus, []).append(g)
    farms_at: dict[str, list] = {}
    for f in case.wind_farms:
        farms_at.setdefault(f.bus, []).append(f)
    conv_at_dc = {c.dc_bus: c for c in case.converters}
    conv_at_pc = {c.pc_bus: c for c in case.converters}

    # Standing V-proportional draws (shunt conductance, converter filter and
    # switching losses) are not sheddable load, so a block anchored below
    # that draw would be infeasible no matter how much load is shed.  With
    # shed=True each such bus gets a relief slack bounded by its worst-case
    # draw, priced strictly above shedding so it only fires as a last resort.
    relief_var = {}
    if shed:
        for b in case.buses:
            g_par = b.shunt_g
            c = conv_at_dc.get(b.id)
            if c is not None:
                g_par += 1.0 / c.r_shunt
                if c.r_sw is not None:
                    g_par += 1.0 / c.r_sw
            if g_par > 0.0:
                rv = prog.add_var(vname("relief", tag, b.id),
                                  lb=0.0, ub=g_par * b.v_max_sq)
                relief_var[b.id] = rv
                prog.add_cost(rv, lin=weight * 2.0 * case.voll)

    # balance rows
    for b in case.buses:
        pco: dict[str, float] = {}
        for g in gens_at.get(b.id, ()):
            pco[p_var[g.id]] = pco.get(p_var[g.id], 0.0) + 1.0
        for f in farms_at.get(b.id, ()):
            if f.id in pw:
                pco[pw[f.id]] = 1.0
        if b.id in shed_var:
            pco[shed_var[b.id]] = b.p_load
        if b.id in dump_var:
            pco[dump_var[b.id]] = -1.0
        if b.id in relief_var:
            pco[relief_var[b.id]] = 1.0
        gv = -b.shunt_g
        c = conv_at_dc.get(b.id)
        if c is not None:
            gv -= 1.0 / c.r_shunt
            if c.r_sw is not None:
                gv -= 1.0 / c.r_sw
        if gv != 0.0:
            pco[V[b.id]] = pco.get(V[b.id], 0.0) + gv
        for l in case.lines_at(b.id):
            if l.id not in ps:       # SVC carries no active power
                continue
            if l.from_bus == b.id:
                pco[ps[l.id]] = pco.get(ps[l.id], 0.0) - 1.0
                pco[pl[l.id]] = pco.get(pl[l.id], 0.0) - 1.0
            else:
                pco[ps[l.id]] = pco.get(ps[l.id], 0.0) + 1.0
        prog.add_eq(vname("pbal", tag, b.id), pco, b.p_load)

        if b.kind == "DC":
            continue
        qco: dict[str, float] = {}
        for g in gens_at.get(b.id, ()):
            qco[q_var[g.id]] = qco.get(q_var[g.id], 0.0) + 1.0
        for f in farms_at.get(b.id, ()):
            if f.id in qw:
                qco[qw[f.id]] = 1.0
        cpc = conv_at_pc.get(b.id)
        if cpc is not None:
            qco[qc[cpc.id]] = 1.0
        if b.id in shed_var:
            qco[shed_var[b.id]] = qco.get(shed_var[b.id], 0.0) + b.q_load
        bv = b.shunt_b
        if bv != 0.0:
            qco[V[b.id]] = qco.get(V[b.id], 0.0) + bv
        for l in case.lines_at(b.id):
            if l.id not in qs:       # DC-side lines carry no reactive power
                continue
            if l.from_bus == b.id:
                qco[qs[l.id]] = qco.get(qs[l.id], 0.0) - 1.0
                if l.id in ql:
                    qco[ql[l.id]] = qco.get(ql[l.id], 0.0) - 1.0
            elif l.to_bus == b.id:
                qco[qs[l.id]] = qco.get(qs[l.id], 0.0) + 1.0
        prog.add_eq(vname("qbal", tag, b.id), qco, b.q_load)


def build_soc_acopf(case: GridCase,
                    wind_limits: dict[str, WindLimit] | None = None) -> ConicProgram:
    """Deterministic SOC relaxation; wind farms enter only when limits given."""
    prog = ConicProgram(f"soc:{case.name}")
    p_var = add_stage1_vars(prog, case, with_cost=True)
    add_scenario_block(prog, case, DET_TAG, p_var, wind_limit=wind_limits)
    return prog


# ---------------------------------------------------------------------------
# DC approximation (lossless B-theta)
# ---------------------------------------------------------------------------

def build_dc_opf(case: GridCase) -> ConicProgram:
    """Lossless angle-based approximation.

    AC-behaving lines carry p_s = theta_l / x with |p_s| <= sqrt(K); DC and
    converter branches are capacity-bounded lossless transport; SVCs,
    reactive power and voltage magnitudes drop out (v = 1 notionally).
    """
    prog = ConicProgram(f"dc:{case.name}")
    tag = DET_TAG
    p_var = add_stage1_vars(prog, case, with_cost=True)

    theta = {}
    for b in case.buses:
        if b.kind != "DC":
            theta[b.id] = prog.add_var(vname("thb", tag, b.id))
    prog.add_eq(vname("slack", tag, case.slack_bus()),
                {theta[case.slack_bus()]: 1.0}, 0.0)

    ps = {}
    for l in case.lines:
        if l.kind == "SVC":
            continue
        cap = math.sqrt(l.capacity_sq)
        ps[l.id] = prog.add_var(vname("ps", tag, l.id), lb=-cap, ub=cap)
        if l.kind in AC_LINE_KINDS:
            prog.add_eq(vname("dflow", tag, l.id),
                        {ps[l.id]: 1.0, theta[l.from_bus]: -1.0 / l.x,
                         theta[l.to_bus]: 1.0 / l.x}, 0.0)

    gens_at: dict[str, list] = {}
    for g in case.generators:
        gens_at.setdefault(g.bus, []).append(g)
    for b in case.buses:
        co: dict[str, float] = {}
        for g in gens_at.get(b.id, ()):
            co[p_var[g.id]] = co.get(p_var[g.id], 0.0) + 1.0
        for l in case.lines_at(b.id):
            if l.id not in ps:
                continue
            if l.from_bus == b.id:
                co[ps[l.id]] = co.get(ps[l.id], 0.0) - 1.0
            else:
                co[ps[l.id]] = co.get(ps[l.id], 0.0) + 1.0
        # shunt conductance at nominal voltage is a constant draw
        prog.add_eq(vname("pbal", tag, b.id), co, b.p_load + b.shunt_g)
    return prog


# ---------------------------------------------------------------------------
# recovery
# ---------------------------------------------------------------------------

@dataclass
class OperatingPoint:
    """Physical-variable snapshot of one solved network state (per-unit)."""

    bus_v_sq: dict[str, float] = field(default_factory=dict)
    bus_v: dict[str, float] = field(default_factory=dict)
    bus_theta: dict[str, float] = field(default_factory=dict)
    line_p_s: dict[str, float] = field(default_factory=dict)
    line_q_s: dict[str, float] = field(default_factory=dict)
    line_p_loss: dict[str, float] = field(default_factory=dict)
    line_q_loss: dict[str, float] = field(default_factory=dict)
    line_theta: dict[str, float] = field(default_factory=dict)
    line_i_s: dict[str, float] = field(default_factory=dict)
    gen_p: dict[str, float] = field(default_factory=dict)
    gen_q: dict[str, float] = field(default_factory=dict)
    farm_p: dict[str, float] = field(default_factory=dict)
    farm_q: dict[str, float] = field(default_factory=dict)
    conv_q: dict[str, float] = field(default_factory=dict)
    conv_shunt_loss: dict[str, float] = field(default_factory=dict)
    conv_switch_loss: dict[str, float] = field(default_factory=dict)
    svc_b: dict[str, float] = field(default_factory=dict)
    shed_p: dict[str, float] = field(default_factory=dict)
    shed_q: dict[str, float] = field(default_factory=dict)
    dump_p: dict[str, float] = field(default_factory=dict)
    relief_p: dict[str, float] = field(default_factory=dict)
    objective: float = 0.0

    def to_dict(self) -> dict:
        return {k: (dict(v) if isinstance(v, dict) else v)
                for k, v in self.__dict__.items()}


def recover_physical(case: GridCase, solution: Solution,
                     tag: str = DET_TAG) -> OperatingPoint:
    """Map a solved program back to physical quantities.

    Handles both model families: the SOC relaxation (voltage-square and loss
    variables; bus angles rebuilt by walking line angles out from the slack)
    and the DC approximation (bus angle variables; v = 1, lossless).
    """
    val = solution.values
    pt = OperatingPoint(objective=solution.objective)
    dc_style = vname("thb", tag, case.slack_bus()) in val

    for b in case.buses:
        V = val.get(vname("V", tag, b.id), 1.0)
        pt.bus_v_sq[b.id] = V
        pt.bus_v[b.id] = math.sqrt(max(V, 0.0))

    for l in case.lines:
        pt.line_p_s[l.id] = val.get(vname("ps", tag, l.id), 0.0)
        pt.line_q_s[l.id] = val.get(vname("qs", tag, l.id), 0.0)
        pt.line_p_loss[l.id] = val.get(vname("pl", tag, l.id), 0.0)
        pt.line_q_loss[l.id] = val.get(vname("ql", tag, l.id), 0.0)
        if l.kind == "SVC":
            vs = pt.bus_v_sq[l.from_bus]
            pt.svc_b[l.id] = -pt.line_q_s[l.id] / vs if vs else 0.0
        elif l.kind in DC_LINE_KINDS:
            # p_s = v_s i_s on a monopole, p_s = 2 v_s i_s on a bipole
            vs = pt.bus_v[l.from_bus]
            if vs > 0.0:
                poles = 2.0 if l.kind == "DC_BI" else 1.0
                pt.line_i_s[l.id] = pt.line_p_s[l.id] / (poles * vs)

    for g in case.generators:
        pt.gen_p[g.id] = val.get(gen_p_var(g.id), 0.0)
        pt.gen_q[g.id] = val.get(vname("qg", tag, g.id), 0.0)
    for f in case.wind_farms:
        pt.farm_p[f.id] = val.get(vname("pw", tag, f.id), 0.0)
        pt.farm_q[f.id] = val.get(vname("qw", tag, f.id), 0.0)
    for c in case.converters:
        vdc = pt.bus_v_sq[c.dc_bus]
        pt.conv_q[c.id] = val.get(vname("qc", tag, c.id), 0.0)
        pt.conv_shunt_loss[c.id] = vdc / c.r_shunt
        if c.r_sw is not None:
            pt.conv_switch_loss[c.id] = vdc / c.r_sw

    for b in case.buses:
        sv = val.get(vname("shed", tag, b.id), 0.0)
        if sv:
            pt.shed_p[b.id] = sv * b.p_load
            pt.shed_q[b.id] = sv * b.q_load
        dv = val.get(vname("dump", tag, b.id), 0.0)
        if dv:
            pt.dump_p[b.id] = dv
        rv = val.get(vname("relief", tag, b.id), 0.0)
        if rv:
            pt.relief_p[b.id] = rv

    # angles
    if dc_style:
        for b in case.buses:
            pt.bus_theta[b.id] = val.get(vname("thb", tag, b.id), 0.0)
            if b.kind != "DC":
                pt.bus_v_sq[b.id] = 1.0
                pt.bus_v[b.id] = 1.0
        for l in case.lines:
            if l.kind in AC_LINE_KINDS:
                pt.line_theta[l.id] = (pt.bus_theta[l.from_bus]
                                       - pt.bus_theta[l.to_bus])
            else:
                pt.line_theta[l.id] = 0.0
    else:
        for l in case.lines:
            pt.line_theta[l.id] = val.get(vname("th", tag, l.id), 0.0)
        _spread_angles(case, pt)
    return pt


def _spread_angles(case: GridCase, pt: OperatingPoint) -> None:
    """Bus angles from line angles, breadth-first from the slack; buses with
    no AC-side path (DC pockets) sit at angle 0."""
    adj: dict[str, list] = {}
    for l in case.lines:
        if l.kind in AC_LINE_KINDS:
            adj.setdefault(l.from_bus, []).append((l.to_bus, -pt.line_theta[l.id]))
            adj.setdefault(l.to_bus, []).append((l.from_bus, pt.line_theta[l.id]))
    for b in case.buses:
        pt.bus_theta[b.id] = 0.0
    start = case.slack_bus()
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v, dth in adj.get(u, ()):
            if v in seen or v not in pt.bus_theta:
                continue
            pt.bus_theta[v] = pt.bus_theta[u] + dth
            seen.add(v)
            queue.append(v)


# ---------------------------------------------------------------------------
# exact-equation feasibility gaps
# ---------------------------------------------------------------------------

GAP_FAMILIES = ("1a", "1b", "1c", "1d", "1e", "1f")


@dataclass
class GapReport:
    """Max absolute residual of each exact AC constraint family.

    1a/1b: active/reactive bus balance; 1c/1d: exact active/reactive line
    loss; 1e: voltage-square drop; 1f: angle-flow coupling
    v_s v_r sin(theta_l) = X p_s - R q_s.
    """
    case_name: str
    model: str
    residual: dict[str, float] = field(default_factory=dict)
    worst: dict[str, str] = field(default_factory=dict)

    def gap(self, family: str) -> float:
        return self.residual[family]


def feasibility_gap(case: GridCase, pt: OperatingPoint,
                    model: str = "soc") -> GapReport:
    """Evaluate the exact (nonconvex) AC equations at an operating point.

    Bus families run over AC and PC buses with shed/dumped load and converter
    reactive support treated as injections; line families run over AC and
    PC_TRANSFORMER lines.  DC-side physics has its own convex rows and is not
    part of the six AC families.
    """
    rep = GapReport(case.name, model, {f: 0.0 for f in GAP_FAMILIES},
                    {f: "" for f in GAP_FAMILIES})

    def hit(fam: str, el: str, res: float) -> None:
        res = abs(res)
        if res > rep.residual[fam]:
            rep.residual[fam] = res
            rep.worst[fam] = el

    gens_at: dict[str, list] = {}
    for g in case.generators:
        gens_at.setdefault(g.bus, []).append(g)
    farms_at: dict[str, list] = {}
    for f in case.wind_farms:
        farms_at.setdefault(f.bus, []).append(f)
    conv_at_pc = {c.pc_bus: c for c in case.converters}

    for b in case.buses:
        if b.kind == "DC":
            continue
        v2 = pt.bus_v_sq[b.id]
        p_inj = sum(pt.gen_p[g.id] for g in gens_at.get(b.id, ()))
        p_inj += sum(pt.farm_p[f.id] for f in farms_at.get(b.id, ()))
        p_inj += pt.shed_p.get(b.id, 0.0) - pt.dump_p.get(b.id, 0.0)
        p_inj += pt.relief_p.get(b.id, 0.0)
        q_inj = sum(pt.gen_q[g.id] for g in gens_at.get(b.id, ()))
        q_inj += sum(pt.farm_q[f.id] for f in farms_at.get(b.id, ()))
        q_inj += pt.shed_q.get(b.id, 0.0)
        c = conv_at_pc.get(b.id)
        if c is not None:
            q_inj += pt.conv_q[c.id]
        flow_p = flow_q = 0.0
        for l in case.lines_at(b.id):
            if l.kind == "SVC":
                if l.from_bus == b.id:
                    flow_q += pt.line_q_s[l.id]
                continue
            if l.from_bus == b.id:
                flow_p += pt.line_p_s[l.id] + pt.line_p_loss[l.id]
                if l.kind in AC_LINE_KINDS:
                    flow_q += pt.line_q_s[l.id] + pt.line_q_loss[l.id]
            else:
                flow_p -= pt.line_p_s[l.id]
                if l.kind in AC_LINE_KINDS:
                    flow_q -= pt.line_q_s[l.id]
        hit("1a", b.id, p_inj - b.p_load - flow_p - b.shunt_g * v2)
        hit("1b", b.id, q_inj - b.q_load - flow_q + b.shunt_b * v2)

    for l in case.lines:
        if l.kind not in AC_LINE_KINDS:
            continue
        ps_, qs_ = pt.line_p_s[l.id], pt.line_q_s[l.id]
        pl_, ql_ = pt.line_p_loss[l.id], pt.line_q_loss[l.id]
        vs2 = pt.bus_v_sq[l.from_bus]
        vr2 = pt.bus_v_sq[l.to_bus]
        s2 = ps_ * ps_ + qs_ * qs_
        hit("1c", l.id, pl_ - s2 / vs2 * l.r)
        hit("1d", l.id, ql_ - s2 / vs2 * l.x)
        hit("1e", l.id, vs2 - vr2 - 2.0 * l.r * ps_ - 2.0 * l.x * qs_
            + l.r * pl_ + l.x * ql_)
        vsvr = math.sqrt(max(vs2, 0.0) * max(vr2, 0.0))
        hit("1f", l.id, vsvr * math.sin(pt.line_theta[l.id])
            - l.x * ps_ + l.r * qs_)
    return rep


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def loss_cone_slack(case: GridCase, pt: OperatingPoint) -> dict[str, float]:
    """Slack of each loss cone at a point (0 = tight; > 1e-4 worth flagging)."""
    out = {}
    for l in case.lines:
        vs = pt.bus_v_sq[l.from_bus]
        if l.kind in AC_LINE_KINDS:
            s2 = pt.line_p_s[l.id] ** 2 + pt.line_q_s[l.id] ** 2
            out[l.id] = pt.line_q_loss[l.id] - s2 / vs * l.x
        elif l.kind in ("DC_MONO", "VSC_CONVERTER") and l.r > 0:
            out[l.id] = pt.line_p_loss[l.id] - pt.line_p_s[l.id] ** 2 / vs * l.r
        elif l.kind == "DC_BI" and l.r > 0:
            out[l.id] = pt.line_p_loss[l.id] - pt.line_p_s[l.id] ** 2 / (4 * vs) * l.r
    return out


def angle_cycle_residuals(case: GridCase, pt: OperatingPoint) -> list[float]:
    """Sum of oriented line angles around each independent AC cycle."""
    from .grid import ac_cycles

    return [sum(sign * pt.line_theta[lid] for lid, sign in walk)
            for walk in ac_cycles(case)]
