"""Network data model for hybrid AC/DC grids.

A case is a collection of buses, lines, converter stations, thermal generators
and wind farms.  Three bus kinds exist:

* ``AC``  -- ordinary AC network bus,
* ``DC``  -- bus of a multi-terminal DC grid,
* ``PC``  -- AC-side point of connection of a voltage-source converter.

Lines carry the branch physics.  ``AC`` and ``PC_TRANSFORMER`` lines are
impedance branches (r, x); ``DC_MONO`` / ``DC_BI`` are mono- and bi-polar DC
cables (r only); a ``VSC_CONVERTER`` line is the internal series path of a
converter station (DC bus -> PC bus); an ``SVC`` line is a static VAr
compensator hanging off a single network bus (its to_bus is a dangling
terminal id, not a case bus).

Case files are JSON (``format: windflow-case/1``) holding physical units:
MW, MVAr, kV, MVA^2 for ratings, kV^2 for voltage windows, $/MWh cost terms.
``load_case`` converts to per-unit on ``s_base_mva``; ``case_to_json`` is the
exact inverse.  Impedances, shunt admittances and modulation-index windows are
already per-unit/dimensionless in the file and pass through unchanged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

CASE_FORMAT = "windflow-case/1"

BUS_KINDS = ("AC", "DC", "PC")
LINE_KINDS = ("AC", "DC_MONO", "DC_BI", "VSC_CONVERTER", "PC_TRANSFORMER", "SVC")

#: line kinds that behave as AC impedance branches (have x > 0, carry q)
AC_LINE_KINDS = ("AC", "PC_TRANSFORMER")
#: line kinds living on the DC side (x = 0, active power only)
DC_LINE_KINDS = ("DC_MONO", "DC_BI", "VSC_CONVERTER")


class CaseError(ValueError):
    """Raised for unreadable or structurally invalid case documents."""


# ---------------------------------------------------------------------------
# element records (all quantities per-unit once loaded)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Bus:
    id: str
    kind: str
    p_load: float = 0.0
    q_load: float = 0.0
    shunt_g: float = 0.0
    shunt_b: float = 0.0
    v_min_sq: float = 0.81
    v_max_sq: float = 1.21
    base_kv: float = 1.0


@dataclass(frozen=True)
class Line:
    id: str
    kind: str
    from_bus: str
    to_bus: str
    r: float = 0.0
    x: float = 0.0
    capacity_sq: float = 1.0
    # SVC susceptance window (per-unit); None for every other kind
    b_min: float | None = None
    b_max: float | None = None


@dataclass(frozen=True)
class Converter:
    """VSC station record.

    The series path DC bus -> PC bus is a separate VSC_CONVERTER line; this
    record holds the station-level data: filter/shunt resistance (DC-side
    shunt loss V_dc / r_shunt), the squared-modulation window m_sq_min..m_sq_max
    tying V_pc to V_dc (8 V_pc = m_sq V_dc), and, for a STATCOM, the switching
    resistance r_sw (additional DC-side loss V_dc / r_sw).
    """

    id: str
    pc_bus: str
    dc_bus: str
    r_shunt: float
    m_sq_min: float = 0.25
    m_sq_max: float = 1.0
    r_sw: float | None = None

    @property
    def is_statcom(self) -> bool:
        return self.r_sw is not None


@dataclass(frozen=True)
class Generator:
    id: str
    bus: str
    p_min: float
    p_max: float
    q_min: float
    q_max: float
    cost_c0: float = 0.0
    cost_c1: float = 0.0
    cost_c2: float = 0.0

    def cost(self, p: float) -> float:
        return self.cost_c0 + self.cost_c1 * p + self.cost_c2 * p * p

    def marginal_cost(self, p: float) -> float:
        return self.cost_c1 + 2.0 * self.cost_c2 * p


@dataclass(frozen=True)
class WindFarm:
    """A wind farm: a list of (turbine model id, count) pairs at one bus.

    The bus may be an ordinary AC bus or the PC bus of a wind-side converter
    station.  wake_loss is the fraction of aggregate nameplate output lost to
    wake effects; power_factor_min bounds the reactive capability
    (q_max = p_max * tan(acos(pf_min))).
    """

    id: str
    bus: str
    turbines: tuple[tuple[str, int], ...]
    power_factor_min: float = 0.95
    wake_loss: float = 0.15
    cost_c1: float = 0.0

    @property
    def n_turbines(self) -> int:
        return sum(c for _, c in self.turbines)


@dataclass(frozen=True)
class GridCase:
    """Immutable hybrid AC/DC network in per-unit on s_base_mva."""

    name: str
    s_base_mva: float
    voll: float
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    converters: tuple[Converter, ...] = ()
    generators: tuple[Generator, ...] = ()
    wind_farms: tuple[WindFarm, ...] = ()

    # -- lookups -----------------------------------------------------------

    def bus(self, bus_id: str) -> Bus:
        return self._bus_map[bus_id]

    def line(self, line_id: str) -> Line:
        return self._line_map[line_id]

    @property
    def _bus_map(self) -> dict[str, Bus]:
        # frozen dataclass: cache via __dict__ to dodge __setattr__
        m = self.__dict__.get("_bm")
        if m is None:
            m = self.__dict__["_bm"] = {b.id: b for b in self.buses}
        return m

    @property
    def _line_map(self) -> dict[str, Line]:
        m = self.__dict__.get("_lm")
        if m is None:
            m = self.__dict__["_lm"] = {l.id: l for l in self.lines}
        return m

    def buses_of_kind(self, *kinds: str) -> list[Bus]:
        return [b for b in self.buses if b.kind in kinds]

    def lines_of_kind(self, *kinds: str) -> list[Line]:
        return [l for l in self.lines if l.kind in kinds]

    def lines_at(self, bus_id: str) -> list[Line]:
        return [l for l in self.lines if bus_id in (l.from_bus, l.to_bus)]

    def converter_at_pc(self, pc_bus: str) -> Converter:
        for c in self.converters:
            if c.pc_bus == pc_bus:
                return c
        raise KeyError(pc_bus)

    @property
    def statcoms(self) -> list[Converter]:
        return [c for c in self.converters if c.is_statcom]

    def slack_bus(self) -> str:
        """Lowest-indexed AC bus carrying a generator (angle reference)."""
        gen_buses = {g.bus for g in self.generators
                     if self.bus(g.bus).kind == "AC"}
        if not gen_buses:
            raise CaseError("case has no generator on an AC bus")
        return min(gen_buses, key=natural_key)

    def total_load(self) -> tuple[float, float]:
        return (sum(b.p_load for b in self.buses),
                sum(b.q_load for b in self.buses))


def natural_key(ident: str):
    """Sort key treating all-digit ids numerically ('2' < '10')."""
    s = str(ident)
    return (0, int(s), "") if s.isdigit() else (1, 0, s)


# ---------------------------------------------------------------------------
# JSON I/O with unit conversion
# ---------------------------------------------------------------------------

def default_voll(generators: Iterable[Generator]) -> float:
    """100x the largest generator marginal cost at p_max (per-unit terms)."""
    margs = [g.marginal_cost(g.p_max) for g in generators]
    if not margs:
        raise CaseError("cannot derive voll: case has no generators")
    return 100.0 * max(margs)


def _req(obj: dict, key: str, where: str):
    if key not in obj:
        raise CaseError(f"{where}: missing required field '{key}'")
    return obj[key]


def load_case(text: str) -> GridCase:
    """Parse a windflow-case/1 JSON document into a per-unit GridCase.

    Raises CaseError (with the offending element id in the message) for
    malformed documents.  Structural invariants beyond parse-level checks are
    the job of :func:`validate`.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise CaseError("case document must be a JSON object")
    fmt = doc.get("format")
    if fmt != CASE_FORMAT:
        raise CaseError(f"unsupported case format {fmt!r} (expected {CASE_FORMAT!r})")

    s_base = float(_req(doc, "s_base_mva", "case"))
    if not (s_base > 0):
        raise CaseError("s_base_mva must be positive")

    buses = []
    for raw in doc.get("buses", []):
        bid = str(_req(raw, "id", "bus"))
        where = f"bus {bid}"
        kind = _req(raw, "kind", where)
        base_kv = float(raw.get("base_kv", 1.0))
        if base_kv <= 0:
            raise CaseError(f"{where}: base_kv must be positive")
        kv2 = base_kv * base_kv
        buses.append(Bus(
            id=bid, kind=kind, base_kv=base_kv,
            p_load=float(raw.get("p_load", 0.0)) / s_base,
            q_load=float(raw.get("q_load", 0.0)) / s_base,
            shunt_g=float(raw.get("shunt_g", 0.0)) / s_base,
            shunt_b=float(raw.get("shunt_b", 0.0)) / s_base,
            v_min_sq=float(_req(raw, "v_min_sq", where)) / kv2,
            v_max_sq=float(_req(raw, "v_max_sq", where)) / kv2,
        ))

    lines = []
    for raw in doc.get("lines", []):
        lid = str(_req(raw, "id", "line"))
        where = f"line {lid}"
        kind = _req(raw, "kind", where)
        bmin = raw.get("b_min")
        bmax = raw.get("b_max")
        lines.append(Line(
            id=lid, kind=kind,
            from_bus=str(_req(raw, "from_bus", where)),
            to_bus=str(_req(raw, "to_bus", where)),
            r=float(raw.get("r", 0.0)),
            x=float(raw.get("x", 0.0)),
            capacity_sq=float(_req(raw, "capacity_sq", where)) / (s_base * s_base),
            b_min=None if bmin is None else float(bmin),
            b_max=None if bmax is None else float(bmax),
        ))

    converters = []
    for raw in doc.get("converters", []):
        cid = str(_req(raw, "id", "converter"))
        where = f"converter {cid}"
        rsw = raw.get("r_sw")
        converters.append(Converter(
            id=cid,
            pc_bus=str(_req(raw, "pc_bus", where)),
            dc_bus=str(_req(raw, "dc_bus", where)),
            r_shunt=float(_req(raw, "r_shunt", where)),
            m_sq_min=float(raw.get("m_sq_min", 0.25)),
            m_sq_max=float(raw.get("m_sq_max", 1.0)),
            r_sw=None if rsw is None else float(rsw),
        ))

    generators = []
    for raw in doc.get("generators", []):
        gid = str(_req(raw, "id", "generator"))
        where = f"generator {gid}"
        generators.append(Generator(
            id=gid, bus=str(_req(raw, "bus", where)),
            p_min=float(_req(raw, "p_min", where)) / s_base,
            p_max=float(_req(raw, "p_max", where)) / s_base,
            q_min=float(_req(raw, "q_min", where)) / s_base,
            q_max=float(_req(raw, "q_max", where)) / s_base,
            cost_c0=float(raw.get("cost_c0", 0.0)),
            cost_c1=float(raw.get("cost_c1", 0.0)) * s_base,
            cost_c2=float(raw.get("cost_c2", 0.0)) * s_base * s_base,
        ))

    farms = []
    for raw in doc.get("wind_farms", []):
        fid = str(_req(raw, "id", "wind_farm"))
        where = f"wind_farm {fid}"
        turbines = tuple((str(t["model"]), int(t["count"]))
                         for t in _req(raw, "turbines", where))
        farms.append(WindFarm(
            id=fid, bus=str(_req(raw, "bus", where)), turbines=turbines,
            power_factor_min=float(raw.get("power_factor_min", 0.95)),
            wake_loss=float(raw.get("wake_loss", 0.15)),
            cost_c1=float(raw.get("cost_c1", 0.0)) * s_base,
        ))

    voll_raw = doc.get("voll")
    if voll_raw is not None:
        voll = float(voll_raw) * s_base
    else:
        voll = default_voll(generators)

    return GridCase(
        name=str(doc.get("name", "unnamed")),
        s_base_mva=s_base, voll=voll,
        buses=tuple(buses), lines=tuple(lines), converters=tuple(converters),
        generators=tuple(generators), wind_farms=tuple(farms),
    )


def load_case_file(path) -> GridCase:
    with open(path, "r", encoding="utf-8") as fh:
        return load_case(fh.read())


def case_to_json(case: GridCase, indent: int | None = 2) -> str:
    """Serialize back to the physical-unit JSON document (inverse of load)."""
    s = case.s_base_mva
    doc: dict = {
        "format": CASE_FORMAT,
        "name": case.name,
        "s_base_mva": s,
        "voll": case.voll / s,
        "buses": [],
        "lines": [],
        "converters": [],
        "generators": [],
        "wind_farms": [],
    }
    for b in case.buses:
        kv2 = b.base_kv * b.base_kv
        doc["buses"].append({
            "id": b.id, "kind": b.kind,
            "p_load": b.p_load * s, "q_load": b.q_load * s,
            "shunt_g": b.shunt_g * s, "shunt_b": b.shunt_b * s,
            "v_min_sq": b.v_min_sq * kv2, "v_max_sq": b.v_max_sq * kv2,
            "base_kv": b.base_kv,
        })
    for l in case.lines:
        raw = {
            "id": l.id, "kind": l.kind,
            "from_bus": l.from_bus, "to_bus": l.to_bus,
            "r": l.r, "x": l.x,
            "capacity_sq": l.capacity_sq * s * s,
        }
        if l.b_min is not None:
            raw["b_min"] = l.b_min
        if l.b_max is not None:
            raw["b_max"] = l.b_max
        doc["lines"].append(raw)
    for c in case.converters:
        raw = {
            "id": c.id, "pc_bus": c.pc_bus, "dc_bus": c.dc_bus,
            "r_shunt": c.r_shunt,
            "m_sq_min": c.m_sq_min, "m_sq_max": c.m_sq_max,
        }
        if c.r_sw is not None:
            raw["r_sw"] = c.r_sw
        doc["converters"].append(raw)
    for g in case.generators:
        doc["generators"].append({
            "id": g.id, "bus": g.bus,
            "p_min": g.p_min * s, "p_max": g.p_max * s,
            "q_min": g.q_min * s, "q_max": g.q_max * s,
            "cost_c0": g.cost_c0, "cost_c1": g.cost_c1 / s,
            "cost_c2": g.cost_c2 / (s * s),
        })
    for f in case.wind_farms:
        doc["wind_farms"].append({
            "id": f.id, "bus": f.bus,
            "turbines": [{"model": m, "count": c} for m, c in f.turbines],
            "power_factor_min": f.power_factor_min,
            "wake_loss": f.wake_loss,
            "cost_c1": f.cost_c1 / s,
        })
    return json.dumps(doc, indent=indent)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

@dataclass
class ValidationReport:
    issues: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def add(self, msg: str) -> None:
        self.issues.append(msg)

    def raise_if_failed(self) -> None:
        if self.issues:
            raise CaseError("invalid case:\n  " + "\n  ".join(self.issues))


def _check_unique(rep: ValidationReport, what: str, ids: list[str]) -> None:
    seen = set()
    for i in ids:
        if i in seen:
            rep.add(f"duplicate {what} id {i!r}")
        seen.add(i)


def validate(case: GridCase) -> ValidationReport:
    """Structural checks; returns a report rather than raising."""
    rep = ValidationReport()
    bus_ids = {b.id for b in case.buses}

    _check_unique(rep, "bus", [b.id for b in case.buses])
    _check_unique(rep, "line", [l.id for l in case.lines])
    _check_unique(rep, "converter", [c.id for c in case.converters])
    _check_unique(rep, "generator", [g.id for g in case.generators])
    _check_unique(rep, "wind_farm", [f.id for f in case.wind_farms])

    for b in case.buses:
        if b.kind not in BUS_KINDS:
            rep.add(f"bus {b.id}: unknown kind {b.kind!r}")
        if not (0.0 < b.v_min_sq <= b.v_max_sq):
            rep.add(f"bus {b.id}: need 0 < v_min_sq <= v_max_sq")
        if b.kind in ("DC", "PC") and b.q_load != 0.0:
            rep.add(f"bus {b.id}: {b.kind} buses carry no reactive load")

    for l in case.lines:
        if l.kind not in LINE_KINDS:
            rep.add(f"line {l.id}: unknown kind {l.kind!r}")
            continue
        if l.r < 0:
            rep.add(f"line {l.id}: r must be >= 0")
        if l.capacity_sq <= 0:
            rep.add(f"line {l.id}: capacity_sq must be positive")
        if l.kind in AC_LINE_KINDS and l.x <= 0:
            rep.add(f"line {l.id}: {l.kind} lines need x > 0")
        if l.kind in DC_LINE_KINDS and l.x != 0:
            rep.add(f"line {l.id}: {l.kind} lines must have x = 0")
        if l.kind in ("DC_MONO", "DC_BI"):
            for bid in (l.from_bus, l.to_bus):
                b = case._bus_map.get(bid)
                if b is not None and b.kind != "DC":
                    rep.add(f"line {l.id}: DC cables run between DC buses "
                            f"({bid} is {b.kind})")
        if l.kind == "SVC":
            if l.from_bus not in bus_ids:
                rep.add(f"line {l.id}: SVC bus {l.from_bus!r} does not exist")
            elif case.bus(l.from_bus).kind != "AC":
                rep.add(f"line {l.id}: SVC must attach to an AC bus")
            if l.to_bus in bus_ids:
                rep.add(f"line {l.id}: SVC terminal {l.to_bus!r} must be a "
                        "dangling id, not a case bus")
            if l.b_min is None or l.b_max is None or not (l.b_min <= l.b_max):
                rep.add(f"line {l.id}: SVC needs b_min <= b_max")
        else:
            for side, bid in (("from", l.from_bus), ("to", l.to_bus)):
                if bid not in bus_ids:
                    rep.add(f"line {l.id}: {side}_bus {bid!r} does not exist")
            if l.b_min is not None or l.b_max is not None:
                rep.add(f"line {l.id}: b_min/b_max only apply to SVC lines")

    # converter stations: VSC_CONVERTER line <-> Converter record is 1:1,
    # every PC bus belongs to exactly one station, DC buses to at most one.
    conv_lines = {l.id: l for l in case.lines if l.kind == "VSC_CONVERTER"}
    used_conv_lines: dict[str, str] = {}
    pc_seen: dict[str, str] = {}
    dc_seen: dict[str, str] = {}
    for c in case.converters:
        pc = case._bus_map.get(c.pc_bus)
        dc = case._bus_map.get(c.dc_bus)
        if pc is None or pc.kind != "PC":
            rep.add(f"converter {c.id}: pc_bus {c.pc_bus!r} must be a PC bus")
        if dc is None or dc.kind != "DC":
            rep.add(f"converter {c.id}: dc_bus {c.dc_bus!r} must be a DC bus")
        if c.r_shunt <= 0:
            rep.add(f"converter {c.id}: r_shunt must be positive")
        if not (0 < c.m_sq_min <= c.m_sq_max):
            rep.add(f"converter {c.id}: need 0 < m_sq_min <= m_sq_max")
        elif c.m_sq_min < 0.25 or c.m_sq_max > 1.0:
            # modulation index stays within 0.5 <= m <= 1, i.e. m_sq in [1/4, 1]
            rep.add(f"converter {c.id}: modulation window must lie within "
                    f"m_sq in [0.25, 1], got [{c.m_sq_min}, {c.m_sq_max}]")
        if c.r_sw is not None and c.r_sw <= 0:
            rep.add(f"converter {c.id}: r_sw must be positive")
        if c.pc_bus in pc_seen:
            rep.add(f"converter {c.id}: PC bus {c.pc_bus} already used by "
                    f"converter {pc_seen[c.pc_bus]}")
        pc_seen[c.pc_bus] = c.id
        if c.dc_bus in dc_seen:
            rep.add(f"converter {c.id}: DC bus {c.dc_bus} already used by "
                    f"converter {dc_seen[c.dc_bus]}")
        dc_seen[c.dc_bus] = c.id
        matches = [l for l in conv_lines.values()
                   if {l.from_bus, l.to_bus} == {c.pc_bus, c.dc_bus}]
        if len(matches) != 1:
            rep.add(f"converter {c.id}: expected exactly one VSC_CONVERTER "
                    f"line between {c.dc_bus} and {c.pc_bus}, found {len(matches)}")
        else:
            lid = matches[0].id
            if lid in used_conv_lines:
                rep.add(f"converter {c.id}: VSC_CONVERTER line {lid} already "
                        f"claimed by converter {used_conv_lines[lid]}")
            used_conv_lines[lid] = c.id
            if matches[0].from_bus != c.dc_bus:
                rep.add(f"line {lid}: VSC_CONVERTER lines run DC -> PC "
                        f"(from_bus must be {c.dc_bus})")
    for lid in conv_lines:
        if lid not in used_conv_lines:
            rep.add(f"line {lid}: VSC_CONVERTER line has no converter record")
    for b in case.buses:
        if b.kind == "PC" and b.id not in pc_seen:
            rep.add(f"bus {b.id}: PC bus without a converter station")

    for g in case.generators:
        if g.bus not in bus_ids:
            rep.add(f"generator {g.id}: bus {g.bus!r} does not exist")
        elif case.bus(g.bus).kind != "AC":
            rep.add(f"generator {g.id}: must sit on an AC bus")
        if g.p_min > g.p_max:
            rep.add(f"generator {g.id}: p_min > p_max")
        if g.q_min > g.q_max:
            rep.add(f"generator {g.id}: q_min > q_max")

    for f in case.wind_farms:
        if f.bus not in bus_ids:
            rep.add(f"wind_farm {f.id}: bus {f.bus!r} does not exist")
        elif case.bus(f.bus).kind not in ("AC", "PC"):
            rep.add(f"wind_farm {f.id}: must sit on an AC or PC bus")
        if not f.turbines or any(c <= 0 for _, c in f.turbines):
            rep.add(f"wind_farm {f.id}: needs at least one turbine group with "
                    "positive count")
        if not (0.0 < f.power_factor_min <= 1.0):
            rep.add(f"wind_farm {f.id}: power_factor_min must lie in (0, 1]")
        if not (0.0 <= f.wake_loss < 1.0):
            rep.add(f"wind_farm {f.id}: wake_loss must lie in [0, 1)")

    if case.voll <= 0:
        rep.add("voll must be positive")

    _check_connectivity(case, rep)
    return rep


def _check_connectivity(case: GridCase, rep: ValidationReport) -> None:
    """AC buses must form one component over AC lines; the full grid must be
    one component over all non-SVC lines (DC pockets reach the AC side through
    their converter stations)."""
    import networkx as nx

    ac = nx.Graph()
    ac.add_nodes_from(b.id for b in case.buses if b.kind == "AC")
    for l in case.lines:
        if l.kind == "AC":
            ac.add_edge(l.from_bus, l.to_bus)
    if ac.number_of_nodes() and nx.number_connected_components(ac) > 1:
        rep.add("AC subgraph is not connected")

    full = nx.Graph()
    full.add_nodes_from(b.id for b in case.buses)
    for l in case.lines:
        if l.kind != "SVC":
            full.add_edge(l.from_bus, l.to_bus)
    if full.number_of_nodes() and nx.number_connected_components(full) > 1:
        rep.add("grid is not connected (isolated bus or DC pocket)")


# ---------------------------------------------------------------------------
# incidence
# ---------------------------------------------------------------------------

def incidence(case: GridCase) -> tuple[np.ndarray, np.ndarray, dict[str, int], dict[str, int]]:
    """Flow and loss incidence matrices.

    Returns (a_plus, a_minus, bus_index, line_index) with shapes
    (n_bus, n_line).  a_plus is the oriented flow incidence (+1 at the sending
    bus, -1 at the receiving bus); a_minus charges each line's loss to its
    sending bus (+1 there, 0 elsewhere).  SVC terminals are not case buses, so
    an SVC column has only the +1 sending entry in either matrix.
    """
    bus_index = {b.id: i for i, b in enumerate(case.buses)}
    line_index = {l.id: j for j, l in enumerate(case.lines)}
    a_plus = np.zeros((len(case.buses), len(case.lines)))
    a_minus = np.zeros_like(a_plus)
    for j, l in enumerate(case.lines):
        a_plus[bus_index[l.from_bus], j] = 1.0
        a_minus[bus_index[l.from_bus], j] = 1.0
        if l.to_bus in bus_index:
            a_plus[bus_index[l.to_bus], j] = -1.0
    return a_plus, a_minus, bus_index, line_index


def ac_cycles(case: GridCase) -> list[list[tuple[str, int]]]:
    """Independent cycles of the AC(+PC transformer) subgraph.

    Each cycle is a list of (line_id, orientation) pairs, orientation +1 when
    the walk follows the line from its sending to its receiving bus.  Used for
    the diagnostic angle-cycle residual: oriented line angles of a solved
    point should telescope to ~0 around each cycle.
    """
    import networkx as nx

    g = nx.Graph()
    for l in case.lines:
        if l.kind in AC_LINE_KINDS:
            g.add_edge(l.from_bus, l.to_bus)
    cycles = []
    for cyc in nx.cycle_basis(g):
        walk = []
        ok = True
        n = len(cyc)
        for i in range(n):
            u, v = cyc[i], cyc[(i + 1) % n]
            cand = [l for l in case.lines if l.kind in AC_LINE_KINDS
                    and {l.from_bus, l.to_bus} == {u, v}]
            if not cand:
                ok = False
                break
            l = cand[0]
            walk.append((l.id, 1 if l.from_bus == u else -1))
        if ok:
            cycles.append(walk)
    return cycles
