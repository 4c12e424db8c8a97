"""Solver-agnostic container for conic quadratic programs.

A :class:`ConicProgram` holds variables with box bounds, a diagonal-quadratic
objective, named equality and inequality rows, and named rotated second-order
cones (2 u w >= ||z||^2, u >= 0, w >= 0).  It compiles to the standard
embedded form

    minimize    (1/2) x' P x + q' x
    subject to  A x + s = b,   s in  Zero x Nonneg x SOC x ...

shared by the two supported backends (Clarabel, an interior-point method, and
SCS, a first-order splitting method).  Rotated cones are passed to the
backends through the linear map (u, w, z) -> (u + w, u - w, sqrt(2) z), whose
image lies in the plain second-order cone.

Equality rows keep their duals.  The sign convention here is
``dual = d(objective)/d(rhs)``: for ``min x  s.t. x = 3`` the reported dual is
+1.  Backends return the internal multiplier with the opposite sign, which the
adapters flip.

Backend selection: explicit ``SolverOptions.backend``, else the
``WINDFLOW_SOLVER`` environment variable, else clarabel.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

BACKENDS = ("clarabel", "scs")

STATUS_OPTIMAL = "Optimal"
STATUS_INFEASIBLE = "Infeasible"
STATUS_UNBOUNDED = "Unbounded"
STATUS_FAILURE = "NumericalFailure"

#: an Optimal answer whose recomputed residuals exceed this is downgraded
_SANITY_RESIDUAL = 1e-4


class SolverError(RuntimeError):
    """Unexpected backend failure (not a clean infeasible/unbounded answer)."""


@dataclass
class SolverOptions:
    backend: str | None = None      # None -> $WINDFLOW_SOLVER -> clarabel
    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    max_iter: int | None = None     # None -> backend default
    verbose: bool = False
    fallback: bool = True           # retry a stalled solve on the other backend

    def resolved_backend(self) -> str:
        name = self.backend or os.environ.get("WINDFLOW_SOLVER", "clarabel")
        name = name.strip().lower()
        if name not in BACKENDS:
            raise SolverError(f"unknown solver backend {name!r} "
                              f"(choose from {', '.join(BACKENDS)})")
        return name


@dataclass
class Solution:
    status: str
    objective: float
    values: dict[str, float]
    eq_duals: dict[str, float]
    backend: str
    iterations: int = 0
    solve_time: float = 0.0
    detail: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == STATUS_OPTIMAL


@dataclass
class ResidualReport:
    max_eq: float = 0.0
    max_ineq: float = 0.0
    max_cone: float = 0.0
    max_bound: float = 0.0
    worst_eq: str = ""
    worst_ineq: str = ""
    worst_cone: str = ""

    @property
    def max_any(self) -> float:
        return max(self.max_eq, self.max_ineq, self.max_cone, self.max_bound)

    def ok(self, tol: float) -> bool:
        return self.max_any <= tol


# an affine expression: (columns, coefficients, constant)
_Expr = tuple[np.ndarray, np.ndarray, float]


class ConicProgram:
    """Build-once container; rhs values may be patched between solves."""

    def __init__(self, name: str = "program"):
        self.name = name
        self._var_index: dict[str, int] = {}
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._lin_cost: dict[int, float] = {}
        self._quad_cost: dict[int, float] = {}
        self._const_cost: float = 0.0
        self._eq: dict[str, list] = {}      # name -> [cols, vals, rhs]
        self._ineq: dict[str, list] = {}    # name -> [cols, vals, rhs]
        self._cones: dict[str, tuple[_Expr, _Expr, list[_Expr]]] = {}
        self._compiled: _Compiled | None = None

    # -- construction ------------------------------------------------------

    def add_var(self, name: str, lb: float = -math.inf, ub: float = math.inf) -> str:
        if name in self._var_index:
            raise ValueError(f"duplicate variable {name!r}")
        if lb > ub:
            raise ValueError(f"variable {name!r}: lb > ub")
        self._var_index[name] = len(self._lb)
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        self._compiled = None
        return name

    def add_cost(self, var: str, lin: float = 0.0, quad: float = 0.0) -> None:
        """Accumulate lin * x + quad * x^2 into the objective (quad >= 0)."""
        if quad < 0:
            raise ValueError(f"negative curvature on {var!r} is not conic")
        j = self._vix(var)
        if lin:
            self._lin_cost[j] = self._lin_cost.get(j, 0.0) + float(lin)
        if quad:
            self._quad_cost[j] = self._quad_cost.get(j, 0.0) + float(quad)
        self._compiled = None

    def add_const_cost(self, c: float) -> None:
        self._const_cost += float(c)

    def add_eq(self, name: str, coeffs: dict[str, float], rhs: float) -> None:
        """a . x = rhs; the row keeps its dual under `name`."""
        self._add_row(self._eq, name, coeffs, rhs)

    def add_ineq(self, name: str, coeffs: dict[str, float], rhs: float) -> None:
        """a . x <= rhs."""
        self._add_row(self._ineq, name, coeffs, rhs)

    def add_rsoc(self, name: str, u, w, z: list) -> None:
        """Rotated cone 2 u w >= ||z||^2 with u, w >= 0.

        u, w and the elements of z are affine expressions: a dict of
        coefficients, a (dict, const) pair, or a bare number.
        """
        if name in self._cones:
            raise ValueError(f"duplicate cone {name!r}")
        self._cones[name] = (self._expr(u), self._expr(w),
                             [self._expr(e) for e in z])
        self._compiled = None

    def set_rhs(self, name: str, rhs: float) -> None:
        """Patch the right-hand side of an existing (in)equality row."""
        row = self._eq.get(name)
        kind = "eq"
        if row is None:
            row = self._ineq.get(name)
            kind = "ineq"
        if row is None:
            raise KeyError(f"no row named {name!r}")
        row[2] = float(rhs)
        if self._compiled is not None:
            self._compiled.patch_rhs(kind, name, float(rhs))

    # -- introspection -----------------------------------------------------

    @property
    def num_vars(self) -> int:
        return len(self._var_index)

    @property
    def num_eq(self) -> int:
        return len(self._eq) + sum(1 for lo, hi in zip(self._lb, self._ub) if lo == hi)

    @property
    def num_ineq(self) -> int:
        bound_rows = sum((lo != hi and lo > -math.inf) + (lo != hi and hi < math.inf)
                         for lo, hi in zip(self._lb, self._ub))
        return len(self._ineq) + bound_rows

    @property
    def num_cones(self) -> int:
        return len(self._cones)

    @property
    def variables(self) -> list[str]:
        return list(self._var_index)

    def has_var(self, name: str) -> bool:
        return name in self._var_index

    # -- internals ---------------------------------------------------------

    def _vix(self, name: str) -> int:
        try:
            return self._var_index[name]
        except KeyError:
            raise KeyError(f"unknown variable {name!r}") from None

    def _add_row(self, store: dict, name: str, coeffs: dict[str, float], rhs: float) -> None:
        if name in self._eq or name in self._ineq:
            raise ValueError(f"duplicate row {name!r}")
        cols = np.fromiter((self._vix(v) for v in coeffs), dtype=np.int64,
                           count=len(coeffs))
        vals = np.fromiter(coeffs.values(), dtype=np.float64, count=len(coeffs))
        store[name] = [cols, vals, float(rhs)]
        self._compiled = None

    def _expr(self, e) -> _Expr:
        if isinstance(e, (int, float)):
            return (np.empty(0, np.int64), np.empty(0, np.float64), float(e))
        if isinstance(e, tuple):
            coeffs, const = e
        else:
            coeffs, const = e, 0.0
        cols = np.fromiter((self._vix(v) for v in coeffs), dtype=np.int64,
                           count=len(coeffs))
        vals = np.fromiter(coeffs.values(), dtype=np.float64, count=len(coeffs))
        return (cols, vals, float(const))

    def compile(self) -> "_Compiled":
        if self._compiled is None:
            self._compiled = _Compiled(self)
        return self._compiled


class _Compiled:
    """Embedded-form arrays: P, q, A, b plus cone sizes and row name maps."""

    def __init__(self, prog: ConicProgram):
        n = prog.num_vars
        self.n = n
        self.prog_name = prog.name
        self.var_names = list(prog._var_index)

        q = np.zeros(n)
        for j, c in prog._lin_cost.items():
            q[j] = c
        pdiag = np.zeros(n)
        for j, c in prog._quad_cost.items():
            pdiag[j] = c
        self.q = q
        self.p_diag = pdiag            # objective quad coefficient per var
        self.obj_const = prog._const_cost

        rows_i: list[np.ndarray] = []
        cols_i: list[np.ndarray] = []
        vals_i: list[np.ndarray] = []
        b: list[float] = []
        r = 0

        def push(cols, vals, rhs):
            nonlocal r
            rows_i.append(np.full(len(cols), r, dtype=np.int64))
            cols_i.append(np.asarray(cols, dtype=np.int64))
            vals_i.append(np.asarray(vals, dtype=np.float64))
            b.append(rhs)
            r += 1

        # zero cone: explicit equalities, then fixed variables
        self.eq_names: list[str] = []
        self.eq_row_of: dict[str, int] = {}
        for name, (cols, vals, rhs) in prog._eq.items():
            self.eq_row_of[name] = r
            self.eq_names.append(name)
            push(cols, vals, rhs)
        lb = np.asarray(prog._lb)
        ub = np.asarray(prog._ub)
        for j in range(n):
            if lb[j] == ub[j]:
                name = f"fix:{self.var_names[j]}"
                self.eq_row_of[name] = r
                self.eq_names.append(name)
                push([j], [1.0], lb[j])
        self.n_eq = r

        # nonnegative cone: explicit inequalities, then finite bounds
        self.ineq_names: list[str] = []
        self.ineq_row_of: dict[str, int] = {}
        for name, (cols, vals, rhs) in prog._ineq.items():
            self.ineq_row_of[name] = r
            self.ineq_names.append(name)
            push(cols, vals, rhs)
        for j in range(n):
            if lb[j] == ub[j]:
                continue
            if ub[j] < math.inf:
                self.ineq_names.append(f"ub:{self.var_names[j]}")
                push([j], [1.0], ub[j])
            if lb[j] > -math.inf:
                self.ineq_names.append(f"lb:{self.var_names[j]}")
                push([j], [-1.0], -lb[j])
        self.n_ineq = r - self.n_eq

        # second-order cones, one block per rotated cone
        self.cone_sizes: list[int] = []
        self.cone_names: list[str] = []
        self.cone_start = r
        for name, (u, w, zs) in prog._cones.items():
            self.cone_names.append(name)
            self.cone_sizes.append(2 + len(zs))
            uc, uv, ud = u
            wc, wv, wd = w
            # s = b - Ax must equal [u+w, u-w, sqrt2 z]; so A row = -expr coeffs
            push(np.concatenate([uc, wc]), -np.concatenate([uv, wv]), ud + wd)
            push(np.concatenate([uc, wc]), -np.concatenate([uv, -wv]), ud - wd)
            s2 = math.sqrt(2.0)
            for zc, zv, zd in zs:
                push(zc, -s2 * zv, s2 * zd)

        self.m = r
        self.a_mat = sp.csc_matrix(
            (np.concatenate(vals_i) if vals_i else np.empty(0),
             (np.concatenate(rows_i) if rows_i else np.empty(0, np.int64),
              np.concatenate(cols_i) if cols_i else np.empty(0, np.int64))),
            shape=(self.m, n))
        self.b = np.asarray(b)
        self.lb = lb
        self.ub = ub

        # cone membership data for residual checks
        self._cone_exprs = [(prog._cones[nm]) for nm in self.cone_names]

    def patch_rhs(self, kind: str, name: str, rhs: float) -> None:
        row = self.eq_row_of[name] if kind == "eq" else self.ineq_row_of[name]
        self.b[row] = rhs

    def objective_of(self, x: np.ndarray) -> float:
        return float(self.q @ x + self.p_diag @ (x * x) + self.obj_const)

    def p_matrix(self) -> sp.csc_matrix:
        return sp.diags(2.0 * self.p_diag, format="csc")


# ---------------------------------------------------------------------------
# backends
# ---------------------------------------------------------------------------

def solve(prog: ConicProgram, options: SolverOptions | None = None) -> Solution:
    """Solve the program; never raises for clean infeasible/unbounded answers.

    When the chosen backend stalls (NumericalFailure) and fallback is on, the
    same compiled program is handed to the other installed backend; a
    conclusive answer from it wins, otherwise the original failure stands.
    The deterministic retry order keeps reruns reproducible.
    """
    opts = options or SolverOptions()
    comp = prog.compile()
    backend = opts.resolved_backend()

    if comp.n == 0:
        return Solution(STATUS_OPTIMAL, comp.obj_const, {}, {}, backend)

    sol = _solve_compiled(comp, backend, opts)
    if sol.status == STATUS_FAILURE and opts.fallback:
        alt = "scs" if backend == "clarabel" else "clarabel"
        try:
            alt_sol = _solve_compiled(comp, alt, opts)
        except ImportError:
            return sol
        if alt_sol.status != STATUS_FAILURE:
            return alt_sol
    return sol


def _solve_compiled(comp: _Compiled, backend: str,
                    opts: SolverOptions) -> Solution:
    t0 = time.perf_counter()
    if backend == "clarabel":
        status, x, z_eq, iters = _solve_clarabel(comp, opts)
    else:
        status, x, z_eq, iters = _solve_scs(comp, opts)
    wall = time.perf_counter() - t0

    if x is None:
        return Solution(status, math.nan, {}, {}, backend, iters, wall)

    values = dict(zip(comp.var_names, x.tolist()))
    duals = {name: -float(z_eq[i]) for name, i in comp.eq_row_of.items()}
    objective = comp.objective_of(x)

    if status == STATUS_OPTIMAL:
        rep = _residuals(comp, x)
        if not rep.ok(max(_SANITY_RESIDUAL, 100 * opts.feas_tol)):
            status = STATUS_FAILURE
    return Solution(status, objective, values, duals, backend, iters, wall)


def _solve_clarabel(comp: _Compiled, opts: SolverOptions):
    import clarabel

    cones = []
    if comp.n_eq:
        cones.append(clarabel.ZeroConeT(comp.n_eq))
    if comp.n_ineq:
        cones.append(clarabel.NonnegativeConeT(comp.n_ineq))
    cones.extend(clarabel.SecondOrderConeT(sz) for sz in comp.cone_sizes)

    settings = clarabel.DefaultSettings()
    settings.verbose = opts.verbose
    settings.tol_feas = opts.feas_tol
    settings.tol_gap_abs = opts.gap_tol
    settings.tol_gap_rel = opts.gap_tol
    if opts.max_iter is not None:
        settings.max_iter = opts.max_iter

    solver = clarabel.DefaultSolver(comp.p_matrix(), comp.q, comp.a_mat,
                                    comp.b, cones, settings)
    res = solver.solve()
    raw = str(res.status)
    # AlmostSolved passes through as a candidate: solve() re-checks the
    # residuals and downgrades if the iterate is actually bad
    status = {
        "Solved": STATUS_OPTIMAL,
        "AlmostSolved": STATUS_OPTIMAL,
        "PrimalInfeasible": STATUS_INFEASIBLE,
        "DualInfeasible": STATUS_UNBOUNDED,
    }.get(raw, STATUS_FAILURE)
    if status in (STATUS_INFEASIBLE, STATUS_UNBOUNDED):
        return status, None, None, int(res.iterations)
    x = np.asarray(res.x)
    z = np.asarray(res.z)
    return status, x, z[:comp.n_eq] if comp.n_eq else np.empty(0), int(res.iterations)


def _solve_scs(comp: _Compiled, opts: SolverOptions):
    import scs

    data = {"A": comp.a_mat, "b": comp.b, "c": comp.q}
    if comp.p_diag.any():
        data["P"] = sp.triu(comp.p_matrix(), format="csc")
    cone: dict = {}
    if comp.n_eq:
        cone["z"] = comp.n_eq
    if comp.n_ineq:
        cone["l"] = comp.n_ineq
    if comp.cone_sizes:
        cone["q"] = list(comp.cone_sizes)

    solver = scs.SCS(data, cone,
                     eps_abs=opts.feas_tol, eps_rel=opts.gap_tol,
                     eps_infeas=1e-9,
                     max_iters=opts.max_iter or 200_000,
                     verbose=opts.verbose)
    out = solver.solve()
    raw = str(out["info"]["status"]).lower()
    # "solved (inaccurate...)" also passes as a candidate for the residual check
    if raw.startswith("solved"):
        status = STATUS_OPTIMAL
    elif "infeasible" in raw:
        status = STATUS_INFEASIBLE
    elif "unbounded" in raw:
        status = STATUS_UNBOUNDED
    else:
        status = STATUS_FAILURE
    iters = int(out["info"].get("iter", 0))
    if status in (STATUS_INFEASIBLE, STATUS_UNBOUNDED):
        return status, None, None, iters
    x = np.asarray(out["x"])
    y = np.asarray(out["y"])
    return status, x, y[:comp.n_eq] if comp.n_eq else np.empty(0), iters


# ---------------------------------------------------------------------------
# residual checks
# ---------------------------------------------------------------------------

def _eval_expr(expr: _Expr, x: np.ndarray) -> float:
    cols, vals, const = expr
    return float(vals @ x[cols] + const)


def _residuals(comp: _Compiled, x: np.ndarray) -> ResidualReport:
    rep = ResidualReport()
    ax = comp.a_mat @ x
    if comp.n_eq:
        res = np.abs(ax[:comp.n_eq] - comp.b[:comp.n_eq])
        k = int(np.argmax(res))
        rep.max_eq = float(res[k])
        rep.worst_eq = comp.eq_names[k]
    if comp.n_ineq:
        sl = comp.n_eq
        res = np.maximum(ax[sl:sl + comp.n_ineq] - comp.b[sl:sl + comp.n_ineq], 0.0)
        k = int(np.argmax(res))
        rep.max_ineq = float(res[k])
        rep.worst_ineq = comp.ineq_names[k]
    finite_lo = comp.lb > -math.inf
    finite_hi = comp.ub < math.inf
    lo_v = np.where(finite_lo, comp.lb - x, 0.0)
    hi_v = np.where(finite_hi, x - comp.ub, 0.0)
    rep.max_bound = float(max(lo_v.max(initial=0.0), hi_v.max(initial=0.0)))
    for name, (u, w, zs) in zip(comp.cone_names, comp._cone_exprs):
        uv = _eval_expr(u, x)
        wv = _eval_expr(w, x)
        z2 = sum(_eval_expr(z, x) ** 2 for z in zs)
        viol = max(z2 - 2.0 * uv * wv, -uv, -wv, 0.0)
        if viol > rep.max_cone:
            rep.max_cone = viol
            rep.worst_cone = name
    return rep


def check_solution(prog: ConicProgram, values: dict[str, float],
                   tol: float = 1e-8) -> ResidualReport:
    """Residuals of a candidate point, by constraint class.

    ``values`` must cover every program variable; a missing one raises
    KeyError naming it.  ``tol`` is advisory: the report carries the numbers,
    ``report.ok(tol)`` applies the threshold.
    """
    comp = prog.compile()
    x = np.empty(comp.n)
    for j, name in enumerate(comp.var_names):
        if name not in values:
            raise KeyError(f"candidate point is missing variable {name!r}")
        x[j] = values[name]
    rep = _residuals(comp, x)
    rep.ok(tol)
    return rep


def dump_program(prog: ConicProgram, path) -> None:
    """Readable, deterministic text dump of one program (for triage)."""
    comp = prog.compile()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# conic program: {prog.name}\n")
        fh.write(f"# vars={comp.n} eq={comp.n_eq} ineq={comp.n_ineq} "
                 f"cones={len(comp.cone_sizes)}\n")
        fh.write("minimize\n")
        terms = [f"{comp.obj_const:.17g}"] if comp.obj_const else []
        for j, name in enumerate(comp.var_names):
            if comp.q[j]:
                terms.append(f"{comp.q[j]:.17g} {name}")
            if comp.p_diag[j]:
                terms.append(f"{comp.p_diag[j]:.17g} {name}^2")
        fh.write("  " + (" + ".join(terms) if terms else "0") + "\n")
        fh.write("bounds\n")
        for j, name in enumerate(comp.var_names):
            fh.write(f"  {comp.lb[j]:.17g} <= {name} <= {comp.ub[j]:.17g}\n")
        a_csr = comp.a_mat.tocsr()

        def row_text(i):
            s = a_csr[i]
            bits = [f"{v:+.17g} {comp.var_names[j]}"
                    for j, v in zip(s.indices, s.data)]
            return " ".join(bits)

        fh.write("rows\n")
        for name, i in sorted(comp.eq_row_of.items(), key=lambda kv: kv[1]):
            fh.write(f"  eq {name}: {row_text(i)} == {comp.b[i]:.17g}\n")
        for k, name in enumerate(comp.ineq_names):
            i = comp.n_eq + k
            fh.write(f"  ineq {name}: {row_text(i)} <= {comp.b[i]:.17g}\n")
        fh.write("cones\n")
        i = comp.cone_start
        for name, sz in zip(comp.cone_names, comp.cone_sizes):
            fh.write(f"  rsoc {name}: rows {i}..{i + sz - 1}\n")
            i += sz
