"""Dense two-phase simplex and builders for the coverage LPs.

The solver is deliberately simple: standard-form tableau, Bland's
smallest-index rule for anti-cycling, no presolve. Instance sizes here are
desk scale, so correctness and debuggability win over speed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .instance import (
    Cardinality,
    GeneralMatroid,
    Instance,
    Knapsack,
    PartitionMatroid,
)

PIVOT_TOL = 1e-9


class LpError(ValueError):
    pass


@dataclass
class LpModel:
    """max/min c.x subject to rows (a, rel, b) and box bounds on x.

    rel is one of "<=", ">=", "=". Bounds are [lo, hi] per variable; lo must
    be finite, hi may be +inf. A feasibility-only model uses sense "max" with
    a zero objective.
    """

    num_vars: int
    objective: Optional[np.ndarray]
    sense: str
    rows: list
    bounds: list

    def __post_init__(self):
        if self.objective is None:
            self.objective = np.zeros(self.num_vars)
        self.objective = np.asarray(self.objective, dtype=float)
        if self.objective.shape != (self.num_vars,):
            raise LpError("objective length does not match num_vars")
        if self.sense not in ("max", "min"):
            raise LpError("sense must be 'max' or 'min'")
        for a, rel, b in self.rows:
            if np.asarray(a).shape != (self.num_vars,):
                raise LpError("constraint row length does not match num_vars")
            if rel not in ("<=", ">=", "="):
                raise LpError("unknown relation %r" % rel)
        if len(self.bounds) != self.num_vars:
            raise LpError("bounds length does not match num_vars")
        for lo, hi in self.bounds:
            if not np.isfinite(lo):
                raise LpError("lower bounds must be finite")
            if hi < lo:
                raise LpError("bound lo > hi")

    def add_row(self, a, rel, b):
        self.rows.append((np.asarray(a, dtype=float), rel, float(b)))


@dataclass
class LpSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    values: Optional[np.ndarray]
    objective_value: float
    pivots: int = 0


def feasibility_tol(rhs: float) -> float:
    return 1e-7 * (1.0 + abs(rhs))


def _pivot(T: np.ndarray, r: int, c: int) -> None:
    T[r] /= T[r, c]
    col = T[:, c].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])
    T[:, c] = 0.0
    T[r, c] = 1.0


def _run_simplex(T: np.ndarray, basis: list, ncols: int, allowed: np.ndarray):
    """Minimize the objective in the last tableau row over columns marked
    allowed. Returns (status, pivots); Bland's rule throughout."""
    pivots = 0
    m = T.shape[0] - 1
    while True:
        obj = T[-1, :ncols]
        enter = -1
        for j in range(ncols):
            if allowed[j] and obj[j] < -PIVOT_TOL:
                enter = j
                break
        if enter < 0:
            return "optimal", pivots
        ratios_row = -1
        best = np.inf
        for i in range(m):
            a = T[i, enter]
            if a > PIVOT_TOL:
                r = T[i, -1] / a
                if r < best - PIVOT_TOL or (abs(r - best) <= PIVOT_TOL and (ratios_row < 0 or basis[i] > basis[ratios_row])):
                    # smallest ratio; ties by smallest basis index (Bland)
                    if r < best - PIVOT_TOL:
                        best = r
                        ratios_row = i
                    elif basis[i] < basis[ratios_row]:
                        ratios_row = i
        if ratios_row < 0:
            return "unbounded", pivots
        _pivot(T, ratios_row, enter)
        basis[ratios_row] = enter
        pivots += 1


def solve_lp(model: LpModel) -> LpSolution:
    """Two-phase dense simplex. When optimal, the returned point is a basic
    feasible solution satisfying every row within feasibility_tol(rhs)."""
    n = model.num_vars
    lo = np.array([b[0] for b in model.bounds], dtype=float)
    hi = np.array([b[1] for b in model.bounds], dtype=float)

    # Shift x = x' + lo so x' >= 0; finite upper bounds become rows.
    rows = []
    for a, rel, b in model.rows:
        rows.append((np.asarray(a, dtype=float), rel, float(b) - float(np.dot(a, lo))))
    for j in range(n):
        if np.isfinite(hi[j]):
            e = np.zeros(n)
            e[j] = 1.0
            rows.append((e, "<=", hi[j] - lo[j]))

    m = len(rows)
    c = model.objective.astype(float)
    if model.sense == "max":
        c = -c

    # Columns: n structurals, then one slack/surplus per inequality row,
    # then artificials as needed.
    nslack = sum(1 for _, rel, _ in rows if rel != "=")
    A = np.zeros((m, n + nslack))
    b = np.zeros(m)
    slack_col = n
    slack_of_row = [-1] * m
    for i, (a, rel, rhs) in enumerate(rows):
        A[i, :n] = a
        b[i] = rhs
        if rel == "<=":
            A[i, slack_col] = 1.0
            slack_of_row[i] = slack_col
            slack_col += 1
        elif rel == ">=":
            A[i, slack_col] = -1.0
            slack_of_row[i] = slack_col
            slack_col += 1
    # Make rhs non-negative.
    for i in range(m):
        if b[i] < 0:
            A[i] *= -1.0
            b[i] *= -1.0

    # Identity columns: a <= slack with +1 coefficient after sign fixing.
    basis = [-1] * m
    need_art = []
    for i in range(m):
        j = slack_of_row[i]
        if j >= 0 and A[i, j] == 1.0:
            basis[i] = j
        else:
            need_art.append(i)
    nart = len(need_art)
    total = n + nslack + nart
    T = np.zeros((m + 1, total + 1))
    T[:m, : n + nslack] = A
    T[:m, -1] = b
    for idx, i in enumerate(need_art):
        T[i, n + nslack + idx] = 1.0
        basis[i] = n + nslack + idx

    pivots = 0
    allowed = np.ones(total, dtype=bool)
    if nart:
        # Phase 1: minimize the sum of artificials.
        T[-1, :] = 0.0
        for i in need_art:
            T[-1, : total] -= T[i, : total]
            T[-1, -1] -= T[i, -1]
        status, p = _run_simplex(T, basis, total, allowed)
        pivots += p
        if -T[-1, -1] > 1e-7:
            return LpSolution("infeasible", None, float("nan"), pivots)
        # Drive remaining artificials out of the basis where possible.
        for i in range(m):
            if basis[i] >= n + nslack:
                for j in range(n + nslack):
                    if abs(T[i, j]) > PIVOT_TOL:
                        _pivot(T, i, j)
                        basis[i] = j
                        pivots += 1
                        break
        allowed[n + nslack :] = False

    # Phase 2: reduced objective relative to the current basis.
    T[-1, :] = 0.0
    T[-1, :n] = c
    for i in range(m):
        coeff = T[-1, basis[i]]
        if coeff != 0.0:
            T[-1] -= coeff * T[i]
    status, p = _run_simplex(T, basis, total, allowed)
    pivots += p
    if status == "unbounded":
        return LpSolution("unbounded", None, float("nan"), pivots)

    x_shift = np.zeros(n + nslack + nart)
    for i in range(m):
        x_shift[basis[i]] = T[i, -1]
    x = x_shift[:n] + lo
    obj = float(np.dot(model.objective, x))
    sol = LpSolution("optimal", x, obj, pivots)
    _check_primal(model, sol)
    return sol


def _check_primal(model: LpModel, sol: LpSolution) -> None:
    x = sol.values
    for a, rel, rhs in model.rows:
        lhs = float(np.dot(a, x))
        tol = feasibility_tol(rhs)
        ok = (
            lhs <= rhs + tol
            if rel == "<="
            else lhs >= rhs - tol
            if rel == ">="
            else abs(lhs - rhs) <= tol
        )
        if not ok:
            raise LpError("simplex returned a primal-infeasible point (row %s %s %s, lhs=%s)" % (a, rel, rhs, lhs))
    for j, (lo, hi) in enumerate(model.bounds):
        if x[j] < lo - 1e-7 or x[j] > hi + 1e-7:
            raise LpError("simplex returned a point outside its bounds")


# ---------------------------------------------------------------------------
# Coverage LPs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoverageVector:
    """Fractional per-client coverage at a given dilation.

    ``openings`` keeps the facility openings x_f of the LP point that
    produced the coverage; the rounding pipeline itself only consumes
    ``cov``, but tests reconstruct the flow certificate from x.
    """

    cov: dict
    alpha: float
    openings: dict = field(default_factory=dict)


def build_coverage_lp(inst: Instance, alpha: float, *, weights=None, target_row: bool = True) -> LpModel:
    """Coverage LP at dilation alpha for cardinality/matroid constraints.

    Variables are x_f in [0, 1] per facility followed by cov_v in [0, 1] per
    client. Coverage is the capped ball mass: cov_v <= sum of x_f over the
    ball {f : d(v, f) <= alpha r(v)} and cov_v <= 1 via its bound. The cap
    lives on the auxiliary variable, not on the ball sum itself; otherwise a
    center set with two facilities inside one ball would be cut off and the
    LP would not relax the integral problem.

    The knapsack constraint is rejected here: its natural LP has an unbounded
    integrality gap and the round-or-cut solver works in cov-space directly.
    """
    if isinstance(inst.constraint, Knapsack):
        raise LpError("knapsack instances are handled by round_or_cut_knapsack, not the natural LP")
    nf = len(inst.facilities)
    nc = len(inst.clients)
    nv = nf + nc
    fidx = {f: j for j, f in enumerate(inst.facilities)}
    model = LpModel(
        num_vars=nv,
        objective=None,
        sense="max",
        rows=[],
        bounds=[[0.0, 1.0]] * nv,
    )
    w = np.zeros(nv)
    for i, v in enumerate(inst.clients):
        w[nf + i] = 1.0 if weights is None else weights.get(v, 0.0)
    model.objective = w
    for i, v in enumerate(inst.clients):
        a = np.zeros(nv)
        a[nf + i] = 1.0
        rv = alpha * inst.radius[v]
        for f in inst.facilities:
            if inst.within(inst.dist(v, f), rv):
                a[fidx[f]] = -1.0
        model.add_row(a, "<=", 0.0)
    if target_row:
        model.add_row(w, ">=", float(inst.coverage_target))
    c = inst.constraint
    if isinstance(c, Cardinality):
        a = np.zeros(nv)
        a[:nf] = 1.0
        model.add_row(a, "<=", float(c.k))
    elif isinstance(c, PartitionMatroid):
        for cls, cap in sorted(c.cap.items()):
            a = np.zeros(nv)
            for f in inst.facilities:
                if c.class_of[f] == cls:
                    a[fidx[f]] = 1.0
            model.add_row(a, "<=", float(cap))
    elif isinstance(c, GeneralMatroid):
        # one rank row per facility subset; declared boundary |F| <= 20
        facs = list(inst.facilities)
        for mask in range(1, 1 << nf):
            a = np.zeros(nv)
            sub = [facs[j] for j in range(nf) if mask >> j & 1]
            for f in sub:
                a[fidx[f]] = 1.0
            model.add_row(a, "<=", float(c.rank(sub)))
    else:  # pragma: no cover
        raise LpError("unsupported constraint %r" % (c,))
    return model


def lp_feasible_at(inst: Instance, alpha: float) -> Optional[CoverageVector]:
    """Solve the coverage LP at alpha; None when infeasible.

    Feasibility is monotone in alpha (balls only grow), which is what makes
    dilation search sound. The returned point maximizes total coverage; the
    rounding pipeline accepts any feasible coverage, the maximizer is simply
    a convenient canonical choice.
    """
    model = build_coverage_lp(inst, alpha)
    sol = solve_lp(model)
    if sol.status != "optimal":
        return None
    nf = len(inst.facilities)
    cov = {v: float(sol.values[nf + i]) for i, v in enumerate(inst.clients)}
    openings = {f: float(sol.values[j]) for j, f in enumerate(inst.facilities)}
    return CoverageVector(cov=cov, alpha=alpha, openings=openings)
