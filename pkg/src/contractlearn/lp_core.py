"""Dense two-phase simplex with Bland's rule.

Small and deterministic by design: the programs solved here have a handful
of variables and at most a few hundred rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-11

RELATIONS = ("<=", ">=", "=")


class LpStructureError(ValueError):
    pass


class SolverStallError(RuntimeError):
    pass


@dataclass
class LinearProgram:
    objective: list[float]
    sense: str = "max"
    constraints: list[tuple[list[float], str, float]] = field(default_factory=list)
    bounds: list[tuple[float, float]] | None = None
    offset: float = 0.0  # constant added to the objective value

    @property
    def n(self) -> int:
        return len(self.objective)

    def add(self, coeffs, rel: str, rhs: float) -> "LinearProgram":
        self.constraints.append((list(map(float, coeffs)), rel, float(rhs)))
        return self

    def var_bounds(self) -> list[tuple[float, float]]:
        if self.bounds is None:
            return [(0.0, math.inf)] * self.n
        return [(float(lo), float(hi)) for lo, hi in self.bounds]

    def validate(self) -> None:
        if self.sense not in ("max", "min"):
            raise LpStructureError(f"unknown sense {self.sense!r}")
        n = self.n
        for k, (row, rel, rhs) in enumerate(self.constraints):
            if len(row) != n:
                raise LpStructureError(f"row {k} has width {len(row)}, expected {n}")
            if rel not in RELATIONS:
                raise LpStructureError(f"row {k}: unknown relation {rel!r}")
            if not math.isfinite(rhs):
                raise LpStructureError(f"row {k}: rhs must be finite")
        if self.bounds is not None:
            if len(self.bounds) != n:
                raise LpStructureError("bounds must have one entry per variable")
            for lo, hi in self.bounds:
                if lo == math.inf or hi == -math.inf or lo > hi:
                    raise LpStructureError(f"invalid bounds [{lo}, {hi}]")

    def value_at(self, x) -> float:
        return float(np.dot(self.objective, x)) + self.offset

    def max_violation(self, x) -> float:
        x = np.asarray(x, dtype=float)
        worst = 0.0
        for row, rel, rhs in self.constraints:
            lhs = float(np.dot(row, x))
            if rel == "<=":
                worst = max(worst, lhs - rhs)
            elif rel == ">=":
                worst = max(worst, rhs - lhs)
            else:
                worst = max(worst, abs(lhs - rhs))
        for xi, (lo, hi) in zip(x, self.var_bounds()):
            worst = max(worst, lo - xi, xi - hi)
        return worst


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None = None
    value: float = math.nan
    max_violation: float = math.nan
    iterations: int = 0
    pivots: list[tuple[int, int]] = field(default_factory=list, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


class _Tableau:
    """Minimization tableau; last row holds reduced costs, last column the rhs."""

    def __init__(self, A, b, basis, max_iter):
        m, n = A.shape
        self.T = np.zeros((m + 1, n + 1))
        self.T[:m, :n] = A
        self.T[:m, n] = b
        self.basis = list(basis)
        self.max_iter = max_iter
        self.iterations = 0
        self.pivots: list[tuple[int, int]] = []

    @property
    def rows(self) -> int:
        return self.T.shape[0] - 1

    def set_objective(self, c):
        self.T[-1, :] = 0.0
        self.T[-1, : len(c)] = c
        for i, j in enumerate(self.basis):
            if self.T[-1, j] != 0.0:
                self.T[-1, :] -= self.T[-1, j] * self.T[i, :]

    def pivot(self, r, c):
        T = self.T
        T[r, :] /= T[r, c]
        col = T[:, c].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r, :])
        T[:, c] = 0.0
        T[r, c] = 1.0
        self.basis[r] = c
        self.pivots.append((r, c))

    def run(self, allowed: int) -> str:
        """Bland's rule iterations over the first ``allowed`` columns."""
        T = self.T
        while True:
            d = T[-1, :allowed]
            entering = next((j for j in range(allowed) if d[j] < -OPT_TOL), None)
            if entering is None:
                return "optimal"
            if self.iterations >= self.max_iter:
                raise SolverStallError(f"no convergence after {self.iterations} pivots")
            col = T[:-1, entering]
            rows = np.flatnonzero(col > PIVOT_TOL)
            if rows.size == 0:
                return "unbounded"
            ratios = T[rows, -1] / col[rows]
            tied = rows[ratios <= ratios.min() + 1e-12]
            # Bland: among tied rows leave the smallest basic variable
            leave = int(min(tied, key=lambda i: self.basis[i]))
            self.pivot(leave, entering)
            self.iterations += 1


def _standardize(p: LinearProgram):
    """Rewrite ``p`` over nonnegative variables.

    Returns ``(c, rows, recover)`` where ``rows`` is a list of
    ``(coeffs, rel, rhs)`` with rel in {<=, >=} and ``recover`` maps the
    standardized solution back to the original variables.
    """
    cols: list[tuple[int, float, float]] = []  # (orig var, sign, offset)
    shift = np.zeros(p.n)
    extra_rows = []
    for i, (lo, hi) in enumerate(p.var_bounds()):
        if math.isfinite(lo):
            shift[i] = lo
            cols.append((i, 1.0, lo))
            if math.isfinite(hi):
                extra_rows.append((len(cols) - 1, hi - lo))
        elif math.isfinite(hi):
            shift[i] = hi
            cols.append((i, -1.0, hi))
        else:
            cols.append((i, 1.0, 0.0))
            cols.append((i, -1.0, 0.0))
    nz = len(cols)
    M = np.zeros((p.n, nz))
    for k, (i, sign, _) in enumerate(cols):
        M[i, k] = sign
    sign_obj = 1.0 if p.sense == "min" else -1.0
    c = sign_obj * (np.asarray(p.objective, dtype=float) @ M)

    rows = []
    for coeffs, rel, rhs in p.constraints:
        a = np.asarray(coeffs, dtype=float)
        rr = rhs - float(a @ shift)
        az = a @ M
        if rel == "=":
            rows.append((az, "<=", rr))
            rows.append((az, ">=", rr))
        else:
            rows.append((az, rel, rr))
    for k, ub in extra_rows:
        e = np.zeros(nz)
        e[k] = 1.0
        rows.append((e, "<=", ub))

    def recover(z):
        return M @ z + shift

    return c, rows, recover, sign_obj


def solve_lp(p: LinearProgram, max_iter: int | None = None) -> LpSolution:
    """Solve ``p`` with the two-phase simplex method (Bland's rule)."""
    p.validate()
    c, rows, recover, sign_obj = _standardize(p)
    nz = len(c)
    m = len(rows)
    if max_iter is None:
        max_iter = 50 * (m + nz + 10)

    if m == 0:
        if np.any(c < -OPT_TOL):
            return LpSolution("unbounded")
        x = recover(np.zeros(nz))
        return LpSolution("optimal", x, p.value_at(x), p.max_violation(x))

    # slack for <=, surplus + artificial for >= (after making rhs >= 0)
    n_slack = m
    A_rows, b = [], []
    needs_art = []
    for k, (a, rel, rhs) in enumerate(rows):
        if rhs < 0:
            a, rhs = -a, -rhs
            rel = ">=" if rel == "<=" else "<="
        slack = np.zeros(n_slack)
        slack[k] = 1.0 if rel == "<=" else -1.0
        A_rows.append(np.concatenate([a, slack]))
        b.append(rhs)
        needs_art.append(rel == ">=")
    art_rows = [k for k in range(m) if needs_art[k]]
    n_art = len(art_rows)
    A = np.zeros((m, nz + n_slack + n_art))
    A[:, : nz + n_slack] = np.asarray(A_rows)
    basis = []
    for k in range(m):
        if needs_art[k]:
            col = nz + n_slack + art_rows.index(k)
            A[k, col] = 1.0
            basis.append(col)
        else:
            basis.append(nz + k)
    tab = _Tableau(A, np.asarray(b), basis, max_iter)
    n_real = nz + n_slack

    if n_art:
        c1 = np.zeros(n_real + n_art)
        c1[n_real:] = 1.0
        tab.set_objective(c1)
        tab.run(n_real + n_art)
        if -tab.T[-1, -1] > FEAS_TOL:
            return LpSolution("infeasible", iterations=tab.iterations, pivots=tab.pivots)
        # drive remaining artificials out of the basis
        drop = []
        for r in range(tab.rows):
            if tab.basis[r] >= n_real:
                j = next((j for j in range(n_real) if abs(tab.T[r, j]) > 1e-9), None)
                if j is None:
                    drop.append(r)
                else:
                    tab.pivot(r, j)
        if drop:
            keep = [r for r in range(tab.rows) if r not in drop]
            tab.T = np.vstack([tab.T[keep], tab.T[-1:]])
            tab.basis = [tab.basis[r] for r in keep]
        tab.T = np.hstack([tab.T[:, :n_real], tab.T[:, -1:]])

    tab.set_objective(np.concatenate([c, np.zeros(n_slack)]))
    status = tab.run(n_real)
    if status == "unbounded":
        return LpSolution("unbounded", iterations=tab.iterations, pivots=tab.pivots)
    z = np.zeros(n_real)
    for r, j in enumerate(tab.basis):
        z[j] = tab.T[r, -1]
    x = recover(z[:nz])
    value = p.value_at(x)
    return LpSolution(
        "optimal", x, value, p.max_violation(x), iterations=tab.iterations, pivots=tab.pivots
    )
