"""Team production with linear share profiles.

``n`` agents with cost ``c(a) = a`` choose efforts; output ``f(a)`` is split
with share ``beta_i`` to agent ``i`` and ``1 - sum(beta)`` to the principal.
Agents play the equilibrium given by ``beta_i d_i f(a) = 1``.

When ``f = h(sum_i g_i(a_i))`` is explicitly additive, output as a function
of ``beta`` is quasiconcave, so ``{beta : f(a(beta)) >= k}`` is convex and
the principal's problem becomes a family of convex programs ``MinContract(k)``
solved here with only output queries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, ClassVar

import numpy as np

from .lp_core import LinearProgram, solve_lp

FP_TOL = 1e-13
MAX_ITER = 500
FD_STEP = 1e-4
QC_TOL = 1e-8
MAX_AGENTS = 8
SECTION_POINTS = 16
BOUNDARY_TOL = 1e-11
MAX_CUTS = 400


class TeamError(ValueError):
    pass


class TeamSolverError(RuntimeError):
    def __init__(self, msg: str, residual: float = math.nan):
        super().__init__(f"{msg} (residual {residual:.3g})")
        self.residual = residual


# --------------------------------------------------------------------------
# production families


class TeamProduction:
    """Production ``f`` and gradient on batches of effort profiles ``(m, n)``."""

    n: int
    family: ClassVar[str] = "general"
    additive: ClassVar[bool] = False
    essential: ClassVar[bool] = False  # f = 0 whenever some a_i = 0

    def f(self, A: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad(self, A: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> dict[str, Any]:
        raise NotImplementedError

    def to_dict(self) -> dict[str, Any]:
        return {"family": self.family, **self.params()}


class ExplicitlyAdditive(TeamProduction):
    """``f(a) = h(sum_i g_i(a_i))`` with ``y_i = g_i o (1/g_i')^{-1}``.

    Subclasses give ``h'``, ``g``, ``y``, the action map ``z -> (1/g_i')^{-1}(z)``
    and an increasing bijection ``u -> t`` from R onto the domain of ``h``.
    """

    additive: ClassVar[bool] = True

    def h(self, t):
        raise NotImplementedError

    def dh(self, t):
        raise NotImplementedError

    def g(self, A):
        raise NotImplementedError

    def y(self, Z):
        raise NotImplementedError

    def action(self, Z):
        raise NotImplementedError

    def t_of(self, u):
        return u


def _check_n(n: int):
    if not (1 <= n <= MAX_AGENTS):
        raise TeamError(f"team size must be between 1 and {MAX_AGENTS}")


@dataclass(frozen=True)
class CobbDouglas(ExplicitlyAdditive):
    """``f(a) = scale * prod_i a_i^{k_i}`` with ``sum k < 1``; ``h = scale * exp``, ``g_i = k_i ln a_i``."""

    k: tuple[float, ...]
    scale: float = 1.0
    family: ClassVar[str] = "cobb-douglas"
    essential: ClassVar[bool] = True

    def __post_init__(self):
        object.__setattr__(self, "k", tuple(float(x) for x in self.k))
        _check_n(len(self.k))
        if min(self.k) <= 0 or sum(self.k) >= 1:
            raise TeamError("Cobb-Douglas needs positive exponents summing below 1")
        if self.scale <= 0:
            raise TeamError("scale must be positive")

    @property
    def n(self) -> int:
        return len(self.k)

    @property
    def _k(self):
        return np.asarray(self.k)

    def f(self, A):
        A = np.asarray(A, dtype=float)
        with np.errstate(divide="ignore"):
            return self.scale * np.prod(np.maximum(A, 0.0) ** self._k, axis=-1)

    def grad(self, A):
        A = np.asarray(A, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return self._k * self.f(A)[..., None] / A

    def h(self, t):
        return self.scale * np.exp(t)

    def dh(self, t):
        return self.scale * np.exp(t)

    def g(self, A):
        with np.errstate(divide="ignore"):
            return self._k * np.log(A)

    def y(self, Z):
        with np.errstate(divide="ignore"):
            return self._k * np.log(self._k * Z)

    def action(self, Z):
        return self._k * Z

    def params(self):
        return {"k": list(self.k), "scale": self.scale}


@dataclass(frozen=True)
class CES(ExplicitlyAdditive):
    """``f(a) = (sum_i rho_i a_i^{-k})^{-d/k}``, ``k > 0``, ``0 < d < 1``.

    ``h(x) = (-x)^{-d/k}`` on ``x < 0`` and ``g_i(a) = -rho_i a^{-k}``.
    """

    rho: tuple[float, ...]
    k: float = 1.0
    d: float = 0.5
    family: ClassVar[str] = "ces"
    essential: ClassVar[bool] = True

    def __post_init__(self):
        object.__setattr__(self, "rho", tuple(float(x) for x in self.rho))
        _check_n(len(self.rho))
        if min(self.rho) <= 0 or self.k <= 0 or not (0 < self.d < 1):
            raise TeamError("CES needs rho > 0, k > 0 and 0 < d < 1")

    @property
    def n(self) -> int:
        return len(self.rho)

    @property
    def _rho(self):
        return np.asarray(self.rho)

    def _S(self, A):
        with np.errstate(divide="ignore"):
            return np.sum(self._rho * np.asarray(A, dtype=float) ** (-self.k), axis=-1)

    def f(self, A):
        return self._S(A) ** (-self.d / self.k)

    def grad(self, A):
        A = np.asarray(A, dtype=float)
        S = self._S(A)[..., None]
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.d * self._rho * A ** (-self.k - 1.0) * S ** (-self.d / self.k - 1.0)

    def h(self, t):
        return (-t) ** (-self.d / self.k)

    def dh(self, t):
        return (self.d / self.k) * (-t) ** (-self.d / self.k - 1.0)

    def g(self, A):
        return -self._rho * np.asarray(A, dtype=float) ** (-self.k)

    def y(self, Z):
        return -self._rho * (self.k * self._rho * Z) ** (-self.k / (self.k + 1.0))

    def action(self, Z):
        return (self.k * self._rho * Z) ** (1.0 / (self.k + 1.0))

    def t_of(self, u):
        return -np.exp(-u)

    def params(self):
        return {"rho": list(self.rho), "k": self.k, "d": self.d}


@dataclass(frozen=True)
class SmoothTeam(TeamProduction):
    """General smooth production given by evaluators; solved by Newton."""

    n: int
    fn: Callable[[np.ndarray], np.ndarray]
    grad_fn: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"

    def __post_init__(self):
        _check_n(self.n)

    def f(self, A):
        return self.fn(np.asarray(A, dtype=float))

    def grad(self, A):
        return self.grad_fn(np.asarray(A, dtype=float))

    def params(self):
        return {"name": self.name, "n": self.n}


FAMILIES: dict[str, type] = {CobbDouglas.family: CobbDouglas, CES.family: CES}


def team_from_dict(d: dict[str, Any]) -> TeamProduction:
    d = dict(d)
    try:
        cls = FAMILIES[d.pop("family")]
    except KeyError as exc:
        raise TeamError(f"unknown team family {exc}") from None
    for key in ("k", "rho"):
        if isinstance(d.get(key), list):
            d[key] = tuple(d[key])
    return cls(**d)


def cobb_douglas_example() -> CobbDouglas:
    """``f(a) = 3 a_1^{1/3} a_2^{1/3}``: equilibrium ``a_1 = b_1^2 b_2``, output ``3 b_1 b_2``."""
    return CobbDouglas((1 / 3, 1 / 3), 3.0)


BUILTINS: dict[str, Callable[[], TeamProduction]] = {
    "cobb-douglas-2": cobb_douglas_example,
    "cobb-douglas-3": lambda: CobbDouglas((0.2, 0.3, 0.25), 2.0),
    "ces-2": lambda: CES((1.0, 1.0), 1.0, 0.5),
    "ces-3": lambda: CES((1.0, 2.0, 0.5), 0.5, 0.6),
}


# --------------------------------------------------------------------------
# equilibrium


@dataclass
class EquilibriumResult:
    actions: np.ndarray
    output: float
    residual: float
    method: str
    iterations: int = 0
    fixed_point: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def degenerate(self) -> bool:
        return self.method == "degenerate"


def _profiles(f: TeamProduction, beta) -> np.ndarray:
    B = np.atleast_2d(np.asarray(beta, dtype=float))
    if B.shape[-1] != f.n:
        raise TeamError(f"profile has {B.shape[-1]} shares for {f.n} agents")
    if np.any(B < 0) or not np.all(np.isfinite(B)):
        raise TeamError("shares must be finite and nonnegative")
    return B


def foc_residual(f: TeamProduction, B: np.ndarray, A: np.ndarray) -> np.ndarray:
    """``max_i |beta_i d_i f(a) - 1|`` per row."""
    return np.max(np.abs(B * f.grad(A) - 1.0), axis=-1)


def _fixed_point(f: ExplicitlyAdditive, B: np.ndarray) -> tuple[np.ndarray, int]:
    """Solve ``t = sum_i y_i(beta_i h'(t))`` row-wise by bisection in ``u``.

    ``F(t) = sum_i y_i(beta_i h'(t)) - t`` is strictly decreasing, so the
    root is bracketed by doubling and then bisected.
    """

    def F(u):
        t = f.t_of(u)
        with np.errstate(all="ignore"):
            return np.sum(f.y(B * f.dh(t)[:, None]), axis=1) - t

    m = B.shape[0]
    lo, hi = -np.ones(m), np.ones(m)
    for _ in range(64):
        bad = F(lo) < 0
        if not bad.any():
            break
        lo[bad] *= 2.0
    for _ in range(64):
        bad = F(hi) > 0
        if not bad.any():
            break
        hi[bad] *= 2.0
    if np.any(F(lo) < 0) or np.any(F(hi) > 0):
        raise TeamSolverError("could not bracket the fixed point")
    for it in range(MAX_ITER):
        mid = 0.5 * (lo + hi)
        pos = F(mid) > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
        if np.all(hi - lo <= FP_TOL * np.maximum(1.0, np.abs(mid))):
            return f.t_of(0.5 * (lo + hi)), it + 1
    raise TeamSolverError("fixed point did not converge", float(np.max(hi - lo)))


def _newton(f: TeamProduction, beta: np.ndarray, tol: float = 1e-12) -> tuple[np.ndarray, int, float]:
    """Newton on ``log(beta_i d_i f(e^x)) = 0`` in log-effort with backtracking."""

    def R(x):
        with np.errstate(all="ignore"):
            return np.log(beta * f.grad(np.exp(x)[None, :])[0])

    x = np.zeros(f.n)
    r = R(x)
    h = 1e-6
    for it in range(MAX_ITER):
        res = float(np.max(np.abs(beta * f.grad(np.exp(x)[None, :])[0] - 1.0)))
        if res <= tol:
            return np.exp(x), it, res
        J = np.empty((f.n, f.n))
        for j in range(f.n):
            e = np.zeros(f.n)
            e[j] = h
            J[:, j] = (R(x + e) - R(x - e)) / (2 * h)
        step = np.linalg.solve(J, -r)
        norm = np.linalg.norm(r)
        s = 1.0
        while s > 1e-10:
            cand = R(x + s * step)
            if np.all(np.isfinite(cand)) and np.linalg.norm(cand) < norm:
                break
            s *= 0.5
        x = x + s * step
        r = R(x)
    res = float(np.max(np.abs(beta * f.grad(np.exp(x)[None, :])[0] - 1.0)))
    raise TeamSolverError("Newton did not converge", res)


def equilibrium_many(f: TeamProduction, beta, method: str = "auto") -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Actions, outputs and FOC residuals for a batch of profiles ``(m, n)``.

    Rows with a zero share on an essential family get the degenerate
    equilibrium ``a = 0`` (output 0, residual nan).
    """
    B = _profiles(f, beta)
    m = B.shape[0]
    A = np.zeros_like(B)
    out = np.zeros(m)
    res = np.full(m, np.nan)
    zero = np.any(B <= 0, axis=1)
    if zero.any() and not f.essential:
        raise TeamSolverError("zero shares are only supported on essential families")
    live = ~zero
    if live.any():
        Bl = B[live]
        if method == "newton" or (method == "auto" and not f.additive):
            Al = np.array([_newton(f, b)[0] for b in Bl])
        else:
            t, _ = _fixed_point(f, Bl)
            Al = f.action(Bl * f.dh(t)[:, None])
        A[live] = Al
        out[live] = f.f(Al)
        res[live] = foc_residual(f, Bl, Al)
    return A, out, res


def equilibrium(f: TeamProduction, beta, method: str = "auto") -> EquilibriumResult:
    B = _profiles(f, beta)
    if B.shape[0] != 1:
        raise TeamError("equilibrium takes one profile; use equilibrium_many for batches")
    b = B[0]
    if np.any(b <= 0):
        if not f.essential:
            raise TeamSolverError("zero shares are only supported on essential families")
        return EquilibriumResult(np.zeros(f.n), 0.0, math.nan, "degenerate")
    if method == "newton" or (method == "auto" and not f.additive):
        a, it, res = _newton(f, b)
        return EquilibriumResult(a, float(f.f(a[None, :])[0]), res, "newton", it)
    t, it = _fixed_point(f, B)
    A = f.action(B * f.dh(t)[:, None])
    res = float(foc_residual(f, B, A)[0])
    return EquilibriumResult(A[0], float(f.f(A)[0]), res, "fixed-point", it, float(t[0]),
                             {"g_sum": float(np.sum(f.g(A)))})


def production_of_contract(f: TeamProduction, beta) -> np.ndarray | float:
    """``f(a(beta))``; scalar for one profile, array for a batch."""
    single = np.ndim(beta) == 1
    out = equilibrium_many(f, beta)[1]
    return float(out[0]) if single else out


def principal_utility(f: TeamProduction, beta) -> np.ndarray | float:
    B = _profiles(f, beta)
    u = (1.0 - B.sum(axis=1)) * equilibrium_many(f, B)[1]
    return float(u[0]) if np.ndim(beta) == 1 else u


# --------------------------------------------------------------------------
# quasiconcavity


@dataclass
class QuasiconcavityReport:
    samples: int
    violations: int
    worst_gap: float  # min over triples of f(mid) - min(f(b), f(b'))

    @property
    def certified(self) -> bool:
        return self.violations == 0


def sample_profiles(n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform profiles on ``{beta > 0, sum(beta) <= 1}``."""
    return rng.dirichlet(np.ones(n + 1), size)[:, :n]


def quasiconcavity_check(f: TeamProduction, samples: int, rng: np.random.Generator,
                         tol: float = QC_TOL) -> QuasiconcavityReport:
    B1 = sample_profiles(f.n, samples, rng)
    B2 = sample_profiles(f.n, samples, rng)
    lam = rng.random(samples)[:, None]
    mid = lam * B1 + (1 - lam) * B2
    p1, p2, pm = (equilibrium_many(f, B)[1] for B in (B1, B2, mid))
    gap = pm - np.minimum(p1, p2)
    return QuasiconcavityReport(samples, int(np.sum(gap < -tol)), float(gap.min()))


# --------------------------------------------------------------------------
# MinContract(k) from output queries


@dataclass
class OutputOracle:
    """Counts production queries; membership is ``output >= k``."""

    f: TeamProduction
    queries: int = 0

    def __call__(self, B: np.ndarray) -> np.ndarray:
        B = np.atleast_2d(B)
        self.queries += B.shape[0]
        return equilibrium_many(self.f, B)[1]


@dataclass
class MinContractResult:
    k: float
    obj: float  # total share of the best feasible profile found; inf if unattainable
    beta: np.ndarray | None
    lower: float
    queries: int
    iterations: int

    @property
    def attainable(self) -> bool:
        return math.isfinite(self.obj)


def _ray_to_boundary(oracle: OutputOracle, x: np.ndarray, k: float, s_max: float) -> float | None:
    """Smallest ``s >= 0`` (to BOUNDARY_TOL, from above) with ``output(x + s 1) >= k``."""
    if oracle(x[None, :])[0] >= k:
        return 0.0
    lo, hi = 0.0, 1.0
    while oracle((x + hi)[None, :])[0] < k:
        lo, hi = hi, 2.0 * hi
        if hi > s_max:
            return None
    while hi - lo > BOUNDARY_TOL:
        s = np.linspace(lo, hi, SECTION_POINTS + 2)[1:-1]
        ok = oracle(x[None, :] + s[:, None]) >= k
        j = int(np.argmax(ok)) if ok.any() else SECTION_POINTS
        new_hi = s[j] if ok.any() else hi
        new_lo = s[j - 1] if j > 0 else lo
        lo, hi = new_lo, new_hi
    return hi


def _supporting_gradient(oracle: OutputOracle, b: np.ndarray) -> np.ndarray:
    """Central differences with step FD_STEP, one-sided where ``b_i < FD_STEP``."""
    n = b.size
    E = np.eye(n) * FD_STEP
    lo = np.maximum(b[None, :] - E, 0.0)
    hi = b[None, :] + E
    vals = oracle(np.vstack([lo, hi]))
    width = (hi - lo)[np.arange(n), np.arange(n)]
    return (vals[n:] - vals[:n]) / width


def min_contract(
    f: TeamProduction,
    k: float,
    eps: float = 1e-4,
    cap: float = 2.0,
    cuts: list | None = None,
    oracle: OutputOracle | None = None,
) -> MinContractResult:
    """``min sum(beta)`` s.t. ``f(a(beta)) >= k`` by outer cutting planes.

    Each round solves an LP over the accumulated supporting cuts (a lower
    bound), moves the LP point along the all-ones direction to the level-set
    boundary (a feasible point and an upper bound) and cuts there with a
    finite-difference gradient. Stops when the bracket is at most ``eps``.
    Cuts stay valid for larger ``k``, so a sweep may pass the same list.
    """
    oracle = oracle or OutputOracle(f)
    q0 = oracle.queries
    n = f.n
    if k <= 0:
        return MinContractResult(k, 0.0, np.zeros(n), 0.0, 0, 0)
    cuts = [] if cuts is None else cuts
    best, best_b, lower = math.inf, None, 0.0
    for it in range(1, MAX_CUTS + 1):
        lp = LinearProgram([1.0] * n, "min", bounds=[(0.0, cap)] * n)
        for g, rhs in cuts:
            lp.add(list(g), ">=", rhs)
        sol = solve_lp(lp)
        if not sol.optimal:
            lower = math.inf
            break
        lower = max(lower, sol.value)
        if lower > cap:
            break
        x = np.maximum(sol.x, 0.0)
        s = _ray_to_boundary(oracle, x, k, s_max=1e3 * max(cap, 1.0))
        if s is None:
            lower = math.inf
            break
        b = x + s
        if b.sum() < best:
            best, best_b = float(b.sum()), b
        if best - lower <= eps:
            break
        g = _supporting_gradient(oracle, b)
        if not np.all(np.isfinite(g)) or np.all(g <= 0):
            raise TeamSolverError("degenerate supporting hyperplane")
        cuts.append((g, float(g @ b)))
    if best > cap or not math.isfinite(lower):
        return MinContractResult(k, math.inf, None, lower, oracle.queries - q0, it)
    return MinContractResult(k, best, best_b, lower, oracle.queries - q0, it)


def min_contract_grid(f: TeamProduction, k: float, cap: float = 2.0, steps: int = 401, rounds: int = 3):
    """Exhaustive oracle for ``n <= 3``: grid the first ``n - 1`` shares, bisect the last.

    Each round refines a grid of ``steps`` points per axis around the best
    profile of the previous round. Returns ``(obj, beta)``.
    """
    n = f.n
    if n > 3:
        raise TeamError("grid oracle is limited to n <= 3")
    if k <= 0:
        return 0.0, np.zeros(n)
    per_axis = steps if n <= 2 else int(round(steps ** 0.5))
    lo_box, hi_box = np.zeros(n - 1), np.full(n - 1, cap)
    best, best_b = math.inf, None
    for _ in range(rounds):
        axes = [np.linspace(l, h, per_axis) for l, h in zip(lo_box, hi_box)]
        P = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, n - 1) if n > 1 else np.zeros((1, 0))
        lo, hi = np.zeros(len(P)), np.full(len(P), cap)
        ok = equilibrium_many(f, np.column_stack([P, hi]))[1] >= k
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            feas = equilibrium_many(f, np.column_stack([P, mid]))[1] >= k
            hi = np.where(feas, mid, hi)
            lo = np.where(feas, lo, mid)
        tot = np.where(ok, P.sum(axis=1) + hi, np.inf)
        j = int(np.argmin(tot))
        if tot[j] < best:
            best, best_b = float(tot[j]), np.append(P[j], hi[j])
        if not math.isfinite(best) or n == 1:
            break
        width = (hi_box - lo_box) / (per_axis - 1)
        lo_box = np.maximum(best_b[:-1] - 2 * width, 0.0)
        hi_box = np.minimum(best_b[:-1] + 2 * width, cap)
    return best, best_b


# --------------------------------------------------------------------------
# sweep over production levels


@dataclass
class SweepRow:
    k: float
    obj: float
    utility: float
    queries: int


@dataclass
class TeamContractResult:
    beta: np.ndarray
    utility: float  # (1 - Obj(k)) k at the chosen level
    realized: float  # principal utility of the returned profile
    k: float
    rows: list[SweepRow]
    queries: int

    def to_csv(self) -> str:
        lines = ["k,obj,utility,queries"]
        lines += [f"{r.k!r},{r.obj!r},{r.utility!r},{r.queries}" for r in self.rows]
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict[str, Any]:
        return {
            "beta": [float(x) for x in self.beta], "utility": self.utility, "realized": self.realized,
            "k": self.k, "queries": self.queries, "levels": len(self.rows),
        }


def k_upper_bound(f: TeamProduction) -> float:
    """Output at the all-ones profile bounds output on the share simplex (monotonicity)."""
    return float(production_of_contract(f, np.ones(f.n)))


def k_max(f: TeamProduction, tol: float = 1e-6, eps: float = 1e-6) -> float:
    """``max_{beta in simplex} f(a(beta))`` by bisection on ``k`` with ``Obj(k) <= 1``."""
    lo, hi = 0.0, k_upper_bound(f)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if min_contract(f, mid, eps).obj <= 1.0:
            lo = mid
        else:
            hi = mid
    return lo


def find_optimal_team_contract(f: TeamProduction, eps: float, tol: float | None = None,
                               cap: float = 2.0) -> TeamContractResult:
    """Sweep ``k = 0, eps, 2 eps, ...`` until ``Obj(k) >= 1``; keep the best ``(1 - Obj(k)) k``."""
    if eps <= 0:
        raise TeamError("eps must be positive")
    tol = eps / 10.0 if tol is None else tol
    oracle = OutputOracle(f)
    cuts: list = []
    rows: list[SweepRow] = []
    best_u, best_beta, best_k = 0.0, np.zeros(f.n), 0.0
    steps = int(math.ceil(k_upper_bound(f) / eps)) + 2
    for j in range(steps):
        k = j * eps
        r = min_contract(f, k, tol, cap, cuts, oracle)
        u = (1.0 - r.obj) * k if r.attainable else -math.inf
        rows.append(SweepRow(k, r.obj, u, r.queries))
        if r.attainable and u >= best_u:
            best_u, best_beta, best_k = u, r.beta, k
        if r.obj >= 1.0:
            break
    realized = float(principal_utility(f, best_beta))
    return TeamContractResult(best_beta, best_u, realized, best_k, rows, oracle.queries)
