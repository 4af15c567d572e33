"""Single-agent principal-agent environment.

An environment is an :class:`AgentType`: an outcome grid, a production
technology (complementary CDFs ``G_j(a)``), a convex cost and an effort cap.
Everything here is an immutable value; randomness only enters through an
explicit ``numpy.random.Generator``.

Outcome indices are 0-based throughout (``levels[0] == 0``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, ClassVar

import numpy as np
from scipy.interpolate import PchipInterpolator

BR_TOL = 1e-9
LINEAR_BR_TOL = 1e-10
MAX_ITER = 200
GRID_POINTS = 10_000
SWEEP_POINTS = 2001
MIN_TABULATED_KNOTS = 5

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class EnvironmentError_(ValueError):
    """Base class for invalid environment inputs."""


class EffortDomainError(EnvironmentError_):
    pass


class ContractError(EnvironmentError_):
    pass


class ValidationInconclusiveError(EnvironmentError_):
    """Raised when a tabulated family is too coarse for a derivative sweep."""


# --------------------------------------------------------------------------
# outcomes and contracts


@dataclass(frozen=True)
class OutcomeGrid:
    levels: tuple[float, ...]

    def __post_init__(self):
        lv = tuple(float(x) for x in self.levels)
        object.__setattr__(self, "levels", lv)
        if len(lv) < 2:
            raise EnvironmentError_("need at least two outcome levels")
        if lv[0] != 0.0:
            raise EnvironmentError_("lowest outcome level must be 0")
        if any(b <= a for a, b in zip(lv, lv[1:])):
            raise EnvironmentError_("outcome levels must be strictly increasing")
        if lv[-1] > 1.0:
            raise EnvironmentError_("outcome levels must not exceed 1")

    @property
    def m(self) -> int:
        return len(self.levels)

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.levels)


@dataclass(frozen=True)
class Contract:
    """Payment vector over outcome levels (limited liability enforced)."""

    payments: tuple[float, ...]
    require_monotone: bool = False
    require_bounded: bool = False

    def __post_init__(self):
        p = tuple(float(x) for x in self.payments)
        object.__setattr__(self, "payments", p)
        if any(x < 0 for x in p):
            raise ContractError("payments must be nonnegative (limited liability)")
        if self.require_monotone and not self.is_monotone:
            raise ContractError("contract is not monotone")
        if self.require_bounded and not self.is_bounded:
            raise ContractError("contract payments exceed 1")

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.payments)

    @property
    def increments(self) -> np.ndarray:
        """``Δs_j = s_j - s_{j-1}`` with ``s_{-1} = 0``."""
        return np.diff(self.values, prepend=0.0)

    @property
    def is_monotone(self) -> bool:
        return all(b >= a - 1e-12 for a, b in zip(self.payments, self.payments[1:]))

    @property
    def is_bounded(self) -> bool:
        return all(x <= 1.0 + 1e-12 for x in self.payments)

    @classmethod
    def linear(cls, beta: float, outcomes: OutcomeGrid) -> "Contract":
        return cls(tuple(beta * outcomes.values))


@dataclass(frozen=True)
class LinearContract:
    beta: float

    def __post_init__(self):
        if self.beta < 0:
            raise ContractError("linear share must be nonnegative")

    def to_contract(self, outcomes: OutcomeGrid) -> Contract:
        return Contract.linear(self.beta, outcomes)


def _as_contract(s) -> Contract:
    if isinstance(s, Contract):
        return s
    return Contract(tuple(s))


# --------------------------------------------------------------------------
# production technologies


class ProductionTechnology:
    """Complementary CDFs ``G_j(a)`` over ``m`` outcome levels.

    Subclasses implement ``_G``, ``_dG`` and ``_d2G`` returning arrays of
    shape ``a.shape + (m,)``; column 0 is identically 1.
    """

    family: ClassVar[str]
    m: int

    def G(self, a) -> np.ndarray:
        return self._G(np.asarray(a, dtype=float))

    def dG(self, a) -> np.ndarray:
        return self._dG(np.asarray(a, dtype=float))

    def d2G(self, a) -> np.ndarray:
        return self._d2G(np.asarray(a, dtype=float))

    def pmf(self, a) -> np.ndarray:
        G = self.G(a)
        tail = np.zeros(G.shape[:-1] + (1,))
        return G - np.concatenate([G[..., 1:], tail], axis=-1)

    def lipschitz_bound(self, E: float) -> float:
        a = np.linspace(0.0, E, SWEEP_POINTS)
        return float(np.max(np.abs(self.dG(a))))

    def curvature_sup(self, E: float) -> float:
        a = np.linspace(0.0, E, SWEEP_POINTS)
        return float(np.max(self.d2G(a)))

    def params(self) -> dict[str, Any]:
        raise NotImplementedError


@dataclass(frozen=True)
class BernoulliEffort(ProductionTechnology):
    """Binary outcome with success probability ``floor + (1 - floor) * a / scale``."""

    scale: float = 1.0
    floor: float = 0.0
    family: ClassVar[str] = "bernoulli-effort"

    m = 2

    def __post_init__(self):
        if self.scale <= 0 or not (0.0 <= self.floor < 1.0):
            raise EnvironmentError_("need scale > 0 and 0 <= floor < 1")

    @property
    def slope(self) -> float:
        return (1.0 - self.floor) / self.scale

    def _G(self, a):
        x = self.floor + self.slope * a
        return np.stack([np.ones_like(x), x], axis=-1)

    def _dG(self, a):
        return np.stack([np.zeros_like(a), np.full_like(a, self.slope)], axis=-1)

    def _d2G(self, a):
        return np.zeros(a.shape + (2,))

    def lipschitz_bound(self, E):
        return self.slope

    def curvature_sup(self, E):
        return 0.0

    def params(self):
        return {"scale": self.scale, "floor": self.floor}


@dataclass(frozen=True)
class SmoothParametric(ProductionTechnology):
    """``G_j(a) = 1 - (1 - a/scale)^{q_j}`` for levels ``j >= 1``.

    ``exponents`` holds ``q_1..q_{m-1}`` (level 0 is implicit); they must be
    at least 1 and nonincreasing so that ``G`` is nonincreasing in ``j``.
    """

    exponents: tuple[float, ...]
    scale: float = 1.0
    family: ClassVar[str] = "smooth-parametric"

    def __post_init__(self):
        q = tuple(float(x) for x in self.exponents)
        object.__setattr__(self, "exponents", q)
        if not q or any(x < 1.0 for x in q):
            raise EnvironmentError_("exponents must be >= 1")
        if any(b > a for a, b in zip(q, q[1:])):
            raise EnvironmentError_("exponents must be nonincreasing across levels")

    @property
    def m(self) -> int:
        return len(self.exponents) + 1

    def _base(self, a):
        return np.clip(1.0 - a[..., None] / self.scale, 0.0, 1.0)

    def _G(self, a):
        q = np.asarray(self.exponents)
        G = 1.0 - self._base(a) ** q
        return np.concatenate([np.ones(a.shape + (1,)), G], axis=-1)

    def _dG(self, a):
        q = np.asarray(self.exponents)
        d = (q / self.scale) * self._base(a) ** (q - 1.0)
        return np.concatenate([np.zeros(a.shape + (1,)), d], axis=-1)

    def _d2G(self, a):
        q = np.asarray(self.exponents)
        b = self._base(a)
        with np.errstate(divide="ignore"):
            pw = np.where(q == 1.0, 0.0, np.where(q == 2.0, 1.0, b ** (q - 2.0)))
        d2 = -(q * (q - 1.0) / self.scale**2) * pw
        return np.concatenate([np.zeros(a.shape + (1,)), d2], axis=-1)

    def lipschitz_bound(self, E):
        return max(self.exponents) / self.scale

    def curvature_sup(self, E):
        # sup over a in [0, E] of -q(q-1)/scale^2 * (1 - a/scale)^{q-2}
        x_hi = min(E / self.scale, 1.0)
        sups = []
        for q in self.exponents:
            if q == 1.0:
                sups.append(0.0)
            elif q < 2.0:
                sups.append(-q * (q - 1.0) / self.scale**2)
            elif q == 2.0:
                sups.append(-2.0 / self.scale**2)
            else:
                sups.append(-q * (q - 1.0) / self.scale**2 * (1.0 - x_hi) ** (q - 2.0))
        return float(max(sups))

    def params(self):
        return {"exponents": list(self.exponents), "scale": self.scale}


@dataclass(frozen=True)
class TabulatedTechnology(ProductionTechnology):
    """Monotone cubic interpolation of tabulated ``G_j`` values.

    ``values[k][j-1]`` is ``G_j(efforts[k])`` for levels ``j >= 1``.
    """

    efforts: tuple[float, ...]
    values: tuple[tuple[float, ...], ...]
    family: ClassVar[str] = "tabulated"

    def __post_init__(self):
        e = tuple(float(x) for x in self.efforts)
        v = tuple(tuple(float(x) for x in row) for row in self.values)
        object.__setattr__(self, "efforts", e)
        object.__setattr__(self, "values", v)
        if len(e) != len(v) or len(e) < 2:
            raise EnvironmentError_("efforts and values must align (>= 2 knots)")
        if any(b <= a for a, b in zip(e, e[1:])):
            raise EnvironmentError_("effort knots must be strictly increasing")
        arr = np.asarray(v)
        if arr.ndim != 2 or np.any(arr < 0) or np.any(arr > 1):
            raise EnvironmentError_("tabulated G values must lie in [0, 1]")
        if np.any(np.diff(arr, axis=1) > 0):
            raise EnvironmentError_("G must be nonincreasing across levels")
        if np.any(np.diff(arr, axis=0) < 0):
            raise EnvironmentError_("G must be nondecreasing in effort")

    @property
    def m(self) -> int:
        return len(self.values[0]) + 1

    @cached_property
    def _interp(self):
        return PchipInterpolator(np.asarray(self.efforts), np.asarray(self.values), axis=0)

    def _eval(self, a, nu):
        x = np.clip(a, self.efforts[0], self.efforts[-1])
        out = self._interp(x, nu)
        lead = np.ones(a.shape + (1,)) if nu == 0 else np.zeros(a.shape + (1,))
        return np.concatenate([lead, out], axis=-1)

    def _G(self, a):
        G = self._eval(a, 0)
        # pchip preserves monotonicity per level but not the ordering across levels
        return np.minimum.accumulate(np.clip(G, 0.0, 1.0), axis=-1)

    def _dG(self, a):
        return self._eval(a, 1)

    def _d2G(self, a):
        return self._eval(a, 2)

    def params(self):
        return {"efforts": list(self.efforts), "values": [list(r) for r in self.values]}


# --------------------------------------------------------------------------
# costs


class CostFunction:
    family: ClassVar[str]

    def __call__(self, a):
        raise NotImplementedError

    def d1(self, a):
        raise NotImplementedError

    def d2(self, a):
        raise NotImplementedError

    def curvature_inf(self, E: float) -> float:
        a = np.linspace(0.0, E, SWEEP_POINTS)
        return float(np.min(self.d2(a)))

    def params(self) -> dict[str, Any]:
        raise NotImplementedError


@dataclass(frozen=True)
class QuadraticCost(CostFunction):
    """``c(a) = lam0 * a**2 / 2``."""

    lam0: float
    family: ClassVar[str] = "quadratic"

    def __post_init__(self):
        if self.lam0 < 0:
            raise EnvironmentError_("lam0 must be nonnegative")

    def __call__(self, a):
        return 0.5 * self.lam0 * np.asarray(a, dtype=float) ** 2

    def d1(self, a):
        return self.lam0 * np.asarray(a, dtype=float)

    def d2(self, a):
        return np.full_like(np.asarray(a, dtype=float), self.lam0)

    def curvature_inf(self, E):
        return self.lam0

    def params(self):
        return {"lam0": self.lam0}


@dataclass(frozen=True)
class PowerCost(CostFunction):
    """``c(a) = coef * a**power`` with ``power >= 1``."""

    coef: float
    power: float
    family: ClassVar[str] = "power"

    def __post_init__(self):
        if self.coef <= 0 or self.power < 1:
            raise EnvironmentError_("power cost needs coef > 0 and power >= 1")

    def __call__(self, a):
        return self.coef * np.asarray(a, dtype=float) ** self.power

    def d1(self, a):
        a = np.asarray(a, dtype=float)
        if self.power == 1.0:
            return np.full_like(a, self.coef)
        return self.coef * self.power * a ** (self.power - 1.0)

    def d2(self, a):
        a = np.asarray(a, dtype=float)
        p = self.power
        if p == 1.0:
            return np.zeros_like(a)
        if p == 2.0:
            return np.full_like(a, 2.0 * self.coef)
        with np.errstate(divide="ignore"):
            return self.coef * p * (p - 1.0) * a ** (p - 2.0)

    def curvature_inf(self, E):
        p = self.power
        if p == 1.0 or p > 2.0:
            return 0.0
        if p == 2.0:
            return 2.0 * self.coef
        return self.coef * p * (p - 1.0) * E ** (p - 2.0)

    def params(self):
        return {"coef": self.coef, "power": self.power}


@dataclass(frozen=True)
class TabulatedConvexCost(CostFunction):
    """Convex cost from tabulated nondecreasing marginal costs.

    The marginal cost is interpolated with a monotone cubic, so ``c'`` stays
    nondecreasing and ``c`` convex; ``c`` is its antiderivative with c(0)=0.
    """

    efforts: tuple[float, ...]
    marginals: tuple[float, ...]
    family: ClassVar[str] = "tabulated-convex"

    def __post_init__(self):
        e = tuple(float(x) for x in self.efforts)
        mc = tuple(float(x) for x in self.marginals)
        object.__setattr__(self, "efforts", e)
        object.__setattr__(self, "marginals", mc)
        if len(e) != len(mc) or len(e) < 2 or e[0] != 0.0:
            raise EnvironmentError_("marginal-cost table must start at effort 0")
        if any(b <= a for a, b in zip(e, e[1:])):
            raise EnvironmentError_("effort knots must be strictly increasing")
        if mc[0] < 0 or any(b < a for a, b in zip(mc, mc[1:])):
            raise EnvironmentError_("marginal costs must be nonnegative and nondecreasing")

    @cached_property
    def _mc(self):
        return PchipInterpolator(np.asarray(self.efforts), np.asarray(self.marginals))

    @cached_property
    def _c(self):
        return self._mc.antiderivative()

    def _x(self, a):
        return np.clip(np.asarray(a, dtype=float), 0.0, self.efforts[-1])

    def __call__(self, a):
        return self._c(self._x(a)) - self._c(0.0)

    def d1(self, a):
        return self._mc(self._x(a))

    def d2(self, a):
        return self._mc(self._x(a), 1)

    def params(self):
        return {"efforts": list(self.efforts), "marginals": list(self.marginals)}


TECHNOLOGIES: dict[str, type] = {
    BernoulliEffort.family: BernoulliEffort,
    SmoothParametric.family: SmoothParametric,
    TabulatedTechnology.family: TabulatedTechnology,
}

COSTS: dict[str, type] = {
    QuadraticCost.family: QuadraticCost,
    PowerCost.family: PowerCost,
    TabulatedConvexCost.family: TabulatedConvexCost,
}


def register_cost_family(cls: type) -> type:
    """Make an extra cost family available to JSON deserialization."""
    COSTS[cls.family] = cls
    return cls


def _tuplify(v):
    if isinstance(v, list):
        return tuple(_tuplify(x) for x in v)
    return v


# --------------------------------------------------------------------------
# agent type


@dataclass(frozen=True)
class AgentType:
    outcomes: OutcomeGrid
    tech: ProductionTechnology
    cost: CostFunction
    effort_cap: float
    beta_max: float

    def __post_init__(self):
        if self.effort_cap <= 0:
            raise EnvironmentError_("effort cap must be positive")
        if self.tech.m != self.outcomes.m:
            raise EnvironmentError_("technology and outcome grid disagree on m")
        if self.beta_max < 0:
            raise EnvironmentError_("beta_max must be nonnegative")
        need = self.saturation_share()
        if math.isfinite(need) and self.beta_max < need - 1e-9:
            raise EnvironmentError_(
                f"beta_max={self.beta_max} cannot implement the effort cap (needs {need})"
            )

    @property
    def E(self) -> float:
        return self.effort_cap

    @property
    def m(self) -> int:
        return self.outcomes.m

    def check_effort(self, a: float) -> float:
        if not (-1e-12 <= a <= self.effort_cap + 1e-12):
            raise EffortDomainError(f"effort {a} outside [0, {self.effort_cap}]")
        return min(max(float(a), 0.0), self.effort_cap)

    # expected output and its slope
    def r(self, a):
        return self.tech.pmf(a) @ self.outcomes.values

    def r_prime(self, a):
        dpi = np.diff(self.outcomes.values, prepend=0.0)
        return self.tech.dG(a) @ dpi

    def saturation_share(self) -> float:
        """``c'(E)/r'(E)``: the smallest linear share implementing the cap."""
        rp = float(self.r_prime(self.effort_cap))
        if rp <= 0:
            return math.inf
        return float(self.cost.d1(self.effort_cap)) / rp

    @cached_property
    def assumptions(self) -> "AssumptionReport":
        return validate_assumptions(self)

    # serialization
    def to_dict(self) -> dict[str, Any]:
        return {
            "outcome_levels": list(self.outcomes.levels),
            "family": self.tech.family,
            "family_params": self.tech.params(),
            "cost_family": self.cost.family,
            "cost_params": self.cost.params(),
            "effort_cap": self.effort_cap,
            "beta_max": self.beta_max,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AgentType":
        try:
            tech_cls = TECHNOLOGIES[d["family"]]
            cost_cls = COSTS[d["cost_family"]]
        except KeyError as exc:
            raise EnvironmentError_(f"unknown family {exc}") from None
        tech = tech_cls(**{k: _tuplify(v) for k, v in d.get("family_params", {}).items()})
        cost = cost_cls(**{k: _tuplify(v) for k, v in d.get("cost_params", {}).items()})
        return cls(
            outcomes=OutcomeGrid(tuple(d["outcome_levels"])),
            tech=tech,
            cost=cost,
            effort_cap=float(d["effort_cap"]),
            beta_max=float(d["beta_max"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "AgentType":
        return cls.from_dict(json.loads(text))


def bernoulli_quadratic(lam0: float = 2.0, E: float = 1.0, beta_max: float | None = None) -> AgentType:
    """Binary outcome ``(0, 1)``, success probability ``a/E``, ``c = lam0 a^2 / 2``.

    With the defaults this is the ``c(a) = a^2`` desk instance.
    """
    tech = BernoulliEffort(scale=E)
    cost = QuadraticCost(lam0)
    if beta_max is None:
        beta_max = lam0 * E * E
    return AgentType(OutcomeGrid((0.0, 1.0)), tech, cost, E, beta_max)


def smooth_quadratic(
    levels: tuple[float, ...], exponents: tuple[float, ...], lam0: float, E: float = 1.0
) -> AgentType:
    """Smooth-parametric technology with quadratic cost; ``beta_max`` is derived."""
    outcomes = OutcomeGrid(levels)
    tech = SmoothParametric(exponents, scale=E)
    cost = QuadraticCost(lam0)
    dpi = np.diff(outcomes.values, prepend=0.0)
    rp = float(tech.dG(E) @ dpi)
    beta_max = lam0 * E / rp if rp > 0 else lam0 * E * 10.0
    return AgentType(outcomes, tech, cost, E, beta_max)


# --------------------------------------------------------------------------
# utilities


def agent_utility(agent: AgentType, s, a: float) -> float:
    a = agent.check_effort(a)
    s = _as_contract(s)
    return float(agent.tech.pmf(a) @ s.values - agent.cost(a))


def agent_utility_abel(agent: AgentType, s, a: float) -> float:
    """Same quantity through ``sum_j Δs_j G_j(a) - c(a)``."""
    a = agent.check_effort(a)
    s = _as_contract(s)
    return float(agent.tech.G(a) @ s.increments - agent.cost(a))


def principal_utility(agent: AgentType, s, a: float) -> float:
    a = agent.check_effort(a)
    s = _as_contract(s)
    return float(agent.tech.pmf(a) @ (agent.outcomes.values - s.values))


def _agent_curve(agent: AgentType, s: Contract, a: np.ndarray) -> np.ndarray:
    return agent.tech.pmf(a) @ s.values - agent.cost(a)


def _golden_max(fun, lo: float, hi: float, tol: float = BR_TOL) -> float:
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(MAX_ITER):
        if b - a <= tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)


def best_response(agent: AgentType, s, method: str = "auto") -> float:
    """Agent's utility-maximizing effort under contract ``s``.

    ``method="concave"`` bisects the marginal utility, which is certified when
    ``s`` is monotone and the type satisfies SDFC (strictly concave utility). ``method="grid"`` is the
    non-certified dense-grid fallback. ``"auto"`` picks between them.
    """
    s = _as_contract(s)
    if len(s.payments) != agent.m:
        raise ContractError("contract length does not match outcome grid")
    if method == "auto":
        method = "concave" if (s.is_monotone and agent.assumptions.sdfc_holds) else "grid"
    E = agent.effort_cap

    def u(a):
        return float(_agent_curve(agent, s, np.asarray(a)))

    if method == "concave":
        if not s.is_monotone:
            raise ContractError("concave best response requires a monotone contract")
        # marginal utility is decreasing under SDFC; golden section on u itself
        # stalls near 1e-8 because u is flat at the optimum
        ds = s.increments

        def slope(a):
            return float(agent.tech.dG(a) @ ds - agent.cost.d1(a))

        if slope(0.0) <= 0.0:
            return 0.0
        if slope(E) >= 0.0:
            return E
        lo, hi = 0.0, E
        for _ in range(MAX_ITER):
            if hi - lo <= 1e-3 * BR_TOL:
                break
            mid = 0.5 * (lo + hi)
            if slope(mid) > 0.0:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)
    elif method == "grid":
        grid = np.linspace(0.0, E, GRID_POINTS)
        vals = _agent_curve(agent, s, grid)
        k = int(np.argmax(vals))
        lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, GRID_POINTS - 1)]
        candidates = [0.0, E, float(grid[k]), _golden_max(u, lo, hi)]
    else:
        raise ValueError(f"unknown method {method!r}")
    vals = [u(c) for c in candidates]
    return float(candidates[int(np.argmax(vals))])


def best_response_linear(agent: AgentType, lc) -> float:
    """Best response to a linear share by the ``c'(a)/r'(a) = beta`` case analysis."""
    beta = lc.beta if isinstance(lc, LinearContract) else float(lc)
    if beta < 0:
        raise ContractError("linear share must be nonnegative")
    E = agent.effort_cap

    def ratio(a: float) -> float:
        rp = float(agent.r_prime(a))
        if rp <= 0:
            return math.inf
        return float(agent.cost.d1(a)) / rp

    if beta <= ratio(0.0):
        return 0.0
    if beta >= ratio(E):
        return E
    lo, hi = 0.0, E
    for _ in range(MAX_ITER):
        if hi - lo <= LINEAR_BR_TOL:
            break
        mid = 0.5 * (lo + hi)
        if ratio(mid) < beta:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def best_response_linear_many(agent: AgentType, betas) -> np.ndarray:
    """Vectorized :func:`best_response_linear` over an array of shares."""
    betas = np.asarray(betas, dtype=float)
    if np.any(betas < 0):
        raise ContractError("linear share must be nonnegative")
    E = agent.effort_cap

    def ratio(a):
        rp = np.asarray(agent.r_prime(a), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(rp > 0, agent.cost.d1(a) / np.where(rp > 0, rp, 1.0), np.inf)

    lo = np.zeros_like(betas)
    hi = np.full_like(betas, E)
    for _ in range(MAX_ITER):
        if np.all(hi - lo <= LINEAR_BR_TOL):
            break
        mid = 0.5 * (lo + hi)
        below = ratio(mid) < betas
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    out = 0.5 * (lo + hi)
    out[betas <= float(ratio(np.array(0.0)))] = 0.0
    out[betas >= float(ratio(np.array(E)))] = E
    return out


def sample_outcome(agent: AgentType, a: float, rng: np.random.Generator, size=None):
    """Draw outcome indices with probabilities ``f_j(a)``."""
    a = agent.check_effort(a)
    p = np.clip(agent.tech.pmf(a), 0.0, None)
    cdf = np.cumsum(p / p.sum())
    cdf[-1] = 1.0
    u = rng.random(size)
    idx = np.searchsorted(cdf, u, side="right")
    if size is None:
        return int(idx)
    return idx


# --------------------------------------------------------------------------
# assumption validation


@dataclass(frozen=True)
class AssumptionReport:
    L: float
    mu: float
    lam: float
    sdfc_holds: bool
    lipschitz_utility_bound: float
    notes: tuple[str, ...] = field(default=())

    def require_sdfc(self) -> "AssumptionReport":
        if not self.sdfc_holds:
            raise EnvironmentError_(
                f"SDFC fails: sup G'' = {self.mu} is not below inf c'' = {self.lam}"
            )
        return self


def lipschitz_utility_bound(L: float, mu: float, lam: float) -> float:
    if lam <= mu:
        raise EnvironmentError_("Lipschitz bound needs lambda > mu")
    return 4.0 * L * L / (lam - mu) + 2.0


def validate_assumptions(agent: AgentType) -> AssumptionReport:
    """Compute ``L``, ``mu``, ``lambda`` and whether SDFC holds.

    Built-in families report analytic constants; tabulated ones are swept on
    a dense grid, which requires enough knots to be meaningful.
    """
    E = agent.effort_cap
    notes = []
    for part in (agent.tech, agent.cost):
        if isinstance(part, (TabulatedTechnology, TabulatedConvexCost)):
            if len(part.efforts) < MIN_TABULATED_KNOTS:
                raise ValidationInconclusiveError(
                    f"{part.family} needs at least {MIN_TABULATED_KNOTS} knots for a sweep"
                )
            notes.append(f"{part.family}: constants from a {SWEEP_POINTS}-point sweep")
    L = agent.tech.lipschitz_bound(E)
    mu = agent.tech.curvature_sup(E)
    lam = agent.cost.curvature_inf(E)
    holds = bool(mu < lam)
    bound = lipschitz_utility_bound(L, mu, lam) if holds else math.inf
    return AssumptionReport(L, mu, lam, holds, bound, tuple(notes))
