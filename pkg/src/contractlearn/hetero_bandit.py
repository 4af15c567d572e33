"""Contracts as arms of a Lipschitz bandit, for agents of varying type.

Under SDFC the principal's expected utility is Lipschitz in the contract
(in the l1 metric on payment vectors), so any Lipschitz-bandit algorithm
applies. Two are provided: zooming for i.i.d. types and exponential
weights over a fixed grid for adversarially chosen types.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .env_core import (
    AgentType,
    BernoulliEffort,
    Contract,
    EnvironmentError_,
    LinearContract,
    OutcomeGrid,
    QuadraticCost,
    best_response,
    best_response_linear,
    best_response_linear_many,
    principal_utility,
)

ZOOM_CONST = 8.0
BENCHMARK_POINTS = 2001
MAX_GRID_DIM = 3
MIN_GRID_STEP = 0.05


class UncertifiedSpaceError(EnvironmentError_):
    """The contract space has no finite Lipschitz certificate."""


@dataclass(frozen=True)
class TypeDistribution:
    support: tuple[AgentType, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        sup = tuple(self.support)
        w = tuple(float(x) for x in self.weights)
        object.__setattr__(self, "support", sup)
        object.__setattr__(self, "weights", w)
        if not sup or len(sup) != len(w):
            raise EnvironmentError_("support and weights must be nonempty and aligned")
        if min(w) < 0 or abs(sum(w) - 1.0) > 1e-9:
            raise EnvironmentError_("weights must be a probability vector")
        if len({t.outcomes for t in sup}) != 1:
            raise EnvironmentError_("all types must share one outcome grid")

    @classmethod
    def single(cls, agent: AgentType) -> "TypeDistribution":
        return cls((agent,), (1.0,))

    @property
    def outcomes(self) -> OutcomeGrid:
        return self.support[0].outcomes

    def certified(self) -> bool:
        return all(t.assumptions.sdfc_holds for t in self.support)

    def lipschitz(self) -> float:
        return max(t.assumptions.lipschitz_utility_bound for t in self.support)

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.choice(len(self.support), size=size, p=np.asarray(self.weights))


@dataclass(frozen=True)
class ArrivalProcess:
    mode: str
    dist: TypeDistribution | None = None
    sequence: tuple[AgentType, ...] | None = None

    def __post_init__(self):
        if self.mode == "stochastic":
            if self.dist is None:
                raise EnvironmentError_("stochastic arrivals need a type distribution")
        elif self.mode == "adversarial":
            if not self.sequence:
                raise EnvironmentError_("adversarial arrivals need an explicit type sequence")
            object.__setattr__(self, "sequence", tuple(self.sequence))
        else:
            raise EnvironmentError_(f"unknown arrival mode {self.mode!r}")

    @classmethod
    def stochastic(cls, dist: TypeDistribution) -> "ArrivalProcess":
        return cls("stochastic", dist=dist)

    @classmethod
    def adversarial(cls, sequence: Sequence[AgentType]) -> "ArrivalProcess":
        return cls("adversarial", sequence=tuple(sequence))

    def types(self) -> tuple[AgentType, ...]:
        if self.mode == "stochastic":
            return self.dist.support
        # distinct types in order of first appearance
        seen: dict[AgentType, None] = {}
        for t in self.sequence:
            seen.setdefault(t, None)
        return tuple(seen)


@dataclass(frozen=True)
class ContractSpace:
    """Arms: linear shares in ``[0, beta_max]`` or a monotone payment grid.

    ``lipschitz`` is with respect to the l1 distance between payment
    vectors; for linear shares that distance is ``|Δβ| * sum(levels)``.
    """

    kind: str
    outcomes: OutcomeGrid
    lipschitz: float
    beta_max: float = 1.0
    h: float = 0.05

    def __post_init__(self):
        if self.kind not in ("linear-interval", "monotone-grid"):
            raise EnvironmentError_(f"unknown contract space {self.kind!r}")
        if self.h <= 0:
            raise EnvironmentError_("grid step must be positive")
        if not math.isfinite(self.lipschitz):
            raise UncertifiedSpaceError(
                "no finite Lipschitz constant: some type fails the SDFC check in validate_assumptions"
            )
        if self.kind == "monotone-grid":
            if self.outcomes.m > MAX_GRID_DIM or self.h < MIN_GRID_STEP:
                raise EnvironmentError_(
                    f"monotone grids are limited to m <= {MAX_GRID_DIM} and h >= {MIN_GRID_STEP}"
                )

    @classmethod
    def for_types(cls, types: Sequence[AgentType], kind: str = "linear-interval", beta_max: float = 1.0, h: float = 0.05):
        types = list(types)
        reps = [t.assumptions for t in types]
        lip = math.inf if not all(r.sdfc_holds for r in reps) else max(r.lipschitz_utility_bound for r in reps)
        return cls(kind, types[0].outcomes, lip, beta_max, h)

    @property
    def metric_scale(self) -> float:
        """l1 length of a unit change in the share (linear space only)."""
        return float(sum(self.outcomes.levels))

    def contract(self, arm) -> Contract:
        if self.kind == "linear-interval":
            return Contract.linear(float(arm), self.outcomes)
        return Contract(tuple(float(x) for x in arm))

    def grid(self) -> np.ndarray:
        """Finite arm set at step ``h``: shares, or monotone vectors in [0, 1]^m."""
        if self.kind == "linear-interval":
            n = int(math.floor(self.beta_max / self.h + 1e-9))
            return np.arange(n + 1) * self.h
        n = int(round(1.0 / self.h))
        levels = np.arange(n + 1) * self.h
        pts = [c for c in itertools.combinations_with_replacement(range(n + 1), self.outcomes.m)]
        return levels[np.asarray(pts)]

    def distance(self, x, Y) -> np.ndarray:
        if self.kind == "linear-interval":
            return np.abs(np.asarray(Y, float) - float(x)) * self.metric_scale
        return np.abs(np.asarray(Y, float) - np.asarray(x, float)).sum(axis=-1)


@dataclass
class RegretTrace:
    arms: list  # arm parameters, indexed by arm_id
    arm_id: np.ndarray
    realized: np.ndarray
    expected: np.ndarray
    cum_regret: np.ndarray
    benchmark: float
    benchmark_method: str
    meta: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return len(self.arm_id)

    @property
    def regret(self) -> float:
        return float(self.cum_regret[-1]) if self.T else 0.0

    def contract_repr(self, k: int) -> str:
        arm = self.arms[k]
        if np.ndim(arm) == 0:
            return f"beta={float(arm)!r}"
        return "(" + ";".join(repr(float(x)) for x in arm) + ")"

    def most_played(self) -> int:
        return int(np.bincount(self.arm_id, minlength=len(self.arms)).argmax())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["round", "arm_id", "contract_repr", "realized_utility", "cum_regret"])
        for t in range(self.T):
            k = int(self.arm_id[t])
            w.writerow([t + 1, k, self.contract_repr(k), repr(float(self.realized[t])), repr(float(self.cum_regret[t]))])
        return buf.getvalue()


def type_utility(agent: AgentType, s) -> float:
    """Principal's expected utility against one type."""
    if isinstance(s, LinearContract):
        a = best_response_linear(agent, s)
        s = s.to_contract(agent.outcomes)
    else:
        a = best_response(agent, s)
    return principal_utility(agent, s, a)


def expected_utility_oracle(dist: TypeDistribution, s) -> float:
    """Exact mixture of per-type utilities."""
    return float(sum(w * type_utility(t, s) for t, w in zip(dist.support, dist.weights) if w > 0))


class _ArmModel:
    """Per-(arm, type) outcome laws and rewards, computed once."""

    def __init__(self, space: ContractSpace, types: Sequence[AgentType]):
        self.space = space
        self.types = list(types)
        self._cache: dict[tuple[int, int], tuple[np.ndarray, float]] = {}
        self.arms: list = []
        self.rewards: list[np.ndarray] = []  # principal's take at each outcome

    def add(self, arm) -> int:
        self.arms.append(arm)
        s = self.space.contract(arm).values
        self.rewards.append(self.space.outcomes.values - s)
        return len(self.arms) - 1

    def law(self, k: int, ti: int) -> tuple[np.ndarray, float]:
        key = (k, ti)
        if key not in self._cache:
            agent = self.types[ti]
            arm = self.arms[k]
            if self.space.kind == "linear-interval":
                a = best_response_linear(agent, float(arm))
            else:
                a = best_response(agent, self.space.contract(arm))
            pmf = np.clip(agent.tech.pmf(a), 0.0, None)
            pmf /= pmf.sum()
            self._cache[key] = (np.cumsum(pmf), float(pmf @ self.rewards[k]))
        return self._cache[key]

    def pull(self, k: int, ti: int, u: float) -> tuple[float, float]:
        """Realized and expected principal utility for one round."""
        cdf, mean = self.law(k, ti)
        j = min(int(np.searchsorted(cdf, u, side="right")), len(cdf) - 1)
        return float(self.rewards[k][j]), mean


def linear_utilities(dist: TypeDistribution, betas) -> np.ndarray:
    """Expected utility of each linear share in ``betas`` (vectorized over shares)."""
    betas = np.asarray(betas, dtype=float)
    out = np.zeros_like(betas)
    for t, w in zip(dist.support, dist.weights):
        if w > 0:
            a = best_response_linear_many(t, betas)
            out += w * (1.0 - betas) * t.r(a)
    return out


def linear_benchmark(dist: TypeDistribution, beta_max: float, points: int = BENCHMARK_POINTS) -> tuple[float, float]:
    """Best linear share: dense grid then bounded refinement around the grid argmax."""
    betas = np.linspace(0.0, beta_max, points)
    vals = linear_utilities(dist, betas)
    k = int(vals.argmax())
    lo, hi = betas[max(k - 1, 0)], betas[min(k + 1, points - 1)]
    best_b, best_v = float(betas[k]), float(vals[k])
    if hi > lo:
        res = minimize_scalar(
            lambda b: -expected_utility_oracle(dist, LinearContract(b)),
            bounds=(lo, hi), method="bounded", options={"xatol": 1e-10},
        )
        if -res.fun > best_v:
            best_b, best_v = float(res.x), float(-res.fun)
    return best_v, best_b


def _check(space: ContractSpace, types: Sequence[AgentType], T: int):
    if T < 1:
        raise ValueError("horizon must be at least 1")
    if not all(t.assumptions.sdfc_holds for t in types):
        raise UncertifiedSpaceError("a type fails the SDFC check in validate_assumptions; refusing to run")


def _uncovered_interval(pos: np.ndarray, rad: np.ndarray, hi: float) -> float | None:
    """Leftmost point of [0, hi] outside every [pos - rad, pos + rad] (pos sorted)."""
    if pos.size == 0:
        return 0.0
    left = pos - rad
    if left[0] > 0.0:
        return 0.0
    reach = np.maximum.accumulate(pos + rad)
    gaps = np.flatnonzero(left[1:] > reach[:-1])
    if gaps.size:
        return float(reach[gaps[0]])
    if reach[-1] < hi:
        return float(reach[-1])
    return None


def run_zooming(arrival: ArrivalProcess, space: ContractSpace, T: int, rng: np.random.Generator) -> RegretTrace:
    """Zooming algorithm with stochastic type arrivals.

    An arm pulled ``n`` times has confidence radius ``sqrt(8 log T / n)`` and
    covers every contract within that radius divided by the Lipschitz
    constant. Whenever some contract is uncovered, one such contract is
    activated; otherwise the arm with the largest ``mean + 2 * radius`` is
    played. Regret is the expected-utility shortfall from the benchmark.
    """
    if arrival.mode != "stochastic":
        raise EnvironmentError_("zooming needs stochastic arrivals")
    dist = arrival.dist
    _check(space, dist.support, T)
    model = _ArmModel(space, dist.support)
    logT = math.log(max(T, 2))
    lip = space.lipschitz

    linear = space.kind == "linear-interval"
    if linear:
        benchmark, _ = linear_benchmark(dist, space.beta_max)
        method = f"dense linear grid ({BENCHMARK_POINTS} points) + bounded refinement"
        cand = None
    else:
        cand = space.grid()
        vals = [expected_utility_oracle(dist, space.contract(c)) for c in cand]
        benchmark = float(max(vals))
        method = f"exhaustive monotone grid (h={space.h})"
        D = np.abs(cand[:, None, :] - cand[None, :, :]).sum(axis=-1)

    types = dist.draw(rng, T)
    unif = rng.random(T)
    arm_id = np.empty(T, dtype=int)
    realized = np.empty(T)
    expected = np.empty(T)

    n = np.zeros(0)
    tot = np.zeros(0)
    pos = np.zeros(0)  # linear arms, kept sorted alongside `order`
    order = np.zeros(0, dtype=int)
    cand_ix: list[int] = []

    def radius(cnt):
        return np.sqrt(ZOOM_CONST * logT / np.maximum(cnt, 1.0))

    def uncovered():
        zoom = radius(n) / lip
        if linear:
            gap = _uncovered_interval(pos, zoom[order] / space.metric_scale, space.beta_max)
            return None if gap is None else min(gap, space.beta_max)
        if not cand_ix:
            return 0
        covered = (D[:, cand_ix] <= zoom[None, :]).any(axis=1)
        free = np.flatnonzero(~covered)
        return None if free.size == 0 else int(free[0])

    for t in range(T):
        # activation: keep the arm space covered
        while (new := uncovered()) is not None:
            k = model.add(new if linear else cand[new])
            n, tot = np.append(n, 0.0), np.append(tot, 0.0)
            if linear:
                at = int(np.searchsorted(pos, new))
                pos = np.insert(pos, at, new)
                order = np.insert(order, at, k)
            else:
                cand_ix.append(new)
        fresh = np.flatnonzero(n == 0)
        if fresh.size:
            k = int(fresh[0])
        else:
            k = int(np.argmax(tot / n + 2.0 * radius(n)))
        got, mu = model.pull(k, int(types[t]), float(unif[t]))
        n[k] += 1.0
        tot[k] += got
        arm_id[t], realized[t], expected[t] = k, got, mu

    cum = np.cumsum(benchmark - expected)
    meta = {
        "algorithm": "zooming",
        "lipschitz": lip,
        "active_arms": len(model.arms),
        "pulls": n.astype(int).tolist(),
        "radius_const": ZOOM_CONST,
    }
    return RegretTrace(model.arms, arm_id, realized, expected, cum, benchmark, method, meta)


def run_adversarial_grid(arrival: ArrivalProcess, space: ContractSpace, T: int, rng: np.random.Generator) -> RegretTrace:
    """Exponential weights (EXP3) over the ``h``-grid of contracts.

    Stand-in for adversarial zooming. Rewards are rescaled from [-1, 1] to
    [0, 1]. Regret is measured against the best fixed grid arm in hindsight
    for the realized type sequence, in expected utility.
    """
    if arrival.mode != "adversarial":
        raise EnvironmentError_("grid bandit needs an adversarial type sequence")
    seq = arrival.sequence
    if len(seq) != T:
        raise EnvironmentError_(f"type sequence has length {len(seq)}, horizon is {T}")
    types = arrival.types()
    _check(space, types, T)
    model = _ArmModel(space, types)
    for arm in space.grid():
        model.add(arm if space.kind == "monotone-grid" else float(arm))
    K = len(model.arms)
    index = {t: i for i, t in enumerate(types)}
    tix = np.array([index[t] for t in seq])

    # per-type expected utility of every grid arm, for the hindsight benchmark
    U = np.array([[model.law(k, ti)[1] for k in range(K)] for ti in range(len(types))])
    per_arm_total = np.bincount(tix, minlength=len(types)) @ U
    best = int(per_arm_total.argmax())

    gamma = min(1.0, math.sqrt(K * math.log(K) / ((math.e - 1.0) * T))) if K > 1 else 1.0
    logw = np.zeros(K)
    arm_id = np.empty(T, dtype=int)
    realized = np.empty(T)
    expected = np.empty(T)
    picks = rng.random(T)
    unif = rng.random(T)
    for t in range(T):
        w = np.exp(logw - logw.max())
        p = (1.0 - gamma) * w / w.sum() + gamma / K
        k = min(int(np.searchsorted(np.cumsum(p), picks[t], side="right")), K - 1)
        got, mu = model.pull(k, int(tix[t]), float(unif[t]))
        x = (got + 1.0) / 2.0
        logw[k] += gamma * x / (p[k] * K)
        arm_id[t], realized[t], expected[t] = k, got, mu

    cum = np.cumsum(U[tix, best] - expected)
    meta = {"algorithm": "exp3-grid", "stand_in_for": "adversarial zooming", "gamma": gamma, "grid_size": K}
    return RegretTrace(model.arms, arm_id, realized, expected, cum, float(per_arm_total[best]) / T,
                       f"best fixed grid arm in hindsight (h={space.h})", meta)


def peaked_instance(floor: float = 0.95, lam0: float = 0.002) -> AgentType:
    """Single-peak instance used for regret-rate checks.

    Success is likely without effort (``floor``) and cheap effort makes it
    certain, so the principal's utility in the share has a sharp kink at the
    saturating share ``lam0 / (1 - floor)`` and falls away on both sides.
    """
    tech = BernoulliEffort(scale=1.0, floor=floor)
    return AgentType(OutcomeGrid((0.0, 1.0)), tech, QuadraticCost(lam0), 1.0, beta_max=1.0)


def loglog_slope(Ts, regrets) -> float:
    """Least-squares slope of log(regret) on log(T)."""
    x = np.log(np.asarray(Ts, float))
    y = np.log(np.maximum(np.asarray(regrets, float), 1e-12))
    return float(np.polyfit(x, y, 1)[0])
