"""Delayed elimination against a discounted, non-myopic agent.

The principal posts linear shares round robin and eliminates arms using
only observations at least ``D`` rounds old. An agent who discounts the
future by ``gamma`` gains little from manipulating indices that react so
late, which caps how far he deviates from the myopic best response.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .env_core import (
    AgentType,
    EnvironmentError_,
    LinearContract,
    best_response_linear,
)
from .hetero_bandit import RegretTrace, TypeDistribution, linear_benchmark, loglog_slope  # noqa: F401
from . import identical_learner as il

NOISE_SD = 0.1
POLICIES = ("truthful", "budgeted-adversary", "underperform-then-exploit")


def discounted_horizon(T: int, gamma: float) -> float:
    """``T_gamma = sum_{t=1}^T gamma^t``."""
    if gamma == 1.0:
        return float(T)
    return gamma * (1.0 - gamma**T) / (1.0 - gamma)


def choose_delay(T: int, gamma: float, lam: float, E: float = 1.0) -> int:
    """Smallest delay with ``E * gamma^D * T_gamma / lam <= 1 / T^2``."""
    if not (0.0 < gamma < 1.0):
        raise EnvironmentError_("discount must lie in (0, 1); undiscounted agents are unsupported")
    if lam <= 0:
        raise EnvironmentError_("strong convexity modulus must be positive")
    x = T**2 * E * discounted_horizon(T, gamma) / lam
    return max(0, math.ceil(math.log(x) / math.log(1.0 / gamma)))


def grid_for_continuous(T: int) -> int:
    """Number of shares ``K`` with ``K^2 = sqrt(T log T)``."""
    if T < 2:
        raise ValueError("need T >= 2")
    return math.ceil((T * math.log(T)) ** 0.25)


def continuous_arms(T: int) -> tuple[LinearContract, ...]:
    K = grid_for_continuous(T)
    return tuple(LinearContract(i / K) for i in range(1, K + 1))


def strong_concavity(agent: AgentType) -> float:
    """Modulus in ``u_A(a(beta)) - u_A(a) >= lam * (a - a(beta))^2``: half of inf c''."""
    return agent.cost.curvature_inf(agent.effort_cap) / 2.0


def deviation_cost(agent: AgentType, beta: float, a_played: float) -> float:
    """Agent's immediate utility loss from playing ``a_played`` instead of ``a(beta)``."""
    a_star = best_response_linear(agent, beta)
    u = lambda a: beta * float(agent.r(a)) - float(agent.cost(a))
    return u(a_star) - u(agent.check_effort(a_played))


@dataclass(frozen=True)
class MechanismConfig:
    arms: tuple[LinearContract, ...]
    T: int
    D: int = 0
    delta_p: float = 0.0
    log_const: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "arms", tuple(
            a if isinstance(a, LinearContract) else LinearContract(float(a)) for a in self.arms
        ))
        if not self.arms:
            raise EnvironmentError_("need at least one arm")
        if self.T < 1 or self.D < 0 or self.delta_p < 0:
            raise EnvironmentError_("need T >= 1, D >= 0 and delta_p >= 0")

    @classmethod
    def continuous(cls, T: int, D: int = 0, delta_p: float = 0.0) -> "MechanismConfig":
        return cls(continuous_arms(T), T, D, delta_p)

    @property
    def K(self) -> int:
        return len(self.arms)


@dataclass(frozen=True)
class StrategicAgentModel:
    """A discounted agent and the policy he follows.

    ``budgeted-adversary`` always shades effort down by the largest amount
    the deviation budget allows. ``underperform-then-exploit`` shirks
    (``a = 0``) on shares below ``params['threshold']`` for the first
    ``params['phase']`` rounds and is truthful afterwards; it ignores the
    budget and models the manipulation the delay is meant to make
    unprofitable.
    """

    type: AgentType
    gamma: float
    policy: str = "truthful"
    params: dict = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise EnvironmentError_(f"unknown policy {self.policy!r}")
        if not (0.0 < self.gamma < 1.0):
            raise EnvironmentError_("discount must lie in (0, 1)")

    @property
    def lam(self) -> float:
        return strong_concavity(self.type)

    def budget(self, D: int, T: int) -> float:
        """Largest deviation with ``lam * d^2 <= E * gamma^D * T_gamma``."""
        E = self.type.effort_cap
        return math.sqrt(E * self.gamma**D * discounted_horizon(T, self.gamma) / self.lam)

    def act(self, beta: float, t: int, truthful: float, budget: float) -> float:
        return float(self.act_many(np.array([beta]), np.array([t]), np.array([truthful]), budget)[0])

    def act_many(self, beta: np.ndarray, t: np.ndarray, truthful: np.ndarray, budget: float) -> np.ndarray:
        """Efforts for rounds ``t`` with posted shares ``beta``."""
        if self.policy == "truthful":
            return truthful.astype(float)
        if self.policy == "budgeted-adversary":
            return np.clip(truthful - budget, 0.0, self.type.effort_cap)
        thr = self.params.get("threshold", 0.5)
        phase = self.params.get("phase", 0)
        return np.where((t < phase) & (beta < thr), 0.0, truthful)


@dataclass
class StrategicTrace(RegretTrace):
    delta: np.ndarray = None
    active_count: np.ndarray = None
    info_cutoff: np.ndarray = None  # decisions at round t used observations with index < cutoff
    D: int = 0
    gamma: float = 0.0
    survivors: list[int] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["round", "arm_id", "contract_repr", "realized_utility", "cum_regret",
                    "delta_t", "active_arm_count", "D", "gamma"])
        for t in range(self.T):
            k = int(self.arm_id[t])
            w.writerow([
                t + 1, k, self.contract_repr(k), repr(float(self.realized[t])), repr(float(self.cum_regret[t])),
                repr(float(self.delta[t])), int(self.active_count[t]), self.D, self.gamma,
            ])
        return buf.getvalue()


def run_delayed_elimination(
    cfg: MechanismConfig,
    agent: StrategicAgentModel,
    rng: np.random.Generator,
    benchmark: str = "arms",
) -> StrategicTrace:
    """Round-robin delayed elimination over ``cfg.arms``.

    Each sweep pulls every active arm once. After the sweep that started at
    round ``t``, indices are recomputed from rounds ``tau < t - D`` only and
    arm ``b`` is dropped when ``UCB(b) < max LCB``. Observed utility is
    ``(1 - beta) * y``. Regret is against ``T * max u(beta)`` over the arms
    (``benchmark="arms"``) or over all shares in [0, 1] (``"continuous"``),
    with ``u(beta) = (1 - beta) r(a(beta))``.
    """
    env = agent.type
    T, D = cfg.T, cfg.D
    betas = np.array([a.beta for a in cfg.arms])
    truthful = np.array([best_response_linear(env, b) for b in betas])
    u_arm = (1.0 - betas) * env.r(truthful)
    if benchmark == "arms":
        bench = float(u_arm.max())
        method = "best arm under truthful responses"
    elif benchmark == "continuous":
        bench = linear_benchmark(TypeDistribution.single(env), 1.0)[0]
        method = "best share in [0, 1] under truthful responses"
    else:
        raise ValueError(f"unknown benchmark {benchmark!r}")
    budget = agent.budget(D, T)

    arm_id = np.empty(T, dtype=int)
    realized = np.empty(T)
    expected = np.empty(T)
    delta = np.empty(T)
    active_count = np.empty(T, dtype=int)
    cutoff = np.zeros(T, dtype=int)

    active = list(range(cfg.K))
    sums = np.zeros(cfg.K)  # over delayed samples only
    counts = np.zeros(cfg.K)
    folded = 0  # rounds [0, folded) are already in sums/counts
    logT = math.log(max(T, 2))
    info = 0
    t = 0
    while t < T:
        start = t
        # a lone survivor is played for the rest of the horizon
        ks = np.array(active if len(active) > 1 else active * (T - t))[: T - t]
        ts = np.arange(t, t + len(ks))
        b = betas[ks]
        a = agent.act_many(b, ts, truthful[ks], budget)
        r = env.r(a)
        y = np.clip(r + NOISE_SD * rng.standard_normal(len(ks)), 0.0, 1.0)
        sl = slice(t, t + len(ks))
        arm_id[sl], realized[sl], expected[sl] = ks, (1.0 - b) * y, (1.0 - b) * r
        delta[sl] = a - truthful[ks]
        active_count[sl] = len(active)
        cutoff[sl] = info
        t += len(ks)
        # fold in observations that are now more than D rounds old
        horizon = max(start - D, 0)
        if horizon > folded:
            ids = arm_id[folded:horizon]
            np.add.at(sums, ids, realized[folded:horizon])
            np.add.at(counts, ids, 1.0)
            folded = horizon
        info = folded
        if len(active) > 1:
            n = counts[active]
            with np.errstate(divide="ignore", invalid="ignore"):
                mean = np.where(n > 0, sums[active] / np.maximum(n, 1.0), 0.0)
                rad = np.where(n > 0, np.sqrt(cfg.log_const * logT / np.maximum(n, 1.0)), np.inf)
            ucb = mean + rad + cfg.delta_p
            lcb = mean - rad - cfg.delta_p
            best = lcb.max()
            active = [k for k, u in zip(active, ucb) if not u < best]

    cum = np.cumsum(bench - expected)
    meta = {
        "algorithm": "delayed-elimination",
        "policy": agent.policy,
        "budget": budget,
        "lambda": agent.lam,
        "delta_p": cfg.delta_p,
        "benchmark_by_arm": u_arm.tolist(),
    }
    return StrategicTrace(
        arms=list(betas), arm_id=arm_id, realized=realized, expected=expected, cum_regret=cum,
        benchmark=bench, benchmark_method=method, meta=meta, delta=delta,
        active_count=active_count, info_cutoff=cutoff, D=D, gamma=agent.gamma, survivors=list(active),
    )


def budget_violations(trace: StrategicTrace, agent: StrategicAgentModel, T: int, tol: float = 1e-12) -> int:
    """Rounds where ``lam * delta_t^2 > E * gamma^D * T_gamma + tol``."""
    E = agent.type.effort_cap
    cap = E * agent.gamma**trace.D * discounted_horizon(T, agent.gamma)
    return int(np.sum(agent.lam * trace.delta**2 > cap + tol))


@dataclass
class CommitmentResult:
    learn: il.LearnResult
    commit_round: int
    deltas: np.ndarray
    budget: float


def run_delayed_commitment(
    agent: StrategicAgentModel,
    epsilon: float,
    delta_conf: float,
    T: int,
    rng: np.random.Generator,
    D: int | None = None,
) -> CommitmentResult:
    """Monotone-contract extension: learn from linear queries, then commit late.

    The sampling phase of the identical-agent learner runs against the
    strategic agent; the computed contract is posted only ``D`` rounds after
    the last query, so deviations during sampling are held to the budget.
    """
    env = agent.type
    if D is None:
        D = choose_delay(T, agent.gamma, agent.lam, env.effort_cap)
    budget = agent.budget(D, T)
    N = il.LearnerConfig.for_agent(env, epsilon, delta_conf).N
    deltas: list[float] = []
    clock = [0]

    def respond(beta: float) -> float:
        a_star = best_response_linear(env, beta)
        a = agent.act(beta, clock[0], a_star, budget)
        deltas.append(a - a_star)
        clock[0] += N  # the grid point is then posted N times in a row
        return a

    res = il.learn_optimal_contract(env, epsilon, delta_conf, rng, respond=respond)
    return CommitmentResult(res, res.samples + D, np.asarray(deltas), budget)
