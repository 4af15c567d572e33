"""Polynomial-sample learning of an approximately optimal contract.

The pipeline, for identical agents:

1. discretize linear shares on a grid of step ``eps_c``;
2. post each grid share ``N`` times and estimate the complementary CDF of
   the induced outcome distribution;
3. bracket the induced costs by telescoping revenue differences;
4. solve one linear program per grid action with the estimated parameters
   and keep the best;
5. mix the resulting approximately-IC contract with the full-transfer
   contract to make it exactly IC.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .env_core import (
    AgentType,
    Contract,
    EnvironmentError_,
    OutcomeGrid,
    agent_utility,
    best_response,
    best_response_linear,
    principal_utility,
    sample_outcome,
)
from .lp_core import LinearProgram, solve_lp

IC_FACTOR = 22.0
OPT_FACTOR = 6.0


class PipelineError(RuntimeError):
    pass


class DegenerateGridError(ValueError):
    pass


@dataclass(frozen=True)
class LearnerConfig:
    epsilon: float
    delta_conf: float
    lam: float
    L: float
    beta_max: float
    r_prime_0: float | None = None
    c_prime_E: float | None = None

    def __post_init__(self):
        if self.epsilon <= 0 or not (0 < self.delta_conf < 1):
            raise ValueError("need epsilon > 0 and 0 < delta_conf < 1")
        if self.lam <= 0 or self.L <= 0:
            raise ValueError("need lambda > 0 and L > 0")

    @classmethod
    def for_agent(cls, agent: AgentType, epsilon: float, delta_conf: float) -> "LearnerConfig":
        rep = agent.assumptions
        return cls(
            epsilon=epsilon,
            delta_conf=delta_conf,
            lam=rep.lam,
            L=rep.L,
            beta_max=agent.beta_max,
            r_prime_0=float(agent.r_prime(0.0)),
            c_prime_E=float(agent.cost.d1(agent.effort_cap)),
        )

    @property
    def eps_c(self) -> float:
        step = self.lam * self.epsilon / (2.0 * self.L**2)
        if self.r_prime_0 is not None and self.c_prime_E is not None and self.r_prime_0 > 0:
            # keeps neighbouring grid actions within epsilon in agent utility
            step = min(step, self.lam * self.epsilon / (self.r_prime_0 * (self.L + self.c_prime_E)))
        return step

    @property
    def N(self) -> int:
        n = 2.0 * math.log(self.beta_max / (self.delta_conf * self.eps_c)) / self.epsilon**2
        return max(1, math.ceil(n))

    @property
    def grid_size(self) -> int:
        return math.floor(self.beta_max / self.eps_c + 1e-9) + 1

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "delta_conf": self.delta_conf,
            "lambda": self.lam,
            "L": self.L,
            "beta_max": self.beta_max,
            "r_prime_0": self.r_prime_0,
            "c_prime_E": self.c_prime_E,
            "eps_c": self.eps_c,
            "N": self.N,
            "grid_size": self.grid_size,
        }


@dataclass
class EstimationTable:
    betas: np.ndarray
    levels: np.ndarray
    G_hat: np.ndarray  # (K, m)
    r_hat: np.ndarray  # (K,)
    counts: np.ndarray  # samples per grid point
    c_lcb: np.ndarray | None = None
    c_ucb: np.ndarray | None = None

    @property
    def K(self) -> int:
        return len(self.betas)

    @property
    def f_hat(self) -> np.ndarray:
        tail = np.zeros((self.K, 1))
        return self.G_hat - np.hstack([self.G_hat[:, 1:], tail])

    @property
    def populated(self) -> bool:
        return self.c_lcb is not None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        m = self.G_hat.shape[1]
        w.writerow(["index", "beta"] + [f"G_hat_{j}" for j in range(m)] + ["r_hat", "c_lcb", "c_ucb", "samples"])
        for i in range(self.K):
            lcb = repr(float(self.c_lcb[i])) if self.populated else ""
            ucb = repr(float(self.c_ucb[i])) if self.populated else ""
            w.writerow(
                [i, repr(float(self.betas[i]))]
                + [repr(float(g)) for g in self.G_hat[i]]
                + [repr(float(self.r_hat[i])), lcb, ucb, int(self.counts[i])]
            )
        return buf.getvalue()

    def rows(self) -> list[dict]:
        out = []
        for i in range(self.K):
            out.append(
                {
                    "beta": float(self.betas[i]),
                    "G_hat": [float(g) for g in self.G_hat[i]],
                    "r_hat": float(self.r_hat[i]),
                    "c_lcb": float(self.c_lcb[i]) if self.populated else None,
                    "c_ucb": float(self.c_ucb[i]) if self.populated else None,
                }
            )
        return out


@dataclass(frozen=True)
class IcContract:
    payments: Contract
    recommended_index: int
    ic_slack: float
    utility_estimate: float


def discretize_contracts(cfg: LearnerConfig) -> np.ndarray:
    """Linear shares ``0, eps_c, 2 eps_c, ...`` up to ``beta_max``."""
    if cfg.eps_c >= cfg.beta_max:
        raise DegenerateGridError(f"eps_c={cfg.eps_c} is not below beta_max={cfg.beta_max}")
    return np.arange(cfg.grid_size) * cfg.eps_c


def tabulate_counts(levels: np.ndarray, counts: np.ndarray, betas: np.ndarray) -> EstimationTable:
    """Estimation table from per-grid-point outcome histograms ``counts`` (K, m)."""
    counts = np.asarray(counts, dtype=float)
    n = counts.sum(axis=1)
    freq = counts / n[:, None]
    # fraction of draws at level j or above; reverse cumsum keeps it monotone
    G_hat = np.cumsum(freq[:, ::-1], axis=1)[:, ::-1]
    G_hat[:, 0] = 1.0
    r_hat = counts @ levels / n
    return EstimationTable(np.asarray(betas, float), np.asarray(levels, float), G_hat, r_hat, n.astype(int))


Responder = Callable[[float], float]


def collect_and_estimate(
    env: AgentType,
    grid,
    N: int,
    rng: np.random.Generator,
    respond: Responder | None = None,
) -> EstimationTable:
    """Post every grid share ``N`` times and record empirical complementary CDFs.

    Each grid point draws from its own child generator, so the table does
    not depend on evaluation order. ``respond`` overrides the agent's effort
    choice (used to simulate non-truthful agents); it defaults to the myopic
    best response.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    respond = respond or (lambda b: best_response_linear(env, b))
    grid = np.asarray(grid, dtype=float)
    streams = rng.spawn(len(grid))
    counts = np.zeros((len(grid), env.m))
    for i, beta in enumerate(grid):
        a = respond(float(beta))
        draws = sample_outcome(env, a, streams[i], size=N)
        counts[i] = np.bincount(draws, minlength=env.m)
    return tabulate_counts(env.outcomes.values, counts, grid)


def cost_bounds(table: EstimationTable, eps: float) -> EstimationTable:
    """Fill cost confidence bounds from telescoped revenue differences.

    Between neighbouring shares the cost increment is bracketed by the two
    shares times the revenue increment; summing from share 0 gives the
    interval, widened by ``3 eps`` for estimation error.
    """
    dr = np.diff(table.r_hat)
    b = table.betas
    lcb = np.concatenate([[0.0], np.cumsum(b[:-1] * dr)]) - 3.0 * eps
    ucb = np.concatenate([[0.0], np.cumsum(b[1:] * dr)]) + 3.0 * eps
    table.c_lcb, table.c_ucb = lcb, ucb
    return table


def _abel_to_payments(w: np.ndarray) -> np.ndarray:
    """Coefficients on ``s`` of ``sum_j Δs_j w_j``."""
    return w - np.concatenate([w[1:], [0.0]])


def build_lp(i: int, table: EstimationTable, eps: float) -> LinearProgram:
    """LP for implementing grid action ``i`` under optimistic/pessimistic utilities.

    Variables are payments ``s_0..s_{m-1}`` in ``[0, 1]``. The lowest level's
    complementary CDF is identically 1 and is not widened.
    """
    if not table.populated:
        raise PipelineError("cost bounds missing; run cost_bounds first")
    m = table.G_hat.shape[1]
    g_ucb = np.minimum(table.G_hat + eps, 1.0)
    g_lcb = np.maximum(table.G_hat - eps, 0.0)
    g_ucb[:, 0] = g_lcb[:, 0] = 1.0
    lp = LinearProgram(
        objective=list(-table.f_hat[i]),
        sense="max",
        bounds=[(0.0, 1.0)] * m,
        offset=float(table.r_hat[i]),
    )
    for k in range(table.K):
        w = g_ucb[i] - g_lcb[k]
        lp.add(_abel_to_payments(w), ">=", table.c_lcb[i] - table.c_ucb[k] - eps)
    for j in range(1, m):
        row = np.zeros(m)
        row[j], row[j - 1] = 1.0, -1.0
        lp.add(row, ">=", 0.0)
    return lp


@dataclass
class FamilySolution:
    index: int
    contract: Contract
    value: float
    values: list[float] = field(default_factory=list)  # nan where infeasible


def solve_family(table: EstimationTable, eps: float) -> FamilySolution:
    """Solve every grid LP and keep the best (smallest index on ties)."""
    best: FamilySolution | None = None
    values = []
    for i in range(table.K):
        sol = solve_lp(build_lp(i, table, eps))
        if not sol.optimal:
            values.append(math.nan)
            continue
        values.append(sol.value)
        if best is None or sol.value > best.value:
            x = np.clip(sol.x, 0.0, None)
            x = np.maximum.accumulate(x)  # removes 1e-12 monotonicity noise
            best = FamilySolution(i, Contract(tuple(x)), sol.value)
    if best is None:
        raise PipelineError("every LP in the family is infeasible")
    best.values = values
    return best


def ic_convert(s, delta: float, outcomes: OutcomeGrid) -> Contract:
    """Mix ``s`` with the full-transfer contract: ``(1 - √δ) s + √δ π``."""
    if delta < 0 or delta > 1:
        raise EnvironmentError_(f"slack {delta} outside [0, 1]")
    s = s if isinstance(s, Contract) else Contract(tuple(s))
    w = math.sqrt(delta)
    return Contract(tuple((1.0 - w) * s.values + w * outcomes.values))


def contract_value(env: AgentType, s) -> tuple[float, float]:
    """Principal utility of ``s`` when the agent best responds: (utility, effort)."""
    a = best_response(env, s)
    return principal_utility(env, s, a), a


def ic_slack(env: AgentType, s, a: float, step: float = 1e-3) -> float:
    """Largest agent gain from deviating away from ``a`` on a dense effort sweep."""
    grid = np.arange(0.0, env.effort_cap + 0.5 * step, step)
    grid = np.clip(grid, 0.0, env.effort_cap)
    s = s if isinstance(s, Contract) else Contract(tuple(s))
    u = env.tech.pmf(grid) @ s.values - env.cost(grid)
    return float(np.max(u) - agent_utility(env, s, a))


@dataclass
class LearnResult:
    config: LearnerConfig
    table: EstimationTable
    pre: IcContract
    post: Contract
    conversion_slack: float
    samples: int
    true_actions: np.ndarray  # diagnostics only; the learner never reads these
    lp_values: list[float]
    oracle: "OracleResult | None" = None
    post_utility: float | None = None

    def to_dict(self) -> dict:
        d = {
            "config": self.config.to_dict(),
            "table": self.table.rows(),
            "chosen_index": self.pre.recommended_index,
            "chosen_beta": float(self.table.betas[self.pre.recommended_index]),
            "apx_value": self.pre.utility_estimate,
            "pre_conversion_contract": list(self.pre.payments.payments),
            "certified_ic_slack": self.pre.ic_slack,
            "conversion_slack": self.conversion_slack,
            "post_conversion_contract": list(self.post.payments),
            "samples": self.samples,
            "bounded_contracts": True,
        }
        if self.post_utility is not None:
            d["post_conversion_utility"] = self.post_utility
        if self.oracle is not None:
            d["oracle_value"] = self.oracle.value
            d["oracle_gap"] = self.oracle.value - (self.post_utility or 0.0)
        return d


def learn_optimal_contract(
    env: AgentType,
    epsilon: float,
    delta_conf: float,
    rng: np.random.Generator,
    *,
    conversion_slack: float | None = None,
    respond: Responder | None = None,
    oracle_step: float | None = None,
) -> LearnResult:
    """Run the full estimate-then-optimize pipeline on ``env``.

    The conversion slack defaults to the certified ``22 * epsilon``, capped at
    1 (a slack of 1 converts to the full-transfer contract).
    """
    cfg = LearnerConfig.for_agent(env, epsilon, delta_conf)
    grid = discretize_contracts(cfg)
    table = collect_and_estimate(env, grid, cfg.N, rng, respond=respond)
    cost_bounds(table, epsilon)
    fam = solve_family(table, epsilon)
    certified = IC_FACTOR * epsilon
    pre = IcContract(fam.contract, fam.index, certified, fam.value)
    slack = min(certified, 1.0) if conversion_slack is None else conversion_slack
    post = ic_convert(fam.contract, slack, env.outcomes)
    truth = np.array([best_response_linear(env, b) for b in grid])
    result = LearnResult(
        cfg, table, pre, post, slack, cfg.grid_size * cfg.N, truth, fam.values
    )
    result.post_utility = contract_value(env, post)[0]
    if oracle_step is not None:
        result.oracle = oracle_opt(env, oracle_step)
    return result


# --------------------------------------------------------------------------
# ground-truth oracle


@dataclass
class OracleResult:
    value: float
    contract: Contract
    action: float
    method: str


def _min_pay_lp(env: AgentType, a: float, ic_grid: np.ndarray | None) -> LinearProgram:
    """Cheapest monotone bounded contract implementing ``a`` (true parameters).

    With ``ic_grid`` None the incentive constraint is the agent's first-order
    condition, which is exact when the agent's problem is concave (SDFC and
    monotone payments). Otherwise one IC row per effort in ``ic_grid``.
    """
    m = env.m
    f = env.tech.pmf(a)
    lp = LinearProgram(objective=list(-f), sense="max", bounds=[(0.0, 1.0)] * m, offset=float(env.r(a)))
    if ic_grid is None:
        slope = _abel_to_payments(env.tech.dG(a))
        c1 = float(env.cost.d1(a))
        if a <= 0.0:
            lp.add(slope, "<=", c1)
        elif a >= env.effort_cap:
            lp.add(slope, ">=", c1)
        else:
            lp.add(slope, "=", c1)
    else:
        F = env.tech.pmf(ic_grid)
        dc = float(env.cost(a)) - env.cost(ic_grid)
        for k in range(len(ic_grid)):
            lp.add(f - F[k], ">=", float(dc[k]))
    for j in range(1, m):
        row = np.zeros(m)
        row[j], row[j - 1] = 1.0, -1.0
        lp.add(row, ">=", 0.0)
    return lp


def oracle_opt(env: AgentType, fine_step: float = 1e-3, ic_step: float = 1e-2) -> OracleResult:
    """Brute-force optimal monotone bounded contract.

    For every effort on a grid of step ``fine_step`` find the cheapest
    contract implementing it, then keep the effort with the best principal
    utility. SDFC types use the first-order IC condition; others fall back
    to explicit IC rows on a grid of step ``ic_step``.
    """
    concave = env.assumptions.sdfc_holds
    efforts = np.linspace(0.0, env.effort_cap, int(round(env.effort_cap / fine_step)) + 1)
    ic_grid = None if concave else np.linspace(0.0, env.effort_cap, int(round(env.effort_cap / ic_step)) + 1)
    best = OracleResult(-math.inf, Contract((0.0,) * env.m), 0.0, "")
    for a in efforts:
        sol = solve_lp(_min_pay_lp(env, float(a), ic_grid))
        if sol.optimal and sol.value > best.value + 1e-15:
            x = np.maximum.accumulate(np.clip(sol.x, 0.0, 1.0))
            best = OracleResult(sol.value, Contract(tuple(x)), float(a), "")
    # re-evaluate with the agent's actual best response
    value, a = contract_value(env, best.contract)
    method = "first-order" if concave else f"ic-grid(step={ic_step})"
    return OracleResult(value, best.contract, a, method)
