"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Tolerances, seed counts and runtime limits are pinned here exactly as
accepted. A criterion that fails is reported and left failing.
"""

import math
import time

import numpy as np
import pytest

from acceptance_log import report
from contractlearn.env_core import (
    AgentType,
    BernoulliEffort,
    Contract,
    OutcomeGrid,
    QuadraticCost,
    agent_utility,
    bernoulli_quadratic,
    best_response,
    best_response_linear,
    principal_utility,
    smooth_quadratic,
)
from contractlearn.hetero_bandit import ArrivalProcess, ContractSpace, TypeDistribution, peaked_instance, run_zooming
from contractlearn.identical_learner import (
    LearnerConfig,
    collect_and_estimate,
    contract_value,
    discretize_contracts,
    ic_convert,
    ic_slack,
    learn_optimal_contract,
    oracle_opt,
)
from contractlearn.lp_core import solve_lp
from contractlearn.pricing_bridge import BUILTIN_DEMANDS, compare
from contractlearn.strategic import (
    MechanismConfig,
    StrategicAgentModel,
    budget_violations,
    choose_delay,
    loglog_slope,
    run_delayed_elimination,
)
from contractlearn.team_prod import (
    BUILTINS,
    cobb_douglas_example,
    equilibrium_many,
    find_optimal_team_contract,
    principal_utility as team_utility,
    quasiconcavity_check,
    sample_profiles,
)
from oracles import lp_vertex_enumeration
from test_lp_core import random_lp

EPS = 0.1
DELTA_CONF = 0.05
SEEDS = range(20)
ARMS = (0.1, 0.3, 0.5, 0.7, 0.9)
GAMMA = 0.9


def random_monotone(rng, m):
    return Contract(tuple(np.sort(rng.uniform(0, 1, size=m))))


@pytest.fixture(scope="module")
def desk():
    return bernoulli_quadratic(2.0, 1.0)


@pytest.fixture(scope="module")
def desk_runs(desk):
    t0 = time.perf_counter()
    runs = [learn_optimal_contract(desk, EPS, DELTA_CONF, np.random.default_rng(s)) for s in SEEDS]
    return runs, time.perf_counter() - t0


@pytest.fixture(scope="module")
def steep_env():
    return AgentType(OutcomeGrid((0.0, 1.0)), BernoulliEffort(), QuadraticCost(0.1), 1.0, beta_max=1.0)


def test_criterion_01_identical_pipeline(desk, desk_runs):
    env = desk
    runs, elapsed = desk_runs
    opt = oracle_opt(env).value
    floor = opt - (6 * EPS + 10 * math.sqrt(EPS))
    util_ok = sum(r.post_utility >= floor for r in runs)
    ic_ok = 0
    for r in runs:
        a = r.true_actions[r.pre.recommended_index]
        ic_ok += ic_slack(env, r.pre.payments, a, 1e-3) <= 22 * EPS + 1e-6
    need = math.ceil(0.95 * len(runs))
    ok = util_ok >= need and ic_ok >= need and elapsed <= 120.0
    assert report(1, ok, f"utility {util_ok}/{len(runs)}, IC certificate {ic_ok}/{len(runs)}, {elapsed:.1f}s")


def test_criterion_02_cost_intervals(desk, desk_runs):
    env = desk
    runs, _ = desk_runs
    good = 0
    for r in runs:
        c = env.cost(r.true_actions)
        t = r.table
        cover = np.all((t.c_lcb <= c + 1e-12) & (c <= t.c_ucb + 1e-12))
        good += bool(cover and np.all(t.c_ucb - t.c_lcb <= 9 * EPS))
    ok = good >= math.ceil(0.93 * len(runs))
    assert report(2, ok, f"{good}/{len(runs)} runs cover the true cost with width <= 9 eps")


def test_criterion_03_dkw(desk):
    env = desk
    cfg = LearnerConfig.for_agent(env, EPS, DELTA_CONF)
    betas = discretize_contracts(cfg)
    a = np.array([best_response_linear(env, b) for b in betas])
    G = env.tech.G(a)
    good = 0
    for s in range(200):
        t = collect_and_estimate(env, betas, cfg.N, np.random.default_rng(s))
        good += bool(np.max(np.abs(t.G_hat - G)) <= EPS)
    ok = good >= math.ceil(0.93 * 200)
    assert report(3, ok, f"{good}/200 runs within eps at N={cfg.N}")


def test_criterion_04_lipschitz(smooth_env):
    env = smooth_env
    rng = np.random.default_rng(4)
    bound = env.assumptions.lipschitz_utility_bound
    util_bad = 0
    for _ in range(1000):
        s1, s2 = random_monotone(rng, env.outcomes.m), random_monotone(rng, env.outcomes.m)
        u1 = principal_utility(env, s1, best_response(env, s1))
        u2 = principal_utility(env, s2, best_response(env, s2))
        util_bad += abs(u1 - u2) > bound * np.abs(s1.values - s2.values).sum() + 1e-6
    rp0 = float(env.r_prime(0.0))
    lam = env.assumptions.lam
    slope_bad = 0
    for _ in range(1000):
        b1, b2 = np.sort(rng.uniform(0, env.beta_max, 2))
        gap = best_response_linear(env, b2) - best_response_linear(env, b1)
        slope_bad += gap > rp0 / lam * (b2 - b1) + 1e-8
    ok = util_bad == 0 and slope_bad == 0
    assert report(4, ok, f"utility violations {util_bad}/1000, slope violations {slope_bad}/1000")


def test_criterion_05_zooming():
    env = peaked_instance()
    arrival = ArrivalProcess.stochastic(TypeDistribution.single(env))
    space = ContractSpace.for_types([env])
    Ts = (2000, 4000, 8000, 16000)
    t0 = time.perf_counter()
    R = [np.mean([run_zooming(arrival, space, T, np.random.default_rng(s)).regret for s in SEEDS]) for T in Ts]
    elapsed = time.perf_counter() - t0
    slope = loglog_slope(Ts, R)
    ok = slope <= 0.8 and elapsed <= 180.0
    assert report(5, ok, f"regret slope {slope:.3f}, {elapsed:.1f}s")


def test_criterion_06_delayed_elimination(steep_env):
    truthful = StrategicAgentModel(steep_env, GAMMA)
    T = 10_000
    cfg = MechanismConfig(ARMS, T, choose_delay(T, GAMMA, truthful.lam))
    best = int(np.argmax([principal_utility(steep_env, (0.0, b), best_response_linear(steep_env, b))
                          for b in ARMS]))
    kept = sum(best in run_delayed_elimination(cfg, truthful, np.random.default_rng(s)).survivors
               for s in range(100))
    adv = StrategicAgentModel(steep_env, GAMMA, "budgeted-adversary")
    Ts = (4000, 16000, 64000)
    R, bad = [], 0
    for T in Ts:
        cfg = MechanismConfig(ARMS, T, choose_delay(T, GAMMA, adv.lam))
        regrets = []
        for s in SEEDS:
            tr = run_delayed_elimination(cfg, adv, np.random.default_rng(s))
            bad += budget_violations(tr, adv, T)
            regrets.append(tr.regret)
        R.append(np.mean(regrets))
    slope = loglog_slope(Ts, R)
    ok = kept >= 95 and bad == 0 and slope <= 0.8
    assert report(6, ok, f"best arm kept {kept}/100, budget violations {bad}, regret slope {slope:.3f}")


def test_criterion_07_pricing():
    gaps = {name: compare(D, 101) for name, D in BUILTIN_DEMANDS.items()}
    resp = max(c.max_response_gap for c in gaps.values())
    util = max(c.max_utility_gap for c in gaps.values())
    ok = resp <= 1e-6 and util <= 1e-8
    assert report(7, ok, f"response gap {resp:.1e}, utility gap {util:.1e}")


def test_criterion_08_team_equilibrium():
    cd = cobb_douglas_example()
    B = np.random.default_rng(8).uniform(0.01, 1.0, (1000, 2))
    A, out, _ = equilibrium_many(cd, B)
    closed = np.stack([B[:, 0] ** 2 * B[:, 1], B[:, 1] ** 2 * B[:, 0]], axis=1)
    err = max(np.max(np.abs(A - closed)), np.max(np.abs(out - 3 * B[:, 0] * B[:, 1])))
    res = 0.0
    for name, make in BUILTINS.items():
        f = make()
        res = max(res, equilibrium_many(f, sample_profiles(f.n, 1000, np.random.default_rng(9)))[2].max())
    ok = err <= 1e-9 and res <= 1e-8
    assert report(8, ok, f"closed-form error {err:.1e}, worst residual {res:.1e}")


def test_criterion_09_quasiconcavity():
    found = {}
    for name in ("cobb-douglas-2", "cobb-douglas-3", "ces-2", "ces-3"):
        found[name] = quasiconcavity_check(BUILTINS[name](), 10_000, np.random.default_rng(10)).violations
    ok = all(v == 0 for v in found.values())
    assert report(9, ok, "violations " + ", ".join(f"{k}={v}" for k, v in found.items()))


def test_criterion_10_team_contract():
    cd = cobb_douglas_example()
    eps = 0.01
    t0 = time.perf_counter()
    res = find_optimal_team_contract(cd, eps)
    elapsed = time.perf_counter() - t0
    g = np.linspace(0.0, 1.0, 50)
    grid = team_utility(cd, np.stack(np.meshgrid(g, g), -1).reshape(-1, 2)).max()
    objs = np.array([r.obj for r in res.rows])
    monotone = bool(np.all(np.diff(objs) >= 0))
    ok = abs(res.utility - grid) <= eps and monotone and elapsed <= 60.0
    assert report(10, ok, f"utility {res.utility:.5f} vs grid {grid:.5f}, Obj monotone {monotone}, {elapsed:.1f}s")


def test_criterion_11_lp():
    rng = np.random.default_rng(11)
    mism = viol = 0
    for _ in range(200):
        p = random_lp(rng)
        sol = solve_lp(p)
        ref = lp_vertex_enumeration(p.objective, p.sense, p.constraints, p.var_bounds())
        if ref is None:
            mism += sol.status != "infeasible"
            continue
        if sol.status != "optimal":
            mism += 1
            continue
        mism += abs(sol.value - ref) > 1e-7
        viol += sol.max_violation > 1e-7
    ok = mism == 0 and viol == 0
    assert report(11, ok, f"mismatches {mism}/200, violations {viol}")


def test_criterion_12_ic_conversion():
    rng = np.random.default_rng(12)
    bad = 0
    worst = math.inf
    for _ in range(50):
        m = int(rng.integers(2, 5))
        levels = (0.0, *np.sort(rng.uniform(0.05, 1.0, m - 1)))
        exps = tuple(np.sort(rng.uniform(1.0, 4.0, m - 1))[::-1])
        env = smooth_quadratic(levels, exps, float(rng.uniform(1.0, 4.0)))
        s = random_monotone(rng, m)
        delta = float(rng.uniform(0.0, 0.25))
        # the principal-best effort among those within delta of the agent optimum
        grid = np.linspace(0.0, env.effort_cap, 2001)
        top = agent_utility(env, s, best_response(env, s))
        ua = env.tech.pmf(grid) @ s.values - env.cost(grid)
        cand = grid[ua >= top - delta]
        u = max(principal_utility(env, s, a) for a in cand)
        got, _ = contract_value(env, ic_convert(s, delta, env.outcomes))
        w = math.sqrt(delta)
        margin = got - ((1 - w) * u - (w - delta))
        worst = min(worst, margin)
        bad += margin < -1e-6
    assert report(12, bad == 0, f"violations {bad}/50, smallest margin {worst:.2e}")
