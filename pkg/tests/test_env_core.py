import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contractlearn.env_core import (
    AgentType,
    BernoulliEffort,
    Contract,
    ContractError,
    EffortDomainError,
    EnvironmentError_,
    LinearContract,
    OutcomeGrid,
    PowerCost,
    QuadraticCost,
    SmoothParametric,
    TabulatedConvexCost,
    TabulatedTechnology,
    ValidationInconclusiveError,
    agent_utility,
    agent_utility_abel,
    best_response,
    best_response_linear,
    bernoulli_quadratic,
    principal_utility,
    sample_outcome,
    smooth_quadratic,
    validate_assumptions,
)


def fixed_pmf_env(p_high):
    """Two outcomes with f = (1 - p_high, p_high) at every effort (tabulated, flat)."""
    tech = TabulatedTechnology((0.0, 0.25, 0.5, 0.75, 1.0), ((p_high,),) * 5)
    cost = QuadraticCost(0.0)
    return AgentType(OutcomeGrid((0.0, 1.0)), tech, cost, 1.0, beta_max=1.0)


def random_monotone(rng, m, bounded=True):
    s = np.sort(rng.uniform(0, 1 if bounded else 2, size=m))
    return Contract(tuple(s))


class TestUtilities:
    def test_agent_utility_pmf_dot(self):
        env = fixed_pmf_env(0.7)
        assert agent_utility(env, (0.0, 1.0), 0.4) == pytest.approx(0.7, abs=1e-12)

    def test_zero_contract_pays_cost(self, desk_env):
        for a in (0.0, 0.3, 1.0):
            assert agent_utility(desk_env, (0.0, 0.0), a) == pytest.approx(-(a**2), abs=1e-15)

    def test_agent_utility_closed_form(self, desk_env):
        # 0.5 success prob, cost 0.25
        assert agent_utility(desk_env, (0.0, 1.0), 0.5) == pytest.approx(0.25, abs=1e-15)

    def test_principal_full_transfer(self, smooth_env):
        pi = smooth_env.outcomes.levels
        for a in (0.0, 0.2, 0.9):
            assert principal_utility(smooth_env, pi, a) == pytest.approx(0.0, abs=1e-15)

    def test_principal_zero_contract(self, desk_env):
        assert principal_utility(desk_env, (0.0, 0.0), 0.5) == pytest.approx(0.5)

    def test_principal_arithmetic(self):
        env = fixed_pmf_env(0.5)
        assert principal_utility(env, (0.0, 0.4), 0.1) == pytest.approx(0.3, abs=1e-15)

    def test_effort_domain(self, desk_env):
        with pytest.raises(EffortDomainError):
            agent_utility(desk_env, (0.0, 1.0), 1.5)
        with pytest.raises(EffortDomainError):
            principal_utility(desk_env, (0.0, 1.0), -0.1)

    def test_limited_liability(self):
        with pytest.raises(ContractError):
            Contract((-0.1, 0.2))


@pytest.mark.parametrize("seed", range(5))
def test_abel_identity_and_pmf(seed, smooth_env, desk_env):
    rng = np.random.default_rng(seed)
    envs = [smooth_env, desk_env, smooth_quadratic((0, 0.2, 0.7, 1.0), (4.0, 2.5, 1.0), 3.0)]
    for _ in range(200):
        env = envs[rng.integers(len(envs))]
        a = rng.uniform(0, env.E)
        f = env.tech.pmf(a)
        assert np.all(f >= -1e-12)
        assert abs(f.sum() - 1.0) <= 1e-12
        s = Contract(tuple(rng.uniform(0, 1, env.m)))
        assert abs(agent_utility(env, s, a) - agent_utility_abel(env, s, a)) <= 1e-12


class TestBestResponse:
    def test_no_incentive(self, desk_env):
        assert best_response(desk_env, (0.0, 0.0)) == pytest.approx(0.0, abs=1e-9)

    @pytest.mark.parametrize("beta", [0.1, 0.5, 1.2])
    def test_foc(self, desk_env, beta):
        # maximize beta*a - a^2  ->  a = beta / 2
        assert best_response(desk_env, (0.0, beta)) == pytest.approx(beta / 2, abs=1e-9)

    def test_capped(self, desk_env):
        assert best_response(desk_env, (0.0, 2.5)) == 1.0

    def test_non_monotone_concave_path_rejected(self, desk_env):
        with pytest.raises(ContractError):
            best_response(desk_env, (0.5, 0.1), method="concave")

    def test_grid_fallback_agrees(self, smooth_env, rng):
        for _ in range(10):
            s = random_monotone(rng, 3)
            a1 = best_response(smooth_env, s, method="concave")
            a2 = best_response(smooth_env, s, method="grid")
            assert a1 == pytest.approx(a2, abs=1e-6)

    def test_non_sdfc_falls_back_to_grid(self):
        # convex G with a mildly convex cost: SDFC fails, grid search still maximizes
        eff = tuple(np.linspace(0, 1, 21))
        tech = TabulatedTechnology(eff, tuple((x * x,) for x in eff))
        env = AgentType(OutcomeGrid((0.0, 1.0)), tech, QuadraticCost(0.5), 1.0, beta_max=3.0)
        assert not env.assumptions.sdfc_holds
        a = best_response(env, (0.0, 1.0))
        grid = np.linspace(0, 1, 20001)
        vals = [agent_utility(env, (0.0, 1.0), x) for x in grid]
        assert agent_utility(env, (0.0, 1.0), a) >= max(vals) - 1e-9


class TestBestResponseLinear:
    def test_zero_share(self, desk_env):
        assert best_response_linear(desk_env, LinearContract(0.0)) == 0.0

    def test_root(self, desk_env):
        assert best_response_linear(desk_env, LinearContract(0.6)) == pytest.approx(0.3, abs=1e-10)

    def test_beta_max_gives_cap(self, desk_env):
        assert best_response_linear(desk_env, desk_env.beta_max) == desk_env.E

    def test_matches_general_best_response(self, smooth_env):
        for beta in np.linspace(0.05, smooth_env.beta_max, 9):
            s = LinearContract(beta).to_contract(smooth_env.outcomes)
            assert best_response_linear(smooth_env, beta) == pytest.approx(
                best_response(smooth_env, s), abs=1e-7
            )

    def test_monotone_and_lipschitz_in_share(self, smooth_env, rng):
        rp0 = float(smooth_env.r_prime(0.0))
        lam = smooth_env.assumptions.lam
        for _ in range(300):
            b1, b2 = np.sort(rng.uniform(0, smooth_env.beta_max, 2))
            a1 = best_response_linear(smooth_env, b1)
            a2 = best_response_linear(smooth_env, b2)
            assert a2 >= a1 - 1e-10
            assert a2 - a1 <= rp0 / lam * (b2 - b1) + 1e-8


class TestSampling:
    def test_degenerate_low(self):
        env = fixed_pmf_env(0.0)
        rng = np.random.default_rng(0)
        assert set(sample_outcome(env, 0.5, rng, size=1000).tolist()) == {0}

    def test_degenerate_high(self):
        env = fixed_pmf_env(1.0)
        rng = np.random.default_rng(0)
        assert set(sample_outcome(env, 0.5, rng, size=1000).tolist()) == {1}

    def test_frequency(self, desk_env):
        # binomial sd at 1e5 draws is 0.0016, so +-0.01 is > 6 sd
        draws = sample_outcome(desk_env, 0.5, np.random.default_rng(7), size=100_000)
        assert abs(draws.mean() - 0.5) <= 0.01

    def test_deterministic(self, smooth_env):
        a = sample_outcome(smooth_env, 0.4, np.random.default_rng(3), size=50)
        b = sample_outcome(smooth_env, 0.4, np.random.default_rng(3), size=50)
        assert np.array_equal(a, b)
        assert isinstance(sample_outcome(smooth_env, 0.4, np.random.default_rng(3)), int)


class TestAssumptions:
    def test_bernoulli_quadratic(self, desk_env):
        rep = validate_assumptions(desk_env)
        assert (rep.L, rep.mu, rep.lam) == (1.0, 0.0, 2.0)
        assert rep.sdfc_holds
        assert rep.lipschitz_utility_bound == pytest.approx(4.0)

    def test_linear_cost_fails(self):
        env = AgentType(
            OutcomeGrid((0.0, 1.0)), BernoulliEffort(), PowerCost(0.5, 1.0), 1.0, beta_max=1.0
        )
        rep = validate_assumptions(env)
        assert not rep.sdfc_holds
        assert math.isinf(rep.lipschitz_utility_bound)
        with pytest.raises(EnvironmentError_):
            rep.require_sdfc()

    def test_smooth_analytic_matches_sweep(self, smooth_env):
        a = np.linspace(0, 1, 4001)
        assert smooth_env.tech.lipschitz_bound(1.0) == pytest.approx(np.abs(smooth_env.tech.dG(a)).max())
        assert smooth_env.tech.curvature_sup(1.0) == pytest.approx(smooth_env.tech.d2G(a).max(), abs=1e-9)

    def test_tabulated_sweep(self):
        eff = tuple(np.linspace(0, 1, 11))
        vals = tuple((float(x),) for x in np.linspace(0, 1, 11))
        cost = TabulatedConvexCost(eff, tuple(2 * np.asarray(eff)))
        env = AgentType(OutcomeGrid((0.0, 1.0)), TabulatedTechnology(eff, vals), cost, 1.0, 2.0)
        rep = validate_assumptions(env)
        assert rep.L == pytest.approx(1.0, abs=1e-9)
        assert rep.lam == pytest.approx(2.0, abs=1e-6)
        assert rep.sdfc_holds

    def test_coarse_table_inconclusive(self):
        tech = TabulatedTechnology((0.0, 0.5, 1.0), ((0.0,), (0.5,), (1.0,)))
        env = AgentType(OutcomeGrid((0.0, 1.0)), tech, QuadraticCost(2.0), 1.0, 2.0)
        with pytest.raises(ValidationInconclusiveError):
            validate_assumptions(env)


def test_concavity_under_sdfc(smooth_env, rng):
    grid = np.linspace(0, smooth_env.E, 200)
    for _ in range(50):
        s = random_monotone(rng, 3, bounded=False)
        u = smooth_env.tech.pmf(grid) @ s.values - smooth_env.cost(grid)
        assert np.max(np.diff(u, 2)) <= 1e-8


def test_principal_utility_lipschitz(smooth_env, rng):
    bound = smooth_env.assumptions.lipschitz_utility_bound
    for _ in range(200):
        s1, s2 = random_monotone(rng, 3), random_monotone(rng, 3)
        u1 = principal_utility(smooth_env, s1, best_response(smooth_env, s1))
        u2 = principal_utility(smooth_env, s2, best_response(smooth_env, s2))
        assert abs(u1 - u2) <= bound * np.abs(s1.values - s2.values).sum() + 1e-6


@settings(max_examples=50, deadline=None)
@given(
    lam0=st.floats(0.5, 5.0),
    E=st.floats(0.5, 2.0),
    levels=st.lists(st.floats(0.05, 1.0), min_size=1, max_size=3, unique=True),
)
def test_json_round_trip(lam0, E, levels):
    lv = (0.0,) + tuple(sorted(levels))
    q = tuple(sorted((1.0 + 0.5 * k for k in range(len(lv) - 1)), reverse=True))
    env = smooth_quadratic(lv, q, lam0, E)
    back = AgentType.from_json(env.to_json())
    assert back == env
    assert json.loads(back.to_json()) == json.loads(env.to_json())


def test_json_round_trip_tabulated():
    eff = (0.0, 0.25, 0.5, 0.75, 1.0)
    tech = TabulatedTechnology(eff, ((0.0,), (0.3,), (0.55,), (0.8,), (1.0,)))
    cost = TabulatedConvexCost(eff, (0.0, 0.5, 1.0, 1.5, 2.0))
    env = AgentType(OutcomeGrid((0.0, 1.0)), tech, cost, 1.0, 3.0)
    assert AgentType.from_json(env.to_json()) == env


def test_beta_max_must_implement_cap():
    with pytest.raises(EnvironmentError_):
        bernoulli_quadratic(lam0=2.0, E=1.0, beta_max=1.0)
