import numpy as np
import pytest

from contractlearn.env_core import (
    AgentType,
    BernoulliEffort,
    Contract,
    EnvironmentError_,
    LinearContract,
    OutcomeGrid,
    QuadraticCost,
    TabulatedTechnology,
    bernoulli_quadratic,
    best_response,
    principal_utility,
)
from contractlearn.hetero_bandit import (
    ArrivalProcess,
    ContractSpace,
    TypeDistribution,
    UncertifiedSpaceError,
    _uncovered_interval,
    expected_utility_oracle,
    linear_benchmark,
    loglog_slope,
    peaked_instance,
    run_adversarial_grid,
    run_zooming,
)

PI2 = OutcomeGrid((0.0, 1.0))


def stochastic(env):
    return ArrivalProcess.stochastic(TypeDistribution.single(env))


def linear_twin(env):
    """Same utility functions as a bernoulli-effort env, written as a table."""
    eff = tuple(np.linspace(0, 1, 11))
    tech = TabulatedTechnology(eff, tuple((float(x),) for x in eff))
    return AgentType(PI2, tech, env.cost, env.effort_cap, env.beta_max)


class TestOracle:
    def test_single_type(self, desk_env):
        s = Contract((0.0, 0.4))
        a = best_response(desk_env, s)
        ref = principal_utility(desk_env, s, a)
        assert expected_utility_oracle(TypeDistribution.single(desk_env), s) == pytest.approx(ref, abs=1e-15)

    def test_duplicate_types(self, desk_env):
        s = LinearContract(0.3)
        one = expected_utility_oracle(TypeDistribution.single(desk_env), s)
        two = expected_utility_oracle(TypeDistribution((desk_env, desk_env), (0.5, 0.5)), s)
        assert two == pytest.approx(one, abs=1e-15)

    def test_mixture_closed_form(self):
        # best responses a = beta/2 and beta/4 for c = a^2 and c = 2a^2
        lo = bernoulli_quadratic(2.0, 1.0)
        hi = bernoulli_quadratic(4.0, 1.0)
        v = expected_utility_oracle(TypeDistribution((lo, hi), (0.5, 0.5)), LinearContract(0.5))
        assert v == pytest.approx(0.5 * (0.5 * 0.25) + 0.5 * (0.5 * 0.125), abs=1e-9)

    def test_bad_weights(self, desk_env):
        with pytest.raises(EnvironmentError_):
            TypeDistribution((desk_env,), (0.7,))

    def test_desk_benchmark(self, desk_env):
        v, b = linear_benchmark(TypeDistribution.single(desk_env), 1.0)
        assert b == pytest.approx(0.5, abs=1e-6)
        assert v == pytest.approx(0.125, abs=1e-9)


class TestSpace:
    def test_lipschitz_is_worst_type(self, desk_env, smooth_env):
        sp = ContractSpace.for_types([desk_env, bernoulli_quadratic(4.0, 1.0)])
        assert sp.lipschitz == pytest.approx(4.0)

    def test_uncertified_refused(self):
        env = AgentType(PI2, BernoulliEffort(), QuadraticCost(0.0), 1.0, beta_max=1.0)
        with pytest.raises(UncertifiedSpaceError, match="SDFC"):
            ContractSpace.for_types([env])

    def test_zooming_gate_checks_types(self, desk_env):
        bad = AgentType(PI2, BernoulliEffort(), QuadraticCost(0.0), 1.0, beta_max=1.0)
        sp = ContractSpace.for_types([desk_env])
        with pytest.raises(UncertifiedSpaceError):
            run_zooming(stochastic(bad), sp, 10, np.random.default_rng(0))

    def test_grid_limits(self):
        with pytest.raises(EnvironmentError_):
            ContractSpace("monotone-grid", OutcomeGrid((0, 0.3, 0.6, 1.0)), 4.0, h=0.1)
        with pytest.raises(EnvironmentError_):
            ContractSpace("monotone-grid", PI2, 4.0, h=0.01)

    def test_monotone_grid(self):
        sp = ContractSpace("monotone-grid", OutcomeGrid((0, 0.5, 1.0)), 4.0, h=0.25)
        g = sp.grid()
        assert len(g) == 35  # multisets of size 3 from 5 levels
        assert np.all(np.diff(g, axis=1) >= 0)


class TestCovering:
    def test_gap_found(self):
        pos = np.array([0.1, 0.5])
        assert _uncovered_interval(pos, np.array([0.2, 0.1]), 1.0) == pytest.approx(0.3)

    def test_left_edge(self):
        assert _uncovered_interval(np.array([0.5]), np.array([0.1]), 1.0) == 0.0

    def test_right_edge(self):
        assert _uncovered_interval(np.array([0.4]), np.array([0.4]), 1.0) == pytest.approx(0.8)

    def test_covered(self):
        assert _uncovered_interval(np.array([0.2, 0.7]), np.array([0.3, 0.3]), 1.0) is None

    def test_final_state_covers_space(self):
        env = peaked_instance()
        sp = ContractSpace.for_types([env])
        T = 3000
        tr = run_zooming(stochastic(env), sp, T, np.random.default_rng(5))
        pulls = np.asarray(tr.meta["pulls"], float)
        arms = np.asarray(tr.arms, float)
        # the last pull shrank one radius after the final coverage check
        pulls[tr.arm_id[-1]] -= 1
        zoom = np.sqrt(8 * np.log(T) / np.maximum(pulls, 1)) / sp.lipschitz
        pts = np.linspace(0, 1, 5001)
        assert np.all((np.abs(pts[:, None] - arms[None, :]) <= zoom[None, :] + 1e-12).any(axis=1))


class TestZooming:
    def test_one_round(self, desk_env):
        tr = run_zooming(stochastic(desk_env), ContractSpace.for_types([desk_env]), 1, np.random.default_rng(0))
        assert tr.T == 1
        assert tr.regret <= tr.benchmark + 1e-12

    def test_regret_nondecreasing(self, desk_env):
        tr = run_zooming(stochastic(desk_env), ContractSpace.for_types([desk_env]), 500, np.random.default_rng(1))
        assert np.all(np.diff(tr.cum_regret) >= -1e-12)

    def test_deterministic(self, desk_env):
        sp = ContractSpace.for_types([desk_env])
        a = run_zooming(stochastic(desk_env), sp, 300, np.random.default_rng(2))
        b = run_zooming(stochastic(desk_env), sp, 300, np.random.default_rng(2))
        assert np.array_equal(a.arm_id, b.arm_id) and np.array_equal(a.realized, b.realized)

    def test_monotone_grid_space(self, desk_env):
        sp = ContractSpace.for_types([desk_env], kind="monotone-grid", h=0.1)
        tr = run_zooming(stochastic(desk_env), sp, 400, np.random.default_rng(3))
        assert tr.benchmark == pytest.approx(0.125, abs=1e-9)  # s = (0, 0.5) is on the grid
        assert tr.regret >= -1e-9

    def test_csv(self, desk_env):
        tr = run_zooming(stochastic(desk_env), ContractSpace.for_types([desk_env]), 20, np.random.default_rng(0))
        lines = tr.to_csv().splitlines()
        assert lines[0] == "round,arm_id,contract_repr,realized_utility,cum_regret"
        assert len(lines) == 21

    def test_regret_exponent_peaked(self):
        env = peaked_instance()
        sp = ContractSpace.for_types([env])
        Ts = (2000, 8000)
        R = [np.mean([run_zooming(stochastic(env), sp, T, np.random.default_rng(s)).regret for s in range(20)]) for T in Ts]
        assert loglog_slope(Ts, R) <= 0.8


class TestAdversarial:
    def test_length_mismatch(self, desk_env):
        sp = ContractSpace.for_types([desk_env])
        with pytest.raises(EnvironmentError_):
            run_adversarial_grid(ArrivalProcess.adversarial([desk_env] * 5), sp, 6, np.random.default_rng(0))

    def test_needs_adversarial(self, desk_env):
        sp = ContractSpace.for_types([desk_env])
        with pytest.raises(EnvironmentError_):
            run_adversarial_grid(stochastic(desk_env), sp, 5, np.random.default_rng(0))

    def test_indistinguishable_types(self, desk_env):
        twin = linear_twin(desk_env)
        sp = ContractSpace.for_types([desk_env, twin], h=0.1)
        T = 200
        one = run_adversarial_grid(ArrivalProcess.adversarial([desk_env] * T), sp, T, np.random.default_rng(0))
        alt = run_adversarial_grid(ArrivalProcess.adversarial([desk_env, twin] * (T // 2)), sp, T, np.random.default_rng(0))
        assert alt.benchmark == pytest.approx(one.benchmark, abs=1e-9)

    @pytest.mark.parametrize("seed", range(3))
    def test_constant_sequence_matches_zooming(self, seed):
        env = peaked_instance()
        h = 0.05
        sp = ContractSpace.for_types([env], h=h)
        T = 20_000
        z = run_zooming(stochastic(env), sp, T, np.random.default_rng(seed))
        a = run_adversarial_grid(ArrivalProcess.adversarial([env] * T), sp, T, np.random.default_rng(seed))
        assert abs(z.arms[z.most_played()] - a.arms[a.most_played()]) <= h + 1e-12
        assert a.meta["stand_in_for"] == "adversarial zooming"

    def test_front_loaded_adversary(self, desk_env):
        env = peaked_instance()
        sp = ContractSpace.for_types([desk_env, env], h=0.05)
        Ts = (2000, 8000)
        R = []
        for T in Ts:
            seq = [desk_env] * (T // 10) + [env] * (T - T // 10)
            R.append(np.mean([
                run_adversarial_grid(ArrivalProcess.adversarial(seq), sp, T, np.random.default_rng(s)).regret
                for s in range(10)
            ]))
        assert loglog_slope(Ts, R) <= 0.9


def test_loglog_slope_exact():
    Ts = np.array([1e3, 1e4, 1e5])
    assert loglog_slope(Ts, 3 * Ts**0.6) == pytest.approx(0.6)
