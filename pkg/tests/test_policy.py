"""Tests for baseline and rollout policies and the Monte Carlo evaluator."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdnum import rng as rngmod
from sdnum.contagion import Mode, SystemState
from sdnum.errors import ConfigError
from sdnum.policy import (
    NearestFirePolicy,
    NonePolicy,
    OldFirstPolicy,
    RandomPolicy,
    baseline_policy,
    evaluate_F,
    final_counts,
    rollout_policy,
    run_episode,
    run_replica,
    sample_F,
)
from sdnum.scenarios import (
    DemographicSpec,
    GridSpec,
    PandemicScenario,
    SiteState,
    UnitState,
    WildfireScenario,
)


@pytest.fixture
def tiny_pandemic():
    # ids 0-1 teens, 2-3 adults, 4-5 elderly
    spec = DemographicSpec(n_teen=2, n_adult=2, n_elderly=2, er_edge_prob=0.5)
    return PandemicScenario("tiny", spec, seed=1, initial_infections=1)



@pytest.fixture(scope="module")
def fuzz_sites():
    spec = DemographicSpec(n_teen=4, n_adult=6, n_elderly=4, er_edge_prob=0.3)
    pandemic = PandemicScenario("loc1", spec, seed=7, initial_infections=2)
    wildfire = WildfireScenario("loc1", GridSpec(width=5, height=5), dt=0.1, initial_fires=2)
    return pandemic, wildfire


def _paired_gaps(estimates):
    """Mean and standard error of F(y+1) - F(y) per replica, for neighbouring budgets."""
    out = []
    for lower, upper in zip(estimates, estimates[1:]):
        diff = np.asarray(upper.values) - np.asarray(lower.values)
        out.append((diff.mean(), diff.std(ddof=1) / np.sqrt(len(diff))))
    return out


class TestBaselines:
    def test_none_does_nothing(self, pandemic):
        state = pandemic.initial_state(rngmod.make_rng(0))
        assert NonePolicy().decide(pandemic, state, 3, rngmod.make_rng(0)) == ()

    def test_random_subset_of_susceptible(self, pandemic):
        state = pandemic.initial_state(rngmod.make_rng(0))
        action = RandomPolicy().decide(pandemic, state, 3, rngmod.make_rng(4))
        assert len(action) == 3
        assert list(action) == sorted(action)
        assert set(action) <= set(pandemic.action_mask(state).tolist())

    def test_random_budget_larger_than_mask(self, tiny_pandemic):
        state = SiteState(SystemState(np.array([1, 1, 1, 1, 0, 2])))
        assert RandomPolicy().decide(tiny_pandemic, state, 5, rngmod.make_rng(0)) == (4,)

    def test_old_first_prefers_elderly(self, tiny_pandemic):
        state = SiteState(SystemState.initial(6, [0]))
        policy = OldFirstPolicy()
        assert policy.decide(tiny_pandemic, state, 2, rngmod.make_rng(0)) == (4, 5)
        three = policy.decide(tiny_pandemic, state, 3, rngmod.make_rng(0))
        assert three[-2:] == (4, 5)
        assert three[0] in (2, 3)

    def test_old_first_falls_back_to_younger_groups(self, tiny_pandemic):
        state = SiteState(SystemState(np.array([0, 0, 1, 1, 2, 3])))
        action = OldFirstPolicy().decide(tiny_pandemic, state, 1, rngmod.make_rng(0))
        assert action in ((0,), (1,))

    def test_nearest_fire_claims_distinct_fires(self, wildfire):
        state = SiteState(SystemState.initial(25, [6, 8]), UnitState((12, 12), 1))
        assert NearestFirePolicy().decide(wildfire, state, 2, rngmod.make_rng(0)) == (6, 8)

    def test_nearest_fire_walks_toward_distant_fire(self, wildfire):
        state = SiteState(SystemState.initial(25, [0]), UnitState((12,), 1))
        assert NearestFirePolicy().decide(wildfire, state, 1, rngmod.make_rng(0)) == (6,)

    def test_nearest_fire_without_fire_stays(self, wildfire):
        state = SiteState(SystemState.initial(25, []), UnitState((12, 7), 1))
        assert NearestFirePolicy().decide(wildfire, state, 2, rngmod.make_rng(0)) == (12, 7)

    def test_random_wildfire_moves_within_reach(self, wildfire):
        state = SiteState(SystemState.initial(25, [0]), UnitState((12, 12), 1))
        action = RandomPolicy().decide(wildfire, state, 2, rngmod.make_rng(3))
        wildfire.validate_action(state, action, 2)

    def test_factory(self):
        assert isinstance(baseline_policy("none"), NonePolicy)
        with pytest.raises(ConfigError):
            baseline_policy("old_first", "wildfire")
        with pytest.raises(ConfigError):
            baseline_policy("nearest_fire", "pandemic")
        with pytest.raises(ConfigError):
            baseline_policy("greedy")


class TestRollout:
    def test_rejects_bad_parameters(self):
        with pytest.raises(ConfigError):
            rollout_policy(NonePolicy(), n_rollouts=0, horizon=3, gamma=0.9)
        with pytest.raises(ConfigError):
            rollout_policy(NonePolicy(), n_rollouts=2, horizon=3, gamma=0.0)

    def test_feasible_and_deterministic(self, pandemic):
        policy = rollout_policy(
            OldFirstPolicy(), n_rollouts=2, horizon=3, gamma=0.9, candidates=3
        )
        state = pandemic.initial_state(rngmod.make_rng(0))
        a = policy.decide(pandemic, state, 2, rngmod.make_rng(8))
        b = policy.decide(pandemic, state, 2, rngmod.make_rng(8))
        assert a == b
        pandemic.validate_action(state, a, 2)
        assert policy.name == "rollout(old_first)"

    def test_zero_budget_keeps_base_action(self, pandemic):
        policy = rollout_policy(NonePolicy(), n_rollouts=2, horizon=2, gamma=1.0)
        state = pandemic.initial_state(rngmod.make_rng(0))
        assert policy.decide(pandemic, state, 0, rngmod.make_rng(1)) == ()

    def test_wildfire_rollout(self, wildfire):
        policy = rollout_policy(NearestFirePolicy(), n_rollouts=2, horizon=2, gamma=0.95)
        state = wildfire.deploy(wildfire.initial_state(rngmod.make_rng(2)), 2)
        action = policy.decide(wildfire, state, 2, rngmod.make_rng(0))
        wildfire.validate_action(state, action, 2)


class TestEvaluate:
    def test_same_seed_same_estimate(self, pandemic):
        a = evaluate_F(pandemic, OldFirstPolicy(), 2, 4, 0.9, 6, seed=5)
        b = evaluate_F(pandemic, OldFirstPolicy(), 2, 4, 0.9, 6, seed=5)
        assert np.array_equal(a.values, b.values)
        assert a.n == 6
        assert a.stderr >= 0.0

    def test_workers_do_not_change_the_result(self, pandemic):
        one = evaluate_F(pandemic, RandomPolicy(), 1, 3, 0.9, 5, seed=2, workers=1)
        two = evaluate_F(pandemic, RandomPolicy(), 1, 3, 0.9, 5, seed=2, workers=2)
        assert np.array_equal(one.values, two.values)

    def test_zero_budget_equals_doing_nothing(self, pandemic):
        idle = evaluate_F(pandemic, NonePolicy(), 0, 4, 1.0, 4, seed=9)
        zero = evaluate_F(pandemic, OldFirstPolicy(), 0, 4, 1.0, 4, seed=9)
        assert np.array_equal(idle.values, zero.values)

    def test_values_are_discounted_sums(self, pandemic):
        estimate = evaluate_F(pandemic, NonePolicy(), 0, 3, 0.5, 2, seed=1)
        replica = run_replica(pandemic, NonePolicy(), 0, 3, 0.5, seed=1, replica=1)
        assert estimate.values[1] == replica
        assert len(estimate.samples()) == 2

    def test_single_replica_has_zero_stderr(self, pandemic):
        assert evaluate_F(pandemic, NonePolicy(), 0, 2, 1.0, 1, seed=0).stderr == 0.0

    @pytest.mark.parametrize(
        "kwargs", [{"n_replicas": 0}, {"horizon": 0}, {"gamma": 1.5}]
    )
    def test_invalid_arguments(self, pandemic, kwargs):
        args = {"horizon": 2, "gamma": 1.0, "n_replicas": 2, "seed": 0}
        args.update(kwargs)
        with pytest.raises(ConfigError):
            evaluate_F(pandemic, NonePolicy(), 0, **args)

    def test_grid_keeps_budget_order(self, pandemic):
        estimates = sample_F(pandemic, OldFirstPolicy(), [0, 1, 2], 3, 0.9, 4, seed=3)
        assert [e.y for e in estimates] == [0, 1, 2]

    def test_branch_from_ground_state(self, pandemic):
        start = SiteState(SystemState.initial(14, []))
        estimate = evaluate_F(pandemic, NonePolicy(), 0, 5, 1.0, 3, seed=0, start=start)
        # nothing is infected, so nobody can die
        assert estimate.mean == 0.0

    def test_old_first_estimate_grows_with_budget(self, pandemic):
        estimates = sample_F(pandemic, OldFirstPolicy(), [0, 1, 2, 3], 5, 0.99, 400, seed=11)
        for mean, se in _paired_gaps(estimates):
            assert mean >= -3 * se - 1e-9

    def test_rollout_estimate_grows_with_budget(self, pandemic):
        policy = rollout_policy(
            OldFirstPolicy(), n_rollouts=2, horizon=2, gamma=0.99, candidates=2
        )
        estimates = sample_F(pandemic, policy, [0, 1, 2], 4, 0.99, 80, seed=12)
        for mean, se in _paired_gaps(estimates):
            assert mean >= -3 * se - 1e-9


class TestFeasibility:
    @settings(max_examples=60, deadline=None)
    @given(
        codes=st.lists(st.sampled_from(Mode.PANDEMIC.valid_codes), min_size=14, max_size=14),
        budget=st.integers(0, 5),
        seed=st.integers(0, 2**32),
        name=st.sampled_from(["none", "random", "old_first", "rollout"]),
    )
    def test_pandemic_actions_are_feasible(self, fuzz_sites, codes, budget, seed, name):
        pandemic, _ = fuzz_sites
        if name == "rollout":
            policy = rollout_policy(
                OldFirstPolicy(), n_rollouts=2, horizon=2, gamma=0.9, candidates=2
            )
        else:
            policy = baseline_policy(name, "pandemic")
        state = SiteState(SystemState(np.array(codes)))
        action = policy.decide(pandemic, state, budget, rngmod.make_rng(seed))
        pandemic.validate_action(state, action, budget)
        if name != "none":
            assert len(action) == min(budget, len(pandemic.action_mask(state)))

    @settings(max_examples=60, deadline=None)
    @given(
        codes=st.lists(st.sampled_from(Mode.WILDFIRE.valid_codes), min_size=25, max_size=25),
        positions=st.lists(st.integers(0, 24), max_size=4),
        seed=st.integers(0, 2**32),
        name=st.sampled_from(["none", "random", "nearest_fire", "rollout"]),
    )
    def test_wildfire_actions_are_feasible(self, fuzz_sites, codes, positions, seed, name):
        _, wildfire = fuzz_sites
        if name == "rollout":
            policy = rollout_policy(
                NearestFirePolicy(), n_rollouts=2, horizon=2, gamma=0.9, candidates=2
            )
        else:
            policy = baseline_policy(name, "wildfire")
        budget = len(positions)
        state = SiteState(SystemState(np.array(codes)), UnitState(tuple(positions), 1))
        action = policy.decide(wildfire, state, budget, rngmod.make_rng(seed))
        wildfire.validate_action(state, action, budget)

class TestEpisodes:
    def test_episode_counts(self, pandemic):
        rows = run_episode(pandemic, OldFirstPolicy(), 1, 5, seed=4, replica=0)
        assert len(rows) == 6
        assert all(sum(r.values()) == 14 for r in rows)
        assert rows[-1]["vaccinated"] >= 1

    def test_final_counts_per_replica(self, wildfire):
        counts = final_counts(wildfire, NearestFirePolicy(), 1, 3, 4, seed=0)
        assert len(counts) == 4
        assert all(c["vulnerable"] + c["burning"] + c["burnt"] + c["extinguished"] == 25
                   for c in counts)

    def test_final_counts_match_across_workers(self, pandemic):
        one = final_counts(pandemic, RandomPolicy(), 1, 3, 4, seed=6)
        two = final_counts(pandemic, RandomPolicy(), 1, 3, 4, seed=6, workers=2)
        assert one == two

    def test_final_counts_rejects_empty_runs(self, pandemic):
        with pytest.raises(ConfigError):
            final_counts(pandemic, NonePolicy(), 1, 0, 3, seed=0)
        with pytest.raises(ConfigError):
            final_counts(pandemic, NonePolicy(), 1, 3, 0, seed=0)
