"""Tests for the propagation engine and graph types."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdnum import rng as rngmod
from sdnum.contagion import (
    EpochConfig,
    Mode,
    NodeState,
    PropagationGraph,
    SystemState,
    count_by_state,
    read_graph,
    simulate,
    step_epoch,
    step_subinterval,
    trajectory_rows,
    write_graph,
)
from sdnum.errors import ConfigError, ContractViolation, RejectedActionError
from sdnum.scenarios import GridSpec, grid_graph


class TestPropagationGraph:
    def test_rejects_self_loop(self):
        with pytest.raises(ConfigError):
            PropagationGraph.from_edges(2, [(0, 0, 0.5)])

    def test_rejects_duplicate_edge(self):
        with pytest.raises(ConfigError):
            PropagationGraph.from_edges(2, [(0, 1, 0.5), (0, 1, 0.2)])

    def test_rejects_rate_above_one(self):
        with pytest.raises(ConfigError):
            PropagationGraph.from_edges(2, [(0, 1, 1.5)])

    def test_rejects_death_plus_recovery_above_one(self):
        with pytest.raises(ConfigError):
            PropagationGraph.from_edges(2, [], death_prob=0.7, recovery_prob=0.5)

    def test_wildfire_graph_cannot_recover(self):
        with pytest.raises(ConfigError):
            PropagationGraph.from_edges(2, [], recovery_prob=0.1, mode="wildfire")

    def test_rate_sum_checked_against_dt(self):
        graph = PropagationGraph.from_edges(3, [(1, 0, 0.8), (2, 0, 0.7)])
        with pytest.raises(ConfigError, match="node 0"):
            graph.validate(1.0)
        graph.validate(0.5)

    def test_rate_sum_counts_incoming_edges(self):
        # one source spreading to many targets is fine; many sources reaching one node is not
        fan_out = PropagationGraph.from_edges(4, [(0, 1, 0.9), (0, 2, 0.9), (0, 3, 0.9)])
        fan_out.validate(1.0)
        fan_in = PropagationGraph.from_edges(4, [(1, 0, 0.9), (2, 0, 0.9), (3, 0, 0.9)])
        with pytest.raises(ConfigError, match="node 0"):
            fan_in.validate(1.0)

    def test_rate_sum_of_grid_cell_with_dense_neighbours(self):
        vegetation = np.zeros(9)
        vegetation[4] = 1.0
        spec = GridSpec(width=3, height=3, kappa=0.25, vegetation=vegetation, density=vegetation)
        graph = grid_graph(spec)
        # eight burning neighbours each reach the centre at rate 1.0
        with pytest.raises(ConfigError, match="node 4"):
            graph.validate(0.5)
        graph.validate(0.125)

    def test_symmetric_edges(self):
        graph = PropagationGraph.from_edges(3, [(0, 1, 0.25)], symmetric=True)
        assert graph.rate(0, 1) == 0.25
        assert graph.rate(1, 0) == 0.25
        assert graph.rate(0, 2) == 0.0
        assert graph.degree().tolist() == [1, 1, 0]

    def test_text_format_is_exact(self):
        graph = PropagationGraph.from_edges(
            3, [(0, 1, 0.1), (2, 1, 1.0 / 3.0)], death_prob=[0.01, 0.2, 0.0], recovery_prob=0.05
        )
        again = read_graph(write_graph(graph))
        assert again.node_count == 3
        assert np.array_equal(again.rates, graph.rates)
        assert np.array_equal(again.death_prob, graph.death_prob)
        assert again.mode is Mode.PANDEMIC

    def test_text_format_rejects_missing_nodes(self):
        with pytest.raises(ConfigError):
            read_graph("graph pandemic 2\nnode 0 0.0 0.0\n")


class TestEpochConfig:
    @pytest.mark.parametrize("dt", [0.0, -0.1, 1.5, 0.3])
    def test_invalid_dt(self, dt):
        with pytest.raises(ConfigError):
            EpochConfig(dt=dt)

    def test_substeps(self):
        assert EpochConfig(dt=0.1).substeps == 10
        assert EpochConfig(dt=1.0).substeps == 1


class TestStepEpoch:
    def test_certain_contact_infects_neighbour(self, chain_graph):
        state = SystemState.initial(3, [0])
        nxt = step_epoch(chain_graph, state, None, EpochConfig(dt=1.0), rngmod.make_rng(1))
        # synchronous update: node 2 only sees node 1 as susceptible
        assert nxt.states.tolist() == [1, 1, 0]
        assert nxt.epoch == 1

    def test_certain_death_and_contact_in_same_step(self):
        graph = PropagationGraph.from_edges(2, [(0, 1, 1.0)], death_prob=[1.0, 0.0])
        nxt = step_epoch(graph, SystemState.initial(2, [0]), None, EpochConfig(), None)
        assert nxt.states.tolist() == [NodeState.DEAD, NodeState.INFECTED]

    def test_vaccination_blocks_infection(self, chain_graph):
        state = SystemState.initial(3, [0])
        nxt = step_epoch(chain_graph, state, np.array([1]), EpochConfig(), rngmod.make_rng(2))
        assert nxt.states.tolist() == [1, NodeState.VACCINATED, 0]

    def test_vaccinating_infected_node_is_rejected(self, chain_graph):
        with pytest.raises(RejectedActionError):
            step_epoch(chain_graph, SystemState.initial(3, [0]), np.array([0]), EpochConfig())

    def test_action_outside_graph_is_rejected(self, chain_graph):
        with pytest.raises(RejectedActionError):
            step_epoch(chain_graph, SystemState.initial(3, [0]), np.array([5]), EpochConfig())

    def test_extinguish_requires_burning_cell(self):
        graph = PropagationGraph.from_edges(2, [(0, 1, 0.5)], mode="wildfire")
        state = SystemState.initial(2, [0])
        with pytest.raises(RejectedActionError):
            step_epoch(graph, state, np.array([1]), EpochConfig())
        nxt = step_epoch(graph, state, np.array([0]), EpochConfig(), rngmod.make_rng(0))
        assert nxt.states.tolist() == [NodeState.VACCINATED, NodeState.SUSCEPTIBLE]

    def test_state_must_fit_graph(self, chain_graph):
        with pytest.raises(ContractViolation):
            step_epoch(chain_graph, SystemState.initial(2, [0]), None, EpochConfig())

    def test_recovered_code_invalid_for_wildfire(self):
        graph = PropagationGraph.from_edges(2, [], mode="wildfire")
        state = SystemState(np.array([NodeState.RECOVERED, 0]))
        with pytest.raises(ContractViolation):
            step_epoch(graph, state, None, EpochConfig())


class TestStepSubinterval:
    def test_rejects_dt_breaking_rate_sum(self):
        graph = PropagationGraph.from_edges(4, [(1, 0, 0.9), (2, 0, 0.9), (3, 0, 0.9)])
        state = SystemState.initial(4, [1, 2, 3])
        with pytest.raises(ConfigError):
            step_subinterval(graph, state, None, 0, rngmod.make_rng(0), dt=1.0)
        nxt = step_subinterval(graph, state, None, 0, rngmod.make_rng(0), dt=0.25)
        assert len(nxt) == 4

    def test_single_contact_follows_edge_draw(self):
        graph = PropagationGraph.from_edges(2, [(0, 1, 0.5)])
        state = SystemState.initial(2, [0])
        for seed in range(50):
            # the edge uniform is the first draw of the sub-interval
            contact = rngmod.make_rng(seed).random() < 0.25
            nxt = step_subinterval(graph, state, None, 0, rngmod.make_rng(seed), dt=0.5)
            assert (nxt.states[1] == NodeState.INFECTED) == contact
            assert nxt.epoch == state.epoch

    def test_single_contact_probability(self):
        graph = PropagationGraph.from_edges(2, [(0, 1, 0.5)])
        state = SystemState.initial(2, [0])
        rng = rngmod.make_rng(17)
        trials = 40_000
        hits = sum(
            step_subinterval(graph, state, None, 0, rng, dt=0.5).states[1] == NodeState.INFECTED
            for _ in range(trials)
        )
        se = np.sqrt(0.25 * 0.75 / trials)
        assert abs(hits / trials - 0.25) <= 5 * se


class TestReproducibility:
    def test_same_seed_same_trajectory(self, pandemic):
        start = SystemState.initial(pandemic.graph.node_count, [0, 5])
        a = simulate(pandemic.graph, start, 8, 1.0, seed=3)
        b = simulate(pandemic.graph, start, 8, 1.0, seed=3)
        assert a == b

    def test_streams_do_not_depend_on_use_order(self):
        first = rngmod.make_rng(9, rngmod.EPOCH, 0, 4).random(3)
        rngmod.make_rng(9, rngmod.EPOCH, 0, 1).random(100)
        again = rngmod.make_rng(9, rngmod.EPOCH, 0, 4).random(3)
        assert np.array_equal(first, again)

    def test_derived_seeds_differ_by_key(self):
        assert rngmod.derive_seed(1, rngmod.SITE, 0) != rngmod.derive_seed(1, rngmod.SITE, 1)

    def test_trajectory_rows_conserve_nodes(self, pandemic):
        start = SystemState.initial(pandemic.graph.node_count, [0])
        rows = trajectory_rows(simulate(pandemic.graph, start, 5, 1.0, seed=1))
        assert [r[0] for r in rows] == list(range(6))
        assert all(sum(r[1:]) == pandemic.graph.node_count for r in rows)


@st.composite
def graphs_and_states(draw):
    n = draw(st.integers(min_value=2, max_value=8))
    mode = draw(st.sampled_from(["pandemic", "wildfire"]))
    pairs = [(s, t) for s in range(n) for t in range(n) if s != t]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs)))
    rates = draw(st.lists(st.floats(0.0, 1.0 / 8), min_size=len(chosen), max_size=len(chosen)))
    death = draw(st.lists(st.floats(0.0, 0.5), min_size=n, max_size=n))
    if mode == "pandemic":
        recovery = draw(st.lists(st.floats(0.0, 0.5), min_size=n, max_size=n))
    else:
        recovery = [0.0] * n
    graph = PropagationGraph.from_edges(
        n,
        [(s, t, w) for (s, t), w in zip(chosen, rates)],
        death_prob=death,
        recovery_prob=recovery,
        mode=mode,
    )
    codes = Mode(mode).valid_codes
    states = draw(st.lists(st.sampled_from(codes), min_size=n, max_size=n))
    seed = draw(st.integers(min_value=0, max_value=2**32))
    return graph, SystemState(np.array(states)), seed


class TestTransitionProperties:
    @settings(max_examples=60, deadline=None)
    @given(graphs_and_states())
    def test_absorbing_states_never_change(self, case):
        graph, state, seed = case
        nxt = step_epoch(graph, state, None, EpochConfig(dt=0.5), rngmod.make_rng(seed))
        absorbing = np.isin(state.states, [NodeState.DEAD, NodeState.VACCINATED, 4])
        assert np.array_equal(nxt.states[absorbing], state.states[absorbing])
        assert len(nxt) == len(state)

    @settings(max_examples=60, deadline=None)
    @given(graphs_and_states())
    def test_only_legal_transitions(self, case):
        graph, state, seed = case
        nxt = step_epoch(graph, state, None, EpochConfig(dt=1.0), rngmod.make_rng(seed))
        assert set(nxt.states.tolist()) <= set(graph.mode.valid_codes)
        was_susceptible = state.states == NodeState.SUSCEPTIBLE
        # without actions a susceptible node can only stay or become infected (and die later)
        assert not np.any(nxt.states[was_susceptible] == NodeState.VACCINATED)
        counts = count_by_state(nxt)
        assert sorted(counts) == [0, 1, 2, 3, 4]
        assert sum(counts.values()) == graph.node_count
