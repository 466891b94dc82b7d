"""Unit tests for the BCM dynamics and observation operators."""

import numpy as np
import pytest
from pydantic import ValidationError

from bcm_infer.constants import Granularity
from bcm_infer.model.dynamics import (
    adjacency,
    confidence_set,
    drift,
    initial_opinions,
    n_agents_from_pairs,
    observe,
    observe_batch,
    pair_index,
    simulate,
    step,
)
from bcm_infer.model.types import (
    EdgeObservation,
    ModelParams,
    ObservationSeries,
    ObservationShapeError,
    OpinionState,
)

EXAMPLE = OpinionState(np.array([0.1, 0.25, 0.9]))


class TestModelParams:
    """Test parameter validation."""

    def test_valid_params(self, example_params):
        """Test a valid parameter set and its pair count."""
        assert example_params.n_pairs == 3

    @pytest.mark.parametrize(
        "field,value",
        [("epsilon", 0.0), ("epsilon", 1.5), ("mu", 0.6), ("mu", -0.1), ("n_agents", 1)],
    )
    def test_out_of_range(self, field, value):
        """Test that out-of-range values are rejected with the field name."""
        kwargs = dict(epsilon=0.2, mu=0.1, n_agents=3, horizon=1)
        kwargs[field] = value
        with pytest.raises(ValidationError) as exc_info:
            ModelParams(**kwargs)
        assert field in str(exc_info.value)

    def test_params_are_frozen(self, example_params):
        """Test that params cannot be mutated."""
        with pytest.raises(ValidationError):
            example_params.epsilon = 0.3


class TestConfidenceSet:
    """Test the confidence set of an agent."""

    def test_example(self):
        """Test the hand-evaluated example."""
        assert confidence_set(EXAMPLE, 0, 0.2).tolist() == [0, 1]
        assert confidence_set(EXAMPLE, 2, 0.2).tolist() == [2]

    def test_full_set_at_unit_bound(self, rng):
        """Test that epsilon = 1 includes everyone."""
        state = OpinionState(rng.uniform(size=7))
        for agent in range(7):
            assert confidence_set(state, agent, 1.0).tolist() == list(range(7))

    def test_equal_opinions(self):
        """Test zero distance."""
        assert confidence_set(OpinionState([0.5, 0.5]), 0, 0.01).tolist() == [0, 1]

    def test_boundary_ties_interact(self):
        """Test that a distance exactly equal to epsilon counts."""
        state = OpinionState([0.25, 0.5])
        assert confidence_set(state, 0, 0.25).tolist() == [0, 1]

    def test_membership_is_symmetric(self, rng):
        """Test j in set(i) iff i in set(j)."""
        state = OpinionState(rng.uniform(size=10))
        for i in range(10):
            for j in confidence_set(state, i, 0.2):
                assert i in confidence_set(state, int(j), 0.2)

    def test_agent_out_of_range(self):
        """Test that an invalid agent index raises."""
        with pytest.raises(IndexError):
            confidence_set(EXAMPLE, 3, 0.2)


class TestStep:
    """Test the synchronous update."""

    def test_example(self, example_params):
        """Test the hand-evaluated update."""
        nxt = step(EXAMPLE, example_params)
        np.testing.assert_allclose(nxt.opinions, [0.115, 0.235, 0.9], atol=1e-12)
        assert nxt.time == 1

    def test_zero_mu_leaves_state(self, example_params):
        """Test that mu = 0 is the identity."""
        params = example_params.model_copy(update={"mu": 0.0})
        np.testing.assert_array_equal(step(EXAMPLE, params).opinions, EXAMPLE.opinions)

    def test_uniform_state_is_fixed_point(self, example_params):
        """Test that identical opinions do not move."""
        state = OpinionState([0.4, 0.4, 0.4])
        nxt = step(state, example_params)
        np.testing.assert_allclose(nxt.opinions, state.opinions, atol=1e-15)

    def test_epsilon_override(self, example_params):
        """Test that the inference engines can substitute their assumed bound."""
        nxt = step(EXAMPLE, example_params, epsilon=1.0)
        assert nxt.opinions[2] < 0.9

    def test_noise_requires_generator(self, example_params):
        """Test that noisy steps need a generator."""
        params = example_params.model_copy(update={"noise_sigma": 0.01})
        with pytest.raises(ValueError):
            step(EXAMPLE, params)

    def test_noisy_step_is_clamped(self, example_params):
        """Test clamping to [0, 1] after noise."""
        params = example_params.model_copy(update={"noise_sigma": 5.0})
        gen = np.random.default_rng(0)
        for _ in range(20):
            nxt = step(EXAMPLE, params, gen)
            assert np.all((nxt.opinions >= 0.0) & (nxt.opinions <= 1.0))

    def test_mean_conservation(self, rng):
        """Test that the noise-free update conserves the opinion sum."""
        params = ModelParams(epsilon=0.25, mu=0.02, n_agents=40, horizon=1)
        for _ in range(50):
            state = OpinionState(rng.uniform(size=40))
            nxt = step(state, params)
            assert abs(nxt.opinions.sum() - state.opinions.sum()) < 1e-9

    def test_batched_drift_matches_single(self, rng):
        """Test that drift is batched over leading axes."""
        batch = rng.uniform(size=(4, 9))
        expected = np.stack([drift(row, 0.2, 0.05) for row in batch])
        np.testing.assert_allclose(drift(batch, 0.2, 0.05), expected, atol=1e-15)


class TestObserve:
    """Test the observation operator."""

    def test_edge_example(self):
        """Test edge indicators of the hand example."""
        assert observe(EXAMPLE, 0.2, Granularity.EDGE).tolist() == [1, 0, 0]

    def test_node_and_global_example(self):
        """Test aggregated counts of the hand example."""
        assert observe(EXAMPLE, 0.2, "node").tolist() == [1, 1, 0]
        assert observe(EXAMPLE, 0.2, "global").tolist() == [1]

    def test_complete_interaction(self, rng):
        """Test that epsilon = 1 makes every pair interact."""
        state = OpinionState(rng.uniform(size=8))
        assert observe(state, 1.0, Granularity.GLOBAL).tolist() == [8 * 7 // 2]

    def test_aggregation_identities(self, rng):
        """Test node = edge row sums and global = half the node sum."""
        states = rng.uniform(size=(30, 7))
        edges = observe_batch(states, 0.2, Granularity.EDGE)
        nodes = observe_batch(states, 0.2, Granularity.NODE)
        totals = observe_batch(states, 0.2, Granularity.GLOBAL)
        rows, cols = pair_index(7)
        for t in range(30):
            a = np.zeros((7, 7), dtype=int)
            a[rows, cols] = edges[t]
            a[cols, rows] = edges[t]
            np.testing.assert_array_equal(nodes[t], a.sum(axis=1))
            assert 2 * totals[t, 0] == nodes[t].sum()

    def test_adjacency_has_unit_diagonal(self, rng):
        """Test self-inclusion."""
        a = adjacency(rng.uniform(size=5), 0.01)
        assert a.diagonal().all()
        np.testing.assert_array_equal(a, a.T)


class TestPairIndex:
    """Test the pair ordering helpers."""

    def test_row_major_upper_triangle(self):
        """Test the (0,1), (0,2), (1,2) order."""
        rows, cols = pair_index(3)
        assert list(zip(rows.tolist(), cols.tolist())) == [(0, 1), (0, 2), (1, 2)]

    def test_n_agents_from_pairs(self):
        """Test inversion of E = N(N-1)/2."""
        assert n_agents_from_pairs(4950) == 100
        with pytest.raises(ValueError):
            n_agents_from_pairs(5)


class TestValueTypes:
    """Test observation value types."""

    def test_edge_observation_rejects_non_binary(self):
        """Test binary indicators."""
        with pytest.raises(ObservationShapeError):
            EdgeObservation(np.array([0, 2, 1]))

    def test_global_series_reshaped(self):
        """Test that a 1-D global series becomes (steps, 1)."""
        series = ObservationSeries(Granularity.GLOBAL, np.array([3, 2, 1]))
        assert series.values.shape == (3, 1)
        assert series.dim == 1

    def test_window(self):
        """Test that a window is inclusive of its last step."""
        series = ObservationSeries("node", np.arange(12).reshape(4, 3))
        assert len(series.window(2)) == 3

    def test_edge_view_requires_edge_series(self):
        """Test the edge view guard."""
        series = ObservationSeries("node", np.zeros((2, 3)))
        with pytest.raises(ObservationShapeError):
            series.edge(0)

    def test_mirrored(self):
        """Test reflection around 0.5."""
        np.testing.assert_allclose(EXAMPLE.mirrored().opinions, [0.9, 0.75, 0.1])


class TestSimulate:
    """Test trajectory generation."""

    def test_zero_horizon(self, example_params):
        """Test that T = 0 yields only x0 and its observations."""
        params = example_params.model_copy(update={"horizon": 0})
        trajectory = simulate(EXAMPLE, params)
        assert len(trajectory) == 1
        assert trajectory.series("edge").values.tolist() == [[1, 0, 0]]

    def test_shapes(self, small_params):
        """Test T+1 states and E indicators per step."""
        trajectory = simulate(initial_opinions(small_params), small_params)
        assert trajectory.states.shape == (21, 6)
        assert trajectory.series(Granularity.EDGE).values.shape == (21, 15)
        assert trajectory.series(Granularity.NODE).values.shape == (21, 6)
        assert trajectory.series(Granularity.GLOBAL).values.shape == (21, 1)

    def test_mirror_symmetry(self, small_params):
        """Test that x0 and 1 - x0 give mirrored states and identical observations."""
        x0 = initial_opinions(small_params)
        a = simulate(x0, small_params)
        b = simulate(x0.mirrored(), small_params)
        np.testing.assert_allclose(b.states, 1.0 - a.states, atol=1e-12)
        for granularity in Granularity:
            np.testing.assert_array_equal(
                a.series(granularity).values, b.series(granularity).values
            )

    def test_convex_hull_confinement(self, rng):
        """Test that min and max opinions never expand without noise."""
        params = ModelParams(epsilon=0.2, mu=0.02, n_agents=30, horizon=60)
        trajectory = simulate(OpinionState(rng.uniform(size=30)), params)
        lows = trajectory.states.min(axis=1)
        highs = trajectory.states.max(axis=1)
        assert np.all(np.diff(lows) >= -1e-12)
        assert np.all(np.diff(highs) <= 1e-12)

    def test_deterministic_with_noise(self, small_params):
        """Test bit-identical trajectories from the same seed."""
        params = small_params.model_copy(update={"noise_sigma": 0.01})
        x0 = initial_opinions(params)
        np.testing.assert_array_equal(simulate(x0, params).states, simulate(x0, params).states)

    def test_extending_horizon_keeps_noise(self, small_params):
        """Test that the noise realisation of early steps does not depend on T."""
        short = small_params.model_copy(update={"noise_sigma": 0.01, "horizon": 10})
        long = short.model_copy(update={"horizon": 20})
        x0 = initial_opinions(short)
        np.testing.assert_array_equal(simulate(x0, short).states, simulate(x0, long).states[:11])

    def test_initial_opinions_shared_across_cells(self, small_params):
        """Test that x0 depends on the seed only."""
        other = small_params.model_copy(update={"epsilon": 0.2, "noise_sigma": 0.001})
        np.testing.assert_array_equal(
            initial_opinions(small_params).opinions, initial_opinions(other).opinions
        )

    def test_rejects_out_of_range_x0(self, example_params):
        """Test the [0, 1] precondition."""
        with pytest.raises(ValueError):
            simulate(OpinionState([0.1, 0.2, 1.2]), example_params)

    def test_rejects_wrong_length(self, small_params):
        """Test the agent count precondition."""
        with pytest.raises(ValueError):
            simulate(EXAMPLE, small_params)
