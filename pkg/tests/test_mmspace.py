import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gwil.mmspace import (
    Step,
    Trajectory,
    from_distance_matrix,
    from_trajectory,
    product_metric,
    space_from_json,
    space_to_json,
    trajectory_from_json,
    trajectory_to_json,
)


class TestFromDistanceMatrix:
    def test_singleton(self):
        s = from_distance_matrix([[0.0]], [1.0])
        assert s.n == 1
        assert s.dist[0, 0] == 0.0

    def test_two_atoms(self):
        s = from_distance_matrix([[0, 1], [1, 0]], [0.5, 0.5])
        assert s.n == 2
        assert s.mass.sum() == pytest.approx(1.0, abs=1e-15)

    def test_asymmetry_beyond_tolerance_rejected(self):
        with pytest.raises(ValueError, match="asymmetry"):
            from_distance_matrix([[0, 1], [2, 0]], [0.5, 0.5])

    def test_small_asymmetry_symmetrized_exactly(self):
        d = np.array([[0.0, 1.0], [1.0 + 5e-10, 0.0]])
        s = from_distance_matrix(d, [0.5, 0.5])
        assert np.array_equal(s.dist, s.dist.T)

    def test_mass_renormalized(self):
        s = from_distance_matrix([[0, 1], [1, 0]], [0.5, 0.5 + 4e-10])
        assert s.mass.sum() == pytest.approx(1.0, abs=1e-15)

    def test_errors(self):
        with pytest.raises(ValueError, match="square"):
            from_distance_matrix([[0, 1]], [1.0])
        with pytest.raises(ValueError, match="match"):
            from_distance_matrix([[0, 1], [1, 0]], [1.0])
        with pytest.raises(ValueError, match="nonnegative"):
            from_distance_matrix([[0, -1], [-1, 0]], [0.5, 0.5])
        with pytest.raises(ValueError, match="nonnegative"):
            from_distance_matrix([[0, 1], [1, 0]], [1.5, -0.5])
        with pytest.raises(ValueError, match="positive total"):
            from_distance_matrix([[0, 1], [1, 0]], [0.0, 0.0])
        with pytest.raises(ValueError, match="sums to"):
            from_distance_matrix([[0, 1], [1, 0]], [0.4, 0.4])


class TestTrajectory:
    def test_requires_steps(self):
        with pytest.raises(ValueError, match="at least one step"):
            Trajectory([])

    def test_t_must_increase_from_zero(self):
        s = lambda t: Step(state=np.zeros(2), action=np.zeros(1), t=t)
        with pytest.raises(ValueError, match="start at 0"):
            Trajectory([s(1), s(2)])
        with pytest.raises(ValueError, match="strictly increasing"):
            Trajectory([s(0), s(0)])

    def test_dimension_consistency(self):
        steps = [
            Step(state=np.zeros(2), action=np.zeros(1), t=0),
            Step(state=np.zeros(3), action=np.zeros(1), t=1),
        ]
        with pytest.raises(ValueError, match="state vectors"):
            Trajectory(steps)


class TestFromTrajectory:
    def test_identical_steps_zero_matrix(self):
        steps = [Step(state=np.array([1.0, 2.0]), action=np.array([0.5]), t=k) for k in range(3)]
        s = from_trajectory(Trajectory(steps))
        assert np.all(s.dist == 0.0)
        np.testing.assert_allclose(s.mass, 1.0 / 3.0, atol=1e-16)

    def test_three_four_five(self):
        steps = [
            Step(state=np.array([0.0, 0.0]), action=np.array([]), t=0),
            Step(state=np.array([3.0, 4.0]), action=np.array([]), t=1),
        ]
        s = from_trajectory(Trajectory(steps))
        assert s.dist[0, 1] == pytest.approx(5.0, abs=1e-12)

    def test_uniform_mass_exact(self):
        rng = np.random.default_rng(0)
        for t in (1, 2, 7, 31):
            steps = [Step(state=rng.random(3), action=rng.random(2), t=k) for k in range(t)]
            s = from_trajectory(Trajectory(steps))
            assert np.max(np.abs(s.mass - 1.0 / t)) <= 1e-15

    def test_different_dimensions_both_accepted(self):
        rng = np.random.default_rng(1)
        t3 = Trajectory(Step(state=rng.random(3), action=rng.random(1), t=k) for k in range(4))
        t5 = Trajectory(Step(state=rng.random(5), action=rng.random(2), t=k) for k in range(6))
        s3, s5 = from_trajectory(t3), from_trajectory(t5)
        assert (s3.n, s5.n) == (4, 6)
        # cross-dimension comparison is legal: the spaces carry no coordinates
        from gwil.gw_solver import solve_gw

        assert solve_gw(s3, s5).gw_sq >= 0.0

    def test_timestep_append_distinguishes_duplicates(self):
        steps = [Step(state=np.array([1.0]), action=np.array([0.0]), t=k) for k in range(3)]
        flat = from_trajectory(Trajectory(steps), dedup="append_timestep")
        assert np.all(flat.dist == 0.0)  # default weight 0 keeps geometry
        spread = from_trajectory(
            Trajectory(steps), dedup="append_timestep", timestep_weight=2.0
        )
        assert spread.dist[0, 1] == pytest.approx(2.0)
        assert spread.dist[0, 2] == pytest.approx(4.0)

    def test_unknown_metric_or_dedup(self):
        steps = [Step(state=np.zeros(1), action=np.zeros(1), t=0)]
        with pytest.raises(ValueError, match="metric"):
            from_trajectory(Trajectory(steps), metric="manhattan")
        with pytest.raises(ValueError, match="dedup"):
            from_trajectory(Trajectory(steps), dedup="drop")


class TestProductMetric:
    def test_singleton_action_lifts_states(self):
        ds = np.array([[0.0, 1.0], [1.0, 0.0]])
        out = product_metric(ds, np.array([[0.0]]))
        np.testing.assert_array_equal(out, ds)

    def test_sum_metric_by_definition(self):
        ds = np.array([[0.0, 2.0], [2.0, 0.0]])
        da = np.array([[0.0, 3.0], [3.0, 0.0]])
        out = product_metric(ds, da)
        # atom order is row-major in (state, action)
        assert out[0, 3] == 5.0  # (s0,a0) vs (s1,a1)
        assert out[0, 1] == 3.0  # action hop only
        assert out[0, 2] == 2.0  # state hop only

    @given(st.integers(2, 4), st.integers(2, 3), st.integers(0, 10**6))
    @settings(max_examples=25, deadline=None)
    def test_matches_double_loop(self, ns, na, seed):
        rng = np.random.default_rng(seed)

        def rand_metric(k):
            d = rng.random((k, k)) * 2
            d = (d + d.T) / 2
            np.fill_diagonal(d, 0.0)
            return d

        ds, da = rand_metric(ns), rand_metric(na)
        out = product_metric(ds, da)
        for s in range(ns):
            for a in range(na):
                for s2 in range(ns):
                    for a2 in range(na):
                        assert out[s * na + a, s2 * na + a2] == ds[s, s2] + da[a, a2]
        assert np.array_equal(out, out.T)
        assert np.all(np.diagonal(out) == 0.0)

    def test_output_feeds_from_distance_matrix(self):
        ds = np.array([[0.0, 1.0], [1.0, 0.0]])
        da = np.array([[0.0, 0.5], [0.5, 0.0]])
        n = 4
        space = from_distance_matrix(product_metric(ds, da), np.full(n, 1.0 / n))
        assert space.n == n


class TestWireFormats:
    def test_space_roundtrip(self):
        s = from_distance_matrix([[0, 1.5], [1.5, 0]], [0.25, 0.75])
        s2 = space_from_json(space_to_json(s))
        np.testing.assert_array_equal(s.dist, s2.dist)
        np.testing.assert_array_equal(s.mass, s2.mass)

    def test_trajectory_roundtrip(self):
        steps = [
            Step(state=np.array([0.0, 1.0]), action=np.array([0.5]), t=0, env_reward=0.25),
            Step(state=np.array([2.0, 3.0]), action=np.array([-0.5]), t=1),
        ]
        t = Trajectory(steps)
        t2 = trajectory_from_json(trajectory_to_json(t))
        assert len(t2) == 2
        np.testing.assert_array_equal(t2.steps[0].state, t.steps[0].state)
        assert t2.steps[0].env_reward == 0.25
        assert t2.steps[1].env_reward is None

    def test_schema_example_parses(self):
        text = json.dumps(
            {"steps": [{"state": [0.0, 0.0], "action": [1.0], "env_reward": 0.0, "t": 0}]}
        )
        traj = trajectory_from_json(text)
        assert traj.steps[0].t == 0

    def test_bad_payloads(self):
        with pytest.raises(ValueError):
            space_from_json(json.dumps({"mass": [1.0]}))
        with pytest.raises(ValueError):
            trajectory_from_json(json.dumps({"not_steps": []}))
