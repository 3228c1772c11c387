import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from liftq import iq, twostate
from liftq.core import ContractViolation, TabularEnvironment, flow, integrated_reward
from liftq.grids import PolicyGrid, SimplexGrid


@pytest.fixture(scope="module")
def small(env):
    mu_grid, h_grid = SimplexGrid(2, 4), PolicyGrid(2, 2, 4)
    return mu_grid, h_grid, iq.build_lifted_model(env, mu_grid, h_grid)


class TestBellman:
    def test_backup_matches_operator(self, env, small, rng):
        mu_grid, h_grid, model = small
        Q = iq.IQTable.uniform(mu_grid, h_grid, env.gamma, rng)
        full = iq.bellman_operator(model, Q.values)
        for i in range(len(mu_grid)):
            for j in range(0, len(h_grid), 3):
                assert iq.bellman_backup(env, Q, i, j) == pytest.approx(full[i, j], abs=1e-14)

    def test_hand_built_cell(self, env, small):
        mu_grid, h_grid, model = small
        Q = iq.IQTable.zeros(mu_grid, h_grid, env.gamma)
        Q.values[:] = np.arange(len(mu_grid))[:, None]
        i = mu_grid.project([0.25, 0.75])
        j = h_grid.index((0, 4))  # state 0 always leaves, state 1 always stays
        nxt = flow(env, [0.25, 0.75], h_grid.policy(j))  # (0.125, 0.875)
        expected = integrated_reward(env, [0.25, 0.75], h_grid.policy(j)) + 0.5 * mu_grid.project(nxt)
        assert iq.bellman_backup(env, Q, i, j) == pytest.approx(expected)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_contraction(self, env, small, seed):
        _, _, model = small
        rng = np.random.default_rng(seed)
        Q1, Q2 = rng.uniform(-20, 20, (2,) + model.rewards.shape)
        lhs = np.abs(iq.bellman_operator(model, Q1) - iq.bellman_operator(model, Q2)).max()
        assert lhs <= env.gamma * np.abs(Q1 - Q2).max() + 1e-12

    def test_mean_field_free_bellman_is_row_greedy(self, rng):
        env = TabularEnvironment(rng.dirichlet(np.ones(2), size=(2, 2)), rng.uniform(-1, 1, (2, 2)), 0.5)
        q = iq.solve_single_agent_q(env.P, env.r, 0.5)
        np.testing.assert_allclose(q, env.r + 0.5 * env.P @ q.max(axis=1), atol=1e-11)
        mu, h = rng.dirichlet(np.ones(2)), rng.dirichlet(np.ones(2), size=2)
        assert iq.lifted_from_single(q, mu, h) == pytest.approx(float(np.einsum("s,sa,sa", mu, h, q)))


class TestValueIteration:
    def test_geometric_decay(self, env, grids20, model20):
        _, report = iq.value_iteration(env, *grids20, tol=1e-10, model=model20)
        ch = report.changes[1:]
        assert report.converged
        assert all(b <= env.gamma * a + 1e-12 for a, b in zip(ch, ch[1:]))

    def test_value_at_target(self, env, params, grids20, model20):
        mu_grid, h_grid = grids20
        Q, _ = iq.value_iteration(env, mu_grid, h_grid, tol=1e-12, model=model20)
        assert Q.values[mu_grid.project(params.target)].max() == pytest.approx(0.48, abs=1e-9)

    def test_from_above_and_below(self, env, grids20, model20):
        vmax = env.reward_bound / (1 - env.gamma)
        lo, _ = iq.value_iteration(env, *grids20, tol=1e-10, initial=0.0, model=model20)
        hi, _ = iq.value_iteration(env, *grids20, tol=1e-10, initial=vmax, model=model20)
        assert np.abs(lo.values - hi.values).max() <= 2e-10

    def test_needs_bound(self, small, rng):
        base = TabularEnvironment(rng.dirichlet(np.ones(2), size=(2, 2)), np.zeros((2, 2)), 0.5)
        base.reward_bound = None
        with pytest.raises(ContractViolation):
            iq.value_iteration(base, small[0], small[1])


class TestAlgorithm1:
    def test_vectorized_matches_cellwise(self, env, small):
        mu_grid, h_grid, model = small
        init = iq.IQTable.uniform(mu_grid, h_grid, env.gamma, np.random.default_rng(1))
        fast, _ = iq.run_algorithm1(env, mu_grid, h_grid, 3, 0.4, np.random.default_rng(2),
                                    model=model, initial=init)
        slow = init.copy()
        for _ in range(3):
            best = slow.values.max(axis=1)
            for j in range(len(h_grid)):
                for i in range(len(mu_grid)):
                    iq.iq_learning_step(env, slow, i, j, 0.4, np.random.default_rng(0), best=best)
        np.testing.assert_allclose(fast.values, slow.values, atol=1e-13)

    def test_learning_rate_one_is_bellman(self, env, small, rng):
        mu_grid, h_grid, model = small
        init = iq.IQTable.uniform(mu_grid, h_grid, env.gamma, rng)
        Q, _ = iq.run_algorithm1(env, mu_grid, h_grid, 1, 1.0, rng, model=model, initial=init)
        np.testing.assert_allclose(Q.values, iq.bellman_operator(model, init.values))

    def test_learning_rate_zero_is_identity(self, env, small, rng):
        mu_grid, h_grid, model = small
        init = iq.IQTable.uniform(mu_grid, h_grid, env.gamma, rng)
        Q, _ = iq.run_algorithm1(env, mu_grid, h_grid, 2, 0.0, rng, model=model, initial=init)
        np.testing.assert_array_equal(Q.values, init.values)

    def test_particle_simulator_runs(self, env, small, rng):
        mu_grid, h_grid, _ = small
        Q, report = iq.run_algorithm1(env, mu_grid, h_grid, 2, 0.5, rng,
                                      simulator=iq.PopulationSimulator(env, num_particles=200))
        assert len(report) == 3
        assert np.all(Q.visit_counts == 2)

    def test_bad_learning_rate(self, env, small, rng):
        Q = iq.IQTable.zeros(small[0], small[1], env.gamma)
        with pytest.raises(ContractViolation):
            iq.iq_learning_step(env, Q, 0, 0, 1.5, rng)


class TestGreedy:
    def test_near_ties_take_lowest(self, small, env):
        Q = iq.IQTable.zeros(small[0], small[1], env.gamma)
        Q.values[0, 5] = 1.0
        Q.values[0, 3] = 1.0 - 1e-12
        assert iq.greedy_policy(Q, 0) == 3
        Q.values[0, 3] = 0.9
        assert iq.greedy_policy(Q, 0) == 5


class TestPersistence:
    def test_round_trip(self, env, small, rng, tmp_path):
        Q = iq.IQTable.uniform(small[0], small[1], env.gamma, rng)
        Q.values[0, 0] = 1 / 3
        path = tmp_path / "t.txt"
        Q.save(path)
        back = iq.IQTable.load(path)
        np.testing.assert_array_equal(back.values, Q.values)
        assert back.gamma == Q.gamma
        assert back.h_grid.kind == "policy"
        text = path.read_text().splitlines()
        assert text[0].startswith("# iqtable S=2 A=2 N_s=4 N_a=4")
        assert len(text) == 1 + len(small[0]) * len(small[1])
        # mu counts (2), h counts (4), value
        assert len(text[1].split()) == 7

    def test_rejects_other_files(self, tmp_path):
        path = tmp_path / "x.txt"
        path.write_text("hello\n")
        with pytest.raises(ContractViolation):
            iq.IQTable.load(path)

    def test_report_csv(self, tmp_path):
        rep = iq.ConvergenceReport()
        rep.record(0, 1.5, float("nan"), 0.0)
        rep.record(1, 0.25, 0.125, 0.5)
        rep.write_csv(tmp_path / "a.csv")
        rep.write_csv(tmp_path / "b.csv", timing=False)
        assert (tmp_path / "a.csv").read_text().splitlines()[0] == "iteration,E,supnorm_change,seconds"
        assert (tmp_path / "b.csv").read_text().splitlines() == [
            "iteration,E,supnorm_change", "0,1.5,nan", "1,0.25,0.125"]


def test_error_metric_zero_at_oracle(params, grids20, model20, env):
    mu_grid, h_grid = grids20
    cell = h_grid.project(twostate.optimal_policy(params))
    Q = iq.IQTable.zeros(mu_grid, h_grid, env.gamma)
    Q.values[:, cell] = [twostate.optimal_value(params, mu[0]) for mu in mu_grid.points]
    assert iq.error_metric(Q, lambda mu: twostate.optimal_value(params, mu[0]), cell) == pytest.approx(0.0)
    Q.values[:, cell] += 0.5
    assert iq.error_metric(Q, lambda mu: twostate.optimal_value(params, mu[0]), cell) == pytest.approx(0.5)
