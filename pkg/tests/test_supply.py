import math

import numpy as np
import pytest

from liftq import supply
from liftq.core import ContractViolation


@pytest.fixture(scope="module")
def sp():
    return supply.SupplyParams()


def test_round_half_away_from_zero():
    np.testing.assert_array_equal(supply._round_half_away(np.array([0.5, -0.5, 1.49, -2.5, 0.0])),
                                  [1.0, -1.0, 1.0, -3.0, 0.0])


def test_transition_clamps(sp):
    rng = np.random.default_rng(0)
    for _ in range(200):
        assert supply.price_transition(sp, 0, [0, 0, 0, 0, 1], rng) >= 0
        assert supply.price_transition(sp, 19, [1, 0, 0, 0, 0], rng) <= 19


def physicist_kernel(sp, s, mean):
    """Same 5-node quadrature built from physicists' Hermite nodes: d = m + sqrt(2 var) x."""
    x, w = np.polynomial.hermite.hermgauss(5)
    w = w / math.sqrt(math.pi)
    out = np.zeros(sp.num_prices)
    for noise in (-1.0, 1.0):
        for xi, wi in zip(x, w):
            inc = sp.kappa * (sp.demand_mean + math.sqrt(2 * sp.demand_var) * xi - mean) + noise
            step = math.copysign(math.floor(abs(inc) + 0.5), inc)
            out[int(min(max(s + step, 0), sp.num_prices - 1))] += 0.5 * wi
    return out


@pytest.mark.parametrize("s, mean", [(0, 4.0), (10, 2.0), (10, 0.7), (19, 0.0), (5, 3.3)])
def test_kernel_matches_quadrature_oracle(sp, s, mean):
    K = supply.price_kernel(sp, s, mean)
    assert abs(K.sum() - 1) < 1e-12
    np.testing.assert_allclose(K, physicist_kernel(sp, s, mean), atol=1e-12)


def test_kernel_symmetric_when_balanced(sp):
    # Demand minus supply is centred at zero and the noise is symmetric.
    K = supply.price_kernel(sp, 10, 2.0)
    np.testing.assert_allclose(K[6:10], K[11:15][::-1], atol=1e-15)


def test_reward(sp):
    assert supply.supply_reward(sp, 5, [0, 0, 1, 0, 0]) == pytest.approx(8.0)
    assert supply.supply_reward(sp, 0, [0, 0, 0, 0, 1]) == pytest.approx(-4.0)


def exact_dp(sp, nu_points, sweeps=400):
    """Independent Bellman iteration over (price, supply mix) with the quadrature kernel."""
    means = nu_points @ sp.actions
    K = np.array([[supply.price_kernel(sp, s, m) for m in means] for s in range(sp.num_prices)])
    q = np.zeros((sp.num_prices, len(means)))
    for _ in range(sweeps):
        q = (sp.prices[:, None] - sp.cost) * means[None, :] + sp.gamma * K @ q.max(axis=1)
    return q


def test_exact_mode_with_full_step_is_dp(sp):
    Q, _ = supply.run_algorithm2(sp, 2, 200, 1.0, np.random.default_rng(0), mode="exact")
    np.testing.assert_allclose(Q.values, exact_dp(sp, Q.h_grid.points), atol=1e-9)


def test_sampled_mode_reproducible(sp):
    a, ra = supply.run_algorithm2(sp, 2, 5, 0.1, np.random.default_rng(7))
    b, rb = supply.run_algorithm2(sp, 2, 5, 0.1, np.random.default_rng(7))
    np.testing.assert_array_equal(a.values, b.values)
    assert len(ra) == 6 and math.isnan(ra.changes[0])


def test_sampled_mode_unbiased_one_step(sp):
    # One sweep from zero only sees the reward, so it is exact in expectation and in value.
    Q, _ = supply.run_algorithm2(sp, 2, 1, 1.0, np.random.default_rng(0))
    expected = (sp.prices[:, None] - sp.cost) * (Q.h_grid.points @ sp.actions)[None, :]
    np.testing.assert_allclose(Q.values, expected)


def test_bad_mode(sp):
    with pytest.raises(ContractViolation):
        supply.run_algorithm2(sp, 2, 1, 0.1, np.random.default_rng(0), mode="fast")


def test_boltzmann():
    p = supply.boltzmann(np.array([[0.0, 0.0], [0.0, math.log(3.0)]]), 1.0)
    np.testing.assert_allclose(p, [[0.5, 0.5], [0.25, 0.75]])
    assert np.all(np.isfinite(supply.boltzmann(np.array([[1e4, 0.0]]), 1.0)))


def test_greedy_price_policy(sp):
    Q, _ = supply.run_algorithm2(sp, 2, 1, 1.0, np.random.default_rng(0))
    means = supply.mean_action_table(Q)
    assert means[0] == 0.0          # losing money at price 0: supply nothing
    # Zero margin: every mix ties and the lowest grid cell (all mass on the top action) wins.
    assert means[1] == Q.h_grid.point(0) @ sp.actions
    assert np.all(means[2:] == 4.0)


def test_mfg_is_fixed_point(sp):
    res = supply.mfg_solve(sp, tol=1e-6)
    assert res.converged
    means = res.policy.mean_actions()
    K = np.array([supply.price_kernel(sp, s, means[s]) for s in range(sp.num_prices)])
    rewards = (sp.prices[:, None] - sp.cost) * sp.actions[None, :]
    np.testing.assert_allclose(res.q, rewards + sp.gamma * (K @ res.q.max(axis=1))[:, None], atol=1e-5)


def test_head_to_head_shapes(sp):
    pol = supply.PricePolicy(np.tile([0, 0, 1.0, 0, 0], (20, 1)))
    a, b = supply.head_to_head(sp, pol, pol, 50, np.random.default_rng(0))
    assert a.shape == b.shape == (51,)
    assert a[0] == b[0] == 0.0
    # First round is paid at the initial price 10 with mean supply 2.
    assert a[1] == pytest.approx(18.0)


def test_csv_writers(tmp_path):
    supply.write_mean_actions_csv(tmp_path / "m.csv", {"mkv": np.array([0.0, 1.5])})
    assert (tmp_path / "m.csv").read_text().splitlines() == ["price,mean_action,solver", "0,0,mkv", "1,1.5,mkv"]
    supply.write_head_to_head_csv(tmp_path / "h.csv", np.array([0.0, 2.0]), np.array([0.0, 1.0]))
    assert (tmp_path / "h.csv").read_text().splitlines()[0] == "round,cum_reward_mkv,cum_reward_mfg"
