"""Equilibrium-pricing supply game.

A continuum of firms shares one market price.  Each period the price
moves by the gap between a Gaussian demand and the population's mean
supply, plus a +/-1 random walk step, then is rounded and truncated to
``0..num_prices-1``.  Firms earn ``(price - cost) * supply``.

Because every firm sees the same price, the population state is a Dirac
mass at the current price and the lifted control reduces to the supply
mix ``nu`` chosen at that price.  The Pareto (MKV) solution learns an IQ
table over ``(price, nu-grid)``; the Nash (MFG) baseline best-responds
to a frozen mean supply with a Boltzmann policy.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass

import numpy as np

from .core import ContractViolation
from .grids import DiracGrid, SimplexGrid
from .iq import ConvergenceReport, IQTable


@dataclass(frozen=True)
class SupplyParams:
    demand_mean: float = 2.0
    demand_var: float = 0.25
    cost: float = 1.0
    num_actions: int = 5
    num_prices: int = 20
    kappa: float = 1.0
    gamma: float = 0.6

    def __post_init__(self):
        if self.kappa <= 0.0:
            raise ContractViolation(f"kappa must be > 0, got {self.kappa}")
        if self.cost < 0.0:
            raise ContractViolation(f"cost must be >= 0, got {self.cost}")
        if not 0.0 < self.gamma < 1.0:
            raise ContractViolation(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.demand_var < 0.0:
            raise ContractViolation(f"demand_var must be >= 0, got {self.demand_var}")
        if self.num_actions < 1 or self.num_prices < 1:
            raise ContractViolation("num_actions and num_prices must be positive")

    @property
    def actions(self) -> np.ndarray:
        return np.arange(self.num_actions, dtype=float)

    @property
    def prices(self) -> np.ndarray:
        return np.arange(self.num_prices, dtype=float)

    @property
    def reward_bound(self) -> float:
        margin = max(abs(self.num_prices - 1 - self.cost), abs(self.cost))
        return margin * (self.num_actions - 1)


def _round_half_away(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def _next_price(params: SupplyParams, s, mean_supply, demand, noise):
    inc = params.kappa * (demand - mean_supply) + noise
    return np.clip(s + _round_half_away(inc), 0, params.num_prices - 1).astype(np.int64)


def mean_supply(params: SupplyParams, nu) -> float:
    return float(np.dot(np.asarray(nu, dtype=float), params.actions))


def price_transition(params: SupplyParams, s: int, nu, rng: np.random.Generator) -> int:
    """One draw of the next price given the current price and the population supply mix."""
    if not 0 <= s < params.num_prices:
        raise ContractViolation(f"price {s} outside 0..{params.num_prices - 1}")
    demand = rng.normal(params.demand_mean, math.sqrt(params.demand_var))
    noise = rng.choice((-1.0, 1.0))
    return int(_next_price(params, s, mean_supply(params, nu), demand, noise))


def supply_reward(params: SupplyParams, s: int, nu) -> float:
    """Population-averaged reward ``(s - c) * E_nu[a]`` at the current price."""
    return (s - params.cost) * mean_supply(params, nu)


def price_kernel(params: SupplyParams, s: int, mean: float, nodes: int = 5) -> np.ndarray:
    """Next-price distribution with the demand integrated by Gauss-Hermite quadrature."""
    x, w = np.polynomial.hermite_e.hermegauss(nodes)
    w = w / w.sum()
    demand = params.demand_mean + math.sqrt(params.demand_var) * x
    out = np.zeros(params.num_prices)
    for noise in (-1.0, 1.0):
        np.add.at(out, _next_price(params, s, mean, demand, noise), 0.5 * w)
    return out


def _means_kernel(params: SupplyParams, means: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distinct mean supplies and the ``(price, distinct mean, next price)`` kernel."""
    uniq, inverse = np.unique(np.round(means, 12), return_inverse=True)
    K = np.array([[price_kernel(params, s, m) for m in uniq] for s in range(params.num_prices)])
    return K, inverse


def supply_grids(params: SupplyParams, N_a: int) -> tuple[DiracGrid, SimplexGrid]:
    return DiracGrid(params.num_prices, 1), SimplexGrid(params.num_actions, N_a)


def run_algorithm2(params: SupplyParams, N_a: int, T: int, learning_rate: float,
                   rng: np.random.Generator, mode: str = "sampled",
                   initial: np.ndarray | None = None) -> tuple[IQTable, ConvergenceReport]:
    """IQ-learning sweeps over every ``(price, nu)`` cell.

    ``mode="sampled"`` draws one demand and noise per cell per sweep;
    ``mode="exact"`` integrates the next price instead.  The running
    maximum over ``nu'`` is cached per price at the start of each sweep.
    The table starts at zero.
    """
    if mode not in ("sampled", "exact"):
        raise ContractViolation(f"unknown mode {mode!r}")
    if not 0.0 <= learning_rate <= 1.0:
        raise ContractViolation(f"learning rate must lie in [0, 1], got {learning_rate}")
    mu_grid, nu_grid = supply_grids(params, N_a)
    Q = IQTable.zeros(mu_grid, nu_grid, params.gamma)
    if initial is not None:
        Q.values = np.array(initial, dtype=float)
    means = nu_grid.points @ params.actions
    prices = params.prices[:, None]
    rewards = (prices - params.cost) * means[None, :]
    if mode == "exact":
        K, inverse = _means_kernel(params, means)
    sd = math.sqrt(params.demand_var)
    report = ConvergenceReport()
    start = time.perf_counter()
    report.record(0, math.nan, math.nan, 0.0)
    for t in range(1, T + 1):
        best = Q.values.max(axis=1)
        if mode == "sampled":
            # Draws are laid out (nu, price) to follow the loop order nu outer, price inner.
            demand = rng.normal(params.demand_mean, sd, size=(len(nu_grid), params.num_prices)).T
            noise = rng.choice((-1.0, 1.0), size=(len(nu_grid), params.num_prices)).T
            nxt = _next_price(params, prices, means[None, :], demand, noise)
            tail = best[nxt]
        else:
            tail = (K @ best)[:, inverse]
        target = rewards + params.gamma * tail
        new = (1.0 - learning_rate) * Q.values + learning_rate * target
        change = float(np.abs(new - Q.values).max())
        Q.values = new
        Q.visit_counts += 1
        report.record(t, math.nan, change, time.perf_counter() - start)
    return Q, report


@dataclass
class PricePolicy:
    """Supply mix ``nu(s)`` over actions at every price."""

    mixes: np.ndarray

    def __post_init__(self):
        self.mixes = np.asarray(self.mixes, dtype=float)
        if self.mixes.ndim != 2 or np.any(self.mixes < 0) or np.any(np.abs(self.mixes.sum(axis=1) - 1) > 1e-9):
            raise ContractViolation("every price needs a supply distribution")

    def mean_actions(self) -> np.ndarray:
        return self.mixes @ np.arange(self.mixes.shape[1], dtype=float)


def greedy_price_policy(Q: IQTable, atol: float = 1e-9) -> PricePolicy:
    """Greedy supply mix per price, lowest grid index among near-ties."""
    rows = []
    for s in range(Q.values.shape[0]):
        row = Q.values[s]
        rows.append(Q.h_grid.point(int(np.flatnonzero(row >= row.max() - atol)[0])))
    return PricePolicy(np.array(rows))


def mean_action_table(source: IQTable | PricePolicy) -> np.ndarray:
    """Expected supply ``sum_a a * nu*(s)(a)`` at every price."""
    policy = source if isinstance(source, PricePolicy) else greedy_price_policy(source)
    return policy.mean_actions()


def boltzmann(q: np.ndarray, beta: float) -> np.ndarray:
    z = beta * (q - q.max(axis=1, keepdims=True))
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class MFGResult:
    q: np.ndarray
    policy: PricePolicy
    converged: bool
    outer_iterations: int
    changes: list


def mfg_solve(params: SupplyParams, beta: float = 1.0, tol: float = 1e-2,
              rng: np.random.Generator | None = None, inner_sweeps: int = 200,
              max_outer: int = 500) -> MFGResult:
    """Nash baseline by fixed-point iteration on the mean supply.

    Each outer step freezes the mean supply per price implied by the
    current Boltzmann policy, runs single-agent Q sweeps against the price
    kernel it induces (a lone firm cannot move the price), and stops once
    the Q table moves less than ``tol`` between outer steps.  The price
    kernel is integrated exactly, so ``rng`` is accepted for interface
    symmetry and left unused.
    """
    if beta <= 0.0:
        raise ContractViolation(f"beta must be > 0, got {beta}")
    acts = params.actions
    rewards = (params.prices[:, None] - params.cost) * acts[None, :]
    q = np.zeros((params.num_prices, params.num_actions))
    changes = []
    for outer in range(1, max_outer + 1):
        means = boltzmann(q, beta) @ acts
        K = np.array([price_kernel(params, s, means[s]) for s in range(params.num_prices)])
        new = q.copy()
        for _ in range(inner_sweeps):
            new = rewards + params.gamma * (K @ new.max(axis=1))[:, None]
        change = float(np.abs(new - q).max())
        changes.append(change)
        q = new
        if change < tol:
            return MFGResult(q, PricePolicy(boltzmann(q, beta)), True, outer, changes)
    return MFGResult(q, PricePolicy(boltzmann(q, beta)), False, max_outer, changes)


def head_to_head(params: SupplyParams, mkv_policy: PricePolicy, mfg_policy: PricePolicy, rounds: int,
                 rng: np.random.Generator, initial_price: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Running sums of population reward for two independent markets, one per policy.

    Both arrays have ``rounds + 1`` entries and start at 0.
    """
    out = []
    for policy, stream in zip((mkv_policy, mfg_policy), rng.spawn(2)):
        means = policy.mean_actions()
        s = initial_price
        sums = np.zeros(rounds + 1)
        for k in range(rounds):
            sums[k + 1] = sums[k] + (s - params.cost) * means[s]
            demand = stream.normal(params.demand_mean, math.sqrt(params.demand_var))
            noise = stream.choice((-1.0, 1.0))
            s = int(_next_price(params, s, means[s], demand, noise))
        out.append(sums)
    return out[0], out[1]


def write_mean_actions_csv(path, tables: dict[str, np.ndarray]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["price", "mean_action", "solver"])
        for solver, values in tables.items():
            for s, v in enumerate(values):
                w.writerow([s, f"{v:.17g}", solver])


def write_head_to_head_csv(path, cum_mkv: np.ndarray, cum_mfg: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["round", "cum_reward_mkv", "cum_reward_mfg"])
        for k, (a, b) in enumerate(zip(cum_mkv, cum_mfg)):
            w.writerow([k, f"{a:.17g}", f"{b:.17g}"])
