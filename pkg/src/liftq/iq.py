"""Lifted Q-learning on discretized simplexes.

The IQ table is indexed by (state-distribution cell, local-policy cell).
On the grid the lifted problem is a deterministic MDP: each cell has an
integrated reward and a successor cell obtained by projecting the flow
back onto the state grid.  Value iteration and the sampled IQ-learning
sweep both operate on that structure.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .core import (ContractViolation, MeanFieldEnvironment, flow, integrated_reward,
                   sample_integrated_reward)
from .grids import DiracGrid, PolicyGrid, SimplexGrid


@dataclass
class IQTable:
    values: np.ndarray
    mu_grid: SimplexGrid | DiracGrid
    h_grid: PolicyGrid | SimplexGrid
    gamma: float
    visit_counts: np.ndarray = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = (len(self.mu_grid), len(self.h_grid))
        if self.values.shape != expected:
            raise ContractViolation(f"table shape {self.values.shape} != grid shape {expected}")
        if self.visit_counts is None:
            self.visit_counts = np.zeros(expected, dtype=np.int64)

    @classmethod
    def zeros(cls, mu_grid, h_grid, gamma: float) -> "IQTable":
        return cls(np.zeros((len(mu_grid), len(h_grid))), mu_grid, h_grid, gamma)

    @classmethod
    def uniform(cls, mu_grid, h_grid, gamma: float, rng: np.random.Generator) -> "IQTable":
        return cls(rng.uniform(0.0, 1.0, size=(len(mu_grid), len(h_grid))), mu_grid, h_grid, gamma)

    def copy(self) -> "IQTable":
        return IQTable(self.values.copy(), self.mu_grid, self.h_grid, self.gamma, self.visit_counts.copy())

    def state_values(self) -> np.ndarray:
        """``v(mu) = max_h Q(mu, h)`` on every state-grid cell."""
        return self.values.max(axis=1)

    # Persistence: one line per cell, integer grid coordinates then the value.
    def save(self, path) -> None:
        mu_grid, h_grid = self.mu_grid, self.h_grid
        if isinstance(h_grid, PolicyGrid):
            S, A, N_a = h_grid.num_states, h_grid.num_actions, h_grid.resolution
            h_counts = np.array([h_grid.cell_counts(j) for j in range(len(h_grid))])
        else:
            S, A, N_a = mu_grid.dimension, h_grid.dimension, h_grid.resolution
            h_counts = h_grid.counts
        header = (f"# iqtable S={S} A={A} N_s={mu_grid.resolution} N_a={N_a} "
                  f"gamma={self.gamma!r} mu_grid={mu_grid.kind} h_grid={h_grid.kind}\n")
        h_text = [" ".join(map(str, row)) for row in h_counts.tolist()]
        with open(path, "w") as fh:
            fh.write(header)
            for i, mu_row in enumerate(mu_grid.counts.tolist()):
                mu_text = " ".join(map(str, mu_row))
                for j, value in enumerate(self.values[i]):
                    fh.write(f"{mu_text} {h_text[j]} {value:.17g}\n")

    @classmethod
    def load(cls, path) -> "IQTable":
        with open(path) as fh:
            header = fh.readline().split()
            if header[:2] != ["#", "iqtable"]:
                raise ContractViolation(f"{path}: not an IQ table file")
            meta = dict(item.split("=", 1) for item in header[2:])
            S, A = int(meta["S"]), int(meta["A"])
            N_s, N_a = int(meta["N_s"]), int(meta["N_a"])
            mu_grid = DiracGrid(S, N_s) if meta["mu_grid"] == "dirac" else SimplexGrid(S, N_s)
            h_grid = PolicyGrid(S, A, N_a) if meta["h_grid"] == "policy" else SimplexGrid(A, N_a)
            data = np.loadtxt(fh, ndmin=2)
        values = data[:, -1].reshape(len(mu_grid), len(h_grid))
        return cls(values, mu_grid, h_grid, float(meta["gamma"]))


@dataclass
class ConvergenceReport:
    iterations: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    changes: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    converged: bool = True

    def record(self, iteration: int, error: float, change: float, seconds: float) -> None:
        self.iterations.append(iteration)
        self.errors.append(error)
        self.changes.append(change)
        self.seconds.append(seconds)

    def __len__(self) -> int:
        return len(self.iterations)

    def write_csv(self, path, timing: bool = True) -> None:
        """``timing=False`` drops the wall-clock column so the file is reproducible byte for byte."""
        cols = ["iteration", "E", "supnorm_change"] + (["seconds"] if timing else [])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for k in range(len(self)):
                row = [self.iterations[k], _fmt(self.errors[k]), _fmt(self.changes[k])]
                if timing:
                    row.append(f"{self.seconds[k]:.6f}")
                w.writerow(row)


def _fmt(x: float) -> str:
    return "nan" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.17g}"


@dataclass
class LiftedModel:
    """Deterministic lifted MDP on the grid: reward and successor cell per (mu, h) cell."""

    rewards: np.ndarray
    successors: np.ndarray
    gamma: float


def build_lifted_model(env: MeanFieldEnvironment, mu_grid: SimplexGrid, h_grid: PolicyGrid) -> LiftedModel:
    policies = h_grid.policies
    n_mu, n_h = len(mu_grid), len(h_grid)
    rewards = np.empty((n_mu, n_h))
    nxt_points = np.empty((n_mu, n_h, mu_grid.dimension))
    for i, mu in enumerate(mu_grid.points):
        for j, h in enumerate(policies):
            rewards[i, j] = integrated_reward(env, mu, h)
            nxt_points[i, j] = flow(env, mu, h)
    successors = mu_grid.project_many(nxt_points.reshape(-1, mu_grid.dimension)).reshape(n_mu, n_h)
    return LiftedModel(rewards, successors, env.gamma)


def bellman_operator(model: LiftedModel, values: np.ndarray) -> np.ndarray:
    """Apply the lifted Bellman operator to a whole table at once."""
    return model.rewards + model.gamma * values.max(axis=1)[model.successors]


def bellman_backup(env: MeanFieldEnvironment, Q: IQTable, mu_cell: int, h_cell: int) -> float:
    """Lifted Bellman backup at one cell: reward plus discounted best value at the projected successor."""
    mu = Q.mu_grid.point(mu_cell)
    h = Q.h_grid.policy(h_cell)
    nxt = Q.mu_grid.project(flow(env, mu, h))
    return integrated_reward(env, mu, h) + env.gamma * float(Q.values[nxt].max())


def greedy_policy(Q: IQTable, mu_cell: int, atol: float = 1e-9) -> int:
    """Best policy cell at ``mu_cell``.

    Values within ``atol`` of the maximum count as tied (backups that reach
    the same successor differ only by rounding) and the lowest index wins.
    """
    row = Q.values[mu_cell]
    return int(np.flatnonzero(row >= row.max() - atol)[0])


def value_iteration(env: MeanFieldEnvironment, mu_grid: SimplexGrid, h_grid: PolicyGrid,
                    tol: float = 1e-10, max_iters: int = 10_000, initial: np.ndarray | float | None = None,
                    metric: Callable[[IQTable], float] | None = None,
                    model: LiftedModel | None = None) -> tuple[IQTable, ConvergenceReport]:
    """Synchronous sweeps ``Q <- B Q`` from ``initial`` (default 0) until the sup-norm change drops below ``tol``."""
    if env.reward_bound is None:
        raise ContractViolation("value iteration needs a declared reward_bound")
    if not 0.0 < env.gamma < 1.0:
        raise ContractViolation(f"gamma must lie in (0, 1), got {env.gamma}")
    if model is None:
        model = build_lifted_model(env, mu_grid, h_grid)
    table = IQTable.zeros(mu_grid, h_grid, env.gamma)
    if initial is not None:
        table.values = np.broadcast_to(np.asarray(initial, dtype=float), table.values.shape).copy()
    report = ConvergenceReport(converged=False)
    start = time.perf_counter()
    report.record(0, metric(table) if metric else math.nan, math.nan, 0.0)
    for n in range(1, max_iters + 1):
        new = bellman_operator(model, table.values)
        change = float(np.abs(new - table.values).max())
        table.values = new
        table.visit_counts += 1
        report.record(n, metric(table) if metric else math.nan, change, time.perf_counter() - start)
        if change < tol:
            report.converged = True
            break
    return table, report


class PopulationSimulator:
    """Returns ``(next distribution, aggregated reward)`` for a population under a local policy.

    With ``num_particles=None`` the population is infinite: the flow is
    exact and the aggregated reward is the integrated reward.  Otherwise the
    reward is averaged over that many sampled agents.
    """

    def __init__(self, env: MeanFieldEnvironment, num_particles: int | None = None):
        self.env = env
        self.num_particles = num_particles

    def step(self, mu, h, rng: np.random.Generator) -> tuple[np.ndarray, float]:
        nxt = flow(self.env, mu, h)
        if self.num_particles is None:
            return nxt, integrated_reward(self.env, mu, h)
        return nxt, sample_integrated_reward(self.env, mu, h, self.num_particles, rng)


def iq_learning_step(simulator: PopulationSimulator | MeanFieldEnvironment, Q: IQTable, mu_cell: int,
                     h_cell: int, learning_rate: float, rng: np.random.Generator,
                     best: np.ndarray | None = None) -> float:
    """Blend one simulated backup into ``Q[mu_cell, h_cell]`` and return the new value.

    ``best`` is an optional per-state-cell cache of ``max_h Q``; without it
    the maximum is read from the current table.
    """
    if not 0.0 <= learning_rate <= 1.0:
        raise ContractViolation(f"learning rate must lie in [0, 1], got {learning_rate}")
    if isinstance(simulator, MeanFieldEnvironment):
        simulator = PopulationSimulator(simulator)
    mu = Q.mu_grid.point(mu_cell)
    h = Q.h_grid.policy(h_cell)
    nxt, reward = simulator.step(mu, h, rng)
    nxt_cell = Q.mu_grid.project(nxt)
    tail = best[nxt_cell] if best is not None else Q.values[nxt_cell].max()
    target = reward + simulator.env.gamma * tail
    old = Q.values[mu_cell, h_cell]
    Q.values[mu_cell, h_cell] = (1.0 - learning_rate) * old + learning_rate * target
    Q.visit_counts[mu_cell, h_cell] += 1
    return float(Q.values[mu_cell, h_cell])


def run_algorithm1(env: MeanFieldEnvironment, mu_grid: SimplexGrid, h_grid: PolicyGrid, T: int,
                   learning_rate: float, rng: np.random.Generator,
                   metric: Callable[[IQTable], float] | None = None,
                   simulator: PopulationSimulator | None = None,
                   model: LiftedModel | None = None,
                   initial: IQTable | None = None) -> tuple[IQTable, ConvergenceReport]:
    """Outer sweeps of the IQ update over every (policy, distribution) cell.

    The table starts uniform on [0, 1].  Each sweep reads ``max_h Q`` from
    a cache refreshed at the start of the sweep, so visiting cells in the
    nested loop order and updating them all at once give the same result.
    With the infinite-population simulator the simulated rewards and
    successors are fixed, and the sweep is done in one vectorized step.
    """
    if simulator is None:
        simulator = PopulationSimulator(env)
    Q = initial.copy() if initial is not None else IQTable.uniform(mu_grid, h_grid, env.gamma, rng)
    report = ConvergenceReport()
    start = time.perf_counter()
    report.record(0, metric(Q) if metric else math.nan, math.nan, 0.0)
    if simulator.num_particles is None and model is None:
        model = build_lifted_model(env, mu_grid, h_grid)
    for t in range(1, T + 1):
        best = Q.values.max(axis=1)
        before = Q.values.copy()
        if simulator.num_particles is None:
            target = model.rewards + env.gamma * best[model.successors]
            Q.values = (1.0 - learning_rate) * Q.values + learning_rate * target
            Q.visit_counts += 1
        else:
            # Pseudocode order: policy rows outermost, distribution innermost.
            for j in range(len(h_grid)):
                for i in range(len(mu_grid)):
                    iq_learning_step(simulator, Q, i, j, learning_rate, rng, best=best)
        change = float(np.abs(Q.values - before).max())
        report.record(t, metric(Q) if metric else math.nan, change, time.perf_counter() - start)
    return Q, report


def error_metric(Q: IQTable, oracle_value: Callable[[np.ndarray], float], policy_cell: int) -> float:
    """Mean absolute gap between ``Q(mu_i, policy_cell)`` and the oracle over every state-grid cell."""
    gaps = [abs(Q.values[i, policy_cell] - oracle_value(mu)) for i, mu in enumerate(Q.mu_grid.points)]
    return float(np.mean(gaps))


def lifted_from_single(q_single, mu, h) -> float:
    """Integrate a single-agent Q table against the state-action law ``mu(s) h(s, a)``."""
    q = np.asarray(q_single, dtype=float)
    return float(np.einsum("s,sa,sa->", np.asarray(mu, dtype=float), np.asarray(h, dtype=float), q))


def solve_single_agent_q(kernel, rewards, gamma: float, tol: float = 1e-12,
                         max_iters: int = 100_000) -> np.ndarray:
    """Classical Q value iteration ``Q = r + gamma * P max Q`` on a finite MDP."""
    P = np.asarray(kernel, dtype=float)
    r = np.asarray(rewards, dtype=float)
    if not 0.0 <= gamma < 1.0:
        raise ContractViolation(f"gamma must lie in [0, 1), got {gamma}")
    q = np.zeros_like(r)
    for _ in range(max_iters):
        new = r + gamma * P @ q.max(axis=1)
        if np.abs(new - q).max() < tol:
            return new
        q = new
    raise ContractViolation("single-agent value iteration did not converge")
