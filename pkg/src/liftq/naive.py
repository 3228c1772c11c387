"""Per-(state, action) Q-learning in a mean-field environment.

This is the mis-specified learner: its table ignores the population
distribution, so the values it settles on depend on where the population
started.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .core import ContractViolation, MeanFieldEnvironment, as_distribution, flow


@dataclass
class NaiveQTable:
    values: np.ndarray
    visit_counts: np.ndarray = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.visit_counts is None:
            self.visit_counts = np.zeros(self.values.shape, dtype=np.int64)
        if self.visit_counts.shape != self.values.shape:
            raise ContractViolation("visit counts and values must share a shape")

    @classmethod
    def zeros(cls, num_states: int, num_actions: int) -> "NaiveQTable":
        return cls(np.zeros((num_states, num_actions)))


@dataclass(frozen=True)
class EpsilonGreedySchedule:
    """Fixed exploration rate; step size ``1 / (visits + 1)`` per cell."""

    epsilon: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ContractViolation(f"epsilon must lie in [0, 1], got {self.epsilon}")

    @staticmethod
    def learning_rate(visits: int) -> float:
        return 1.0 / (visits + 1)

    def policy(self, values: np.ndarray) -> np.ndarray:
        """Relaxed epsilon-greedy local policy; greedy ties go to the lowest action."""
        S, A = values.shape
        h = np.full((S, A), self.epsilon / A)
        h[np.arange(S), values.argmax(axis=1)] += 1.0 - self.epsilon
        return h


def naive_update(Q: NaiveQTable, s: int, a: int, reward: float, s_next: int, gamma: float,
                 learning_rate: float) -> float:
    if not 0.0 <= learning_rate <= 1.0:
        raise ContractViolation(f"learning rate must lie in [0, 1], got {learning_rate}")
    target = reward + gamma * Q.values[s_next].max()
    Q.values[s, a] = (1.0 - learning_rate) * Q.values[s, a] + learning_rate * target
    Q.visit_counts[s, a] += 1
    return float(Q.values[s, a])


def run_naive(env: MeanFieldEnvironment, mu0, T: int, schedule: EpsilonGreedySchedule,
              rng: np.random.Generator, relaxed_flow: bool = False) -> NaiveQTable:
    """Learn a per-(s, a) table while the population follows the epsilon-greedy control.

    Each iteration every state draws one epsilon-greedy action that all
    agents in that state take.  A representative agent in every occupied
    state receives the reward at the current population law, moves by the
    kernel and updates its cell; the population then moves by the flow
    under those actions.  ``relaxed_flow`` moves the population under the
    epsilon-greedy mixture instead of the drawn actions.
    """
    mu = as_distribution(mu0, env.num_states)
    Q = NaiveQTable.zeros(env.num_states, env.num_actions)
    S, A = env.num_states, env.num_actions
    eye = np.eye(A)
    for _ in range(T):
        h_greedy = schedule.policy(Q.values)
        u = rng.random(S)
        actions = [min(int(np.searchsorted(np.cumsum(h_greedy[s]), u[s], side="right")), A - 1)
                   for s in range(S)]
        h = h_greedy if relaxed_flow else eye[actions]
        nu = mu @ h
        P = env.kernel(mu, nu)
        pending = []
        for s in range(S):
            if mu[s] <= 0.0:
                continue
            a = actions[s]
            r = env.reward_sample(s, mu, a, nu, rng)
            s_next = min(int(np.searchsorted(np.cumsum(P[s, a]), rng.random(), side="right")), S - 1)
            pending.append((s, a, r, s_next))
        # Both representatives act on the same table snapshot.
        snapshot = Q.values.copy()
        for s, a, r, s_next in pending:
            lr = schedule.learning_rate(int(Q.visit_counts[s, a]))
            target = r + env.gamma * snapshot[s_next].max()
            Q.values[s, a] = (1.0 - lr) * Q.values[s, a] + lr * target
            Q.visit_counts[s, a] += 1
        mu = flow(env, mu, h)
    return Q


def run_time_inconsistency_experiment(env: MeanFieldEnvironment, p0_list, T: int, epsilon: float,
                                      rng: np.random.Generator, relaxed_flow: bool = False,
                                      ) -> dict[float, NaiveQTable]:
    """Naive tables learned from each initial mass ``p0`` on state 0, one RNG stream per ``p0``."""
    schedule = EpsilonGreedySchedule(epsilon)
    streams = rng.spawn(len(p0_list))
    return {float(p0): run_naive(env, [p0, 1.0 - p0], T, schedule, stream, relaxed_flow)
            for p0, stream in zip(p0_list, streams)}


def write_table_csv(results: dict[float, NaiveQTable], path) -> None:
    """One row per initial mass with the four cells of a 2x2 table, row-major."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["p0", "Q00", "Q01", "Q10", "Q11"])
        for p0, table in results.items():
            w.writerow([repr(p0)] + [f"{v:.17g}" for v in table.values.ravel()])
