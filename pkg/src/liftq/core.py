"""Finite-space measure-flow machinery.

Distributions are dense float vectors over a finite ground set, local
policies are row-stochastic ``(num_states, num_actions)`` arrays.  A
population under a local policy ``h`` moves deterministically through
the flow operator, and the lifted problem collects the integrated reward
along that flow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence, Union

import numpy as np

DIST_ATOL = 1e-9
_RENORM_FLOOR = 1e-12


class ContractViolation(ValueError):
    """Raised when an input breaks a shape or simplex contract."""


def as_distribution(weights, size: int | None = None) -> np.ndarray:
    """Validate ``weights`` as a point on the probability simplex."""
    arr = np.asarray(weights, dtype=float)
    if arr.ndim != 1:
        raise ContractViolation(f"distribution must be 1-d, got shape {arr.shape}")
    if size is not None and arr.shape[0] != size:
        raise ContractViolation(f"distribution has {arr.shape[0]} entries, expected {size}")
    if np.any(arr < 0.0):
        raise ContractViolation("distribution has negative weights")
    total = arr.sum()
    if abs(total - 1.0) > DIST_ATOL:
        raise ContractViolation(f"distribution sums to {total!r}")
    return arr


def as_local_policy(rows, num_states: int | None = None, num_actions: int | None = None) -> np.ndarray:
    """Validate ``rows`` as a local policy (one action distribution per state)."""
    arr = np.asarray(rows, dtype=float)
    if arr.ndim != 2:
        raise ContractViolation(f"local policy must be 2-d, got shape {arr.shape}")
    if num_states is not None and arr.shape[0] != num_states:
        raise ContractViolation(f"local policy has {arr.shape[0]} rows, expected {num_states}")
    if num_actions is not None and arr.shape[1] != num_actions:
        raise ContractViolation(f"local policy has {arr.shape[1]} columns, expected {num_actions}")
    if np.any(arr < 0.0) or np.any(np.abs(arr.sum(axis=1) - 1.0) > DIST_ATOL):
        raise ContractViolation("every local policy row must be a distribution")
    return arr


def dirac(index: int, size: int) -> np.ndarray:
    out = np.zeros(size)
    out[index] = 1.0
    return out


def l1_distance(mu, mu_prime) -> float:
    """Sum of absolute differences; equals W1 on a finite set under the discrete metric (up to a factor 2)."""
    a = np.asarray(mu, dtype=float)
    b = np.asarray(mu_prime, dtype=float)
    if a.shape != b.shape:
        raise ContractViolation(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.abs(a - b).sum())


class MeanFieldEnvironment:
    """Base class for finite mean-field environments.

    Subclasses implement :meth:`transition` and :meth:`reward_expectation`
    and may override :meth:`kernel` / :meth:`reward_table` with vectorized
    versions.  ``reward_bound`` is ``None`` when no bound is declared.
    """

    num_states: int
    num_actions: int
    gamma: float
    reward_bound: float | None = None
    deterministic_reward: bool = True

    def transition(self, s: int, mu: np.ndarray, a: int, nu: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def reward_expectation(self, s: int, mu: np.ndarray, a: int, nu: np.ndarray) -> float:
        raise NotImplementedError

    def reward_sample(self, s: int, mu: np.ndarray, a: int, nu: np.ndarray, rng: np.random.Generator) -> float:
        return self.reward_expectation(s, mu, a, nu)

    def kernel(self, mu: np.ndarray, nu: np.ndarray) -> np.ndarray:
        """Transition kernel as an ``(S, A, S)`` array at the given mean field."""
        out = np.empty((self.num_states, self.num_actions, self.num_states))
        for s in range(self.num_states):
            for a in range(self.num_actions):
                out[s, a] = self.transition(s, mu, a, nu)
        return out

    def reward_table(self, mu: np.ndarray, nu: np.ndarray) -> np.ndarray:
        out = np.empty((self.num_states, self.num_actions))
        for s in range(self.num_states):
            for a in range(self.num_actions):
                out[s, a] = self.reward_expectation(s, mu, a, nu)
        return out

    def sample_rewards(self, states: np.ndarray, actions: np.ndarray, mu: np.ndarray, nu: np.ndarray,
                       rng: np.random.Generator) -> np.ndarray:
        """One reward draw per (state, action) pair in the input arrays."""
        if self.deterministic_reward:
            return self.reward_table(mu, nu)[states, actions]
        return np.array([self.reward_sample(int(s), mu, int(a), nu, rng) for s, a in zip(states, actions)])


class TabularEnvironment(MeanFieldEnvironment):
    """Mean-field-free environment given by fixed ``P[s, a, s']`` and ``r[s, a]``.

    ``reward_noise`` adds centred Gaussian noise to sampled rewards (the
    declared bound is then not almost-sure, so leave ``reward_bound`` unset).
    """

    def __init__(self, kernel, rewards, gamma: float, reward_bound: float | None = None,
                 reward_noise: float = 0.0):
        P = np.asarray(kernel, dtype=float)
        r = np.asarray(rewards, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2] or r.shape != P.shape[:2]:
            raise ContractViolation(f"bad tabular shapes P{P.shape} r{r.shape}")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=2) - 1.0) > DIST_ATOL):
            raise ContractViolation("kernel rows must be distributions")
        if not 0.0 < gamma < 1.0:
            raise ContractViolation(f"gamma must lie in (0, 1), got {gamma}")
        self.P = P
        self.r = r
        self.num_states, self.num_actions = r.shape
        self.gamma = float(gamma)
        self.reward_noise = float(reward_noise)
        self.deterministic_reward = reward_noise == 0.0
        if reward_bound is None and self.deterministic_reward:
            reward_bound = float(np.abs(r).max())
        self.reward_bound = reward_bound

    def transition(self, s, mu, a, nu):
        return self.P[s, a]

    def reward_expectation(self, s, mu, a, nu):
        return float(self.r[s, a])

    def reward_sample(self, s, mu, a, nu, rng):
        return float(self.r[s, a] + self.reward_noise * rng.standard_normal())

    def kernel(self, mu, nu):
        return self.P

    def reward_table(self, mu, nu):
        return self.r

    def sample_rewards(self, states, actions, mu, nu, rng):
        out = self.r[states, actions]
        if self.reward_noise:
            out = out + self.reward_noise * rng.standard_normal(out.shape)
        return out


def _check_pair(env: MeanFieldEnvironment, mu, h) -> tuple[np.ndarray, np.ndarray]:
    return (as_distribution(mu, env.num_states),
            as_local_policy(h, env.num_states, env.num_actions))


def action_marginal(mu, h) -> np.ndarray:
    """Population action distribution ``nu(a) = sum_s mu(s) h(s, a)``."""
    mu = as_distribution(mu)
    h = as_local_policy(h, num_states=mu.shape[0])
    return mu @ h


def _renormalize(weights: np.ndarray) -> np.ndarray:
    total = weights.sum()
    drift = abs(total - 1.0)
    if drift > DIST_ATOL:
        raise ContractViolation(f"flow output drifted to total mass {total!r}")
    if drift > _RENORM_FLOOR:
        weights = weights / total
    return weights


def flow(env: MeanFieldEnvironment, mu, h) -> np.ndarray:
    """One step of the deterministic population flow under local policy ``h``."""
    mu, h = _check_pair(env, mu, h)
    nu = mu @ h
    P = env.kernel(mu, nu)
    out = np.einsum("s,sa,sat->t", mu, h, P)
    return _renormalize(np.clip(out, 0.0, None))


def integrated_reward(env: MeanFieldEnvironment, mu, h) -> float:
    """Population-averaged expected one-step reward."""
    mu, h = _check_pair(env, mu, h)
    nu = mu @ h
    return float(np.einsum("s,sa,sa->", mu, h, env.reward_table(mu, nu)))


def _sample_rows(cdf: np.ndarray, rows: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw one column index per entry of ``rows`` from the row-wise CDF table."""
    u = rng.random(rows.shape[0])
    picked = cdf[rows]
    idx = (u[:, None] >= picked).sum(axis=1)
    return np.minimum(idx, cdf.shape[1] - 1)


def _sample_actions(h: np.ndarray, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return _sample_rows(np.cumsum(h, axis=1), states, rng)


def sample_integrated_reward(env: MeanFieldEnvironment, mu, h, num_particles: int,
                             rng: np.random.Generator, return_stderr: bool = False):
    """Monte-Carlo estimate of :func:`integrated_reward` from iid particles."""
    if num_particles < 1:
        raise ContractViolation("num_particles must be >= 1")
    mu, h = _check_pair(env, mu, h)
    nu = mu @ h
    states = rng.choice(env.num_states, size=num_particles, p=mu)
    actions = _sample_actions(h, states, rng)
    rewards = env.sample_rewards(states, actions, mu, nu, rng)
    value = float(rewards.mean())
    if not return_stderr:
        return value
    se = float(rewards.std(ddof=1) / math.sqrt(num_particles)) if num_particles > 1 else math.inf
    return Estimate(value, se)


# A control is a constant local policy, a callable mu -> h (stationary
# feedback), or a sequence of local policies indexed by time.
Control = Union[np.ndarray, Callable[[np.ndarray], np.ndarray], Sequence[np.ndarray]]


def policy_at(control: Control, t: int, mu: np.ndarray) -> np.ndarray:
    if callable(control):
        return np.asarray(control(mu), dtype=float)
    arr = control if isinstance(control, np.ndarray) else None
    if arr is not None and arr.ndim == 2:
        return arr
    if t >= len(control):
        raise ContractViolation(f"control sequence has no entry for t={t}")
    return np.asarray(control[t], dtype=float)


@dataclass(frozen=True)
class Step:
    mu: np.ndarray
    h: np.ndarray
    reward: float


@dataclass
class Rollout:
    trajectory: list = field(default_factory=list)  # mu_0 .. mu_T
    steps: list = field(default_factory=list)       # (mu_t, h_t, r_t) for t < T

    @property
    def rewards(self) -> np.ndarray:
        return np.array([st.reward for st in self.steps])


def rollout(env: MeanFieldEnvironment, control: Control, mu0, horizon: int) -> Rollout:
    if horizon < 0:
        raise ContractViolation("horizon must be >= 0")
    mu = as_distribution(mu0, env.num_states)
    out = Rollout(trajectory=[mu])
    for t in range(horizon):
        h = policy_at(control, t, mu)
        out.steps.append(Step(mu, h, integrated_reward(env, mu, h)))
        mu = flow(env, mu, h)
        out.trajectory.append(mu)
    return out


def truncation_horizon(gamma: float, reward_bound: float, tol: float) -> int:
    """Smallest T with gamma**T * r_max / (1 - gamma) below ``tol``."""
    if reward_bound <= 0.0:
        return 0
    T = math.ceil(math.log(tol * (1.0 - gamma) / reward_bound) / math.log(gamma))
    return max(T, 0)


def policy_value(env: MeanFieldEnvironment, control: Control, mu0, tol: float = 1e-8,
                 horizon: int | None = None) -> float:
    """Discounted lifted value of ``control`` from ``mu0``, truncated to within ``tol``."""
    if horizon is None:
        if env.reward_bound is None:
            raise ContractViolation("reward_bound undeclared: pass an explicit horizon")
        horizon = truncation_horizon(env.gamma, env.reward_bound, tol)
    rewards = rollout(env, control, mu0, horizon).rewards
    return float(np.sum(rewards * env.gamma ** np.arange(len(rewards))))


class Estimate(NamedTuple):
    value: float
    stderr: float


@dataclass
class ParticleEnsemble:
    """Empirical sample of individual states; the seed records its provenance."""

    states: np.ndarray
    seed: int | None = None

    @classmethod
    def sample(cls, mu, num_particles: int, seed: int) -> "ParticleEnsemble":
        mu = as_distribution(mu)
        rng = np.random.default_rng(seed)
        return cls(rng.choice(mu.shape[0], size=num_particles, p=mu), seed)

    def empirical(self, num_states: int) -> np.ndarray:
        return np.bincount(self.states, minlength=num_states) / len(self.states)


def particle_value(env: MeanFieldEnvironment, control: Control, mu0, num_particles: int,
                   horizon: int, rng: np.random.Generator, return_stderr: bool = False,
                   ensemble: ParticleEnsemble | None = None):
    """Monte-Carlo value over individually simulated agents.

    Agents start iid from ``mu0`` (or from ``ensemble`` when given) and
    move under the kernel with actions drawn from ``control``; the
    mean-field arguments are frozen at the deterministic flow, which is
    the infinite-population limit.
    """
    if num_particles < 1:
        raise ContractViolation("num_particles must be >= 1")
    mu = as_distribution(mu0, env.num_states)
    if ensemble is not None:
        states = np.asarray(ensemble.states)
        num_particles = states.shape[0]
    else:
        states = rng.choice(env.num_states, size=num_particles, p=mu)
    totals = np.zeros(num_particles)
    discount = 1.0
    for t in range(horizon):
        h = as_local_policy(policy_at(control, t, mu), env.num_states, env.num_actions)
        nu = mu @ h
        actions = _sample_actions(h, states, rng)
        totals += discount * env.sample_rewards(states, actions, mu, nu, rng)
        P = env.kernel(mu, nu)
        cdf = np.cumsum(P.reshape(-1, env.num_states), axis=1)
        states = _sample_rows(cdf, states * env.num_actions + actions, rng)
        mu = flow(env, mu, h)
        discount *= env.gamma
    value = float(totals.mean())
    if not return_stderr:
        return value
    se = float(totals.std(ddof=1) / math.sqrt(num_particles)) if num_particles > 1 else math.inf
    return Estimate(value, se)
