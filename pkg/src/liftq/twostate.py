"""Two-state / two-action benchmark with a closed-form optimal control.

Action 0 stays put; action 1 leaves state ``s`` with probability
``lambda_s``.  The reward pays the occupation of state 1, minus its
squared mean, minus a penalty on the L1 distance to the target
``B = (p, 1 - p)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ContractViolation, MeanFieldEnvironment


@dataclass(frozen=True)
class TwoStateParams:
    lambda0: float = 0.5
    lambda1: float = 0.8
    p: float = 0.6
    penalty: float = 5.0
    gamma: float = 0.5

    def __post_init__(self):
        for name in ("lambda0", "lambda1", "p"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ContractViolation(f"{name} must lie in [0, 1], got {v}")
        if not 1.0 - self.lambda0 <= self.p <= self.lambda1:
            raise ContractViolation(
                f"target p={self.p} is not reachable: need 1 - lambda0 <= p <= lambda1")
        if self.penalty < 0.0:
            raise ContractViolation(f"penalty must be >= 0, got {self.penalty}")
        if not 0.0 < self.gamma < 1.0:
            raise ContractViolation(f"gamma must lie in (0, 1), got {self.gamma}")

    @property
    def target(self) -> np.ndarray:
        return np.array([self.p, 1.0 - self.p])


class TwoStateEnv(MeanFieldEnvironment):
    """``mean_field_terms=False`` drops the squared-mean and distance terms, leaving reward ``s``."""

    num_states = 2
    num_actions = 2

    def __init__(self, params: TwoStateParams, mean_field_terms: bool = True):
        self.params = params
        self.gamma = params.gamma
        self.mean_field_terms = mean_field_terms
        self.reward_bound = 2.0 + 2.0 * params.penalty if mean_field_terms else 1.0
        lam = (params.lambda0, params.lambda1)
        P = np.zeros((2, 2, 2))
        for s in (0, 1):
            P[s, 0, s] = 1.0
            P[s, 1, s] = 1.0 - lam[s]
            P[s, 1, 1 - s] = lam[s]
        self._P = P

    def transition(self, s, mu, a, nu):
        return self._P[s, a].copy()

    def kernel(self, mu, nu):
        return self._P

    def _penalty_terms(self, mu) -> float:
        if not self.mean_field_terms:
            return 0.0
        p = self.params
        return mu[1] ** 2 + 2.0 * p.penalty * abs(mu[0] - p.p)

    def reward_expectation(self, s, mu, a, nu):
        return float(s - self._penalty_terms(mu))

    def reward_table(self, mu, nu):
        return np.array([[0.0, 0.0], [1.0, 1.0]]) - self._penalty_terms(mu)


def build_env(params: TwoStateParams, mean_field_terms: bool = True) -> TwoStateEnv:
    return TwoStateEnv(params, mean_field_terms)


def optimal_policy(params: TwoStateParams) -> np.ndarray:
    """Stationary control that moves any population onto the target in one step and keeps it there."""
    stay0 = 1.0 - (1.0 - params.p) / params.lambda0 if params.lambda0 > 0 else 1.0
    stay1 = 1.0 - params.p / params.lambda1 if params.lambda1 > 0 else 1.0
    return np.array([[stay0, 1.0 - stay0], [stay1, 1.0 - stay1]])


def optimal_value(params: TwoStateParams, p0: float, check_regime: bool = True) -> float:
    """Closed-form value of the optimal control from ``(p0, 1 - p0)``.

    Only valid when the distance penalty dominates, so it is refused for
    penalty < 1 unless ``check_regime`` is off (then it is just the formula).
    """
    if check_regime and params.penalty < 1.0:
        raise ContractViolation(
            f"closed-form value needs a dominant distance penalty (>= 1), got {params.penalty}")
    if not 0.0 <= p0 <= 1.0:
        raise ContractViolation(f"p0 must lie in [0, 1], got {p0}")
    p, g = params.p, params.gamma
    first = 1.0 - p0 - (1.0 - p0) ** 2 - 2.0 * params.penalty * abs(p0 - p)
    return first + g / (1.0 - g) * (1.0 - p - (1.0 - p) ** 2)
