"""Quadratic-cost return metrics and the RMSE tracking metric.

Per-step cost is a pair of quadratic forms against goal state and goal input;
per-step reward is ``exp(-cost)``, episode return is the sum of rewards, and
the evaluation metric is the return normalized by episode length, averaged
over evaluation episodes. All of it lives in (0, 1] after normalization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError


@dataclass(frozen=True)
class CostWeights:
    w_x: np.ndarray
    w_u: np.ndarray

    def __post_init__(self):
        for name in ("w_x", "w_u"):
            m = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            if m.shape[0] != m.shape[1]:
                raise ConfigError(f"{name} must be square")
            if np.max(np.abs(m - m.T)) > 1e-12:
                raise ConfigError(f"{name} must be symmetric")
            if np.min(np.linalg.eigvalsh(m)) < -1e-10:
                raise ConfigError(f"{name} must be positive semi-definite")
            object.__setattr__(self, name, m)

    @classmethod
    def diagonal(cls, w_x_diag, w_u_diag) -> "CostWeights":
        return cls(np.diag(np.asarray(w_x_diag, dtype=float)),
                   np.diag(np.asarray(w_u_diag, dtype=float)))


# Defaults used by every shipped config; the position/angle components are
# weighted an order of magnitude above rates and inputs.
CARTPOLE_WEIGHTS = CostWeights.diagonal([1.0, 1.0, 0.1, 0.1], [0.1])
QUADROTOR_WEIGHTS = CostWeights.diagonal([1.0, 1.0, 0.1, 0.1, 0.1, 0.1],
                                         [0.1, 0.1])


def quadratic_cost(x, x_goal, u, u_goal, weights: CostWeights) -> float:
    """Per-step cost: state error and input error through their weight matrices."""
    dx = np.asarray(x, dtype=float) - np.asarray(x_goal, dtype=float)
    du = np.atleast_1d(np.asarray(u, dtype=float) - np.asarray(u_goal, dtype=float))
    if dx.shape[0] != weights.w_x.shape[0]:
        raise ConfigError(f"state dimension {dx.shape[0]} does not match w_x")
    if du.shape[0] != weights.w_u.shape[0]:
        raise ConfigError(f"input dimension {du.shape[0]} does not match w_u")
    return float(dx @ weights.w_x @ dx + du @ weights.w_u @ du)


def step_reward(cost: float) -> float:
    return float(np.exp(-cost))


def episode_return(costs) -> float:
    """Sum over steps of exp(-cost)."""
    costs = np.asarray(costs, dtype=float)
    if np.any(costs < 0.0):
        raise DomainError("costs must be non-negative")
    return float(np.sum(np.exp(-costs)))


def avg_normalized_return(episodes) -> float:
    """Mean over episodes of return / length; ``episodes`` is (return, length) pairs."""
    if len(episodes) == 0:
        raise DomainError("no episodes to average")
    vals = []
    for ret, length in episodes:
        if length < 1:
            raise DomainError("episode length must be >= 1")
        vals.append(ret / length)
    return float(np.mean(vals))


def rmse(states, references) -> float:
    """Root mean squared Euclidean distance between trajectory and reference."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    references = np.atleast_2d(np.asarray(references, dtype=float))
    if states.shape != references.shape:
        raise DomainError(f"length/shape mismatch: {states.shape} vs {references.shape}")
    diff = states - references
    return float(np.sqrt(np.mean(np.sum(diff * diff, axis=1))))


def spearman(x, y) -> float:
    """Spearman rank correlation (average ranks for ties)."""
    def ranks(a):
        a = np.asarray(a, dtype=float)
        order = np.argsort(a, kind="stable")
        r = np.empty(len(a))
        r[order] = np.arange(len(a), dtype=float)
        # average ranks within tie groups
        for v in np.unique(a):
            mask = a == v
            r[mask] = r[mask].mean()
        return r

    rx, ry = ranks(x), ranks(y)
    sx, sy = rx.std(), ry.std()
    if sx == 0.0 or sy == 0.0:
        return 0.0
    return float(np.mean((rx - rx.mean()) * (ry - ry.mean())) / (sx * sy))
