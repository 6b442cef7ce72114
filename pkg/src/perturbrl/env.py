"""Episodic environments: cart-pole stabilisation and planar quadrotor tracking.

The per-step pipeline is: disturb the commanded action, simulate one control
interval with the external dynamics force, compute the reward from the *true*
state, then disturb the emitted observation. Rewards are ``exp(-cost)`` with
the quadratic cost from :mod:`perturbrl.metrics`, so they lie in (0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import disturbance as dist
from . import dynamics as dyn
from . import metrics
from .disturbance import DisturbanceSpec, Kind, Site
from .errors import ConfigError, UsageError

TASK_CARTPOLE = "cartpole"
TASK_QUADROTOR = "quadrotor"

# Train-mode initial state is drawn uniformly from these ranges; eval mode
# always starts from the fixed canonical state below.
CARTPOLE_TRAIN_RANGES = np.array([[-0.5, 0.5], [-0.15, 0.15], [-0.1, 0.1], [-0.1, 0.1]])
CARTPOLE_EVAL_STATE = np.array([0.0, 0.1, 0.0, 0.0])
QUADROTOR_TRAIN_RANGES = np.array([[0.3, 0.7], [0.3, 0.7], [-0.15, 0.15],
                                   [-0.1, 0.1], [-0.1, 0.1], [-0.1, 0.1]])
QUADROTOR_EVAL_STATE = np.array([0.5, 0.5, 0.0, 0.0, 0.0, 0.0])

CIRCLE_RADIUS = 0.5
CIRCLE_CENTER = np.array([0.0, 0.5])


def reference_waypoint(step_index: int, max_steps: int = dyn.MAX_EPISODE_STEPS) -> np.ndarray:
    """Point on the tracking circle; one full revolution per episode, phase 0 at +x."""
    phi = 2.0 * np.pi * step_index / max_steps
    return CIRCLE_CENTER + CIRCLE_RADIUS * np.array([np.cos(phi), np.sin(phi)])


def _check_disturbances(specs, site_dims):
    seen = set()
    for spec in specs:
        if spec.site in seen:
            raise ConfigError(f"more than one disturbance on site {spec.site.value}")
        seen.add(spec.site)
        if spec.dim != site_dims[spec.site]:
            raise ConfigError(
                f"disturbance dim {spec.dim} does not match {spec.site.value} "
                f"dimension {site_dims[spec.site]}")
    return {spec.site: spec for spec in specs}


class _EnvBase:
    """Shared episode machinery; subclasses supply physics and task geometry."""

    task: str
    state_dim: int
    action_dim: int
    dynamics_dim = 2

    def __init__(self, disturbances=(), max_steps=dyn.MAX_EPISODE_STEPS,
                 dt=dyn.DT_DEFAULT, mode="train"):
        if max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        if mode not in ("train", "eval"):
            raise ConfigError(f"unknown mode {mode!r}")
        self.max_steps = max_steps
        self.dt = dt
        self.mode = mode
        self._specs = _check_disturbances(disturbances, self.site_dims())
        self._state = None
        self._step_index = 0
        self._done = True
        self._rngs = {}

    def site_dims(self):
        return {Site.OBSERVATION: self.obs_noise_dim,
                Site.ACTION: self.action_dim,
                Site.DYNAMICS: self.dynamics_dim}

    @property
    def obs_noise_dim(self):
        # noise hits the state part of the observation, not the waypoint
        return self.state_dim

    @property
    def state(self):
        return None if self._state is None else self._state.copy()

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        if self.mode == "train":
            lo, hi = self._train_ranges[:, 0], self._train_ranges[:, 1]
            self._state = rng.uniform(lo, hi)
        else:
            self._state = self._eval_state.copy()
        # one independent substream per site so enabling one disturbance can
        # never perturb the draws of another
        children = rng.spawn(3)
        self._rngs = {Site.OBSERVATION: children[0],
                      Site.ACTION: children[1],
                      Site.DYNAMICS: children[2]}
        self._step_index = 0
        self._done = False
        return self._observe()

    def _sample(self, site: Site) -> np.ndarray:
        spec = self._specs.get(site)
        if spec is None:
            return np.zeros(self.site_dims()[site])
        return dist.sample(spec, self._step_index, self._rngs[site])

    def _observe(self) -> np.ndarray:
        obs_state = dist.apply(Site.OBSERVATION, self._state,
                               self._sample(Site.OBSERVATION))
        return self._append_reference(obs_state)

    def step(self, action, adversary_force=None, adversary_action=None):
        """Advance one control interval; returns (obs, reward, done, info)."""
        if self._done:
            raise UsageError("step() called after episode end; call reset() first")
        action = np.atleast_1d(np.asarray(action, dtype=float))
        if action.shape != (self.action_dim,):
            raise ConfigError(f"action shape {action.shape} != ({self.action_dim},)")

        disturbed = dist.apply(Site.ACTION, action, self._sample(Site.ACTION))
        if adversary_action is not None:
            disturbed = disturbed + np.asarray(adversary_action, dtype=float)
        applied = np.clip(disturbed, self.action_low, self.action_high)

        force = self._sample(Site.DYNAMICS)
        if adversary_force is not None:
            force = force + np.asarray(adversary_force, dtype=float)

        cost = metrics.quadratic_cost(self._state, self._goal_state(self._step_index),
                                      applied, self._goal_input(), self.weights)
        self._state = self._simulate(applied, force)
        reward = metrics.step_reward(cost)

        self._step_index += 1
        terminal = self._is_terminal(self._state)
        self._done = terminal or self._step_index >= self.max_steps
        info = {"true_state": self._state.copy(), "cost": cost,
                "applied_action": applied, "step": self._step_index,
                "terminal": terminal}
        return self._observe(), reward, self._done, info

    # episode-metric helpers -------------------------------------------------

    def rmse_pair(self, state: np.ndarray, step_index: int):
        raise NotImplementedError

    def set_params(self, **overrides):
        """Replace physical parameters (used by domain randomization and sweeps)."""
        import dataclasses
        self.params = dataclasses.replace(self.params, **overrides)


class CartPoleEnv(_EnvBase):
    task = TASK_CARTPOLE
    state_dim = 4
    action_dim = 1
    action_low = np.array([-10.0])
    action_high = np.array([10.0])

    _train_ranges = CARTPOLE_TRAIN_RANGES
    _eval_state = CARTPOLE_EVAL_STATE

    def __init__(self, params: dyn.CartPoleParams | None = None,
                 weights: metrics.CostWeights = metrics.CARTPOLE_WEIGHTS, **kwargs):
        self.params = params or dyn.CartPoleParams()
        self.weights = weights
        super().__init__(**kwargs)

    @property
    def obs_dim(self):
        return 4

    def _append_reference(self, obs_state):
        return obs_state

    def _goal_state(self, step_index):
        return np.zeros(4)

    def _goal_input(self):
        return np.zeros(1)

    def _simulate(self, applied, force):
        return dyn.cartpole_step(self._state, applied[0], (force[0], force[1]),
                                 self.params, self.dt)

    def _is_terminal(self, state):
        return dyn.is_terminal_cartpole(state)

    def rmse_pair(self, state, step_index):
        return state, np.zeros(4)


class QuadrotorEnv(_EnvBase):
    task = TASK_QUADROTOR
    state_dim = 6
    action_dim = 2

    _train_ranges = QUADROTOR_TRAIN_RANGES
    _eval_state = QUADROTOR_EVAL_STATE

    def __init__(self, params: dyn.QuadrotorParams | None = None,
                 weights: metrics.CostWeights = metrics.QUADROTOR_WEIGHTS, **kwargs):
        self.params = params or dyn.QuadrotorParams()
        self.weights = weights
        self.action_low = np.zeros(2)
        self.action_high = np.full(2, self.params.thrust_max)
        super().__init__(**kwargs)

    @property
    def obs_dim(self):
        return 8  # state plus the absolute (x, z) of the current waypoint

    def _append_reference(self, obs_state):
        wp = reference_waypoint(self._step_index, self.max_steps)
        return np.concatenate([obs_state, wp])

    def _goal_state(self, step_index):
        wp = reference_waypoint(step_index, self.max_steps)
        return np.array([wp[0], wp[1], 0.0, 0.0, 0.0, 0.0])

    def _goal_input(self):
        return np.full(2, self.params.hover_thrust())

    def _simulate(self, applied, force):
        return dyn.quadrotor_step(self._state, (applied[0], applied[1]),
                                  (force[0], force[1]), self.params, self.dt)

    def _is_terminal(self, state):
        return dyn.is_terminal_quadrotor(state)

    def rmse_pair(self, state, step_index):
        return state[:2], reference_waypoint(step_index, self.max_steps)

    def set_params(self, **overrides):
        super().set_params(**overrides)
        self.action_high = np.full(2, self.params.thrust_max)


def make_env(task: str, **kwargs):
    if task == TASK_CARTPOLE:
        return CartPoleEnv(**kwargs)
    if task == TASK_QUADROTOR:
        return QuadrotorEnv(**kwargs)
    raise ConfigError(f"unknown task {task!r}")
