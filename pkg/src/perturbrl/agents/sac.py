"""Off-policy entropy-regularized actor-critic with twin critics and Polyak targets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import nn, streams
from ..errors import ConfigError, DomainError
from .base import AgentBase, register


@dataclass(frozen=True)
class SACHyper:
    gamma: float = 0.98
    tau: float = 0.005
    lr: float = 3e-4
    batch: int = 256
    replay_capacity: int = 100_000
    warmup_steps: int = 1000
    updates_per_step: int = 1
    auto_temperature: bool = True
    init_temperature: float = 0.2
    hidden: int = 64

    def __post_init__(self):
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError("tau must be in (0, 1]")
        if self.replay_capacity < self.batch:
            raise ConfigError("replay capacity must be >= batch size")


class ReplayBuffer:
    def __init__(self, capacity, obs_dim, action_dim):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.actions = np.zeros((capacity, action_dim), dtype=np.float32)
        self.rewards = np.zeros(capacity, dtype=np.float32)
        self.next_obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.not_done = np.zeros(capacity, dtype=np.float32)
        self.size = 0
        self._pos = 0

    def add(self, obs, action, reward, next_obs, terminal):
        i = self._pos
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_obs[i] = next_obs
        # time-limit truncation still bootstraps; only true failures cut the target
        self.not_done[i] = 0.0 if terminal else 1.0
        self._pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch, rng):
        idx = rng.integers(0, self.size, batch)
        return (self.obs[idx], self.actions[idx], self.rewards[idx],
                self.next_obs[idx], self.not_done[idx])


class TemperatureModule(nn.Module):
    def __init__(self, init_temperature):
        super().__init__()
        self.log_alpha = self._new_param(
            np.array([np.log(init_temperature)], dtype=np.float32))

    @property
    def value(self):
        return float(np.exp(self.log_alpha.data[0]))


@register
class SACAgent(AgentBase):
    kind = "sac"
    hyper_cls = SACHyper

    def __init__(self, obs_dim, action_dim, action_low, action_high, seed,
                 hyper: SACHyper | None = None):
        super().__init__(obs_dim, action_dim, action_low, action_high, seed,
                         hyper or SACHyper())
        h = self.hyper
        hidden = (h.hidden, h.hidden)
        self.actor = nn.GaussianPolicyHead(obs_dim, action_dim, action_low,
                                           action_high, self.init_rng, hidden)
        self.q1 = nn.MLP((obs_dim + action_dim, *hidden, 1), self.init_rng)
        self.q2 = nn.MLP((obs_dim + action_dim, *hidden, 1), self.init_rng)
        self.q1_target = [a.copy() for a in self.q1.state_arrays()]
        self.q2_target = [a.copy() for a in self.q2.state_arrays()]
        self.temperature = TemperatureModule(h.init_temperature)
        self.target_entropy = -float(action_dim)

        self.actor_opt = nn.Adam(self.actor.parameters(), lr=h.lr)
        self.critic_opt = nn.Adam(self.q1.parameters() + self.q2.parameters(), lr=h.lr)
        self.alpha_opt = nn.Adam(self.temperature.parameters(), lr=h.lr)

        self.replay = ReplayBuffer(h.replay_capacity, obs_dim, action_dim)
        self.total_env_steps = 0
        self._extra_init(hidden)

    def _extra_init(self, hidden):
        pass

    def modules(self):
        return [self.actor, self.q1, self.q2, self.temperature]

    def _after_load(self):
        self.q1_target = [a.copy() for a in self.q1.state_arrays()]
        self.q2_target = [a.copy() for a in self.q2.state_arrays()]

    # -- training ------------------------------------------------------------

    def train_iteration(self, env, seed, iteration):
        """One episode of interaction with one gradient phase per step."""
        h = self.hyper
        env_rng = streams.substream(seed, "rollout", iteration, 0)
        act_rng = streams.substream(seed, "rollout-act", iteration, 0)
        upd_rng = streams.substream(seed, "sac-update", iteration)
        self._on_episode_start(streams.substream(seed, "episode-extra", iteration))

        obs = env.reset(env_rng).astype(np.float32)
        done = False
        steps = 0
        ep_return = 0.0
        losses = []
        while not done:
            if self.total_env_steps < h.warmup_steps:
                action = act_rng.uniform(self.action_low, self.action_high)
            else:
                action, _, _ = self.actor.sample_np(obs, act_rng)
            next_obs, reward, done, info = env.step(action)
            next_obs = next_obs.astype(np.float32)
            self.replay.add(obs, action, reward, next_obs, info["terminal"])
            obs = next_obs
            steps += 1
            self.total_env_steps += 1
            ep_return += reward
            if self.replay.size >= h.batch and self.total_env_steps >= h.warmup_steps:
                for _ in range(h.updates_per_step):
                    losses.append(self.update_step(upd_rng))
        stats = {"mean_episode_return": ep_return, "mean_episode_length": float(steps),
                 "temperature": self.temperature.value}
        if losses:
            stats["critic_loss"] = float(np.mean([l[0] for l in losses]))
            stats["actor_loss"] = float(np.mean([l[1] for l in losses]))
        return steps, stats

    def _on_episode_start(self, rng):
        pass

    def update_step(self, rng):
        batch = self.replay.sample(self.hyper.batch, rng)
        closs = self._critic_update(batch, rng)
        aloss = self._actor_update(batch, rng)
        self._temperature_update(batch, rng)
        self._polyak()
        return closs, aloss

    # -- update pieces (overridden by the distributional variants) -----------

    def _q_target_np(self, arrays, x):
        h = x
        last = len(arrays) // 2 - 1
        for i in range(0, len(arrays), 2):
            h = h @ arrays[i] + arrays[i + 1]
            if i // 2 != last:
                h = np.tanh(h)
        return h

    def td_target(self, batch, rng):
        """Entropy-regularized one-step target from the target critics."""
        _, _, rewards, next_obs, not_done = batch
        mean_n = self.actor.trunk.forward_np(next_obs)
        std = self.actor._std_np()
        z = mean_n + std * rng.standard_normal(mean_n.shape).astype(np.float32)
        next_action = self.actor.squash_np(z).astype(np.float32)
        logp = self.actor.log_prob_np(mean_n, z)
        xa = np.concatenate([next_obs, next_action], axis=1)
        q1 = self._q_target_np(self.q1_target, xa).ravel()
        q2 = self._q_target_np(self.q2_target, xa).ravel()
        alpha = self.temperature.value
        y = rewards + self.hyper.gamma * not_done * (np.minimum(q1, q2) - alpha * logp)
        return y.astype(np.float32)

    def critic_loss_t(self, obs, actions, y):
        xa = np.concatenate([obs, actions], axis=1)
        q1 = self.q1(xa).reshape(-1)
        q2 = self.q2(xa).reshape(-1)
        return ((q1 - y) ** 2.0).mean() + ((q2 - y) ** 2.0).mean()

    def _critic_update(self, batch, rng):
        obs, actions, _, _, _ = batch
        y = self.td_target(batch, rng)
        loss = self.critic_loss_t(obs, actions, y)
        if not np.isfinite(loss.data):
            raise DomainError("non-finite SAC critic loss; run aborted")
        self.critic_opt.zero_grad()
        loss.backward()
        self.critic_opt.step()
        return float(loss.data)

    def actor_loss_t(self, obs, eps):
        action, logp = self.actor.rsample_t(obs, eps)
        xa = nn.concat_cols([nn.Tensor(obs), action])
        q = self.q1(xa).reshape(-1).minimum(self.q2(xa).reshape(-1))
        return (logp * self.temperature.value - q).mean()

    def _actor_update(self, batch, rng):
        obs = batch[0]
        eps = rng.standard_normal((len(obs), self.action_dim)).astype(np.float32)
        loss = self.actor_loss_t(obs, eps)
        if not np.isfinite(loss.data):
            raise DomainError("non-finite SAC actor loss; run aborted")
        self.actor_opt.zero_grad()
        loss.backward()
        self.actor_opt.step()
        self._last_actor_eps = eps
        return float(loss.data)

    def _temperature_update(self, batch, rng):
        if not self.hyper.auto_temperature:
            return
        obs = batch[0]
        mean = self.actor.trunk.forward_np(obs)
        std = self.actor._std_np()
        z = mean + std * self._last_actor_eps
        logp = self.actor.log_prob_np(mean, z)
        loss = (self.temperature.log_alpha * (-(logp + self.target_entropy).mean())).sum()
        self.alpha_opt.zero_grad()
        loss.backward()
        self.alpha_opt.step()

    def _polyak(self):
        tau = self.hyper.tau
        for target, net in ((self.q1_target, self.q1), (self.q2_target, self.q2)):
            for t, p in zip(target, net.parameters()):
                t *= (1.0 - tau)
                t += tau * p.data

    def polyak_targets(self):
        return self.q1_target, self.q2_target
