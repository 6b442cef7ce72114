"""Clipped-surrogate policy optimization with GAE."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import nn, streams
from ..errors import ConfigError, DomainError
from .base import AgentBase, register
from .rollout import collect


@dataclass(frozen=True)
class PPOHyper:
    clip: float = 0.2
    gamma: float = 0.98
    lam: float = 0.92
    lr: float = 3e-4
    epochs: int = 10
    minibatch: int = 64
    rollout_steps: int = 2000
    entropy_coef: float = 0.0
    value_coef: float = 0.5
    hidden: int = 64

    def __post_init__(self):
        if not 0.0 < self.clip < 1.0:
            raise ConfigError("clip must be in (0, 1)")
        if not 0.0 < self.gamma <= 1.0 or not 0.0 < self.lam <= 1.0:
            raise ConfigError("gamma and lam must be in (0, 1]")


def ppo_surrogate(ratio, advantage, clip):
    """Per-step clipped objective min(r A, clip(r) A) as a Tensor."""
    unclipped = ratio * advantage
    clipped = ratio.clip(1.0 - clip, 1.0 + clip) * advantage
    return unclipped.minimum(clipped)


@register
class PPOAgent(AgentBase):
    kind = "ppo"
    hyper_cls = PPOHyper

    def __init__(self, obs_dim, action_dim, action_low, action_high, seed,
                 hyper: PPOHyper | None = None, init_key=()):
        super().__init__(obs_dim, action_dim, action_low, action_high, seed,
                         hyper or PPOHyper(), init_key=init_key)
        h = self.hyper
        hidden = (h.hidden, h.hidden)
        self.actor = nn.GaussianPolicyHead(obs_dim, action_dim, action_low,
                                           action_high, self.init_rng, hidden)
        self.critic = nn.MLP((obs_dim, *hidden, 1), self.init_rng)
        self.opt = nn.Adam(self.actor.parameters() + self.critic.parameters(),
                           lr=h.lr)
        self.dr_spec = None  # set by dr_wrap

    def modules(self):
        return [self.actor, self.critic]

    def train_iteration(self, env, seed, iteration, tag="rollout", episode_hook=None):
        h = self.hyper
        buf = collect(env, self.actor, self.critic, h.rollout_steps, seed,
                      iteration, h.gamma, h.lam, dr_spec=self.dr_spec,
                      episode_hook=episode_hook, tag=tag)
        stats = self.update(buf, streams.substream(seed, tag + "-update", iteration))
        if buf.episode_returns:
            stats["mean_episode_return"] = float(np.mean(buf.episode_returns))
            stats["mean_episode_length"] = float(np.mean(buf.episode_lengths))
        return len(buf), stats

    def update(self, buf, rng):
        """Epochs of minibatch updates over one rollout batch."""
        h = self.hyper
        adv = buf.advantages.astype(np.float64)
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
        adv = adv.astype(np.float32)
        n = len(buf)
        losses = []
        for _ in range(h.epochs):
            perm = rng.permutation(n)
            for start in range(0, n, h.minibatch):
                idx = perm[start:start + h.minibatch]
                loss = self.loss(buf.obs[idx], buf.z[idx], buf.log_probs[idx],
                                 adv[idx], buf.returns[idx])
                if not np.isfinite(loss.data):
                    raise DomainError("non-finite PPO loss; run aborted")
                self.opt.zero_grad()
                loss.backward()
                self.opt.step()
                losses.append(float(loss.data))
        return {"loss": float(np.mean(losses))}

    def loss(self, obs, z, old_log_probs, advantages, returns):
        h = self.hyper
        new_lp = self.actor.log_prob_t(obs, z)
        ratio = (new_lp - old_log_probs).exp()
        policy_loss = -ppo_surrogate(ratio, advantages, h.clip).mean()
        values = self.critic(obs).reshape(-1)
        value_loss = ((values - returns) ** 2.0).mean()
        entropy_proxy = -new_lp.mean()
        return policy_loss + h.value_coef * value_loss - h.entropy_coef * entropy_proxy


def dr_wrap(agent, spec):
    """Redraw environment physical parameters at every training episode reset."""
    agent.dr_spec = spec
    return agent


@dataclass(frozen=True)
class PPODRHyper(PPOHyper):
    dr_range: str = "mid"  # key into the per-task randomization presets


@register
class PPODRAgent(PPOAgent):
    """PPO trained across uniformly randomized physical parameters.

    The harness attaches the task-specific randomization spec named by
    ``dr_range`` before training; evaluation runs on nominal parameters.
    """

    kind = "ppo_dr"
    hyper_cls = PPODRHyper
