"""Two-player adversarial training: a protagonist hardened against learned
destabilizing disturbances.

One code path serves both benchmarked variants: a single adversary acting on
the external-force channel, and a uniformly sampled population of adversaries
acting on the action channel. Each training iteration alternates a
protagonist phase (adversaries frozen, acting simultaneously) and an
adversary phase (protagonist frozen, adversary reward is the exact negation
of the protagonist's). Adversary outputs are squashed into the scale bound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import streams
from ..errors import ConfigError
from .base import AgentBase, register
from .ppo import PPOAgent, PPOHyper
from .rollout import collect

CHANNEL_FORCE = "force"
CHANNEL_ACTION = "action"


class ProtagonistView:
    """Env facade where frozen adversaries act alongside the protagonist.

    Both players observe the same environment observation.
    """

    def __init__(self, env, channel):
        self.env = env
        self.channel = channel
        self.adv_act_fn = None  # rebound per episode by the training hook
        self._last_obs = None

    def __getattr__(self, name):
        return getattr(self.env, name)

    def reset(self, rng):
        self._last_obs = self.env.reset(rng)
        return self._last_obs

    def step(self, action):
        adv = self.adv_act_fn(self._last_obs)
        if self.channel == CHANNEL_FORCE:
            result = self.env.step(action, adversary_force=adv)
        else:
            result = self.env.step(action, adversary_action=adv)
        self._last_obs = result[0]
        return result


class AdversaryView:
    """Env facade seen by a learning adversary: same observation, negated reward."""

    def __init__(self, env, channel, scale, prot_act_fn):
        self.env = env
        self.channel = channel
        self.prot_act_fn = prot_act_fn
        self.obs_dim = env.obs_dim
        self.action_dim = 2 if channel == CHANNEL_FORCE else env.action_dim
        self.action_low = np.full(self.action_dim, -scale)
        self.action_high = np.full(self.action_dim, scale)
        self._last_obs = None

    def __getattr__(self, name):
        return getattr(self.env, name)

    def reset(self, rng):
        self._last_obs = self.env.reset(rng)
        return self._last_obs

    def step(self, adv_action):
        prot_action = self.prot_act_fn(self._last_obs)
        if self.channel == CHANNEL_FORCE:
            result = self.env.step(prot_action, adversary_force=adv_action)
        else:
            result = self.env.step(prot_action, adversary_action=adv_action)
        obs, reward, done, info = result
        self._last_obs = obs
        return obs, -reward, done, info


class _Switchable:
    """Actor/critic stand-ins that delegate to the per-episode drawn adversary."""

    def __init__(self, population):
        self.population = population
        self.current = 0

    def sample_np(self, obs, rng, deterministic=False):
        return self.population[self.current].actor.sample_np(obs, rng, deterministic)

    def forward_np(self, x):
        return self.population[self.current].critic.forward_np(x)


class _AdversarialBase(AgentBase):
    """Shared protagonist/adversary alternation; subclasses fix the defaults."""

    def __init__(self, obs_dim, action_dim, action_low, action_high, seed, hyper):
        super().__init__(obs_dim, action_dim, action_low, action_high, seed, hyper)
        h = self.hyper
        if h.channel not in (CHANNEL_FORCE, CHANNEL_ACTION):
            raise ConfigError(f"unknown adversary channel {h.channel!r}")
        if h.population < 1:
            raise ConfigError("population must be >= 1")
        ppo_hyper = PPOHyper(clip=h.clip, gamma=h.gamma, lam=h.lam, lr=h.lr,
                             epochs=h.epochs, minibatch=h.minibatch,
                             rollout_steps=h.rollout_steps,
                             entropy_coef=h.entropy_coef, value_coef=h.value_coef,
                             hidden=h.hidden)
        # protagonist shares the plain PPO construction so a disabled
        # adversary reproduces PPO bit-exactly
        self.protagonist = PPOAgent(obs_dim, action_dim, action_low, action_high,
                                    seed, ppo_hyper)
        adv_dim = 2 if h.channel == CHANNEL_FORCE else action_dim
        lo, hi = np.full(adv_dim, -h.adversary_scale), np.full(adv_dim, h.adversary_scale)
        self.adversaries = [
            PPOAgent(obs_dim, adv_dim, lo, hi, seed, ppo_hyper,
                     init_key=("adversary", i))
            for i in range(h.population)]

    def modules(self):
        mods = self.protagonist.modules()
        for adv in self.adversaries:
            mods.extend(adv.modules())
        return mods

    @property
    def actor(self):
        return self.protagonist.actor

    @property
    def dr_spec(self):
        return self.protagonist.dr_spec

    @dr_spec.setter
    def dr_spec(self, value):
        self.protagonist.dr_spec = value

    def train_iteration(self, env, seed, iteration):
        h = self.hyper
        stats = {}

        # protagonist phase: frozen adversaries act simultaneously
        view = ProtagonistView(env, h.channel)

        def prot_hook(episode):
            idx = int(streams.substream(seed, "adv-select", iteration, episode)
                      .integers(0, h.population))
            adv = self.adversaries[idx]
            adv_rng = streams.substream(seed, "adv-act", iteration, episode)
            view.adv_act_fn = lambda obs: adv.actor.sample_action_np(
                obs.astype(np.float32), adv_rng)

        steps, prot_stats = self.protagonist.train_iteration(
            view, seed, iteration, tag="rollout", episode_hook=prot_hook)
        stats.update(prot_stats)

        # adversary phase: protagonist frozen, rewards negated, only the
        # per-episode drawn adversary accumulates experience
        if h.adversary_scale > 0.0:
            steps += self._adversary_phase(env, seed, iteration, stats)
        return steps, stats

    def _adversary_phase(self, env, seed, iteration, stats):
        h = self.hyper
        switch = _Switchable(self.adversaries)
        owners = {}
        prot_rng_box = {}

        def prot_act_fn(obs):
            return self.protagonist.actor.sample_action_np(
                obs.astype(np.float32), prot_rng_box["rng"])

        view = AdversaryView(env, h.channel, h.adversary_scale, prot_act_fn)

        def adv_hook(episode):
            idx = int(streams.substream(seed, "adv-select-train", iteration, episode)
                      .integers(0, h.population))
            switch.current = idx
            owners[episode] = idx
            prot_rng_box["rng"] = streams.substream(seed, "prot-act", iteration, episode)

        buf = collect(view, switch, switch, h.rollout_steps, seed, iteration,
                      h.gamma, h.lam, episode_hook=adv_hook, tag="adv-rollout")
        owner_per_row = np.array([owners[e] for e in buf.episode_ids])
        losses = []
        for idx, adv in enumerate(self.adversaries):
            rows = np.flatnonzero(owner_per_row == idx)
            if len(rows) < 2:
                continue
            upd = adv.update(buf.rows(rows),
                             streams.substream(seed, "adv-update", iteration, idx))
            losses.append(upd["loss"])
        if buf.episode_returns:
            stats["adversary_return"] = float(np.mean(buf.episode_returns))
        if losses:
            stats["adversary_loss"] = float(np.mean(losses))
        return len(buf)


@dataclass(frozen=True)
class RARLHyper(PPOHyper):
    adversary_scale: float = 0.5
    channel: str = CHANNEL_FORCE
    population: int = 1


@register
class RARLAgent(_AdversarialBase):
    kind = "rarl"
    hyper_cls = RARLHyper


@dataclass(frozen=True)
class RAPHyper(PPOHyper):
    adversary_scale: float = 0.1
    channel: str = CHANNEL_ACTION
    population: int = 5


@register
class RAPAgent(_AdversarialBase):
    kind = "rap"
    hyper_cls = RAPHyper
