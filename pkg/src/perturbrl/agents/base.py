"""Shared agent surface: construction registry, action interface, checkpoints."""

from __future__ import annotations

import dataclasses

import numpy as np

from .. import nn, streams
from ..errors import ConfigError, UsageError


class AgentBase:
    kind = "base"

    def __init__(self, obs_dim, action_dim, action_low, action_high, seed, hyper,
                 init_key=()):
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.action_low = np.asarray(action_low, dtype=float)
        self.action_high = np.asarray(action_high, dtype=float)
        self.seed = seed
        self.hyper = hyper
        self.init_rng = streams.substream(seed, "agent-init", self.kind, *init_key)

    # subclasses populate this with their Modules in a stable order
    def modules(self):
        raise NotImplementedError

    def train_iteration(self, env, seed, iteration):
        """One training phase; returns (env_steps_consumed, stats dict)."""
        raise NotImplementedError

    def act(self, obs, rng=None, deterministic=True):
        action, _, _ = self.actor.sample_np(
            np.asarray(obs, dtype=np.float32), rng, deterministic=deterministic)
        return action

    # -- persistence ---------------------------------------------------------

    def _header(self):
        header = {"agent": self.kind,
                  "obs_dim": self.obs_dim, "action_dim": self.action_dim}
        for f in dataclasses.fields(self.hyper):
            header[f"hyper.{f.name}"] = getattr(self.hyper, f.name)
        return header

    def save(self, path):
        arrays = []
        for mod in self.modules():
            arrays.extend(mod.state_arrays())
        nn.save_checkpoint(path, arrays, self._header())

    def load(self, path):
        arrays, header = nn.load_checkpoint(path)
        if header.get("agent") != self.kind:
            raise UsageError(
                f"checkpoint holds a {header.get('agent')!r} agent, expected {self.kind!r}")
        pos = 0
        for mod in self.modules():
            n = len(mod.parameters())
            mod.load_arrays(arrays[pos:pos + n])
            pos += n
        if pos != len(arrays):
            raise UsageError("checkpoint array count mismatch")
        self._after_load()
        return header

    def _after_load(self):
        pass


_REGISTRY = {}


def register(cls):
    _REGISTRY[cls.kind] = cls
    return cls


def agent_kinds():
    return sorted(_REGISTRY)


def make_agent(kind, env, seed, overrides=None):
    """Build an agent for ``env`` with hyperparameter overrides from config."""
    if kind not in _REGISTRY:
        raise ConfigError(f"unknown agent kind {kind!r}; known: {agent_kinds()}")
    cls = _REGISTRY[kind]
    hyper_cls = cls.hyper_cls
    fields = {f.name: f for f in dataclasses.fields(hyper_cls)}
    kwargs = {}
    for key, value in (overrides or {}).items():
        if key not in fields:
            raise ConfigError(f"unknown hyperparameter {key!r} for agent {kind!r}")
        kwargs[key] = type(fields[key].default)(value) \
            if fields[key].default is not None else value
    hyper = hyper_cls(**kwargs)
    return cls(env.obs_dim, env.action_dim, env.action_low, env.action_high,
               seed, hyper)
