"""Benchmarked agents: on-policy, off-policy, adversarial, distributional."""

from .base import AgentBase, agent_kinds, make_agent
from .rollout import RolloutBuffer, collect, gae
from .ppo import PPOAgent, PPODRAgent, PPOHyper, dr_wrap
from .sac import ReplayBuffer, SACAgent, SACHyper
from .adversarial import RAPAgent, RAPHyper, RARLAgent, RARLHyper
from .distributional import (RAACAgent, RAACHyper, WCPGAgent, WCPGHyper,
                             gaussian_cvar, normal_cdf, normal_pdf,
                             pinball_loss, raac_cvar)
from .ppo import ppo_surrogate

__all__ = [
    "AgentBase", "agent_kinds", "make_agent", "RolloutBuffer", "collect",
    "gae", "PPOAgent", "PPODRAgent", "PPOHyper", "dr_wrap", "ppo_surrogate",
    "ReplayBuffer", "SACAgent", "SACHyper", "RAPAgent", "RAPHyper",
    "RARLAgent", "RARLHyper", "RAACAgent", "RAACHyper", "WCPGAgent",
    "WCPGHyper", "gaussian_cvar", "normal_cdf", "normal_pdf", "pinball_loss",
    "raac_cvar",
]
