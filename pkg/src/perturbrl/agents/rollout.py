"""On-policy rollout collection and generalized advantage estimation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import streams


def gae(rewards, values, gamma, lam):
    """Advantages for one trajectory segment.

    ``values`` must be one element longer than ``rewards``; the extra entry is
    the bootstrap value after the last step (zero if the episode terminated).
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    assert len(values) == len(rewards) + 1
    adv = np.zeros(len(rewards))
    running = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        delta = rewards[t] + gamma * values[t + 1] - values[t]
        running = delta + gamma * lam * running
        adv[t] = running
    return adv


@dataclass
class RolloutBuffer:
    obs: np.ndarray
    z: np.ndarray          # pre-squash policy draws
    log_probs: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray    # advantage + value, the critic regression target
    episode_ids: np.ndarray = None  # which collection episode produced each row
    episode_returns: list = field(default_factory=list)
    episode_lengths: list = field(default_factory=list)

    def __len__(self):
        return len(self.obs)

    def rows(self, idx) -> "RolloutBuffer":
        return RolloutBuffer(self.obs[idx], self.z[idx], self.log_probs[idx],
                             self.advantages[idx], self.returns[idx],
                             self.episode_ids[idx])


def collect(env, actor, critic, n_steps, seed, iteration, gamma, lam,
            dr_spec=None, episode_hook=None, tag="rollout"):
    """Collect ``n_steps`` of on-policy experience across as many episodes as needed.

    Episode e of iteration i draws its environment stream from
    ``substream(seed, tag, i, e)`` and the policy-noise stream from
    ``substream(seed, tag+"-act", i, e)``, which makes whole rollouts pure
    functions of (seed, iteration). ``dr_spec`` redraws physical parameters at
    each episode reset; ``episode_hook(episode_index)`` runs at each reset
    (adversarial training uses it to re-draw the active adversary).
    """
    from ..disturbance import sample_params

    obs_buf, z_buf, lp_buf, ep_ids = [], [], [], []
    rew_segments, val_segments = [], []
    ep_returns, ep_lengths = [], []

    steps = 0
    episode = 0
    while steps < n_steps:
        if dr_spec is not None:
            draws = sample_params(dr_spec, streams.substream(seed, tag + "-dr", iteration, episode))
            env.set_params(**draws)
        if episode_hook is not None:
            episode_hook(episode)
        env_rng = streams.substream(seed, tag, iteration, episode)
        act_rng = streams.substream(seed, tag + "-act", iteration, episode)
        obs = env.reset(env_rng)
        rewards, values = [], []
        ep_return = 0.0
        done = False
        while not done and steps < n_steps:
            obs32 = obs.astype(np.float32)
            action, log_prob, z = actor.sample_np(obs32, act_rng)
            value = float(critic.forward_np(obs32)[0])
            next_obs, reward, done, info = env.step(action)
            obs_buf.append(obs32)
            z_buf.append(z.astype(np.float32))
            lp_buf.append(np.float32(log_prob))
            ep_ids.append(episode)
            rewards.append(reward)
            values.append(value)
            ep_return += reward
            obs = next_obs
            steps += 1
        if done and info["terminal"]:
            bootstrap = 0.0
        elif done:
            # time-limit truncation: bootstrap with the critic
            bootstrap = float(critic.forward_np(obs.astype(np.float32))[0])
        else:
            bootstrap = float(critic.forward_np(obs.astype(np.float32))[0])
        rew_segments.append(np.array(rewards))
        val_segments.append(np.array(values + [bootstrap]))
        if done:
            ep_returns.append(ep_return)
            ep_lengths.append(len(rewards))
        episode += 1

    adv = np.concatenate([gae(r, v, gamma, lam) for r, v in zip(rew_segments, val_segments)])
    rets = adv + np.concatenate([v[:-1] for v in val_segments])
    return RolloutBuffer(
        obs=np.stack(obs_buf),
        z=np.stack(z_buf),
        log_probs=np.array(lp_buf),
        advantages=adv.astype(np.float32),
        returns=rets.astype(np.float32),
        episode_ids=np.array(ep_ids),
        episode_returns=ep_returns,
        episode_lengths=ep_lengths,
    )
