"""Risk-averse distributional variants built on the SAC agent.

``WCPGAgent`` models the return distribution as a Gaussian with learned mean
and variance value functions and weights the actor by the closed-form CVaR
``Q - (pdf(alpha)/cdf(alpha)) * sqrt(variance)``, with the percentile
threshold redrawn uniformly per training episode. ``RAACAgent`` conditions a
single critic on the percentile input, trains it by quantile (pinball)
regression, and the actor maximizes a Monte Carlo CVaR estimate at a fixed
threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import nn, streams
from ..errors import DomainError
from .base import register
from .sac import SACAgent, SACHyper


def normal_pdf(x):
    return np.exp(-0.5 * np.square(x)) / math.sqrt(2.0 * math.pi)


def normal_cdf(x):
    return 0.5 * (1.0 + np.vectorize(math.erf)(np.asarray(x, dtype=float) / math.sqrt(2.0)))


def gaussian_cvar(q, variance, alpha):
    """Closed-form risk-adjusted value ``Q - (pdf(alpha)/cdf(alpha)) sqrt(variance)``.

    The pdf/cdf ratio is evaluated at the threshold itself, matching the
    estimator this benchmark uses (see README for the relation to the textbook
    Gaussian-CVaR coefficient ``pdf(icdf(alpha))/alpha``).
    """
    if np.any(np.asarray(alpha) <= 0.0) or np.any(np.asarray(alpha) > 1.0):
        raise DomainError("alpha must be in (0, 1]")
    if np.any(np.asarray(variance) < 0.0):
        raise DomainError("variance must be non-negative")
    coeff = normal_pdf(alpha) / normal_cdf(alpha)
    out = np.asarray(q, dtype=float) - coeff * np.sqrt(np.asarray(variance, dtype=float))
    return float(out) if out.ndim == 0 else out


def raac_cvar(critic_fn, alpha, k, rng):
    """Monte Carlo CVaR: mean of ``critic_fn(tau)`` over ``tau ~ U(0, alpha)``.

    Sampling tau uniformly on (0, alpha) absorbs the 1/alpha normalization of
    the integral form, so the plain mean over K draws is the estimator.
    """
    if alpha <= 0.0 or alpha > 1.0:
        raise DomainError("alpha must be in (0, 1]")
    if k < 1:
        raise DomainError("k must be >= 1")
    taus = rng.uniform(0.0, alpha, k)
    return float(np.mean([critic_fn(t) for t in taus]))


def pinball_loss(pred, target, tau):
    """Quantile-regression check loss; minimized when pred is the tau-quantile."""
    u = np.asarray(target, dtype=float) - np.asarray(pred, dtype=float)
    return float(np.mean(u * (tau - (u < 0.0))))


@dataclass(frozen=True)
class WCPGHyper(SACHyper):
    alpha_low: float = 0.1
    alpha_high: float = 1.0


@register
class WCPGAgent(SACAgent):
    """SAC with a learned return-variance critic and CVaR-weighted actor."""

    kind = "wcpg"
    hyper_cls = WCPGHyper

    def _extra_init(self, hidden):
        # softplus on the head keeps the variance estimate non-negative
        self.var_net = nn.MLP((self.obs_dim + self.action_dim, *hidden, 1),
                              self.init_rng)
        self.var_target = [a.copy() for a in self.var_net.state_arrays()]
        self.var_opt = nn.Adam(self.var_net.parameters(), lr=self.hyper.lr)
        self.alpha_risk = 1.0

    def modules(self):
        return super().modules() + [self.var_net]

    def _after_load(self):
        super()._after_load()
        self.var_target = [a.copy() for a in self.var_net.state_arrays()]

    def _on_episode_start(self, rng):
        self.alpha_risk = float(rng.uniform(self.hyper.alpha_low, self.hyper.alpha_high))

    def variance_np(self, arrays, xa):
        raw = self._q_target_np(arrays, xa).ravel()
        return np.logaddexp(0.0, raw)  # softplus

    def _critic_update(self, batch, rng):
        closs = super()._critic_update(batch, rng)
        self._variance_update(batch, rng)
        return closs

    def _variance_update(self, batch, rng):
        """TD update of the variance critic toward the second-moment Bellman target.

        Var[Z] target: r^2 + 2 gamma r Q' + gamma^2 (Var' + Q'^2) - Q(s,a)^2,
        clipped at zero, with Q' and Var' from the target networks.
        """
        obs, actions, rewards, next_obs, not_done = batch
        mean_n = self.actor.trunk.forward_np(next_obs)
        std = self.actor._std_np()
        z = mean_n + std * rng.standard_normal(mean_n.shape).astype(np.float32)
        next_action = self.actor.squash_np(z).astype(np.float32)
        xa_n = np.concatenate([next_obs, next_action], axis=1)
        q_n = np.minimum(self._q_target_np(self.q1_target, xa_n).ravel(),
                         self._q_target_np(self.q2_target, xa_n).ravel())
        var_n = self.variance_np(self.var_target, xa_n)
        xa = np.concatenate([obs, actions], axis=1)
        q_sa = self._q_target_np([p.data for p in self.q1.parameters()], xa).ravel()
        g = self.hyper.gamma
        target = rewards ** 2 + not_done * (2.0 * g * rewards * q_n
                                            + g * g * (var_n + q_n ** 2)) - q_sa ** 2
        target = np.maximum(target, 0.0).astype(np.float32)
        pred = self.var_net(xa).reshape(-1).softplus()
        loss = ((pred - target) ** 2.0).mean()
        self.var_opt.zero_grad()
        loss.backward()
        self.var_opt.step()

    def actor_loss_t(self, obs, eps):
        action, logp = self.actor.rsample_t(obs, eps)
        xa = nn.concat_cols([nn.Tensor(obs), action])
        q = self.q1(xa).reshape(-1).minimum(self.q2(xa).reshape(-1))
        variance = self.var_net(xa).reshape(-1).softplus()
        a = self.alpha_risk
        coeff = float(normal_pdf(a) / normal_cdf(a))
        risk_adjusted = q - (variance + 1e-8) ** 0.5 * coeff
        return (logp * self.temperature.value - risk_adjusted).mean()

    def _polyak(self):
        super()._polyak()
        tau = self.hyper.tau
        for t, p in zip(self.var_target, self.var_net.parameters()):
            t *= (1.0 - tau)
            t += tau * p.data


@dataclass(frozen=True)
class RAACHyper(SACHyper):
    alpha: float = 0.3          # best-performing fixed threshold
    n_quantiles: int = 8        # tau draws per critic update
    cvar_samples: int = 32      # K in the actor's Monte Carlo CVaR


@register
class RAACAgent(SACAgent):
    """SAC with a percentile-conditioned critic trained by quantile regression."""

    kind = "raac"
    hyper_cls = RAACHyper

    def _extra_init(self, hidden):
        self.znet = nn.MLP((self.obs_dim + self.action_dim + 1, *hidden, 1),
                           self.init_rng)
        self.z_target = [a.copy() for a in self.znet.state_arrays()]
        self.z_opt = nn.Adam(self.znet.parameters(), lr=self.hyper.lr)

    def modules(self):
        # twin mean critics stay (SAC substrate); the quantile critic drives the actor
        return super().modules() + [self.znet]

    def _after_load(self):
        super()._after_load()
        self.z_target = [a.copy() for a in self.znet.state_arrays()]

    def z_np(self, arrays, obs, actions, taus):
        xa = np.concatenate([obs, actions, taus[:, None].astype(np.float32)], axis=1)
        return self._q_target_np(arrays, xa).ravel()

    def _critic_update(self, batch, rng):
        closs = super()._critic_update(batch, rng)
        self._quantile_update(batch, rng)
        return closs

    def _quantile_update(self, batch, rng):
        """Pinball-regression TD update of the percentile-conditioned critic."""
        h = self.hyper
        obs, actions, rewards, next_obs, not_done = batch
        n = len(obs)
        mean_n = self.actor.trunk.forward_np(next_obs)
        std = self.actor._std_np()
        z = mean_n + std * rng.standard_normal(mean_n.shape).astype(np.float32)
        next_action = self.actor.squash_np(z).astype(np.float32)
        logp = self.actor.log_prob_np(mean_n, z)
        alpha_ent = self.temperature.value

        taus = rng.uniform(0.0, 1.0, (n, h.n_quantiles)).astype(np.float32)
        taus_target = rng.uniform(0.0, 1.0, (n, h.n_quantiles)).astype(np.float32)
        # targets: r + gamma (Z'(s',a',tau') - alpha log pi), constant w.r.t. znet
        targets = np.empty((n, h.n_quantiles), dtype=np.float32)
        for j in range(h.n_quantiles):
            zt = self.z_np(self.z_target, next_obs, next_action, taus_target[:, j])
            targets[:, j] = rewards + h.gamma * not_done * (zt - alpha_ent * logp)

        base = np.concatenate([obs, actions], axis=1)
        loss = None
        for j in range(h.n_quantiles):
            xa = np.concatenate([base, taus[:, j:j + 1]], axis=1)
            pred = self.znet(xa).reshape(-1)
            u = nn.Tensor(targets[:, j]) - pred
            weight = taus[:, j] - (u.data < 0.0)  # pinball slope, no grad
            term = (u * weight).mean()
            loss = term if loss is None else loss + term
        loss = loss * (1.0 / h.n_quantiles)
        self.z_opt.zero_grad()
        loss.backward()
        self.z_opt.step()

    def actor_loss_t(self, obs, eps):
        h = self.hyper
        action, logp = self.actor.rsample_t(obs, eps)
        rng = self._actor_tau_rng
        taus = rng.uniform(0.0, h.alpha, h.cvar_samples).astype(np.float32)
        obs_t = nn.Tensor(obs)
        cvar = None
        for t in taus:
            tau_col = nn.Tensor(np.full((len(obs), 1), t, dtype=np.float32))
            xa = nn.concat_cols([obs_t, action, tau_col])
            zq = self.znet(xa).reshape(-1)
            cvar = zq if cvar is None else cvar + zq
        cvar = cvar * (1.0 / h.cvar_samples)
        return (logp * self.temperature.value - cvar).mean()

    def _actor_update(self, batch, rng):
        self._actor_tau_rng = rng
        return super()._actor_update(batch, rng)

    def _polyak(self):
        super()._polyak()
        tau = self.hyper.tau
        for t, p in zip(self.z_target, self.znet.parameters()):
            t *= (1.0 - tau)
            t += tau * p.data
