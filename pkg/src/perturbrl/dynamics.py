"""Continuous-time models of the cart-pole and planar quadrotor.

State layouts (float64 numpy arrays):

* cart-pole, 4 components: ``[x (m), theta (rad), x_dot (m/s), theta_dot (rad/s)]``
  with theta measured from upright and kept unwrapped.
* planar quadrotor, 6 components:
  ``[x (m), z (m), pitch (rad), x_dot (m/s), z_dot (m/s), pitch_rate (rad/s)]``.

``pole_length`` is the full hinge-to-tip length of the rod; the centre of mass
sits at half that distance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _kernels
from .errors import DomainError

DT_DEFAULT = 0.02  # 50 Hz control rate; 250 steps = 5 s
MAX_EPISODE_STEPS = 250

CARTPOLE_X_LIMIT = 2.4
CARTPOLE_THETA_LIMIT = 1.5
QUAD_POS_LIMIT = 2.0
QUAD_PITCH_LIMIT = 1.5
QUAD_HOVER_Z = 0.5


@dataclass(frozen=True)
class CartPoleParams:
    pole_length: float = 0.5
    pole_mass: float = 0.1
    cart_mass: float = 1.0
    gravity: float = 9.8

    def __post_init__(self):
        for name in ("pole_length", "pole_mass", "cart_mass", "gravity"):
            if not getattr(self, name) > 0.0:
                raise DomainError(f"CartPoleParams.{name} must be strictly positive")


@dataclass(frozen=True)
class QuadrotorParams:
    mass: float = 0.027
    inertia_yy: float = 1.4e-5
    arm_length: float = 0.0397
    gravity: float = 9.8
    thrust_max: float = 0.15  # per motor

    def __post_init__(self):
        for name in ("mass", "inertia_yy", "arm_length", "gravity", "thrust_max"):
            if not getattr(self, name) > 0.0:
                raise DomainError(f"QuadrotorParams.{name} must be strictly positive")

    def hover_thrust(self) -> float:
        """Per-motor thrust that balances gravity at level attitude."""
        return 0.5 * self.mass * self.gravity


def _require_finite(*values, what="input"):
    for v in values:
        if not np.all(np.isfinite(v)):
            raise DomainError(f"non-finite {what}")


def cartpole_derivatives(state: np.ndarray, cart_force: float,
                         tip_force: tuple[float, float],
                         params: CartPoleParams) -> np.ndarray:
    """Time derivative of the cart-pole state under a cart force and a tip tap force."""
    state = np.asarray(state, dtype=float)
    fx, fz = float(tip_force[0]), float(tip_force[1])
    _require_finite(state, cart_force, fx, fz)
    x_ddot, theta_ddot = _kernels.cartpole_accel(
        state[1], state[3], float(cart_force), fx, fz,
        params.pole_length, params.pole_mass, params.cart_mass, params.gravity)
    return np.array([state[2], state[3], x_ddot, theta_ddot])


def quadrotor_derivatives(state: np.ndarray, thrusts: tuple[float, float],
                          wind: tuple[float, float],
                          params: QuadrotorParams) -> np.ndarray:
    """Time derivative of the planar quadrotor state under motor thrusts and wind."""
    state = np.asarray(state, dtype=float)
    t1, t2 = float(thrusts[0]), float(thrusts[1])
    wx, wz = float(wind[0]), float(wind[1])
    _require_finite(state, t1, t2, wx, wz)
    if t1 < 0.0 or t2 < 0.0:
        raise DomainError("motor thrust must be non-negative")
    if t1 > params.thrust_max or t2 > params.thrust_max:
        raise DomainError("motor thrust exceeds thrust_max")
    x_ddot, z_ddot, pitch_ddot = _kernels.quadrotor_accel(
        state[2], t1, t2, wx, wz,
        params.mass, params.inertia_yy, params.arm_length, params.gravity)
    return np.array([state[3], state[4], state[5], x_ddot, z_ddot, pitch_ddot])


def integrate_step(deriv_fn: Callable[[np.ndarray], np.ndarray],
                   state: np.ndarray, dt: float) -> np.ndarray:
    """One classical RK4 step of ``state' = deriv_fn(state)``."""
    if not dt > 0.0:
        raise DomainError("dt must be positive")
    state = np.asarray(state, dtype=float)
    k1 = np.asarray(deriv_fn(state), dtype=float)
    k2 = np.asarray(deriv_fn(state + 0.5 * dt * k1), dtype=float)
    k3 = np.asarray(deriv_fn(state + 0.5 * dt * k2), dtype=float)
    k4 = np.asarray(deriv_fn(state + dt * k3), dtype=float)
    out = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    _require_finite(out, what="integration result")
    return out


def cartpole_step(state: np.ndarray, cart_force: float,
                  tip_force: tuple[float, float],
                  params: CartPoleParams, dt: float = DT_DEFAULT) -> np.ndarray:
    """Fused RK4 step (numba-accelerated when available) with zero-order-hold inputs."""
    state = np.asarray(state, dtype=float)
    _require_finite(state, cart_force, tip_force[0], tip_force[1])
    out = _kernels.cartpole_rk4(
        state[0], state[1], state[2], state[3],
        float(cart_force), float(tip_force[0]), float(tip_force[1]),
        params.pole_length, params.pole_mass, params.cart_mass, params.gravity, dt)
    out = np.array(out)
    _require_finite(out, what="integration result")
    return out


def quadrotor_step(state: np.ndarray, thrusts: tuple[float, float],
                   wind: tuple[float, float],
                   params: QuadrotorParams, dt: float = DT_DEFAULT) -> np.ndarray:
    """Fused RK4 step for the quadrotor."""
    state = np.asarray(state, dtype=float)
    t1, t2 = float(thrusts[0]), float(thrusts[1])
    _require_finite(state, t1, t2, wind[0], wind[1])
    if t1 < 0.0 or t2 < 0.0:
        raise DomainError("motor thrust must be non-negative")
    out = _kernels.quadrotor_rk4(
        state[0], state[1], state[2], state[3], state[4], state[5],
        t1, t2, float(wind[0]), float(wind[1]),
        params.mass, params.inertia_yy, params.arm_length, params.gravity, dt)
    out = np.array(out)
    _require_finite(out, what="integration result")
    return out


def is_terminal_cartpole(state: np.ndarray,
                         x_limit: float = CARTPOLE_X_LIMIT,
                         theta_limit: float = CARTPOLE_THETA_LIMIT) -> bool:
    """True iff a bound is strictly exceeded (exactly at the limit is not terminal)."""
    return bool(abs(state[0]) > x_limit or abs(state[1]) > theta_limit)


def is_terminal_quadrotor(state: np.ndarray,
                          pos_limit: float = QUAD_POS_LIMIT,
                          pitch_limit: float = QUAD_PITCH_LIMIT) -> bool:
    return bool(abs(state[0]) > pos_limit
                or abs(state[1] - QUAD_HOVER_Z) > pos_limit
                or abs(state[2]) > pitch_limit)


def cartpole_energy(state: np.ndarray, params: CartPoleParams) -> float:
    """Total mechanical energy; conserved with zero inputs (drift check for RK4)."""
    x, theta, x_dot, theta_dot = state
    half = 0.5 * params.pole_length
    m, mc = params.pole_mass, params.cart_mass
    # COM velocity of the rod
    vx = x_dot + half * theta_dot * np.cos(theta)
    vz = -half * theta_dot * np.sin(theta)
    inertia_com = m * params.pole_length ** 2 / 12.0
    kinetic = 0.5 * mc * x_dot ** 2 + 0.5 * m * (vx ** 2 + vz ** 2) \
        + 0.5 * inertia_com * theta_dot ** 2
    potential = m * params.gravity * half * np.cos(theta)
    return float(kinetic + potential)
