"""Hot numeric kernels: rigid-body derivatives and fused RK4 steps.

Every kernel is written as a plain scalar-float function and then, unless the
environment variable ``PERTURBRL_NO_NUMBA`` is set (or numba is unavailable),
compiled with ``numba.njit``. Both paths execute the identical sequence of
IEEE-754 double operations, so results are bit-identical either way; this is
exercised by the test suite and by ``benchmarks/bench_kernels.py``.

Cart-pole model: frictionless cart of mass M on a rail, uniform rod of mass m
and full length L hinged on the cart, angle theta measured from upright. An
external tap force (fx, fz) acts at the rod tip and enters the generalized
forces through the tip-position Jacobian. Planar quadrotor: point mass with
pitch inertia, two rotors at +-arm_length producing thrust along the body
z-axis, wind force at the centre of mass.
"""

import math
import os

USE_NUMBA = os.environ.get("PERTURBRL_NO_NUMBA", "").strip() not in ("1", "true", "yes")
if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover
        USE_NUMBA = False

if not USE_NUMBA:
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


@njit(cache=True)
def cartpole_accel(theta, theta_dot, cart_force, fx, fz, length, pole_mass, cart_mass, gravity):
    """Solve the coupled 2x2 Lagrangian system for (x_ddot, theta_ddot)."""
    half = 0.5 * length
    sin_t = math.sin(theta)
    cos_t = math.cos(theta)
    m_total = cart_mass + pole_mass
    # mass matrix [[a11, a12], [a12, a22]], rod inertia about the pivot 4/3 m l^2
    a11 = m_total
    a12 = pole_mass * half * cos_t
    a22 = (4.0 / 3.0) * pole_mass * half * half
    # right-hand side: applied + centrifugal + gravity + tip-force generalized torque
    b1 = cart_force + fx + pole_mass * half * theta_dot * theta_dot * sin_t
    b2 = pole_mass * gravity * half * sin_t + fx * length * cos_t - fz * length * sin_t
    det = a11 * a22 - a12 * a12
    x_ddot = (a22 * b1 - a12 * b2) / det
    theta_ddot = (a11 * b2 - a12 * b1) / det
    return x_ddot, theta_ddot


@njit(cache=True)
def cartpole_rk4(x, theta, x_dot, theta_dot, cart_force, fx, fz,
                 length, pole_mass, cart_mass, gravity, dt):
    """One fixed-step RK4 update of the cart-pole state (zero-order-hold inputs)."""
    # k1
    a1, t1 = cartpole_accel(theta, theta_dot, cart_force, fx, fz,
                            length, pole_mass, cart_mass, gravity)
    k1 = (x_dot, theta_dot, a1, t1)
    # k2
    th = theta + 0.5 * dt * k1[1]
    td = theta_dot + 0.5 * dt * k1[3]
    a2, t2 = cartpole_accel(th, td, cart_force, fx, fz,
                            length, pole_mass, cart_mass, gravity)
    k2 = (x_dot + 0.5 * dt * k1[2], td, a2, t2)
    # k3
    th = theta + 0.5 * dt * k2[1]
    td = theta_dot + 0.5 * dt * k2[3]
    a3, t3 = cartpole_accel(th, td, cart_force, fx, fz,
                            length, pole_mass, cart_mass, gravity)
    k3 = (x_dot + 0.5 * dt * k2[2], td, a3, t3)
    # k4
    th = theta + dt * k3[1]
    td = theta_dot + dt * k3[3]
    a4, t4 = cartpole_accel(th, td, cart_force, fx, fz,
                            length, pole_mass, cart_mass, gravity)
    k4 = (x_dot + dt * k3[2], td, a4, t4)
    c = dt / 6.0
    return (x + c * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            theta + c * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
            x_dot + c * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
            theta_dot + c * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3]))


@njit(cache=True)
def quadrotor_accel(pitch, t1, t2, wx, wz, mass, inertia_yy, arm_length, gravity):
    """Planar quadrotor accelerations (x_ddot, z_ddot, pitch_ddot)."""
    thrust = t1 + t2
    x_ddot = (thrust * math.sin(pitch) + wx) / mass
    z_ddot = (thrust * math.cos(pitch) + wz) / mass - gravity
    pitch_ddot = (t2 - t1) * arm_length / inertia_yy
    return x_ddot, z_ddot, pitch_ddot


@njit(cache=True)
def quadrotor_rk4(x, z, pitch, x_dot, z_dot, pitch_rate, t1, t2, wx, wz,
                  mass, inertia_yy, arm_length, gravity, dt):
    """One fixed-step RK4 update of the planar quadrotor state."""
    a1x, a1z, a1p = quadrotor_accel(pitch, t1, t2, wx, wz, mass, inertia_yy, arm_length, gravity)
    k1 = (x_dot, z_dot, pitch_rate, a1x, a1z, a1p)

    p = pitch + 0.5 * dt * k1[2]
    a2x, a2z, a2p = quadrotor_accel(p, t1, t2, wx, wz, mass, inertia_yy, arm_length, gravity)
    k2 = (x_dot + 0.5 * dt * k1[3], z_dot + 0.5 * dt * k1[4], pitch_rate + 0.5 * dt * k1[5],
          a2x, a2z, a2p)

    p = pitch + 0.5 * dt * k2[2]
    a3x, a3z, a3p = quadrotor_accel(p, t1, t2, wx, wz, mass, inertia_yy, arm_length, gravity)
    k3 = (x_dot + 0.5 * dt * k2[3], z_dot + 0.5 * dt * k2[4], pitch_rate + 0.5 * dt * k2[5],
          a3x, a3z, a3p)

    p = pitch + dt * k3[2]
    a4x, a4z, a4p = quadrotor_accel(p, t1, t2, wx, wz, mass, inertia_yy, arm_length, gravity)
    k4 = (x_dot + dt * k3[3], z_dot + dt * k3[4], pitch_rate + dt * k3[5],
          a4x, a4z, a4p)

    c = dt / 6.0
    return (x + c * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            z + c * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
            pitch + c * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
            x_dot + c * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3]),
            z_dot + c * (k1[4] + 2.0 * k2[4] + 2.0 * k3[4] + k4[4]),
            pitch_rate + c * (k1[5] + 2.0 * k2[5] + 2.0 * k3[5] + k4[5]))
