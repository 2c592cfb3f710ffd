"""Deterministic SIR transition used as the mean of the latent dynamics.

    dS/dt = -beta S I,   dI/dt = beta S I - gamma I,   dR/dt = gamma I

States are proportions ``(s, i, r)``.  All functions broadcast over leading
axes, so a stack of states (one per posterior draw, say) advances in one call.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np


class SirParams(NamedTuple):
    beta: float
    gamma: float

    @property
    def r0(self) -> float:
        return self.beta / self.gamma


class Theta(NamedTuple):
    s: float
    i: float
    r: float


def sir_rhs(theta, beta, gamma) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    s, i = theta[..., 0], theta[..., 1]
    infection = beta * s * i
    removal = gamma * i
    return np.stack([-infection, infection - removal, removal], axis=-1)


def project_simplex(theta) -> np.ndarray:
    """Clamp each component to [0, 1] and rescale to sum to one."""
    theta = np.clip(np.asarray(theta, dtype=float), 0.0, 1.0)
    return theta / theta.sum(axis=-1, keepdims=True)


def _rk4_raw(theta, beta, gamma, dt):
    k1 = sir_rhs(theta, beta, gamma)
    k2 = sir_rhs(theta + 0.5 * dt * k1, beta, gamma)
    k3 = sir_rhs(theta + 0.5 * dt * k2, beta, gamma)
    k4 = sir_rhs(theta + dt * k3, beta, gamma)
    return theta + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _advance(theta, beta, gamma, dt, depth):
    new = _rk4_raw(theta, beta, gamma, dt)
    # A step too long for the rates can overshoot (negative s, say).  Such
    # states are re-integrated with two half steps; others are untouched.
    bad = (new < 0.0).any(axis=-1) | (new[..., 0] > theta[..., 0]) | (new[..., 2] < theta[..., 2])
    if depth > 0 and bad.any():
        b, g = beta[bad], gamma[bad]
        mid = _advance(theta[bad], b, g, 0.5 * dt, depth - 1)
        new[bad] = _advance(mid, b, g, 0.5 * dt, depth - 1)
    return new


def _rk4(theta, beta, gamma, dt):
    # beta/gamma scalars or arrays shaped like theta[..., 0]
    theta = np.asarray(theta, dtype=float)
    lead = theta.shape[:-1]
    beta = np.broadcast_to(np.asarray(beta, dtype=float), lead).reshape(-1)
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), lead).reshape(-1)
    flat = _advance(theta.reshape(-1, 3), beta, gamma, dt, depth=30)
    return project_simplex(flat.reshape(theta.shape))


def rk4_step(theta, params: SirParams, dt: float = 1.0) -> np.ndarray:
    """Advance ``theta`` by ``dt`` days with classical fourth-order Runge-Kutta.

    The result is clamped to [0, 1] and renormalised so it stays on the simplex.
    If the single step would overshoot (a negative component, ``s`` rising or
    ``r`` falling) it is replaced by two half steps, recursively.  This only
    happens for rates far above those seen in practice (``beta * dt`` of
    order 2 or more).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    beta, gamma = params
    if beta < 0 or gamma < 0:
        raise ValueError("beta and gamma must be nonnegative")
    return _rk4(np.asarray(theta, dtype=float), beta, gamma, dt)


def simulate(theta0, params: SirParams, days: int) -> np.ndarray:
    """Daily trajectory of length ``days + 1`` starting at ``theta0``."""
    if days < 0:
        raise ValueError("days must be nonnegative")
    out = np.empty((days + 1, 3))
    out[0] = theta0
    for t in range(days):
        out[t + 1] = rk4_step(out[t], params)
    return out
