"""Longitudinal vehicle models for the leader and the followers.

All right-hand sides accept scalars or numpy arrays (one entry per vehicle),
so the simulator can evaluate the whole platoon in one call.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

GRAVITY = 9.81


def _require_finite(**values) -> None:
    for name, value in values.items():
        if not np.all(np.isfinite(value)):
            raise ValueError(f"non-finite value for {name!r}: {value!r}")


def _require_positive(**values) -> None:
    for name, value in values.items():
        if not np.all(np.asarray(value) > 0):
            raise ValueError(f"{name} must be strictly positive, got {value!r}")


class KinematicState(NamedTuple):
    p: float | np.ndarray
    v: float | np.ndarray
    a: float | np.ndarray


@dataclass(frozen=True)
class LeaderParams:
    tau0: float
    u0_bound: float
    v0_bound: float

    def __post_init__(self):
        _require_positive(tau0=self.tau0, u0_bound=self.u0_bound, v0_bound=self.v0_bound)


@dataclass(frozen=True)
class VehicleParams:
    """Physical parameters of one follower (or arrays of them).

    ``drag`` is the total air resistance coefficient and ``rolling`` the
    rolling resistance coefficient.
    """

    mass: float | np.ndarray
    drag: float | np.ndarray
    rolling: float | np.ndarray
    tau: float | np.ndarray
    g: float = GRAVITY

    def __post_init__(self):
        _require_finite(mass=self.mass, drag=self.drag, rolling=self.rolling, tau=self.tau)
        _require_positive(mass=self.mass, tau=self.tau, g=self.g)
        # zero drag / rolling is allowed for idealised test vehicles
        if np.any(np.asarray(self.drag) < 0) or np.any(np.asarray(self.rolling) < 0):
            raise ValueError("drag and rolling coefficients must be non-negative")

    @property
    def b(self):
        """True control gain 1/(m*tau)."""
        return 1.0 / (np.asarray(self.mass) * np.asarray(self.tau))


@dataclass(frozen=True)
class ModelBounds:
    m_lo: float
    m_hi: float
    c_lo: float
    c_hi: float
    mu_lo: float
    mu_hi: float
    tau_lo: float
    tau_hi: float

    def __post_init__(self):
        for name in ("m", "tau"):
            lo, hi = getattr(self, f"{name}_lo"), getattr(self, f"{name}_hi")
            if not (0 < lo <= hi):
                raise ValueError(f"bounds for {name} must satisfy 0 < lo <= hi, got ({lo}, {hi})")
        # resistance-free vehicles are a valid idealisation, so these may start at zero
        for name in ("c", "mu"):
            lo, hi = getattr(self, f"{name}_lo"), getattr(self, f"{name}_hi")
            if not (0 <= lo <= hi):
                raise ValueError(f"bounds for {name} must satisfy 0 <= lo <= hi, got ({lo}, {hi})")

    @property
    def b_hi(self) -> float:
        return 1.0 / (self.m_lo * self.tau_lo)

    @property
    def b_lo(self) -> float:
        return 1.0 / (self.m_hi * self.tau_hi)

    def contains(self, params: VehicleParams) -> bool:
        def inside(x, lo, hi):
            x = np.asarray(x)
            return bool(np.all((lo <= x) & (x <= hi)))

        return (inside(params.mass, self.m_lo, self.m_hi)
                and inside(params.drag, self.c_lo, self.c_hi)
                and inside(params.rolling, self.mu_lo, self.mu_hi)
                and inside(params.tau, self.tau_lo, self.tau_hi))


@dataclass(frozen=True)
class DisturbanceParams:
    """sigma(t) = lam1 * exp(-lam2 t) + lam3 * sin(lam4 t)."""

    lam1: float | np.ndarray
    lam2: float | np.ndarray
    lam3: float | np.ndarray
    lam4: float | np.ndarray

    def __post_init__(self):
        _require_finite(lam1=self.lam1, lam2=self.lam2, lam3=self.lam3, lam4=self.lam4)
        for name in ("lam1", "lam2", "lam3", "lam4"):
            if np.any(np.asarray(getattr(self, name)) < 0):
                raise ValueError(f"{name} must be non-negative")

    @property
    def sigma1_bound(self):
        return np.asarray(self.lam1) + np.asarray(self.lam3)

    @property
    def sigma2_bound(self):
        return np.asarray(self.lam1) * np.asarray(self.lam2) + np.asarray(self.lam3) * np.asarray(self.lam4)


def leader_deriv(state: KinematicState, u0, params: LeaderParams) -> KinematicState:
    """Time derivative of the virtual leader (double integrator behind a first-order lag)."""
    _require_finite(p=state.p, v=state.v, a=state.a, u0=u0)
    tau0 = params.tau0
    return KinematicState(state.v, state.a, -state.a / tau0 + u0 / tau0)


def follower_deriv(state: KinematicState, u, sigma, params: VehicleParams) -> KinematicState:
    """Time derivative of a follower with drag, rolling resistance and disturbance ``sigma``."""
    _require_finite(p=state.p, v=state.v, a=state.a, u=u, sigma=sigma)
    return KinematicState(state.v, state.a, _jerk(state.v, state.a, u, sigma, params))


def _jerk(v, a, u, sigma, params: VehicleParams):
    m, c, mu, tau, g = params.mass, params.drag, params.rolling, params.tau, params.g
    return (-a / tau - c * v * v / (m * tau) - g * mu / tau
            - 2.0 * c * v * a / m + u / (m * tau) + sigma)


def unmodeled_q(state: KinematicState, u, sigma, params: VehicleParams, b_hat):
    """Lumped unmodeled dynamics q such that the follower jerk equals q + b_hat * u."""
    _require_finite(v=state.v, a=state.a, u=u, sigma=sigma, b_hat=b_hat)
    _require_positive(b_hat=b_hat)
    m, c, mu, tau, g = params.mass, params.drag, params.rolling, params.tau, params.g
    v, a = state.v, state.a
    return (-a / tau - c * v * v / (m * tau) - g * mu / tau
            - 2.0 * c * v * a / m + (params.b - b_hat) * u + sigma)


def unmodeled_w(state: KinematicState, a_dot, u_dot, sigma_dot, params: VehicleParams, b_hat):
    """Time derivative of q, given the jerk, input rate and disturbance rate.

    Only used for diagnostics; the observer never sees it.
    """
    _require_finite(v=state.v, a=state.a, a_dot=a_dot, u_dot=u_dot, sigma_dot=sigma_dot)
    m, c, tau = params.mass, params.drag, params.tau
    v, a = state.v, state.a
    return (-a_dot / tau - 2.0 * c * v * a / (m * tau) - 2.0 * c * a * a / m
            - 2.0 * c * v * a_dot / m + (params.b - b_hat) * u_dot + sigma_dot)


def disturbance(t, dp: DisturbanceParams):
    """Disturbance value, its analytic rate, and the sup-bounds of both.

    Returns ``(sigma, sigma_dot, sigma1_bound, sigma2_bound)``.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("disturbance is defined for t >= 0")
    decay = dp.lam1 * np.exp(-dp.lam2 * t)
    sigma = decay + dp.lam3 * np.sin(dp.lam4 * t)
    sigma_dot = -dp.lam2 * decay + dp.lam3 * dp.lam4 * np.cos(dp.lam4 * t)
    return sigma, sigma_dot, dp.sigma1_bound, dp.sigma2_bound
