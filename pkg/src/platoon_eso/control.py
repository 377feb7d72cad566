"""Modified dynamic surface controller and the linear baseline it is compared with.

The controller for follower i only sees its own velocity and acceleration,
the velocity of the vehicle ahead, the measured gap and the observer's
estimate ``q_hat``.  Every function here broadcasts over numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np


@dataclass(frozen=True)
class GainSet:
    """Tunables of the distributed control law.

    Per-vehicle entries may be scalars (shared by all followers) or arrays of
    length N.  ``delta`` is the safe spacing error and ``epsilon`` the control
    precision, both in metres.
    """

    k1: float | np.ndarray
    k2: float | np.ndarray
    k3: float | np.ndarray
    h1: float | np.ndarray
    h2: float | np.ndarray
    kappa1: float | np.ndarray
    kappa2: float | np.ndarray
    l: float | np.ndarray
    b_hat: float | np.ndarray
    xi: float | np.ndarray = 0.002
    delta: float = 7.0
    epsilon: float = 0.1

    def __post_init__(self):
        for f in fields(self):
            value = np.asarray(getattr(self, f.name), dtype=float)
            if not np.all(np.isfinite(value)) or not np.all(value > 0):
                raise ValueError(f"gain {f.name} must be finite and > 0, got {getattr(self, f.name)!r}")
        if self.epsilon > self.delta:
            raise ValueError(f"epsilon ({self.epsilon}) must not exceed delta ({self.delta})")

    PER_VEHICLE = ("k1", "k2", "k3", "h1", "h2", "kappa1", "kappa2", "l", "b_hat", "xi")

    def broadcast(self, n: int) -> "GainSet":
        """Copy with every per-vehicle gain expanded to an array of length n."""
        out = {}
        for name in self.PER_VEHICLE:
            value = np.asarray(getattr(self, name), dtype=float)
            if value.ndim and value.shape != (n,):
                raise ValueError(f"gain {name} has shape {value.shape}, expected ({n},)")
            out[name] = np.broadcast_to(value, (n,)).copy()
        return GainSet(**out, delta=self.delta, epsilon=self.epsilon)

    def vehicle(self, i: int) -> "GainSet":
        """Scalar gains of follower ``i`` (0-based)."""
        out = {}
        for name in self.PER_VEHICLE:
            value = np.asarray(getattr(self, name), dtype=float)
            out[name] = float(value[i] if value.ndim else value)
        return GainSet(**out, delta=self.delta, epsilon=self.epsilon)

    def replace(self, **changes) -> "GainSet":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return GainSet(**values)

    def as_dict(self) -> dict:
        def plain(x):
            x = np.asarray(x, dtype=float)
            return x.tolist() if x.ndim else float(x)

        return {f.name: plain(getattr(self, f.name)) for f in fields(self)}


# Gain sets used in the numerical study: one tuned for epsilon = 0.1, one for 0.01.
PAPER_GAINS_EPS_0_1 = GainSet(k1=0.8, k2=1.5, k3=300.0, h1=2.0, h2=8.0, kappa1=0.05,
                              kappa2=0.01, l=1200.0, b_hat=0.003, xi=0.002,
                              delta=7.0, epsilon=0.1)
PAPER_GAINS_EPS_0_01 = GainSet(k1=2.0, k2=8.0, k3=1000.0, h1=2.0, h2=8.0, kappa1=0.005,
                               kappa2=0.001, l=1200.0, b_hat=0.003, xi=0.002,
                               delta=7.0, epsilon=0.01)


@dataclass(frozen=True)
class BaselineGains:
    kp: float = 2000.0
    kv: float = 4000.0
    ka: float = 2000.0
    kd: float = 100.0


@dataclass
class FilterState:
    beta1: float | np.ndarray
    beta2: float | np.ndarray


@dataclass(frozen=True)
class SurfaceSnapshot:
    e: float | np.ndarray
    z1: float | np.ndarray
    z2: float | np.ndarray
    eta1: float | np.ndarray
    eta2: float | np.ndarray
    alpha1: float | np.ndarray
    alpha2: float | np.ndarray
    u: float | np.ndarray


def spacing_error(p_prev, p_self, r):
    return p_prev - p_self - r


def alpha1(v_prev, e, g: GainSet):
    return (v_prev + g.k1 * e) / g.h1


def alpha2(z1, eta1, e, g: GainSet):
    return g.h1 * (-g.k2 * z1 - eta1 / g.kappa1 + g.h1 * e) / g.h2


def control_u(q_hat, z1, z2, eta2, g: GainSet):
    return g.h2 * (-q_hat / g.h2 - g.k3 * z2 - g.h2 * z1 / g.h1 - eta2 / g.kappa2) / g.b_hat


def filter_derivs(fs: FilterState, a1, a2, g: GainSet):
    return (a1 - fs.beta1) / g.kappa1, (a2 - fs.beta2) / g.kappa2


def surfaces(v, a, v_prev, gap, r, fs: FilterState, q_hat, g: GainSet) -> SurfaceSnapshot:
    """Evaluate every surface, filter error, virtual input and the control input."""
    e = gap - r
    a1 = alpha1(v_prev, e, g)
    z1 = v / g.h1 - fs.beta1
    eta1 = fs.beta1 - a1
    a2 = alpha2(z1, eta1, e, g)
    z2 = a / g.h2 - fs.beta2
    eta2 = fs.beta2 - a2
    u = control_u(q_hat, z1, z2, eta2, g)
    return SurfaceSnapshot(e=e, z1=z1, z2=z2, eta1=eta1, eta2=eta2, alpha1=a1, alpha2=a2, u=u)


def initial_filter_state(v, v_prev, gap, r, g: GainSet) -> FilterState:
    """Filters start on their inputs, so both filter errors vanish at t = 0.

    beta2 is seeded with alpha2(0); seeding it with alpha1(0) would leave a
    nonzero eta2(0).
    """
    e = gap - r
    b1 = alpha1(v_prev, e, g)
    z1 = v / g.h1 - b1
    b2 = alpha2(z1, 0.0, e, g)
    return FilterState(beta1=b1, beta2=b2)


def controller_step(v, a, v_prev, gap, r, fs: FilterState, q_hat, g: GainSet, dt: float):
    """One sampled controller update.

    Returns ``(u, new_filter_state, snapshot)``.  The filters are advanced over
    ``dt`` with their inputs held, using the exact solution of the first-order
    lag.  The simulator integrates the filters together with the plant
    instead of calling this.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    snap = surfaces(v, a, v_prev, gap, r, fs, q_hat, g)
    d1 = np.exp(-dt / g.kappa1)
    d2 = np.exp(-dt / g.kappa2)
    new = FilterState(beta1=snap.alpha1 + (fs.beta1 - snap.alpha1) * d1,
                      beta2=snap.alpha2 + (fs.beta2 - snap.alpha2) * d2)
    return snap.u, new, snap


def baseline_u(e, v_diff, a_prev, a_self, kp, kv, ka, kd):
    """Linear spacing controller that uses the predecessor's acceleration."""
    return kp * e + kv * v_diff + ka * a_prev + kd * a_self
