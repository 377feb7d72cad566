"""Event-triggered extended state observer for the lumped dynamics q.

The observer only receives the control input at trigger instants; in between
it runs on the held value ``gamma``.  A new transmission happens as soon as
the sampling error ``psi = gamma - u`` reaches the threshold ``M``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class EsoParams:
    l: float
    b_hat: float
    M: float

    def __post_init__(self):
        for name in ("l", "b_hat", "M"):
            value = getattr(self, name)
            if not np.all(np.asarray(value) > 0):
                raise ValueError(f"EsoParams.{name} must be > 0, got {value!r}")


@dataclass(frozen=True)
class EsoState:
    s: float = 0.0
    gamma: float = 0.0
    last_trigger_t: float = 0.0
    trigger_count: int = 0


def eso_deriv(es: EsoState, a, params: EsoParams):
    l = params.l
    return -l * es.s - l * l * a - l * params.b_hat * es.gamma


def estimate_q(es: EsoState, a, params: EsoParams):
    return es.s + params.l * a


def sampling_error(es: EsoState, u_now):
    return es.gamma - u_now


def trigger_check(es: EsoState, u_now, params: EsoParams, t: float) -> tuple[bool, EsoState]:
    """Transmit ``u_now`` to the observer if ``|gamma - u_now| >= M``.

    Returns ``(fired, new_state)``; the state is returned unchanged when the
    threshold is not reached.
    """
    if t < es.last_trigger_t:
        raise ValueError(f"trigger check at t={t} precedes last trigger {es.last_trigger_t}")
    if abs(es.gamma - u_now) >= params.M:
        return True, replace(es, gamma=u_now, last_trigger_t=t, trigger_count=es.trigger_count + 1)
    return False, es


def initial_trigger(es: EsoState, u0) -> EsoState:
    """The first transmission happens at t = 0 unconditionally."""
    return replace(es, gamma=u0, last_trigger_t=0.0, trigger_count=es.trigger_count + 1)


def observation_error(q_true, q_hat):
    return q_true - q_hat
