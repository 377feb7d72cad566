"""Fixed-step closed-loop simulation of the leader and N followers.

The integrated state holds positions, velocities and accelerations of all
N + 1 vehicles plus, per follower, the observer's middle variable s and the
two filter outputs.  The controller is a static map of that state, so it is
evaluated at every RK4 stage.  Only the observer input gamma is piecewise
constant: whenever the sampling error reaches the threshold inside a step,
the crossing time is located on the step's dense output and the step is
split there, so trigger instants do not depend on the step grid.  The inner
loop runs in the compiled kernels of ``_kernels``.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels as K
from .control import FilterState, GainSet, baseline_u, filter_derivs, surfaces
from .dynamics import KinematicState, disturbance, follower_deriv, leader_deriv, unmodeled_q
from .observer import EsoParams, EsoState, eso_deriv
from .scenario import ScenarioConfig

log = logging.getLogger(__name__)

# bracket width (s) at which an event-time search stops
EVENT_TIME_TOL = 1e-13

TRACE_SIGNALS = ("e", "u", "q", "q_hat", "e1", "z1", "z2", "eta1", "eta2", "psi", "gamma", "V")


class SimulationDiverged(RuntimeError):
    """A state or signal became non-finite."""


@dataclass
class PlatoonState:
    t: float
    x: np.ndarray           # flat integrated state, see Platoon.split
    gamma: np.ndarray       # held observer input per follower
    last_trigger: np.ndarray
    trigger_count: np.ndarray


@dataclass
class SimTrace:
    """Recorded run.  ``p``, ``v``, ``a`` have N + 1 columns (leader first);
    every entry of ``signals`` has N columns."""

    t: np.ndarray
    p: np.ndarray
    v: np.ndarray
    a: np.ndarray
    signals: dict[str, np.ndarray]
    events: list[tuple[int, float]] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.p.shape[1] - 1

    def __getitem__(self, name: str) -> np.ndarray:
        if name in ("p", "v", "a"):
            return getattr(self, name)
        return self.signals[name]

    def event_times(self, vehicle: int) -> np.ndarray:
        """Trigger instants of follower ``vehicle`` (1-based)."""
        return np.array([t for i, t in self.events if i == vehicle])


class Platoon:
    """Closed-loop right-hand side and bookkeeping for one scenario."""

    def __init__(self, scenario: ScenarioConfig, controller: str | None = None):
        self.sc = scenario
        self.n = scenario.n
        self.controller = controller or scenario.controller
        self.g: GainSet = scenario.gains.broadcast(self.n)
        self.M = np.asarray(scenario.trigger_threshold if scenario.trigger_threshold is not None
                            else np.full(self.n, np.inf), float)
        self.params = scenario.vehicles
        self.dp = scenario.disturbance
        self.r = scenario.spacing
        self.tau0 = scenario.tau0
        n1 = self.n + 1
        self._slices = (slice(0, n1), slice(n1, 2 * n1), slice(2 * n1, 3 * n1),
                        slice(3 * n1, 3 * n1 + self.n), slice(3 * n1 + self.n, 3 * n1 + 2 * self.n),
                        slice(3 * n1 + 2 * self.n, 3 * n1 + 3 * self.n))
        self.size = 3 * n1 + 3 * self.n
        self._prepare_coefficients()

    def _prepare_coefficients(self):
        """Pack gains and vehicle constants into the coefficient matrix of the kernels."""
        g, vp, dp, bg = self.g, self.params, self.dp, self.sc.baseline
        C = np.zeros((K.N_COEF, self.n))
        h1, h2, bh = g.h1, g.h2, g.b_hat
        C[K.K1], C[K.IH1], C[K.IH2] = g.k1, 1.0 / h1, 1.0 / h2
        # alpha2 = A2_Z1 z1 + A2_ETA1 eta1 + A2_E e
        C[K.A2_Z1], C[K.A2_ETA1], C[K.A2_E] = -h1 * g.k2 / h2, -h1 / (h2 * g.kappa1), h1 * h1 / h2
        # u = U_Q q_hat + U_Z2 z2 + U_Z1 z1 + U_ETA2 eta2
        C[K.U_Q], C[K.U_Z2] = -1.0 / bh, -h2 * g.k3 / bh
        C[K.U_Z1], C[K.U_ETA2] = -h2 * h2 / (h1 * bh), -h2 / (g.kappa2 * bh)
        C[K.L], C[K.BH], C[K.IK1], C[K.IK2] = g.l, bh, 1.0 / g.kappa1, 1.0 / g.kappa2
        m, c, mu, tau = vp.mass, vp.drag, vp.rolling, vp.tau
        C[K.J_A], C[K.J_VV], C[K.J_0] = 1.0 / tau, c / (m * tau), vp.g * mu / tau
        C[K.J_VA], C[K.J_U] = 2.0 * c / m, 1.0 / (m * tau)
        C[K.LAM1], C[K.LAM2], C[K.LAM3], C[K.LAM4] = dp.lam1, dp.lam2, dp.lam3, dp.lam4
        C[K.R] = self.r
        C[K.KP], C[K.KV], C[K.KA], C[K.KD] = bg.kp, bg.kv, bg.ka, bg.kd
        self._C = C
        shapes = {"constant": K.SEG_CONSTANT, "smooth-pulse": K.SEG_SMOOTH}
        self._seg = np.array([[seg.start, seg.end, shapes[seg.shape], seg.magnitude]
                              for seg in self.sc.leader.segments], dtype=float).reshape(-1, 4)
        self._mode = K.DSC if self.uses_observer else K.BASELINE

    @property
    def uses_observer(self) -> bool:
        return self.controller == "dsc"

    def split(self, x):
        """Views of p, v, a, s, beta1, beta2; ``x`` may carry leading row axes."""
        return tuple(x[..., s] for s in self._slices)

    def initial_state(self) -> PlatoonState:
        sc = self.sc
        x = np.zeros(self.size)
        p, v, a, s, b1, b2 = self.split(x)
        p[:], v[:], a[:] = sc.p0, sc.v0, sc.a0
        if self.uses_observer:
            fs = sc.initial_filters()
            b1[:], b2[:] = fs.beta1, fs.beta2
        # first transmission at t = 0
        u = self.control(0.0, x)
        return PlatoonState(t=0.0, x=x, gamma=u.copy(), last_trigger=np.zeros(self.n),
                            trigger_count=np.ones(self.n, dtype=int) if self.uses_observer
                            else np.zeros(self.n, dtype=int))

    # -- controller ---------------------------------------------------------

    def snapshot(self, x):
        p, v, a, s, b1, b2 = self.split(x)
        q_hat = s + self.g.l * a[..., 1:]
        snap = surfaces(v[..., 1:], a[..., 1:], v[..., :-1], p[..., :-1] - p[..., 1:], self.r,
                        FilterState(b1, b2), q_hat, self.g)
        return snap, q_hat

    def control(self, t, x):
        """Control input of every follower at state ``x`` (single instant)."""
        return K.control(x, self._C, self.n, self._mode)

    def control_reference(self, x):
        """Control input from the module-level control laws; ``x`` may be 2-D."""
        if self.uses_observer:
            return self.snapshot(x)[0].u
        p, v, a, *_ = self.split(x)
        bg = self.sc.baseline
        return baseline_u(p[..., :-1] - p[..., 1:] - self.r, v[..., :-1] - v[..., 1:],
                          a[..., :-1], a[..., 1:], bg.kp, bg.kv, bg.ka, bg.kd)

    # -- dynamics -----------------------------------------------------------

    def rhs(self, t, x, gamma):
        return K.rhs(t, x, gamma, self._seg, self.tau0, self._C, self.n, self._mode)

    def rhs_reference(self, t, x, gamma):
        """Right-hand side assembled from the module-level model functions."""
        p, v, a, s, b1, b2 = self.split(x)
        dx = np.zeros_like(x)
        dp, dv, da, ds, db1, db2 = self.split(dx)
        dp[:] = v
        dv[:] = a
        sigma = disturbance(t, self.dp)[0]
        u = self.control_reference(x)
        if self.uses_observer:
            g = self.g
            snap, _ = self.snapshot(x)
            db1[:], db2[:] = filter_derivs(FilterState(b1, b2), snap.alpha1, snap.alpha2, g)
            ds[:] = eso_deriv(EsoState(s=s, gamma=gamma), a[1:], EsoParams(l=g.l, b_hat=g.b_hat, M=1.0))
        lead = leader_deriv(KinematicState(p[0], v[0], a[0]), self.sc.leader.u0(t), self.sc.leader_params)
        da[0] = lead.a
        da[1:] = follower_deriv(KinematicState(p[1:], v[1:], a[1:]), u, sigma, self.params).a
        return dx

    def rk4(self, t, x, h, gamma):
        return K.rk4(t, x, h, gamma, self._seg, self.tau0, self._C, self.n, self._mode)

    # -- triggering ---------------------------------------------------------

    def step(self, st: PlatoonState, dt: float, events: list | None = None) -> PlatoonState:
        """Advance by dt, splitting the step at every trigger instant inside it."""
        t, x = st.t, st.x
        gamma = st.gamma.copy()
        last, count = st.last_trigger.copy(), st.trigger_count.copy()
        if not self.uses_observer:
            x = self.rk4(t, x, dt, gamma)
            t += dt
        else:
            remaining = dt
            while remaining > EVENT_TIME_TOL:
                h, x, fired = K.advance(t, x, remaining, gamma, self.M, self._seg, self.tau0,
                                        self._C, self.n, self._mode, EVENT_TIME_TOL)
                t += h
                remaining -= h
                if fired.any():
                    u = self.control(t, x)
                    gamma[fired] = u[fired]
                    last[fired] = t
                    count[fired] += 1
                    if events is not None:
                        events.extend((int(i) + 1, t) for i in np.flatnonzero(fired))
        if not np.all(np.isfinite(x)):
            bad = self.describe_index(int(np.argmin(np.isfinite(x))))
            raise SimulationDiverged(f"non-finite state at t={t:.6g}: first bad signal {bad}")
        return PlatoonState(t=t, x=x, gamma=gamma, last_trigger=last, trigger_count=count)

    def describe_index(self, k: int) -> str:
        names = ("p", "v", "a", "s", "beta1", "beta2")
        for name, sl in zip(names, self._slices):
            if sl.start <= k < sl.stop:
                offset = 0 if name in ("p", "v", "a") else 1
                return f"{name}_{k - sl.start + offset}"
        return f"x[{k}]"

    # -- recording ----------------------------------------------------------

    def signals(self, t, x, gamma) -> dict[str, np.ndarray]:
        """Recorded signals at one instant or, with ``t`` of shape (rows,),
        ``x`` of shape (rows, size) and ``gamma`` of shape (rows, N), at many."""
        t = np.asarray(t, dtype=float)
        p, v, a, s, b1, b2 = self.split(x)
        sigma = disturbance(t[..., None] if t.ndim else t, self.dp)[0]
        state = _Kin(v[..., 1:], a[..., 1:])
        b_hat = self.g.b_hat
        if self.uses_observer:
            snap, q_hat = self.snapshot(x)
            u = snap.u
            q = unmodeled_q(state, u, sigma, self.params, b_hat)
            V = 0.5 * (snap.e ** 2 + snap.z1 ** 2 + snap.z2 ** 2 + snap.eta1 ** 2 + snap.eta2 ** 2)
            return {"e": snap.e, "u": u, "q": q, "q_hat": q_hat, "e1": q - q_hat, "z1": snap.z1,
                    "z2": snap.z2, "eta1": snap.eta1, "eta2": snap.eta2, "psi": gamma - u,
                    "gamma": np.array(gamma, dtype=float), "V": V}
        u = self.control_reference(x)
        q = unmodeled_q(state, u, sigma, self.params, b_hat)
        nan = np.full(u.shape, np.nan)
        return {"e": p[..., :-1] - p[..., 1:] - self.r, "u": u, "q": q, "q_hat": nan, "e1": nan,
                "z1": nan, "z2": nan, "eta1": nan, "eta2": nan, "psi": nan, "gamma": nan, "V": nan}


class _Kin:
    __slots__ = ("v", "a")

    def __init__(self, v, a):
        self.v, self.a = v, a


def run(scenario: ScenarioConfig, controller: str | None = None, *, dt: float | None = None,
        horizon: float | None = None, record_stride: int | None = None) -> SimTrace:
    """Simulate ``scenario`` and record every ``record_stride``-th step."""
    plat = Platoon(scenario, controller)
    dt = scenario.dt if dt is None else dt
    horizon = scenario.horizon if horizon is None else horizon
    stride = scenario.record_stride if record_stride is None else record_stride
    if dt <= 0:
        raise ValueError("dt must be > 0")
    steps = int(round(horizon / dt))
    if abs(steps * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError(f"horizon {horizon} is not a whole number of steps of {dt}")
    rows = steps // stride + 1
    t_rec = np.empty(rows)
    x_rec = np.empty((rows, plat.size))
    g_rec = np.empty((rows, plat.n))

    st = plat.initial_state()
    events: list[tuple[int, float]] = [(i + 1, 0.0) for i in range(plat.n)] if plat.uses_observer else []
    t_rec[0], x_rec[0], g_rec[0] = st.t, st.x, st.gamma
    row = 1
    for k in range(1, steps + 1):
        st = plat.step(st, dt, events)
        # pin the clock to the grid so round-off from split steps cannot accumulate
        st.t = k * dt
        if k % stride == 0:
            t_rec[row], x_rec[row], g_rec[row] = st.t, st.x, st.gamma
            row += 1

    p, v, a, *_ = plat.split(x_rec)
    sig = plat.signals(t_rec, x_rec, g_rec)
    n = plat.n
    meta = {
        "controller": plat.controller, "dt": dt, "horizon": horizon, "steps": steps,
        "stride": stride, "n": n, "seed": scenario.seed, "delta": scenario.gains.delta,
        "epsilon": scenario.gains.epsilon, "trigger_threshold": plat.M.tolist(),
        "trigger_count": st.trigger_count.tolist(), "scenario": scenario.name,
        "leader_segments": [asdict(seg) for seg in scenario.leader.segments],
        "spacing": np.asarray(scenario.spacing, float).tolist(),
    }
    log.info("simulated %s steps (%s, dt=%g), %d trigger events", steps, plat.controller, dt, len(events))
    return SimTrace(t=t_rec, p=p.copy(), v=v.copy(), a=a.copy(), signals=sig, events=events, meta=meta)


def terminal_state(scenario: ScenarioConfig, dt: float, horizon: float, controller: str | None = None) -> np.ndarray:
    """Integrated state at ``horizon`` without recording; used for convergence checks."""
    plat = Platoon(scenario, controller)
    st = plat.initial_state()
    steps = int(round(horizon / dt))
    for k in range(1, steps + 1):
        st = plat.step(st, dt)
        st.t = k * dt
    return st.x
