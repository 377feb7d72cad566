"""Design-condition checks and derived constants for the platoon control law.

Everything here is closed-form arithmetic on the gains, the model bounds and
the initial condition of the platoon.  ``verify_all`` evaluates every
condition in dependency order and returns a :class:`VerificationReport`;
``suggest_gains`` walks the same order forward and picks gains that satisfy
each condition with a small safety factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np

from .control import GainSet, alpha1, alpha2
from .dynamics import GRAVITY, ModelBounds

# relative slack tolerated when a gain sits exactly on its bound
REL_TOL = 1e-12


class InfeasibleDesign(RuntimeError):
    """Raised when suggest mode cannot satisfy a condition."""


@dataclass(frozen=True)
class DesignProblem:
    """The data a designer knows before picking gains.

    Arrays indexed by vehicle include the leader at position 0 for ``p``,
    ``v`` and ``a``; ``r``, ``sigma1``, ``sigma2`` and ``tau_true`` have one
    entry per follower.
    """

    p: np.ndarray
    v: np.ndarray
    a: np.ndarray
    r: np.ndarray
    bounds: ModelBounds | Sequence[ModelBounds]
    sigma1: np.ndarray
    sigma2: np.ndarray
    u0_bound: float
    v0_bound: float
    tau_true: np.ndarray
    g: float = GRAVITY

    @property
    def n(self) -> int:
        return len(self.r)

    @property
    def e0(self) -> np.ndarray:
        return self.p[:-1] - self.p[1:] - self.r

    @property
    def vd0(self) -> np.ndarray:
        return self.v[:-1] - self.v[1:]

    def bound_arrays(self) -> dict[str, np.ndarray]:
        seq = [self.bounds] * self.n if isinstance(self.bounds, ModelBounds) else list(self.bounds)
        if len(seq) != self.n:
            raise ValueError(f"expected {self.n} model bounds, got {len(seq)}")
        return {f.name: np.array([getattr(b, f.name) for b in seq]) for f in fields(ModelBounds)}


@dataclass(frozen=True)
class DerivedBounds:
    b_hi: np.ndarray
    b_lo: np.ndarray
    cb_bar: np.ndarray
    e1_bar: np.ndarray
    sigma1: np.ndarray
    sigma2: np.ndarray
    v_bar: np.ndarray
    a_bar: np.ndarray
    alpha3: np.ndarray
    alpha4: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    l_min: np.ndarray
    M: np.ndarray
    B: np.ndarray
    tau_min: np.ndarray
    rho: np.ndarray
    iota: np.ndarray
    u_init: np.ndarray
    q_hat_init: np.ndarray
    a_bar_0: float
    v_bar_0: float

    def as_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = np.asarray(getattr(self, f.name), dtype=float)
            out[f.name] = value.tolist() if value.ndim else float(value)
        return out


# ---------------------------------------------------------------------------
# individual constants


def compute_b_window(bounds: ModelBounds):
    """Return ``(b_lo, b_hi, (lower, upper))``; admissible b_hat is lower < b_hat <= upper."""
    b_hi = bounds.b_hi
    b_lo = bounds.b_lo
    return b_lo, b_hi, (max(b_lo, b_hi / 2.0), b_hi)


def in_b_window(b_hat, b_lo, b_hi):
    return (b_hat > np.maximum(b_lo, b_hi / 2.0)) & (b_hat <= b_hi)


def compute_cb_bar(b_lo, b_hi, b_hat):
    return np.maximum((b_hi - b_hat) / b_hat, (b_hat - b_lo) / b_hat)


def compute_e1_bar(a0, v0, u0, q_hat0, sigma1, bounds: dict | ModelBounds, b_hat, tau_true, g=GRAVITY):
    """Upper bound on the observation error of the event-triggered observer.

    ``bounds`` is a :class:`ModelBounds` or the dict from
    :meth:`DesignProblem.bound_arrays`.
    """
    if isinstance(bounds, ModelBounds):
        m_lo, tau_lo, c_hi, mu_hi = bounds.m_lo, bounds.tau_lo, bounds.c_hi, bounds.mu_hi
        b_hi, b_lo = bounds.b_hi, bounds.b_lo
    else:
        m_lo, tau_lo, c_hi, mu_hi = bounds["m_lo"], bounds["tau_lo"], bounds["c_hi"], bounds["mu_hi"]
        b_hi = 1.0 / (bounds["m_lo"] * bounds["tau_lo"])
        b_lo = 1.0 / (bounds["m_hi"] * bounds["tau_hi"])
    return (np.abs(a0) / tau_true + c_hi * v0 ** 2 / (m_lo * tau_lo) + g * mu_hi / tau_lo
            + np.maximum(b_hi - b_hat, b_hat - b_lo) * np.abs(u0) + sigma1 + np.abs(q_hat0))


def leader_accel_bound(a0_init: float, u0_bound: float) -> float:
    """Bound on the leader acceleration: the lag keeps |a0| below max(|a0(0)|, u0_bound)."""
    return max(abs(a0_init), u0_bound)


def chain_step(g: GainSet, delta, v_bar_prev, a_bar_prev):
    """Velocity/acceleration bounds of one follower and the bounds on its virtual-input rates.

    Returns ``(v_bar, a_bar, alpha3, alpha4)``.  ``g`` holds the scalar gains
    of that follower.
    """
    k1, k2, h1, h2, kap1 = g.k1, g.k2, g.h1, g.h2, g.kappa1
    v_bar = (2 * h1 + k1) * delta + v_bar_prev
    a_bar = (2 * h2 + h1 * k2 + h1 ** 2 + h1 / kap1) * delta
    alpha3 = a_bar_prev / h1 + (2 * k1 + k1 ** 2 / h1) * delta
    alpha4 = ((k1 * h1 ** 2 + k2 * h1 ** 2 + abs(h1 / kap1 ** 2 - h1 ** 3)
               + abs(h1 * k2 ** 2 - h1 ** 3)) / h2 + alpha3 / kap1 + 2 * k2) * delta
    return v_bar, a_bar, alpha3, alpha4


def propagate_chain(gains: GainSet, n: int, v_bar0: float, a_bar0: float):
    """Front-to-back bounds (v_bar, a_bar, alpha3, alpha4), each an array of length n."""
    out = np.zeros((4, n))
    v_prev, a_prev = v_bar0, a_bar0
    for i in range(n):
        out[:, i] = chain_step(gains.vehicle(i), gains.delta, v_prev, a_prev)
        v_prev, a_prev = out[0, i], out[1, i]
    return out[0], out[1], out[2], out[3]


def c1_lhs(vd0, a0, g: GainSet):
    """Left side of the initial-condition requirement on h1, h2 (compared against delta**2)."""
    return vd0 ** 2 / g.h1 ** 2 + (a0 - g.k2 * vd0) ** 2 / g.h2 ** 2


def check_C1(vd0, a0, g: GainSet):
    lhs = c1_lhs(vd0, a0, g)
    return lhs, g.delta ** 2, lhs <= g.delta ** 2


def gain_lower_bounds(g: GainSet, e1_bar):
    """Lower bounds on (k1, k2, k3)."""
    xi, eps, h2 = g.xi, g.epsilon, g.h2
    k12 = (3 * xi + eps ** 2) / (2 * eps ** 2)
    k3 = (3 * xi ** 2 * h2 ** 2 + e1_bar ** 2 * eps ** 2) / (2 * h2 ** 2 * eps ** 2 * xi)
    return k12, k12, k3


def filter_upper_bounds(g: GainSet, alpha3, alpha4):
    """Upper bounds on (kappa1, kappa2)."""
    xi, eps, h1, h2 = g.xi, g.epsilon, g.h1, g.h2
    kap1 = 2 * xi * eps ** 2 / (3 * xi ** 2 + xi * eps ** 2 * h1 ** 2 + eps ** 2 * alpha3 ** 2)
    kap2 = (2 * xi * eps ** 2 * h1 ** 2
            / (3 * xi ** 2 * h1 ** 2 + xi * eps ** 2 * h2 ** 2 + h1 ** 2 * eps ** 2 * alpha4 ** 2))
    return kap1, kap2


def compute_c_constants(g: GainSet, cb_bar, v_bar, a_bar, alpha4, sigma2, c_hi, m_lo, tau_lo):
    """Constants (c1, c2) of the bound |dq/dt| <= c1 + c2|e1| + cb*l*|e1| + cb*l*b_hat*|psi|."""
    k2, k3, h1, h2, kap2, delta = g.k2, g.k3, g.h1, g.h2, g.kappa2, g.delta
    drift = 1 / tau_lo + 2 * c_hi * v_bar / m_lo
    mismatch = ((h2 ** 2 + (k2 + k3) * h2 ** 2 / h1 + abs(k3 ** 2 - h2 ** 2 / h1 ** 2)
                 + abs(h2 ** 2 / h1 ** 2 - 1 / kap2 ** 2)) * delta + alpha4 / kap2)
    c1 = (drift * (k3 + h2 / h1 + 1 / kap2) * h2 * delta
          + 2 * c_hi * v_bar * a_bar / (m_lo * tau_lo) + 2 * c_hi * a_bar ** 2 / m_lo
          + sigma2 + cb_bar * mismatch)
    c2 = drift + cb_bar * k3
    return c1, c2


def observer_requirements(c1, c2, cb_bar, e1_bar, b_hat, l=None):
    """Minimum observer gain and, if ``l`` is given, the trigger threshold M.

    M is only positive for l above the minimum; callers must check.
    """
    cb_bar = np.asarray(cb_bar, dtype=float)
    if np.any(cb_bar >= 1):
        raise InfeasibleDesign(f"cb_bar = {cb_bar} >= 1: b_hat lies outside its admissible window")
    l_min = (c1 + c2 * e1_bar) / ((1 - cb_bar) * e1_bar)
    if l is None:
        return l_min, None
    M = (e1_bar * (l - c2 - cb_bar * l) - c1) / (l * b_hat * (1 + cb_bar))
    return l_min, M


def trigger_threshold(c1, c2, cb_bar, e1_bar, b_hat, l):
    """The threshold formula on its own (no feasibility guard)."""
    return (e1_bar * (l - c2 - cb_bar * l) - c1) / (l * b_hat * (1 + cb_bar))


def zeno_constant(g: GainSet, e1_bar, alpha4):
    """Constant B in |du/dt| <= l|psi| + B."""
    k2, k3, h1, h2, kap2, l = g.k2, g.k3, g.h1, g.h2, g.kappa2, g.l
    inner = (h2 + (k2 + k3) * h2 / h1 + abs(k3 ** 2 - h2 ** 2 / h1 ** 2)
             + abs(h2 ** 2 / h1 ** 2 - 1 / kap2 ** 2) + alpha4 / kap2)
    return h2 * ((l + k3) * e1_bar / h2 + inner * g.delta) / g.b_hat


def zeno_bound(g: GainSet, e1_bar, alpha4, M):
    """Return ``(B, tau_min)`` with tau_min = M / (l M + B) the minimum inter-event time."""
    B = zeno_constant(g, e1_bar, alpha4)
    return B, M / (g.l * M + B)


def rho(g: GainSet, e1_bar, alpha3, alpha4):
    """Decay rate of the per-vehicle Lyapunov function."""
    xi, h1, h2 = g.xi, g.h1, g.h2
    return min(g.k1 - 0.5, g.k2 - 0.5,
               g.k3 - e1_bar ** 2 / (2 * h2 ** 2 * xi),
               1 / g.kappa1 - h1 ** 2 / 2 - alpha3 ** 2 / (2 * xi),
               1 / g.kappa2 - h2 ** 2 / (2 * h1 ** 2) - alpha4 ** 2 / (2 * xi))


def initial_error_quadratic(vd0, a0, g: GainSet):
    """Coefficients (A0, B0, C0) with 2 V(0) - delta**2 = A0 e0**2 + B0 e0 + C0."""
    k1, k2, h1, h2 = g.k1, g.k2, g.h1, g.h2
    K = k1 * k2 + h1 ** 2
    A0 = 1 + k1 ** 2 / h1 ** 2 + K ** 2 / h2 ** 2
    B0 = 2 * k1 * vd0 / h1 ** 2 - 2 * (a0 - k2 * vd0) * K / h2 ** 2
    C0 = vd0 ** 2 / h1 ** 2 + (a0 - k2 * vd0) ** 2 / h2 ** 2 - g.delta ** 2
    return A0, B0, C0


def admissible_initial_error(vd0, a0, g: GainSet) -> float:
    """Largest |e(0)| that keeps V(0) <= delta**2 / 2 (nan when C1 fails).

    The roots of the quadratic straddle zero whenever C1 holds, so the
    admissible set is an interval around 0 and iota is the nearer root.
    """
    A0, B0, C0 = initial_error_quadratic(vd0, a0, g)
    if C0 > 0:
        return float("nan")
    disc = math.sqrt(B0 * B0 - 4 * A0 * C0)
    return min(abs((-B0 + disc) / (2 * A0)), abs((-B0 - disc) / (2 * A0)))


def initial_surfaces(e0, vd0, a0, g: GainSet):
    """Closed-form z1(0), z2(0) when both filters start on their inputs."""
    z1 = (-vd0 - g.k1 * e0) / g.h1
    z2 = (a0 - g.k2 * vd0 - (g.k1 * g.k2 + g.h1 ** 2) * e0) / g.h2
    return z1, z2


def initial_control(e0, vd0, a0, g: GainSet):
    """(u(0), q_hat(0)) with the observer's middle variable starting at zero."""
    q_hat0 = g.l * a0
    z1, z2 = initial_surfaces(e0, vd0, a0, g)
    u0 = g.h2 * (-q_hat0 / g.h2 - g.k3 * z2 - g.h2 * z1 / g.h1) / g.b_hat
    return u0, q_hat0


# ---------------------------------------------------------------------------
# full verification


@dataclass(frozen=True)
class Condition:
    name: str
    vehicle: int            # 1-based follower index, 0 for platoon-level
    actual: float
    required: float
    sense: str              # ">=", "<=", ">", "<", "in"
    verdict: str            # PASS / FAIL / SKIP
    note: str = ""

    @property
    def margin(self) -> float:
        """Relative slack, positive when satisfied."""
        if self.sense in (">=", ">"):
            return (self.actual - self.required) / abs(self.required) if self.required else self.actual
        if self.sense in ("<=", "<"):
            return (self.required - self.actual) / abs(self.required) if self.required else -self.actual
        return float("nan")

    def line(self) -> str:
        req = f"{self.sense}{self.required:.9g}"
        text = (f"name={self.name} vehicle={self.vehicle} required={req} actual={self.actual:.9g} "
                f"margin={self.margin:.6g} verdict={self.verdict}")
        return text + (f" note={self.note}" if self.note else "")


def _cmp(actual, required, sense):
    tol = REL_TOL * max(abs(required), 1.0)
    if sense == ">=":
        return actual >= required - tol
    if sense == "<=":
        return actual <= required + tol
    if sense == ">":
        return actual > required
    if sense == "<":
        return actual < required
    raise ValueError(sense)


@dataclass
class VerificationReport:
    conditions: list[Condition] = field(default_factory=list)
    derived: DerivedBounds | None = None

    def add(self, name, vehicle, actual, required, sense, ok=None, note="", skip=False):
        actual, required = float(actual), float(required)
        if skip:
            verdict = "SKIP"
        else:
            ok = _cmp(actual, required, sense) if ok is None else ok
            verdict = "PASS" if ok else "FAIL"
        self.conditions.append(Condition(name, vehicle, actual, required, sense, verdict, note))

    @property
    def passed(self) -> bool:
        return all(c.verdict != "FAIL" for c in self.conditions) and not any(
            c.verdict == "SKIP" for c in self.conditions)

    def failures(self) -> list[Condition]:
        return [c for c in self.conditions if c.verdict == "FAIL"]

    def by_name(self, name: str) -> list[Condition]:
        return [c for c in self.conditions if c.name == name]

    def to_text(self) -> str:
        lines = [c.line() for c in self.conditions]
        lines.append(f"overall={'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


def derive_bounds(gains: GainSet, problem: DesignProblem) -> DerivedBounds:
    """All derived constants for a fixed gain set; no pass/fail judgement."""
    return _evaluate(gains, problem, report=None)


def verify_all(gains: GainSet, problem: DesignProblem) -> VerificationReport:
    report = VerificationReport()
    report.derived = _evaluate(gains, problem, report)
    return report


def _evaluate(gains: GainSet, problem: DesignProblem, report: VerificationReport | None) -> DerivedBounds:
    n = problem.n
    G = gains.broadcast(n)
    bd = problem.bound_arrays()
    e0, vd0, a_f = problem.e0, problem.vd0, problem.a[1:]
    v_f = problem.v[1:]
    delta, eps = gains.delta, gains.epsilon

    def add(*args, **kw):
        if report is not None:
            report.add(*args, **kw)

    add("delta_below_spacing", 0, delta, float(np.min(problem.r)), "<")
    add("epsilon_within_delta", 0, eps, delta, "<=")

    b_hi = 1.0 / (bd["m_lo"] * bd["tau_lo"])
    b_lo = 1.0 / (bd["m_hi"] * bd["tau_hi"])
    cb = compute_cb_bar(b_lo, b_hi, G.b_hat)

    a_bar0 = leader_accel_bound(problem.a[0], problem.u0_bound)
    v_bar0 = problem.v0_bound

    out = {k: np.zeros(n) for k in ("e1_bar", "v_bar", "a_bar", "alpha3", "alpha4", "c1", "c2",
                                    "l_min", "M", "B", "tau_min", "rho", "iota", "u_init",
                                    "q_hat_init")}
    v_prev, a_prev = v_bar0, a_bar0
    for i in range(n):
        g = G.vehicle(i)
        vid = i + 1
        lower = max(b_lo[i], b_hi[i] / 2)
        window_ok = bool(in_b_window(g.b_hat, b_lo[i], b_hi[i]))
        add("b_hat_window", vid, g.b_hat, lower, ">", ok=window_ok,
            note=f"upper={b_hi[i]:.9g}")

        u0, qh0 = initial_control(e0[i], vd0[i], a_f[i], g)
        e1 = compute_e1_bar(a_f[i], v_f[i], u0, qh0, problem.sigma1[i],
                            {k: v[i] for k, v in bd.items()}, g.b_hat, problem.tau_true[i], problem.g)

        v_bar, a_bar, a3, a4 = chain_step(g, delta, v_prev, a_prev)
        v_prev, a_prev = v_bar, a_bar
        c1, c2 = compute_c_constants(g, cb[i], v_bar, a_bar, a4, problem.sigma2[i],
                                     bd["c_hi"][i], bd["m_lo"][i], bd["tau_lo"][i])

        if cb[i] < 1:
            l_min, M = observer_requirements(c1, c2, cb[i], e1, g.b_hat, g.l)
            add("observer_gain", vid, g.l, l_min, ">")
        else:
            l_min = float("nan")
            M = trigger_threshold(c1, c2, cb[i], e1, g.b_hat, g.l)
            add("observer_gain", vid, g.l, float("nan"), ">", skip=True,
                note="requires_cb_bar<1")
        B, tau_min = zeno_bound(g, e1, a4, M)

        lhs, bound, _ = check_C1(vd0[i], a_f[i], g)
        add("C1", vid, lhs, bound, "<=")
        k1_lb, k2_lb, k3_lb = gain_lower_bounds(g, e1)
        add("C2.k1", vid, g.k1, k1_lb, ">=")
        add("C2.k2", vid, g.k2, k2_lb, ">=")
        add("C2.k3", vid, g.k3, k3_lb, ">=")
        kap1_ub, kap2_ub = filter_upper_bounds(g, a3, a4)
        add("C3.kappa1", vid, g.kappa1, kap1_ub, "<=")
        add("C3.kappa2", vid, g.kappa2, kap2_ub, "<=")

        iota = admissible_initial_error(vd0[i], a_f[i], g)
        if np.isnan(iota):
            add("initial_error", vid, abs(e0[i]), float("nan"), "<=", skip=True, note="C1_violated")
        else:
            add("initial_error", vid, abs(e0[i]), iota, "<=")

        r_i = rho(g, e1, a3, a4)
        for key, value in (("e1_bar", e1), ("v_bar", v_bar), ("a_bar", a_bar), ("alpha3", a3),
                           ("alpha4", a4), ("c1", c1), ("c2", c2), ("l_min", l_min), ("M", M),
                           ("B", B), ("tau_min", tau_min), ("rho", r_i), ("iota", iota),
                           ("u_init", u0), ("q_hat_init", qh0)):
            out[key][i] = value

    return DerivedBounds(b_hi=b_hi, b_lo=b_lo, cb_bar=cb, sigma1=np.asarray(problem.sigma1, float),
                         sigma2=np.asarray(problem.sigma2, float), a_bar_0=a_bar0, v_bar_0=v_bar0,
                         **out)


# ---------------------------------------------------------------------------
# suggest mode


def suggest_gains(problem: DesignProblem, *, delta: float, epsilon: float, xi: float = 0.002,
                  h1: float = 2.0, h2: float = 8.0, b_hat: float | None = None,
                  safety: float = 1.05, max_iter: int = 200) -> GainSet:
    """Pick per-vehicle gains that satisfy every design condition.

    Gains are fixed in dependency order, front to back: b_hat, then k1/k2,
    kappa1 (needs the predecessor's acceleration bound), kappa2, and finally
    k3 and l together, since the observer bound depends on u(0), which depends
    on k3, and on q_hat(0) = l a(0).  Lower bounds are multiplied by
    ``safety`` and upper bounds divided by it.

    Raises :class:`InfeasibleDesign` when the k3/l fixed point diverges.
    """
    n = problem.n
    bd = problem.bound_arrays()
    e0, vd0, a_f, v_f = problem.e0, problem.vd0, problem.a[1:], problem.v[1:]
    cols = {k: np.zeros(n) for k in GainSet.PER_VEHICLE}
    v_prev = problem.v0_bound
    a_prev = leader_accel_bound(problem.a[0], problem.u0_bound)

    for i in range(n):
        bi = {k: v[i] for k, v in bd.items()}
        b_hi = 1.0 / (bi["m_lo"] * bi["tau_lo"])
        b_lo = 1.0 / (bi["m_hi"] * bi["tau_hi"])
        bh = 0.5 * (b_lo + b_hi) if b_hat is None else b_hat
        if not in_b_window(bh, b_lo, b_hi):
            raise InfeasibleDesign(f"vehicle {i + 1}: b_hat={bh} outside admissible window")
        cb = float(compute_cb_bar(b_lo, b_hi, bh))

        k12 = safety * (3 * xi + epsilon ** 2) / (2 * epsilon ** 2)
        # placeholder gains; each entry is overwritten as it gets fixed
        g = GainSet(k1=k12, k2=k12, k3=1.0, h1=h1, h2=h2, kappa1=1.0, kappa2=1.0,
                    l=1.0, b_hat=bh, xi=xi, delta=delta, epsilon=epsilon)
        a3 = a_prev / h1 + (2 * k12 + k12 ** 2 / h1) * delta
        kap1 = filter_upper_bounds(g, a3, 0.0)[0] / safety
        g = g.replace(kappa1=kap1)
        v_bar, a_bar, a3, a4 = chain_step(g, delta, v_prev, a_prev)
        kap2 = filter_upper_bounds(g, a3, a4)[1] / safety
        g = g.replace(kappa2=kap2)

        if c1_lhs(vd0[i], a_f[i], g) > delta ** 2:
            raise InfeasibleDesign(f"vehicle {i + 1}: initial condition violates C1 for h1={h1}, h2={h2}")

        def e1_of(gg):
            u0, qh0 = initial_control(e0[i], vd0[i], a_f[i], gg)
            return compute_e1_bar(a_f[i], v_f[i], u0, qh0, problem.sigma1[i], bi, bh,
                                  problem.tau_true[i], problem.g)

        l = 1.0
        k3 = 1.0
        for _ in range(max_iter):
            # inner fixed point in k3 for the current l
            for _ in range(max_iter):
                g = g.replace(k3=k3, l=l)
                k3_new = safety * gain_lower_bounds(g, e1_of(g))[2]
                if not np.isfinite(k3_new) or k3_new > 1e12:
                    raise InfeasibleDesign(f"vehicle {i + 1}: k3 requirement diverges")
                if abs(k3_new - k3) <= 1e-10 * k3_new:
                    break
                k3 = k3_new
            g = g.replace(k3=k3, l=l)
            e1 = e1_of(g)
            c1, c2 = compute_c_constants(g, cb, v_bar, a_bar, a4, problem.sigma2[i],
                                         bi["c_hi"], bi["m_lo"], bi["tau_lo"])
            l_min, _ = observer_requirements(c1, c2, cb, e1, bh)
            l_new = safety * l_min
            if not np.isfinite(l_new) or l_new > 1e12:
                raise InfeasibleDesign(f"vehicle {i + 1}: observer gain requirement diverges")
            if abs(l_new - l) <= 1e-10 * l_new and k3 >= gain_lower_bounds(g, e1)[2]:
                l = l_new
                break
            l = l_new
        else:
            raise InfeasibleDesign(f"vehicle {i + 1}: k3/l iteration did not converge")

        g = g.replace(k3=k3, l=l)
        for key in GainSet.PER_VEHICLE:
            cols[key][i] = getattr(g, key)
        v_prev, a_prev = v_bar, a_bar

    return GainSet(**cols, delta=delta, epsilon=epsilon)
