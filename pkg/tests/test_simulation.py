import numpy as np
import pytest
from conftest import equilibrium_config

from platoon_eso import _kernels as K
from platoon_eso.control import BaselineGains
from platoon_eso.dynamics import KinematicState, disturbance, unmodeled_w
from platoon_eso.scenario import build_scenario
from platoon_eso.simulation import Platoon, SimulationDiverged, run


def _perturbed_states(plat, rng, count=5):
    x0 = plat.initial_state().x
    return [x0 + rng.normal(scale=0.3, size=x0.size) * np.maximum(1.0, 0.05 * np.abs(x0)) for _ in range(count)]


@pytest.mark.parametrize("controller", ["dsc", "baseline"])
def test_compiled_rhs_matches_reference(default_scenario, rng, controller):
    plat = Platoon(default_scenario, controller)
    for k, x in enumerate(_perturbed_states(plat, rng)):
        t = 1.7 * k + 0.35
        gamma = rng.normal(scale=1e4, size=plat.n)
        fast, ref = plat.rhs(t, x, gamma), plat.rhs_reference(t, x, gamma)
        np.testing.assert_allclose(fast, ref, rtol=1e-11, atol=1e-9 * np.max(np.abs(ref)))
        np.testing.assert_allclose(plat.control(t, x), plat.control_reference(x), rtol=1e-11, atol=1e-6)


def test_compiled_leader_input_matches_profile(default_scenario):
    plat = Platoon(default_scenario)
    for t in np.linspace(0.0, 15.0, 301):
        assert K.leader_input(t, plat._seg) == pytest.approx(default_scenario.leader.u0(t), abs=1e-14)


def test_zero_horizon_gives_initial_row(default_scenario):
    tr = run(default_scenario, horizon=0.0)
    assert tr.t.shape == (1,) and tr.p.shape == (1, 9)
    assert np.array_equal(tr.p[0], default_scenario.p0)
    assert np.allclose(tr["e"][0], [1.0, -0.5, 1.5, -1.2, 0.8, -0.2, 0.5, -0.7])
    assert tr.events == [(i, 0.0) for i in range(1, 9)]


def test_horizon_must_be_whole_steps(default_scenario):
    with pytest.raises(ValueError):
        run(default_scenario, horizon=0.00015)


def test_initial_observer_error_equals_q(default_scenario):
    tr = run(default_scenario, horizon=0.0)
    # s(0) = 0, so q_hat(0) = l a(0)
    assert np.allclose(tr["q_hat"][0], 1200.0 * default_scenario.a0[1:])
    i = 0   # vehicle 1 starts with a = 0
    assert tr["e1"][0, i] == tr["q"][0, i]


def test_row_count_full_run(dsc_trace):
    assert dsc_trace.t.shape == (150001,)
    assert dsc_trace.t[-1] == 15.0
    assert np.all(np.diff(dsc_trace.t) > 0)
    assert dsc_trace.meta["steps"] == 150000


def test_bit_identical_reruns(default_scenario):
    a = run(default_scenario, horizon=0.5)
    b = run(default_scenario, horizon=0.5)
    assert np.array_equal(a.p, b.p) and np.array_equal(a.v, b.v) and np.array_equal(a.a, b.a)
    for name in a.signals:
        assert np.array_equal(a[name], b[name], equal_nan=True)
    assert a.events == b.events


def test_stride_thins_output(default_scenario):
    full = run(default_scenario, horizon=0.05)
    thin = run(default_scenario, horizon=0.05, record_stride=10)
    assert thin.t.shape == (51,)
    assert np.array_equal(thin.p, full.p[::10])


def test_gamma_constant_between_events(dsc_trace):
    gamma = dsc_trace["gamma"]
    t = dsc_trace.t
    for i in range(1, dsc_trace.n + 1):
        ev = dsc_trace.event_times(i)
        changed = np.flatnonzero(np.diff(gamma[:, i - 1]) != 0)
        # a change between rows k and k+1 needs an event in (t_k, t_k+1]
        k = np.searchsorted(ev, t[changed], side="right")
        assert np.all(k < ev.size)
        assert np.all(ev[np.minimum(k, ev.size - 1)] <= t[changed + 1])


def test_sampling_error_within_threshold(dsc_trace, default_scenario):
    M = default_scenario.trigger_threshold
    assert np.all(np.abs(dsc_trace["psi"]) <= M * (1 + 1e-9))


def test_trigger_counts_match_event_log(dsc_trace):
    counts = np.bincount([i for i, _ in dsc_trace.events], minlength=dsc_trace.n + 1)[1:]
    assert counts.tolist() == dsc_trace.meta["trigger_count"]
    times = [t for _, t in dsc_trace.events]
    assert min(times) == 0.0 and max(times) <= 15.0


def test_equilibrium_is_preserved(equilibrium_trace):
    assert np.max(np.abs(equilibrium_trace["e"])) < 1e-9
    assert len(equilibrium_trace.events) == 8


def test_free_particle_keeps_velocity():
    cfg = equilibrium_config(3)
    sc = build_scenario(cfg, controller="baseline", horizon=2.0)
    sc = sc.with_overrides(baseline=BaselineGains(0.0, 0.0, 0.0, 0.0),
                           v0=np.array([10.0, 11.0, 9.5, 12.0]))
    tr = run(sc)
    assert np.all(tr["u"] == 0.0)
    assert np.max(np.abs(tr.v[:, 1:] - sc.v0[1:])) < 1e-12
    assert np.max(np.abs(tr.a[:, 1:])) == 0.0


def test_divergence_is_reported(default_scenario):
    # positive feedback on the own acceleration grows at roughly 2000 1/s
    sc = default_scenario.with_overrides(baseline=BaselineGains(2000.0, 4000.0, 2000.0, 1e6))
    with pytest.raises(SimulationDiverged, match="non-finite state"):
        run(sc, "baseline", dt=1e-3, horizon=3.0)


def test_observer_error_dynamics_along_trajectory(default_scenario):
    # de1/dt = -l e1 + l b_hat psi + w at an instant of the closed loop
    plat = Platoon(default_scenario)
    st = plat.initial_state()
    for k in range(1, 5001):
        st = plat.step(st, 1e-4)
        st.t = k * 1e-4
    t, x, gamma = st.t, st.x, st.gamma
    g = plat.g

    def e1_at(h):
        y = plat.rk4(t, x, h, gamma) if h else x
        return plat.signals(np.array([t + h]), y[None, :], gamma[None, :])["e1"][0]

    xdot = plat.rhs(t, x, gamma)
    _, v, a, *_ = plat.split(x)
    _, _, a_dot, *_ = plat.split(xdot)
    eps = 1e-4
    # u is affine in the state, so this difference is its exact time derivative
    u_dot = (plat.control(t, x + eps * xdot) - plat.control(t, x)) / eps
    sigma_dot = disturbance(t, plat.dp)[1]
    w = unmodeled_w(KinematicState(None, v[1:], a[1:]), a_dot[1:], u_dot, sigma_dot, plat.params, g.b_hat)
    sig = plat.signals(np.array([t]), x[None, :], gamma[None, :])
    predicted = -g.l * sig["e1"][0] + g.l * g.b_hat * sig["psi"][0] + w
    h = 1e-6
    measured = (e1_at(h) - e1_at(-h)) / (2 * h)
    np.testing.assert_allclose(measured, predicted, rtol=1e-4, atol=1e-4 * np.max(np.abs(predicted)))


def test_baseline_trace_has_no_observer_signals(baseline_trace):
    assert np.all(np.isnan(baseline_trace["e1"]))
    assert baseline_trace.events == []
    assert np.all(np.isfinite(baseline_trace["u"]))
