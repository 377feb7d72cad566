import numpy as np
import pytest

from platoon_eso.scenario import (DISTURBANCE_RANGES, TABLE1_A, TABLE1_P, TABLE1_V, ConfigError,
                                  LeaderProfile, LeaderSegment, bundled_configs, build_scenario,
                                  leader_maneuver_default, load_config)


def test_bundled_configs_present():
    assert {"default", "eps001", "verified"} <= set(bundled_configs())


def test_default_matches_study_setup(default_scenario):
    sc = default_scenario
    assert sc.n == 8
    assert list(sc.p0) == [80.0] + TABLE1_P
    assert list(sc.v0) == [10.0] + TABLE1_V
    assert list(sc.a0) == [0.0] + TABLE1_A
    assert np.all(sc.spacing == 8.0)
    assert sc.gains.delta == 7.0 and sc.gains.epsilon == 0.1
    assert sc.dt == 1e-4 and sc.horizon == 15.0 and sc.tau0 == 0.3


def test_seed_determinism():
    a, b = build_scenario("default"), build_scenario("default")
    for name in ("mass", "drag", "rolling", "tau"):
        assert np.array_equal(getattr(a.vehicles, name), getattr(b.vehicles, name))
    for name in ("lam1", "lam2", "lam3", "lam4"):
        assert np.array_equal(getattr(a.disturbance, name), getattr(b.disturbance, name))
    assert np.array_equal(a.trigger_threshold, b.trigger_threshold)
    c = build_scenario("default", seed=99)
    assert not np.array_equal(a.vehicles.mass, c.vehicles.mass)


def test_draw_order_is_vehicles_then_disturbances():
    sc = build_scenario("default")
    rng = np.random.default_rng(sc.seed)
    b = sc.bounds
    veh = np.array([[rng.uniform(b.m_lo, b.m_hi), rng.uniform(b.c_lo, b.c_hi),
                     rng.uniform(b.mu_lo, b.mu_hi), rng.uniform(b.tau_lo, b.tau_hi)] for _ in range(8)])
    lam = np.array([[rng.uniform(*DISTURBANCE_RANGES[k]) for k in ("lam1", "lam2", "lam3", "lam4")]
                    for _ in range(8)])
    assert np.array_equal(sc.vehicles.mass, veh[:, 0]) and np.array_equal(sc.vehicles.tau, veh[:, 3])
    assert np.array_equal(sc.disturbance.lam1, lam[:, 0]) and np.array_equal(sc.disturbance.lam4, lam[:, 3])


@pytest.mark.parametrize("seed", [0, 1, 2022, 31337])
def test_random_draws_in_ranges(seed):
    sc = build_scenario("default", seed=seed)
    assert sc.bounds.contains(sc.vehicles)
    for name, (lo, hi) in DISTURBANCE_RANGES.items():
        x = getattr(sc.disturbance, name)
        assert np.all((lo <= x) & (x <= hi))


def test_threshold_resolution(default_scenario, verified_scenario):
    # the study gains give a negative design threshold, so the fallback applies
    assert np.all(default_scenario.trigger_threshold == 100.0)
    assert default_scenario.threshold_source == ",".join(["fallback"] * 8)
    assert verified_scenario.threshold_source == "design"
    assert verified_scenario.trigger_threshold[0] > 0


def _cfg(**changes):
    cfg = dict(load_config("default"))
    cfg.update(changes)
    return cfg


@pytest.mark.parametrize("changes, field", [
    ({"dt": 0.0}, "dt"),
    ({"horizon": -1.0}, "horizon"),
    ({"controller": "pid"}, "controller"),
    ({"model_bounds": {"m": [2000.0, 1500.0], "c": [0.2, 0.4], "mu": [0.02, 0.05], "tau": [0.2, 0.4]}},
     "model_bounds"),
    ({"vehicles": {"mass": 5000.0, "drag": 0.3, "rolling": 0.03, "tau": 0.3}}, "vehicles"),
    ({"trigger": {"threshold": -1.0}}, "trigger.threshold"),
    ({"leader": {"segments": [{"start": 6.0, "end": 5.0, "magnitude": 1.0}]}}, "leader.segments"),
    ({"gains": {"k1": 0.8}}, "gains"),
])
def test_invalid_configs_name_the_field(changes, field):
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        build_scenario(_cfg(**changes))


def test_non_positive_initial_spacing_rejected():
    cfg = _cfg()
    cfg["platoon"] = dict(cfg["platoon"], initial=dict(cfg["platoon"]["initial"], p=[71.0, 72.0] + TABLE1_P[2:]))
    with pytest.raises(ConfigError, match="initial spacing to follower 2"):
        build_scenario(cfg)


def test_missing_file_and_bad_yaml(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("platoon: [unclosed\n")
    with pytest.raises(ConfigError, match="not valid YAML"):
        load_config(bad)


def test_leader_default_maneuver():
    lp = leader_maneuver_default()
    assert lp.u0(3.0) == 0.0
    assert lp.u0(7.5) == pytest.approx(2.0, rel=1e-15)
    assert lp.u0(12.0) == 0.0
    assert lp.u0_bound == 2.0
    assert lp.quiescent(0.0, 6.0) and lp.quiescent(9.0, 15.0) and not lp.quiescent(8.0, 10.0)
    # raised cosine: the leader gains int u0 dt = 3 m/s of velocity at most
    assert lp.velocity_bound(10.0, 0.0, 0.3) == 13.0


def test_leader_samples_bounded(rng):
    lp = LeaderProfile((LeaderSegment(1.0, 4.0, "smooth-pulse", -1.5), LeaderSegment(2.0, 3.0, "constant", 0.7)))
    t = rng.uniform(0.0, 6.0, 2000)
    assert max(abs(lp.u0(x)) for x in t) <= lp.u0_bound
