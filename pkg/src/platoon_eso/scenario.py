"""Scenario description: platoon, model uncertainty, disturbances, leader maneuver, gains.

Scenarios are read from YAML files.  Three ship with the package (see
``bundled_configs()``): the eight-vehicle study with either gain set, and a
single-follower case whose gains are synthesised to satisfy every design
condition.

Random draws come from one ``numpy.random.default_rng(seed)`` in a fixed
order: vehicle parameters follower by follower (mass, drag, rolling, tau),
then disturbance parameters follower by follower (lam1..lam4).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .control import BaselineGains, GainSet, initial_filter_state
from .dynamics import DisturbanceParams, LeaderParams, ModelBounds, VehicleParams
from .synthesis import DesignProblem, derive_bounds, suggest_gains


class ConfigError(ValueError):
    """Invalid scenario configuration; the message names the offending field."""


# Table-1 initial conditions of the eight followers; leader at p=80 m, v=10 m/s.
TABLE1_P = [71.0, 63.5, 54.0, 47.2, 38.4, 30.6, 22.1, 14.8]
TABLE1_V = [10.0, 11.0, 11.5, 12.5, 12.5, 11.5, 13.5, 13.0]
TABLE1_A = [0.0, 1.5, -1.0, 0.0, -2.0, 1.0, 0.0, -1.0]

DISTURBANCE_RANGES = {"lam1": (1.0, 20.0), "lam2": (0.1, 0.5), "lam3": (0.5, 1.0), "lam4": (4.0, 8.0)}


@dataclass(frozen=True)
class LeaderSegment:
    start: float
    end: float
    shape: str          # "constant" or "smooth-pulse"
    magnitude: float

    def __post_init__(self):
        if self.shape not in ("constant", "smooth-pulse"):
            raise ConfigError(f"leader.segments.shape: unknown shape {self.shape!r}")
        if not self.end > self.start:
            raise ConfigError(f"leader.segments: end ({self.end}) must exceed start ({self.start})")

    def value(self, t: float) -> float:
        if not (self.start <= t < self.end):
            return 0.0
        if self.shape == "constant":
            return self.magnitude
        phase = 2.0 * math.pi * (t - self.start) / (self.end - self.start)
        return self.magnitude * 0.5 * (1.0 - math.cos(phase))

    def integral_abs(self) -> float:
        width = self.end - self.start
        return abs(self.magnitude) * (width if self.shape == "constant" else 0.5 * width)


@dataclass(frozen=True)
class LeaderProfile:
    """Piecewise leader input u0(t); zero outside every segment."""

    segments: tuple[LeaderSegment, ...] = ()

    def u0(self, t: float) -> float:
        return sum(seg.value(t) for seg in self.segments)

    @property
    def u0_bound(self) -> float:
        # segments may overlap, so sum the peaks
        return sum(abs(seg.magnitude) for seg in self.segments)

    def quiescent(self, t0: float, t1: float) -> bool:
        """True when no segment overlaps [t0, t1]."""
        return all(seg.end <= t0 or seg.start >= t1 for seg in self.segments)

    def velocity_bound(self, v_init: float, a_init: float, tau0: float) -> float:
        """Bound on |v0(t)|: the lag passes at most |a0(0)| tau0 + int |u0| of velocity change."""
        return abs(v_init) + abs(a_init) * tau0 + sum(seg.integral_abs() for seg in self.segments)


def leader_maneuver_default(peak: float = 2.0) -> LeaderProfile:
    """Cruise on [0, 6), raised-cosine acceleration pulse on [6, 9), cruise afterwards."""
    return LeaderProfile((LeaderSegment(6.0, 9.0, "smooth-pulse", peak),))


@dataclass
class ScenarioConfig:
    n: int
    vehicles: VehicleParams
    bounds: ModelBounds
    disturbance: DisturbanceParams
    p0: np.ndarray          # length n + 1, leader first
    v0: np.ndarray
    a0: np.ndarray
    spacing: np.ndarray     # length n
    leader: LeaderProfile
    tau0: float
    gains: GainSet
    baseline: BaselineGains = field(default_factory=BaselineGains)
    controller: str = "dsc"
    trigger_threshold: np.ndarray | None = None
    threshold_source: str = ""
    dt: float = 1e-4
    horizon: float = 15.0
    seed: int = 0
    record_stride: int = 1
    sigma_bounds: tuple[np.ndarray, np.ndarray] | None = None
    name: str = ""

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.n < 1:
            raise ConfigError("platoon.n: need at least one follower")
        if not self.dt > 0:
            raise ConfigError(f"dt: must be > 0, got {self.dt}")
        if not self.horizon >= 0:
            raise ConfigError(f"horizon: must be >= 0, got {self.horizon}")
        if self.controller not in ("dsc", "baseline"):
            raise ConfigError(f"controller: expected 'dsc' or 'baseline', got {self.controller!r}")
        for name, arr, size in (("platoon.initial.p", self.p0, self.n + 1),
                                ("platoon.initial.v", self.v0, self.n + 1),
                                ("platoon.initial.a", self.a0, self.n + 1),
                                ("platoon.spacing", self.spacing, self.n)):
            if np.shape(arr) != (size,):
                raise ConfigError(f"{name}: expected {size} entries, got {np.shape(arr)}")
            if not np.all(np.isfinite(arr)):
                raise ConfigError(f"{name}: non-finite entry")
        gaps = self.p0[:-1] - self.p0[1:]
        if np.any(gaps <= 0):
            i = int(np.argmax(gaps <= 0)) + 1
            raise ConfigError(f"platoon.initial.p: initial spacing to follower {i} is not positive")
        if np.any(self.spacing <= 0):
            raise ConfigError("platoon.spacing: desired spacing must be > 0")
        if not self.gains.delta < np.min(self.spacing):
            raise ConfigError(f"gains.delta: must be below the smallest spacing {np.min(self.spacing)}")
        if not self.bounds.contains(self.vehicles):
            raise ConfigError("vehicles: parameters fall outside model_bounds")
        if not self.tau0 > 0:
            raise ConfigError("leader.tau0: must be > 0")
        if self.record_stride < 1:
            raise ConfigError("record_stride: must be >= 1")

    @property
    def leader_params(self) -> LeaderParams:
        u0_bound = self.leader.u0_bound or 1e-12
        return LeaderParams(tau0=self.tau0, u0_bound=u0_bound,
                            v0_bound=self.leader.velocity_bound(self.v0[0], self.a0[0], self.tau0))

    @property
    def sigma1(self) -> np.ndarray:
        if self.sigma_bounds is not None:
            return np.asarray(self.sigma_bounds[0], float)
        return np.broadcast_to(self.disturbance.sigma1_bound, (self.n,)).astype(float)

    @property
    def sigma2(self) -> np.ndarray:
        if self.sigma_bounds is not None:
            return np.asarray(self.sigma_bounds[1], float)
        return np.broadcast_to(self.disturbance.sigma2_bound, (self.n,)).astype(float)

    def design_problem(self) -> DesignProblem:
        lp = self.leader_params
        return DesignProblem(p=self.p0, v=self.v0, a=self.a0, r=self.spacing, bounds=self.bounds,
                             sigma1=self.sigma1, sigma2=self.sigma2, u0_bound=lp.u0_bound,
                             v0_bound=lp.v0_bound, tau_true=np.asarray(self.vehicles.tau, float),
                             g=self.vehicles.g)

    def with_overrides(self, **changes) -> "ScenarioConfig":
        values = dict(self.__dict__)
        values.update(changes)
        return ScenarioConfig(**values)

    def initial_filters(self):
        g = self.gains.broadcast(self.n)
        gap = self.p0[:-1] - self.p0[1:]
        return initial_filter_state(self.v0[1:], self.v0[:-1], gap, self.spacing, g)


# ---------------------------------------------------------------------------
# config parsing


def bundled_configs() -> dict[str, Path]:
    root = resources.files("platoon_eso") / "configs"
    return {p.name.removesuffix(".yaml"): Path(str(p)) for p in root.iterdir() if p.name.endswith(".yaml")}


def load_config(source: str | Path | dict) -> dict:
    """Read a YAML config file, a bundled config name, or pass a dict through."""
    if isinstance(source, dict):
        return source
    bundled = bundled_configs()
    if isinstance(source, str) and source in bundled:
        source = bundled[source]
    path = Path(source)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config: {path} is not valid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config: {path} must contain a mapping at top level")
    return data


def _get(d: dict, key: str, path: str, default: Any = ...):
    if key in d:
        return d[key]
    if default is ...:
        raise ConfigError(f"{path}.{key}: missing" if path else f"{key}: missing")
    return default


def _array(value, n: int, path: str) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: expected number or list of numbers") from exc
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise ConfigError(f"{path}: expected {n} entries, got {arr.size}")
    return arr


def _bounds(d: dict) -> ModelBounds:
    try:
        return ModelBounds(*[float(x) for key in ("m", "c", "mu", "tau")
                             for x in _pair(_get(d, key, "model_bounds"), f"model_bounds.{key}")])
    except ValueError as exc:
        raise ConfigError(f"model_bounds: {exc}") from exc


def _pair(value, path):
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"{path}: expected [low, high]")
    return value


def build_scenario(source: str | Path | dict, **overrides) -> ScenarioConfig:
    """Resolve a config into a fully specified scenario.

    ``overrides`` replace top-level keys (``dt``, ``horizon``, ``seed``,
    ``controller``) before anything is drawn, so a seed override changes the
    random vehicles and disturbances.
    """
    cfg = dict(load_config(source))
    cfg.update({k: v for k, v in overrides.items() if v is not None})

    seed = int(cfg.get("seed", 0))
    rng = np.random.default_rng(seed)
    plat = _get(cfg, "platoon", "")
    n = int(_get(plat, "n", "platoon"))
    init = plat.get("initial", {})
    lead = init.get("leader", {"p": 80.0, "v": 10.0, "a": 0.0})
    p0 = np.concatenate([[float(lead.get("p", 80.0))], _array(init.get("p", TABLE1_P[:n]), n, "platoon.initial.p")])
    v0 = np.concatenate([[float(lead.get("v", 10.0))], _array(init.get("v", TABLE1_V[:n]), n, "platoon.initial.v")])
    a0 = np.concatenate([[float(lead.get("a", 0.0))], _array(init.get("a", TABLE1_A[:n]), n, "platoon.initial.a")])
    spacing = _array(plat.get("spacing", 8.0), n, "platoon.spacing")

    bounds = _bounds(_get(cfg, "model_bounds", ""))
    veh = cfg.get("vehicles", "random")
    if veh == "random":
        draws = np.array([[rng.uniform(bounds.m_lo, bounds.m_hi), rng.uniform(bounds.c_lo, bounds.c_hi),
                           rng.uniform(bounds.mu_lo, bounds.mu_hi), rng.uniform(bounds.tau_lo, bounds.tau_hi)]
                          for _ in range(n)])
        vehicles = VehicleParams(mass=draws[:, 0], drag=draws[:, 1], rolling=draws[:, 2], tau=draws[:, 3])
    elif isinstance(veh, dict):
        try:
            vehicles = VehicleParams(**{k: _array(_get(veh, k, "vehicles"), n, f"vehicles.{k}")
                                        for k in ("mass", "drag", "rolling", "tau")})
        except ValueError as exc:
            raise ConfigError(f"vehicles: {exc}") from exc
    else:
        raise ConfigError("vehicles: expected 'random' or a mapping of parameter lists")

    dist = cfg.get("disturbance", {"ranges": DISTURBANCE_RANGES})
    if "ranges" in dist:
        ranges = {k: _pair(dist["ranges"].get(k, DISTURBANCE_RANGES[k]), f"disturbance.ranges.{k}")
                  for k in DISTURBANCE_RANGES}
        lam = np.array([[rng.uniform(*ranges[k]) for k in ("lam1", "lam2", "lam3", "lam4")]
                        for _ in range(n)])
        disturbance = DisturbanceParams(lam[:, 0], lam[:, 1], lam[:, 2], lam[:, 3])
    else:
        try:
            disturbance = DisturbanceParams(*[_array(_get(dist, k, "disturbance"), n, f"disturbance.{k}")
                                              for k in ("lam1", "lam2", "lam3", "lam4")])
        except ValueError as exc:
            raise ConfigError(f"disturbance: {exc}") from exc
    sigma_bounds = None
    if "sigma1_bound" in dist or "sigma2_bound" in dist:
        s1 = _array(_get(dist, "sigma1_bound", "disturbance"), n, "disturbance.sigma1_bound")
        s2 = _array(_get(dist, "sigma2_bound", "disturbance"), n, "disturbance.sigma2_bound")
        if np.any(s1 < disturbance.sigma1_bound) or np.any(s2 < disturbance.sigma2_bound):
            raise ConfigError("disturbance.sigma1_bound/sigma2_bound: declared bounds are below the actual disturbance")
        sigma_bounds = (s1, s2)

    ld = cfg.get("leader", {})
    tau0 = float(ld.get("tau0", 0.3))
    if "segments" in ld:
        try:
            leader = LeaderProfile(tuple(LeaderSegment(float(s["start"]), float(s["end"]),
                                                       str(s.get("shape", "smooth-pulse")),
                                                       float(s["magnitude"]))
                                         for s in ld["segments"]))
        except KeyError as exc:
            raise ConfigError(f"leader.segments: missing {exc.args[0]}") from exc
    else:
        leader = leader_maneuver_default(float(ld.get("peak", 2.0)))

    baseline = BaselineGains(**cfg.get("baseline", {}))

    scenario_kw = dict(
        n=n, vehicles=vehicles, bounds=bounds, disturbance=disturbance, p0=p0, v0=v0, a0=a0,
        spacing=spacing, leader=leader, tau0=tau0, baseline=baseline,
        controller=str(cfg.get("controller", "dsc")), dt=float(cfg.get("dt", 1e-4)),
        horizon=float(cfg.get("horizon", 15.0)), seed=seed,
        record_stride=int(cfg.get("record_stride", 1)), sigma_bounds=sigma_bounds,
        name=str(cfg.get("name", "")),
    )

    graw = dict(_get(cfg, "gains", ""))
    if "suggest" in graw:
        opts = dict(graw["suggest"])
        # a provisional gain set lets us build the design problem before the gains exist
        provisional = GainSet(k1=1, k2=1, k3=1, h1=1, h2=1, kappa1=1, kappa2=1, l=1, b_hat=1,
                              delta=float(opts["delta"]), epsilon=float(opts["epsilon"]))
        tmp = ScenarioConfig(gains=provisional, **scenario_kw)
        try:
            gains = suggest_gains(tmp.design_problem(), **{k: float(v) for k, v in opts.items()})
        except TypeError as exc:
            raise ConfigError(f"gains.suggest: {exc}") from exc
    else:
        try:
            gains = GainSet(**{k: (v if isinstance(v, (int, float)) else np.asarray(v, float))
                               for k, v in graw.items()})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"gains: {exc}") from exc

    scenario = ScenarioConfig(gains=gains, **scenario_kw)
    trig = cfg.get("trigger", {})
    M, source_note = resolve_threshold(scenario, trig.get("threshold", "auto"),
                                       float(trig.get("fallback", 100.0)))
    scenario.trigger_threshold = M
    scenario.threshold_source = source_note
    return scenario


def resolve_threshold(scenario: ScenarioConfig, threshold, fallback: float):
    """Trigger threshold per follower.

    ``"auto"`` takes the observer-design value where it is positive and the
    fallback elsewhere; a number or list is used as given.
    """
    n = scenario.n
    if isinstance(threshold, str):
        if threshold != "auto":
            raise ConfigError(f"trigger.threshold: expected 'auto', a number or a list, got {threshold!r}")
        derived = derive_bounds(scenario.gains, scenario.design_problem())
        M = np.where(np.isfinite(derived.M) & (derived.M > 0), derived.M, fallback)
        sources = np.where(np.isfinite(derived.M) & (derived.M > 0), "design", "fallback")
        return M, ",".join(sources)
    M = _array(threshold, n, "trigger.threshold")
    if np.any(M <= 0):
        raise ConfigError("trigger.threshold: must be > 0")
    return M, ",".join(["configured"] * n)
