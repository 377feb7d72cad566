"""Verdicts on recorded runs, plus trace export and read-back.

Every verdict is a pure function of a trace (or its event log) and a few
bounds, so ``report`` can recompute them from exported files alone.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .scenario import LeaderProfile, LeaderSegment, ScenarioConfig
from .simulation import TRACE_SIGNALS, SimTrace
from .synthesis import derive_bounds, zeno_bound

EXPORT_SIGNALS = ("p", "v", "a", "e", "u", "q", "q_hat", "e1", "psi", "V")
TRACE_FILE, EVENTS_FILE, META_FILE = "trace.csv", "events.csv", "meta.json"
SIG_DIGITS = 9


class StringVerdict(NamedTuple):
    sup_e: np.ndarray
    delta: float
    ok: bool

    @property
    def margin(self) -> float:
        return self.delta - float(np.max(self.sup_e, initial=0.0))


class ClosedLoopVerdict(NamedTuple):
    window_max: np.ndarray
    epsilon: float
    window: tuple[float, float]
    ok: bool


class EsoVerdict(NamedTuple):
    sup_e1: np.ndarray
    e1_bar: np.ndarray
    ok: bool


class ZenoVerdict(NamedTuple):
    min_gap: np.ndarray       # per follower, inf with fewer than two events
    tau_min: np.ndarray
    triggers: np.ndarray      # events after t = 0
    reduction: np.ndarray     # 1 - triggers / steps, per follower
    ok: bool


class LyapunovVerdict(NamedTuple):
    sup_V: np.ndarray
    bound: float
    ok: bool


def string_stability_verdict(trace: SimTrace, delta: float) -> StringVerdict:
    """Every |e_i(t)| stays within delta over the whole trace."""
    sup_e = np.max(np.abs(trace["e"]), axis=0)
    return StringVerdict(sup_e, delta, bool(np.all(sup_e <= delta)))


def _leader_of(trace: SimTrace) -> LeaderProfile | None:
    segs = trace.meta.get("leader_segments")
    if segs is None:
        return None
    return LeaderProfile(tuple(LeaderSegment(**s) for s in segs))


def closed_loop_verdict(trace: SimTrace, epsilon: float, window: float = 2.0,
                        leader: LeaderProfile | None = None) -> ClosedLoopVerdict:
    """max |e_i| over the final ``window`` seconds is at most epsilon.

    This stands in for the limit superior, so the leader must be quiescent in
    the window; a window overlapping a leader manoeuvre raises ValueError.
    """
    if window <= 0:
        raise ValueError("window must be > 0")
    t_end = float(trace.t[-1])
    t0 = t_end - window
    if t0 < trace.t[0]:
        raise ValueError(f"window of {window} s is longer than the trace")
    leader = leader or _leader_of(trace)
    if leader is not None and not leader.quiescent(t0, t_end):
        raise ValueError(f"leader input is active inside the terminal window [{t0:g}, {t_end:g}]")
    mask = trace.t >= t0 - 1e-12
    wmax = np.max(np.abs(trace["e"][mask]), axis=0)
    return ClosedLoopVerdict(wmax, epsilon, (t0, t_end), bool(np.all(wmax <= epsilon)))


def eso_verdict(trace: SimTrace, e1_bar) -> EsoVerdict:
    """sup |e1_i| stays within the observer bound of every follower."""
    e1 = trace["e1"]
    if np.all(np.isnan(e1)):
        raise ValueError("trace carries no observer error (baseline controller?)")
    sup_e1 = np.nanmax(np.abs(e1), axis=0)
    e1_bar = np.broadcast_to(np.asarray(e1_bar, float), sup_e1.shape)
    return EsoVerdict(sup_e1, e1_bar, bool(np.all(sup_e1 <= e1_bar)))


def zeno_verdict(events, n: int, tau_min, steps: int) -> ZenoVerdict:
    """Minimum inter-event gap per follower against the lower bound tau_min.

    ``events`` is a sequence of (follower, time) pairs with 1-based
    followers.  The unconditional transmission at t = 0 is part of the gap
    statistics but not of the trigger count, so triggering at every step end
    gives a reduction ratio of 0.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    times = [[] for _ in range(n)]
    for i, t in events:
        times[int(i) - 1].append(float(t))
    min_gap = np.full(n, np.inf)
    triggers = np.zeros(n, dtype=int)
    for k, ts in enumerate(times):
        ts = np.sort(np.asarray(ts))
        triggers[k] = int(np.count_nonzero(ts > 0))
        if ts.size > 1:
            min_gap[k] = float(np.min(np.diff(ts)))
    tau_min = np.broadcast_to(np.asarray(tau_min, float), (n,))
    reduction = 1.0 - triggers / steps
    return ZenoVerdict(min_gap, tau_min, triggers, reduction, bool(np.all(min_gap >= tau_min)))


def lyapunov_verdict(trace: SimTrace, delta: float) -> LyapunovVerdict:
    """sup V_i stays within delta^2 / 2."""
    V = trace["V"]
    if np.all(np.isnan(V)):
        raise ValueError("trace carries no Lyapunov value (baseline controller?)")
    sup_V = np.nanmax(V, axis=0)
    bound = 0.5 * delta ** 2
    return LyapunovVerdict(sup_V, bound, bool(np.all(sup_V <= bound)))


def run_bounds(scenario: ScenarioConfig) -> dict:
    """Observer bound and minimum inter-event time for the threshold actually used."""
    d = derive_bounds(scenario.gains, scenario.design_problem())
    g = scenario.gains.broadcast(scenario.n)
    M = np.asarray(scenario.trigger_threshold, float)
    B, tau_min = zeno_bound(g, d.e1_bar, d.alpha4, M)
    return {"e1_bar": np.asarray(d.e1_bar, float).tolist(), "B": np.asarray(B, float).tolist(),
            "tau_min": np.asarray(tau_min, float).tolist(), "M": M.tolist()}


@dataclass
class StabilityReport:
    string: StringVerdict
    closed_loop: ClosedLoopVerdict | None
    eso: EsoVerdict | None
    zeno: ZenoVerdict | None
    lyapunov: LyapunovVerdict | None
    notes: list[str] = field(default_factory=list)

    @property
    def verdicts(self) -> dict[str, bool]:
        out = {"string_stable": self.string.ok}
        for name, v in (("closed_loop_ok", self.closed_loop), ("eso_bounded", self.eso),
                        ("zeno_free", self.zeno), ("lyapunov_bounded", self.lyapunov)):
            if v is not None:
                out[name] = v.ok
        return out

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def to_text(self) -> str:
        n = len(self.string.sup_e)
        lines = [f"# delta={self.string.delta:g} string margin={self.string.margin:.6g}"]
        if self.closed_loop is not None:
            w = self.closed_loop.window
            lines.append(f"# epsilon={self.closed_loop.epsilon:g} window=[{w[0]:g}, {w[1]:g}]")
        header = ["vehicle", "sup_e", "window_max_e", "sup_e1", "e1_bar", "min_gap", "tau_min",
                  "triggers", "reduction", "sup_V", "V_bound"]
        lines.append(" ".join(header))
        for i in range(n):
            row = [str(i + 1), _num(self.string.sup_e[i])]
            row.append(_num(self.closed_loop.window_max[i]) if self.closed_loop else "-")
            row += [_num(self.eso.sup_e1[i]), _num(self.eso.e1_bar[i])] if self.eso else ["-", "-"]
            if self.zeno:
                z = self.zeno
                row += [_num(z.min_gap[i]), _num(z.tau_min[i]), str(z.triggers[i]), _num(z.reduction[i])]
            else:
                row += ["-"] * 4
            row += [_num(self.lyapunov.sup_V[i]), _num(self.lyapunov.bound)] if self.lyapunov else ["-", "-"]
            lines.append(" ".join(row))
        lines += [f"# note: {note}" for note in self.notes]
        lines += [f"{k}={'PASS' if v else 'FAIL'}" for k, v in self.verdicts.items()]
        lines.append(f"overall={'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def _num(x) -> str:
    return f"{x:.6g}"


def build_report(trace: SimTrace, bounds: dict | None = None, *, delta: float | None = None,
                 epsilon: float | None = None, window: float = 2.0) -> StabilityReport:
    """Every verdict that the trace supports.

    ``bounds`` is the dict of :func:`run_bounds`; without it the observer and
    Zeno verdicts are skipped.  Runs without an observer skip them as well.
    """
    meta = trace.meta
    delta = meta["delta"] if delta is None else delta
    epsilon = meta["epsilon"] if epsilon is None else epsilon
    notes = []
    string = string_stability_verdict(trace, delta)
    try:
        closed = closed_loop_verdict(trace, epsilon, window)
    except ValueError as exc:
        closed = None
        notes.append(f"closed-loop verdict skipped: {exc}")
    eso = zeno = lyap = None
    has_observer = meta.get("controller", "dsc") == "dsc"
    if has_observer:
        lyap = lyapunov_verdict(trace, delta)
        if bounds is not None:
            eso = eso_verdict(trace, bounds["e1_bar"])
            zeno = zeno_verdict(trace.events, trace.n, bounds["tau_min"], meta["steps"])
        else:
            notes.append("no design bounds supplied: observer and Zeno verdicts skipped")
    return StabilityReport(string, closed, eso, zeno, lyap, notes)


# ---------------------------------------------------------------------------
# export


def _fmt(x: float) -> str:
    return f"{x:.{SIG_DIGITS}g}"


def trace_columns(n: int) -> list[str]:
    return ["t"] + [f"{sig}_{i}" for sig in EXPORT_SIGNALS for i in range(1, n + 1)]


def _ensure_dir(out: Path) -> Path:
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    return out


def write_trace_csv(trace: SimTrace, path: Path) -> Path:
    """Header row, then one row per recorded step.  Follower columns only:
    ``p_i`` etc. are follower i's values, the leader is not exported."""
    n = trace.n
    cols = [trace.t[:, None]]
    for sig in EXPORT_SIGNALS:
        data = trace[sig]
        cols.append(data[:, 1:] if sig in ("p", "v", "a") else data)
    table = np.hstack(cols) if len(trace.t) else np.empty((0, 1 + n * len(EXPORT_SIGNALS)))
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(trace_columns(n)) + "\n")
            for row in table:
                fh.write(",".join(_fmt(x) for x in row) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write trace to {path}: {exc}") from exc
    return path


def write_events_csv(events, path: Path) -> Path:
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["vehicle", "t"])
            for i, t in events:
                w.writerow([int(i), repr(float(t))])
    except OSError as exc:
        raise OSError(f"cannot write event log to {path}: {exc}") from exc
    return path


def write_error_charts(trace: SimTrace, out: Path, prefix: str = "e") -> list[Path]:
    """One standalone SVG line chart of e_i(t) per follower."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # fixed ids and no timestamp, so reruns give identical files
    matplotlib.rcParams["svg.hashsalt"] = "platoon-eso"
    out = _ensure_dir(out)
    paths = []
    e = trace["e"]
    for i in range(trace.n):
        fig, ax = plt.subplots(figsize=(5.0, 3.2))
        ax.plot(trace.t, e[:, i], lw=1.0)
        ax.set_xlabel("t (s)")
        ax.set_ylabel(f"$e_{{{i + 1}}}(t)$ (m)")
        ax.grid(True, lw=0.4, alpha=0.6)
        fig.tight_layout()
        path = out / f"{prefix}_{i + 1}.svg"
        try:
            fig.savefig(path, format="svg", metadata={"Date": None})
        except OSError as exc:
            raise OSError(f"cannot write chart to {path}: {exc}") from exc
        finally:
            plt.close(fig)
        paths.append(path)
    return paths


def export(trace: SimTrace, out: Path, bounds: dict | None = None, charts: bool = True) -> dict[str, Path]:
    """Write trace CSV, event log, metadata sidecar and (optionally) charts into ``out``."""
    out = _ensure_dir(out)
    files = {"trace": write_trace_csv(trace, out / TRACE_FILE),
             "events": write_events_csv(trace.events, out / EVENTS_FILE)}
    meta = dict(trace.meta)
    if bounds is not None:
        meta["bounds"] = bounds
    path = out / META_FILE
    try:
        path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write metadata to {path}: {exc}") from exc
    files["meta"] = path
    if charts:
        for k, p in enumerate(write_error_charts(trace, out), start=1):
            files[f"chart_{k}"] = p
    return files


def read_trace(path: Path) -> SimTrace:
    """Load an exported trace; ``path`` is the CSV file or the directory holding it.

    Signals that are not exported come back as NaN.  The event log and
    metadata are read from the sidecar files when present.
    """
    path = Path(path)
    if path.is_dir():
        path = path / TRACE_FILE
    with open(path, newline="") as fh:
        header = fh.readline().strip().split(",")
    if not header or header[0] != "t":
        raise ValueError(f"{path}: not a trace file (first column must be 't')")
    n = (len(header) - 1) // len(EXPORT_SIGNALS)
    if header != trace_columns(n):
        raise ValueError(f"{path}: unexpected column layout")
    with warnings.catch_warnings():
        # a header-only file is a valid empty trace
        warnings.simplefilter("ignore", UserWarning)
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size == 0:
        data = np.empty((0, len(header)))
    rows = data.shape[0]
    block = {sig: data[:, 1 + k * n:1 + (k + 1) * n] for k, sig in enumerate(EXPORT_SIGNALS)}
    nan_lead = np.full((rows, 1), np.nan)
    kin = {k: np.hstack([nan_lead, block[k]]) for k in ("p", "v", "a")}
    signals = {sig: block[sig] if sig in block else np.full((rows, n), np.nan) for sig in TRACE_SIGNALS}
    events: list[tuple[int, float]] = []
    ev_path = path.parent / EVENTS_FILE
    if ev_path.exists():
        with open(ev_path, newline="") as fh:
            for rec in csv.DictReader(fh):
                events.append((int(rec["vehicle"]), float(rec["t"])))
    meta_path = path.parent / META_FILE
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return SimTrace(t=data[:, 0].copy(), p=kin["p"], v=kin["v"], a=kin["a"], signals=signals,
                    events=events, meta=meta)


def report_from_files(path: Path, window: float = 2.0) -> StabilityReport:
    trace = read_trace(path)
    if "delta" not in trace.meta:
        raise ValueError(f"{path}: metadata sidecar {META_FILE} missing or incomplete")
    return build_report(trace, trace.meta.get("bounds"), window=window)


def peak_table(dsc: SimTrace, baseline: SimTrace) -> str:
    """Side-by-side peak |e_i| of both controllers."""
    a = np.max(np.abs(dsc["e"]), axis=0)
    b = np.max(np.abs(baseline["e"]), axis=0)
    lines = ["vehicle peak_e_dsc peak_e_baseline baseline_larger"]
    for i in range(len(a)):
        lines.append(f"{i + 1} {_num(a[i])} {_num(b[i])} {'yes' if b[i] > a[i] else 'no'}")
    lines.append(f"# baseline larger for {int(np.sum(b > a))} of {len(a)} followers")
    return "\n".join(lines)
