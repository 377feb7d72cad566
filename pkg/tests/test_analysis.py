import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from platoon_eso import analysis as A
from platoon_eso.simulation import TRACE_SIGNALS, SimTrace, run


def synth(e, t=None, events=(), **extra):
    """A trace carrying the given spacing errors; other signals are zero unless supplied."""
    e = np.asarray(e, float)
    rows, n = e.shape
    t = np.linspace(0.0, 1.0, rows) if t is None else np.asarray(t, float)
    sig = {name: np.zeros((rows, n)) for name in TRACE_SIGNALS}
    sig["e"] = e
    sig.update({k: np.asarray(v, float) for k, v in extra.items()})
    kin = np.zeros((rows, n + 1))
    meta = {"delta": 7.0, "epsilon": 0.1, "steps": max(rows - 1, 1), "controller": "dsc", "n": n}
    return SimTrace(t=t, p=kin.copy(), v=kin.copy(), a=kin.copy(), signals=sig, events=list(events), meta=meta)


def test_string_verdict_edges():
    assert A.string_stability_verdict(synth(np.zeros((5, 3))), 7.0).ok
    e = np.zeros((5, 3))
    e[2, 1] = -7.01
    v = A.string_stability_verdict(synth(e), 7.0)
    assert not v.ok and v.sup_e[1] == 7.01
    assert v.margin == pytest.approx(-0.01)


def test_closed_loop_verdict():
    t = np.linspace(0.0, 10.0, 101)
    e = np.exp(-t)[:, None] * np.ones((1, 2))
    v = A.closed_loop_verdict(synth(e, t), 0.1, window=2.0)
    assert v.ok and v.window == (8.0, 10.0)
    assert v.window_max[0] == pytest.approx(np.exp(-8.0))


def test_closed_loop_rejects_active_leader_and_long_window():
    t = np.linspace(0.0, 10.0, 101)
    tr = synth(np.zeros((101, 1)), t)
    tr.meta["leader_segments"] = [{"start": 7.0, "end": 9.0, "shape": "smooth-pulse", "magnitude": 1.0}]
    with pytest.raises(ValueError, match="leader input is active"):
        A.closed_loop_verdict(tr, 0.1, window=2.0)
    with pytest.raises(ValueError, match="longer than the trace"):
        A.closed_loop_verdict(synth(np.zeros((101, 1)), t), 0.1, window=20.0)


def test_eso_verdict():
    tr = synth(np.zeros((4, 2)))
    assert A.eso_verdict(tr, [1.0, 1.0]).ok
    tr = synth(np.zeros((4, 2)), e1=[[0.0, 0.0], [3.0, -5.0], [0.0, 0.0], [0.0, 0.0]])
    assert not A.eso_verdict(tr, [4.0, 4.0]).ok
    assert A.eso_verdict(tr, [4.0, 1e9]).ok
    with pytest.raises(ValueError):
        A.eso_verdict(synth(np.zeros((3, 1)), e1=np.full((3, 1), np.nan)), 1.0)


def test_zeno_verdict_edges():
    single = A.zeno_verdict([(1, 0.0)], 1, 1e-3, 100)
    assert single.ok and np.isinf(single.min_gap[0]) and single.reduction[0] == 1.0
    dt, steps = 1e-3, 50
    every = [(1, k * dt) for k in range(steps + 1)]
    v = A.zeno_verdict(every, 1, 1e-4, steps)
    assert v.reduction[0] == 0.0 and v.triggers[0] == steps
    assert v.min_gap[0] == pytest.approx(dt)
    assert v.ok
    assert not A.zeno_verdict(every, 1, 2e-3, steps).ok
    with pytest.raises(ValueError):
        A.zeno_verdict([], 1, 1e-3, 0)


def test_lyapunov_verdict():
    tr = synth(np.zeros((3, 2)), V=[[0.0, 1.0], [24.4, 0.0], [0.0, 0.0]])
    v = A.lyapunov_verdict(tr, 7.0)
    assert v.bound == 24.5 and v.ok
    assert not A.lyapunov_verdict(tr, 6.9).ok


bounds_st = st.floats(0.01, 100.0)


@given(e=st.lists(st.floats(-10, 10), min_size=6, max_size=6), d1=bounds_st, d2=bounds_st)
@settings(max_examples=100, deadline=None)
def test_verdicts_monotone_in_bounds(e, d1, d2):
    lo, hi = min(d1, d2), max(d1, d2)
    tr = synth(np.array(e).reshape(3, 2), e1=np.array(e).reshape(3, 2), V=np.abs(np.array(e)).reshape(3, 2))
    assert A.string_stability_verdict(tr, hi).ok >= A.string_stability_verdict(tr, lo).ok
    assert A.closed_loop_verdict(tr, hi, 0.5).ok >= A.closed_loop_verdict(tr, lo, 0.5).ok
    assert A.eso_verdict(tr, hi).ok >= A.eso_verdict(tr, lo).ok
    assert A.lyapunov_verdict(tr, hi).ok >= A.lyapunov_verdict(tr, lo).ok
    ev = [(1, 0.0), (1, 0.3), (1, 0.31), (2, 0.0)]
    assert A.zeno_verdict(ev, 2, lo * 1e-3, 10).ok >= A.zeno_verdict(ev, 2, hi * 1e-3, 10).ok


def test_empty_trace_writes_header_only(tmp_path):
    tr = synth(np.zeros((0, 2)), t=np.zeros(0))
    path = A.write_trace_csv(tr, tmp_path / "trace.csv")
    lines = path.read_text().splitlines()
    assert lines == [",".join(A.trace_columns(2))]
    assert lines[0].startswith("t,p_1,p_2,v_1,v_2,a_1,a_2,e_1,e_2,u_1")
    back = A.read_trace(path)
    assert back.t.shape == (0,)


def test_three_row_round_trip(tmp_path, rng):
    n = 2
    sig = {k: rng.normal(size=(3, n)) * 1e3 for k in ("e", "u", "q", "q_hat", "e1", "psi", "V")}
    tr = synth(sig.pop("e"), t=[0.0, 1e-4, 2e-4], **sig)
    tr.p[:] = rng.normal(size=(3, n + 1)) * 50
    tr.events = [(1, 0.0), (2, 0.0), (2, 1.2345678901234567e-4)]
    A.export(tr, tmp_path, charts=False)
    back = A.read_trace(tmp_path)
    for name in A.EXPORT_SIGNALS:
        ref = tr[name][:, 1:] if name in ("p", "v", "a") else tr[name]
        got = back[name][:, 1:] if name in ("p", "v", "a") else back[name]
        expected = np.array([[float(f"{x:.9g}") for x in row] for row in ref])
        assert np.array_equal(got, expected)
    assert back.events == tr.events
    assert back.meta["delta"] == 7.0
    assert np.all(np.isnan(back.p[:, 0]))


def test_read_trace_rejects_foreign_files(tmp_path):
    bad = tmp_path / "x.csv"
    bad.write_text("time,a\n1,2\n")
    with pytest.raises(ValueError, match="not a trace file"):
        A.read_trace(bad)


def test_unwritable_path_is_named(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError, match="file"):
        A.export(synth(np.zeros((2, 1))), blocker / "out", charts=False)


def test_full_export_file_count(dsc_trace, default_scenario, bounds_of, tmp_path):
    files = A.export(dsc_trace, tmp_path, bounds_of(default_scenario), charts=True)
    charts = sorted(tmp_path.glob("e_*.svg"))
    assert len(charts) == 8 and len(list(tmp_path.glob("*.csv"))) == 2
    assert set(files) >= {"trace", "events", "meta"}
    svg = charts[0].read_text()
    assert "t (s)" in svg and "<svg" in svg
    meta = json.loads((tmp_path / A.META_FILE).read_text())
    assert meta["bounds"]["M"] == [100.0] * 8


def test_report_recomputed_from_files(default_scenario, bounds_of, tmp_path):
    sc = default_scenario
    tr = run(sc, horizon=3.0, record_stride=10)
    bounds = bounds_of(sc)
    A.export(tr, tmp_path, bounds, charts=False)
    live = A.build_report(tr, bounds, window=1.0)
    saved = A.report_from_files(tmp_path, window=1.0)
    assert saved.verdicts == live.verdicts
    np.testing.assert_allclose(saved.string.sup_e, live.string.sup_e, rtol=1e-8)
    assert np.array_equal(saved.zeno.min_gap, live.zeno.min_gap)
    # the leader pulse starts at 6 s, so a 1 s window ending at 3 s is admissible
    assert saved.closed_loop is not None


def test_report_text_lists_each_verdict(dsc_trace, default_scenario, bounds_of):
    rep = A.build_report(dsc_trace, bounds_of(default_scenario))
    text = rep.to_text()
    for key in ("string_stable", "closed_loop_ok", "eso_bounded", "zeno_free", "lyapunov_bounded"):
        assert f"{key}=" in text
    assert text.splitlines()[-1].startswith("overall=")


def test_peak_table(dsc_trace, baseline_trace):
    table = A.peak_table(dsc_trace, baseline_trace)
    assert table.splitlines()[0] == "vehicle peak_e_dsc peak_e_baseline baseline_larger"
    assert len(table.splitlines()) == 10
