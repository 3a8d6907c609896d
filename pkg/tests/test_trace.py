from __future__ import annotations

import numpy as np
import pytest

from helioseis import lsp, modes, rays, trace
from helioseis.errors import ValidationError


def test_single_mode_closed_form():
    t = np.linspace(0, 3, 301)
    tr = trace.synth_trace((np.array([2.0, 5.0]), np.array([3.0, 1.0])), t, window=4.0)
    exact = 3 * np.exp(-0.25) * np.cos(2 * t) + np.exp(-25 / 16) * np.cos(5 * t)
    np.testing.assert_allclose(tr.values, exact, atol=1e-13)
    env = np.abs(3 * np.exp(-0.25) * np.exp(2j * t) + np.exp(-25 / 16) * np.exp(5j * t))
    np.testing.assert_allclose(tr.envelope, env, atol=1e-13)
    assert tr.cutoffs["n_modes"] == 2


def test_synth_accepts_mode_lists(const_ball):
    ms = [modes.solve_omega(const_ball, "diving", n, 0.5, l=0) for n in range(3)]
    t = np.linspace(0, 1, 11)
    a = trace.synth_trace(ms, t, np.inf)
    b = trace.synth_trace((np.array([m.omega for m in ms]), np.ones(3)), t, np.inf)
    np.testing.assert_allclose(a.values, b.values)
    with pytest.raises(ValidationError):
        trace.synth_trace(ms, t, -1.0)
    with pytest.raises(ValidationError):
        trace.synth_trace([], t, 1.0)
    with pytest.raises(ValidationError):
        trace.TraceSeries(t=np.array([0.0, 0.0]), values=np.zeros(2), window=1.0, cutoffs={})


def test_peak_refinement():
    t = np.linspace(0, 10, 1001)
    y = np.exp(-((t - 3.0037) / 0.05) ** 2) + 0.5 * np.exp(-((t - 7.2) / 0.05) ** 2)
    tr = trace.TraceSeries(t=t, values=y, window=1.0, cutoffs={})
    peaks = trace.detect_peaks(tr, 0.1)
    assert len(peaks) == 2
    assert peaks[0][0] == pytest.approx(3.0037, abs=2e-4)
    assert peaks[1][1] == pytest.approx(0.5, rel=1e-2)
    assert len(trace.detect_peaks(tr, 0.6)) == 1


def test_leg_delay_second_derivative(const_ball):
    for p in (0.3, 0.6):
        d2 = trace.leg_delay_d2(const_ball, rays.DIVING, p)
        assert d2 == pytest.approx(2 / np.sqrt(1 - p * p), rel=1e-5)


def test_predictions_constant_ball(const_ball):
    orbits = lsp.enumerate_lsp(const_ball, 6)
    preds = trace.predict_singularities(const_ball, orbits, 12.0)
    assert [p.T for p in preds] == sorted(p.T for p in preds)
    tri = next(p for p in preds if (p.orbit.m, p.orbit.n, p.q) == (1, 3, 1))
    P = 0.5
    d2 = 2 / np.sqrt(1 - P * P)
    assert tri.sign == 1 and tri.N == rays.caustic_index(rays.DIVING, 12)
    assert tri.maslov == tri.N
    assert tri.amplitude == pytest.approx(tri.orbit.T_sharp / 3 * (d2 / P) ** -0.5, rel=1e-5)
    assert tri.amplitude_sum == pytest.approx(tri.orbit.T_sharp / 3 * P * (3 * d2) ** -0.5, rel=1e-5)
    diam = [p for p in preds if p.orbit.limit]
    assert diam and all(p.amplitude is None and p.note for p in diam)


def test_isolated_and_match():
    orb = lsp.PeriodicOrbit("diving", 1, 3, 0.5, 0.5, 1.0, -1.0, "stable")
    mk = lambda T: trace.SingularityPrediction(orb, 1, T, 0, 1, 0, 1.0, 1.0, 2.0)  # noqa: E731
    preds = [mk(1.0), mk(1.05), mk(3.0)]
    assert [p.T for p in trace.isolated(preds, 0.1)] == [3.0]
    peaks = [(1.02, 5.0), (3.01, 4.0), (6.0, 9.0)]
    rep = trace.match_report(preds, peaks, 0.05)
    assert len(rep["matched"]) == 3 and rep["missing"] == []
    assert rep["unexplained"] == [(6.0, 9.0)]
    assert [row["T"] for row in rep["amplitudes"]] == [3.0]
    assert rep["amplitudes"][0]["measured"] == pytest.approx(2.0)


@pytest.mark.slow
def test_small_trace_singular_support(const_shell):
    # reduced version of the acceptance run: lower cutoffs, coarser peaks
    ms = modes.mode_set(const_shell, 120, 160.0)
    t = np.arange(2.0, 6.2, 0.004)
    tr = trace.synth_trace(ms, t, 60.0)
    orbits = lsp.enumerate_all(const_shell, 10)
    preds = [p for p in trace.predict_singularities(const_shell, orbits, t[-1]) if p.T >= t[0]]
    tol = 2 * np.pi / 60.0
    rep = trace.match_report(preds, trace.detect_peaks(tr, 0.1), tol)
    tri = [m for m, _ in rep["matched"] if (m.orbit.m, m.orbit.n, m.orbit.kind) == (1, 3, "diving")]
    assert tri, "triangle orbit not seen"
    assert rep["unexplained"] == []
