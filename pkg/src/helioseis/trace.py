"""Smoothed wave trace and its singular support.

The trace is ``sum (2l+1) cos(t omega) exp(-(omega/Omega)^2)`` over a finite
mode set.  Its peaks sit at periods of closed broken rays; the relative
height of a peak is predicted from the ray geometry.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import lsp, rays
from .errors import ValidationError
from .modes import Mode, ModeSet
from .model import RadialModel

_CHUNK = 256


@dataclass(frozen=True)
class TraceSeries:
    """Sampled trace.  ``envelope`` is ``|sum w exp(i t omega)|`` (same window)."""

    t: np.ndarray
    values: np.ndarray
    window: float
    cutoffs: dict
    provenance: dict = field(default_factory=dict)
    envelope: np.ndarray | None = None

    def __post_init__(self):
        if self.t.ndim != 1 or self.t.size != self.values.size:
            raise ValidationError("t and values must be 1-D of equal length")
        if self.t.size > 1 and np.any(np.diff(self.t) <= 0):
            raise ValidationError("t grid must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("trace values must be finite")


def _mode_arrays(modes):
    if isinstance(modes, ModeSet):
        return modes.omega, modes.weights, dict(modes.provenance)
    if isinstance(modes, tuple) and len(modes) == 2:
        w, g = (np.asarray(a, dtype=float) for a in modes)
        return w, g, {"source": "arrays"}
    modes = list(modes)
    if modes and isinstance(modes[0], Mode):
        return (np.array([m.omega for m in modes]), np.array([m.degeneracy for m in modes]),
                {"source": "modes"})
    raise ValidationError("modes must be a ModeSet, a list of Mode or (omega, weight)")


def synth_trace(modes, t_grid, window: float, envelope: bool = True) -> TraceSeries:
    """Exact windowed mode sum on ``t_grid`` (no FFT)."""
    omega, weight, prov = _mode_arrays(modes)
    if omega.size == 0:
        raise ValidationError("empty mode set")
    if not window > 0:
        raise ValidationError("window must be positive")
    t = np.asarray(t_grid, dtype=float)
    amp = weight * (np.exp(-(omega / window) ** 2) if np.isfinite(window) else 1.0)
    re = np.empty(t.size)
    im = np.empty(t.size) if envelope else None
    for i in range(0, t.size, _CHUNK):
        ph = np.outer(t[i:i + _CHUNK], omega)
        re[i:i + _CHUNK] = np.cos(ph) @ amp
        if envelope:
            im[i:i + _CHUNK] = np.sin(ph) @ amp
    cutoffs = {k: prov[k] for k in ("l_max", "omega_max") if k in prov}
    cutoffs["n_modes"] = int(omega.size)
    return TraceSeries(t=t, values=re, window=float(window), cutoffs=cutoffs, provenance=prov,
                       envelope=np.hypot(re, im) if envelope else None)


def detect_peaks(trace: TraceSeries, threshold: float, use_envelope: bool = False):
    """Local maxima of ``|values|`` (or of the envelope) above ``threshold * max``.

    Each maximum is refined by a parabola through the sample and its two
    neighbours.  Returns ``[(t_peak, height), ...]`` sorted by time.
    """
    y = trace.envelope if use_envelope else np.abs(trace.values)
    if y is None:
        raise ValidationError("trace has no envelope")
    if y.size < 3:
        return []
    top = float(np.max(y))
    cut = threshold * top
    i = np.nonzero((y[1:-1] > y[:-2]) & (y[1:-1] >= y[2:]) & (y[1:-1] > cut))[0] + 1
    t = trace.t
    out = []
    for j in i:
        y0, y1, y2 = y[j - 1], y[j], y[j + 1]
        den = y0 - 2 * y1 + y2
        shift = 0.5 * (y0 - y2) / den if den != 0 else 0.0
        shift = float(np.clip(shift, -1.0, 1.0))
        h = t[j + 1] - t[j] if shift >= 0 else t[j] - t[j - 1]
        out.append((float(t[j] + shift * h), float(y1 - 0.25 * (y0 - y2) * shift)))
    return out


@dataclass(frozen=True)
class SingularityPrediction:
    """Predicted trace singularity at ``T = q T_sharp`` of one orbit.

    ``N`` is the caustic count of the Debye branch that closes ``q n`` legs;
    ``maslov = N - (1 - sign)/2`` with ``sign`` the sign of the second
    ``p``-derivative of the leg delay.  ``amplitude`` is
    ``(T_sharp / n) |p^-1 d^2 tau_leg / dp^2|^{-1/2}`` or ``None`` when the
    orbit is degenerate or sits on a regime boundary.  ``amplitude_sum``
    is the weight that stationary phase gives when the mode sum over
    ``l`` is turned into an integral over ``p`` (the ``2l+1`` weight
    contributes a factor ``p``, and ``q n`` legs a factor ``(q n)^{-1/2}``):
    ``(T_sharp / n) p |q n d^2 tau_leg / dp^2|^{-1/2}``.
    """

    orbit: lsp.PeriodicOrbit
    q: int
    T: float
    N: int
    sign: int
    maslov: int
    d2tau: float
    poincare: float | None
    amplitude: float | None
    amplitude_sum: float | None = None
    note: str = ""


def leg_delay_d2(model: RadialModel, regime, p, h=None):
    """Centred second difference of ``tau_2(1, 1; p)`` in ``p``."""
    lo, hi = _window(model, regime)
    if h is None:
        h = min(1e-4, 0.3 * (p - lo) if p > lo else 1e-4, 0.3 * (hi - p))
    f = [rays.leg_delay(model, regime, p + s * h) for s in (-1, 0, 1)]
    return (f[0] - 2 * f[1] + f[2]) / (h * h)


def _window(model, regime):
    if regime == rays.DIVING:
        lo = 0.0 if model.R == 0 else model.p_inner + rays.P_MARGIN
        return lo, model.p_outer - rays.P_MARGIN
    return 0.0, model.p_inner - rays.P_MARGIN


def predict_singularities(model: RadialModel, orbits, t_max: float, degenerate_tol=1e-8):
    """Predictions for every orbit repetition with ``q T_sharp <= t_max``."""
    out = []
    for q, orb, T in lsp.multiples(orbits, t_max):
        N = rays.caustic_index(orb.kind, 4 * q * orb.n) if orb.kind == rays.DIVING else 0
        if orb.limit or orb.p <= 0.0:
            out.append(SingularityPrediction(orb, q, T, N, 0, N, float("nan"), None, None,
                                             None, note="boundary orbit: amplitude formula singular at p=0"))
            continue
        d2 = leg_delay_d2(model, orb.kind, orb.p)
        if abs(d2) < degenerate_tol or orb.stability != "stable":
            out.append(SingularityPrediction(orb, q, T, N, 0, N, d2, None, None,
                                             None, note="degenerate: second derivative vanishes"))
            continue
        sign = 1 if d2 > 0 else -1
        poincare = abs(d2 / orb.p) ** -0.5
        amp = orb.T_sharp / orb.n * poincare
        amp_sum = orb.T_sharp / orb.n * orb.p * abs(q * orb.n * d2) ** -0.5
        out.append(SingularityPrediction(orb, q, T, N, sign, N - (1 - sign) // 2, d2,
                                         poincare, amp, amp_sum))
    return out


def isolated(predictions, sep: float):
    """Predictions whose period is farther than ``sep`` from every other one."""
    T = np.array([p.T for p in predictions])
    keep = []
    for i, p in enumerate(predictions):
        others = np.delete(T, i)
        if others.size == 0 or np.min(np.abs(others - p.T)) > sep:
            keep.append(p)
    return keep


def match_report(predictions, peaks, tol_t: float, isolation: float | None = None):
    """Pair predictions with peaks.

    Returns a dict with ``matched`` (prediction, peak) pairs, ``missing``
    predictions, ``unexplained`` peaks and an amplitude table for matched
    isolated predictions.  Measured heights are scaled by one calibration
    constant (least squares through the origin) since the absolute
    prefactor is not fixed.
    """
    peaks = list(peaks)
    pt = np.array([p[0] for p in peaks]) if peaks else np.zeros(0)
    matched, missing = [], []
    for pred in predictions:
        if pt.size:
            j = int(np.argmin(np.abs(pt - pred.T)))
            if abs(pt[j] - pred.T) <= tol_t and tol_t > 0:
                matched.append((pred, peaks[j]))
                continue
        missing.append(pred)
    T = np.array([p.T for p in predictions])
    unexplained = [pk for pk in peaks
                   if T.size == 0 or not (tol_t > 0 and np.min(np.abs(T - pk[0])) <= tol_t)]
    sep = 2 * tol_t if isolation is None else isolation
    iso = {id(p) for p in isolated(predictions, sep)}
    rows = [(pred, pk) for pred, pk in matched if id(pred) in iso and pred.amplitude is not None]
    table = []
    if rows:
        a = np.array([pred.amplitude for pred, _ in rows])
        h = np.array([pk[1] for _, pk in rows])
        scale = float(a @ h / (a @ a))
        for (pred, pk), ai, hi in zip(rows, a, h):
            table.append({"T": pred.T, "kind": pred.orbit.kind, "m": pred.orbit.m,
                          "n": pred.orbit.n, "q": pred.q, "predicted": float(ai),
                          "measured": float(hi / scale), "height": float(hi),
                          "predicted_sum": pred.amplitude_sum})
    return {"matched": matched, "missing": missing, "unexplained": unexplained,
            "amplitudes": table}
