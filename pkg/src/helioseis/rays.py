"""Ray kinematics in a radial medium.

All ray integrals run from a lower radius ``a`` (a turning point ``R*`` or the
inner boundary ``R``) to an upper radius ``b``.  Writing ``s = a + (b-a) u^2``
turns the inverse square-root singularity of ``1/beta`` at a turning point
into a bounded, smooth integrand in ``u``; the integrals are then evaluated
with double-exponential quadrature, vectorized over rays.

``beta(r; p) = sqrt(c(r)^-2 - p^2 / r^2) = sqrt(rho(r)^2 - p^2) / r`` with the
Herglotz coordinate ``rho = r / c``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import partial

import numpy as np
from scipy.integrate import solve_ivp, tanhsinh
from scipy.optimize import brentq

from .errors import DomainError, ImaginaryRegime, QuadratureError, RegimeError
from .model import RadialModel

RTOL = 1e-13
# tanhsinh can stop early on a lucky agreement between coarse levels;
# forcing four refinements removes the rare 1e-9 outliers.
MIN_LEVEL = 4
# Regime boundaries p = R/c(R) and p = 1/c(1) are excluded by this margin.
P_MARGIN = 1e-9
DIVING, REFLECTING = "diving", "reflecting"


# --------------------------------------------------------------------------
# Vectorized core
# --------------------------------------------------------------------------


_GL_X, _GL_W = np.polynomial.legendre.leggauss(6)
_GL_X, _GL_W = 0.5 * (_GL_X + 1.0), 0.5 * _GL_W
_SMALL_STEP = 1e-3


def _rho_diff(model, base, delta):
    """``rho(base + delta) - rho(base)`` without cancellation for small delta.

    Short steps integrate the analytic ``rho'`` with Gauss-Legendre; long
    steps use ``(delta c(b) - b (c(b+delta) - c(b))) / (c(b+delta) c(b))``.
    """
    base, delta = np.broadcast_arrays(np.asarray(base, float), np.asarray(delta, float))
    s = base + delta
    cb = model.c(base)
    cs = model.c(s)
    out = (delta * cb - base * (cs - cb)) / (cs * cb)
    small = delta < _SMALL_STEP
    if np.any(small):
        b, d = base[small], delta[small]
        pts = b[:, None] + d[:, None] * _GL_X[None, :]
        out = np.array(out, dtype=float, copy=True)
        out[small] = d * (model.drho(pts) @ _GL_W)
    return out


def _kernel(model, kind, weight, u, lower, span, p, gap):
    """Integrand in ``u`` for the substitution ``s = lower + span u^2``."""
    u2 = u * u
    delta = span * u2
    s = lower + delta
    d = _rho_diff(model, lower, delta) + gap      # rho(s) - p >= 0
    d = np.maximum(d, 0.0)
    rho_s = s / model.c(s)
    G = d * (rho_s + p)                          # rho(s)^2 - p^2
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = u / np.sqrt(G)
    if np.any(~np.isfinite(ratio)):
        # u -> 0 at a turning point: G ~ 2 p rho'(a) span u^2
        lim = 1.0 / np.sqrt(np.maximum(2.0 * p * model.drho(lower) * span, 1e-300))
        ratio = np.where(np.isfinite(ratio), ratio, lim)
    jac = 2.0 * span
    if kind == "phase":
        out = jac * u * np.sqrt(G) / s
    elif kind == "angle":
        out = jac * p * ratio / s
    elif kind == "time":
        out = jac * s * ratio / model.c(s) ** 2
    elif kind == "dangle":
        # d/dp of the angle integral with fixed lower limit (reflecting rays)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = jac * u * s / (model.c(s) ** 2 * G ** 1.5)
    elif kind == "abel":
        out = jac * s * ratio / model.c(s) ** 2 * weight(s)
    else:
        raise ValueError(kind)
    return out


def ray_integral(model: RadialModel, kind, lower, upper, p, gap=0.0, weight=None,
                 rtol=RTOL):
    """Vectorized ray integral from ``lower`` to ``upper`` at ray parameter ``p``.

    ``kind`` selects the integrand in ``s``:

    * ``"phase"``: ``beta``
    * ``"angle"``: ``p / (s^2 beta)``
    * ``"time"``:  ``1 / (c^2 beta)``
    * ``"dangle"``: ``s / (c^2 (rho^2 - p^2)^{3/2})``
    * ``"abel"``:  ``weight(s) / (c^2 beta)``

    ``gap`` is ``rho(lower) - p`` (zero when ``lower`` is the turning point);
    passing it explicitly keeps ``rho(s) - p`` accurate near grazing.
    """
    lower, upper, p, gap = np.broadcast_arrays(
        np.asarray(lower, float), np.asarray(upper, float),
        np.asarray(p, float), np.asarray(gap, float))
    span = upper - lower
    out = np.zeros(lower.shape)
    live = span > 0
    if not np.any(live):
        return out[()] if out.ndim == 0 else out
    res = tanhsinh(partial(_kernel, model, kind, weight), 0.0, 1.0,
                   args=(lower[live], span[live], p[live], gap[live]),
                   rtol=rtol, atol=1e-300, minlevel=MIN_LEVEL, maxlevel=14)
    integral = res.integral
    bad = res.status != 0
    if kind == "abel" and np.any(bad):
        integral, bad = _abel_retry(model, weight, lower[live], span[live], p[live], gap[live],
                                    integral, bad, rtol)
    if np.any(bad):
        raise QuadratureError(
            f"{kind} integral did not converge for {int(np.sum(bad))} ray(s) "
            f"(status {np.unique(res.status[bad]).tolist()})")
    out[live] = integral
    return out[()] if out.ndim == 0 else out


def _abel_retry(model, weight, lower, span, p, gap, integral, bad, rtol):
    """Re-run sign-changing Abel integrals with an absolute tolerance.

    A relative tolerance cannot be met when positive and negative parts of
    the weight nearly cancel; the tolerance is then taken relative to the
    integral of ``|weight|``.
    """
    integral = np.array(integral, dtype=float, copy=True)
    bad = np.array(bad, copy=True)
    idx = np.nonzero(bad)[0]
    args = (lower[idx], span[idx], p[idx], gap[idx])
    absolute = partial(_kernel, model, "abel", lambda s: np.abs(weight(s)))
    scale = tanhsinh(absolute, 0.0, 1.0, args=args, rtol=1e-8, atol=1e-300,
                     minlevel=MIN_LEVEL, maxlevel=14).integral
    for j, i in enumerate(idx):
        one = tuple(a[j] for a in args)
        res = tanhsinh(partial(_kernel, model, "abel", weight), 0.0, 1.0, args=one,
                       rtol=rtol, atol=rtol * max(float(scale[j]), 1e-300),
                       minlevel=MIN_LEVEL, maxlevel=14)
        if res.status == 0:
            integral[i] = res.integral
            bad[i] = False
    return integral, bad


# --------------------------------------------------------------------------
# Pointwise quantities
# --------------------------------------------------------------------------


def beta(model: RadialModel, r, p):
    """``sqrt(c^-2 - p^2/r^2)``; raises :class:`ImaginaryRegime` where it is imaginary."""
    r = model.check_domain(r)
    rho = model.rho(r)
    b2 = (rho - p) * (rho + p)
    scale = np.maximum(rho * rho, p * p)
    if np.any(b2 < -1e-14 * scale):
        raise ImaginaryRegime(f"beta^2 < 0 at r={r}, p={p}: evanescent")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.sqrt(np.maximum(b2, 0.0)) / r
    return out[()] if np.ndim(out) == 0 else out


def beta_squared(model: RadialModel, r, p):
    r = np.asarray(r, dtype=float)
    return model.c(r) ** -2 - (p / r) ** 2


def diving_window(model: RadialModel):
    """Open interval of ray parameters for rays turning inside ``(R, 1)``."""
    return model.p_inner, model.p_outer


def reflecting_window(model: RadialModel):
    return 0.0, model.p_inner


def _check_diving(model, p):
    lo, hi = diving_window(model)
    p = np.asarray(p, dtype=float)
    low_ok = p > lo + P_MARGIN if model.R > 0 else p >= 0.0
    if np.any(~low_ok) or np.any(p >= hi - P_MARGIN):
        raise RegimeError(f"ray parameter {p} outside diving window ({lo:.12g}, {hi:.12g})")


def invert_rho(model: RadialModel, p, lo=None):
    """Radius where ``r/c(r) = p`` (vectorized bisection then Newton polish)."""
    p = np.asarray(p, dtype=float)
    a = np.full(p.shape, model.R if lo is None else lo)
    b = np.ones(p.shape)
    for _ in range(60):
        mid = 0.5 * (a + b)
        below = model.rho(mid) < p
        a = np.where(below, mid, a)
        b = np.where(below, b, mid)
    r = 0.5 * (a + b)
    for _ in range(2):
        step = (model.rho(r) - p) / model.drho(r)
        r = np.clip(r - step, model.R, 1.0)
    return r[()] if r.ndim == 0 else r


def turning_radius(model: RadialModel, p):
    """Turning radius ``R*`` of a diving ray: ``beta(R*, p) = 0``."""
    _check_diving(model, p)
    if model.R == 0.0 and np.ndim(p) == 0 and p == 0.0:
        return 0.0
    return invert_rho(model, p)


# --------------------------------------------------------------------------
# Geodesic summaries
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GeodesicSummary:
    r_tip: float
    p: float
    R_star: float
    alpha: float
    L: float
    alpha_prime: float


def _check_tip(model, r):
    r = np.asarray(r, dtype=float)
    if np.any(r <= model.R) or np.any(r >= 1.0):
        raise DomainError(f"tip radius must lie in ({model.R}, 1)")
    return r


def alpha(model: RadialModel, r_tip, rtol=RTOL):
    """Half epicentral angle of the maximal geodesic with tip at ``r_tip``."""
    r = np.asarray(r_tip, dtype=float)
    return ray_integral(model, "angle", r, 1.0, model.rho(r), rtol=rtol)


def half_length(model: RadialModel, r_tip, rtol=RTOL):
    """Half travel time ``L`` of the maximal geodesic with tip at ``r_tip``."""
    r = np.asarray(r_tip, dtype=float)
    return ray_integral(model, "time", r, 1.0, model.rho(r), rtol=rtol)


_CHEB_ORDER = 12


def alpha_prime(model: RadialModel, r_tip, rel_width=0.25, max_width=0.02):
    """``d alpha / d r_tip`` by differentiating a local Chebyshev interpolant.

    ``alpha`` is sampled on Chebyshev points of an interval centred on each
    radius whose half width stays well inside ``(R, 1)``; the interpolant is
    differentiated at the centre.
    """
    r = np.atleast_1d(np.asarray(r_tip, dtype=float))
    h = np.minimum(rel_width * np.minimum(r - model.R, 1.0 - r), max_width)
    k = np.arange(_CHEB_ORDER + 1)
    x = np.cos(np.pi * (k + 0.5) / (_CHEB_ORDER + 1))   # Chebyshev-Gauss nodes
    nodes = r[:, None] + h[:, None] * x[None, :]
    vals = alpha(model, nodes)
    out = np.empty(r.shape)
    for j in range(r.size):
        cheb = np.polynomial.Chebyshev.fit(x, vals[j], _CHEB_ORDER)
        out[j] = cheb.deriv()(0.0) / h[j]
    return out[0] if np.ndim(r_tip) == 0 else out


def geodesic_summary(model: RadialModel, r_tip) -> GeodesicSummary:
    """Angular momentum, angle, half length and ``alpha'`` for one tip radius."""
    r = float(_check_tip(model, r_tip))
    p = float(model.rho(r))
    a = float(alpha(model, r))
    L = float(half_length(model, r))
    ap = float(alpha_prime(model, r))
    return GeodesicSummary(r_tip=r, p=p, R_star=r, alpha=a, L=L, alpha_prime=ap)


def geodesic_table(model: RadialModel, r_tips):
    """Vectorized :func:`geodesic_summary`: dict of arrays."""
    r = _check_tip(model, np.asarray(r_tips, dtype=float))
    p = model.rho(r)
    return {
        "r_tip": r,
        "p": p,
        "R_star": r.copy(),
        "alpha": alpha(model, r),
        "L": half_length(model, r),
        "alpha_prime": alpha_prime(model, r),
    }


# --------------------------------------------------------------------------
# Rays reflecting at the inner boundary
# --------------------------------------------------------------------------


def _check_reflecting(model, z, allow_zero=False):
    z = np.asarray(z, dtype=float)
    if model.R <= 0.0:
        raise RegimeError("reflecting rays need an inner boundary (R > 0)")
    lo_ok = z >= 0.0 if allow_zero else z > 0.0
    if np.any(~lo_ok) or np.any(z >= model.p_inner - P_MARGIN):
        raise RegimeError(f"angular momentum {z} outside reflecting window (0, {model.p_inner:.12g})")
    return z


def reflecting_angle(model: RadialModel, z):
    """Angle swept by one ``R -> 1`` segment at angular momentum ``z``.

    Returns ``(B, dB/dz)``; both are vectorized over ``z``.
    """
    z = _check_reflecting(model, z)
    gap = model.p_inner - z
    B = ray_integral(model, "angle", model.R, 1.0, z, gap=gap)
    dB = ray_integral(model, "dangle", model.R, 1.0, z, gap=gap)
    return B, dB


def reflecting_segment_time(model: RadialModel, z):
    """Travel time of one ``R -> 1`` segment at angular momentum ``z``."""
    z = _check_reflecting(model, z, allow_zero=True)
    return ray_integral(model, "time", model.R, 1.0, z, gap=model.p_inner - z)


def invert_reflecting_angle(model: RadialModel, target, xtol=1e-15):
    """Angular momentum ``z`` with ``B(z) = target`` (``B`` is increasing)."""
    if model.R <= 0.0:
        raise RegimeError("reflecting rays need an inner boundary (R > 0)")
    z_hi = model.p_inner - 2 * P_MARGIN
    B_hi = float(reflecting_angle(model, z_hi)[0])
    if not 0.0 < target < B_hi:
        return None
    return brentq(lambda z: float(reflecting_angle(model, z)[0]) - target,
                  1e-300, z_hi, xtol=xtol, rtol=4 * np.finfo(float).eps)


# --------------------------------------------------------------------------
# Debye delays
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DebyeDelay:
    regime: str
    i: int
    tau: float
    N: int


def _lower_limit(model, regime, p):
    if regime == DIVING:
        return float(turning_radius(model, p)), 0.0
    if regime == REFLECTING:
        if not 0.0 <= p < model.p_inner - P_MARGIN:
            raise RegimeError(f"p={p} outside reflecting window [0, {model.p_inner:.12g})")
        return model.R, model.p_inner - p
    raise ValueError(f"unknown regime {regime!r}")


def partial_phase(model: RadialModel, regime, x, p):
    """``int_a^x beta(s; p) ds`` with ``a`` = ``R*`` (diving) or ``R`` (reflecting)."""
    lower, gap = _lower_limit(model, regime, p)
    x = np.asarray(x, dtype=float)
    if np.any(x < lower - 1e-12) or np.any(x > 1.0 + 1e-12):
        raise DomainError(f"radius outside [{lower:.12g}, 1]")
    return ray_integral(model, "phase", lower, np.clip(x, lower, 1.0), p, gap=gap)


def caustic_index(regime, i):
    """KMAH increment ``N_i``: diving 0, 1, 0, 1, then +1 every four; reflecting 0."""
    if i < 1:
        raise ValueError("Debye branch index starts at 1")
    if regime == REFLECTING:
        return 0
    return (0, 1, 0, 1)[(i - 1) % 4] + (i - 1) // 4


def debye_delay(model: RadialModel, regime, i, r, r0, p) -> DebyeDelay:
    """Delay ``tau_i(r, r0; p)`` and caustic count ``N_i`` of Debye branch ``i``."""
    if i < 1:
        raise ValueError("Debye branch index starts at 1")
    lower, gap = _lower_limit(model, regime, p)
    pts = np.array([r, r0, 1.0], dtype=float)
    if np.any(pts < lower - 1e-12):
        raise DomainError(f"r, r0 must lie in [{lower:.12g}, 1]")
    F_r, F_r0, total = ray_integral(model, "phase", lower, np.clip(pts, lower, 1.0), p, gap=gap)
    base = (i - 1) % 4
    if base == 0:
        tau = abs(F_r - F_r0)
    elif base == 1:
        tau = F_r + F_r0
    elif base == 2:
        tau = (total - F_r0) + (total - F_r)
    else:
        tau = 2.0 * total - abs(F_r - F_r0)
    tau += 2.0 * total * ((i - 1) // 4)
    return DebyeDelay(regime=regime, i=int(i), tau=float(tau), N=caustic_index(regime, i))


def leg_delay(model: RadialModel, regime, p):
    """``tau_2(1, 1; p)``: the delay of one surface-to-surface leg."""
    lower, gap = _lower_limit(model, regime, p)
    return 2.0 * float(ray_integral(model, "phase", lower, 1.0, p, gap=gap))


# --------------------------------------------------------------------------
# Ray paths
# --------------------------------------------------------------------------


def _ray_rhs(model):
    def rhs(t, y):
        r, theta, pr, p = y
        c = float(model.c(r))
        dc = float(model.dc(r))
        k2 = pr * pr + p * p / (r * r)
        return [c * c * pr, c * c * p / (r * r), -c * dc * k2 + c * c * p * p / r ** 3, 0.0]
    return rhs


def _integrate_out(model, r0, pr0, p, rtol=1e-12, atol=1e-14):
    hit = lambda t, y: y[0] - 1.0  # noqa: E731
    hit.terminal, hit.direction = True, 1
    t_max = 10.0 * (1.0 - model.R + 1.0) * float(np.max(model.c(np.linspace(model.R, 1, 64))) ** -1)
    sol = solve_ivp(_ray_rhs(model), (0.0, t_max), [r0, 0.0, pr0, p], method="DOP853",
                    rtol=rtol, atol=atol, dense_output=True, events=hit)
    if sol.status != 1:
        raise QuadratureError("ray did not reach the outer boundary")
    return sol, float(sol.t_events[0][0])


def ray_states(model: RadialModel, kind, parameter, samples=201):
    """Sampled phase-space states ``(t, r, theta, p_r)`` along a ray.

    ``kind="diving"``: ``parameter`` is the tip radius; the path runs over
    ``[-L, L]`` with the tip at ``t = 0, theta = 0`` (the half path is
    integrated outward from the tip and mirrored).

    ``kind="reflecting"``: ``parameter`` is the angular momentum ``z``; the
    path leaves the inner boundary at ``t = 0, theta = 0`` and ends on the
    outer boundary.
    """
    if kind == DIVING:
        r_tip = float(_check_tip(model, parameter))
        p = float(model.rho(r_tip))
        sol, T = _integrate_out(model, r_tip, 0.0, p)
        half = samples // 2 + 1
        t = np.linspace(0.0, T, half)
        r, theta, pr = sol.sol(t)[:3]
        return np.column_stack([
            np.concatenate([-t[:0:-1], t]),
            np.concatenate([r[:0:-1], r]),
            np.concatenate([-theta[:0:-1], theta]),
            np.concatenate([-pr[:0:-1], pr]),
        ])
    if kind == REFLECTING:
        z = float(_check_reflecting(model, parameter, allow_zero=True))
        pr0 = float(np.sqrt(model.c(model.R) ** -2 - (z / model.R) ** 2))
        sol, T = _integrate_out(model, model.R, pr0, z)
        t = np.linspace(0.0, T, samples)
        r, theta, pr = sol.sol(t)[:3]
        return np.column_stack([t, r, theta, pr])
    raise ValueError(f"unknown ray kind {kind!r}")


def ray_path(model: RadialModel, kind, parameter, samples=201):
    """Sampled ray ``(t, r, theta)``; see :func:`ray_states`."""
    return ray_states(model, kind, parameter, samples)[:, :3]


def path_invariants(model: RadialModel, states, p):
    """Max unit-speed and angular-momentum residuals over sampled states."""
    _, r, _, pr = np.asarray(states).T
    c = model.c(r)
    rdot = c * c * pr
    thdot = c * c * p / (r * r)
    speed = (rdot ** 2 + r ** 2 * thdot ** 2) / c ** 2
    momentum = r ** 2 * thdot / c ** 2
    return float(np.max(np.abs(speed - 1.0))), float(np.max(np.abs(momentum - p)))
