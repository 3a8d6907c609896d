"""WKB eigenfrequencies and eigenfunctions.

Two regimes are quantized:

* diving, turning point ``R*`` inside ``(R, 1)``:
  ``omega * int_{R*}^1 beta(r; k/omega) dr = (n + 5/4) pi``
* reflecting off ``r = R`` (``p < R/c(R)``):
  ``omega * int_R^1 beta(r; k/omega) dr = (n + 1) pi``

With ``p = k/omega`` each condition becomes ``k Phi(p) = theta p`` where
``Phi`` is the radial phase integral, which is solved for ``p`` by a
bracketing method on the regime window.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.integrate import tanhsinh
from scipy.optimize.elementwise import find_root
from scipy.special import airy

from . import rays
from .errors import DomainError, NoRootError, RegimeError
from .model import RadialModel

DIVING, REFLECTING = rays.DIVING, rays.REFLECTING
_OFFSET = {DIVING: 1.25, REFLECTING: 1.0}
_P_TOL = dict(xatol=1e-300, xrtol=4 * np.finfo(float).eps, fatol=0.0, frtol=0.0)


@dataclass(frozen=True)
class Mode:
    """One WKB mode.  ``l`` is set when the mode came from an angular order."""

    regime: str
    n: int
    k: float
    omega: float
    p: float
    norm_constant: float = float("nan")
    l: int | None = None

    @property
    def degeneracy(self) -> float:
        """``2l + 1``; with ``k = l + 1/2`` this is ``2k``."""
        return 2 * self.l + 1 if self.l is not None else 2.0 * self.k

    def to_dict(self):
        return asdict(self)


def target_phase(regime, n):
    """Right-hand side ``(n + 5/4) pi`` or ``(n + 1) pi``."""
    return (np.asarray(n, dtype=float) + _OFFSET[_regime(regime)]) * np.pi


def _regime(regime):
    if regime not in _OFFSET:
        raise ValueError(f"unknown regime {regime!r}")
    return regime


def p_window(model: RadialModel, regime):
    """Closed-open window of admissible ``p`` with the boundary margin applied."""
    if _regime(regime) == DIVING:
        lo = 0.0 if model.R == 0.0 else model.p_inner + rays.P_MARGIN
        return lo, model.p_outer - rays.P_MARGIN
    if model.R <= 0.0:
        raise RegimeError("reflecting regime needs R > 0")
    return 0.0, model.p_inner - rays.P_MARGIN


def _lower(model, regime, p):
    if regime == DIVING:
        if model.R == 0.0:
            lower = np.where(p > 0.0, rays.invert_rho(model, np.maximum(p, 1e-300)), 0.0)
        else:
            lower = rays.invert_rho(model, p)
        return lower, np.zeros_like(p)
    return np.full_like(p, model.R), model.p_inner - p


def phase_integral(model: RadialModel, regime, p):
    """``Phi(p) = int beta(r; p) dr`` over the oscillatory zone (vectorized)."""
    p = np.asarray(p, dtype=float)
    lower, gap = _lower(model, _regime(regime), p)
    return rays.ray_integral(model, "phase", lower, 1.0, p, gap=gap)


def half_time(model: RadialModel, regime, p):
    """``int beta^-1 c^-2 dr`` over the oscillatory zone: half the one-return time."""
    p = np.asarray(p, dtype=float)
    lower, gap = _lower(model, _regime(regime), p)
    return rays.ray_integral(model, "time", lower, 1.0, p, gap=gap)


def quantization_residual(model: RadialModel, regime, n, k, omega):
    """``(omega Phi(k/omega) - theta_n) / pi``."""
    p = np.asarray(k, dtype=float) / np.asarray(omega, dtype=float)
    return (np.asarray(omega) * phase_integral(model, regime, p) - target_phase(regime, n)) / np.pi


def _solve_p(model, regime, k, theta):
    """Vectorized root ``p`` of ``k Phi(p) - theta p`` in the window; NaN where absent."""
    k, theta = np.broadcast_arrays(np.asarray(k, float), np.asarray(theta, float))
    out = np.full(k.shape, np.nan)
    lo, hi = p_window(model, regime)
    zero = k == 0.0
    if np.any(zero) and lo == 0.0:
        out[zero] = 0.0
    live = ~zero
    if not np.any(live):
        return out
    kk, th = k[live], theta[live]
    plo, phi = np.full(kk.shape, lo), np.full(kk.shape, hi)
    f = lambda p, k_, t_: k_ * phase_integral(model, regime, p) - t_ * p  # noqa: E731
    flo, fhi = f(plo, kk, th), f(phi, kk, th)
    ok = (flo > 0.0) & (fhi < 0.0)
    sol = np.full(kk.shape, np.nan)
    if np.any(ok):
        res = find_root(f, (plo[ok], phi[ok]), args=(kk[ok], th[ok]), tolerances=_P_TOL)
        sol[ok] = np.where(res.success, res.x, np.nan)
    out[live] = sol
    return out


def _omega_from(k, theta, p, phi0):
    # p = 0 only for k = 0, where omega = theta / Phi(0)
    k, theta, p = (np.asarray(a, dtype=float) for a in (k, theta, p))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(p > 0.0, k / p, theta / phi0)


def normalization_constant(model: RadialModel, mode: Mode) -> float:
    """``B`` (diving) or ``C`` (reflecting) from ``1 = 2 B^2 int beta^-1 c^-2``.

    The density drops out: with ``r U = (rho_d c^2)^{-1/2} V`` the measure
    ``U^2 rho_d r^2 dr`` becomes ``V^2 c^-2 dr``.
    """
    return float((2.0 * half_time(model, mode.regime, mode.p)) ** -0.5)


def solve_omega(model: RadialModel, regime, n: int, k: float, l: int | None = None) -> Mode:
    """Eigenfrequency ``omega_n(k)`` of the given regime."""
    regime = _regime(regime)
    if n < 0 or k < 0:
        raise ValueError("n and k must be nonnegative")
    theta = float(target_phase(regime, n))
    p = float(_solve_p(model, regime, k, theta))
    if np.isnan(p):
        raise NoRootError(f"no {regime} root for n={n}, k={k}")
    phi0 = float(phase_integral(model, regime, 0.0)) if p == 0.0 else 1.0
    omega = float(_omega_from(k, theta, p, phi0))
    mode = Mode(regime=regime, n=int(n), k=float(k), omega=omega, p=p, l=l)
    return Mode(**{**asdict(mode), "norm_constant": normalization_constant(model, mode)})


def dispersion_table(model: RadialModel, regime, n_list, k_list, with_norm=True):
    """Modes on an ``n x k`` grid; cells without a root in the regime are ``None``."""
    regime = _regime(regime)
    n_arr = np.asarray(list(n_list), dtype=int)
    k_arr = np.asarray(list(k_list), dtype=float)
    if n_arr.size == 0 or k_arr.size == 0:
        raise ValueError("n_list and k_list must be nonempty")
    N, K = np.meshgrid(n_arr, k_arr, indexing="ij")
    theta = target_phase(regime, N)
    p = _solve_p(model, regime, K, theta)
    phi0 = float(phase_integral(model, regime, 0.0)) if np.any(p == 0.0) else 1.0
    omega = _omega_from(K, theta, p, phi0)
    good = ~np.isnan(p)
    norm = np.full(p.shape, np.nan)
    if with_norm and np.any(good):
        norm[good] = (2.0 * half_time(model, regime, p[good])) ** -0.5
    table = []
    for i in range(N.shape[0]):
        row = []
        for j in range(N.shape[1]):
            if good[i, j]:
                row.append(Mode(regime=regime, n=int(N[i, j]), k=float(K[i, j]),
                                omega=float(omega[i, j]), p=float(p[i, j]),
                                norm_constant=float(norm[i, j])))
            else:
                row.append(None)
        table.append(row)
    return table


def phase_group(mode_curve, k):
    """Phase speed ``omega/k``, group speed ``d omega/dk`` and ``p = k/omega``.

    ``mode_curve`` is a sequence of :class:`Mode` (one overtone, several
    ``k``) or a pair ``(k_samples, omega_samples)``; ``k`` must be an interior
    sample.  The group speed is a centred difference of the sampled curve.
    """
    if k == 0:
        raise ValueError("phase speed undefined at k = 0")
    if isinstance(mode_curve, tuple) and len(mode_curve) == 2:
        ks, ws = (np.asarray(a, dtype=float) for a in mode_curve)
    else:
        ks = np.array([m.k for m in mode_curve], dtype=float)
        ws = np.array([m.omega for m in mode_curve], dtype=float)
    order = np.argsort(ks)
    ks, ws = ks[order], ws[order]
    hits = np.nonzero(np.isclose(ks, k, rtol=1e-12, atol=0.0))[0]
    if hits.size == 0 or hits[0] == 0 or hits[0] == ks.size - 1:
        raise ValueError("k must be an interior sample of the mode curve")
    i = hits[0]
    k0, k1, k2 = ks[i - 1], ks[i], ks[i + 1]
    w0, w1, w2 = ws[i - 1], ws[i], ws[i + 1]
    # three-point derivative valid on uneven spacing
    h0, h1 = k1 - k0, k2 - k1
    group = (-h1 / (h0 * (h0 + h1))) * w0 + ((h1 - h0) / (h0 * h1)) * w1 + (h0 / (h1 * (h0 + h1))) * w2
    phase = w1 / k1
    return float(phase), float(group), float(1.0 / phase)


# --------------------------------------------------------------------------
# Batch mode sets for the trace
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ModeSet:
    """Flat arrays describing many modes (used by the trace)."""

    l: np.ndarray
    n: np.ndarray
    k: np.ndarray
    omega: np.ndarray
    p: np.ndarray
    regime: np.ndarray      # 0 diving, 1 reflecting
    provenance: dict

    def __len__(self):
        return int(self.omega.size)

    @property
    def weights(self):
        return 2.0 * self.l + 1.0


def mode_set(model: RadialModel, l_max: int, omega_max: float, k_shift: float = 0.5):
    """Every WKB mode with ``l <= l_max`` and ``omega <= omega_max``.

    Uses ``k = l + k_shift``.  For each ``l`` the phase ``omega Phi(k/omega)``
    is increasing in ``omega``; its value where the ray grazes ``r = R``
    separates the diving overtones from the reflecting ones.
    """
    l = np.arange(l_max + 1)
    k = l + k_shift
    regimes = [DIVING] + ([REFLECTING] if model.R > 0.0 else [])
    out = {key: [] for key in ("l", "n", "k", "omega", "p", "regime")}
    for code, regime in enumerate(regimes):
        lo, hi = p_window(model, regime)
        # admissible p for this regime and cutoff: [max(lo, k/omega_max), hi];
        # the phase k Phi(p)/p decreases in p, so its range gives the overtones
        p_min = np.maximum(lo, k / omega_max)
        keep = p_min < hi
        p_min = np.minimum(p_min, hi)
        if not np.any(keep):
            continue
        with np.errstate(divide="ignore"):
            top = np.where(p_min > 0.0, k / p_min, omega_max) * phase_integral(model, regime, p_min)
            bot = (k / hi) * phase_integral(model, regime, np.full_like(k, hi))
        n_top = np.floor(top / np.pi - _OFFSET[regime]).astype(int)
        n_bot = np.maximum(np.ceil(bot / np.pi - _OFFSET[regime]), 0).astype(int)
        ls, ns = [], []
        for li in np.nonzero(keep)[0]:
            for ni in range(n_bot[li], n_top[li] + 1):
                ls.append(li)
                ns.append(ni)
        if not ls:
            continue
        ls, ns = np.asarray(ls), np.asarray(ns)
        kk = k[ls]
        theta = target_phase(regime, ns)
        p = _solve_p(model, regime, kk, theta)
        good = ~np.isnan(p)
        phi0 = float(phase_integral(model, regime, 0.0)) if np.any(p[good] == 0.0) else 1.0
        omega = _omega_from(kk, theta, p, phi0)
        good &= omega <= omega_max
        out["l"].append(ls[good])
        out["n"].append(ns[good])
        out["k"].append(kk[good])
        out["omega"].append(omega[good])
        out["p"].append(p[good])
        out["regime"].append(np.full(int(good.sum()), code))
    arrays = {key: (np.concatenate(v) if v else np.zeros(0)) for key, v in out.items()}
    order = np.lexsort((arrays["omega"], arrays["l"]))
    arrays = {key: v[order] for key, v in arrays.items()}
    arrays["l"] = arrays["l"].astype(int)
    arrays["n"] = arrays["n"].astype(int)
    arrays["regime"] = arrays["regime"].astype(int)
    prov = {"l_max": int(l_max), "omega_max": float(omega_max), "k_shift": float(k_shift),
            "model": model.to_dict()}
    return ModeSet(provenance=prov, **arrays)


# --------------------------------------------------------------------------
# Eigenfunctions
# --------------------------------------------------------------------------


def _evanescent_integral(model, r, top, p):
    """``int_r^top sqrt(p^2/s^2 - c^-2) ds`` (vectorized over ``r``)."""
    def f(s):
        rho = s / model.c(s)
        return np.sqrt(np.maximum((p - rho) * (p + rho), 0.0)) / s
    res = tanhsinh(f, r, top, rtol=1e-12, atol=1e-300)
    return res.integral


def _langer_q(model, p, omega, r, R_star, S_above, S_below):
    """``q = (-zeta / beta^2)^{1/4}`` and ``zeta`` at radii ``r``."""
    b2 = model.c(r) ** -2 - (p / r) ** 2
    above = r > R_star
    zeta = np.where(above, -np.abs(1.5 * omega * S_above) ** (2 / 3),
                    np.abs(1.5 * omega * S_below) ** (2 / 3))
    with np.errstate(divide="ignore", invalid="ignore"):
        q4 = -zeta / b2
    # at the turning point both vanish; the ratio tends to omega^{2/3} a^{-2/3}
    a = float(2.0 * model.c(R_star) ** -3 * -model.dc(R_star) + 2.0 * p ** 2 / R_star ** 3)
    limit = omega ** (2 / 3) * a ** (-2 / 3)
    near = ~np.isfinite(q4) | (np.abs(r - R_star) < 1e-9)
    q4 = np.where(near, limit, q4)
    return q4 ** 0.25, zeta


def wkb_eigenfunction(model: RadialModel, mode: Mode, r):
    """Leading-order WKB eigenfunction ``V(r)`` and ``dV/dr``.

    Diving modes use the Langer uniform form
    ``V = 2 sqrt(pi) B q Ai(zeta)``, which is single valued through the
    turning point and reduces to ``2 B beta^{-1/2} cos(omega S - pi/4)``
    above it.  Reflecting modes use ``2 C beta^{-1/2} cos(omega S)`` with
    ``S`` measured from ``R``.
    """
    r_in = np.asarray(r, dtype=float)
    r = np.atleast_1d(model.check_domain(r_in)).astype(float)
    r = np.clip(r, model.R, 1.0)
    norm = mode.norm_constant
    if not np.isfinite(norm):
        norm = normalization_constant(model, mode)
    w, p = mode.omega, mode.p
    if mode.regime == REFLECTING:
        S = rays.ray_integral(model, "phase", model.R, r, p, gap=model.p_inner - p)
        b = np.sqrt(model.c(r) ** -2 - (p / r) ** 2)
        # d/dr of beta^{-1/2}: -(1/4) beta^{-5/2} d(beta^2)/dr
        db2 = -2.0 * model.dc(r) / model.c(r) ** 3 + 2.0 * p ** 2 / r ** 3
        V = 2.0 * norm * b ** -0.5 * np.cos(w * S)
        dV = 2.0 * norm * (-0.25 * b ** -2.5 * db2 * np.cos(w * S) - w * b ** 0.5 * np.sin(w * S))
    elif mode.regime == DIVING:
        R_star = float(rays.invert_rho(model, p)) if p > 0 else 0.0
        if R_star <= 0.0:
            raise RegimeError("Langer form needs a turning point above the centre (p > 0)")
        V, dV = _langer(model, p, w, norm, R_star, r)
    else:
        raise ValueError(mode.regime)
    if np.ndim(r_in) == 0:
        return float(V[0]), float(dV[0])
    return V, dV


def _langer(model, p, w, norm, R_star, r):
    def q_zeta(x):
        above = x > R_star
        S_a = np.zeros_like(x)
        S_b = np.zeros_like(x)
        if np.any(above):
            S_a[above] = rays.ray_integral(model, "phase", R_star, x[above], p)
        below = ~above & (x > 0.0)
        if np.any(below):
            S_b[below] = _evanescent_integral(model, x[below], R_star, p)
        return _langer_q(model, p, w, np.maximum(x, 1e-300), R_star, S_a, S_b)

    q, zeta = q_zeta(r)
    ai, aip, _, _ = airy(zeta)
    h = 1e-5
    lo = np.clip(r - h, model.R, 1.0)
    hi = np.clip(r + h, model.R, 1.0)
    lo = np.where(lo <= 0.0, r, lo)
    dq = (q_zeta(hi)[0] - q_zeta(lo)[0]) / (hi - lo)
    c = 2.0 * np.sqrt(np.pi) * norm
    V = c * q * ai
    dV = c * (dq * ai - w / q * aip)
    zero = r <= 0.0
    V = np.where(zero, 0.0, V)
    dV = np.where(zero, 0.0, dV)
    return V, dV


def check_radius(model: RadialModel, r):
    r = np.asarray(r, dtype=float)
    if np.any(r < model.R) or np.any(r > 1.0):
        raise DomainError(f"radius outside [{model.R}, 1]")
    return r
