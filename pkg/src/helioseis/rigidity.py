"""Length-spectral rigidity experiments.

A smooth family ``c_tau = c_0 (1 + tau h)`` moves each stable periodic
orbit smoothly.  For an orbit parametrized by travel time ``t``, the first
variation of the metric length ``int c^-1 |dx|`` is

    2 d ell / d tau = int c_0^2 (d/dtau c_tau^-2) dt,

and the orbit integral on the right is an Abel-type transform of the radial
density ``c_0^2 d/dtau c_tau^-2`` (``-2h`` for the multiplicative family)
evaluated at the orbit radius.  Since the transform is injective and
``c_0^2 > 0``, vanishing length variations force ``h = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_triangular

from . import lsp, rays
from .errors import ContinuationError, RegimeError, ValidationError
from .model import Profile, RadialModel, as_profile, make_model

RICHARDSON_STEPS = (1e-3, 5e-4, 2.5e-4)
TRACK_TOL = 1e-10


# --------------------------------------------------------------------------
# Deformation families
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class _Deformed(Profile):
    base: Profile
    h: Profile
    tau: float
    additive: bool = False
    kind = "deformed"

    def __call__(self, r):
        if self.additive:
            return self.base(r) + self.tau * self.h(r)
        return self.base(r) * (1.0 + self.tau * self.h(r))

    def derivative(self, r):
        if self.additive:
            return self.base.derivative(r) + self.tau * self.h.derivative(r)
        return (self.base.derivative(r) * (1.0 + self.tau * self.h(r))
                + self.base(r) * self.tau * self.h.derivative(r))

    def to_dict(self):
        return {"kind": "deformed", "base": self.base.to_dict(), "h": self.h.to_dict(),
                "tau": self.tau, "additive": self.additive}


@dataclass(frozen=True)
class DeformationFamily:
    """``c_tau = c_0 (1 + tau h)`` (or ``c_0 + tau h`` when ``additive``)."""

    base: RadialModel
    h: Profile
    eps: float = 1e-2
    additive: bool = False

    def __post_init__(self):
        object.__setattr__(self, "h", as_profile(self.h))
        if not self.eps > 0:
            raise ValidationError("eps must be positive")
        for tau in (-self.eps, self.eps):
            self.model(tau)

    def model(self, tau: float) -> RadialModel:
        """Validated member ``c_tau`` (raises if Herglotz fails)."""
        if tau == 0.0:
            return self.base
        return make_model(self.base.R, _Deformed(self.base.speed, self.h, float(tau), self.additive),
                          dim=self.base.dim, density=self.base.density,
                          grid_size=self.base.grid_size)

    def variation(self, r):
        """``d/dtau c_tau^-2`` at ``tau = 0``."""
        c0 = self.base.c(r)
        if self.additive:
            return -2.0 * self.h(r) / c0 ** 3
        return -2.0 * self.h(r) / c0 ** 2

    def length_density(self, r):
        """``c_0^2 d/dtau c_tau^-2``: the density whose orbit integral is ``2 d ell/d tau``."""
        return self.base.c(r) ** 2 * self.variation(r)


# --------------------------------------------------------------------------
# Abel-type transform
# --------------------------------------------------------------------------


def _as_function(f):
    if callable(f):
        return lambda s: np.asarray(f(s), dtype=float) * np.ones_like(s)
    return as_profile(f)


def abel_forward(model: RadialModel, f, r):
    """``int_r^1 f(s)/c(s) (1 - (r c(s) / (s c(r)))^2)^{-1/2} ds`` (vectorized in ``r``)."""
    r = np.asarray(r, dtype=float)
    if np.any(r < model.R) or np.any(r >= 1.0 + 1e-15):
        raise ValidationError(f"radius outside [{model.R}, 1)")
    fn = _as_function(f)
    return rays.ray_integral(model, "abel", r, 1.0, model.rho(r), weight=fn)


def pbrt_integral(model: RadialModel, orbit: lsp.PeriodicOrbit, f):
    """Integral of ``f`` over a periodic diving orbit: ``2 n A f(r_tip)``."""
    if orbit.kind != rays.DIVING:
        raise RegimeError("orbit integrals are implemented for diving orbits only")
    return 2.0 * orbit.n * float(abel_forward(model, f, orbit.parameter))


@dataclass
class AbelGrid:
    """Product-integration discretization of the Abel-type transform.

    In ``u = r/c(r)`` the transform reads
    ``g(v) = int_v^{u_1} F(u) u / sqrt(u^2 - v^2) du`` with
    ``F = f / (c rho')``.  ``F`` is piecewise linear in ``u``; the weights
    integrate the singular factor exactly, so ``K`` is upper triangular
    (output at ``r_i`` depends only on ``F_j``, ``j >= i``) with
    nonnegative entries.
    """

    model: RadialModel
    r: np.ndarray
    u: np.ndarray = field(init=False)
    K: np.ndarray = field(init=False)
    scale: np.ndarray = field(init=False)

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        if r.ndim != 1 or r.size < 3 or np.any(np.diff(r) <= 0):
            raise ValidationError("Abel grid must be increasing with at least 3 points")
        if r[0] < self.model.R or abs(r[-1] - 1.0) > 1e-15:
            raise ValidationError("Abel grid must lie in [R, 1] and end at 1")
        self.r = r
        self.u = self.model.rho(r)
        self.scale = self.model.c(r) * self.model.drho(r)
        self.K = _product_weights(self.u)

    def forward(self, f_values):
        return self.K @ (np.asarray(f_values, dtype=float) / self.scale)

    def invert(self, g):
        """Solve ``K F = g`` by back substitution; ``F`` is constant on the last cell."""
        g = np.asarray(g, dtype=float)
        N = self.r.size
        K = self.K[:N - 1, :N - 1].copy()
        K[:, -1] += self.K[:N - 1, -1]
        F = np.empty(N)
        F[:N - 1] = solve_triangular(K, g[:N - 1], lower=False)
        F[-1] = F[-2]
        diag = np.abs(np.diag(K))
        rank = int(np.sum(diag > 1e-12 * diag.max()))
        return F * self.scale, rank


def _product_weights(u):
    """Weights ``K[i, j]`` of hat function ``j`` against ``u / sqrt(u^2 - u_i^2)``."""
    N = u.size
    K = np.zeros((N, N))
    for i in range(N - 1):
        v = u[i]
        uu = u[i:]
        w = np.sqrt(np.maximum(uu * uu - v * v, 0.0))
        # moments on each cell: int u/sqrt du = w, int u^2/sqrt du = (u w + v^2 ln(u + w)) / 2
        m0 = np.diff(w)
        # v = 0 (grid starting at the centre): the log term drops out
        lg = np.log(uu + w) if v > 0.0 else np.zeros_like(uu)
        m1 = 0.5 * np.diff(uu * w) + 0.5 * v * v * np.diff(lg)
        a, b = uu[:-1], uu[1:]
        d = b - a
        left = (b * m0 - m1) / d
        right = (m1 - a * m0) / d
        K[i, i:N - 1] += left
        K[i, i + 1:N] += right
    return np.maximum(K, 0.0)


@dataclass(frozen=True)
class AbelInversion:
    r: np.ndarray
    f: np.ndarray
    effective_rank: int
    consistency: float


def abel_invert(model: RadialModel, g, r=None, grid: AbelGrid | None = None):
    """Recover ``f`` on the grid ``r`` from samples ``g = A f`` on the same grid.

    Returns an :class:`AbelInversion` with the forward-consistency
    ``||K f - g||_inf / ||g||_inf`` and the effective rank of the triangular
    system (diagonal entries above ``1e-12`` of the largest).
    """
    if grid is None:
        r = np.linspace(model.R, 1.0, len(g)) if r is None else r
        grid = AbelGrid(model, np.asarray(r, dtype=float))
    g = np.asarray(g, dtype=float)
    if g.shape != grid.r.shape:
        raise ValidationError("g must be sampled on the grid radii")
    f, rank = grid.invert(g)
    gn = np.max(np.abs(g))
    resid = np.max(np.abs(grid.forward(f) - g))
    return AbelInversion(r=grid.r, f=f, effective_rank=rank,
                         consistency=float(resid / gn) if gn > 0 else float(resid))


# --------------------------------------------------------------------------
# Orbit continuation and the length-derivative identity
# --------------------------------------------------------------------------


def _track(family: DeformationFamily, r_star, targets, taus, max_iter=40):
    """Radii ``phi(tau)`` with ``alpha_tau(phi) = target`` for every orbit.

    Continuation over ``taus`` ordered by ``|tau|`` outward from 0 on each
    side; each step runs a chord iteration using ``alpha'`` of the base
    model, warm started from the previous step.
    """
    r_star = np.atleast_1d(np.asarray(r_star, dtype=float))
    targets = np.atleast_1d(np.asarray(targets, dtype=float))
    slope = rays.alpha_prime(family.base, r_star)
    if np.any(np.abs(slope) <= lsp.STABLE_TOL):
        raise ValidationError("base orbit is not stable (alpha' too small)")
    taus = np.asarray(taus, dtype=float)
    out = np.empty((taus.size, r_star.size))
    for side in (taus >= 0, taus < 0):
        idx = np.nonzero(side)[0]
        idx = idx[np.argsort(np.abs(taus[idx]))]
        r = r_star.copy()
        last_good = 0.0
        for i in idx:
            tau = float(taus[i])
            try:
                model = family.model(tau)
            except ValidationError as exc:
                raise ContinuationError(f"family left the admissible set at tau={tau}: {exc}",
                                        last_good_tau=last_good) from exc
            for _ in range(max_iter):
                res = rays.alpha(model, r) - targets
                step = res / slope
                r = np.clip(r - step, model.R + 1e-12, 1.0 - 1e-12)
                if np.all(np.abs(res) < 1e-14 * np.maximum(1.0, np.abs(targets))):
                    break
            res = rays.alpha(model, r) - targets
            if np.any(~np.isfinite(res)) or np.any(np.abs(res) > TRACK_TOL):
                raise ContinuationError(f"continuation stalled at tau={tau}", last_good_tau=last_good)
            out[i] = r
            last_good = tau
    return out


def track_orbit(family: DeformationFamily, r_star: float, tau_list):
    """``phi(tau)`` keeping ``alpha_tau(phi(tau)) = alpha_0(r_star)``."""
    target = float(rays.alpha(family.base, r_star))
    return _track(family, [r_star], [target], tau_list)[:, 0]


def _lengths(family, orbits, taus):
    tips = np.array([o.parameter for o in orbits])
    n = np.array([o.n for o in orbits])
    targets = np.pi * np.array([o.m for o in orbits]) / n
    phi = _track(family, tips, targets, taus)
    L = np.array([rays.half_length(family.model(t), phi[i]) for i, t in enumerate(taus)])
    return 2.0 * n * L, phi


def length_derivatives(family: DeformationFamily, orbits, steps=RICHARDSON_STEPS):
    """``d ell / d tau`` at 0 for each orbit: centred differences + Richardson."""
    orbits = list(orbits)
    if any(o.kind != rays.DIVING or o.limit for o in orbits):
        raise RegimeError("length derivatives need interior diving orbits")
    steps = np.asarray(steps, dtype=float)
    taus = np.concatenate([steps, -steps])
    ell, _ = _lengths(family, orbits, taus)
    k = steps.size
    D = (ell[:k] - ell[k:]) / (2.0 * steps[:, None])
    # Richardson on an h^2, h^4, ... error expansion (steps halve each time)
    table = [D[i] for i in range(k)]
    for level in range(1, k):
        fac = 4.0 ** level
        table = [(fac * table[i + 1] - table[i]) / (fac - 1.0) for i in range(len(table) - 1)]
    return table[0]


def length_derivative_check(family: DeformationFamily, orbit: lsp.PeriodicOrbit,
                            weighted: bool = True):
    """``(lhs, rhs, residual)`` for the first-variation identity.

    ``lhs = 2 d ell/d tau`` (Richardson-extrapolated centred differences of
    the tracked orbit length); ``rhs`` is the travel-time orbit integral of
    :meth:`DeformationFamily.length_density`, or of the bare variation
    ``d c^-2/d tau`` when ``weighted=False``.  The two agree when
    ``c_0 = 1``.
    """
    lhs = 2.0 * float(length_derivatives(family, [orbit])[0])
    density = family.length_density if weighted else family.variation
    rhs = pbrt_integral(family.base, orbit, density)
    scale = abs(rhs)
    residual = abs(lhs - rhs) / scale if scale > 0 else abs(lhs - rhs)
    return lhs, rhs, residual


def stable_diving(orbits):
    return [o for o in orbits if o.kind == rays.DIVING and not o.limit and o.stability == "stable"]


def rigidity_experiment(family: DeformationFamily, n_max: int, grid_size: int = 1000,
                        tol: float = 1e-9):
    """Length variations over all stable orbits and the Abel reconstruction.

    The derivative data give ``A g(r_k) = (d ell/d tau) / n`` at each orbit
    radius ``r_k`` with ``g`` the length density; they are interpolated (as
    a multiple of the half-length ``L``, which carries the square-root
    behaviour at ``r = 1``) onto a uniform grid and inverted, and
    ``g / c_0^2`` is compared with ``d c^-2/d tau``.
    """
    base = family.base
    orbits = stable_diving(lsp.enumerate_lsp(base, n_max))
    dl = length_derivatives(family, orbits)
    rhs = np.array([pbrt_integral(base, o, family.length_density) for o in orbits])
    rows = []
    for o, d, pb in zip(orbits, dl, rhs):
        res = abs(2 * d - pb) / abs(pb) if pb != 0 else abs(2 * d - pb)
        rows.append({"orbit": o.to_dict(), "dl_dtau": float(d), "pbrt_value": float(pb),
                     "residual": float(res)})
    detected = bool(np.max(np.abs(dl)) > tol) if dl.size else False
    r_grid = np.linspace(base.R, 1.0, grid_size)
    f_true = family.variation(r_grid)
    if detected:
        tips = np.array([o.parameter for o in orbits])
        g = dl / np.array([o.n for o in orbits])
        order = np.argsort(tips)
        tips, g = tips[order], g[order]
        keep = np.concatenate([[True], np.diff(tips) > 1e-9])
        tips, g = tips[keep], g[keep]
        G = g / rays.half_length(base, tips)
        spline = CubicSpline(tips, G)
        inner = r_grid[:-1]
        g_grid = np.concatenate([spline(inner) * rays.half_length(base, inner), [0.0]])
        inv = abel_invert(base, g_grid, r_grid)
        f_rec = inv.f / base.c(r_grid) ** 2
    else:
        f_rec = np.zeros_like(r_grid)
    norm = np.sqrt(trapezoid(f_true ** 2, r_grid))
    err = np.sqrt(trapezoid((f_rec - f_true) ** 2, r_grid))
    return {
        "orbits": rows,
        "detected": detected,
        "max_abs_dl_dtau": float(np.max(np.abs(dl))) if dl.size else 0.0,
        "max_residual": float(max((r["residual"] for r in rows), default=0.0)),
        "r": r_grid,
        "f_reconstructed": f_rec,
        "f_true": f_true,
        "reconstruction_error": float(err / norm) if norm > 0 else float(err),
    }
