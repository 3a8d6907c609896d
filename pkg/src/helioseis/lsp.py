"""Periodic broken rays and the length spectrum.

A diving ray with tip radius ``r`` closes up after ``n`` surface-to-surface
legs and ``m`` turns around the centre exactly when ``n alpha(r) = pi m``;
its primitive period is ``2 n L(r)``.  Rays reflecting at the inner
boundary close when the angle ``B(z)`` of one ``R -> 1`` segment equals
``pi m / n``, with period ``2 n`` times the segment travel time.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from math import gcd

import numpy as np
from scipy.optimize.elementwise import find_root

from . import rays
from .errors import NoRootError, RegimeError
from .model import RadialModel

STABLE_TOL = 1e-6
DEGENERATE_TOL = 1e-9
DEFAULT_GRID = 512
_ROOT_TOL = dict(xatol=1e-300, xrtol=4 * np.finfo(float).eps, fatol=1e-14, frtol=0.0)


@dataclass(frozen=True)
class PeriodicOrbit:
    """Primitive periodic broken ray.

    ``parameter`` is the tip radius (diving) or the angular momentum ``z``
    (reflecting).  ``derivative`` holds ``alpha'(r_tip)`` or ``dB/dz``.
    ``limit`` marks the two closure cases that sit on a regime boundary:
    the diameter (``R = 0``, ``r_tip = 0``) and the radial bouncing ray
    (``z = 0``, stored with ``m = 0, n = 1``).
    """

    kind: str
    m: int
    n: int
    parameter: float
    p: float
    T_sharp: float
    derivative: float
    stability: str
    limit: bool = False

    def length(self, q: int = 1) -> float:
        return q * self.T_sharp

    def to_dict(self):
        return asdict(self)


def classify(derivative: float) -> str:
    a = abs(derivative)
    if a > STABLE_TOL:
        return "stable"
    if a > DEGENERATE_TOL:
        return "indeterminate"
    return "conjugate-degenerate"


def coprime_pairs(n_max: int, lo: float = 0.0, hi: float = np.pi):
    """``(m, n)`` with ``gcd = 1``, ``2 <= n <= n_max`` and ``lo < pi m / n < hi``."""
    out = []
    for n in range(2, n_max + 1):
        for m in range(1, n):
            if gcd(m, n) == 1 and lo < np.pi * m / n < hi:
                out.append((m, n))
    return out


def tip_grid(model: RadialModel, size: int = DEFAULT_GRID):
    """Tip radii clustered towards both ends of ``(R, 1)``, endpoints excluded."""
    k = np.arange(1, size + 1)
    x = 0.5 * (1.0 - np.cos(np.pi * k / (size + 1)))
    return model.R + (1.0 - model.R) * x


def _alpha_roots(model, targets, grid_r, grid_alpha):
    """All sign-change roots of ``alpha(r) = target`` for each target."""
    lo, hi, owner = [], [], []
    exact = [[] for _ in targets]
    for j, t in enumerate(targets):
        s = grid_alpha - t
        hits = np.nonzero(s == 0.0)[0]
        exact[j].extend(grid_r[hits].tolist())
        idx = np.nonzero(s[:-1] * s[1:] < 0.0)[0]
        lo.extend(grid_r[idx])
        hi.extend(grid_r[idx + 1])
        owner.extend([j] * len(idx))
    roots = [list(e) for e in exact]
    if owner:
        owner = np.asarray(owner)
        tgt = np.asarray(targets, dtype=float)[owner]
        res = find_root(lambda r, t: rays.alpha(model, r) - t,
                        (np.asarray(lo), np.asarray(hi)), args=(tgt,),
                        tolerances=_ROOT_TOL)
        if not np.all(res.success):
            raise NoRootError("periodic-radius refinement failed to converge")
        for j, r in zip(owner, res.x):
            roots[j].append(float(r))
    return [sorted(r) for r in roots]


def find_periodic_radii(model: RadialModel, m: int, n: int, grid_size: int = DEFAULT_GRID):
    """Tip radii in ``(R, 1)`` where ``alpha(r) = pi m / n``.

    Roots are bracketed by sign changes on a clustered grid and refined by
    a bracketing solver; an empty list means the target angle lies outside
    the sampled range of ``alpha``.
    """
    if n < 2 or m < 1 or gcd(m, n) != 1:
        raise ValueError(f"(m, n) = ({m}, {n}) must be coprime with n >= 2, m >= 1")
    r = tip_grid(model, grid_size)
    return _alpha_roots(model, [np.pi * m / n], r, rays.alpha(model, r))[0]


def _diameter(model):
    # R = 0 limit: the ray through the centre; alpha -> pi/2, L -> int 1/c
    L0 = float(rays.ray_integral(model, "time", 0.0, 1.0, 0.0))
    d = float(rays.alpha_prime(model, 1e-4))
    return PeriodicOrbit(kind=rays.DIVING, m=1, n=2, parameter=0.0, p=0.0,
                         T_sharp=4.0 * L0, derivative=d, stability=classify(d), limit=True)


def enumerate_lsp(model: RadialModel, n_max: int, grid_size: int = DEFAULT_GRID,
                  include_limit: bool = True):
    """Primitive periodic diving orbits with ``n <= n_max``, sorted by period."""
    if n_max < 2:
        raise ValueError("n_max must be >= 2")
    r = tip_grid(model, grid_size)
    a = rays.alpha(model, r)
    pairs = coprime_pairs(n_max, float(a.min()), float(a.max()))
    roots = _alpha_roots(model, [np.pi * m / n for m, n in pairs], r, a)
    flat = [(m, n, rt) for (m, n), rs in zip(pairs, roots) for rt in rs]
    orbits = []
    if flat:
        tips = np.array([f[2] for f in flat])
        L = rays.half_length(model, tips)
        ap = rays.alpha_prime(model, tips)
        p = model.rho(tips)
        for (m, n, rt), Li, api, pi in zip(flat, L, ap, p):
            orbits.append(PeriodicOrbit(kind=rays.DIVING, m=m, n=n, parameter=rt, p=float(pi),
                                        T_sharp=2.0 * n * float(Li), derivative=float(api),
                                        stability=classify(api)))
    if include_limit and model.R == 0.0:
        orbits.append(_diameter(model))
    return sorted(orbits, key=lambda o: (o.T_sharp, o.n, o.m))


def _segment_angle(model, z):
    return rays.ray_integral(model, "angle", model.R, 1.0, z, gap=model.p_inner - z)


def enumerate_lsp_reflecting(model: RadialModel, n_max: int, include_radial: bool = True):
    """Primitive periodic rays reflecting at ``r = R``, sorted by period."""
    if model.R <= 0.0:
        raise RegimeError("no inner boundary: reflecting and diving spectra coincide at R = 0")
    if n_max < 2:
        raise ValueError("n_max must be >= 2")
    z_hi = model.p_inner - rays.P_MARGIN
    B_hi = float(_segment_angle(model, z_hi))
    pairs = coprime_pairs(n_max, 0.0, B_hi)
    orbits = []
    if pairs:
        tgt = np.array([np.pi * m / n for m, n in pairs])
        res = find_root(lambda z, t: _segment_angle(model, z) - t,
                        (np.zeros_like(tgt), np.full_like(tgt, z_hi)), args=(tgt,),
                        tolerances=_ROOT_TOL)
        if not np.all(res.success):
            raise NoRootError("reflecting-orbit refinement failed to converge")
        z = res.x
        seg = rays.reflecting_segment_time(model, z)
        dB = rays.reflecting_angle(model, z)[1]
        for (m, n), zi, si, di in zip(pairs, z, seg, dB):
            orbits.append(PeriodicOrbit(kind=rays.REFLECTING, m=m, n=n, parameter=float(zi),
                                        p=float(zi), T_sharp=2.0 * n * float(si),
                                        derivative=float(di), stability=classify(di)))
    if include_radial:
        seg0 = float(rays.reflecting_segment_time(model, 0.0))
        d0 = float(rays.ray_integral(model, "dangle", model.R, 1.0, 0.0, gap=model.p_inner))
        orbits.append(PeriodicOrbit(kind=rays.REFLECTING, m=0, n=1, parameter=0.0, p=0.0,
                                    T_sharp=2.0 * seg0, derivative=d0,
                                    stability="stable", limit=True))
    return sorted(orbits, key=lambda o: (o.T_sharp, o.n, o.m))


def enumerate_all(model: RadialModel, n_max: int, grid_size: int = DEFAULT_GRID):
    """Diving orbits plus, when ``R > 0``, the reflecting ones (``lsp'``)."""
    out = enumerate_lsp(model, n_max, grid_size)
    if model.R > 0.0:
        out += enumerate_lsp_reflecting(model, n_max)
    return sorted(out, key=lambda o: (o.T_sharp, o.kind, o.n, o.m))


def multiples(orbits, t_max: float):
    """``(q, orbit, q T)`` for every multiple ``q T <= t_max``, sorted by length."""
    out = []
    for o in orbits:
        q = 1
        while q * o.T_sharp <= t_max:
            out.append((q, o, q * o.T_sharp))
            q += 1
    return sorted(out, key=lambda x: x[2])


def conjugacy_scan(model: RadialModel, grid_size: int = 1024, tol: float = STABLE_TOL):
    """Intervals of tip radii where ``alpha'`` changes sign or is nearly zero.

    An empty result is grid evidence (not a proof) that the conjugate radii
    are isolated and avoid the sampled periodic radii.
    """
    if grid_size < 64:
        raise ValueError("grid_size must be >= 64")
    r = tip_grid(model, grid_size)
    ap = rays.alpha_prime(model, r)
    flag = np.abs(ap) <= tol
    cells = []
    for i in range(len(r) - 1):
        if flag[i] or flag[i + 1] or ap[i] * ap[i + 1] < 0.0:
            cells.append([float(r[i]), float(r[i + 1])])
    merged = []
    for c in cells:
        if merged and c[0] <= merged[-1][1]:
            merged[-1][1] = c[1]
        else:
            merged.append(c)
    return [tuple(c) for c in merged]


def nondegeneracy_report(orbits, tol: float):
    """Pairs of orbits whose primitive periods agree to within ``tol``."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    orbits = sorted(orbits, key=lambda o: o.T_sharp)
    out = []
    for i, a in enumerate(orbits):
        for b in orbits[i + 1:]:
            gap = b.T_sharp - a.T_sharp
            if not gap < tol:
                break
            out.append((a, b, gap))
    return out
