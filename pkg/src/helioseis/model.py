"""Radial wave-speed models.

A model is a sound speed ``c(r)`` on the annulus ``R <= r <= 1`` (a ball when
``R == 0``).  Everything downstream evaluates ``c`` through
:class:`RadialModel`, which is validated once on construction: ``c > 0`` and
the Herglotz condition ``d/dr (r / c(r)) > 0`` on a dense grid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator

from .errors import (
    DomainError,
    HerglotzViolation,
    MetricError,
    NonPositiveSpeed,
    OriginSlopeError,
    SchemaError,
)

HERGLOTZ_GRID = 4096
# d/dr(r/c) at or below this is treated as zero (roundoff), not as a margin.
HERGLOTZ_FLOOR = 1e-10
ORIGIN_SLOPE_TOL = 1e-8
DOMAIN_SLACK = 1e-12

_PROFILE_SCHEMA = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "kind": {"const": "constant"},
                "value": {"type": "number"},
            },
            "required": ["kind", "value"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "kind": {"const": "polynomial"},
                "coeffs": {"type": "array", "items": {"type": "number"}, "minItems": 1},
            },
            "required": ["kind", "coeffs"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "kind": {"const": "table"},
                "r": {"type": "array", "items": {"type": "number"}, "minItems": 2},
                "c": {"type": "array", "items": {"type": "number"}, "minItems": 2},
            },
            "required": ["kind", "r", "c"],
            "additionalProperties": False,
        },
    ]
}

MODEL_SCHEMA = {
    "type": "object",
    "properties": {
        "R": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "dim": {"type": "integer", "minimum": 2},
        "speed": _PROFILE_SCHEMA,
        "density": _PROFILE_SCHEMA,
        "name": {"type": "string"},
    },
    "required": ["R", "speed"],
    "additionalProperties": False,
}


# --------------------------------------------------------------------------
# Profiles
# --------------------------------------------------------------------------


class Profile:
    """A scalar radial function with a continuous first derivative."""

    kind = "abstract"

    def __call__(self, r):
        raise NotImplementedError

    def derivative(self, r):
        raise NotImplementedError

    def to_dict(self):
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantProfile(Profile):
    value: float
    kind = "constant"

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = np.full(r.shape, float(self.value))
        return out[()] if out.ndim == 0 else out

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        out = np.zeros(r.shape)
        return out[()] if out.ndim == 0 else out

    def to_dict(self):
        return {"kind": "constant", "value": float(self.value)}


@dataclass(frozen=True)
class PolynomialProfile(Profile):
    """``c(r) = a0 + a1 r + a2 r^2 + ...``"""

    coeffs: tuple
    kind = "polynomial"

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(a) for a in self.coeffs))
        poly = np.polynomial.Polynomial(self.coeffs)
        object.__setattr__(self, "_poly", poly)
        object.__setattr__(self, "_dpoly", poly.deriv())

    def __call__(self, r):
        out = self._poly(np.asarray(r, dtype=float))
        return out[()] if np.ndim(out) == 0 else out

    def derivative(self, r):
        out = self._dpoly(np.asarray(r, dtype=float))
        return out[()] if np.ndim(out) == 0 else out

    def to_dict(self):
        return {"kind": "polynomial", "coeffs": list(self.coeffs)}


@dataclass(frozen=True)
class TableProfile(Profile):
    """Monotone (shape preserving) cubic Hermite interpolant of samples.

    PCHIP keeps the interpolant C^1 and does not overshoot between knots,
    so a Herglotz-compliant table does not pick up spurious violations.
    """

    r: tuple
    c: tuple
    kind = "table"

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        c = np.asarray(self.c, dtype=float)
        if r.shape != c.shape or r.ndim != 1 or r.size < 2:
            raise SchemaError("table profile needs equal-length r and c arrays (>= 2 points)")
        if np.any(np.diff(r) <= 0):
            raise SchemaError("table radii must be strictly increasing")
        object.__setattr__(self, "r", tuple(r.tolist()))
        object.__setattr__(self, "c", tuple(c.tolist()))
        interp = PchipInterpolator(r, c, extrapolate=False)
        object.__setattr__(self, "_interp", interp)
        object.__setattr__(self, "_dinterp", interp.derivative())

    def _clip(self, r):
        r = np.asarray(r, dtype=float)
        lo, hi = self.r[0], self.r[-1]
        if np.any(r < lo - DOMAIN_SLACK) or np.any(r > hi + DOMAIN_SLACK):
            raise DomainError(f"radius outside table range [{lo}, {hi}]")
        return np.clip(r, lo, hi)

    def __call__(self, r):
        out = self._interp(self._clip(r))
        return out[()] if np.ndim(out) == 0 else out

    def derivative(self, r):
        out = self._dinterp(self._clip(r))
        return out[()] if np.ndim(out) == 0 else out

    def to_dict(self):
        return {"kind": "table", "r": list(self.r), "c": list(self.c)}


def profile_from_dict(doc) -> Profile:
    kind = doc.get("kind")
    if kind == "constant":
        return ConstantProfile(float(doc["value"]))
    if kind == "polynomial":
        return PolynomialProfile(tuple(doc["coeffs"]))
    if kind == "table":
        return TableProfile(tuple(doc["r"]), tuple(doc["c"]))
    raise SchemaError(f"unknown profile kind {kind!r}")


def as_profile(spec) -> Profile:
    """Coerce a number, a coefficient list, a dict or a Profile to a Profile."""
    if isinstance(spec, Profile):
        return spec
    if isinstance(spec, dict):
        return profile_from_dict(spec)
    if isinstance(spec, (int, float)):
        return ConstantProfile(float(spec))
    if isinstance(spec, (list, tuple)):
        return PolynomialProfile(tuple(spec))
    raise SchemaError(f"cannot interpret {spec!r} as a radial profile")


# --------------------------------------------------------------------------
# Model
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RadialModel:
    """Validated radial sound-speed model on ``[R, 1]``.

    Use :func:`make_model` or :func:`load_model` to construct one; the
    constructor itself does not validate.
    """

    R: float
    speed: Profile
    dim: int = 3
    density: Profile | None = None
    herglotz_margin: float = float("nan")
    margin_radius: float = float("nan")
    name: str = ""
    grid_size: int = field(default=HERGLOTZ_GRID, compare=False)

    # -- evaluation ---------------------------------------------------------

    def check_domain(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < self.R - DOMAIN_SLACK) or np.any(r > 1.0 + DOMAIN_SLACK):
            raise DomainError(f"radius outside model domain [{self.R}, 1]")
        return r

    def c(self, r):
        return self.speed(r)

    def dc(self, r):
        return self.speed.derivative(r)

    def rho(self, r):
        """Herglotz coordinate ``r / c(r)``."""
        return np.asarray(r, dtype=float) / self.speed(r)

    def drho(self, r):
        r = np.asarray(r, dtype=float)
        c = self.speed(r)
        return (c - r * self.speed.derivative(r)) / (c * c)

    def dens(self, r):
        if self.density is None:
            r = np.asarray(r, dtype=float)
            out = np.ones(r.shape)
            return out[()] if out.ndim == 0 else out
        return self.density(r)

    @property
    def p_inner(self) -> float:
        """``R / c(R)``: the ray parameter grazing the inner boundary."""
        return float(self.R / self.speed(self.R))

    @property
    def p_outer(self) -> float:
        """``1 / c(1)``: the largest ray parameter that reaches the surface."""
        return float(1.0 / self.speed(1.0))

    def to_dict(self):
        doc = {"R": float(self.R), "dim": int(self.dim), "speed": self.speed.to_dict()}
        if self.density is not None:
            doc["density"] = self.density.to_dict()
        if self.name:
            doc["name"] = self.name
        return doc

    def scaled(self, factor: float) -> "RadialModel":
        """Same geometry with every speed multiplied by ``factor``."""
        return make_model(self.R, _ScaledProfile(self.speed, factor), dim=self.dim,
                          density=self.density, grid_size=self.grid_size)


@dataclass(frozen=True)
class _ScaledProfile(Profile):
    base: Profile
    factor: float
    kind = "scaled"

    def __call__(self, r):
        return self.factor * self.base(r)

    def derivative(self, r):
        return self.factor * self.base.derivative(r)

    def to_dict(self):
        base = self.base.to_dict()
        if base["kind"] == "constant":
            return {"kind": "constant", "value": base["value"] * self.factor}
        if base["kind"] == "polynomial":
            return {"kind": "polynomial", "coeffs": [a * self.factor for a in base["coeffs"]]}
        return {"kind": "table", "r": base["r"], "c": [v * self.factor for v in base["c"]]}


def herglotz_profile(model_or_R, speed=None, grid_size=HERGLOTZ_GRID):
    """Grid samples of ``d/dr (r/c)``.  Returns ``(r, derivative)``."""
    if speed is None:
        R, speed = model_or_R.R, model_or_R.speed
    else:
        R = model_or_R
    r = np.linspace(R, 1.0, grid_size)
    c = speed(r)
    return r, (c - r * speed.derivative(r)) / (c * c)


def validate(R, speed, dim=3, density=None, grid_size=HERGLOTZ_GRID):
    """Check the model invariants; returns ``(margin, radius_of_margin)``."""
    if not 0.0 <= R < 1.0:
        raise SchemaError(f"inner radius must lie in [0, 1), got {R}")
    if int(dim) != dim or dim < 2:
        raise SchemaError(f"dimension must be an integer >= 2, got {dim}")
    if isinstance(speed, TableProfile):
        if speed.r[0] > R + DOMAIN_SLACK or speed.r[-1] < 1.0 - DOMAIN_SLACK:
            raise SchemaError("table must cover [R, 1]")
        if min(speed.c) <= 0:
            raise NonPositiveSpeed("table speeds must be strictly positive")
    r = np.linspace(R, 1.0, grid_size)
    c = speed(r)
    if not np.all(np.isfinite(c)) or np.any(c <= 0):
        bad = r[np.argmin(np.where(np.isfinite(c), c, -np.inf))]
        raise NonPositiveSpeed(f"speed is not strictly positive (at r={bad:.6g})")
    if density is not None:
        rho_d = density(r)
        if np.any(rho_d <= 0):
            raise NonPositiveSpeed("density must be strictly positive")
    _, dh = herglotz_profile(R, speed, grid_size)
    i = int(np.argmin(dh))
    margin, where = float(dh[i]), float(r[i])
    if not margin > HERGLOTZ_FLOOR:
        raise HerglotzViolation(
            f"Herglotz condition d/dr(r/c) > 0 fails: min {margin:.6g} at r={where:.6g}",
            radius=where, margin=margin)
    if R == 0.0 and abs(float(speed.derivative(0.0))) > ORIGIN_SLOPE_TOL:
        raise OriginSlopeError(
            f"a ball model needs c'(0) = 0, got {float(speed.derivative(0.0)):.3g}")
    return margin, where


def make_model(R, speed, dim=3, density=None, name="", grid_size=HERGLOTZ_GRID) -> RadialModel:
    """Build and validate a model.  ``speed`` may be anything :func:`as_profile` accepts."""
    speed = as_profile(speed)
    density = None if density is None else as_profile(density)
    margin, where = validate(float(R), speed, dim, density, grid_size)
    return RadialModel(R=float(R), speed=speed, dim=int(dim), density=density,
                       herglotz_margin=margin, margin_radius=where, name=name,
                       grid_size=grid_size)


def load_model(source, grid_size=HERGLOTZ_GRID) -> RadialModel:
    """Load a model document (path, JSON text or already-parsed dict)."""
    if isinstance(source, dict):
        doc = source
    else:
        text = None
        if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
            text = Path(source).read_text(encoding="utf-8")
        else:
            text = source
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"model document is not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(doc, MODEL_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise SchemaError(f"model document violates schema: {exc.message}") from exc
    density = doc.get("density")
    return make_model(
        doc["R"],
        profile_from_dict(doc["speed"]),
        dim=doc.get("dim", 3),
        density=None if density is None else profile_from_dict(density),
        name=doc.get("name", ""),
        grid_size=grid_size,
    )


def eval_speed(model: RadialModel, r):
    """Return ``(c(r), c'(r))``; raises :class:`DomainError` off ``[R, 1]``."""
    r = model.check_domain(r)
    return model.c(r), model.dc(r)


# --------------------------------------------------------------------------
# Conformal normalization of rotationally symmetric metrics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MetricTable:
    """Samples of a rotation-invariant metric at the points ``(r, 0, ..., 0)``.

    In Euclidean coordinates ``(x, y)`` around such a point the metric is
    ``[[a, b^T], [b, C]]``; for ``dim >= 3`` symmetry forces ``b = 0`` and
    ``C`` to be scalar, so only scalars are stored.
    """

    r: tuple
    a: tuple
    C: tuple
    b: tuple | None = None

    def arrays(self):
        r = np.asarray(self.r, dtype=float)
        a = np.asarray(self.a, dtype=float)
        C = np.asarray(self.C, dtype=float)
        b = np.zeros_like(r) if self.b is None else np.asarray(self.b, dtype=float)
        if not (r.shape == a.shape == C.shape == b.shape) or r.ndim != 1 or r.size < 2:
            raise MetricError("metric table arrays must be one-dimensional and equally long")
        if np.any(np.diff(r) <= 0):
            raise MetricError("metric radii must be strictly increasing")
        if abs(r[-1] - 1.0) > DOMAIN_SLACK or r[0] <= 0.0:
            raise MetricError("metric table must span [R, 1] with R > 0")
        if np.any(a <= 0) or np.any(C <= 0) or np.any(b * b >= a * C):
            raise MetricError("metric is not positive definite (need a > 0, C > 0, b^2 < aC)")
        return r, a, b, C


def cross_term_rotation(raw: MetricTable):
    """Angular shift ``phi(r) = -int_1^r b/(s C) ds`` that removes ``b`` in 2D."""
    r, a, b, C = raw.arrays()
    f = PchipInterpolator(r, b / (r * C))
    antideriv = f.antiderivative()
    return -(antideriv(r) - antideriv(1.0))


def normalize_metric(raw: MetricTable, dim: int = 3, epsrel: float = 1e-10,
                     grid_size=HERGLOTZ_GRID) -> RadialModel:
    """Rewrite a rotationally symmetric metric as ``c^{-2}`` times Euclidean.

    The radial reparametrization is
    ``rho(s) = exp(int_1^s sqrt(a/C) / t dt)``, which fixes the outer
    boundary and maps ``R`` to ``rho(R) > 0``; the conformal factor at the new
    radius ``rho`` is ``C(s) (s / rho)^2``.
    """
    if dim < 2:
        raise MetricError("dimension must be >= 2")
    r, a, b, C = raw.arrays()
    if dim >= 3 and np.any(b != 0.0):
        raise MetricError("for dim >= 3 rotational symmetry forces b = 0")
    r, new_r = radius_map(raw, epsrel=epsrel)
    speed = np.sqrt(1.0 / C) * new_r / r
    if np.allclose(speed, speed[0], rtol=0.0, atol=1e-14):
        profile = ConstantProfile(float(speed[0]))
    else:
        profile = TableProfile(tuple(new_r), tuple(speed))
    return make_model(float(new_r[0]), profile, dim=dim, grid_size=grid_size)


def conformal_metric_table(model: RadialModel, r=None) -> MetricTable:
    """The metric of ``model`` written as a :class:`MetricTable` (``a = C = c^-2``)."""
    if r is None:
        r = np.linspace(model.R, 1.0, 257)
    r = np.asarray(r, dtype=float)
    eta = model.c(r) ** -2
    return MetricTable(tuple(r), tuple(eta), tuple(eta))


def stretch_metric(model: RadialModel, power: float, r=None) -> MetricTable:
    """Metric obtained by pulling ``model`` back along ``s -> s**power``.

    Useful as a non-conformal test input: normalizing the result must recover
    ``model``.
    """
    if r is None:
        r_new = np.linspace(model.R, 1.0, 257)
    else:
        r_new = np.asarray(r, dtype=float)
    s = r_new ** (1.0 / power)
    eta = model.c(r_new) ** -2
    # radial: eta(rho) rho'(s)^2 ; tangential: eta(rho) (rho/s)^2
    drho = power * s ** (power - 1.0)
    a = eta * drho ** 2
    C = eta * (r_new / s) ** 2
    return MetricTable(tuple(s), tuple(a), tuple(C))


def radius_map(raw: MetricTable, epsrel: float = 1e-10):
    """``(s, rho(s))`` at the table knots, without building a model."""
    r, a, b, C = raw.arrays()
    if np.any(b != 0.0):
        a = a - b * b / C
    ratio = PchipInterpolator(r, np.sqrt(a / C))
    # accumulate from the outer boundary inward, knot to knot
    log_rho = np.zeros_like(r)
    for i in range(r.size - 2, -1, -1):
        piece, _ = quad(lambda t: float(ratio(t)) / t, r[i + 1], r[i],
                        epsabs=0.0, epsrel=epsrel, limit=200)
        log_rho[i] = log_rho[i + 1] + piece
    rho = np.exp(log_rho)
    rho[-1] = 1.0
    return r, rho


def is_close_speed(m1: RadialModel, m2: RadialModel, n=2001) -> float:
    """Sup-norm distance between two speeds on their common domain."""
    lo = max(m1.R, m2.R)
    r = np.linspace(lo, 1.0, n)
    return float(np.max(np.abs(m1.c(r) - m2.c(r))))

