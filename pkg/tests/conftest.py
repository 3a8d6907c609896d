from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, assume, settings
from hypothesis import strategies as st

from helioseis import make_model

settings.register_profile(
    "repo", deadline=None, derandomize=True, max_examples=25,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.filter_too_much],
)
settings.load_profile("repo")


def _poly_min(poly, lo, hi):
    """Exact minimum of a polynomial on ``[lo, hi]`` (endpoints and critical points)."""
    d = poly.deriv().trim(1e-12)
    roots = d.roots() if d.degree() >= 1 else []
    cand = [lo, hi] + [z.real for z in roots if abs(z.imag) < 1e-12 and lo < z.real < hi]
    return float(min(poly(x) for x in cand))


def certified_margin(R, coeffs):
    """Minima of ``c - r c'`` and of ``c`` over ``[R, 1]`` for a polynomial ``c``.

    ``d/dr (r/c) = (c - r c') / c^2``, so positivity of both certifies the
    Herglotz condition without relying on a sampling grid.
    """
    c = np.polynomial.Polynomial(coeffs)
    g = c - np.polynomial.Polynomial([0, 1]) * c.deriv()
    return _poly_min(g, R, 1.0), _poly_min(c, R, 1.0)


@st.composite
def admissible_models(draw, ball=None, margin=0.05):
    """Polynomial speeds with a certified Herglotz margin.

    Ball models (``R = 0``) omit the linear term so that ``c'(0) = 0``.
    """
    is_ball = draw(st.booleans()) if ball is None else ball
    R = 0.0 if is_ball else draw(st.floats(0.05, 0.6))
    a0 = draw(st.floats(0.5, 2.0))
    a1 = 0.0 if is_ball else draw(st.floats(-0.8, 0.3)) * a0
    a2 = draw(st.floats(-0.6, 0.2)) * a0
    a3 = draw(st.floats(-0.3, 0.3)) * a0
    coeffs = [a0, a1, a2, a3]
    g_min, c_min = certified_margin(R, coeffs)
    assume(g_min > margin * a0 and c_min > 0.1)
    return make_model(R, coeffs)


@pytest.fixture(scope="session")
def const_ball():
    return make_model(0.0, 1.0)


@pytest.fixture(scope="session")
def const_shell():
    return make_model(0.2, 1.0)


@pytest.fixture(scope="session")
def linear_shell():
    return make_model(0.1, [2.0, -1.0])


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request, capsys):
    """Record a criterion verdict: printed immediately and in the summary."""
    log = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number, ok, detail):
        line = f"CRITERION {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        log.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter, config):
    log = config.stash.get(_ACCEPTANCE, [])
    if log:
        terminalreporter.section("acceptance criteria")
        for line in sorted(log, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
