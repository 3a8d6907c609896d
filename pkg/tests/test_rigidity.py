from __future__ import annotations

import numpy as np
import pytest

from helioseis import lsp, make_model, rays, rigidity
from helioseis.errors import ContinuationError, HerglotzViolation, RegimeError, ValidationError


def test_abel_forward_closed_form(const_ball, const_shell):
    r = np.linspace(0.0, 0.999, 50)
    np.testing.assert_allclose(rigidity.abel_forward(const_ball, 1.0, r), np.sqrt(1 - r * r), atol=1e-12)
    # f = s^2: int_r^1 s^3 / sqrt(s^2 - r^2) ds = sqrt(1 - r^2) (1 + 2 r^2) / 3
    g = rigidity.abel_forward(const_ball, lambda s: s * s, r)
    np.testing.assert_allclose(g, np.sqrt(1 - r * r) * (1 + 2 * r * r) / 3, atol=1e-12)
    with pytest.raises(ValidationError):
        rigidity.abel_forward(const_shell, 1.0, 0.1)


def test_abel_grid_structure(linear_shell):
    grid = rigidity.AbelGrid(linear_shell, np.linspace(0.1, 1.0, 40))
    assert np.all(grid.K >= 0)
    assert np.allclose(grid.K, np.triu(grid.K))
    exact = rigidity.abel_forward(linear_shell, 1.0, grid.r)
    np.testing.assert_allclose(grid.forward(np.ones(40)), exact, atol=2e-3)
    with pytest.raises(ValidationError):
        rigidity.AbelGrid(linear_shell, np.array([0.1, 0.5]))


@pytest.mark.parametrize("R", [0.0, 0.2])
def test_abel_round_trip(R):
    m = make_model(R, 1.0) if R == 0 else make_model(R, [1.3, -0.2, -0.1])
    r = np.linspace(R, 1.0, 400)
    f = lambda s: 1.0 + s * (1 - s)  # noqa: E731
    inv = rigidity.abel_invert(m, rigidity.abel_forward(m, f, r), r)
    err = np.sqrt(np.mean((inv.f - f(r)) ** 2)) / np.sqrt(np.mean(f(r) ** 2))
    assert err < 1e-3
    assert inv.effective_rank == 399 and inv.consistency < 1e-12


def test_abel_kernel_invert_unit(const_ball):
    r = np.linspace(0, 1, 300)
    inv = rigidity.abel_invert(const_ball, np.sqrt(1 - r * r), r)
    np.testing.assert_allclose(inv.f[:-1], 1.0, atol=1e-9)


def test_family_validation(linear_shell):
    fam = rigidity.DeformationFamily(linear_shell, [0.0, 0.0, 1.0])
    r = np.linspace(0.1, 1.0, 7)
    tau = 1e-6
    fd = (fam.model(tau).c(r) ** -2 - fam.model(-tau).c(r) ** -2) / (2 * tau)
    np.testing.assert_allclose(fam.variation(r), fd, rtol=1e-8)
    add = rigidity.DeformationFamily(linear_shell, [0.0, 0.0, 1.0], additive=True)
    fd = (add.model(tau).c(r) ** -2 - add.model(-tau).c(r) ** -2) / (2 * tau)
    np.testing.assert_allclose(add.variation(r), fd, rtol=1e-8)
    with pytest.raises(HerglotzViolation):
        rigidity.DeformationFamily(make_model(0.0, 1.0), [0.0, 0.0, 0.0, 80.0], eps=0.01)
    with pytest.raises(ValidationError):
        rigidity.DeformationFamily(linear_shell, 1.0, eps=0.0)


def test_track_keeps_angle(linear_shell):
    fam = rigidity.DeformationFamily(linear_shell, [0.0, 0.5, -0.5])
    orb = rigidity.stable_diving(lsp.enumerate_lsp(linear_shell, 5))[0]
    taus = [-0.01, -0.005, 0.005, 0.01]
    phi = rigidity.track_orbit(fam, orb.parameter, taus)
    for tau, r in zip(taus, phi):
        assert float(rays.alpha(fam.model(tau), r)) == pytest.approx(np.pi * orb.m / orb.n, abs=1e-12)


def test_continuation_leaves_admissible_set():
    base = make_model(0.0, 1.0)
    fam = rigidity.DeformationFamily(base, [0.0, 0.0, 1.0], eps=1e-3)
    orb = lsp.enumerate_lsp(base, 3)[1]
    with pytest.raises(ContinuationError) as info:
        rigidity.track_orbit(fam, orb.parameter, [0.001, 2.0])
    assert info.value.last_good_tau == 0.001


def test_identity_constant_base(const_ball):
    fam = rigidity.DeformationFamily(const_ball, [0.0, 0.0, 1.0, -0.5])
    for orb in rigidity.stable_diving(lsp.enumerate_lsp(const_ball, 5)):
        lhs, rhs, res = rigidity.length_derivative_check(fam, orb)
        assert res < 1e-8
        # c0 = 1: weighted and bare forms coincide
        assert rigidity.length_derivative_check(fam, orb, weighted=False)[1] == pytest.approx(rhs)


def test_identity_weighted_nonconstant(linear_shell):
    fam = rigidity.DeformationFamily(linear_shell, [0.0, 1.0, -1.0])
    orb = rigidity.stable_diving(lsp.enumerate_lsp(linear_shell, 5))[0]
    lhs, rhs, res = rigidity.length_derivative_check(fam, orb)
    assert res < 1e-8
    _, bare, bare_res = rigidity.length_derivative_check(fam, orb, weighted=False)
    assert bare_res > 1e-2


def test_length_derivatives_reject_limit_orbit(const_ball):
    fam = rigidity.DeformationFamily(const_ball, [0.0, 0.0, 1.0])
    diam = [o for o in lsp.enumerate_lsp(const_ball, 3) if o.limit]
    with pytest.raises(RegimeError):
        rigidity.length_derivatives(fam, diam)


def test_rigidity_experiment(linear_shell):
    fam = rigidity.DeformationFamily(linear_shell, [0.0, 0.0, 1.0])
    out = rigidity.rigidity_experiment(fam, 10, grid_size=400)
    assert out["detected"] and out["max_residual"] < 1e-8
    assert out["reconstruction_error"] < 1e-2
    flat = rigidity.DeformationFamily(linear_shell, 0.0)
    out = rigidity.rigidity_experiment(flat, 6, grid_size=200)
    assert not out["detected"]
