from __future__ import annotations

import numpy as np
import pytest
from scipy.integrate import trapezoid

from helioseis import make_model, modes, rays
from helioseis.errors import NoRootError, RegimeError


def test_k0_closed_forms(const_ball, const_shell):
    for n in (0, 3, 17):
        d = modes.solve_omega(const_ball, "diving", n, 0.0)
        assert d.omega == pytest.approx((n + 1.25) * np.pi, rel=1e-13)
        r = modes.solve_omega(const_shell, "reflecting", n, 0.0)
        assert r.omega == pytest.approx((n + 1) * np.pi / 0.8, rel=1e-13)
        assert r.norm_constant == pytest.approx((2 * 0.8) ** -0.5, rel=1e-12)


def test_quantization_residual(const_ball):
    m = make_model(0.0, [1.0, 0.0, -0.4])
    for n, k in ((0, 3.5), (4, 10.5), (10, 1.5)):
        mode = modes.solve_omega(m, "diving", n, k)
        res = modes.quantization_residual(m, "diving", n, k, mode.omega)
        assert abs(res) < 1e-11
        assert mode.p == pytest.approx(k / mode.omega, rel=1e-14)


def test_solve_errors(const_shell):
    with pytest.raises(NoRootError):
        modes.solve_omega(const_shell, "reflecting", 0, 1000.0)
    with pytest.raises(ValueError):
        modes.solve_omega(const_shell, "diving", -1, 1.0)
    with pytest.raises(ValueError):
        modes.solve_omega(const_shell, "sideways", 0, 1.0)
    with pytest.raises(RegimeError):
        modes.p_window(make_model(0.0, 1.0), "reflecting")


def test_dispersion_table_shape_and_gaps(const_shell):
    tab = modes.dispersion_table(const_shell, "reflecting", [0, 2, 3], [0.0, 1.5, 1000.0])
    assert len(tab) == 3 and len(tab[0]) == 3
    # n = 0 at k = 1.5 turns above R (a diving mode), large k never reflects
    assert tab[0][1] is None and all(row[2] is None for row in tab)
    assert tab[2][1].omega > tab[1][1].omega
    single = modes.solve_omega(const_shell, "reflecting", 3, 1.5)
    assert tab[2][1].omega == pytest.approx(single.omega, rel=1e-13)


def test_group_speed_is_ray_angle_over_time(const_ball):
    ks = [9.9, 10.0, 10.1]
    curve = modes.dispersion_table(const_ball, "diving", [5], ks)[0]
    phase, group, p = modes.phase_group(curve, 10.0)
    rt = float(rays.invert_rho(const_ball, p))
    expected = float(rays.alpha(const_ball, rt) / rays.half_length(const_ball, rt))
    assert group == pytest.approx(expected, rel=1e-5)
    assert phase == pytest.approx(1 / p)
    with pytest.raises(ValueError):
        modes.phase_group(curve, 9.9)


def test_reflecting_eigenfunction_normalized(const_shell):
    mode = modes.solve_omega(const_shell, "reflecting", 40, 0.0)
    r = np.linspace(0.2, 1.0, 20001)
    V, dV = modes.wkb_eigenfunction(const_shell, mode, r)
    assert trapezoid(V ** 2, r) == pytest.approx(1.0, abs=1e-3)
    fd = np.gradient(V, r)
    assert np.max(np.abs(fd[5:-5] - dV[5:-5])) < 1e-4 * np.max(np.abs(dV))


def test_langer_eigenfunction(const_ball):
    mode = modes.solve_omega(const_ball, "diving", 40, 20.5)
    r = np.linspace(1e-6, 1.0, 40001)
    V, dV = modes.wkb_eigenfunction(const_ball, mode, r)
    assert trapezoid(V ** 2, r) == pytest.approx(1.0, abs=1e-3)
    assert np.all(np.isfinite(V)) and np.all(np.isfinite(dV))
    # smooth through the turning point, decaying below it
    fd = np.gradient(V, r)
    assert np.max(np.abs(fd[5:-5] - dV[5:-5])) < 1e-4 * np.max(np.abs(dV))
    below = r < 0.5 * mode.p
    assert np.max(np.abs(V[below])) < 1e-4 * np.max(np.abs(V))
    assert np.all(np.diff(np.abs(V[below])) >= 0)
    # the outer boundary sits at a WKB antinode (Neumann-type limit)
    assert abs(float(modes.wkb_eigenfunction(const_ball, mode, 1.0)[0])) > 0.5 * np.max(np.abs(V))


def test_mode_set_consistent(const_shell):
    ms = modes.mode_set(const_shell, 40, 60.0)
    assert len(ms) > 0 and np.all(ms.omega <= 60.0)
    assert set(np.unique(ms.regime)) == {0, 1}
    for code, regime in enumerate(("diving", "reflecting")):
        sel = ms.regime == code
        res = modes.quantization_residual(const_shell, regime, ms.n[sel], ms.k[sel], ms.omega[sel])
        assert np.max(np.abs(res)) < 1e-10
    # spot check against the scalar solver
    i = len(ms) // 2
    one = modes.solve_omega(const_shell, ("diving", "reflecting")[ms.regime[i]], int(ms.n[i]), float(ms.k[i]))
    assert one.omega == pytest.approx(ms.omega[i], rel=1e-12)
    np.testing.assert_array_equal(ms.weights, 2 * ms.l + 1)


def test_mode_set_complete(const_shell):
    # every (l, n) with omega below the cutoff is present exactly once
    ms = modes.mode_set(const_shell, 10, 40.0)
    seen = set(zip(ms.l.tolist(), ms.n.tolist(), ms.regime.tolist()))
    assert len(seen) == len(ms)
    for l in (0, 5, 10):
        for code, regime in enumerate(("diving", "reflecting")):
            tab = modes.dispersion_table(const_shell, regime, range(0, 20), [l + 0.5], with_norm=False)
            want = {(l, row[0].n, code) for row in tab if row[0] is not None and row[0].omega <= 40.0}
            got = {x for x in seen if x[0] == l and x[2] == code}
            assert want == got


@pytest.mark.slow
def test_weyl_count(const_shell):
    omega_max = 500.0
    ms = modes.mode_set(const_shell, 520, omega_max)
    weyl = 2 * omega_max ** 3 * (1 - 0.2 ** 3) / (9 * np.pi)
    assert abs(ms.weights.sum() / weyl - 1) < 0.05
