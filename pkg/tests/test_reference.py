import math
import warnings

import numpy as np
import pytest

from nemstrip import hydro
from nemstrip.errors import ContractViolation, ShootingError
from nemstrip.grid import StripGrid
from nemstrip.reference import (
    ShearFlow,
    blasius_field,
    blasius_solve,
    kolmogorov,
    modulated_shear,
    random_prandtl_velocity,
    shear_coefficients,
    shear_heat,
    shear_state,
    vorticity_norm_series,
)


@pytest.fixture(scope="module")
def profile():
    return blasius_solve()


def test_kolmogorov_examples():
    g = StripGrid(4, 4, 16)
    _, _, Z = g.coords()
    s = kolmogorov(g, 1.5, -0.5, 1.0, 0.0)
    np.testing.assert_allclose(s.u, 1.5 * np.sin(Z) + g.zeros(), atol=1e-15)
    np.testing.assert_allclose(s.v, -0.5 * np.sin(Z) + g.zeros(), atol=1e-15)
    assert np.all(s.w == 0)
    z = kolmogorov(g, 0.0, 0.0, 1.0, 0.3)
    assert np.all(z.u == 0) and np.all(z.v == 0)


@pytest.mark.parametrize("make", [lambda g, t: kolmogorov(g, 1.0, 0.7, 0.6, t), lambda g, t: modulated_shear(g, 0.8, 0.6, t)])
def test_shear_flows_solve_prandtl(make):
    g = StripGrid(8, 8, 16)
    s = make(g, 0.4)
    ut, vt = hydro.prandtl_rhs(s)
    np.testing.assert_allclose(ut, -0.6 * s.u, atol=1e-12)
    np.testing.assert_allclose(vt, -0.6 * s.v, atol=1e-12)


def test_shear_heat_modes():
    z = np.linspace(0, 2 * np.pi, 33)
    u, v = shear_heat(ShearFlow((1.0,), (0.0,), nu=0.5), 2.0, z)
    np.testing.assert_allclose(u, math.exp(-1.0) * np.sin(z), atol=1e-15)
    assert np.all(v == 0)
    f1 = ShearFlow((1.0, 0.0, 0.3), (0.0, 2.0), nu=0.7)
    u, v = shear_heat(f1, 0.5, z)
    expect_u = math.exp(-0.35) * np.sin(z) + 0.3 * math.exp(-9 * 0.35) * np.sin(3 * z)
    np.testing.assert_allclose(u, expect_u, atol=1e-15)
    np.testing.assert_allclose(v, 2.0 * math.exp(-4 * 0.35) * np.sin(2 * z), atol=1e-15)
    with pytest.raises(ContractViolation):
        ShearFlow((1.0,), (1.0,), nu=0.0)


def test_shear_coefficients_inverse():
    n = 32
    z = (np.arange(n) + 0.5) * 2 * np.pi / n
    coef = np.array([0.5, -1.0, 0.25])
    u, _ = shear_heat(ShearFlow(tuple(coef), (0.0,)), 0.0, z)
    got = shear_coefficients(u, z)
    np.testing.assert_allclose(got[:3], coef, atol=1e-13)
    np.testing.assert_allclose(got[3:], 0.0, atol=1e-13)


def test_shear_state_matches_stepper():
    g = StripGrid(4, 4, 32)
    flow = ShearFlow((1.0, 0.5), (0.3, 0.0, 0.2), nu=1.0)
    s = shear_state(g, flow)
    for _ in range(100):
        s = hydro.step_prandtl(s, 0.01)
    ref = shear_state(g, flow, s.t)
    err = math.sqrt(g.l2sq(s.u - ref.u, s.v - ref.v) / g.l2sq(ref.u, ref.v))
    assert err <= 1e-4


def test_blasius_boundary_values(profile):
    assert profile.f[0] == 0.0 and profile.fp[0] == 0.0
    assert abs(profile.fp[-1] - 1.0) <= 1e-6
    assert profile.eta[-1] == 12.0
    mid = 0.5 * (profile.eta[1:] + profile.eta[:-1])
    assert np.max(profile.ode_residual(mid)) <= 1e-8
    assert np.max(profile.ode_residual(profile.eta)) <= 1e-8
    assert len(profile.rows()[0]) == 4


def test_blasius_fpp0_stable():
    vals = [blasius_solve(eta_max=e).fpp0 for e in (10.0, 12.0, 14.0)]
    assert max(vals) - min(vals) <= 1e-5


def test_blasius_errors():
    with pytest.raises(ShootingError) as exc:
        blasius_solve(bracket=(0.5, 1.0))
    assert exc.value.bracket == (0.5, 1.0)
    with pytest.raises(ContractViolation):
        blasius_solve(eta_max=5.0)


def test_blasius_field_limits(profile):
    u, v = blasius_field(profile, np.array([0.0, 1.0]), np.array([0.0, 0.0]))
    np.testing.assert_allclose(u, 0.0, atol=1e-15)
    np.testing.assert_allclose(v, 0.0, atol=1e-15)
    u, _ = blasius_field(profile, 0.5, 11.0)
    assert abs(u - 1.0) < 1e-6
    with pytest.warns(RuntimeWarning):
        u, _ = blasius_field(profile, 0.0, 50.0)
    assert abs(u - 1.0) < 1e-6
    with pytest.raises(ContractViolation):
        blasius_field(profile, -1.0, 0.0)


def test_blasius_field_continuity(profile):
    x = np.linspace(0.2, 3.0, 15)[:, None]
    y = np.linspace(0.1, 8.0, 40)[None, :]
    h = 1e-4
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ux = (blasius_field(profile, x + h, y)[0] - blasius_field(profile, x - h, y)[0]) / (2 * h)
        vy = (blasius_field(profile, x, y + h)[1] - blasius_field(profile, x, y - h)[1]) / (2 * h)
    assert np.max(np.abs(ux + vy)) <= 1e-6


def test_blasius_field_rescaling(profile):
    x, d = 0.7, 1.3
    y = np.linspace(0.0, 6.0, 25)
    a, _ = blasius_field(profile, x + d, y)
    b, _ = blasius_field(profile, x, y * math.sqrt((x + 1) / (x + d + 1)))
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_vorticity_series_zero_flow():
    g = StripGrid(8, 8, 8)
    s = hydro.hydro_state(g, g.zeros(), g.zeros())
    series = []
    for _ in range(3):
        series.append((s.t, hydro.vorticity_norms(s)))
        s = hydro.step_prandtl(s, 0.1)
    rep = vorticity_norm_series(series)
    assert rep.all_monotone
    assert all(v == 0 for _, n in series for v in n.values())


def test_vorticity_decay_for_modulated_shear():
    g = StripGrid(8, 8, 16)
    s = modulated_shear(g, 0.8, 0.5, 0.0)
    n0 = hydro.vorticity_norms(s)
    series = [(0.0, n0)]
    for _ in range(50):
        s = hydro.step_prandtl(s, 0.01)
        series.append((s.t, hydro.vorticity_norms(s)))
    for k, v in series[-1][1].items():
        assert v == pytest.approx(n0[k] * math.exp(-0.5 * s.t), rel=1e-10)
    assert vorticity_norm_series(series).all_monotone


def test_vorticity_series_flags_growth():
    rep = vorticity_norm_series([(0.0, {0: 1.0}), (1.0, {0: 1.0 + 1e-6})])
    assert not rep.all_monotone and rep.worst_drift[0] == pytest.approx(1e-6)
    with pytest.raises(ContractViolation):
        vorticity_norm_series([])


def test_random_prandtl_velocity_compatible():
    g = StripGrid(16, 16, 16)
    s = random_prandtl_velocity(g, 3)
    assert np.max(np.abs(g.divergence(s.u, s.v, s.w))) <= 1e-10
