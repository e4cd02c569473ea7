import math

import numpy as np
import pytest

from nemstrip import aniso, convergence, hydro
from nemstrip.convergence import SweepConfig
from nemstrip.errors import CompatibilityError, ContractViolation
from nemstrip.grid import StripGrid
from nemstrip.reference import kolmogorov
from nemstrip.tensor import BulkParams
from oracles import fft_deriv

TWO_PI = 2 * np.pi


def paired(h):
    """Anisotropic state carrying exactly the hydrostatic fields."""
    h = hydro.with_reconstruction(h)
    return aniso.AnisoState(h.grid, h.u, h.v, h.w, (h.q11, h.q12, h.q22, h.q13, h.q23), t=h.t)


def test_diff_of_identical_states_is_zero():
    g = StripGrid(16, 16, 16, eps=0.1)
    h = hydro.random_admissible_state(g, 0)
    d = convergence.diff_state(paired(h), h)
    assert all(np.all(f == 0) for f in d.fields().values())
    assert convergence.energy_H(d).h_total == 0.0


def test_diff_against_zero_hydro():
    g = StripGrid(8, 8, 8, eps=0.2)
    a = aniso.random_state(g, 1, 0.5)
    h = hydro.hydro_state(g, g.zeros(), g.zeros())
    d = convergence.diff_state(a, h)
    for name, f in zip(("du", "dv", "dw"), (a.u, a.v, a.w)):
        np.testing.assert_array_equal(d.fields()[name], f)
    for name, f in zip(("dq11", "dq12", "dq22", "dq13", "dq23"), a.q):
        np.testing.assert_array_equal(d.fields()[name], f)


def test_diff_mismatch_errors():
    g = StripGrid(8, 8, 8, eps=0.2)
    h = hydro.hydro_state(g, g.zeros(), g.zeros())
    with pytest.raises(CompatibilityError):
        convergence.diff_state(aniso.zero_state(StripGrid(8, 8, 8, eps=0.1)), h)
    with pytest.raises(CompatibilityError):
        convergence.diff_state(aniso.zero_state(g, t=0.5), h, dt=0.1)


def test_energy_H_examples():
    g = StripGrid(8, 8, 16, eps=0.3)
    _, _, Z = g.coords()
    z = g.zeros()
    delta = 0.2
    d = convergence.DiffState(g, z, z, z, z, delta * np.cos(Z) + z, z, z, z, z)
    assert convergence.energy_H(d).h_total == pytest.approx(delta**2 * TWO_PI**3, rel=1e-12)
    d = convergence.DiffState(g, np.ones(g.shape), z, z, z, z, z, z, z, z)
    assert convergence.energy_H(d).h_total == pytest.approx(TWO_PI**3 / 2, rel=1e-13)


def test_forcing_zero_cases():
    g = StripGrid(8, 8, 16, eps=0.1)
    _, _, Z = g.coords()
    shear = hydro.hydro_state(g, np.sin(Z) + 0.3 * np.cos(2 * Z) + g.zeros(), np.sin(Z) + g.zeros())
    assert convergence.forcing_F(shear).total == pytest.approx(0.0, abs=1e-20)
    assert convergence.forcing_F(kolmogorov(g, 1.0, 0.5, 1.0, 0.0)).total == pytest.approx(0.0, abs=1e-20)


def _oracle_terms(h, aux, eps):
    """Independent termwise evaluation with complex-FFT derivatives."""
    vol = TWO_PI**3 / h.u.size

    def sq(*fs):
        return sum(float(np.sum(f * f)) for f in fs) * vol

    def grad_e(f):
        return (eps * fft_deriv(f, 0), eps * fft_deriv(f, 1), fft_deriv(f, 2))

    def lap_h(f):
        return fft_deriv(f, 0, 2) + fft_deriv(f, 1, 2)

    q13, q23 = aux["q13"], aux["q23"]
    five = (h.q11, h.q12, h.q22, eps * q13, eps * q23)
    wx, wy, wz = (fft_deriv(h.w, a) for a in range(3))
    out = {
        "lap_h_velocity": eps**4 * sq(lap_h(h.u), lap_h(h.v), eps * lap_h(h.w)),
        "dt_w": eps**2 * sq(aux["wt"]),
        "w_transport": eps**2 * sq(h.u * wx + h.v * wy + h.w * wz),
        "dt_q13_q23": eps**6 * sq(aux["q13t"], aux["q23t"]),
        "grad_q": sum(sq(*grad_e(f)) for f in five),
        "wx_q": eps**2 * sq(*(wx * f for f in five)),
        "grad_eps_q13_q23": sq(*grad_e(eps * q13), *grad_e(eps * q23)),
        "q_l2": sq(*five),
        "q_l4": float(np.sum(sum(f * f for f in five) ** 2)) * vol,
        "lap_h_q": eps**4 * sq(*(lap_h(f) for f in five), eps * aux["q13t"], eps * aux["q23t"]),
        "grad_h_w_q": eps**4 * sq(wx * q13, wx * q23, wy * q13, wy * q23),
        "hess_eps_q13_q23": sum(sq(*grad_e(c)) for f in (eps * q13, eps * q23) for c in grad_e(f)),
        "grad_q_squares": sum(sq(*grad_e(f * f)) for f in five),
    }
    return out


def test_forcing_double_assembly():
    g = StripGrid(16, 16, 16, eps=0.1)
    h = hydro.random_admissible_state(g, 2, velocity_amp=0.1, q_amp=0.05)
    rep = convergence.forcing_F(h)
    ref = _oracle_terms(h, rep.aux, 0.1)
    got = rep.breakdown()
    assert set(got) == set(ref)
    for k in ref:
        assert got[k] == pytest.approx(ref[k], rel=1e-10, abs=1e-300), k
    assert rep.total == pytest.approx(sum(ref.values()), rel=1e-12)


def test_forcing_eps_scaling_termwise():
    g = StripGrid(16, 16, 16, eps=0.1)
    h = hydro.random_admissible_state(g, 3, velocity_amp=0.1, q_amp=0.05)
    full = convergence.forcing_F(h, 0.1)
    half = convergence.forcing_F(h, 0.05, derivs=full.aux)
    factor = {2: 1 / 4, 4: 1 / 16, 6: 1 / 64}
    checked = 0
    for k, term in full.terms.items():
        if term.eps_free and term.power in factor:
            assert half.terms[k].value(0.05) == pytest.approx(factor[term.power] * term.value(0.1), rel=1e-14)
            checked += 1
    assert checked == 4


def test_forcing_translation_invariant():
    g = StripGrid(16, 16, 16, eps=0.1)
    h = hydro.random_admissible_state(g, 4, velocity_amp=0.1, q_amp=0.05)
    f0 = convergence.forcing_F(h).total
    shifted = hydro.hydro_state(g, np.roll(h.u, 3, 0), np.roll(h.v, 3, 0), np.roll(h.q11, 3, 0))
    assert convergence.forcing_F(shifted).total == pytest.approx(f0, rel=1e-9)


def test_verify_bound_examples():
    t = np.linspace(0, 1, 11)
    r = convergence.verify_bound([(ti, 3.0, 0.0) for ti in t])
    assert r.constant == 0.0 and r.holds
    intF = t**2
    r = convergence.verify_bound(list(zip(t, 1.0 + 2.0 * intF, intF)))
    assert r.constant == pytest.approx(2.0, abs=1e-6) and r.holds
    r = convergence.verify_bound([(0.0, 1.0, 0.0), (1.0, 2.0, 0.0)])
    assert math.isinf(r.constant) and not r.holds
    with pytest.raises(ContractViolation):
        convergence.verify_bound([])


def test_fit_order_and_consistency():
    eps = [0.2, 0.1, 0.05]
    slope, (lo, hi) = convergence.fit_order(eps, [3 * e**2 for e in eps])
    assert slope == pytest.approx(2.0, abs=1e-12) and lo - 1e-12 <= 2.0 <= hi + 1e-12
    assert convergence.fit_order([0.1], [1.0]) is None
    slope, interval = convergence.fit_order([0.2, 0.1], [4.0, 1.0])
    assert slope == pytest.approx(2.0) and all(math.isnan(x) for x in interval)
    assert convergence.constants_consistent([1.0, 1.9])
    assert not convergence.constants_consistent([1.0, 2.1])
    assert convergence.constants_consistent([0.0, 0.0])
    assert not convergence.constants_consistent([1.0, math.inf])


def test_sweep_config_validation():
    with pytest.raises(ContractViolation):
        SweepConfig(eps_list=(0.1, 0.2))
    with pytest.raises(ContractViolation):
        SweepConfig(stride=0)


def small_cfg(**kw):
    base = dict(nx=16, ny=16, nz=16, dt=0.01, t_end=0.1, stride=2, bulk=BulkParams(5.0, 1.0, 2.0))
    base.update(kw)
    return SweepConfig(**base)


def test_initial_pair_energy():
    cfg = small_cfg()
    a, h = convergence.initial_pair(cfg, 0.1)
    g0 = convergence.energy_H(convergence.diff_state(a, h)).h_total
    assert g0 == pytest.approx((cfg.g0_coef * 0.1) ** 2, rel=0.5)
    assert aniso.divergence_max(a) <= 1e-10


def test_single_eps_sweep_has_no_fit():
    table = convergence.epsilon_sweep(small_cfg(eps_list=(0.1,)))
    assert len(table.rows) == 1 and table.order is None
    assert len(table.rows[0]) == len(convergence.SWEEP_HEADER)
    assert table.errors == []
    d = table.as_dict()
    assert d["columns"] == list(convergence.SWEEP_HEADER)


def test_sweep_partial_table_on_failure():
    # velocity amplitude pushes the CFL limit below dt for the largest eps only
    cfg = small_cfg(eps_list=(2.0, 0.05), velocity_coef=20.0, dt=0.01)
    table = convergence.epsilon_sweep(cfg)
    assert table.errors and "eps=2.0" in table.errors[0]
    assert any(r[0] == 0.05 for r in table.rows)
