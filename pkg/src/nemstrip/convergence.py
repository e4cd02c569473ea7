"""Anisotropic vs hydrostatic comparison: difference fields, their energy,
the limit-system forcing functional, bound fitting and epsilon sweeps.

The difference is always recomputed from two independently advanced states;
no residual PDE is integrated.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import stats

from . import aniso, hydro
from .errors import CompatibilityError, ContractViolation, NemstripError
from .grid import StripGrid
from .tensor import BulkParams

DIFF_NAMES = ("du", "dv", "dw", "dq11", "dq12", "dq22", "dq13", "dq23")
CSV_HEADER = ("t", "h_total", "h_velocity", "h_q_l2", "h_q_h1", "f_forcing", "f_integral", "aniso_f_total")
SWEEP_HEADER = (
    "eps",
    "g0",
    "h0",
    "sup_h",
    "sup_aniso_f",
    "f_integral",
    "f_integral_over_eps2",
    "bound_constant",
    "linf_ratio",
    "flag_f_integral",
    "flag_linf",
)


@dataclass(frozen=True)
class DiffState:
    grid: StripGrid
    du: np.ndarray
    dv: np.ndarray
    dw: np.ndarray
    dp: np.ndarray
    dq11: np.ndarray
    dq12: np.ndarray
    dq22: np.ndarray
    dq13: np.ndarray
    dq23: np.ndarray
    t: float = 0.0

    @property
    def eps(self) -> float:
        return self.grid.eps

    def fields(self) -> dict[str, np.ndarray]:
        return {n: getattr(self, n) for n in DIFF_NAMES + ("dp",)}


@dataclass(frozen=True)
class ConvergenceEnergy:
    velocity: float
    q_l2: float
    q_h1: float
    f_forcing: float | None = None
    f_integral: float | None = None

    @property
    def h_total(self) -> float:
        return self.velocity + self.q_l2 + self.q_h1


def diff_state(a: aniso.AnisoState, h: hydro.HydroState, dt: float | None = None) -> DiffState:
    """Anisotropic minus hydrostatic fields on a shared grid.

    q13/q23 are paired with the reconstruction of the hydrostatic state, which
    is computed here when the state does not carry it.
    """
    if a.grid != h.grid:
        raise CompatibilityError(f"grid mismatch: {a.grid} vs {h.grid}")
    tol = 0.5 * dt if dt is not None else 1e-9 * max(1.0, abs(a.t))
    if abs(a.t - h.t) > tol:
        raise CompatibilityError(f"time mismatch: aniso t={a.t}, hydro t={h.t}")
    if h.q13 is None:
        h = hydro.with_reconstruction(h)
    q11, q12, q22, q13, q23 = a.q
    dp = a.p - h.pressure[:, :, None] if a.p is not None else -h.pressure[:, :, None] + a.grid.zeros()
    return DiffState(
        a.grid,
        a.u - h.u,
        a.v - h.v,
        a.w - h.w,
        dp,
        q11 - h.q11,
        q12 - h.q12,
        q22 - h.q22,
        q13 - h.q13,
        q23 - h.q23,
        a.t,
    )


def _tr2(q11, q12, q22, q13, q23, eps):
    """tr(Q^2) of the full scaled matrix from its five independent entries."""
    e2 = eps * eps
    return 2.0 * (q11 * q11 + q12 * q12 + q22 * q22 + e2 * (q13 * q13 + q23 * q23) + q11 * q22)


def energy_H(d: DiffState) -> ConvergenceEnergy:
    gr, eps = d.grid, d.eps
    vel = 0.5 * gr.integrate(d.du**2 + d.dv**2 + eps**2 * d.dw**2)
    qs = (d.dq11, d.dq12, d.dq22, d.dq13, d.dq23)
    ql2 = 0.5 * gr.integrate(_tr2(*qs, eps))
    grads = [gr.eps_gradient(f) for f in qs]
    qh1 = 0.5 * sum(gr.integrate(_tr2(*(grads[c][k] for c in range(5)), eps)) for k in range(3))
    return ConvergenceEnergy(vel, ql2, qh1)


# ----------------------------------------------------------------------------
# forcing functional of the limit system


@dataclass(frozen=True)
class ForcingTerm:
    power: int  # explicit eps power in front of the norm
    raw: float  # the norm part, eps-weights inside the norm included
    eps_free: bool  # raw does not depend on eps for fixed fields

    def value(self, eps: float) -> float:
        return eps**self.power * self.raw


@dataclass(frozen=True)
class ForcingReport:
    eps: float
    terms: dict[str, ForcingTerm]
    aux: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def total(self) -> float:
        return float(sum(t.value(self.eps) for t in self.terms.values()))

    def breakdown(self) -> dict[str, float]:
        return {k: t.value(self.eps) for k, t in self.terms.items()}


def limit_time_derivatives(h: hydro.HydroState, probe_dt: float = 1e-6) -> dict[str, np.ndarray]:
    """dt u, dt v, dt w from the Prandtl tendency; dt q13, dt q23 by a forward probe step."""
    gr = h.grid
    ut, vt = hydro.prandtl_rhs(h)
    wt = hydro.recover_w(gr, ut, vt, tol=1e-6)
    if h.q13 is None:
        h = hydro.with_reconstruction(h)
    if h.has_q:
        probe = hydro.with_reconstruction(hydro.step_limit(replace(h, q13=None, q23=None), probe_dt, check_cfl=False))
        q13t = (probe.q13 - h.q13) / probe_dt
        q23t = (probe.q23 - h.q23) / probe_dt
    else:
        q13t, q23t = gr.zeros(), gr.zeros()
    return {"ut": ut, "vt": vt, "wt": wt, "q13t": q13t, "q23t": q23t, "q13": h.q13, "q23": h.q23}


def forcing_F(h: hydro.HydroState, eps: float | None = None, *, probe_dt: float = 1e-6, derivs: dict | None = None) -> ForcingReport:
    """Per-term evaluation of the forcing functional on a hydrostatic state.

    ``eps`` defaults to the grid value; it sets both the explicit prefactors
    and the weights inside the anisotropic gradient.
    """
    gr = h.grid
    eps = gr.eps if eps is None else float(eps)
    aux = derivs if derivs is not None else limit_time_derivatives(h, probe_dt)
    q13, q23 = aux["q13"], aux["q23"]
    u, v, w = h.u, h.v, h.w

    spec = {}

    def d(f, axis, order=1):
        return gr.deriv(f, axis, order)

    def grad_e(f):
        return (eps * d(f, "x"), eps * d(f, "y"), d(f, "z"))

    def sq(*fs):
        return gr.l2sq(*fs)

    def lap_h(f):
        return d(f, "x", 2) + d(f, "y", 2)

    wx, wy, wz = d(w, "x"), d(w, "y"), d(w, "z")
    five = (h.q11, h.q12, h.q22, eps * q13, eps * q23)
    eq = (eps * q13, eps * q23)

    spec["lap_h_velocity"] = (4, sq(lap_h(u), lap_h(v), eps * lap_h(w)), False)
    spec["dt_w"] = (2, sq(aux["wt"]), True)
    spec["w_transport"] = (2, sq(u * wx + v * wy + w * wz), True)
    spec["dt_q13_q23"] = (6, sq(aux["q13t"], aux["q23t"]), True)
    spec["grad_q"] = (0, sum(sq(*grad_e(f)) for f in five), False)
    spec["wx_q"] = (2, sq(*(wx * f for f in five)), False)
    spec["grad_eps_q13_q23"] = (0, sum(sq(*grad_e(f)) for f in eq), False)
    spec["q_l2"] = (0, sq(*five), False)
    spec["q_l4"] = (0, gr.integrate(sum(f * f for f in five) ** 2), False)
    spec["lap_h_q"] = (
        4,
        sq(*(lap_h(f) for f in five), eps * aux["q13t"], eps * aux["q23t"]),
        False,
    )
    spec["grad_h_w_q"] = (4, sq(wx * q13, wx * q23, wy * q13, wy * q23), True)
    hess = 0.0
    for f in eq:
        g1 = grad_e(f)
        for comp in g1:
            hess += sq(*grad_e(comp))
    spec["hess_eps_q13_q23"] = (0, hess, False)
    spec["grad_q_squares"] = (0, sum(sq(*grad_e(f * f)) for f in five), False)

    terms = {k: ForcingTerm(p, float(r), ef) for k, (p, r, ef) in spec.items()}
    return ForcingReport(eps, terms, aux)


# ----------------------------------------------------------------------------
# bound fitting


@dataclass(frozen=True)
class BoundReport:
    constant: float
    holds: bool
    h0: float
    g0: float | None
    samples: int


def verify_bound(series, g0: float | None = None) -> BoundReport:
    """Smallest c with H(t) <= H(0) + c * int_0^t F over ``(t, H, intF)`` samples."""
    arr = np.asarray(list(series), dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3 or arr.shape[0] == 0:
        raise ContractViolation("series must be a nonempty sequence of (t, H, intF)")
    t, H, I = arr.T
    if np.any(np.diff(t) <= 0):
        raise ContractViolation("time stamps must be strictly increasing")
    h0 = float(H[0])
    excess = H - h0
    c = 0.0
    holds = True
    for e, i in zip(excess[1:], I[1:]):
        if e <= 0:
            continue
        if i > 0:
            c = max(c, e / i)
        else:
            c, holds = math.inf, False
    return BoundReport(c, holds, h0, g0, int(t.size))


def constants_consistent(constants, factor: float = 2.0) -> bool:
    """True when the positive fitted constants vary by at most ``factor``."""
    c = np.asarray([x for x in constants if x > 0], dtype=float)
    if c.size == 0:
        return True
    if not np.all(np.isfinite(c)):
        return False
    return bool(c.max() <= factor * c.min())


def fit_order(eps, values, level: float = 0.95):
    """Slope of log(values) against log(eps) with a two-sided t-interval."""
    x, y = np.log(np.asarray(eps, dtype=float)), np.log(np.asarray(values, dtype=float))
    if x.size < 2:
        return None
    res = stats.linregress(x, y)
    if x.size > 2:
        half = float(stats.t.ppf(0.5 + level / 2.0, x.size - 2) * res.stderr)
    else:
        half = math.nan
    return float(res.slope), (float(res.slope - half), float(res.slope + half))


# ----------------------------------------------------------------------------
# lockstep runs and sweeps


@dataclass(frozen=True)
class SweepConfig:
    eps_list: tuple = (0.2, 0.1, 0.05)
    nx: int = 48
    ny: int = 48
    nz: int = 48
    nu1: float = 1.0
    nu2: float = 1.0
    bulk: BulkParams = field(default_factory=lambda: BulkParams(50.0, 1.0, 10.0))
    dt: float = 1e-2
    t_end: float = 1.0
    stride: int = 5
    seed: int = 0
    g0_coef: float = 1.0  # initial difference energy is (g0_coef * eps)^2
    velocity_coef: float = 0.5  # limit velocity amplitude is velocity_coef * eps
    q_coef: float = 0.5  # limit q11 amplitude is q_coef * eps
    f_int_coef: float | None = None  # threshold for int F / eps^2; None: 2x the first row
    linf_bound: float = 100.0  # sup-norm hypothesis constant; flags growth as eps shrinks
    workers: int = 1

    def __post_init__(self):
        e = tuple(float(x) for x in self.eps_list)
        if not e or any(x <= 0 for x in e) or any(b >= a for a, b in zip(e, e[1:])):
            raise ContractViolation(f"eps list must be positive and strictly decreasing, got {self.eps_list}")
        object.__setattr__(self, "eps_list", e)
        if self.dt <= 0 or self.t_end <= 0 or self.stride < 1:
            raise ContractViolation("dt, t_end must be positive and stride >= 1")


@dataclass
class PairRun:
    eps: float
    series: list = field(default_factory=list)  # rows matching CSV_HEADER
    linf_ratio: float = 0.0
    g0: float = 0.0
    bound: BoundReport | None = None
    error: str | None = None


def linf_monitor(h: hydro.HydroState, eps: float) -> float:
    """Largest of the three sup-norms in the smallness hypothesis, divided by eps."""
    gr = h.grid
    mx = lambda *fs: max(float(np.max(np.abs(f), initial=0.0)) for f in fs)  # noqa: E731
    q13 = h.q13 if h.q13 is not None else gr.zeros()
    q23 = h.q23 if h.q23 is not None else gr.zeros()
    five = (h.q11, h.q12, h.q22, eps * q13, eps * q23)
    m1 = mx(gr.deriv(h.u, "z"), gr.deriv(h.v, "z"), eps * gr.deriv(h.w, "z"))
    m2 = mx(*five)
    m3 = mx(*(c for f in five for c in gr.eps_gradient(f)))
    return max(m1, m2, m3) / eps


def initial_pair(cfg: SweepConfig, eps: float):
    """Limit state with amplitudes ~ eps, and the anisotropic state offset by a
    random divergence-free perturbation of difference energy (g0_coef eps)^2."""
    grid = StripGrid(cfg.nx, cfg.ny, cfg.nz, eps, "periodic")
    kw = dict(nu1=cfg.nu1, nu2=cfg.nu2, bulk=cfg.bulk)
    h = hydro.random_admissible_state(
        grid, cfg.seed, velocity_amp=cfg.velocity_coef * eps, q_amp=cfg.q_coef * eps, **kw
    )
    h = hydro.with_reconstruction(h)
    pert = aniso.random_state(grid, cfg.seed + 1, (cfg.g0_coef * eps) ** 2, **kw)
    u, v, w, _ = grid.project_divfree_aniso(h.u + pert.u, h.v + pert.v, h.w + pert.w)
    q = (h.q11, h.q12, h.q22, h.q13, h.q23)
    a = replace(pert, u=u, v=v, w=w, q=tuple(x + y for x, y in zip(q, pert.q)))
    return a, h


def run_pair(cfg: SweepConfig, eps: float, on_sample: Callable | None = None) -> PairRun:
    """Advance both systems in lockstep to ``t_end`` and record the comparison series."""
    out = PairRun(eps)
    try:
        a, h = initial_pair(cfg, eps)
        out.g0 = math.sqrt(energy_H(diff_state(a, h)).h_total)
        f_int = 0.0
        prev_t, prev_f = None, None
        n_steps = int(round(cfg.t_end / cfg.dt))
        for n in range(n_steps + 1):
            if n % cfg.stride == 0 or n == n_steps:
                if h.q13 is None:
                    h = hydro.with_reconstruction(h)
                en = energy_H(diff_state(a, h, cfg.dt))
                f = forcing_F(h).total
                if prev_t is not None:
                    f_int += 0.5 * (f + prev_f) * (h.t - prev_t)
                prev_t, prev_f = h.t, f
                out.linf_ratio = max(out.linf_ratio, linf_monitor(h, eps))
                row = (h.t, en.h_total, en.velocity, en.q_l2, en.q_h1, f, f_int, aniso.energy(a).f_total)
                out.series.append(row)
                if on_sample is not None:
                    on_sample(eps, row, a, h)
            if n == n_steps:
                break
            a = aniso.step(a, cfg.dt)
            h = hydro.step_limit(h, cfg.dt)
    except NemstripError as exc:
        out.error = f"{type(exc).__name__}: {exc}"
    if out.series:
        out.bound = verify_bound([(r[0], r[1], r[6]) for r in out.series], out.g0)
    return out


@dataclass
class SweepTable:
    rows: list  # tuples matching SWEEP_HEADER
    runs: list
    order: float | None = None
    order_interval: tuple | None = None
    constants_consistent: bool = True
    errors: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "columns": list(SWEEP_HEADER),
            "rows": [list(r) for r in self.rows],
            "order": self.order,
            "order_interval": list(self.order_interval) if self.order_interval else None,
            "constants_consistent": self.constants_consistent,
            "errors": self.errors,
        }


def _run_member(args):
    cfg, eps = args
    return run_pair(cfg, eps)


def epsilon_sweep(cfg: SweepConfig, on_sample: Callable | None = None) -> SweepTable:
    if cfg.workers > 1 and on_sample is None:
        with ProcessPoolExecutor(cfg.workers) as ex:
            runs = list(ex.map(_run_member, [(cfg, e) for e in cfg.eps_list]))
    else:
        runs = [run_pair(cfg, e, on_sample) for e in cfg.eps_list]

    ok = [r for r in runs if r.error is None and r.series]
    ratios = [r.series[-1][6] / r.eps**2 for r in ok]
    limit = cfg.f_int_coef if cfg.f_int_coef is not None else (2.0 * ratios[0] if ratios else math.inf)
    rows = []
    for r in runs:
        if not r.series:
            continue
        sup_h = max(row[1] for row in r.series)
        sup_f = max(row[7] for row in r.series)
        f_int = r.series[-1][6]
        ratio = f_int / r.eps**2
        rows.append(
            (
                r.eps,
                r.g0,
                r.series[0][1],
                sup_h,
                sup_f,
                f_int,
                ratio,
                r.bound.constant if r.bound else math.nan,
                r.linf_ratio,
                bool(ratio > limit),
                bool(r.linf_ratio > cfg.linf_bound),
            )
        )
    table = SweepTable(rows, runs, errors=[f"eps={r.eps}: {r.error}" for r in runs if r.error])
    if len(ok) >= 2:
        fit = fit_order([r.eps for r in ok], [max(row[1] for row in r.series) for r in ok])
        table.order, table.order_interval = fit
        table.constants_consistent = constants_consistent([r.bound.constant for r in ok])
    return table


def sweep_config_dict(cfg: SweepConfig) -> dict:
    d = asdict(cfg)
    d["bulk"] = asdict(cfg.bulk)
    return d
