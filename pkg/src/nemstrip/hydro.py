"""Hydrostatic limit: Prandtl velocity plus the constrained limit Q-system.

Only ``q11`` is prognostic; ``q12`` and ``q22`` are slaved to it through the
shear ratio ``theta = dz u / dz v``. ``w`` is diagnosed from incompressibility
and the horizontal pressure is fixed by requiring the depth-averaged flow to
stay horizontally divergence-free. ``q13`` and ``q23`` are reconstructed
algebraically from the other fields on demand.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import constraint as cons
from .errors import BlowUp, CompatibilityError, ContractViolation, SingularThetaError, StepRejected
from .grid import StripGrid
from .tensor import BulkParams, trace_limit

VZ_GUARD = 1e-6
CFL_SAFETY = 0.5
COMPAT_TOL = 1e-8
CSV_HEADER = (
    "t",
    "q_l2sq",
    "weighted_l2",
    "weighted_h1",
    "dissipation",
    "theta_min",
    "theta_max",
    "constraint_residual",
    "dt",
)

Forcing = Callable[[float, StripGrid], tuple]


@dataclass(frozen=True)
class HydroState:
    grid: StripGrid
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    q11: np.ndarray
    q12: np.ndarray
    q22: np.ndarray
    t: float = 0.0
    nu1: float = 1.0
    nu2: float = 1.0
    bulk: BulkParams = field(default_factory=lambda: BulkParams(50.0, 1.0, 10.0))
    p: np.ndarray | None = None
    guard_eps: float = cons.DEFAULT_GUARD
    three_var: bool = False
    q13: np.ndarray | None = None
    q23: np.ndarray | None = None

    def __post_init__(self):
        if not (self.nu1 > 0 and self.nu2 > 0):
            raise ContractViolation("viscosities must be positive")
        for name in ("u", "v", "w", "q11", "q12", "q22"):
            if np.shape(getattr(self, name)) != self.grid.shape:
                raise ContractViolation(f"{name} has shape {np.shape(getattr(self, name))}, grid is {self.grid.shape}")

    @property
    def pressure(self) -> np.ndarray:
        return np.zeros((self.grid.nx, self.grid.ny)) if self.p is None else self.p

    @property
    def has_q(self) -> bool:
        return bool(np.any(self.q11) or np.any(self.q12) or np.any(self.q22))

    def fields(self) -> dict[str, np.ndarray]:
        out = {"u": self.u, "v": self.v, "w": self.w, "q11": self.q11, "q12": self.q12, "q22": self.q22}
        if self.q13 is not None:
            out["q13"] = self.q13
            out["q23"] = self.q23
        return out


@dataclass(frozen=True)
class UpsilonPack:
    y1: np.ndarray
    y2: np.ndarray
    y3: np.ndarray
    y4: np.ndarray
    y5: np.ndarray


@dataclass(frozen=True)
class WeightedEnergy:
    value: float
    plain: float
    lower: float
    upper: float


def hydro_state(grid: StripGrid, u, v, q11=None, *, constrain: bool = True, **kw) -> HydroState:
    """Build a state: diagnose w and, when Q is present, slave q12/q22 to q11."""
    u = np.asarray(u, dtype=float) + grid.zeros()
    v = np.asarray(v, dtype=float) + grid.zeros()
    q11 = grid.zeros() if q11 is None else np.asarray(q11, dtype=float) + grid.zeros()
    w = recover_w(grid, u, v)
    s = HydroState(grid, u, v, w, q11, grid.zeros(), grid.zeros(), **kw)
    if constrain and np.any(q11):
        _, q12, q22 = cons.apply_constraint(q11, compute_theta(s))
        s = replace(s, q12=q12, q22=q22)
    return s


# ----------------------------------------------------------------------------
# velocity


def semi_vorticity(grid: StripGrid, u, v):
    return grid.deriv(v, "x") - grid.deriv(u, "y")


def recover_w(grid: StripGrid, u, v, tol: float = COMPAT_TOL) -> np.ndarray:
    """w = -int_0^z (dx u + dy v) dz' via the spectral antiderivative."""
    d = grid.deriv(u, "x") + grid.deriv(v, "y")
    col = grid.column_integral(d, parity="odd")
    scale = max(1.0, float(np.max(np.abs(d), initial=0.0))) * 2.0 * np.pi
    bad = float(np.max(np.abs(col), initial=0.0))
    if bad > tol * scale:
        raise CompatibilityError(f"column integral of the horizontal divergence is {bad:.3e}, not zero")
    dh = grid.to_spectral(d, "odd")
    kz = grid._odd_k[2]
    nz0 = kz != 0
    Fh = np.where(nz0, dh / np.where(nz0, 1j * kz, 1.0), 0.0)
    F = grid.from_spectral(Fh)
    F0 = grid.eval_z0(F, parity="even")
    return -(F - F0[:, :, None])


def _depth_mean(grid: StripGrid, f):
    return grid.column_integral(f) / (2.0 * np.pi)


def _pressure_from(grid: StripGrid, nu_, nv_):
    """Horizontal pressure cancelling the depth-averaged divergence of (nu, nv)."""
    rhs = grid.deriv_h2d(_depth_mean(grid, nu_), "x") + grid.deriv_h2d(_depth_mean(grid, nv_), "y")
    return grid.poisson_h_divgrad(rhs)


def _advection(grid: StripGrid, s: HydroState, forcing: Forcing | None, dealias: bool):
    gu = grid.gradient(s.u)
    gv = grid.gradient(s.v)
    nu_ = -(s.u * gu[0] + s.v * gu[1] + s.w * gu[2])
    nv_ = -(s.u * gv[0] + s.v * gv[1] + s.w * gv[2])
    if forcing is not None:
        fu, fv = forcing(s.t, grid)
        nu_ = nu_ + fu
        nv_ = nv_ + fv
    if dealias:
        nu_, nv_ = grid.dealias(nu_), grid.dealias(nv_)
    return nu_, nv_


def solve_pressure_h(s: HydroState, dealias: bool = True) -> np.ndarray:
    s.grid._require_periodic("solve_pressure_h")
    nu_, nv_ = _advection(s.grid, s, None, dealias)
    return _pressure_from(s.grid, nu_, nv_)


def prandtl_rhs(s: HydroState, forcing: Forcing | None = None, dealias: bool = False):
    """Full (dt u, dt v) including pressure and vertical diffusion."""
    gr = s.grid
    gr._require_periodic("prandtl_rhs")
    nu_, nv_ = _advection(gr, s, forcing, dealias)
    p = _pressure_from(gr, nu_, nv_)
    ut = nu_ - gr.deriv_h2d(p, "x")[:, :, None] + s.nu1 * gr.deriv(s.u, "z", 2)
    vt = nv_ - gr.deriv_h2d(p, "y")[:, :, None] + s.nu1 * gr.deriv(s.v, "z", 2)
    return ut, vt


def max_stable_dt(s: HydroState) -> float:
    speed = max(float(np.max(np.abs(f), initial=0.0)) for f in (s.u, s.v, s.w))
    return np.inf if speed == 0 else CFL_SAFETY * s.grid.h / speed


def _etd_factors(lam, dt):
    safe = np.where(lam > 0, lam, 1.0)
    return np.exp(-lam * dt), np.where(lam > 0, -np.expm1(-lam * dt) / safe, dt)


def _check_finite(t, **fields):
    for name, f in fields.items():
        if not np.all(np.isfinite(f)):
            raise BlowUp(t, name)


def step_prandtl(s: HydroState, dt: float, forcing: Forcing | None = None, check_cfl: bool = True) -> HydroState:
    """One ETD1 step of the Prandtl system (exact vertical diffusion)."""
    if not dt > 0:
        raise ContractViolation(f"dt must be positive, got {dt!r}")
    gr = s.grid
    gr._require_periodic("step_prandtl")
    if check_cfl:
        dt_max = max_stable_dt(s)
        if dt > dt_max:
            raise StepRejected(s.t, dt, dt_max)
    nu_, nv_ = _advection(gr, s, forcing, dealias=True)
    p = _pressure_from(gr, nu_, nv_)
    nu_ = nu_ - gr.deriv_h2d(p, "x")[:, :, None]
    nv_ = nv_ - gr.deriv_h2d(p, "y")[:, :, None]
    e, phi = _etd_factors(s.nu1 * gr.kz**2, dt)
    u = gr.from_spectral(e * gr.to_spectral(s.u) + phi * gr.to_spectral(nu_))
    v = gr.from_spectral(e * gr.to_spectral(s.v) + phi * gr.to_spectral(nv_))
    # remove round-off drift of the depth-averaged divergence
    div = gr.deriv_h2d(_depth_mean(gr, u), "x") + gr.deriv_h2d(_depth_mean(gr, v), "y")
    if np.any(div):
        phi2 = gr.poisson_h_divgrad(div)
        u = u - gr.deriv_h2d(phi2, "x")[:, :, None]
        v = v - gr.deriv_h2d(phi2, "y")[:, :, None]
    t_new = s.t + dt
    _check_finite(t_new, u=u, v=v)
    w = recover_w(gr, u, v)
    return replace(s, u=u, v=v, w=w, p=p, t=t_new, q13=None, q23=None)


# ----------------------------------------------------------------------------
# constraint coefficients


def compute_theta(s: HydroState, guard_eps: float | None = None, allow_mixed: bool = False) -> cons.ConstraintCoeffs:
    gr = s.grid
    g = s.guard_eps if guard_eps is None else guard_eps
    uz = gr.deriv(s.u, "z")
    vz = gr.deriv(s.v, "z")
    _guard_vz(vz)
    theta = uz / vz
    case = cons.check_admissible(theta, g, allow_mixed=allow_mixed)
    return cons.constraint_coeffs(theta, g, case)


def _guard_vz(vz):
    m = float(np.max(np.abs(vz), initial=0.0))
    small = np.abs(vz) < VZ_GUARD * m if m > 0 else np.ones(vz.shape, dtype=bool)
    if np.any(small):
        idx = np.unravel_index(np.argmax(small), vz.shape)
        raise SingularThetaError("dz v vanishes (relative to its maximum)", tuple(int(i) for i in idx))


# ----------------------------------------------------------------------------
# limit Q-system


def _bulk_limit(q11, q12, q22, bulk: BulkParams):
    a, b, c = bulk.a, bulk.b, bulk.c
    trl = trace_limit(q11, q12, q22)
    b11 = a * q11 - b * (q11 * q11 + q12 * q12 - trl / 3.0) + c * q11 * trl
    b12 = a * q12 - b * q12 * (q11 + q22) + c * q12 * trl
    b22 = a * q22 - b * (q12 * q12 + q22 * q22 - trl / 3.0) + c * q22 * trl
    return b11, b12, b22


def limit_forcing_terms(s: HydroState, q11=None, q12=None, q22=None):
    """(F11, F12, F22): everything in the limit Q-equations except the q13/q23 coupling."""
    gr = s.grid
    q11 = s.q11 if q11 is None else q11
    q12 = s.q12 if q12 is None else q12
    q22 = s.q22 if q22 is None else q22
    om = semi_vorticity(gr, s.u, s.v)

    def transport_diffusion(q):
        qh = gr.to_spectral(q)
        d = [gr.from_spectral(gr.spectral_deriv(qh, a)) for a in "xyz"]
        qzz = gr.from_spectral(gr.spectral_deriv(qh, "z", 2))
        return -(s.u * d[0] + s.v * d[1] + s.w * d[2]) + s.nu2 * qzz

    b11, b12, b22 = _bulk_limit(q11, q12, q22, s.bulk)
    F11 = transport_diffusion(q11) + q12 * om - b11
    F12 = transport_diffusion(q12) - 0.5 * (q11 - q22) * om - b12
    F22 = transport_diffusion(q22) - q12 * om - b22
    return F11, F12, F22


def rhs_limit_q(s: HydroState, cc: cons.ConstraintCoeffs | None = None):
    """(R1, R2, R3), the reduced tendencies of (q11, q22, q12)."""
    if cc is None:
        cc = compute_theta(s)
    F11, F12, F22 = limit_forcing_terms(s)
    C = cc.c
    R1 = (1.0 - C[0]) * F11 - C[1] * F22 - C[2] * F12
    R2 = -C[3] * F11 + (1.0 - C[4]) * F22 - C[5] * F12
    R3 = -C[6] * F11 - C[7] * F22 + (1.0 - C[8]) * F12
    return R1, R2, R3


def step_limit(
    s: HydroState,
    dt: float,
    forcing: Forcing | None = None,
    q_forcing: Callable[[float, StripGrid], np.ndarray] | None = None,
    freeze_velocity: bool = False,
    check_cfl: bool = True,
) -> HydroState:
    """Advance velocity and the constrained Q-tensor by one step.

    q11 gets the exact factor for ``nu2 dzz - a``; the rest of its reduced
    tendency is explicit. q12 and q22 are re-slaved at the new time. In
    ``three_var`` mode all three are advanced and then projected orthogonally
    onto the constraint line.
    """
    gr = s.grid
    if freeze_velocity:
        s_vel = replace(s, t=s.t + dt)
    else:
        s_vel = step_prandtl(s, dt, forcing, check_cfl)
    if not (s.has_q or q_forcing is not None):
        return s_vel

    cc = compute_theta(s)
    R = rhs_limit_q(s, cc)
    # on the manifold the bulk part of each reduced tendency is exactly -a q
    a = s.bulk.a
    e, phi = _etd_factors(s.nu2 * gr.kz**2 + a, dt)

    def advance(q, r, extra=None):
        n = r - s.nu2 * gr.deriv(q, "z", 2) + a * q
        if extra is not None:
            n = n + extra
        return gr.from_spectral(e * gr.to_spectral(q) + phi * gr.mask_spectral(n))

    qf = q_forcing(s.t, gr) if q_forcing is not None else None
    q11 = advance(s.q11, R[0], qf)
    cc_new = cc if freeze_velocity else compute_theta(s_vel)
    if s.three_var:
        q22 = advance(s.q22, R[1])
        q12 = advance(s.q12, R[2])
        n2, n3 = cc_new.xi2, cc_new.xi1
        q11 = (q11 + n2 * q22 + n3 * q12) / (1.0 + n2 * n2 + n3 * n3)
    q11, q12, q22 = cons.apply_constraint(q11, cc_new)
    _check_finite(s_vel.t, q11=q11)
    return replace(s_vel, q11=q11, q12=q12, q22=q22, q13=None, q23=None)


# ----------------------------------------------------------------------------
# q13 / q23 reconstruction


@dataclass(frozen=True)
class ThetaJet:
    """theta with its derivatives, from quotient rules on spectral velocity derivatives."""

    theta: np.ndarray
    vz: np.ndarray
    tz: np.ndarray
    tzz: np.ndarray
    transport: np.ndarray  # u . grad theta (three-dimensional)
    tt: np.ndarray
    omega: np.ndarray


def theta_jet(s: HydroState) -> ThetaJet:
    gr = s.grid
    uh, vh = gr.to_spectral(s.u), gr.to_spectral(s.v)

    def d(fh, *axes):
        for a in axes:
            fh = gr.spectral_deriv(fh, a)
        return gr.from_spectral(fh)

    uz, vz = d(uh, "z"), d(vh, "z")
    _guard_vz(vz)
    th = uz / vz
    tz = (d(uh, "z", "z") - th * d(vh, "z", "z")) / vz
    tzz = (d(uh, "z", "z", "z") - 2.0 * tz * d(vh, "z", "z") - th * d(vh, "z", "z", "z")) / vz
    tx = (d(uh, "x", "z") - th * d(vh, "x", "z")) / vz
    ty = (d(uh, "y", "z") - th * d(vh, "y", "z")) / vz
    ut, vt = prandtl_rhs(s)
    tt = (gr.deriv(ut, "z") - th * gr.deriv(vt, "z")) / vz
    om = d(vh, "x") - d(uh, "y")
    return ThetaJet(th, vz, tz, tzz, s.u * tx + s.v * ty + s.w * tz, tt, om)


def upsilon(s: HydroState, jet: ThetaJet | None = None) -> UpsilonPack:
    j = theta_jet(s) if jet is None else jet
    return UpsilonPack(j.transport / j.vz, j.omega / j.vz, j.tz / j.vz, j.tzz / j.vz, j.tt / j.vz)


def reconstruct_q13_q23(s: HydroState, cc: cons.ConstraintCoeffs | None = None, up: UpsilonPack | None = None):
    """Closed-form (q13, q23) on the constraint manifold.

    Each is a combination of q11 and dz q11 with rational-in-theta weights
    multiplying the Upsilon quotients, divided by D = 2 t^4 + t^2 + 2.
    """
    jet = theta_jet(s)
    if cc is None:
        cc = cons.constraint_coeffs(jet.theta, s.guard_eps, cons.check_admissible(jet.theta, s.guard_eps))
    if up is None:
        up = upsilon(s, jet)
    t = cc.theta
    t2 = t * t
    r = 2.0 - t2
    D = cc.D
    A = 3.0 * t2 + 2.0
    B = 2.0 * t2 + 3.0
    nu = s.nu2
    q = s.q11
    qz = s.grid.deriv(q, "z")
    mat = up.y1 + up.y5
    tz = up.y3 * jet.vz
    q13 = (
        3.0 * A / r * mat * q
        - 1.5 * (t2 + 1.0) * A / r * up.y2 * q
        - 6.0 * A / r * nu * up.y3 * qz
        - 3.0 * A / r * nu * up.y4 * q
        - 24.0 * t * (t2 + 2.0) / r**2 * nu * tz * up.y3 * q
    ) / D
    q23 = (
        -3.0 * t * B / r * mat * q
        + 1.5 * t * (t2 + 1.0) * B / r * up.y2 * q
        + 6.0 * t * B / r * nu * up.y3 * qz
        + 3.0 * t * B / r * nu * up.y4 * q
        + 6.0 * (2.0 * t2 * t2 + 9.0 * t2 + 2.0) / r**2 * nu * tz * up.y3 * q
    ) / D
    return q13, q23


def with_reconstruction(s: HydroState) -> HydroState:
    if not s.has_q:
        z = s.grid.zeros()
        return replace(s, q13=z, q23=z.copy())
    q13, q23 = reconstruct_q13_q23(s)
    return replace(s, q13=q13, q23=q23)


# ----------------------------------------------------------------------------
# diagnostics


def weighted_energy(s: HydroState, cc: cons.ConstraintCoeffs | None = None, order: str = "L2") -> WeightedEnergy:
    """Theta-weighted energy of (q11, q22, q12), L2 or H1 (full gradient)."""
    gr = s.grid
    if not s.has_q:
        return WeightedEnergy(0.0, 0.0, 0.0, 0.0)
    if cc is None:
        cc = compute_theta(s)
    if order == "L2":
        comps = [(s.q11,), (s.q22,), (s.q12,)]
    elif order == "H1":
        comps = [gr.gradient(f) for f in (s.q11, s.q22, s.q12)]
    else:
        raise ContractViolation(f"order must be 'L2' or 'H1', got {order!r}")
    sq = [sum(c * c for c in group) for group in comps]
    dens = cc.th1 * sq[0] + cc.th2 * sq[1] + cc.th3 * sq[2]
    plain = sq[0] + sq[1] + sq[2]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(plain > 0, dens / np.where(plain > 0, plain, 1.0), np.nan)
    finite = ratio[np.isfinite(ratio)]
    lo = float(finite.min()) if finite.size else 0.0
    hi = float(finite.max()) if finite.size else 0.0
    return WeightedEnergy(gr.integrate(dens), gr.integrate(plain), lo, hi)


def constraint_residual(s: HydroState) -> float:
    return float(np.max(np.abs(cons.relation_residual(s.q11, s.q12, s.q22)), initial=0.0))


def shear_residual(s: HydroState) -> float:
    uz, vz = s.grid.deriv(s.u, "z"), s.grid.deriv(s.v, "z")
    r1, r2 = cons.shear_residuals(s.q11, s.q12, s.q22, uz, vz)
    return float(max(np.max(np.abs(r1), initial=0.0), np.max(np.abs(r2), initial=0.0)))


def dissipation(s: HydroState) -> float:
    gr = s.grid
    return s.nu2 * gr.l2sq(*(gr.deriv(f, "z") for f in (s.q11, s.q22, s.q12)))


def vorticity_norms(s: HydroState, ks=(0, 1, 2, 3)) -> dict[int, float]:
    om = semi_vorticity(s.grid, s.u, s.v)
    out = {}
    for k in ks:
        pw = 2 * k + 2
        out[k] = float(s.grid.integrate(om**pw) ** (1.0 / pw))
    return out


def csv_row(s: HydroState, dt: float) -> tuple:
    if s.has_q:
        cc = compute_theta(s)
        wl2 = weighted_energy(s, cc, "L2").value
        wh1 = weighted_energy(s, cc, "H1").value
        tmin, tmax = float(np.min(cc.theta)), float(np.max(cc.theta))
    else:
        wl2 = wh1 = 0.0
        tmin = tmax = float("nan")
    ql2 = s.grid.l2sq(s.q11, s.q22, s.q12)
    return (s.t, ql2, wl2, wh1, dissipation(s), tmin, tmax, constraint_residual(s), dt)


# ----------------------------------------------------------------------------
# data generators


def _low_mode_field(grid: StripGrid, rng: np.random.Generator, kmax: int, z_dependent: bool = True) -> np.ndarray:
    shape = grid.spectral_shape
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    mask = (np.abs(grid.kx) <= kmax) & (np.abs(grid.ky) <= kmax) & (np.abs(grid.kz) <= (kmax if z_dependent else 0))
    c = c * mask
    c[0, 0, 0] = 0.0
    f = grid.from_spectral(c)
    m = float(np.max(np.abs(f), initial=0.0))
    return f / m if m > 0 else f


def random_admissible_state(
    grid: StripGrid,
    seed: int,
    *,
    theta_center: float = 1.0,
    theta_spread: float = 0.15,
    velocity_amp: float = 1.0,
    q_amp: float = 1e-2,
    kmax: int = 2,
    **kw,
) -> HydroState:
    """Random smooth state whose shear ratio stays within ``theta_center +- theta_spread``.

    ``v = amp f(x, y) sin z`` with ``f`` positive, and
    ``u = theta0(x, y) v + kappa v^2 - grad_h phi`` so that
    ``theta = theta0 + 2 kappa v``. The zeros of ``dz v`` sit exactly halfway
    between the cell-centred z nodes whenever ``nz`` is a multiple of 4, which
    keeps ``1 / dz v`` bounded on the grid.
    """
    rng = np.random.default_rng(seed)
    _, _, Z = grid.coords()
    f = 1.0 + 0.3 * _low_mode_field(grid, rng, kmax, z_dependent=False)
    v = velocity_amp * f * np.sin(Z)
    th0 = theta_center + 0.5 * theta_spread * _low_mode_field(grid, rng, kmax, z_dependent=False)
    kappa = 0.25 * theta_spread / (1.3 * velocity_amp)
    u = th0 * v + kappa * v * v
    ub, vb = _depth_mean(grid, u), _depth_mean(grid, v)
    div = grid.deriv_h2d(ub, "x") + grid.deriv_h2d(vb, "y")
    phi = grid.poisson_h_divgrad(div)
    u = u - grid.deriv_h2d(phi, "x")[:, :, None]
    v = v - grid.deriv_h2d(phi, "y")[:, :, None]
    q11 = q_amp * _low_mode_field(grid, rng, kmax)
    return hydro_state(grid, u, v, q11, **kw)
