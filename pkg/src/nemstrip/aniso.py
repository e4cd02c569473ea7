"""Pseudo-spectral integrator for the scaled anisotropic Beris-Edwards system.

Velocity ``(u, v, w)`` is in scaled variables (``w`` already divided by eps),
the Q-tensor is stored as its five independent scaled components. Time
stepping is first-order exponential (ETD1): the full anisotropic diffusion
``nu (eps^2 Lap_h + dzz)`` is integrated exactly in Fourier space, everything
else (transport, spin coupling, elastic stress, bulk reaction) is explicit and
dealiased by the 2/3 rule. Pressure enters through the anisotropic projection.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BlowUp, ContractViolation, SingularScaleError, StepRejected
from .grid import StripGrid
from .tensor import BulkParams

Q_NAMES = ("q11", "q12", "q22", "q13", "q23")
CSV_HEADER = ("t", "kinetic", "q_l2", "q_h1", "f_total", "div_max", "dt")
CFL_SAFETY = 0.5


@dataclass(frozen=True)
class AnisoTerms:
    """Switches for the explicit physics; all on reproduces the full system."""

    advection: bool = True
    spin: bool = True
    stress: bool = True
    bulk: bool = True
    evolve_velocity: bool = True


@dataclass(frozen=True)
class AnisoState:
    grid: StripGrid
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    q: tuple
    t: float = 0.0
    nu1: float = 1.0
    nu2: float = 1.0
    bulk: BulkParams = field(default_factory=lambda: BulkParams(50.0, 1.0, 10.0))
    p: np.ndarray | None = None
    terms: AnisoTerms = field(default_factory=AnisoTerms)

    def __post_init__(self):
        if self.grid.eps <= 0:
            raise SingularScaleError("eps must be positive")
        if not (self.nu1 > 0 and self.nu2 > 0):
            raise ContractViolation("viscosities must be positive")
        if len(self.q) != 5:
            raise ContractViolation("q must hold five components (q11, q12, q22, q13, q23)")
        for name, f in zip(("u", "v", "w") + Q_NAMES, (self.u, self.v, self.w) + tuple(self.q)):
            if np.shape(f) != self.grid.shape:
                raise ContractViolation(f"{name} has shape {np.shape(f)}, grid is {self.grid.shape}")

    @property
    def eps(self) -> float:
        return self.grid.eps

    @property
    def pressure(self) -> np.ndarray:
        return self.grid.zeros() if self.p is None else self.p

    def fields(self) -> dict[str, np.ndarray]:
        out = {"u": self.u, "v": self.v, "w": self.w}
        out.update(zip(Q_NAMES, self.q))
        out["p"] = self.pressure
        return out


@dataclass(frozen=True)
class AnisoEnergy:
    kinetic: float
    q_l2: float
    q_h1: float

    @property
    def f_total(self) -> float:
        return self.kinetic + self.q_l2 + self.q_h1


def zero_state(grid: StripGrid, **kw) -> AnisoState:
    z = grid.zeros
    return AnisoState(grid, z(), z(), z(), tuple(z() for _ in range(5)), **kw)


# ----------------------------------------------------------------------------
# explicit tendencies


def _spin(grid: StripGrid, g):
    """(w0, w1, w2) from the velocity gradient table ``g[i][k] = d_k u_i``."""
    e2 = grid.eps**2
    w0 = g[1][0] - g[0][1]
    w1 = e2 * g[2][0] - g[0][2]
    w2 = e2 * g[2][1] - g[1][2]
    return w0, w1, w2


def _velocity_gradients(grid: StripGrid, vel_h):
    return [[grid.from_spectral(grid.spectral_deriv(fh, a)) for a in "xyz"] for fh in vel_h]


def _bulk_terms(q, eps, bulk: BulkParams, linear: bool = True):
    """Bulk force per component; ``linear=False`` drops the a*q part."""
    q11, q12, q22, q13, q23 = q
    a, b, c = (bulk.a if linear else 0.0), bulk.b, bulk.c
    e2 = eps * eps
    tr = 2.0 * (q11 * q11 + q12 * q12 + q22 * q22 + e2 * (q13 * q13 + q23 * q23) + q11 * q22)
    b11 = a * q11 - b * (q11 * q11 + q12 * q12 + e2 * q13 * q13 - tr / 3.0) + c * q11 * tr
    b12 = a * q12 - b * (q12 * (q11 + q22) + e2 * q13 * q23) + c * q12 * tr
    b22 = a * q22 - b * (q12 * q12 + q22 * q22 + e2 * q23 * q23 - tr / 3.0) + c * q22 * tr
    b13 = a * q13 - b * (-q22 * q13 + q12 * q23) + c * q13 * tr
    b23 = a * q23 - b * (q12 * q13 - q11 * q23) + c * q23 * tr
    return b11, b12, b22, b13, b23


def _spin_terms(q, w0, w1, w2, eps):
    q11, q12, q22, q13, q23 = q
    q33 = -q11 - q22
    ie2 = 0.5 / (eps * eps)
    s11 = w0 * q12 + w1 * q13
    s12 = -0.5 * w0 * (q11 - q22) + 0.5 * w1 * q23 + 0.5 * w2 * q13
    s22 = -w0 * q12 + w2 * q23
    s13 = 0.5 * w0 * q23 - ie2 * (w1 * (q11 - q33) + w2 * q12)
    s23 = -0.5 * w0 * q13 - ie2 * (w1 * q12 + w2 * (q22 - q33))
    return s11, s12, s22, s13, s23


def _sym_entries(q11, q12, q22, q13, q23, eps):
    """Full scaled matrix as a nested list of fields (row-major, mirrored)."""
    e13, e23 = eps * q13, eps * q23
    q33 = -q11 - q22
    return [[q11, q12, e13], [q12, q22, e23], [e13, e23, q33]]


_UNIQUE = ((0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0), (0, 1, 2.0), (0, 2, 2.0), (1, 2, 2.0))


def _stress_divergence(grid: StripGrid, q, dq, lap_q):
    """Spectral (div M)_i = sum_j d_j M_ij for the full scaled matrix.

    ``dq[c][k]`` is the derivative of component ``c`` along axis ``k``.
    """
    eps = grid.eps
    Q = _sym_entries(*q, eps)
    L = _sym_entries(*lap_q, eps)
    G = [_sym_entries(*(dq[c][k] for c in range(5)), eps) for k in range(3)]
    out = [0.0, 0.0, 0.0]
    for i in range(3):
        for j in range(3):
            m = sum(w * G[i][a][b] * G[j][a][b] for a, b, w in _UNIQUE)
            m = m + sum(L[i][n] * Q[n][j] - Q[i][n] * L[n][j] for n in range(3))
            out[i] = out[i] + grid.spectral_deriv(grid.to_spectral(m), "xyz"[j])
    return out


def _explicit_spectral(s: AnisoState):
    """Dealiased spectral explicit tendencies (velocity without pressure, Q).

    Also returns the spectra of the current fields and the spin components.
    """
    gr, eps, T = s.grid, s.eps, s.terms
    vel_h = [gr.to_spectral(f) for f in (s.u, s.v, s.w)]
    q_h = [gr.to_spectral(f) for f in s.q]
    g = _velocity_gradients(gr, vel_h)
    spin = _spin(gr, g)
    u, v, w = s.u, s.v, s.w
    zero = np.zeros(gr.spectral_shape, dtype=complex)
    need_dq = T.advection or (T.stress and T.evolve_velocity)
    dq = [[gr.from_spectral(gr.spectral_deriv(fh, a)) for a in "xyz"] for fh in q_h] if need_dq else None

    if T.evolve_velocity:
        nv = []
        for i in range(3):
            n = -(u * g[i][0] + v * g[i][1] + w * g[i][2]) if T.advection else gr.zeros()
            nv.append(gr.to_spectral(n))
        if T.stress:
            lap_q = [gr.from_spectral(-gr.k2 * fh) for fh in q_h]
            dM = _stress_divergence(gr, s.q, dq, lap_q)
            nv[0] = nv[0] - eps**4 * dM[0]
            nv[1] = nv[1] - eps**4 * dM[1]
            nv[2] = nv[2] - eps**3 * dM[2]
        nv = [gr.dealias_mask * n for n in nv]
    else:
        nv = [zero, zero, zero]

    nq = [0.0] * 5
    if T.advection:
        nq = [n - (u * d[0] + v * d[1] + w * d[2]) for n, d in zip(nq, dq)]
    if T.spin:
        nq = [n + t for n, t in zip(nq, _spin_terms(s.q, *spin, eps))]
    if T.bulk:
        # a*q is integrated exactly together with diffusion
        nq = [n - t for n, t in zip(nq, _bulk_terms(s.q, eps, s.bulk, linear=False))]
    nq = [gr.dealias_mask * gr.to_spectral(n + gr.zeros()) for n in nq]
    return nv, nq, vel_h, q_h, spin, (u, v, w)


def _decay_symbol(grid: StripGrid, nu: float) -> np.ndarray:
    return nu * (grid.eps**2 * grid.kh2 + grid.kz**2)


def _q_linear_rate(s: AnisoState) -> float:
    return s.bulk.a if s.terms.bulk else 0.0


def rhs_velocity(s: AnisoState):
    """Explicit velocity tendencies: transport and elastic stress.

    Pressure and the viscous term are excluded; the step applies them through
    the projection and the exact diffusion factor.
    """
    s.grid._require_periodic("rhs_velocity")
    nv = _explicit_spectral(s)[0]
    return tuple(s.grid.from_spectral(n) for n in nv)


def rhs_qtensor(s: AnisoState, include_diffusion: bool = True):
    """Tendencies of (q11, q12, q22, q13, q23), the q13/q23 lines divided by eps."""
    s.grid._require_periodic("rhs_qtensor")
    _, nq, _, q_h, _, _ = _explicit_spectral(s)
    lam = _q_linear_rate(s) * s.grid.dealias_mask
    if include_diffusion:
        lam = lam + _decay_symbol(s.grid, s.nu2)
    nq = [n - lam * qh for n, qh in zip(nq, q_h)]
    return tuple(s.grid.from_spectral(n) for n in nq)


# ----------------------------------------------------------------------------
# stepping


def _cfl_limit(grid: StripGrid, vel, spin) -> float:
    speed = max(float(np.max(np.abs(f), initial=0.0)) for f in vel)
    w0, w1, w2 = spin
    rate = max(
        float(np.max(np.abs(w0), initial=0.0)),
        float(np.max(np.abs(w1), initial=0.0)) / grid.eps,
        float(np.max(np.abs(w2), initial=0.0)) / grid.eps,
    )
    limits = [np.inf]
    if speed > 0:
        limits.append(grid.h / speed)
    if rate > 0:
        limits.append(1.0 / rate)
    return CFL_SAFETY * min(limits)


def max_stable_dt(s: AnisoState) -> float:
    """0.5 * min(h / max speed, 1 / max spin rate), spin rates eps-weighted."""
    gr = s.grid
    g = _velocity_gradients(gr, [gr.to_spectral(f) for f in (s.u, s.v, s.w)])
    return _cfl_limit(gr, (s.u, s.v, s.w), _spin(gr, g))


def _etd_factors(lam, dt):
    """exp(-lam dt) and (1 - exp(-lam dt)) / lam, the latter -> dt at lam = 0."""
    safe = np.where(lam > 0, lam, 1.0)
    return np.exp(-lam * dt), np.where(lam > 0, -np.expm1(-lam * dt) / safe, dt)


def step(s: AnisoState, dt: float, check_cfl: bool = True) -> AnisoState:
    """Advance by ``dt``; raises StepRejected on a CFL violation, BlowUp on NaN."""
    if not dt > 0:
        raise ContractViolation(f"dt must be positive, got {dt!r}")
    gr = s.grid
    gr._require_periodic("aniso step")
    nv, nq, vel_h, q_h, spin, vel = _explicit_spectral(s)
    if check_cfl:
        dt_max = _cfl_limit(gr, vel, spin)
        if dt > dt_max:
            raise StepRejected(s.t, dt, dt_max)
    t_new = s.t + dt

    if s.terms.evolve_velocity:
        nu_, nv_, nw_, ph = gr.project_spectral(*nv)
        e, phi = _etd_factors(_decay_symbol(gr, s.nu1), dt)
        new_v = [e * fh + phi * nh for fh, nh in zip(vel_h, (nu_, nv_, nw_))]
        new_v = list(gr.project_spectral(*new_v)[:3])
        u, v, w = (gr.from_spectral(f) for f in new_v)
        p = gr.from_spectral(ph)
    else:
        u, v, w, p = s.u, s.v, s.w, s.p

    e, phi = _etd_factors(_decay_symbol(gr, s.nu2) + _q_linear_rate(s), dt)
    q = tuple(gr.from_spectral(e * fh + phi * nh) for fh, nh in zip(q_h, nq))

    for name, f in zip(("u", "v", "w") + Q_NAMES, (u, v, w) + q):
        if not np.all(np.isfinite(f)):
            raise BlowUp(t_new, name)
    return replace(s, u=u, v=v, w=w, q=q, p=p, t=t_new)


# ----------------------------------------------------------------------------
# diagnostics


def energy(s: AnisoState) -> AnisoEnergy:
    gr, eps = s.grid, s.eps
    kin = 0.5 * gr.integrate(s.u**2 + s.v**2 + eps**2 * s.w**2)
    e2 = eps * eps

    def tr2(q11, q12, q22, q13, q23):
        return 2.0 * (q11 * q11 + q12 * q12 + q22 * q22 + e2 * (q13 * q13 + q23 * q23) + q11 * q22)

    ql2 = 0.5 * gr.integrate(tr2(*s.q))
    grads = [gr.eps_gradient(f) for f in s.q]
    qh1 = 0.5 * sum(gr.integrate(tr2(*(grads[c][k] for c in range(5)))) for k in range(3))
    return AnisoEnergy(kin, ql2, qh1)


def divergence_max(s: AnisoState) -> float:
    return float(np.max(np.abs(s.grid.divergence(s.u, s.v, s.w)), initial=0.0))


def csv_row(s: AnisoState, dt: float) -> tuple:
    e = energy(s)
    return (s.t, e.kinetic, e.q_l2, e.q_h1, e.f_total, divergence_max(s), dt)


def _band_limited(grid: StripGrid, rng: np.random.Generator, kmax: int) -> np.ndarray:
    shape = grid.spectral_shape
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    mask = (np.abs(grid.kx) <= kmax) & (np.abs(grid.ky) <= kmax) & (np.abs(grid.kz) <= kmax)
    c = c * mask
    c[0, 0, 0] = 0.0
    f = grid.from_spectral(c)
    scale = float(np.sqrt(np.mean(f * f)))
    return f / scale if scale > 0 else f


def random_state(
    grid: StripGrid,
    seed: int,
    f0: float,
    *,
    q_fraction: float = 0.5,
    kmax: int = 2,
    **kw,
) -> AnisoState:
    """Random band-limited divergence-free state with prescribed energy.

    ``q_fraction`` of ``f0`` goes to the Q-tensor part of the energy, the rest
    to the kinetic part.
    """
    if not (0.0 <= q_fraction <= 1.0) or f0 < 0:
        raise ContractViolation("need f0 >= 0 and 0 <= q_fraction <= 1")
    rng = np.random.default_rng(seed)
    u, v, w = (_band_limited(grid, rng, kmax) for _ in range(3))
    u, v, w, _ = grid.project_divfree_aniso(u, v, w)
    q = tuple(_band_limited(grid, rng, kmax) for _ in range(5))
    base = zero_state(grid, **kw)
    e_vel = energy(replace(base, u=u, v=v, w=w)).f_total
    e_q = energy(replace(base, q=q)).f_total
    sv = np.sqrt((1.0 - q_fraction) * f0 / e_vel) if e_vel > 0 else 0.0
    sq = np.sqrt(q_fraction * f0 / e_q) if e_q > 0 else 0.0
    return replace(base, u=sv * u, v=sv * v, w=sv * w, q=tuple(sq * f for f in q))
