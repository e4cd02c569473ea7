"""Closed-form and semi-analytic reference flows.

Shear solutions of the Prandtl system, the Blasius boundary-layer profile
(obtained by shooting), and a monotonicity check for vorticity norm series.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import BPoly
from scipy.optimize import brentq

from . import hydro
from .errors import ContractViolation, ShootingError
from .grid import StripGrid

BLASIUS_BRACKET = (0.1, 1.0)
BLASIUS_ETA_MAX = 12.0
_RTOL = 1e-13
_ATOL = 1e-14


# ----------------------------------------------------------------------------
# shear flows


def kolmogorov(grid: StripGrid, a: float, b: float, nu1: float, t: float, **kw) -> hydro.HydroState:
    """(a, b) e^{-nu1 t} sin z with w = 0 and zero pressure, as a hydrostatic state."""
    _, _, Z = grid.coords()
    prof = math.exp(-nu1 * t) * np.sin(Z) + grid.zeros()
    return hydro.hydro_state(grid, a * prof, b * prof, t=t, nu1=nu1, **kw)


def modulated_shear(grid: StripGrid, amp: float, nu1: float, t: float, ky: int = 1, **kw) -> hydro.HydroState:
    """u = amp e^{-nu1 t} cos(ky y) sin z, v = w = 0: exact, with nonzero semi-vorticity."""
    _, Y, Z = grid.coords()
    u = amp * math.exp(-nu1 * t) * np.cos(ky * Y) * np.sin(Z) + grid.zeros()
    return hydro.hydro_state(grid, u, grid.zeros(), t=t, nu1=nu1, **kw)


@dataclass(frozen=True)
class ShearFlow:
    a_n: tuple
    b_n: tuple
    nu: float = 1.0

    def __post_init__(self):
        for name in ("a_n", "b_n"):
            c = np.asarray(getattr(self, name), dtype=float)
            if c.ndim != 1 or not np.all(np.isfinite(c)):
                raise ContractViolation(f"{name} must be a finite 1-D coefficient list")
        if self.nu <= 0:
            raise ContractViolation("viscosity must be positive")


def shear_heat(flow: ShearFlow, t: float, z) -> tuple[np.ndarray, np.ndarray]:
    """u = sum a_n e^{-n^2 nu t} sin(n z), likewise v with b_n (n starts at 1)."""
    z = np.asarray(z, dtype=float)

    def series(c):
        out = np.zeros_like(z)
        for n, cn in enumerate(c, start=1):
            out = out + cn * math.exp(-n * n * flow.nu * t) * np.sin(n * z)
        return out

    return series(flow.a_n), series(flow.b_n)


def shear_state(grid: StripGrid, flow: ShearFlow, t: float = 0.0, **kw) -> hydro.HydroState:
    _, _, Z = grid.coords()
    u, v = shear_heat(flow, t, Z[0, 0, :])
    return hydro.hydro_state(grid, u[None, None, :] + grid.zeros(), v[None, None, :] + grid.zeros(), t=t, nu1=flow.nu, **kw)


def shear_coefficients(profile, z) -> np.ndarray:
    """Sine coefficients of a sampled profile on a uniform periodic z-grid (inverse of the series)."""
    profile = np.asarray(profile, dtype=float)
    z = np.asarray(z, dtype=float)
    n = profile.size
    nmax = (n - 1) // 2
    return np.array([2.0 / n * np.sum(profile * np.sin(k * z)) for k in range(1, nmax + 1)])


# ----------------------------------------------------------------------------
# Blasius profile


def _blasius_rhs(_, y):
    return (y[1], y[2], -0.5 * y[0] * y[2])


def _shoot(fpp0: float, eta_max: float, dense: bool = False):
    return solve_ivp(
        _blasius_rhs,
        (0.0, eta_max),
        (0.0, 0.0, fpp0),
        method="DOP853",
        rtol=_RTOL,
        atol=_ATOL,
        dense_output=dense,
    )


@dataclass(frozen=True)
class BlasiusProfile:
    eta: np.ndarray
    f: np.ndarray
    fp: np.ndarray
    fpp: np.ndarray
    fpp0: float
    eta_max: float

    @property
    def fppp(self) -> np.ndarray:
        return -0.5 * self.f * self.fpp

    def interpolants(self):
        """Piecewise polynomials (f, f', f'') matching value and derivative jets at the nodes."""
        f4 = -0.5 * (self.fp * self.fpp + self.f * self.fppp)
        f5 = -0.5 * (self.fpp * self.fpp + 2.0 * self.fp * self.fppp + self.f * f4)
        F = BPoly.from_derivatives(self.eta, np.column_stack([self.f, self.fp, self.fpp, self.fppp]))
        Fp = BPoly.from_derivatives(self.eta, np.column_stack([self.fp, self.fpp, self.fppp, f4]))
        Fpp = BPoly.from_derivatives(self.eta, np.column_stack([self.fpp, self.fppp, f4, f5]))
        return F, Fp, Fpp

    def ode_residual(self, eta) -> np.ndarray:
        """|f''' + f f''/2| with f''' taken as the derivative of the f'' interpolant."""
        F, _, Fpp = self.interpolants()
        eta = np.asarray(eta, dtype=float)
        return np.abs(Fpp.derivative()(eta) + 0.5 * F(eta) * Fpp(eta))

    def rows(self):
        return [(float(e), float(a), float(b), float(c)) for e, a, b, c in zip(self.eta, self.f, self.fp, self.fpp)]


def blasius_solve(eta_max: float = BLASIUS_ETA_MAX, tol: float = 1e-10, n: int | None = None, bracket=BLASIUS_BRACKET) -> BlasiusProfile:
    """Shoot on f''(0) until f'(eta_max) = 1 within ``tol``; sample on a uniform eta-grid."""
    if eta_max < 8:
        raise ContractViolation(f"eta_max must be >= 8, got {eta_max}")
    lo, hi = bracket

    def miss(s):
        sol = _shoot(s, eta_max)
        if sol.status != 0:
            raise ShootingError(f"integration failed at f''(0)={s}: {sol.message}", bracket)
        return sol.y[1, -1] - 1.0

    m_lo, m_hi = miss(lo), miss(hi)
    if not (m_lo < 0.0 < m_hi):
        raise ShootingError(
            f"f'(eta_max) - 1 does not change sign on the bracket (values {m_lo:.3e}, {m_hi:.3e})", bracket
        )
    s = brentq(miss, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200)
    err = abs(miss(s))
    if err > tol:
        raise ShootingError(f"shooting stalled with |f'(eta_max) - 1| = {err:.3e} > {tol:.1e}", bracket)
    npts = n if n is not None else int(round(eta_max / 0.01)) + 1
    eta = np.linspace(0.0, eta_max, npts)
    sol = _shoot(s, eta_max, dense=True)
    y = sol.sol(eta)
    y[:, 0] = (0.0, 0.0, s)
    return BlasiusProfile(eta, y[0], y[1], y[2], float(s), float(eta_max))


def blasius_field(profile: BlasiusProfile, x, y_grid) -> tuple[np.ndarray, np.ndarray]:
    """Similarity velocities (f'(eta), (eta f' - f) / (2 sqrt(x+1))) with eta = y / sqrt(x+1)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y_grid, dtype=float)
    if np.any(x < 0):
        raise ContractViolation("x must be nonnegative")
    root = np.sqrt(x + 1.0)
    eta = y / root
    if np.any(eta > profile.eta_max) or np.any(eta < 0):
        warnings.warn(
            f"eta outside [0, {profile.eta_max}] clamped to the tabulated range",
            RuntimeWarning,
            stacklevel=2,
        )
        eta = np.clip(eta, 0.0, profile.eta_max)
    F, Fp, _ = profile.interpolants()
    fv, fpv = F(eta), Fp(eta)
    return fpv, (eta * fpv - fv) / (2.0 * root)


# ----------------------------------------------------------------------------
# vorticity norm monotonicity


@dataclass(frozen=True)
class MonotonicityReport:
    ks: tuple
    worst_drift: dict  # k -> largest relative increase per unit time
    monotone: dict  # k -> bool
    tol: float

    @property
    def all_monotone(self) -> bool:
        return all(self.monotone.values())


def vorticity_norm_series(series, tol: float = 1e-8) -> MonotonicityReport:
    """Check that each L^{2k+2} norm series is non-increasing.

    ``series`` holds ``(t, {k: norm})`` samples. An increase counts as drift
    when it exceeds ``tol`` per unit time, measured relative to the initial
    norm (absolute when the initial norm is zero).
    """
    series = list(series)
    if not series:
        raise ContractViolation("empty series")
    t = np.array([s[0] for s in series], dtype=float)
    if np.any(np.diff(t) <= 0):
        raise ContractViolation("time stamps must be strictly increasing")
    ks = tuple(sorted(series[0][1]))
    worst, mono = {}, {}
    for k in ks:
        nrm = np.array([s[1][k] for s in series], dtype=float)
        scale = nrm[0] if nrm[0] > 0 else 1.0
        rate = np.diff(nrm) / np.diff(t) / scale if t.size > 1 else np.zeros(0)
        w = float(np.max(rate, initial=-np.inf)) if rate.size else 0.0
        worst[k] = w
        mono[k] = bool(w <= tol)
    return MonotonicityReport(ks, worst, mono, tol)


def random_prandtl_velocity(grid: StripGrid, seed: int, amp: float = 1.0, kmax: int = 2, **kw) -> hydro.HydroState:
    """Band-limited random (u, v) with depth-mean horizontal divergence removed."""
    rng = np.random.default_rng(seed)
    fields = []
    for _ in range(2):
        c = rng.standard_normal(grid.spectral_shape) + 1j * rng.standard_normal(grid.spectral_shape)
        mask = (np.abs(grid.kx) <= kmax) & (np.abs(grid.ky) <= kmax) & (np.abs(grid.kz) <= kmax)
        c = c * mask
        c[0, 0, 0] = 0.0
        f = grid.from_spectral(c)
        fields.append(amp * f / max(float(np.max(np.abs(f))), 1e-300))
    u, v = fields
    ub = grid.column_integral(u) / (2.0 * np.pi)
    vb = grid.column_integral(v) / (2.0 * np.pi)
    div = grid.deriv_h2d(ub, "x") + grid.deriv_h2d(vb, "y")
    phi = grid.poisson_h_divgrad(div)
    u = u - grid.deriv_h2d(phi, "x")[:, :, None]
    v = v - grid.deriv_h2d(phi, "y")[:, :, None]
    return hydro.hydro_state(grid, u, v, **kw)
