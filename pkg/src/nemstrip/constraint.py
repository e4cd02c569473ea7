"""Algebra of the hydrostatic constraint manifold, parametrised by the shear ratio.

With ``theta = dz u / dz v`` the limit Q-tensor is pinned to a line through the
origin: ``q12 = xi1 * q11`` and ``q22 = xi2 * q11``. This module holds the
rational coefficient families built on theta, the weights of the reduced
energy, and the rank-one quadratic form that controls its sign. Everything is
pointwise and vectorised over arrays of theta.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularThetaError

SQRT2 = float(np.sqrt(2.0))
SINGULAR_ABS_THETA = (SQRT2 / 2.0, SQRT2)
DEFAULT_GUARD = 1e-2


def denominator(theta):
    """D = 2 theta^4 + theta^2 + 2 (never below 2)."""
    t2 = np.asarray(theta, dtype=float) ** 2
    return 2.0 * t2 * t2 + t2 + 2.0


def case_of(theta):
    """1 where theta^2 lies in (1/2, 2), else 2."""
    t2 = np.asarray(theta, dtype=float) ** 2
    return np.where((t2 > 0.5) & (t2 < 2.0), 1, 2)


@dataclass(frozen=True)
class ConstraintCoeffs:
    theta: np.ndarray
    xi1: np.ndarray
    xi2: np.ndarray
    th1: np.ndarray
    th2: np.ndarray
    th3: np.ndarray
    c: tuple  # (C1, ..., C9)
    guard_eps: float = DEFAULT_GUARD
    case: int | None = None

    @property
    def D(self):
        return denominator(self.theta)

    def c_(self, i: int):
        """1-based access to the C coefficients."""
        return self.c[i - 1]

    @property
    def big_theta(self):
        """(Theta1, Theta2, Theta3): the off-diagonal weights of the quadratic form."""
        return (self.th1 * self.c[1], self.th1 * self.c[2], self.th3 * self.c[7])

    def matrix(self):
        """The symmetric 3x3 form, trailing axes (3, 3)."""
        T1, T2, T3 = self.big_theta
        t = np.asarray(self.theta, dtype=float)
        A = np.empty(t.shape + (3, 3))
        t2 = t * t
        D = denominator(t)
        # 1 - C1, 1 - C5, 1 - C9 in closed form (no cancellation near theta = 0)
        A[..., 0, 0] = self.th1 * (2.0 - t2) / D
        A[..., 1, 1] = self.th2 * (2.0 * t2 * t2 - t2) / D
        A[..., 2, 2] = self.th3 * 3.0 * t2 / D
        A[..., 0, 1] = A[..., 1, 0] = -T1
        A[..., 0, 2] = A[..., 2, 0] = -T2
        A[..., 1, 2] = A[..., 2, 1] = -T3
        return A


def constraint_coeffs(theta, guard_eps: float = DEFAULT_GUARD, case: int | None = None) -> ConstraintCoeffs:
    """All theta-derived coefficient fields, without any admissibility check."""
    t = np.asarray(theta, dtype=float)
    t2 = t * t
    r = 2.0 - t2
    D = denominator(t)
    xi1 = -3.0 * t / r
    xi2 = (2.0 * t2 - 1.0) / r
    th1 = 2.0 * t2 - 1.0
    th2 = t2 * r
    th3 = r * (2.0 * t2 - 1.0) / 3.0
    t3, t4 = t2 * t, t2 * t2
    c = (
        (2 * t4 + 2 * t2) / D,
        (t4 - 2 * t2) / D,
        (-t3 + 2 * t) / D,
        (1 - 2 * t2) / D,
        (2 + 2 * t2) / D,
        (2 * t3 - t) / D,
        3 * t / D,
        3 * t3 / D,
        (2 * t4 - 2 * t2 + 2) / D,
    )
    return ConstraintCoeffs(t, xi1, xi2, th1, th2, th3, c, guard_eps, case)


def check_admissible(theta, guard_eps: float = DEFAULT_GUARD, allow_mixed: bool = False) -> int:
    """Raise SingularThetaError near |theta| in {sqrt2/2, sqrt2}; return the case.

    Mixed-case fields are refused unless ``allow_mixed``; in that case 0 is
    returned.
    """
    t = np.abs(np.asarray(theta, dtype=float))
    if not np.all(np.isfinite(t)):
        bad = np.argwhere(~np.isfinite(t))[0]
        raise SingularThetaError("theta is not finite", tuple(int(i) for i in bad))
    for s in SINGULAR_ABS_THETA:
        close = np.abs(t - s) < guard_eps
        if np.any(close):
            idx = np.unravel_index(np.argmax(close), t.shape) if t.ndim else ()
            raise SingularThetaError(f"|theta| within {guard_eps} of singular value {s:.6f}", tuple(int(i) for i in idx))
    cases = case_of(t)
    if np.all(cases == 1):
        return 1
    if np.all(cases == 2):
        return 2
    if allow_mixed:
        return 0
    idx = np.unravel_index(np.argmax(cases != cases.flat[0]), t.shape)
    raise SingularThetaError("theta field mixes case 1 and case 2 cells", tuple(int(i) for i in idx))


def apply_constraint(q11, cc: ConstraintCoeffs):
    q11 = np.asarray(q11, dtype=float)
    return q11, cc.xi1 * q11, cc.xi2 * q11


def relation_residual(q11, q12, q22):
    """q12^2 - (2 q11 + q22)(q11 + 2 q22); zero on the manifold."""
    return q12 * q12 - (2.0 * q11 + q22) * (q11 + 2.0 * q22)


def shear_residuals(q11, q12, q22, uz, vz):
    """The two algebraic lines of the limit system."""
    return (2.0 * q11 + q22) * uz + q12 * vz, q12 * uz + (q11 + 2.0 * q22) * vz


def form_prefactor(theta):
    t2 = np.asarray(theta, dtype=float) ** 2
    return (2.0 - t2) * (2.0 * t2 - 1.0) / denominator(theta)


def quadratic_form(cc: ConstraintCoeffs | float | np.ndarray, x, y, z):
    """(x, y, z) A (x, y, z)^T with A assembled from the theta/C weights."""
    if not isinstance(cc, ConstraintCoeffs):
        cc = constraint_coeffs(cc)
    A = cc.matrix()
    vec = np.stack(np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (x, y, z))), axis=-1)
    return np.einsum("...i,...ij,...j->...", vec, A, vec)


def quadratic_form_factored(theta, x, y, z):
    t = np.asarray(theta, dtype=float)
    return form_prefactor(t) * (x + t * t * y - t * z) ** 2


def weighted_density(cc: ConstraintCoeffs, q11, q22, q12):
    return cc.th1 * q11 * q11 + cc.th2 * q22 * q22 + cc.th3 * q12 * q12


def density_factor(theta):
    """Weighted density per q11^2 on the manifold: (2t^2-1)(2t^4+t^2+2)/(2-t^2)."""
    t2 = np.asarray(theta, dtype=float) ** 2
    return (2.0 * t2 - 1.0) * denominator(theta) / (2.0 - t2)


def density_factor_short(theta):
    """(2t^2-1)(2+3t^2)/(2-t^2); agrees with :func:`density_factor` only at t^2 in {0, 1}."""
    t2 = np.asarray(theta, dtype=float) ** 2
    return (2.0 * t2 - 1.0) * (2.0 + 3.0 * t2) / (2.0 - t2)


def row_identities(cc: ConstraintCoeffs):
    """Residuals that vanish identically: three manifold rows and the Theta pairs."""
    C = cc.c
    return {
        "row1": C[0] + cc.xi2 * C[1] + cc.xi1 * C[2],
        "row2": C[3] + cc.xi2 * C[4] + cc.xi1 * C[5],
        "row3": C[6] + cc.xi2 * C[7] + cc.xi1 * C[8],
        "theta1": cc.th1 * C[1] - cc.th2 * C[3],
        "theta2": cc.th3 * C[6] - cc.th1 * C[2],
        "theta3": cc.th2 * C[5] - cc.th3 * C[7],
    }
