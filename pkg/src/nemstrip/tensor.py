"""Pointwise algebra of the scaled Q-tensor.

Only the five independent entries (q11, q12, q22, q13, q23) are stored. The
full 3x3 matrix has ``eps*q13`` and ``eps*q23`` in its (1,3) and (2,3) slots
and ``q33 = -q11 - q22`` on the diagonal. Every function here broadcasts over
arbitrary leading array shapes, so the same code serves single points and
whole grid fields. Matrices are laid out with the two tensor indices *last*,
i.e. shape ``(..., 3, 3)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, SingularScaleError

CONTRACT_TOL = 1e-12


@dataclass(frozen=True)
class BulkParams:
    """Landau-de Gennes coefficients of the bulk potential."""

    a: float
    b: float
    c: float

    def __post_init__(self):
        if not (self.a > 0 and self.c > 0):
            raise ContractViolation(f"bulk parameters need a > 0 and c > 0, got a={self.a}, c={self.c}")

    @classmethod
    def degenerate(cls, a: float = 0.0, b: float = 0.0, c: float = 0.0) -> "BulkParams":
        """Coefficients outside the physical range (e.g. the linear case b = c = 0), unvalidated."""
        obj = object.__new__(cls)
        for name, val in (("a", a), ("b", b), ("c", c)):
            object.__setattr__(obj, name, float(val))
        return obj


@dataclass(frozen=True)
class ScaledQ:
    q11: np.ndarray | float
    q12: np.ndarray | float
    q22: np.ndarray | float
    q13: np.ndarray | float
    q23: np.ndarray | float
    eps: float

    @property
    def q33(self):
        return -np.asarray(self.q11) - np.asarray(self.q22)

    def components(self):
        return (self.q11, self.q12, self.q22, self.q13, self.q23)

    def matrix(self) -> np.ndarray:
        return full_matrix(self.q11, self.q12, self.q22, self.q13, self.q23, self.eps)


@dataclass(frozen=True)
class SpinPoint:
    w0: np.ndarray | float
    w1: np.ndarray | float
    w2: np.ndarray | float
    eps: float

    def matrix(self) -> np.ndarray:
        return spin_tensor(self.w0, self.w1, self.w2, self.eps)


def full_matrix(q11, q12, q22, q13, q23, eps: float) -> np.ndarray:
    q11, q12, q22, q13, q23 = np.broadcast_arrays(*map(np.asarray, (q11, q12, q22, q13, q23)))
    out = np.empty(q11.shape + (3, 3), dtype=np.result_type(q11, float))
    out[..., 0, 0] = q11
    out[..., 1, 1] = q22
    out[..., 2, 2] = -q11 - q22
    out[..., 0, 1] = out[..., 1, 0] = q12
    out[..., 0, 2] = out[..., 2, 0] = eps * q13
    out[..., 1, 2] = out[..., 2, 1] = eps * q23
    return out


def components_of(Q: np.ndarray, eps: float):
    """Inverse of :func:`full_matrix` (reads the upper triangle)."""
    if eps == 0:
        raise SingularScaleError("eps must be nonzero to recover q13, q23")
    return (Q[..., 0, 0], Q[..., 0, 1], Q[..., 1, 1], Q[..., 0, 2] / eps, Q[..., 1, 2] / eps)


def trace_full(q: ScaledQ):
    q11, q12, q22, q13, q23 = map(np.asarray, q.components())
    e2 = q.eps * q.eps
    return 2.0 * (q11 * q11 + q12 * q12 + q22 * q22 + e2 * q13 * q13 + e2 * q23 * q23 + q11 * q22)


def trace_limit(q11, q12, q22):
    q11, q12, q22 = map(np.asarray, (q11, q12, q22))
    return 2.0 * (q11 * q11 + q11 * q22 + q22 * q22 + q12 * q12)


def check_symmetric_traceless(Q: np.ndarray, tol: float = CONTRACT_TOL, name: str = "Q") -> None:
    Q = np.asarray(Q)
    if Q.shape[-2:] != (3, 3):
        raise ContractViolation(f"{name} must have trailing shape (3, 3), got {Q.shape}")
    asym = np.max(np.abs(Q - np.swapaxes(Q, -1, -2)), initial=0.0)
    if asym > tol:
        raise ContractViolation(f"{name} is not symmetric (max |Q - Q^T| = {asym:.3e})")
    tr = np.max(np.abs(np.trace(Q, axis1=-2, axis2=-1)), initial=0.0)
    if tr > tol:
        raise ContractViolation(f"{name} is not traceless (max |tr Q| = {tr:.3e})")


def _eye_like(Q):
    return np.broadcast_to(np.eye(3), Q.shape)


def bulk_potential(Q: np.ndarray, p: BulkParams):
    """psi(Q) = a tr(Q^2)/2 - b tr(Q^3)/3 + c tr(Q^2)^2/4."""
    Q2 = Q @ Q
    t2 = np.trace(Q2, axis1=-2, axis2=-1)
    t3 = np.trace(Q2 @ Q, axis1=-2, axis2=-1)
    return p.a * t2 / 2.0 - p.b * t3 / 3.0 + p.c * t2 * t2 / 4.0


def bulk_force(Q: np.ndarray, p: BulkParams, check: bool = True) -> np.ndarray:
    """a Q - b (Q^2 - tr(Q^2) I / 3) + c Q tr(Q^2)."""
    Q = np.asarray(Q, dtype=float)
    if check:
        check_symmetric_traceless(Q)
    Q2 = Q @ Q
    t2 = np.trace(Q2, axis1=-2, axis2=-1)[..., None, None]
    return p.a * Q - p.b * (Q2 - t2 * _eye_like(Q) / 3.0) + p.c * Q * t2


def corotation(Q: np.ndarray, Omega: np.ndarray) -> np.ndarray:
    Q = np.asarray(Q, dtype=float)
    Omega = np.asarray(Omega, dtype=float)
    return Q @ Omega - Omega @ Q


def spin_tensor(w0, w1, w2, eps: float) -> np.ndarray:
    """Antisymmetric velocity-gradient part in scaled variables."""
    if eps == 0:
        raise SingularScaleError("spin tensor carries 1/eps entries; eps must be nonzero")
    w0, w1, w2 = np.broadcast_arrays(*map(np.asarray, (w0, w1, w2)))
    out = np.zeros(w0.shape + (3, 3))
    out[..., 0, 1] = 0.5 * w0
    out[..., 0, 2] = 0.5 * w1 / eps
    out[..., 1, 2] = 0.5 * w2 / eps
    out[..., 1, 0] = -out[..., 0, 1]
    out[..., 2, 0] = -out[..., 0, 2]
    out[..., 2, 1] = -out[..., 1, 2]
    return out


def spin_matrices(q: ScaledQ, s: SpinPoint):
    """The three rotation matrices, one per spin component.

    Their sum equals ``corotation(Q, Omega)`` for the full scaled matrix, so the
    pairing with Q vanishes identically.
    """
    eps = q.eps
    if eps == 0 or s.eps == 0:
        raise SingularScaleError("rotation matrices carry 1/eps entries; eps must be nonzero")
    q11, q12, q22, q13, q23 = np.broadcast_arrays(*map(np.asarray, q.components()))
    q33 = -q11 - q22
    w0, w1, w2 = (np.asarray(w) for w in (s.w0, s.w1, s.w2))
    shape = np.broadcast_shapes(q11.shape, w0.shape, w1.shape, w2.shape)

    def sym(d11, d12, d13, d22, d23, d33):
        m = np.zeros(shape + (3, 3))
        m[..., 0, 0] = d11
        m[..., 0, 1] = m[..., 1, 0] = d12
        m[..., 0, 2] = m[..., 2, 0] = d13
        m[..., 1, 1] = d22
        m[..., 1, 2] = m[..., 2, 1] = d23
        m[..., 2, 2] = d33
        return m

    h = 0.5
    s1 = sym(-q12, h * (q11 - q22), -h * eps * q23, q12, h * eps * q13, 0.0) * w0[..., None, None]
    s2 = sym(-q13, -h * q23, (q11 - q33) / (2 * eps), 0.0, q12 / (2 * eps), q13) * w1[..., None, None]
    s3 = sym(0.0, -h * q13, q12 / (2 * eps), -q23, (q22 - q33) / (2 * eps), q23) * w2[..., None, None]
    return s1, s2, s3


def frobenius(A: np.ndarray, B: np.ndarray):
    return np.einsum("...ij,...ij->...", A, B)


def elastic_stress(grad_Q: np.ndarray, lap_Q: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """M = grad Q (.) grad Q + (Lap Q) Q - Q (Lap Q).

    ``grad_Q[..., k, i, j]`` is the derivative of entry (i, j) along axis k;
    ``lap_Q`` and ``Q`` have shape ``(..., 3, 3)``.
    """
    grad_Q = np.asarray(grad_Q, dtype=float)
    lap_Q = np.asarray(lap_Q, dtype=float)
    Q = np.asarray(Q, dtype=float)
    gg = np.einsum("...kij,...lij->...kl", grad_Q, grad_Q)
    return gg + lap_Q @ Q - Q @ lap_Q
