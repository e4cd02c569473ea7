"""Growth/decay regime fits for energy or norm time series.

A series is a sequence of ``(t, F)`` pairs with ``F > 0``. Two log-linear
least-squares fits are compared: ``log F`` against ``t`` (exponential) and
``log F`` against ``log(1 + t)`` (polynomial). Envelope fits report the
smallest constants for which the corresponding upper bound holds on every
sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ContractViolation, InsufficientData

MIN_SAMPLES = 16
MIN_SPAN = 2.0


class Regime(str, Enum):
    EXPONENTIAL_GROWTH = "exponential_growth"
    POLYNOMIAL_GROWTH = "polynomial_growth"
    EXPONENTIAL_DECAY = "exponential_decay"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class RegimeReport:
    regime: Regime
    rate: float  # slope of log F against t
    exponent: float  # slope of log F against log(1+t)
    residual_exp: float
    residual_poly: float
    exponent_bound: float | None = None


@dataclass(frozen=True)
class EnvelopeReport:
    mode: str
    f0: float
    params: dict = field(default_factory=dict)
    holds: bool = True

    def curve(self, t):
        """Evaluate the fitted envelope at times ``t``."""
        t = np.asarray(t, dtype=float)
        p = self.params
        if self.mode == "exponential":
            return self.f0 * np.exp(p["lambda1"] * t)
        if self.mode == "polynomial":
            return self.f0 * (1.0 + t) ** p["exponent"]
        return p["C"] * np.exp(-p["lambda2"] * t)


def _arrays(series):
    arr = np.asarray(list(series), dtype=float)
    if arr.ndim != 2 or arr.shape[1] < 2:
        raise ContractViolation("series must be a sequence of (t, F) pairs")
    t, f = arr[:, 0], arr[:, 1]
    if np.any(np.diff(t) <= 0):
        raise ContractViolation("time stamps must be strictly increasing")
    if np.any(~np.isfinite(f)) or np.any(f <= 0):
        i = int(np.argmax(~np.isfinite(f) | (f <= 0)))
        raise ContractViolation(f"series values must be positive and finite (sample {i}: {f[i]!r})")
    return t, f


def _linfit(x, y):
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ coef
    return float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(res * res)))


def polynomial_bound(alpha: float) -> float:
    """alpha / (1 - alpha): the admissible polynomial growth exponent."""
    if not 0.0 < alpha < 1.0:
        raise ContractViolation(f"alpha must lie in (0, 1), got {alpha}")
    return alpha / (1.0 - alpha)


def classify_regime(series, eps: float | None = None, alpha: float | None = None, *, flat_tol: float = 1e-6, exponent_tol: float = 1e-6) -> RegimeReport:
    """Pick the growth/decay form whose log-linear fit has the smallest residual.

    The winning fit must also have the right sign (and, for polynomial
    growth with ``alpha`` given, an exponent not above alpha/(1-alpha));
    otherwise the series is reported as indeterminate. ``eps`` is accepted
    for bookkeeping only: the fitted forms do not depend on it.
    """
    t, f = _arrays(series)
    if t.size < MIN_SAMPLES or t[-1] - t[0] < MIN_SPAN:
        raise InsufficientData(
            f"need >= {MIN_SAMPLES} samples spanning >= {MIN_SPAN} time units, "
            f"got {t.size} samples over {t[-1] - t[0]:.3g}"
        )
    logf = np.log(f)
    rate, _, r_exp = _linfit(t, logf)
    expo, _, r_poly = _linfit(np.log1p(t), logf)
    bound = polynomial_bound(alpha) if alpha is not None else None

    regime = Regime.INDETERMINATE
    if abs(rate) * (t[-1] - t[0]) > flat_tol:
        if r_exp <= r_poly:
            regime = Regime.EXPONENTIAL_GROWTH if rate > 0 else Regime.EXPONENTIAL_DECAY
        elif expo > 0 and (bound is None or expo <= bound + exponent_tol):
            regime = Regime.POLYNOMIAL_GROWTH
        elif expo < 0 and rate < 0:
            # power-law decay is still dominated by some exponential envelope
            regime = Regime.EXPONENTIAL_DECAY
    return RegimeReport(regime, rate, expo, r_exp, r_poly, bound)


def ode_envelope(series, eps: float | None = None, mode: str = "exponential", alpha: float = 0.75, *, tail: float = 0.5) -> EnvelopeReport:
    """Smallest envelope constants of the requested form.

    ``exponential``: F <= F0 exp(lambda1 t).
    ``polynomial``: F <= F0 (1+t)^k, plus the ODE form
    F <= (F0^((2-p)/p) + C (2-p)/p t)^(p/(2-p)) with p = 2 alpha.
    ``decay``: rate fitted on the trailing ``tail`` fraction, then the
    smallest C with F <= C exp(-lambda2 t).
    """
    t, f = _arrays(series)
    f0 = float(f[0])
    later = t > t[0]
    if not np.any(later):
        raise InsufficientData("envelope needs at least two samples")
    tt = t - t[0]
    if mode == "exponential":
        lam = float(np.max(np.log(f[later] / f0) / tt[later]))
        return EnvelopeReport(mode, f0, {"lambda1": lam}, bool(math.isfinite(lam)))
    if mode == "polynomial":
        k = float(np.max(np.log(f[later] / f0) / np.log1p(tt[later])))
        p = 2.0 * alpha
        if not 0.0 < p < 2.0:
            raise ContractViolation(f"alpha must lie in (0, 1), got {alpha}")
        r = (2.0 - p) / p
        c_ode = float(np.max((f[later] ** r - f0**r) / (r * tt[later])))
        params = {
            "exponent": k,
            "exponent_bound": polynomial_bound(alpha),
            "ode_constant": max(c_ode, 0.0),
            "ode_power": 1.0 / r,
        }
        return EnvelopeReport(mode, f0, params, bool(k <= polynomial_bound(alpha) + 1e-9))
    if mode == "decay":
        start = int(np.floor((1.0 - tail) * t.size))
        start = min(start, t.size - 2)
        rate, _, _ = _linfit(tt[start:], np.log(f[start:]))
        lam = -rate
        c = float(np.max(f * np.exp(lam * tt)))
        return EnvelopeReport(mode, f0, {"lambda2": lam, "C": c}, bool(lam > 0))
    raise ContractViolation(f"unknown envelope mode {mode!r}")


def theorem_norm(kinetic, q_l2, q_h1):
    """||u|| + ||Q|| + ||d_eps Q|| from the three energy parts (each 1/2 ||.||^2)."""
    return np.sqrt(2.0 * np.asarray(kinetic)) + np.sqrt(2.0 * np.asarray(q_l2)) + np.sqrt(2.0 * np.asarray(q_h1))
