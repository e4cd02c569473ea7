"""Spectral calculus on the scaled strip [0, 2pi]^3.

The horizontal directions are always periodic. Along z the grid nodes sit at
cell centres ``z_j = (j + 1/2) h``; with ``z_bc="periodic"`` plain Fourier
series are used, with ``z_bc="zero"`` a field is extended oddly (or evenly,
for derivatives of vanishing fields) across z = 0 and z = 2pi and treated as
periodic on [0, 4pi]. Cell-centred nodes make both extensions exact without
endpoint samples.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from .errors import CompatibilityError, ContractViolation, SingularScaleError

TWO_PI = 2.0 * np.pi
Z_BCS = ("periodic", "zero")
AXES = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class NormReport:
    l2: float
    linf: float
    l4: float


@dataclass(frozen=True)
class StripGrid:
    nx: int
    ny: int
    nz: int
    eps: float = 1.0
    z_bc: str = "periodic"

    def __post_init__(self):
        for name in ("nx", "ny", "nz"):
            n = getattr(self, name)
            if not isinstance(n, (int, np.integer)) or n <= 0 or n % 2:
                raise ContractViolation(f"{name} must be a positive even integer, got {n!r}")
        if not self.eps > 0:
            raise SingularScaleError(f"eps must be positive, got {self.eps!r}")
        if self.z_bc not in Z_BCS:
            raise ContractViolation(f"z_bc must be one of {Z_BCS}, got {self.z_bc!r}")

    # geometry -----------------------------------------------------------
    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def periodic(self) -> bool:
        return self.z_bc == "periodic"

    @property
    def hx(self) -> float:
        return TWO_PI / self.nx

    @property
    def hy(self) -> float:
        return TWO_PI / self.ny

    @property
    def hz(self) -> float:
        return TWO_PI / self.nz

    @property
    def h(self) -> float:
        return min(self.hx, self.hy, self.hz)

    @property
    def cell_volume(self) -> float:
        return self.hx * self.hy * self.hz

    @property
    def volume(self) -> float:
        return TWO_PI**3

    @cached_property
    def x(self) -> np.ndarray:
        return np.arange(self.nx) * self.hx

    @cached_property
    def y(self) -> np.ndarray:
        return np.arange(self.ny) * self.hy

    @cached_property
    def z(self) -> np.ndarray:
        return (np.arange(self.nz) + 0.5) * self.hz

    def coords(self):
        """Broadcastable coordinate arrays (X, Y, Z)."""
        return (self.x[:, None, None], self.y[None, :, None], self.z[None, None, :])

    def with_eps(self, eps: float) -> "StripGrid":
        return StripGrid(self.nx, self.ny, self.nz, eps, self.z_bc)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    # wavenumbers --------------------------------------------------------
    @property
    def nz_ext(self) -> int:
        return self.nz if self.periodic else 2 * self.nz

    @cached_property
    def kx(self) -> np.ndarray:
        return sfft.fftfreq(self.nx, 1.0 / self.nx)[:, None, None]

    @cached_property
    def ky(self) -> np.ndarray:
        return sfft.fftfreq(self.ny, 1.0 / self.ny)[None, :, None]

    @cached_property
    def kz(self) -> np.ndarray:
        # period of the (possibly extended) z-domain is nz_ext * hz
        k = sfft.rfftfreq(self.nz_ext, 1.0 / self.nz_ext) * (TWO_PI / (self.nz_ext * self.hz))
        return k[None, None, :]

    @cached_property
    def spectral_shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz_ext // 2 + 1)

    @cached_property
    def _odd_k(self):
        """Wavenumbers with the Nyquist modes removed (used for odd derivatives)."""
        kx = np.where(np.abs(self.kx) == self.nx // 2, 0.0, self.kx)
        ky = np.where(np.abs(self.ky) == self.ny // 2, 0.0, self.ky)
        kz = self.kz.copy()
        kz[..., -1] = 0.0  # nz_ext is even, so the last rfft mode is Nyquist
        return kx, ky, kz

    @cached_property
    def kh2(self) -> np.ndarray:
        return self.kx**2 + self.ky**2

    @cached_property
    def k2(self) -> np.ndarray:
        return self.kh2 + self.kz**2

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Two-thirds rule: keep |k_i| < n_i / 3 in each direction."""
        kz_int = np.arange(self.spectral_shape[2])  # integer mode index along (extended) z
        mx = np.abs(self.kx) < self.nx / 3.0
        my = np.abs(self.ky) < self.ny / 3.0
        mz = (kz_int < self.nz_ext / 3.0)[None, None, :]
        return mx & my & mz

    # transforms ---------------------------------------------------------
    def _extend(self, f: np.ndarray, parity: str) -> np.ndarray:
        if self.periodic:
            return f
        if parity == "odd":
            return np.concatenate([f, -f[..., ::-1]], axis=-1)
        if parity == "even":
            return np.concatenate([f, f[..., ::-1]], axis=-1)
        raise ContractViolation(f"parity must be 'odd' or 'even', got {parity!r}")

    def to_spectral(self, f: np.ndarray, parity: str = "odd") -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != self.shape:
            raise ContractViolation(f"field shape {f.shape} does not match grid {self.shape}")
        return sfft.rfftn(self._extend(f, parity), axes=(0, 1, 2))

    def from_spectral(self, fh: np.ndarray) -> np.ndarray:
        g = sfft.irfftn(fh, s=(self.nx, self.ny, self.nz_ext), axes=(0, 1, 2))
        return g if self.periodic else np.ascontiguousarray(g[..., : self.nz])

    def spectral_deriv(self, fh: np.ndarray, axis: str, order: int = 1) -> np.ndarray:
        ax = AXES[axis]
        k = (self._odd_k if order % 2 else (self.kx, self.ky, self.kz))[ax]
        return fh * (1j * k) ** order

    # calculus -----------------------------------------------------------
    def deriv(self, f: np.ndarray, axis: str, order: int = 1, parity: str = "odd") -> np.ndarray:
        """Spectral derivative along one axis.

        ``parity`` only matters for ``z_bc="zero"``: it states whether ``f`` is
        odd (vanishes at the walls) or even about them.
        """
        if axis not in AXES:
            raise ContractViolation(f"axis must be one of x, y, z, got {axis!r}")
        return self.from_spectral(self.spectral_deriv(self.to_spectral(f, parity), axis, order))

    def eps_gradient(self, f: np.ndarray, parity: str = "odd"):
        fh = self.to_spectral(f, parity)
        e = self.eps
        return (
            e * self.from_spectral(self.spectral_deriv(fh, "x")),
            e * self.from_spectral(self.spectral_deriv(fh, "y")),
            self.from_spectral(self.spectral_deriv(fh, "z")),
        )

    def gradient(self, f: np.ndarray, parity: str = "odd"):
        fh = self.to_spectral(f, parity)
        return tuple(self.from_spectral(self.spectral_deriv(fh, a)) for a in "xyz")

    def laplacian(self, f: np.ndarray, parity: str = "odd") -> np.ndarray:
        return self.from_spectral(-self.k2 * self.to_spectral(f, parity))

    def lap_h(self, f: np.ndarray, parity: str = "odd") -> np.ndarray:
        return self.from_spectral(-self.kh2 * self.to_spectral(f, parity))

    def mask_spectral(self, f: np.ndarray, parity: str = "odd") -> np.ndarray:
        """Dealiased spectrum of ``f``."""
        return self.dealias_mask * self.to_spectral(f, parity)

    def dealias(self, f: np.ndarray, parity: str = "odd") -> np.ndarray:
        return self.from_spectral(self.mask_spectral(f, parity))

    # quadrature ---------------------------------------------------------
    def column_integral(self, f: np.ndarray, parity: str | None = None) -> np.ndarray:
        """Integral over z of each column, shape (nx, ny).

        Midpoint rule by default (exact for periodic band-limited fields). On
        the zero-b.c. grid, ``parity="odd"`` integrates the sine interpolant
        exactly instead.
        """
        f = np.asarray(f, dtype=float)
        if self.periodic or parity in (None, "even"):
            return np.sum(f, axis=-1) * self.hz
        # sine series on [0, 2pi]: integral of sin(k z / 2) is 4/k for odd k, 0 for even k
        n = self.nz
        b = sfft.dst(f, type=2, axis=-1) / n  # f(z_j) = sum_k b_k sin(k z_j / 2), k = 1..n
        b[..., -1] *= 0.5
        k = np.arange(1, n + 1)
        return b @ np.where(k % 2 == 1, 4.0 / k, 0.0)

    def integrate(self, f: np.ndarray, parity: str | None = None) -> float:
        """Integral over the strip (see :meth:`column_integral` for ``parity``)."""
        return float(np.sum(self.column_integral(f, parity)) * self.hx * self.hy)

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        return self.integrate(np.asarray(f) * np.asarray(g))

    def norms(self, f: np.ndarray) -> NormReport:
        f = np.asarray(f, dtype=float)
        dv = self.cell_volume
        f2 = f * f
        return NormReport(
            l2=float(np.sqrt(np.sum(f2) * dv)),
            linf=float(np.max(np.abs(f), initial=0.0)),
            l4=float((np.sum(f2 * f2) * dv) ** 0.25),
        )

    def l2sq(self, *fields) -> float:
        return float(sum(np.sum(np.asarray(f) ** 2) for f in fields) * self.cell_volume)

    # solves -------------------------------------------------------------
    def _require_periodic(self, what: str):
        if not self.periodic:
            raise ContractViolation(f"{what} requires z_bc='periodic'")

    def project_divfree_aniso(self, u, v, w, forcing=None):
        """Anisotropic Leray projection.

        Returns ``(u', v', w', p)`` with ``(u', v', w') = (u, v, w) + forcing
        - (dx p, dy p, dz p / eps^2)`` divergence-free and ``p`` mean-free,
        where ``p`` solves ``Lap_h p + eps^-2 dzz p = div((u, v, w) + forcing)``.
        """
        self._require_periodic("project_divfree_aniso")
        if forcing is not None:
            u, v, w = (np.asarray(a) + np.asarray(b) for a, b in zip((u, v, w), forcing))
        uh, vh, wh = (self.to_spectral(a) for a in (u, v, w))
        uh, vh, wh, ph = self.project_spectral(uh, vh, wh)
        return (*(self.from_spectral(a) for a in (uh, vh, wh)), self.from_spectral(ph))

    @cached_property
    def _aniso_poisson_symbol(self):
        # built from the same Nyquist-free symbols as the divergence, so the
        # projected field is discretely divergence-free at every mode
        kx, ky, kz = self._odd_k
        sym = -(kx**2 + ky**2 + kz**2 / self.eps**2)
        return np.where(sym == 0.0, 1.0, sym)

    def project_spectral(self, uh, vh, wh):
        kx, ky, kz = self._odd_k
        div = 1j * (kx * uh + ky * vh + kz * wh)
        ph = div / self._aniso_poisson_symbol
        ph[0, 0, 0] = 0.0
        e2 = self.eps**2
        return (uh - 1j * kx * ph, vh - 1j * ky * ph, wh - 1j * kz * ph / e2, ph)

    def divergence(self, u, v, w) -> np.ndarray:
        return self.deriv(u, "x") + self.deriv(v, "y") + self.deriv(w, "z")

    def poisson_h(self, rhs: np.ndarray) -> np.ndarray:
        """Solve Lap_h p = rhs on the periodic square with mean-free p."""
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape != (self.nx, self.ny):
            raise ContractViolation(f"rhs must have shape {(self.nx, self.ny)}, got {rhs.shape}")
        mean = float(np.mean(rhs))
        if abs(mean) > 1e-10 * max(1.0, float(np.max(np.abs(rhs), initial=0.0))):
            raise CompatibilityError(f"horizontal Poisson source has nonzero mean {mean:.3e}")
        rh = sfft.rfft2(rhs)
        kx = sfft.fftfreq(self.nx, 1.0 / self.nx)[:, None]
        ky = sfft.rfftfreq(self.ny, 1.0 / self.ny)[None, :]
        sym = -(kx**2 + ky**2)
        sym[0, 0] = 1.0
        ph = rh / sym
        ph[0, 0] = 0.0
        return sfft.irfft2(ph, s=(self.nx, self.ny))

    def poisson_h_divgrad(self, rhs: np.ndarray) -> np.ndarray:
        """Solve ``dx dx p + dy dy p = rhs`` with the same first-derivative operators
        as :meth:`deriv_h2d` (Nyquist wavenumbers dropped), mean-free ``p``.

        Modes where that operator vanishes are set to zero, so the result is the
        least-squares solution when ``rhs`` has content there.
        """
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape != (self.nx, self.ny):
            raise ContractViolation(f"rhs must have shape {(self.nx, self.ny)}, got {rhs.shape}")
        kx, ky = self._k2d()
        kx = np.where(np.abs(kx) == self.nx // 2, 0.0, kx)
        ky = np.where(ky == self.ny // 2, 0.0, ky)
        sym = -(kx**2 + ky**2)
        zero = sym == 0
        ph = np.where(zero, 0.0, sfft.rfft2(rhs) / np.where(zero, 1.0, sym))
        return sfft.irfft2(ph, s=(self.nx, self.ny))

    def _k2d(self):
        kx = sfft.fftfreq(self.nx, 1.0 / self.nx)[:, None]
        ky = sfft.rfftfreq(self.ny, 1.0 / self.ny)[None, :]
        return kx, ky

    def deriv_h2d(self, p: np.ndarray, axis: str) -> np.ndarray:
        """Spectral x- or y-derivative of a horizontal (nx, ny) field."""
        kx, ky = self._k2d()
        if axis == "x":
            k = np.where(np.abs(kx) == self.nx // 2, 0.0, kx)
        elif axis == "y":
            k = np.where(ky == self.ny // 2, 0.0, ky)
        else:
            raise ContractViolation(f"horizontal axis must be 'x' or 'y', got {axis!r}")
        return sfft.irfft2(1j * k * sfft.rfft2(p), s=(self.nx, self.ny))

    def lap_h2d(self, p: np.ndarray) -> np.ndarray:
        ph = sfft.rfft2(p)
        kx = sfft.fftfreq(self.nx, 1.0 / self.nx)[:, None]
        ky = sfft.rfftfreq(self.ny, 1.0 / self.ny)[None, :]
        return sfft.irfft2(-(kx**2 + ky**2) * ph, s=(self.nx, self.ny))

    def eval_z0(self, f: np.ndarray, parity: str = "odd") -> np.ndarray:
        """Value of the trigonometric interpolant of ``f`` at z = 0."""
        ext = self._extend(np.asarray(f, dtype=float), parity)
        n = ext.shape[-1]
        c = sfft.rfft(ext, axis=-1) / n
        k = np.arange(c.shape[-1]) * (TWO_PI / (n * self.hz))
        wts = np.full(c.shape[-1], 2.0)
        wts[0] = 1.0
        wts[-1] = 0.0  # drop the Nyquist mode: it has no unique continuous extension
        phase = np.exp(-1j * k * 0.5 * self.hz)
        return np.real(np.sum(c * (wts * phase), axis=-1))


# snapshots ---------------------------------------------------------------

SNAPSHOT_MAGIC = b"STRIPFLD"
SNAPSHOT_HEADER = 64


def write_snapshot(path: str | Path, f: np.ndarray, eps: float) -> None:
    f = np.asarray(f, dtype=float)
    if f.ndim != 3:
        raise ContractViolation(f"snapshot field must be 3-D, got shape {f.shape}")
    nx, ny, nz = f.shape
    header = SNAPSHOT_MAGIC + struct.pack("<qqqd", nx, ny, nz, float(eps))
    header += b"\x00" * (SNAPSHOT_HEADER - len(header))
    data = np.ascontiguousarray(f, dtype="<f8").tobytes(order="C")
    Path(path).write_bytes(header + data)


def read_snapshot(path: str | Path):
    """Return ``(field, header)`` where header is ``{"nx", "ny", "nz", "eps"}``."""
    raw = Path(path).read_bytes()
    if len(raw) < SNAPSHOT_HEADER or raw[:8] != SNAPSHOT_MAGIC:
        raise ContractViolation(f"{path}: not a STRIPFLD snapshot")
    nx, ny, nz, eps = struct.unpack("<qqqd", raw[8:40])
    expected = SNAPSHOT_HEADER + 8 * nx * ny * nz
    if len(raw) != expected:
        raise ContractViolation(f"{path}: expected {expected} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f8", offset=SNAPSHOT_HEADER).reshape(nx, ny, nz)
    return data.astype(float), {"nx": nx, "ny": ny, "nz": nz, "eps": eps}
