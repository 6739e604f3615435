"""Uniform periodic 3-D grids, spectral calculus, and the Riesz-potential convolution.

Conventions used throughout the package:

* the domain is the cube [-L, L)^3 sampled at n points per axis, spacing
  h = 2L/n, coordinates x_i = -L + i*h;
* arrays are shaped (n, n, n) and indexed [ix, iy, iz];
* wavenumbers are k_j = (pi/L) * f_j with integer frequencies
  f_j in {-n/2, ..., n/2 - 1} (FFT ordering);
* integrals are plain h^3 Riemann sums, which are spectrally accurate for
  smooth fields that decay inside the box.

The nonlocal convolution g(x) = int f(y) |x-y|^(-mu) dy is computed on a
2x zero-padded grid with a Fourier multiplier equal to the analytic
transform of the kernel truncated to the ball |x| < 2L.  For fields whose
support lies in the inscribed ball |x| <= L the periodic images never
touch the truncated kernel, so the result is the free-space convolution of
the band-limited interpolant -- no periodic aliasing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import pi

import numpy as np

from . import _fft


class GridError(ValueError):
    """Invalid grid construction or mismatched grid/field operands."""


@dataclass(frozen=True)
class SpectralGrid:
    """Immutable uniform grid with cached wavenumbers and Riesz multipliers."""

    n: int
    half_width: float
    spacing: float
    x: np.ndarray          # axis coordinates, shape (n,)
    k: np.ndarray          # axis wavenumbers, FFT order, shape (n,)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    # -- derived arrays, built lazily and cached -------------------------

    def k_deriv(self) -> np.ndarray:
        """Axis wavenumbers with the unpaired Nyquist mode zeroed.

        Used for odd-order derivatives so real input gives real output.
        """
        if "kd" not in self._cache:
            kd = self.k.copy()
            kd[self.n // 2] = 0.0
            self._cache["kd"] = kd
        return self._cache["kd"]

    def k2(self) -> np.ndarray:
        """|k|^2 on the full (n,n,n) spectral grid."""
        if "k2" not in self._cache:
            k = self.k
            self._cache["k2"] = (
                k[:, None, None] ** 2 + k[None, :, None] ** 2 + k[None, None, :] ** 2
            )
        return self._cache["k2"]

    def k2_rfft(self) -> np.ndarray:
        """|k|^2 on the (n,n,n//2+1) real-transform spectral grid."""
        if "k2r" not in self._cache:
            k = self.k
            kz = np.abs(k[: self.n // 2 + 1])
            self._cache["k2r"] = (
                k[:, None, None] ** 2 + k[None, :, None] ** 2 + kz[None, None, :] ** 2
            )
        return self._cache["k2r"]

    def r2(self) -> np.ndarray:
        """|x|^2 at the grid points."""
        if "r2" not in self._cache:
            x = self.x
            self._cache["r2"] = (
                x[:, None, None] ** 2 + x[None, :, None] ** 2 + x[None, None, :] ** 2
            )
        return self._cache["r2"]

    def coords(self):
        """Broadcastable (X, Y, Z) coordinate views."""
        x = self.x
        return x[:, None, None], x[None, :, None], x[None, None, :]

    def radial_labels(self):
        """Integer |x|^2 equivalence classes (exact on the uniform grid)."""
        if "rad" not in self._cache:
            # x_i = h*(i - n/2); class id from integer offset squares
            oi = (np.arange(self.n) - self.n // 2).astype(np.int64)
            i2 = (
                oi[:, None, None] ** 2
                + oi[None, :, None] ** 2
                + oi[None, None, :] ** 2
            ).ravel()
            uniq, labels = np.unique(i2, return_inverse=True)
            counts = np.bincount(labels)
            self._cache["rad"] = (labels, counts, uniq)
        return self._cache["rad"]

    def riesz_multiplier(self, mu: float) -> np.ndarray:
        """Cached Fourier multiplier of the truncated Riesz kernel.

        Laid out for real transforms on the 2x padded grid,
        shape (2n, 2n, n+1).
        """
        _check_mu(mu)
        key = ("riesz", float(mu))
        if key not in self._cache:
            self._cache[key] = _truncated_riesz_multiplier(
                self.n, self.half_width, float(mu)
            )
        return self._cache[key]


def make_grid(n: int, half_width: float) -> SpectralGrid:
    """Build the cubic grid [-L, L)^3 with n points per axis.

    n must be a power of two with n >= 8; half_width L must be positive.
    """
    if not isinstance(n, (int, np.integer)):
        raise GridError(f"grid size must be an integer, got {n!r}")
    n = int(n)
    if n < 8 or (n & (n - 1)) != 0:
        raise GridError(f"grid size must be a power of two >= 8, got {n}")
    if not (half_width > 0):
        raise GridError(f"half width must be positive, got {half_width}")
    L = float(half_width)
    h = 2.0 * L / n
    x = -L + h * np.arange(n)
    k = 2.0 * pi * np.fft.fftfreq(n, d=h)
    return SpectralGrid(n=n, half_width=L, spacing=h, x=x, k=k)


@dataclass
class ComplexField:
    """A complex scalar sample on a SpectralGrid, shape (n, n, n)."""

    grid: SpectralGrid
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.complex128)
        n = self.grid.n
        if self.data.shape != (n, n, n):
            raise GridError(
                f"field shape {self.data.shape} does not match grid n={n}"
            )
        if not np.all(np.isfinite(self.data)):
            raise GridError("field contains non-finite samples")

    def copy(self) -> "ComplexField":
        return ComplexField(self.grid, self.data.copy())

    def l2_norm_sq(self) -> float:
        return float(self.grid.spacing**3 * np.sum(np.abs(self.data) ** 2))


def same_grid(a: ComplexField, b: ComplexField) -> SpectralGrid:
    if a.grid is not b.grid and (
        a.grid.n != b.grid.n or a.grid.half_width != b.grid.half_width
    ):
        raise GridError("fields live on different grids")
    return a.grid


# ---------------------------------------------------------------------------
# Riesz-potential convolution
# ---------------------------------------------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)
_PANEL = pi / 8.0


def _check_mu(mu: float):
    if not (0.0 < mu < 3.0):
        raise ValueError(f"Riesz exponent must satisfy 0 < mu < 3, got {mu}")


def _sin_power_series(mu: float, z: np.ndarray) -> np.ndarray:
    # int_0^z s^(1-mu) sin s ds by the alternating series, valid for small z
    out = np.zeros_like(z)
    for j in range(10):
        e = 2 * j + 3 - mu
        term = (-1.0) ** j * z**e / (_factorial_odd(j) * e)
        out += term
    return out


def _factorial_odd(j: int) -> float:
    # (2j+1)!
    out = 1.0
    for i in range(2, 2 * j + 2):
        out *= i
    return out


def sin_power_integral(mu: float, z: np.ndarray) -> np.ndarray:
    """Vectorized S(z) = int_0^z s^(1-mu) sin(s) ds for z >= 0, 0 < mu < 3.

    Composite 16-point Gauss-Legendre panels of width pi/8 with a series
    expansion on the first panel (the integrand has an algebraic endpoint
    there for mu > 1).  Absolute accuracy is near machine precision.
    """
    _check_mu(mu)
    z = np.asarray(z, dtype=np.float64)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    if np.any(z < 0):
        raise ValueError("sin_power_integral requires z >= 0")
    out = np.zeros_like(z)
    small = z <= _PANEL
    out[small] = _sin_power_series(mu, z[small])
    big = ~small
    if np.any(big):
        zmax = float(z.max())
        npanels = int(np.ceil(zmax / _PANEL)) + 1
        edges = _PANEL * np.arange(npanels + 1)
        # cumulative integral at panel edges
        cum = np.zeros(npanels + 1)
        cum[1] = _sin_power_series(mu, np.array(_PANEL))[()]
        mid = 0.5 * (edges[1:-1] + edges[2:])
        half = 0.5 * (edges[2:] - edges[1:-1])
        s = mid[:, None] + half[:, None] * _GL_NODES[None, :]
        vals = s ** (1.0 - mu) * np.sin(s)
        cum[2:] = cum[1] + np.cumsum(half * (vals @ _GL_WEIGHTS))
        zb = z[big]
        idx = np.minimum((zb / _PANEL).astype(int), npanels - 1)
        lo = edges[idx]
        m = 0.5 * (lo + zb)
        hw = 0.5 * (zb - lo)
        s = m[:, None] + hw[:, None] * _GL_NODES[None, :]
        partial = hw * ((s ** (1.0 - mu) * np.sin(s)) @ _GL_WEIGHTS)
        out[big] = cum[idx] + partial
    return out[()] if scalar else out


def _truncated_riesz_multiplier(n: int, L: float, mu: float) -> np.ndarray:
    m = 2 * n
    trunc = 2.0 * L
    dk = pi / (2.0 * L)  # padded-grid wavenumber spacing
    f = np.fft.fftfreq(m, d=1.0 / m).astype(np.int64)
    fz = np.arange(n + 1, dtype=np.int64)
    i2 = (
        f[:, None, None] ** 2 + f[None, :, None] ** 2 + fz[None, None, :] ** 2
    )
    uniq, inverse = np.unique(i2.ravel(), return_inverse=True)
    kk = dk * np.sqrt(uniq.astype(np.float64))
    vals = np.empty_like(kk)
    nz = kk > 0
    vals[nz] = 4.0 * pi * kk[nz] ** (mu - 3.0) * sin_power_integral(mu, kk[nz] * trunc)
    vals[~nz] = 4.0 * pi * trunc ** (3.0 - mu) / (3.0 - mu)
    return vals[inverse].reshape(i2.shape)


def _convolve_real(grid: SpectralGrid, f: np.ndarray, mu: float) -> np.ndarray:
    n = grid.n
    mult = grid.riesz_multiplier(mu)
    pad = np.zeros((2 * n, 2 * n, 2 * n))
    pad[:n, :n, :n] = f
    fh = _fft.rfftn(pad)
    fh *= mult
    out = _fft.irfftn(fh, s=(2 * n, 2 * n, 2 * n))
    return np.ascontiguousarray(out[:n, :n, :n])


def riesz_convolve(f, mu: float, grid: SpectralGrid | None = None):
    """Free-space convolution g(x) = int f(y) |x-y|^(-mu) dy, 0 < mu < 3.

    Accepts a ComplexField (returns a ComplexField) or a raw (n,n,n) array
    with an explicit grid (returns an array).  Real input gives real
    output; the caller is responsible for f decaying near the box
    boundary, otherwise the truncated kernel no longer matches the
    free-space one.
    """
    _check_mu(mu)
    if isinstance(f, ComplexField):
        out = riesz_convolve(f.data, mu, f.grid)
        return ComplexField(f.grid, out.astype(np.complex128))
    if grid is None:
        raise GridError("riesz_convolve needs a grid for raw arrays")
    arr = np.asarray(f)
    if arr.shape != (grid.n, grid.n, grid.n):
        raise GridError(f"field shape {arr.shape} does not match grid n={grid.n}")
    if np.iscomplexobj(arr):
        return _convolve_real(grid, arr.real, mu) + 1j * _convolve_real(
            grid, arr.imag, mu
        )
    return _convolve_real(grid, arr.astype(np.float64, copy=False), mu)


# ---------------------------------------------------------------------------
# Spectral calculus and quadrature
# ---------------------------------------------------------------------------


def _as_array(u) -> tuple[SpectralGrid, np.ndarray]:
    if isinstance(u, ComplexField):
        return u.grid, u.data
    raise GridError("expected a ComplexField")


def spectral_gradient_sqnorm(u, grid: SpectralGrid | None = None) -> float:
    """||grad u||_2^2 by Parseval; exact for band-limited fields."""
    if isinstance(u, ComplexField):
        grid, arr = u.grid, u.data
    else:
        arr = np.asarray(u)
    if grid is None:
        raise GridError("spectral_gradient_sqnorm needs a grid")
    w = grid.spacing**3 / grid.n**3
    if np.iscomplexobj(arr):
        uh = _fft.fftn(arr)
        return float(w * np.sum(grid.k2() * (uh.real**2 + uh.imag**2)))
    uh = _fft.rfftn(arr)
    k2 = grid.k2_rfft()
    mag = uh.real**2 + uh.imag**2
    # double the interior rfft modes (kz and -kz both present in the full sum)
    nz = grid.n // 2
    total = 2.0 * np.sum(k2 * mag) - np.sum(k2[:, :, 0] * mag[:, :, 0])
    total -= np.sum(k2[:, :, nz] * mag[:, :, nz])
    return float(w * total)


def integrate_weighted(u, w=None, grid: SpectralGrid | None = None) -> float:
    """h^3 * sum(w * |u|^2); w defaults to 1 and must share the grid shape."""
    if isinstance(u, ComplexField):
        grid, arr = u.grid, u.data
    else:
        arr = np.asarray(u)
    if grid is None:
        raise GridError("integrate_weighted needs a grid")
    dens = arr.real**2 + arr.imag**2 if np.iscomplexobj(arr) else arr**2
    if w is None:
        return float(grid.spacing**3 * np.sum(dens))
    w = np.asarray(w)
    if w.shape != dens.shape:
        raise GridError(f"weight shape {w.shape} does not match field")
    return float(grid.spacing**3 * np.sum(w * dens))


def integrate(arr: np.ndarray, grid: SpectralGrid) -> float:
    """h^3 * sum(arr) for a raw real array."""
    return float(grid.spacing**3 * np.sum(arr))


def l2_inner(grid: SpectralGrid, a: np.ndarray, b: np.ndarray) -> complex:
    """h^3 * sum(conj(a) * b)."""
    return complex(grid.spacing**3 * np.sum(np.conj(a) * b))


def laplacian(grid: SpectralGrid, arr: np.ndarray) -> np.ndarray:
    """Spectral Laplacian; preserves real dtype for real input."""
    if np.iscomplexobj(arr):
        return _fft.ifftn(-grid.k2() * _fft.fftn(arr))
    n = grid.n
    return _fft.irfftn(-grid.k2_rfft() * _fft.rfftn(arr), s=(n, n, n))


def gradient(grid: SpectralGrid, arr: np.ndarray) -> list[np.ndarray]:
    """Spectral gradient components (Nyquist mode dropped for realness)."""
    kd = grid.k_deriv()
    cplx = np.iscomplexobj(arr)
    uh = _fft.fftn(arr) if cplx else _fft.rfftn(arr)
    out = []
    if cplx:
        shapes = [kd[:, None, None], kd[None, :, None], kd[None, None, :]]
        for ka in shapes:
            out.append(_fft.ifftn(1j * ka * uh))
    else:
        n = grid.n
        kdz = kd[: n // 2 + 1]
        shapes = [kd[:, None, None], kd[None, :, None], kdz[None, None, :]]
        for ka in shapes:
            out.append(_fft.irfftn(1j * ka * uh, s=(n, n, n)))
    return out


def x_dot_gradient(grid: SpectralGrid, arr: np.ndarray) -> np.ndarray:
    """x . grad(arr) evaluated spectrally."""
    gx, gy, gz = gradient(grid, arr)
    X, Y, Z = grid.coords()
    return X * gx + Y * gy + Z * gz


def symmetrize_radial(grid: SpectralGrid, arr: np.ndarray) -> np.ndarray:
    """Orthogonal projection onto shell-wise constant (radial) fields.

    Grid points are grouped by the exact integer value of |x/h|^2, so the
    projection is an average over full rotation orbits as represented on
    the lattice.
    """
    labels, counts, _ = grid.radial_labels()
    flat = arr.ravel()
    if np.iscomplexobj(arr):
        re = np.bincount(labels, weights=flat.real) / counts
        im = np.bincount(labels, weights=flat.imag) / counts
        return (re[labels] + 1j * im[labels]).reshape(arr.shape)
    means = np.bincount(labels, weights=flat) / counts
    return means[labels].reshape(arr.shape)


def reflect(arr: np.ndarray) -> np.ndarray:
    """The field x -> f(-x) on the periodic grid."""
    out = arr[::-1, ::-1, ::-1]
    return np.roll(out, shift=(1, 1, 1), axis=(0, 1, 2))


def symmetrize_octahedral(arr: np.ndarray) -> np.ndarray:
    """Average over the 48 octahedral grid symmetries (exact projector).

    Axis permutations and sign reflections commute exactly with every
    spectral operator and radial multiplier on the cubic grid, so this is
    the strongest symmetry a discrete radial problem actually has; shell
    averaging (symmetrize_radial) is finer but only approximate for grid
    operators.
    """
    out = arr
    for ax in range(3):
        out = 0.5 * (out + np.roll(np.flip(out, axis=ax), 1, axis=ax))
    return (
        out
        + out.transpose(0, 2, 1)
        + out.transpose(1, 0, 2)
        + out.transpose(1, 2, 0)
        + out.transpose(2, 0, 1)
        + out.transpose(2, 1, 0)
    ) / 6.0


def boundary_fraction(grid: SpectralGrid, arr: np.ndarray, cells: int = 2) -> float:
    """Fraction of |arr|^2 mass within `cells` of any box face."""
    dens = np.abs(arr) ** 2
    total = float(dens.sum())
    if total == 0.0:
        return 0.0
    inner = dens[cells:-cells, cells:-cells, cells:-cells]
    return float((total - inner.sum()) / total)
