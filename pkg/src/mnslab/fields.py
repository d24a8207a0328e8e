"""Periodic fields and spectral calculus on a cubic torus.

The torus [0, L)^3 sampled at N points per axis stands in for free space:
every generator in this module produces data whose support (or effective
support) sits well inside the box, so periodic wrap-around stays below the
tolerances the test suite asserts.  All calculus is pseudo-spectral: real
samples are transformed with real-input FFTs, derivatives act as diagonal
multipliers on the half-spectrum, and quadratic terms are formed in real
space on 2/3-rule dealiased representatives.

Conventions used throughout the package:

- wavenumber lattice: per axis, (2*pi/L) * {-N/2, ..., N/2 - 1}; the
  half-spectrum layout of the z axis stores {0, ..., N/2}, with the shared
  Nyquist plane zeroed in every odd-order multiplier so that all operators
  map real fields to real fields.
- pointwise vector norms: the sup norm of a vector field takes the largest
  component magnitude, the L2 norm the Euclidean length, the L1 norm the
  sum of component magnitudes.
- Sobolev norms are sums (not root-sum-squares) of derivative L2 norms over
  all multi-indices up to the requested order, matching the convention the
  solver's step rule and ball invariants are stated in.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass, field
from itertools import product as _iproduct

import numpy as np
import scipy.fft as _sfft

__all__ = [
    "MAX_SOBOLEV_ORDER",
    "MultiIndex",
    "TorusGrid",
    "ScalarField",
    "VectorField",
    "fft_workers",
    "to_spectral",
    "to_real",
    "scalar_from_samples",
    "vector_from_samples",
    "vector_from_spectral",
    "scalar_from_spectral",
    "derivative",
    "divergence",
    "laplacian",
    "norm",
    "inner_product",
    "leibniz_expand",
    "pointwise_product",
    "dealias",
    "make_divfree_bump",
    "taylor_green",
    "shear_flow",
    "apply_initial_scaling",
    "write_snapshot",
    "read_snapshot",
    "SNAPSHOT_MAGIC",
    "SNAPSHOT_VERSION",
]

# Largest Sobolev/continuity order the norm engine serves by default.
MAX_SOBOLEV_ORDER = 7


def fft_workers() -> int:
    """Number of FFT worker threads, capped by the MNS_THREADS env var."""
    avail = os.cpu_count() or 1
    cap = os.environ.get("MNS_THREADS")
    if cap is not None:
        try:
            avail = max(1, min(avail, int(cap)))
        except ValueError:
            pass
    return avail


def _rfftn(data: np.ndarray) -> np.ndarray:
    # forward-normalized: coefficients are Fourier-series coefficients, so
    # the k = 0 entry of a constant field is the constant itself
    return _sfft.rfftn(data, axes=(-3, -2, -1), norm="forward", workers=fft_workers())


def _irfftn(spec: np.ndarray, n: int) -> np.ndarray:
    return _sfft.irfftn(
        spec, s=(n, n, n), axes=(-3, -2, -1), norm="forward", workers=fft_workers()
    )


@dataclass(frozen=True)
class MultiIndex:
    """Non-negative integer derivative multi-index (ax, ay, az)."""

    ax: int
    ay: int
    az: int

    def __post_init__(self) -> None:
        for a in (self.ax, self.ay, self.az):
            if not isinstance(a, (int, np.integer)) or a < 0:
                raise ValueError(f"multi-index entries must be non-negative integers, got {self}")

    @property
    def order(self) -> int:
        return self.ax + self.ay + self.az

    def astuple(self) -> tuple[int, int, int]:
        return (self.ax, self.ay, self.az)


def _as_multi_index(k) -> MultiIndex:
    if isinstance(k, MultiIndex):
        return k
    kx, ky, kz = k
    return MultiIndex(int(kx), int(ky), int(kz))


class TorusGrid:
    """Uniform N^3 sampling of the torus [0, L)^3 with its wavenumber lattice.

    Precomputes the broadcast-ready wavenumber arrays for the half-spectrum
    layout, the 2/3-rule dealias mask, Nyquist masks for odd multipliers,
    and the Parseval weights that account for the folded z axis.
    """

    def __init__(self, n: int, length: float = 2.0 * math.pi):
        if n < 8 or n % 2 != 0:
            raise ValueError(f"grid size must be an even integer >= 8, got {n}")
        if not (length > 0.0) or not math.isfinite(length):
            raise ValueError(f"box length must be positive and finite, got {length}")
        self.n = int(n)
        self.length = float(length)
        self.dx = self.length / self.n

        base = 2.0 * math.pi / self.length
        # Integer mode numbers in FFT order; the z axis keeps the half-spectrum.
        self.modes_full = np.fft.fftfreq(self.n, d=1.0 / self.n).astype(np.int64)
        self.modes_half = np.arange(self.n // 2 + 1, dtype=np.int64)
        self.wavenumbers = base * self.modes_full.astype(np.float64)

        kx = base * self.modes_full.astype(np.float64)
        kz = base * self.modes_half.astype(np.float64)
        self.kx = kx[:, None, None]
        self.ky = kx[None, :, None]
        self.kz = kz[None, None, :]
        self.k_squared = self.kx**2 + self.ky**2 + self.kz**2

        nyq = self.n // 2
        self._odd_ok_x = (self.modes_full != -nyq)[:, None, None]
        self._odd_ok_y = (self.modes_full != -nyq)[None, :, None]
        self._odd_ok_z = (self.modes_half != nyq)[None, None, :]

        third = self.n // 3
        keep_full = np.abs(self.modes_full) <= third
        keep_half = self.modes_half <= third
        self.dealias_mask = (
            keep_full[:, None, None] & keep_full[None, :, None] & keep_half[None, None, :]
        )

        # Parseval weights: interior half-spectrum z modes represent two
        # conjugate modes of the full lattice.
        w = np.full(self.n // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        self.parseval_weights = w[None, None, :]

        self.spectral_shape = (self.n, self.n, self.n // 2 + 1)
        self.real_shape = (self.n, self.n, self.n)

        ax = np.arange(self.n) * self.dx
        self.x = ax[:, None, None]
        self.y = ax[None, :, None]
        self.z = ax[None, None, :]

        self._k2_powers: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    def __eq__(self, other) -> bool:
        return isinstance(other, TorusGrid) and self.n == other.n and self.length == other.length

    def __hash__(self) -> int:
        return hash((self.n, self.length))

    def __repr__(self) -> str:
        return f"TorusGrid(n={self.n}, length={self.length!r})"

    def cell_volume(self) -> float:
        return self.dx**3

    def squared_wavenumber_powers(self, m: int):
        """Per-axis tables (m+1, n_axis) of k_axis^(2a), used by the norm engine."""
        cached = self._k2_powers.get(m)
        if cached is not None:
            return cached
        base = 2.0 * math.pi / self.length
        kx2 = (base * self.modes_full.astype(np.float64)) ** 2
        kz2 = (base * self.modes_half.astype(np.float64)) ** 2
        expo = np.arange(m + 1)[:, None]
        tables = (kx2[None, :] ** expo, kx2[None, :] ** expo, kz2[None, :] ** expo)
        self._k2_powers[m] = tables
        return tables


@dataclass
class ScalarField:
    """Real scalar samples on a TorusGrid with an optional spectral cache."""

    grid: TorusGrid
    data: np.ndarray
    _spectral: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.shape != self.grid.real_shape:
            raise ValueError(
                f"scalar samples must have shape {self.grid.real_shape}, got {self.data.shape}"
            )

    @property
    def ncomp(self) -> int:
        return 1


@dataclass
class VectorField:
    """Real 3-component samples on a TorusGrid with an optional spectral cache."""

    grid: TorusGrid
    data: np.ndarray
    _spectral: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.shape != (3,) + self.grid.real_shape:
            raise ValueError(
                f"vector samples must have shape {(3,) + self.grid.real_shape}, "
                f"got {self.data.shape}"
            )

    @property
    def ncomp(self) -> int:
        return 3


Field = ScalarField | VectorField


def scalar_from_samples(grid: TorusGrid, data: np.ndarray) -> ScalarField:
    return ScalarField(grid, data)


def vector_from_samples(grid: TorusGrid, data: np.ndarray) -> VectorField:
    return VectorField(grid, data)


def scalar_from_spectral(grid: TorusGrid, spec: np.ndarray) -> ScalarField:
    data = _irfftn(spec, grid.n)
    return ScalarField(grid, data, _spectral=np.asarray(spec, dtype=np.complex128))


def vector_from_spectral(grid: TorusGrid, spec: np.ndarray) -> VectorField:
    data = _irfftn(spec, grid.n)
    return VectorField(grid, data, _spectral=np.asarray(spec, dtype=np.complex128))


def to_spectral(f: Field) -> np.ndarray:
    """Half-spectrum Fourier-series coefficients of f, cached.

    Forward-normalized, so a constant field c carries the value c at k = 0
    and a unit single mode carries coefficients of magnitude 1/2.
    """
    if f._spectral is None:
        f._spectral = _rfftn(f.data)
    return f._spectral


def to_real(f: Field) -> np.ndarray:
    """Real samples of f (the stored representation)."""
    return f.data


def _like(f: Field, data: np.ndarray, spec: np.ndarray | None = None) -> Field:
    cls = ScalarField if isinstance(f, ScalarField) else VectorField
    return cls(f.grid, data, _spectral=spec)


def _derivative_multiplier(grid: TorusGrid, k: MultiIndex) -> np.ndarray:
    """Diagonal spectral multiplier of the mixed partial derivative D^k.

    Odd powers zero the Nyquist plane of their axis: the lattice holds a
    single unpaired mode there, and an odd multiplier on it would break the
    conjugate symmetry that keeps inverse transforms real.
    """
    mult = np.ones(grid.spectral_shape, dtype=np.complex128)
    if k.ax:
        mult = mult * (1j * grid.kx) ** k.ax
        if k.ax % 2 == 1:
            mult = mult * grid._odd_ok_x
    if k.ay:
        mult = mult * (1j * grid.ky) ** k.ay
        if k.ay % 2 == 1:
            mult = mult * grid._odd_ok_y
    if k.az:
        mult = mult * (1j * grid.kz) ** k.az
        if k.az % 2 == 1:
            mult = mult * grid._odd_ok_z
    return mult


def derivative(f: Field, k) -> Field:
    """Mixed partial derivative D^k f as an exact spectral multiplier."""
    k = _as_multi_index(k)
    if k.order == 0:
        return _like(f, f.data.copy(), None if f._spectral is None else f._spectral.copy())
    spec = to_spectral(f) * _derivative_multiplier(f.grid, k)
    data = _irfftn(spec, f.grid.n)
    return _like(f, data, spec)


def divergence(v: VectorField) -> ScalarField:
    """Spectral divergence of a vector field."""
    if not isinstance(v, VectorField):
        raise TypeError("divergence expects a vector field")
    g = v.grid
    spec = to_spectral(v)
    out = (
        spec[0] * (1j * g.kx) * g._odd_ok_x
        + spec[1] * (1j * g.ky) * g._odd_ok_y
        + spec[2] * (1j * g.kz) * g._odd_ok_z
    )
    return ScalarField(g, _irfftn(out, g.n), _spectral=out)


def laplacian(f: Field) -> Field:
    """Spectral Laplacian of a scalar or vector field."""
    spec = to_spectral(f) * (-f.grid.k_squared)
    return _like(f, _irfftn(spec, f.grid.n), spec)


def _pointwise_magnitude(f: Field, kind: str) -> np.ndarray:
    if isinstance(f, ScalarField):
        return np.abs(f.data)
    if kind == "linf":
        return np.max(np.abs(f.data), axis=0)
    if kind == "l2":
        return np.sqrt(np.sum(f.data**2, axis=0))
    return np.sum(np.abs(f.data), axis=0)


def _spectral_moments(f: Field, m: int) -> np.ndarray:
    """Tensor S[a, b, c] = sum over modes of kx^2a ky^2b kz^2c |f_hat|^2.

    Contracting one axis at a time keeps the cost at a handful of dense
    matrix products, so all (m+1)^3 derivative energies come out of a
    single pass over the spectrum.
    """
    g = f.grid
    spec = to_spectral(f)
    a = (spec.real**2 + spec.imag**2) * g.parseval_weights
    if isinstance(f, VectorField):
        a = a.sum(axis=0)
    tx, ty, tz = g.squared_wavenumber_powers(m)
    b = np.einsum("ai,ijl->ajl", tx, a)
    c = np.einsum("bj,ajl->abl", ty, b)
    s = np.einsum("cl,abl->abc", tz, c)
    return s * g.length**3


def _check_sobolev_order(m, max_order: int) -> int:
    if m is None:
        raise ValueError("Sobolev/continuity norms require the order argument m")
    m = int(m)
    if m < 0:
        raise ValueError(f"norm order must be non-negative, got {m}")
    if m > max_order:
        raise ValueError(f"norm order {m} exceeds the configured maximum {max_order}")
    return m


def norm(f: Field, kind: str, m: int | None = None, max_order: int = MAX_SOBOLEV_ORDER) -> float:
    """Norms of a field: 'L1', 'L2', 'Linf', 'Hm' (needs m), 'Cm' (needs m).

    The Hm and Cm norms are sums of derivative norms over every multi-index
    of order at most m, including the zeroth.
    """
    g = f.grid
    kind_l = kind.lower()
    if kind_l == "l1":
        return float(np.sum(_pointwise_magnitude(f, "l1"))) * g.cell_volume()
    if kind_l == "l2":
        if isinstance(f, ScalarField):
            total = float(np.sum(f.data**2))
        else:
            total = float(np.sum(f.data**2))
        return math.sqrt(total * g.cell_volume())
    if kind_l == "linf":
        return float(np.max(np.abs(f.data)))
    if kind_l == "hm":
        m = _check_sobolev_order(m, max_order)
        s = _spectral_moments(f, m)
        total = 0.0
        for ax, ay, az in _iproduct(range(m + 1), repeat=3):
            if ax + ay + az <= m:
                total += math.sqrt(max(s[ax, ay, az], 0.0))
        return total
    if kind_l == "cm":
        m = _check_sobolev_order(m, max_order)
        total = 0.0
        for ax, ay, az in _iproduct(range(m + 1), repeat=3):
            if ax + ay + az <= m:
                total += float(np.max(np.abs(derivative(f, (ax, ay, az)).data)))
        return total
    raise ValueError(f"unknown norm kind {kind!r}")


def sobolev_norm(f: Field, m: int) -> float:
    return norm(f, "Hm", m=m)


def sobolev_energy(f: Field, m: int, max_order: int = MAX_SOBOLEV_ORDER) -> float:
    """Sum of squared L2 norms of all derivatives of order at most m.

    Unlike the order-m norm (a sum of square roots), this quadratic
    functional splits exactly across L2-orthogonal decompositions, which is
    what the projector's energy identity tests rely on.
    """
    m = _check_sobolev_order(m, max_order)
    s = _spectral_moments(f, m)
    total = 0.0
    for ax, ay, az in _iproduct(range(m + 1), repeat=3):
        if ax + ay + az <= m:
            total += max(float(s[ax, ay, az]), 0.0)
    return total


def dissipation_rate(v: VectorField) -> float:
    """Sum over axes of the squared L2 norms of the first derivatives."""
    s = _spectral_moments(v, 1)
    return float(s[1, 0, 0] + s[0, 1, 0] + s[0, 0, 1])


def inner_product(u: Field, v: Field) -> float:
    """L2 pairing: integral of the pointwise (component-summed) product."""
    if u.grid != v.grid:
        raise ValueError("inner_product requires fields on the same grid")
    if type(u) is not type(v):
        raise TypeError("inner_product requires fields of the same kind")
    return float(np.sum(u.data * v.data)) * u.grid.cell_volume()


def leibniz_expand(k) -> list[tuple[MultiIndex, MultiIndex, int]]:
    """Product-rule expansion of D^k(fg): triples (alpha, k-alpha, coefficient).

    The coefficient is the product of per-axis binomial coefficients, so
    summing coeff * D^alpha f * D^(k-alpha) g over the returned triples
    reproduces D^k(fg) exactly for band-limited factors.
    """
    k = _as_multi_index(k)
    out: list[tuple[MultiIndex, MultiIndex, int]] = []
    for ax, ay, az in _iproduct(range(k.ax + 1), range(k.ay + 1), range(k.az + 1)):
        coeff = math.comb(k.ax, ax) * math.comb(k.ay, ay) * math.comb(k.az, az)
        out.append((MultiIndex(ax, ay, az), MultiIndex(k.ax - ax, k.ay - ay, k.az - az), coeff))
    return out


def dealias(f: Field) -> Field:
    """Spectral 2/3-rule truncation of a field."""
    spec = to_spectral(f) * f.grid.dealias_mask
    return _like(f, _irfftn(spec, f.grid.n), spec)


def dilate(f: Field, beta: int) -> Field:
    """Samples of x -> f(beta x) for a positive integer dilation factor.

    Grid points map to grid points under integer dilation, so the result
    is an exact resampling (index j picks up index beta*j mod N per axis);
    the dilated field tiles beta^3 shrunk copies of f across the box.
    """
    beta = int(beta)
    if beta < 1:
        raise ValueError(f"dilation factor must be a positive integer, got {beta}")
    if beta == 1:
        return _like(f, f.data.copy(), None if f._spectral is None else f._spectral.copy())
    idx = (np.arange(f.grid.n) * beta) % f.grid.n
    if isinstance(f, ScalarField):
        return _like(f, f.data[np.ix_(idx, idx, idx)].copy())
    return _like(f, f.data[np.ix_(np.arange(3), idx, idx, idx)].copy())


def _refine_scalar(data: np.ndarray, factor: int) -> np.ndarray:
    """Zero-pad the full spectrum of one component onto a finer lattice.

    The combined Nyquist plane of the even-sized source grid is split evenly
    between +N/2 and -N/2 so the interpolant stays real.
    """
    n = data.shape[0]
    m = factor * n
    spec = np.fft.fftshift(np.fft.fftn(data))
    big = np.zeros((m, m, m), dtype=np.complex128)
    lo = (m - n) // 2
    big[lo : lo + n, lo : lo + n, lo : lo + n] = spec
    for axis in range(3):
        cut = [slice(None)] * 3
        mirror = [slice(None)] * 3
        cut[axis] = lo
        mirror[axis] = lo + n
        big[tuple(cut)] *= 0.5
        big[tuple(mirror)] = big[tuple(cut)]
    fine = np.fft.ifftn(np.fft.ifftshift(big)) * float(factor**3)
    return np.ascontiguousarray(fine.real)


def refine(f: Field, factor: int) -> Field:
    """Trigonometric interpolation of a field onto a factor-times finer grid.

    The band-limited interpolant through the source samples is evaluated at
    the finer lattice, so resolved fields are reproduced to round-off and
    source grid points keep their values up to one FFT round trip.  Inverse
    of the even-stride subsampling back to the source grid.
    """
    factor = int(factor)
    if factor < 1:
        raise ValueError(f"refinement factor must be a positive integer, got {factor}")
    if factor == 1:
        return _like(f, f.data.copy(), None if f._spectral is None else f._spectral.copy())
    fine_grid = TorusGrid(factor * f.grid.n, f.grid.length)
    if isinstance(f, ScalarField):
        return ScalarField(fine_grid, _refine_scalar(f.data, factor))
    out = np.empty((3,) + fine_grid.real_shape)
    for c in range(3):
        out[c] = _refine_scalar(f.data[c], factor)
    return VectorField(fine_grid, out)


def pointwise_product(a: ScalarField, v: Field, dealias_product: bool = True) -> Field:
    """Pointwise product a*v of a scalar with a scalar or vector field.

    With dealiasing on (the default), both factors and the result are
    truncated to the 2/3 band, which removes every aliased image the
    quadratic interaction could fold back into the kept modes.
    """
    if not isinstance(a, ScalarField):
        raise TypeError("pointwise_product expects a scalar first factor")
    if a.grid != v.grid:
        raise ValueError("pointwise_product requires fields on the same grid")
    if dealias_product:
        a = dealias(a)
        v = dealias(v)
        raw = a.data * v.data
        spec = _rfftn(raw) * v.grid.dealias_mask
        return _like(v, _irfftn(spec, v.grid.n), spec)
    raw = a.data * v.data
    return _like(v, raw)


# ---------------------------------------------------------------------------
# data generators
# ---------------------------------------------------------------------------

# Support-margin factor for the Gaussian vector potential: at radius
# 8.6 sigma the field has fallen below 1e-14 of its peak, so the returned
# data is numerically supported inside the requested ball while its
# spectrum still decays fast enough for clean discrete divergence.
_BUMP_DECAY = 8.6

_BUMP_AXIS = np.array([0.36, -0.48, 0.8])


def make_divfree_bump(
    grid: TorusGrid,
    center: tuple[float, float, float] | None = None,
    radius: float | None = None,
    amplitude: float = 1.0,
    axis: tuple[float, float, float] | None = None,
) -> VectorField:
    """Divergence-free vector field supported (numerically) in a ball.

    The field is the analytic curl of a Gaussian-profile vector potential:
    u = grad(psi) x axis with psi radial about the center.  The curl is
    evaluated in closed form at the grid points, so the continuum field is
    exactly divergence-free and the discrete spectral divergence is limited
    only by the (far sub-tolerance) spectral tail of the profile.  The
    result is normalized so its sup norm equals the requested amplitude.
    """
    L = grid.length
    if center is None:
        center = (L / 2.0, L / 2.0, L / 2.0)
    if radius is None:
        radius = L / 4.2
    if not (0.0 < radius < L / 4.0):
        raise ValueError(f"bump radius must lie in (0, L/4), got {radius}")
    cx, cy, cz = center
    if amplitude == 0.0:
        return VectorField(grid, np.zeros((3,) + grid.real_shape))

    sigma = radius / _BUMP_DECAY
    dxv = grid.x - cx
    dyv = grid.y - cy
    dzv = grid.z - cz
    r2 = dxv**2 + dyv**2 + dzv**2
    # u = grad(psi) x A = (psi'(r)/r) (x - c) x A with psi Gaussian, so the
    # radial factor -psi/sigma^2 is smooth through the origin.
    radial = -np.exp(-r2 / (2.0 * sigma**2)) / sigma**2
    if axis is None:
        ax, ay, az = _BUMP_AXIS
    else:
        ax, ay, az = np.asarray(axis, dtype=np.float64)
        scale = math.sqrt(ax**2 + ay**2 + az**2)
        if scale == 0.0:
            raise ValueError("bump axis must be a nonzero vector")
        ax, ay, az = ax / scale, ay / scale, az / scale
    u = np.empty((3,) + grid.real_shape)
    u[0] = radial * (dyv * az - dzv * ay)
    u[1] = radial * (dzv * ax - dxv * az)
    u[2] = radial * (dxv * ay - dyv * ax)

    peak = float(np.max(np.abs(u)))
    if peak > 0.0:
        u *= amplitude / peak
    return VectorField(grid, u)


def taylor_green(grid: TorusGrid, amplitude: float = 1.0) -> VectorField:
    """Taylor-Green initial data, exactly divergence-free on the grid."""
    k = 2.0 * math.pi / grid.length
    sx, cxv = np.sin(k * grid.x), np.cos(k * grid.x)
    sy, cyv = np.sin(k * grid.y), np.cos(k * grid.y)
    cz = np.cos(k * grid.z)
    u = np.empty((3,) + grid.real_shape)
    u[0] = amplitude * sx * cyv * cz
    u[1] = -amplitude * cxv * sy * cz
    u[2] = 0.0
    return VectorField(grid, u)


def shear_flow(grid: TorusGrid, amplitude: float = 1.0) -> VectorField:
    """Unidirectional shear (A sin y, 0, 0): the nonlinear term vanishes on it."""
    k = 2.0 * math.pi / grid.length
    u = np.zeros((3,) + grid.real_shape)
    u[0] = amplitude * np.broadcast_to(np.sin(k * grid.y), grid.real_shape)
    return VectorField(grid, u)


def apply_initial_scaling(u: VectorField, alpha: int) -> VectorField:
    """Amplitude-and-space scaling u_alpha(x) = alpha * u(alpha x).

    alpha must be a positive integer.  The map is evaluated by reindexing
    the full spectrum (mode n moves to mode alpha*n, modes that would leave
    the lattice are dropped), which samples alpha*u(alpha x) exactly for
    band-limited u.  Because the periodic reindexing alone would tile
    alpha^3 shrunk copies across the box, samples outside the primary
    subcell [0, L/alpha)^3 are zeroed: the result is the single-copy,
    zero-extended scaling of compactly supported data.
    """
    if int(alpha) != alpha or alpha < 1:
        raise ValueError(f"scaling factor must be a positive integer, got {alpha}")
    alpha = int(alpha)
    if alpha == 1:
        return VectorField(u.grid, u.data.copy())
    g = u.grid
    full = _sfft.fftn(u.data, axes=(-3, -2, -1), workers=fft_workers())
    keep = np.abs(g.modes_full * alpha) < g.n // 2
    src = np.where(keep)[0]
    dst_modes = (g.modes_full[src] * alpha) % g.n
    out = np.zeros_like(full)
    out[(slice(None),) + np.ix_(dst_modes, dst_modes, dst_modes)] = (
        alpha * full[(slice(None),) + np.ix_(src, src, src)]
    )
    data = _sfft.ifftn(out, axes=(-3, -2, -1), workers=fft_workers()).real
    subcell = (grid_axis := np.arange(g.n) * g.dx) < g.length / alpha
    mask = subcell[:, None, None] & subcell[None, :, None] & subcell[None, None, :]
    data = data * mask
    del grid_axis
    return VectorField(g, data)


# ---------------------------------------------------------------------------
# snapshot format
# ---------------------------------------------------------------------------

SNAPSHOT_MAGIC = b"MNSF"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIIdd")


def write_snapshot(path: str | os.PathLike, v: VectorField, t: float) -> None:
    """Write a field snapshot: magic, version, N, L, t, then the three
    components as little-endian float64 with the x index varying fastest.
    The write is atomic (temp file then rename)."""
    g = v.grid
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, g.n, g.length, float(t)))
        for c in range(3):
            fh.write(np.ascontiguousarray(v.data[c], dtype="<f8").tobytes(order="F"))
    os.replace(tmp, path)


def read_snapshot(path: str | os.PathLike) -> tuple[VectorField, float]:
    """Read a snapshot written by write_snapshot; validates magic and version."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise ValueError(f"truncated snapshot header in {path!s}")
        magic, version, n, length, t = _HEADER.unpack(header)
        if magic != SNAPSHOT_MAGIC:
            raise ValueError(f"bad snapshot magic {magic!r} in {path!s}")
        if version != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {version} in {path!s}")
        count = 3 * n * n * n
        raw = np.frombuffer(fh.read(count * 8), dtype="<f8")
        if raw.size != count:
            raise ValueError(f"truncated snapshot payload in {path!s}")
    grid = TorusGrid(n, length)
    data = np.empty((3, n, n, n))
    per = n * n * n
    for c in range(3):
        data[c] = raw[c * per : (c + 1) * per].reshape((n, n, n), order="F")
    return VectorField(grid, data), float(t)
