"""Divergence-free / gradient splitting of periodic vector fields.

The splitting v = P v + G v is diagonal in Fourier space: at each mode the
projector is the 3x3 matrix I - k k^T / |k|^2, which kills the component
of v_hat along k, and G is its complement.  The mean mode is ambiguous on
the torus (a constant field is divergence free, and there is no decaying
gradient to split off), so P fixes it and G annihilates it; with that
convention P + G is the identity everywhere.

Pressure scalars invert Delta p = div v with the zero-mean convention, so
the gradient of the returned scalar reproduces G v exactly at the
multiplier level.

A deliberately naive real-space quadrature of the singular-kernel
convolution for G is included for tiny grids.  It shares nothing with the
spectral path and exists to cross-check signs and normalizations.
"""

from __future__ import annotations

import math

import numpy as np

from .fields import (
    ScalarField,
    TorusGrid,
    VectorField,
    derivative,
    divergence,
    norm,
    pointwise_product,
    scalar_from_samples,
    to_spectral,
    _irfftn,
)

__all__ = [
    "ProjectorSymbol",
    "leray_project",
    "gradient_part",
    "pressure_scalar",
    "pressure_nonlinear",
    "advective_term",
    "gradient_part_oracle",
]

# Incompressibility slack allowed before the nonlinear pressure formula
# (which assumes div u = 0) refuses its input.
DIVERGENCE_TOLERANCE = 1e-8


def _inv_k_squared(grid: TorusGrid) -> np.ndarray:
    """1/|k|^2 with the k = 0 entry set to zero (mean-mode convention)."""
    cached = getattr(grid, "_inv_k_squared", None)
    if cached is None:
        k2 = grid.k_squared
        with np.errstate(divide="ignore"):
            cached = np.where(k2 > 0.0, 1.0 / np.where(k2 > 0.0, k2, 1.0), 0.0)
        grid._inv_k_squared = cached
    return cached


class ProjectorSymbol:
    """Per-mode symbol of the divergence-free projector.

    apply() uses the rank-one update form out = x - k (k . x)/|k|^2 and
    never materializes matrices, so it is safe in the solver's hot loop at
    any grid size.  matrix() builds the dense per-mode 3x3 symbol; it is
    meant for small grids, where invariants (symmetry, idempotence,
    annihilation of k) and operator-ordering identities are checked entry
    by entry.
    """

    def __init__(self, grid: TorusGrid):
        self.grid = grid
        self.inv_k_squared = _inv_k_squared(grid)

    def apply(self, spec: np.ndarray) -> np.ndarray:
        """Project a stacked spectrum of shape (3,) + grid.spectral_shape."""
        g = self.grid
        along = (g.kx * spec[0] + g.ky * spec[1] + g.kz * spec[2]) * self.inv_k_squared
        return np.stack((spec[0] - g.kx * along, spec[1] - g.ky * along, spec[2] - g.kz * along))

    def matrix(self) -> np.ndarray:
        """Dense symbol, shape (3, 3) + grid.spectral_shape."""
        g = self.grid
        ks = np.broadcast_arrays(g.kx, g.ky, g.kz)
        out = np.zeros((3, 3) + g.spectral_shape)
        for i in range(3):
            out[i, i] = 1.0
            for j in range(3):
                out[i, j] -= ks[i] * ks[j] * self.inv_k_squared
        return out


def leray_project(v: VectorField) -> VectorField:
    """Divergence-free part of v; the mean mode passes through unchanged."""
    spec = ProjectorSymbol(v.grid).apply(to_spectral(v))
    return VectorField(v.grid, _irfftn(spec, v.grid.n), _spectral=spec)


def gradient_part(v: VectorField) -> VectorField:
    """Complementary part v - P v, a gradient with zero mean."""
    spec = to_spectral(v) - ProjectorSymbol(v.grid).apply(to_spectral(v))
    return VectorField(v.grid, _irfftn(spec, v.grid.n), _spectral=spec)


def pressure_scalar(v: VectorField) -> ScalarField:
    """Zero-mean scalar whose gradient is the gradient part of v.

    Spectrally p_hat = -i (k . v_hat)/|k|^2, the inverse Laplacian of
    div v; the sign is fixed so that grad of the result equals
    gradient_part(v), e.g. v = (-sin x, 0, 0) gives cos x.
    """
    g = v.grid
    spec = to_spectral(v)
    along = g.kx * spec[0] + g.ky * spec[1] + g.kz * spec[2]
    p_spec = -1j * along * _inv_k_squared(g)
    return ScalarField(g, _irfftn(p_spec, g.n), _spectral=p_spec)


def advective_term(u: VectorField) -> VectorField:
    """Quadratic advection sum_j u_j d_j u, dealiased."""
    g = u.grid
    out = np.zeros((3,) + g.spectral_shape, dtype=np.complex128)
    for j in range(3):
        factor = scalar_from_samples(g, u.data[j])
        dju = derivative(u, tuple(1 if a == j else 0 for a in range(3)))
        out += to_spectral(pointwise_product(factor, dju))
    return VectorField(g, _irfftn(out, g.n), _spectral=out)


def pressure_nonlinear(u: VectorField) -> ScalarField:
    """Pressure of a divergence-free flow: grad p is the gradient part
    of the advection term, so the projected momentum balance closes.

    Scales quadratically with the amplitude of u.
    """
    residual = norm(divergence(u), "Linf")
    if residual > DIVERGENCE_TOLERANCE:
        raise ValueError(
            f"pressure formula needs divergence-free input; "
            f"|div u|_sup = {residual:.3e} exceeds {DIVERGENCE_TOLERANCE:.1e}"
        )
    return pressure_scalar(advective_term(u))


def _upsample_scalar(data: np.ndarray, factor: int) -> np.ndarray:
    """Trigonometric interpolation of periodic samples onto a finer lattice.

    Exact for data band-limited below the source Nyquist frequency; the
    combined Nyquist plane of the (even-sized) source grid is split evenly
    between +N/2 and -N/2 so the interpolant stays real.
    """
    if factor == 1:
        return np.asarray(data, dtype=np.float64).copy()
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


def gradient_part_oracle(
    v: VectorField,
    x,
    epsilon: float,
    upsample: int = 4,
    images: int = 3,
) -> np.ndarray:
    """Real-space singular-integral evaluation of the gradient part at x.

    Quadrature of (4 pi)^(-1) z/|z|^3 against div v(x - z) with the ball
    |z| <= epsilon excluded.  The divergence is resampled by trigonometric
    interpolation onto an `upsample`-times finer lattice (exact, since the
    grid only represents band-limited fields), the sum runs over a stack of
    (2*images+1)^3 periodic copies of the box, and a quintic smoothstep
    rolls the kernel off between |z| = L and the edge of the stack.  The
    smooth taper is not cosmetic: against non-decaying periodic data the
    integral converges only conditionally, and a sharply truncated box
    keeps an O(1) shape error no matter how many copies are added.

    Error budget: roughly (epsilon^2/6)|grad div v| from the excluded ball
    plus a lattice-spacing term; a few parts per thousand at the defaults.
    Tiny grids only, one fine-lattice sweep per evaluation point.  Shares
    nothing with the spectral projector path.
    """
    g = v.grid
    if g.n > 16:
        raise ValueError(f"oracle is restricted to grids of size <= 16, got {g.n}")
    if not (0.0 < epsilon <= 4.0 * g.dx):
        raise ValueError(f"exclusion radius must lie in (0, 4 dx], got {epsilon}")
    if int(upsample) < 1 or int(images) < 1:
        raise ValueError("upsample and images must be positive integers")
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (3,):
        raise ValueError("evaluation point must be a 3-vector")
    if np.any(x < 0.0) or np.any(x >= g.length):
        raise ValueError(f"evaluation point {x} outside the box [0, {g.length})^3")

    upsample = int(upsample)
    images = int(images)
    length = g.length
    m = upsample * g.n
    step = length / m
    half = 0.5 * length
    divf = _upsample_scalar(divergence(v).data, upsample)

    # Signed displacement from x to every fine sample in every image copy,
    # separable per axis; the source index is the same fine cell throughout.
    cells = np.arange(m)
    shifts = length * np.arange(-images, images + 1, dtype=np.float64)
    disp = []
    for i in range(3):
        base = np.mod(x[i] - cells * step + half, length) - half
        disp.append((shifts[:, None] + base[None, :]).ravel())
    index = np.tile(cells, 2 * images + 1)

    taper_lo = length
    taper_hi = (images + 0.5) * length
    eps2 = epsilon * epsilon
    dy = disp[1][:, None]
    dz = disp[2][None, :]
    yz_r2 = dy**2 + dz**2
    base_x = np.mod(x[0] - cells * step + half, length) - half
    total = np.zeros(3)
    for ix in range(m):
        plane = divf[ix][np.ix_(index, index)]
        for s in shifts:
            dxv = base_x[ix] + s
            r2 = dxv * dxv + yz_r2
            keep = r2 > eps2
            r = np.sqrt(r2)
            t = np.clip((r - taper_lo) / (taper_hi - taper_lo), 0.0, 1.0)
            window = 1.0 - t**3 * (t * (6.0 * t - 15.0) + 10.0)
            w = np.where(keep, window * plane / np.where(keep, r2 * r, 1.0), 0.0)
            total[0] += dxv * float(np.sum(w))
            total[1] += float(np.sum(dy * w))
            total[2] += float(np.sum(dz * w))
    return total * step**3 / (4.0 * math.pi)
