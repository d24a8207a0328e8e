"""Convolution kernels of the periodic solver and their free-space oracles.

Three operator families live here:

- the heat semigroup, applied as the diagonal multiplier exp(-nu |k|^2 t);
- the mollifier, averaging against a radial bump supported in the unit
  ball, applied as a real radial multiplier (the bump's Fourier transform
  evaluated at gamma |k|);
- the projected-derivative (Oseen-type) kernel, the composition of a
  partial derivative, the heat factor, and the divergence-free projector,
  which the mild solver integrates against in its Duhamel term.

Alongside the multipliers, the module carries real-space oracles for the
free-space heat kernel: closed-form point values of arbitrary mixed
derivatives via a polynomial recursion, and tensor-product quadrature of
their L1/L2 norms.  The oracles never touch the FFT path, so the test
suite can play the two against each other.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .fields import (
    Field,
    TorusGrid,
    VectorField,
    _as_multi_index,
    _irfftn,
    _like,
    norm,
    to_spectral,
)
from .helmholtz import ProjectorSymbol

__all__ = [
    "heat_multiplier",
    "heat_convolve",
    "heat_kernel_value",
    "heat_kernel_norms",
    "write_kernel_norm_csv",
    "Mollifier",
    "mollify",
    "mollifier_sup_bound",
    "duhamel_weights",
    "projected_stress_divergence",
    "oseen_symbol",
    "oseen_apply",
    "oseen_kernel_magnitude",
    "grid_oseen_kernel_l1",
    "oseen_kernel_tail_mass",
]


# ---------------------------------------------------------------------------
# heat semigroup
# ---------------------------------------------------------------------------


def heat_multiplier(grid: TorusGrid, t: float, nu: float = 1.0) -> np.ndarray:
    """Diagonal spectral factor exp(-nu |k|^2 t) of the heat semigroup."""
    if t < 0.0:
        raise ValueError(f"heat flow time must be non-negative, got {t}")
    if not nu > 0.0:
        raise ValueError(f"viscosity must be positive, got {nu}")
    return np.exp(-nu * t * grid.k_squared)


def heat_convolve(f: Field, t: float, nu: float = 1.0) -> Field:
    """Heat flow of a field for time t at viscosity nu; t = 0 is the identity."""
    if t < 0.0:
        raise ValueError(f"heat flow time must be non-negative, got {t}")
    if not nu > 0.0:
        raise ValueError(f"viscosity must be positive, got {nu}")
    if t == 0.0:
        spec = None if f._spectral is None else f._spectral.copy()
        return _like(f, f.data.copy(), spec)
    spec = to_spectral(f) * heat_multiplier(f.grid, t, nu)
    return _like(f, _irfftn(spec, f.grid.n), spec)


# ---------------------------------------------------------------------------
# free-space heat kernel oracle
# ---------------------------------------------------------------------------

# Similarity-profile polynomial of the mixed derivative: D^k of the kernel
# equals t^(-(|k|+3)/2) q_k(xi) exp(-|xi|^2/4) with xi = y/sqrt(t), and q_k
# is stored as a map from exponent triples to coefficients.
_Q_CACHE: dict[tuple[int, int, int], dict[tuple[int, int, int], float]] = {
    (0, 0, 0): {(0, 0, 0): (4.0 * math.pi) ** -1.5}
}


def _q_polynomial(key: tuple[int, int, int]) -> dict[tuple[int, int, int], float]:
    if key in _Q_CACHE:
        return _Q_CACHE[key]
    # peel one derivative off the axis with the highest remaining order
    axis = int(np.argmax(key))
    prev = list(key)
    prev[axis] -= 1
    q_prev = _q_polynomial(tuple(prev))
    # d/dxi_a of (q exp(-|xi|^2/4)) carries the profile (dq/dxi_a - xi_a q/2)
    q_new: dict[tuple[int, int, int], float] = {}
    for expo, coef in q_prev.items():
        if expo[axis] > 0:
            down = list(expo)
            down[axis] -= 1
            kd = tuple(down)
            q_new[kd] = q_new.get(kd, 0.0) + coef * expo[axis]
        up = list(expo)
        up[axis] += 1
        ku = tuple(up)
        q_new[ku] = q_new.get(ku, 0.0) - 0.5 * coef
    _Q_CACHE[key] = q_new
    return q_new


def heat_kernel_value(y, t: float, k=(0, 0, 0)):
    """Point values of the k-th mixed derivative of the free-space heat kernel.

    y may be a triple of floats or of broadcastable arrays; the result
    follows the broadcast shape.  Evaluation uses the similarity form
    t^(-(|k|+3)/2) q_k(y/sqrt t) exp(-|y|^2/4t), with q_k generated by the
    one-derivative-at-a-time recursion on the Gaussian profile.
    """
    if not t > 0.0:
        raise ValueError(f"heat kernel requires t > 0, got {t}")
    k = _as_multi_index(k)
    q = _q_polynomial(k.astuple())
    rt = math.sqrt(t)
    x1, x2, x3 = (np.asarray(c, dtype=np.float64) / rt for c in y)
    poly = np.zeros(np.broadcast(x1, x2, x3).shape)
    for (a, b, c), coef in q.items():
        poly = poly + coef * x1**a * x2**b * x3**c
    out = t ** (-(k.order + 3) / 2.0) * poly * np.exp(-(x1**2 + x2**2 + x3**2) / 4.0)
    return out if out.shape else float(out)


def _axis_quadrature(half: float, odd: bool, nodes: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(nodes)
    if not odd:
        return x * half, w * half
    # odd derivative orders put a crease of |D^k K| on the coordinate plane;
    # splitting the panel there keeps the rule spectrally accurate
    quarter = 0.5 * half
    return (
        np.concatenate([x * quarter - quarter, x * quarter + quarter]),
        np.concatenate([w * quarter, w * quarter]),
    )


def heat_kernel_norms(
    k, t: float, nodes: int = 120, radius_factor: float = 12.0
) -> tuple[float, float]:
    """(L1, L2) norms of the k-th heat kernel derivative by tensor quadrature.

    Gauss-Legendre nodes over the cube of half-width radius_factor*sqrt(t);
    beyond it the Gaussian profile is below every tolerance in play.  Axes
    of odd derivative order are split at zero, where the absolute value of
    the integrand creases.
    """
    k = _as_multi_index(k)
    half = radius_factor * math.sqrt(t)
    axes = [_axis_quadrature(half, order % 2 == 1, nodes) for order in k.astuple()]
    vals = heat_kernel_value(
        (axes[0][0][:, None, None], axes[1][0][None, :, None], axes[2][0][None, None, :]),
        t,
        k,
    )
    w3 = axes[0][1][:, None, None] * axes[1][1][None, :, None] * axes[2][1][None, None, :]
    l1 = float(np.sum(np.abs(vals) * w3))
    l2 = float(math.sqrt(np.sum(vals**2 * w3)))
    return l1, l2


def write_kernel_norm_csv(path: str | os.PathLike, multi_indices, times) -> None:
    """CSV sweep of heat kernel derivative norms with columns k, t, L1, L2."""
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "t", "L1", "L2"])
        for k in multi_indices:
            k = _as_multi_index(k)
            tag = f"{k.ax}-{k.ay}-{k.az}"
            for t in times:
                l1, l2 = heat_kernel_norms(k, t)
                writer.writerow([tag, f"{t:.12g}", f"{l1:.12g}", f"{l2:.12g}"])
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# mollifier
# ---------------------------------------------------------------------------


def _bump_quadrature(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(nodes)
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass(frozen=True)
class Mollifier:
    """Averaging at scale gamma against the standard unit-ball bump.

    The profile is c exp(-1/(1 - r^2)) inside the unit ball and zero
    outside; c normalizes the mass to one, so the induced spectral
    multiplier (the profile's radial Fourier transform at gamma |k|) is
    real, even, equals one at k = 0, and is bounded by one.  Scale zero is
    the identity.
    """

    gamma: float = 0.0
    quad_nodes: int = 240

    def __post_init__(self):
        if self.gamma < 0.0:
            raise ValueError(f"mollification scale must be non-negative, got {self.gamma}")
        if self.quad_nodes < 16:
            raise ValueError("mollifier quadrature needs at least 16 radial nodes")

    @cached_property
    def _radial_rule(self) -> tuple[np.ndarray, np.ndarray]:
        return _bump_quadrature(self.quad_nodes)

    @cached_property
    def normalization(self) -> float:
        r, w = self._radial_rule
        mass = 4.0 * math.pi * float(np.sum(w * r**2 * np.exp(-1.0 / (1.0 - r**2))))
        return 1.0 / mass

    def profile(self, r) -> np.ndarray:
        """Real-space profile samples (zero outside the unit ball)."""
        r = np.asarray(r, dtype=np.float64)
        out = np.zeros_like(r)
        inside = np.abs(r) < 1.0
        out[inside] = self.normalization * np.exp(-1.0 / (1.0 - r[inside] ** 2))
        return out

    @cached_property
    def l2_norm(self) -> float:
        r, w = self._radial_rule
        prof = self.normalization * np.exp(-1.0 / (1.0 - r**2))
        return math.sqrt(4.0 * math.pi * float(np.sum(w * r**2 * prof**2)))

    def fourier_transform(self, s) -> np.ndarray:
        """Radial Fourier transform of the profile at wavenumber magnitudes s.

        Normalized by the transform's own value at s = 0 (the quadrature of
        the mass) rather than by the separately rounded `normalization`
        factor, so the unit value at zero and the magnitude bound by one
        hold exactly, not merely to an ulp.
        """
        r, w = self._radial_rule
        weights = w * r**2 * np.exp(-1.0 / (1.0 - r**2))
        s = np.asarray(s, dtype=np.float64)
        # sum of w r^2 prof(r) sin(s r)/(s r), accumulated one radial node
        # at a time to keep the temporaries s-sized; the mass accumulates in
        # the same order so the value at s = 0 divides out to exactly one
        out = np.zeros(s.shape)
        mass = 0.0
        for rr, ww in zip(r, weights):
            out += ww * np.sinc(s * (rr / math.pi))
            mass += ww
        # |sinc| <= 1 bounds the result termwise by the mass, up to summation
        # rounding; the clip turns the continuum bound into an exact one
        return np.clip(out / mass, -1.0, 1.0)

    def multiplier(self, grid: TorusGrid) -> np.ndarray:
        """Spectral multiplier of the scale-gamma averaging on a grid."""
        if self.gamma == 0.0:
            return np.ones(grid.spectral_shape)
        key = (self.quad_nodes, self.gamma)
        cache = getattr(grid, "_mollifier_cache", None)
        if cache is None:
            cache = {}
            grid._mollifier_cache = cache
        if key not in cache:
            # |k| takes few distinct values on the lattice; evaluate the
            # transform once per value and scatter
            k2_unique, inverse = np.unique(grid.k_squared, return_inverse=True)
            values = self.fourier_transform(self.gamma * np.sqrt(k2_unique))
            cache[key] = values[inverse].reshape(grid.spectral_shape)
        return cache[key]


def mollify(f: Field, mol: Mollifier) -> Field:
    """Averaging at the mollifier's scale; scale zero is the identity bitwise."""
    if mol.gamma == 0.0:
        spec = None if f._spectral is None else f._spectral.copy()
        return _like(f, f.data.copy(), spec)
    spec = to_spectral(f) * mol.multiplier(f.grid)
    return _like(f, _irfftn(spec, f.grid.n), spec)


def mollifier_sup_bound(f: Field, mol: Mollifier) -> tuple[float, float]:
    """Pair (|averaged f|_sup, |f|_L2 gamma^(-3/2) |profile|_L2).

    The first never exceeds the second; the bound is the scale-explicit
    price of trading the sup norm for the L2 norm through the mollifier.
    """
    if not mol.gamma > 0.0:
        raise ValueError(f"the sup bound requires a positive scale, got {mol.gamma}")
    lhs = norm(mollify(f, mol), "Linf")
    rhs = norm(f, "L2") * mol.gamma**-1.5 * mol.l2_norm
    return lhs, rhs


# ---------------------------------------------------------------------------
# projected-derivative (Oseen-type) kernel
# ---------------------------------------------------------------------------


def duhamel_weights(n_nodes: int, spacing: float) -> np.ndarray:
    """Quadrature weights on uniform nodes for the memory integral.

    Composite midpoint over pairs of intervals (even-indexed nodes are the
    panel endpoints, odd-indexed ones the midpoints), with the final panel
    upgraded to its Richardson refinement (Simpson) because the integrand
    varies fastest near the upper limit.  A trailing half-width interval,
    present when the last node index is odd, is closed with the trapezoid
    rule.
    """
    if n_nodes < 1:
        raise ValueError("weight rule needs at least one node")
    if n_nodes > 1 and not spacing > 0.0:
        raise ValueError(f"node spacing must be positive, got {spacing}")
    w = np.zeros(n_nodes)
    last = n_nodes - 1
    even_end = last if last % 2 == 0 else last - 1
    if even_end >= 2:
        for mid in range(1, even_end - 2, 2):
            w[mid] += 2.0 * spacing
        w[even_end - 2] += spacing / 3.0
        w[even_end - 1] += 4.0 * spacing / 3.0
        w[even_end] += spacing / 3.0
    if last % 2 == 1:
        w[last - 1] += 0.5 * spacing
        w[last] += 0.5 * spacing
    return w


def _tensor_rows_spectrum(g, grid: TorusGrid | None) -> tuple[np.ndarray, TorusGrid]:
    """Coerce one node's tensor data to a (3, 3) + spectral_shape stack."""
    if isinstance(g, np.ndarray):
        if grid is None:
            raise ValueError("spectral tensor data needs an explicit grid")
        if g.shape != (3, 3) + grid.spectral_shape:
            raise ValueError(f"tensor spectrum has unexpected shape {g.shape}")
        return g, grid
    rows = list(g)
    if len(rows) != 3 or not all(isinstance(r, VectorField) for r in rows):
        raise TypeError("tensor data must be three vector fields or a spectral stack")
    found = rows[0].grid
    if any(r.grid != found for r in rows):
        raise ValueError("tensor rows live on different grids")
    if grid is not None and found != grid:
        raise ValueError("tensor rows live on an unexpected grid")
    return np.stack([to_spectral(r) for r in rows]), found


def projected_stress_divergence(grid: TorusGrid, rows_spec: np.ndarray) -> np.ndarray:
    """Divergence-free part of the row divergence sum_j i k_j g_hat_j.

    rows_spec has shape (3, 3) + spectral_shape, indexed [row j, component].
    The derivative factor annihilates the mean mode, and the projector acts
    after the sum, so the result is divergence free to round-off.
    """
    div = np.zeros((3,) + grid.spectral_shape, dtype=np.complex128)
    ks = (grid.kx, grid.ky, grid.kz)
    odd = (grid._odd_ok_x, grid._odd_ok_y, grid._odd_ok_z)
    for j in range(3):
        div += (1j * ks[j]) * odd[j] * rows_spec[j]
    return ProjectorSymbol(grid).apply(div)


def oseen_symbol(grid: TorusGrid, j: int, tau: float, nu: float = 1.0) -> np.ndarray:
    """Dense per-mode symbol (i k_j) exp(-nu |k|^2 tau) (I - k k^T/|k|^2).

    Shape (3, 3) + spectral_shape; the zero mode is the zero matrix (the
    derivative factor vanishes there).  Meant for small grids and
    symbol-level identity checks; the application path uses the rank-one
    projector form instead.
    """
    if tau < 0.0:
        raise ValueError(f"kernel time lag must be non-negative, got {tau}")
    if j not in (0, 1, 2):
        raise ValueError(f"direction index must be 0, 1, or 2, got {j}")
    kj = (grid.kx, grid.ky, grid.kz)[j]
    odd = (grid._odd_ok_x, grid._odd_ok_y, grid._odd_ok_z)[j]
    scalar = (1j * kj) * odd * heat_multiplier(grid, tau, nu)
    return ProjectorSymbol(grid).matrix() * scalar


def oseen_apply(g, node_times, t: float, nu: float = 1.0, weights=None) -> VectorField:
    """Memory integral of the mild formulation up to time t.

    g is the per-node tensor data, one entry per node time, each entry the
    three vector-field rows of the transported tensor.  Node times must be
    uniformly spaced and t must coincide with one of them.  Each node
    contributes its projected row divergence propagated by the heat factor
    over the remaining lag; node values are combined with duhamel_weights
    (or an explicit weight vector covering the nodes up to t).  The output
    is divergence free to round-off.
    """
    node_times = np.asarray(node_times, dtype=np.float64)
    if len(node_times) == 0 or len(g) == 0:
        raise ValueError("the memory integral needs at least one node (empty slab)")
    if len(g) != len(node_times):
        raise ValueError("one tensor entry per node time is required")
    span = float(node_times[-1] - node_times[0])
    if len(node_times) > 1:
        spacing = span / (len(node_times) - 1)
        if not np.allclose(np.diff(node_times), spacing, rtol=1e-9, atol=1e-12 * max(span, 1.0)):
            raise ValueError("node times must be uniformly spaced")
    else:
        spacing = 0.0
    tol = 1e-9 * max(abs(span), abs(float(node_times[0])), 1.0)
    matches = np.nonzero(np.abs(node_times - t) <= tol)[0]
    if len(matches) == 0:
        raise ValueError(
            f"time {t} is not a node of the slab [{node_times[0]}, {node_times[-1]}]"
        )
    idx = int(matches[0])

    if weights is None:
        weights = duhamel_weights(idx + 1, spacing) if idx > 0 else np.zeros(1)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (idx + 1,):
        raise ValueError(f"need {idx + 1} weights for output at node {idx}, got {weights.shape}")

    rows0, grid = _tensor_rows_spectrum(g[0], None)
    out = np.zeros((3,) + grid.spectral_shape, dtype=np.complex128)
    for m in range(idx + 1):
        if weights[m] == 0.0:
            continue
        rows_spec = rows0 if m == 0 else _tensor_rows_spectrum(g[m], grid)[0]
        core = projected_stress_divergence(grid, rows_spec)
        out += weights[m] * heat_multiplier(grid, t - float(node_times[m]), nu) * core
    return VectorField(grid, _irfftn(out, grid.n), _spectral=out)


# ---------------------------------------------------------------------------
# real-space view of the projected-derivative kernel
# ---------------------------------------------------------------------------


def oseen_kernel_magnitude(
    tau: float, j: int = 0, nu: float = 1.0, n: int = 96, box_widths: float = 40.0
) -> tuple[TorusGrid, np.ndarray]:
    """Largest matrix-entry magnitude of the real-space kernel at lag tau.

    The kernel is reconstructed by inverse transform of its symbol on a box
    scaled with the diffusive width (side box_widths * sqrt(nu tau)), so
    resolution and relative tail truncation match at every lag and fitted
    decay slopes are meaningful.  Samples carry physical normalization: the
    symbol entries are free-space transform values, so summing them against
    the modes (the unscaled inverse) gives the periodized kernel times the
    box volume.
    """
    if not tau > 0.0:
        raise ValueError(f"kernel time lag must be positive, got {tau}")
    length = box_widths * math.sqrt(nu * tau)
    grid = TorusGrid(n, length)
    sym = ProjectorSymbol(grid)
    kj = (grid.kx, grid.ky, grid.kz)[j]
    oddj = (grid._odd_ok_x, grid._odd_ok_y, grid._odd_ok_z)[j]
    scalar = (1j * kj) * oddj * heat_multiplier(grid, tau, nu)
    worst = np.zeros(grid.real_shape)
    basis = np.zeros((3,) + grid.spectral_shape, dtype=np.complex128)
    for i in range(3):
        basis[:] = 0.0
        basis[i] = scalar
        rows = sym.apply(basis)
        for row in rows:
            worst = np.maximum(worst, np.abs(_irfftn(row, grid.n)) / grid.length**3)
    return grid, worst


def grid_oseen_kernel_l1(
    tau: float, j: int = 0, nu: float = 1.0, n: int = 96, box_widths: float = 40.0
) -> float:
    """Grid estimate of the L1 norm of the real-space kernel at lag tau."""
    grid, worst = oseen_kernel_magnitude(tau, j, nu, n, box_widths)
    return float(np.sum(worst) * grid.cell_volume())


def oseen_kernel_tail_mass(
    tau: float, radii, j: int = 0, nu: float = 1.0, n: int = 96, box_widths: float = 40.0
) -> np.ndarray:
    """Kernel mass beyond each radius (wrap-around distance from the origin)."""
    grid, worst = oseen_kernel_magnitude(tau, j, nu, n, box_widths)
    half = 0.5 * grid.length
    zx = np.mod(grid.x + half, grid.length) - half
    zy = np.mod(grid.y + half, grid.length) - half
    zz = np.mod(grid.z + half, grid.length) - half
    r = np.sqrt(zx**2 + zy**2 + zz**2)
    radii = np.asarray(radii, dtype=np.float64)
    return np.array([float(np.sum(worst[r >= rad]) * grid.cell_volume()) for rad in radii])
