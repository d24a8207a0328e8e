"""Mild-solution machinery: contraction slabs, Picard iteration, continuation.

The evolution is solved in integral (mild) form: the state at time t is the
heat flow of the slab's initial field minus the memory integral, over the
elapsed slab time, of the heat-propagated divergence-free part of the stress
divergence built from the current iterate.  On a slab whose length scales
like the inverse square of the initial Sobolev norm the mild operator is a
strict contraction, so Picard iteration converges geometrically; longer
horizons are covered by chaining slabs, restarting each from the previous
terminal field (bitwise, so joins are exact).

A direct pseudo-spectral stepper (integrating-factor Heun on the projected,
advective-form equation) provides an independent oracle for the same
dynamics, and two exact transport maps relate solves at different amplitude
scales and viscosities to reference solves on refined grids.

Everything here is deterministic: no randomness, no adaptive tolerances,
and repeated solves from one config produce bitwise identical output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .fields import (
    TorusGrid,
    VectorField,
    _irfftn,
    _rfftn,
    divergence,
    norm,
    sobolev_norm,
    to_spectral,
    vector_from_spectral,
)
from .helmholtz import ProjectorSymbol
from .kernels import (
    Mollifier,
    duhamel_weights,
    heat_multiplier,
    projected_stress_divergence,
)

# Slab-length constant of the step rule, frozen from the calibration run on
# the Taylor-Green N=32 reference (scripts/calibrate_slab.py).  The measured
# admissible boundary is c = 1.603e6 (18 Picard iterations, first contraction
# ratio 0.30, all ratios <= 0.35); the default rounds down for margin against
# the acceptance budget of 20 iterations and ratios <= 0.5.
DEFAULT_SLAB_CONSTANT = 1.5e6

_PROVENANCE_TAGS = ("picard", "direct", "rescaled")


class ConfigError(ValueError):
    """Invalid solver configuration, including step-size guard violations."""


class PicardConvergenceError(RuntimeError):
    """Picard iteration failed to reach tolerance within the iteration cap.

    `state` carries the residual history of the failed slab; `partial`, when
    continuation was in progress, the trajectory completed before the abort.
    """

    def __init__(self, message: str, state: "PicardState | None" = None,
                 partial: "Trajectory | None" = None):
        super().__init__(message)
        self.state = state
        self.partial = partial


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of a solve; validated on construction.

    `substeps` counts quadrature panels per slab: a slab carries 2*substeps+1
    uniform nodes.  `c_slab` is the calibrated constant of the slab-length
    rule c_slab / |u_o|_{H^m}^2.  `linear_only` disables the nonlinear term
    (pure heat flow), used by the sup-norm contraction checks.  `direct_dt`
    is the requested step of the direct oracle; it is rounded so an integer
    number of steps covers the horizon, and guarded against the advective
    stability limit.
    """

    grid: TorusGrid
    horizon: float
    gamma: float = 0.0
    nu: float = 1.0
    sobolev_order: int = 7
    substeps: int = 8
    tolerance: float = 1e-10
    max_iterations: int = 40
    c_slab: float = DEFAULT_SLAB_CONSTANT
    dealias: bool = True
    blowup_factor: float = 1e3
    linear_only: bool = False
    direct_dt: float | None = None
    max_slab_halvings: int = 8

    def __post_init__(self):
        if not isinstance(self.grid, TorusGrid):
            raise ConfigError("config needs a TorusGrid")
        if not (self.horizon > 0.0) or not math.isfinite(self.horizon):
            raise ConfigError(f"horizon must be positive, got {self.horizon}")
        if self.gamma < 0.0:
            raise ConfigError(f"mollification scale must be >= 0, got {self.gamma}")
        if not (self.nu > 0.0):
            raise ConfigError(f"viscosity must be positive, got {self.nu}")
        if not (1 <= int(self.sobolev_order)):
            raise ConfigError(f"Sobolev order must be >= 1, got {self.sobolev_order}")
        if int(self.substeps) < 4:
            raise ConfigError(f"slab needs at least 4 substeps, got {self.substeps}")
        if not (self.tolerance > 0.0):
            raise ConfigError(f"tolerance must be positive, got {self.tolerance}")
        if int(self.max_iterations) < 1:
            raise ConfigError("iteration cap must be at least 1")
        if not (self.c_slab > 0.0):
            raise ConfigError(f"slab constant must be positive, got {self.c_slab}")
        if not (self.blowup_factor > 1.0):
            raise ConfigError("blow-up guard factor must exceed 1")
        if self.direct_dt is not None and not (self.direct_dt > 0.0):
            raise ConfigError(f"direct step must be positive, got {self.direct_dt}")
        if int(self.max_slab_halvings) < 0:
            raise ConfigError("slab halving count must be >= 0")


@dataclass(frozen=True)
class BlowupAlert:
    """Raised-amplitude stop record: the guard tripped, the run was cut short."""

    time: float
    ratio: float
    threshold: float


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Time-ordered field samples from one solve, all on one grid.

    `slab_states` summarizes the Picard iterations of a continuation run
    (iterate fields dropped to keep memory flat); `alert` is set when the
    blow-up guard cut the run short, in which case the samples only reach
    the stop time.
    """

    grid: TorusGrid
    times: tuple[float, ...]
    fields: tuple[VectorField, ...]
    provenance: str
    slab_states: tuple["PicardState", ...] = ()
    alert: BlowupAlert | None = None

    def __post_init__(self):
        if self.provenance not in _PROVENANCE_TAGS:
            raise ValueError(f"unknown provenance tag {self.provenance!r}")
        if len(self.times) != len(self.fields) or not self.times:
            raise ValueError("trajectory needs one field per sample time")
        if any(f.grid is not self.grid and f.grid != self.grid for f in self.fields):
            raise ValueError("trajectory fields live on different grids")
        t = np.asarray(self.times)
        if t.size > 1 and not np.all(np.diff(t) > 0.0):
            raise ValueError("sample times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class PicardState:
    """Iteration record of one slab: residuals, ratios, and ball radii.

    `residual_history[s]` is the sup-over-nodes H^m distance between
    iterates s and s+1, relative to |u_o|_{H^m}; `contraction_ratios` are
    successive quotients of that history; `ball_history` the sup-over-nodes
    H^m norm of each iterate (initial guess first).  `iterate` holds the
    node-sampled trajectory for a fresh slab solve and is dropped (None) in
    continuation summaries.
    """

    iterate: Trajectory | None
    residual_history: tuple[float, ...]
    contraction_ratios: tuple[float, ...]
    ball_history: tuple[float, ...]
    converged: bool
    iterations: int
    t_start: float
    t_end: float


# ---------------------------------------------------------------------------
# mild operator
# ---------------------------------------------------------------------------


def _require_same_grid(u: VectorField, cfg: SolverConfig) -> None:
    if u.grid is not cfg.grid and u.grid != cfg.grid:
        raise ConfigError("field grid does not match the config grid")


def _require_divergence_free(u: VectorField, what: str) -> None:
    amp = norm(u, "Linf")
    if amp == 0.0:
        return
    residual = float(np.max(np.abs(divergence(u).data)))
    if residual > 1e-8 * amp:
        raise ValueError(f"{what} is not divergence-free "
                         f"(|div| = {residual:.3e} at amplitude {amp:.3e})")


def _mollifier_for(cfg: SolverConfig) -> Mollifier | None:
    return Mollifier(cfg.gamma) if cfg.gamma > 0.0 else None


def _stress_rows(grid: TorusGrid, real: np.ndarray, spec: np.ndarray,
                 mol: Mollifier | None, mask) -> np.ndarray:
    """Spectra of the advected stress rows g[j][i] = (J u_j) u_i, dealiased.

    With no mollifier the tensor is symmetric, so only six products are
    transformed.
    """
    rows = np.empty((3, 3) + grid.spectral_shape, dtype=np.complex128)
    if mol is None:
        for a in range(3):
            for b in range(a, 3):
                rows[a, b] = _rfftn(real[a] * real[b])
                if b != a:
                    rows[b, a] = rows[a, b]
    else:
        smoothed = _irfftn(spec * mol.multiplier(grid), grid.n)
        for j in range(3):
            for i in range(3):
                rows[j, i] = _rfftn(smoothed[j] * real[i])
    if mask is not None:
        rows *= mask
    return rows


def _iterate_mild(grid: TorusGrid, cfg: SolverConfig, u_o_spec: np.ndarray,
                  reals: list[np.ndarray], specs: list[np.ndarray],
                  heats: list[np.ndarray], wrows: list[np.ndarray],
                  mol: Mollifier | None) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """One sweep of the mild operator over all slab nodes."""
    count = len(reals)
    mask = grid.dealias_mask if cfg.dealias else None
    stress = []
    if not cfg.linear_only:
        for j in range(count):
            rows = _stress_rows(grid, reals[j], specs[j], mol, mask)
            stress.append(projected_stress_divergence(grid, rows))
    new_specs: list[np.ndarray] = []
    new_reals: list[np.ndarray] = []
    for n in range(count):
        acc = heats[n] * u_o_spec
        if not cfg.linear_only:
            weights = wrows[n]
            for j in range(n + 1):
                w = weights[j]
                if w != 0.0:
                    acc -= w * (heats[n - j] * stress[j])
        new_specs.append(acc)
        new_reals.append(_irfftn(acc, grid.n))
    return new_specs, new_reals


def _uniform_spacing(times: np.ndarray) -> float:
    if times.size < 2:
        return 0.0
    delta = (times[-1] - times[0]) / (times.size - 1)
    if delta <= 0.0:
        raise ValueError("node times must increase")
    if np.max(np.abs(np.diff(times) - delta)) > 1e-9 * max(delta, abs(times[-1])):
        raise ValueError("node mismatch: slab nodes must be uniformly spaced")
    return float(delta)


def _slab_tables(grid: TorusGrid, delta: float, count: int,
                 nu: float) -> tuple[list[np.ndarray], list[np.ndarray]]:
    heats = [heat_multiplier(grid, d * delta, nu) for d in range(count)]
    wrows = [duhamel_weights(n + 1, delta) for n in range(count)]
    return heats, wrows


def apply_mild_operator(u: Trajectory, u_o: VectorField, cfg: SolverConfig) -> Trajectory:
    """Image of a node-sampled slab trajectory under the mild operator.

    Each output node is the heat flow of u_o over the elapsed slab time
    minus the quadrature of the heat-propagated, projected stress divergence
    of the input iterate over the nodes up to that time.  The output is
    divergence-free to round-off regardless of the input.
    """
    _require_same_grid(u_o, cfg)
    if u.grid != cfg.grid:
        raise ConfigError("trajectory grid does not match the config grid")
    _require_divergence_free(u_o, "initial field")
    expected = 2 * cfg.substeps + 1
    if len(u) != expected:
        raise ValueError(f"node mismatch: slab carries {expected} quadrature "
                         f"nodes, trajectory has {len(u)}")
    times = np.asarray(u.times, dtype=np.float64)
    delta = _uniform_spacing(times)
    grid = cfg.grid
    heats, wrows = _slab_tables(grid, delta, len(u), cfg.nu)
    reals = [f.data for f in u.fields]
    specs = [to_spectral(f) for f in u.fields]
    new_specs, new_reals = _iterate_mild(grid, cfg, to_spectral(u_o), reals,
                                         specs, heats, wrows, _mollifier_for(cfg))
    out = tuple(VectorField(grid, new_reals[n], _spectral=new_specs[n])
                for n in range(len(u)))
    return Trajectory(grid, tuple(float(t) for t in times), out, "picard")


# ---------------------------------------------------------------------------
# slab rule and Picard iteration
# ---------------------------------------------------------------------------


def step_rule(u_o: VectorField, cfg: SolverConfig, remaining: float | None = None) -> float:
    """Contraction slab length: c_slab / |u_o|_{H^m}^2, clamped to the horizon.

    Independent of the mollification scale by construction; a zero field
    gets the whole remaining horizon.
    """
    if remaining is None:
        remaining = cfg.horizon
    h = sobolev_norm(u_o, cfg.sobolev_order)
    if h == 0.0:
        return remaining
    return min(cfg.c_slab / (h * h), remaining)


def _node_norm(grid: TorusGrid, spec: np.ndarray, order: int) -> float:
    return sobolev_norm(vector_from_spectral(grid, spec), order)


def picard_solve_slab(u_o: VectorField, slab: float, cfg: SolverConfig,
                      t_start: float = 0.0) -> tuple[Trajectory, PicardState]:
    """Fixed point of the mild operator on one slab, by Picard iteration.

    Starts from the heat flow of u_o and iterates until the sup-over-nodes
    H^m distance between successive iterates drops below the tolerance,
    relative to |u_o|_{H^m}.  Raises PicardConvergenceError when the
    iteration cap is hit first (the slab is too long for contraction, or
    the grid is under-resolving the product band).
    """
    _require_same_grid(u_o, cfg)
    _require_divergence_free(u_o, "initial field")
    if not (slab > 0.0):
        raise ConfigError(f"slab length must be positive, got {slab}")
    allowed = step_rule(u_o, cfg, remaining=slab)
    if slab > allowed * (1.0 + 1e-9):
        raise ConfigError(f"slab {slab} exceeds the contraction rule value {allowed}")

    grid = cfg.grid
    count = 2 * cfg.substeps + 1
    times = np.linspace(t_start, t_start + slab, count)
    delta = _uniform_spacing(times)
    heats, wrows = _slab_tables(grid, delta, count, cfg.nu)
    mol = _mollifier_for(cfg)

    u_o_spec = to_spectral(u_o)
    specs = [u_o_spec.copy()] + [heats[d] * u_o_spec for d in range(1, count)]
    reals = [u_o.data.copy()] + [_irfftn(s, grid.n) for s in specs[1:]]

    h_o = sobolev_norm(u_o, cfg.sobolev_order)
    scale = h_o if h_o > 0.0 else 1.0
    residuals: list[float] = []
    ball = [max(_node_norm(grid, s, cfg.sobolev_order) for s in specs)]

    converged = False
    for _ in range(cfg.max_iterations):
        new_specs, new_reals = _iterate_mild(grid, cfg, u_o_spec, reals, specs,
                                             heats, wrows, mol)
        residual = max(
            _node_norm(grid, new_specs[n] - specs[n], cfg.sobolev_order)
            for n in range(count)
        ) / scale
        specs, reals = new_specs, new_reals
        residuals.append(residual)
        ball.append(max(_node_norm(grid, s, cfg.sobolev_order) for s in specs))
        if residual < cfg.tolerance:
            converged = True
            break

    ratios = tuple(residuals[i] / residuals[i - 1]
                   for i in range(1, len(residuals)) if residuals[i - 1] > 0.0)
    fields = tuple(VectorField(grid, reals[n], _spectral=specs[n])
                   for n in range(count))
    trajectory = Trajectory(grid, tuple(float(t) for t in times), fields, "picard")
    state = PicardState(trajectory, tuple(residuals), ratios, tuple(ball),
                        converged, len(residuals), float(times[0]), float(times[-1]))
    if not converged:
        raise PicardConvergenceError(
            f"no contraction to {cfg.tolerance:g} within {cfg.max_iterations} "
            f"iterations (last residual {residuals[-1]:.3e})", state=state)
    return trajectory, state


def continue_solve(u_o: VectorField, cfg: SolverConfig,
                   required_times=None, keep_nodes: bool = False) -> Trajectory:
    """Chain slab solves across the horizon, restarting from terminal fields.

    Joins are bitwise: each slab starts from the previous terminal field
    object.  Slab lengths follow the step rule, additionally clamped so
    boundaries land on any `required_times` (for matched-time comparisons
    against the direct oracle).  A slab that fails to contract is halved and
    retried up to the configured floor, after which the error carries the
    partial trajectory.  When the sup amplitude exceeds the blow-up guard
    the run stops early and the returned trajectory carries the alert.
    """
    _require_same_grid(u_o, cfg)
    _require_divergence_free(u_o, "initial field")
    horizon = cfg.horizon
    targets: list[float] = []
    if required_times is not None:
        eps = 1e-9 * max(1.0, horizon)
        for t in sorted(float(t) for t in required_times):
            if eps < t < horizon - eps and (not targets or t - targets[-1] > eps):
                targets.append(t)

    amp_o = norm(u_o, "Linf")
    times: list[float] = [0.0]
    fields: list[VectorField] = [u_o]
    states: list[PicardState] = []
    alert: BlowupAlert | None = None
    current = u_o
    t = 0.0
    eps = 1e-9 * max(1.0, horizon)

    while horizon - t > eps:
        slab = step_rule(current, cfg, remaining=horizon - t)
        for target in targets:
            if target > t + eps:
                slab = min(slab, target - t)
                break
        halvings = 0
        while True:
            try:
                piece, state = picard_solve_slab(current, slab, cfg, t_start=t)
                break
            except PicardConvergenceError as err:
                halvings += 1
                if halvings > cfg.max_slab_halvings:
                    partial = Trajectory(cfg.grid, tuple(times), tuple(fields),
                                         "picard", tuple(states))
                    raise PicardConvergenceError(
                        f"slab starting at t={t:g} failed to contract even "
                        f"after {cfg.max_slab_halvings} halvings",
                        state=err.state, partial=partial) from err
                slab *= 0.5
                if slab < 1e-12 * horizon:
                    partial = Trajectory(cfg.grid, tuple(times), tuple(fields),
                                         "picard", tuple(states))
                    raise PicardConvergenceError(
                        f"slab collapsed below the resolution floor at t={t:g}",
                        state=err.state, partial=partial) from err
        states.append(replace(state, iterate=None))
        if keep_nodes:
            times.extend(piece.times[1:])
            fields.extend(piece.fields[1:])
        else:
            times.append(piece.times[-1])
            fields.append(piece.fields[-1])
        current = piece.fields[-1]
        t = piece.times[-1]
        if amp_o > 0.0:
            ratio = norm(current, "Linf") / amp_o
            if ratio > cfg.blowup_factor:
                alert = BlowupAlert(time=t, ratio=ratio, threshold=cfg.blowup_factor)
                break

    return Trajectory(cfg.grid, tuple(times), tuple(fields), "picard",
                      tuple(states), alert)


# ---------------------------------------------------------------------------
# direct oracle stepper
# ---------------------------------------------------------------------------


def _active_wavenumber(cfg: SolverConfig) -> float:
    g = cfg.grid
    band = g.n // 3 if cfg.dealias else g.n // 2
    return (2.0 * math.pi / g.length) * band


def _advective_spectrum(grid: TorusGrid, spec: np.ndarray, real: np.ndarray,
                        cfg: SolverConfig, mol: Mollifier | None,
                        projector: ProjectorSymbol) -> np.ndarray:
    """Spectral nonlinear term -P[sum_j (J u_j) d_j u], dealiased."""
    ks = (grid.kx, grid.ky, grid.kz)
    odd = (grid._odd_ok_x, grid._odd_ok_y, grid._odd_ok_z)
    advecting = real if mol is None else _irfftn(spec * mol.multiplier(grid), grid.n)
    conv = np.zeros((3,) + grid.real_shape)
    for j in range(3):
        mult = (1j * ks[j]) * odd[j]
        grads = _irfftn(mult * spec, grid.n)
        conv += advecting[j] * grads
    out = _rfftn(conv)
    if cfg.dealias:
        out *= grid.dealias_mask
    return -projector.apply(out)


def direct_stepper(u_o: VectorField, cfg: SolverConfig,
                   sample_stride: int = 1, sample_times=None) -> Trajectory:
    """Integrating-factor Heun integration of the projected equation.

    Heat propagation is exact per step (diagonal multiplier); the advective
    nonlinear stage is explicit second order.  The step count is chosen so
    an integer number of steps covers the horizon; a guard rejects steps
    beyond the advective stability limit dt * |u|_sup * k_max <= 1, checked
    against every intermediate state.  Samples are data-only copies (the
    first and last steps always included).
    """
    _require_same_grid(u_o, cfg)
    _require_divergence_free(u_o, "initial field")
    grid = cfg.grid
    if int(sample_stride) < 1:
        raise ConfigError("sample stride must be a positive integer")
    sample_stride = int(sample_stride)

    kmax = _active_wavenumber(cfg)
    amp = norm(u_o, "Linf")
    if cfg.direct_dt is not None:
        requested = cfg.direct_dt
    elif cfg.linear_only or amp == 0.0 or kmax == 0.0:
        requested = cfg.horizon
    else:
        requested = 0.5 / (amp * kmax)
    n_steps = max(1, round(cfg.horizon / requested))
    dt = cfg.horizon / n_steps
    if not cfg.linear_only and dt * amp * kmax > 1.0 + 1e-12:
        raise ConfigError(f"step {dt:g} violates the advective limit "
                          f"1/(|u|*kmax) = {1.0 / (amp * kmax):g}")

    step_mask = np.zeros(n_steps + 1, dtype=bool)
    step_mask[0] = True
    step_mask[n_steps] = True
    step_mask[::sample_stride] = True
    if sample_times is not None:
        for t in sample_times:
            pos = float(t) / dt
            idx = int(round(pos))
            if not (0 <= idx <= n_steps) or abs(pos - idx) > 1e-6:
                raise ConfigError(f"sample time {t} is not on the step lattice")
            step_mask[idx] = True

    mol = _mollifier_for(cfg)
    projector = ProjectorSymbol(grid)
    heat = heat_multiplier(grid, dt, cfg.nu)
    spec = to_spectral(u_o).copy()
    real = u_o.data.copy()

    times = [0.0]
    fields = [VectorField(grid, u_o.data.copy())]
    for step in range(1, n_steps + 1):
        if cfg.linear_only:
            spec = heat * spec
            real = _irfftn(spec, grid.n)
        else:
            slope = _advective_spectrum(grid, spec, real, cfg, mol, projector)
            predictor = heat * (spec + dt * slope)
            pred_real = _irfftn(predictor, grid.n)
            pred_amp = float(np.max(np.abs(pred_real)))
            if dt * pred_amp * kmax > 1.0 + 1e-12:
                raise ConfigError(f"advective limit violated at t={step * dt:g} "
                                  f"(amplitude {pred_amp:g})")
            slope_end = _advective_spectrum(grid, predictor, pred_real, cfg,
                                            mol, projector)
            spec = heat * spec + (0.5 * dt) * (heat * slope + slope_end)
            real = _irfftn(spec, grid.n)
        if step_mask[step]:
            times.append(step * dt)
            fields.append(VectorField(grid, real.copy()))

    return Trajectory(grid, tuple(times), tuple(fields), "direct")


# ---------------------------------------------------------------------------
# time interpolation and transports
# ---------------------------------------------------------------------------


def sample_trajectory(traj: Trajectory, t: float) -> VectorField:
    """Field at time t by local cubic interpolation of the samples.

    Exact at sample times; between them, Lagrange interpolation on the four
    nearest samples (degree capped by the sample count).  Times outside the
    sampled range are rejected.
    """
    times = np.asarray(traj.times)
    if not (times[0] <= t <= times[-1]):
        raise ValueError(f"time {t} outside the sampled range "
                         f"[{times[0]}, {times[-1]}]")
    exact = np.nonzero(times == t)[0]
    if exact.size:
        f = traj.fields[int(exact[0])]
        return VectorField(traj.grid, f.data.copy())
    width = min(4, times.size)
    lo = int(np.searchsorted(times, t)) - width // 2
    lo = max(0, min(lo, times.size - width))
    window = range(lo, lo + width)
    data = np.zeros_like(traj.fields[0].data)
    for a in window:
        w = 1.0
        for b in window:
            if b != a:
                w *= (t - times[b]) / (times[a] - times[b])
        data += w * traj.fields[a].data
    return VectorField(traj.grid, data)


def rescale_solution(traj: Trajectory, alpha: int, times=None) -> Trajectory:
    """Undo an integer amplitude-and-space lift of the initial data.

    Maps a trajectory computed from alpha-scaled data back to base scale:
    field values are divided by alpha, space is stretched by alpha (the
    lifted grid must refine the base grid by exactly alpha, so spectral
    interpolation at the stretched points is a plain corner crop of the
    samples), and times are multiplied by alpha^2 (the lifted flow runs
    faster).  Explicit output `times` are served by cubic interpolation at
    the corresponding lifted times; by default every lifted sample maps
    across directly.
    """
    if int(alpha) != alpha or alpha < 1:
        raise ValueError(f"scaling factor must be a positive integer, got {alpha}")
    alpha = int(alpha)
    if alpha == 1 and times is None:
        return traj
    if traj.grid.n % alpha != 0:
        raise ValueError(f"grid size {traj.grid.n} is not divisible by {alpha}")
    n_out = traj.grid.n // alpha
    out_grid = traj.grid if alpha == 1 else TorusGrid(n_out, traj.grid.length)
    a2 = float(alpha * alpha)

    if times is None:
        out_times = [t * a2 for t in traj.times]
        lifted = list(traj.fields)
    else:
        out_times = [float(t) for t in times]
        lifted = []
        lo, hi = traj.times[0] * a2, traj.times[-1] * a2
        for t in out_times:
            if not (lo - 1e-12 <= t <= hi + 1e-12):
                raise ValueError(f"requested time {t} outside the trajectory "
                                 f"range [{lo}, {hi}]")
            lifted.append(sample_trajectory(traj, min(max(t / a2, traj.times[0]),
                                                      traj.times[-1])))

    inv = 1.0 / alpha
    fields = tuple(
        VectorField(out_grid, inv * f.data[:, :n_out, :n_out, :n_out].copy())
        if alpha > 1 else VectorField(out_grid, f.data.copy())
        for f in lifted
    )
    return Trajectory(out_grid, tuple(out_times), fields, "rescaled")


def viscosity_transport(u_o: VectorField, nu: float, cfg: SolverConfig,
                        sample_stride: int = 1, sample_times=None) -> Trajectory:
    """Solve at unit viscosity on a refined grid and transport back.

    The initial data is dilated by the integer viscosity (exact tiling of
    the samples, the periodic realization of compressing the data's support),
    solved at nu = 1 over horizon/nu with step dt/nu and mollification scale
    gamma/nu (the dilation carries the smoothing scale along), then mapped
    back by reading the dilation-compatible modes and stretching time by nu.
    The discrete stepper commutes exactly with every piece of this map, so
    the result matches a direct solve at viscosity nu to round-off.
    """
    if int(nu) != nu or nu < 1:
        raise ValueError(f"transport viscosity must be a positive integer, got {nu}")
    _require_same_grid(u_o, cfg)
    factor = int(nu)
    grid = cfg.grid
    if factor == 1:
        return direct_stepper(u_o, replace(cfg, nu=1.0), sample_stride, sample_times)

    lifted_grid = TorusGrid(factor * grid.n, grid.length)
    lifted_data = np.tile(u_o.data, (1, factor, factor, factor))
    lifted_u_o = VectorField(lifted_grid, lifted_data)
    lifted_cfg = replace(
        cfg, grid=lifted_grid, nu=1.0, horizon=cfg.horizon / factor,
        gamma=cfg.gamma / factor,
        direct_dt=None if cfg.direct_dt is None else cfg.direct_dt / factor)
    lifted_times = None if sample_times is None else [
        float(t) / factor for t in sample_times]
    lifted = direct_stepper(lifted_u_o, lifted_cfg, sample_stride, lifted_times)

    rows = (grid.modes_full * factor) % lifted_grid.n
    cols = np.arange(grid.n // 2 + 1) * factor
    gather = (slice(None),) + np.ix_(rows, rows, cols)
    fields = []
    for f in lifted.fields:
        # coefficients are forward-normalized, so reading the compatible
        # modes needs no grid-size rescaling
        spec = to_spectral(f)[gather]
        fields.append(vector_from_spectral(grid, np.ascontiguousarray(spec)))
    times = tuple(t * factor for t in lifted.times)
    return Trajectory(grid, times, tuple(fields), "rescaled")
