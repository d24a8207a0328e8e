"""Trajectory diagnostics: norm series, energy budget, claim monitors, sweeps.

Everything here is a pure reader of trajectories: time integrals use the
trapezoid rule on the trajectory's own samples, dissipation is evaluated
spectrally (exact for band-limited fields), and no diagnostic ever re-runs
or perturbs a solve.  The sup-norm monitor treats the heat-type maximum
principle as an observable under test: it flags excursions and only ever
asserts the linear-run contraction, which the semigroup does guarantee.
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass, replace

import numpy as np

from .fields import (
    VectorField,
    derivative,
    dissipation_rate,
    divergence,
    norm,
    sobolev_norm,
)
from .mild_solver import SolverConfig, Trajectory, direct_stepper

DIAGNOSTICS_CSV_HEADER = "t,L2,Linf,Hm,diss,cumdiss,budget_residual,divres,supratio"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _atomic_write_text(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass(frozen=True)
class DiagnosticsSeries:
    """Per-sample-time scalar records of one trajectory.

    `budget_residual[i]` is |u(t_i)|^2 + 2 nu cumdiss(t_i) - |u(t_0)|^2,
    which the dissipation balance sends to zero up to time-quadrature error;
    `supratio[i]` is the running sup of |u|_sup over samples up to t_i,
    relative to the initial field.
    """

    times: tuple[float, ...]
    l2: tuple[float, ...]
    linf: tuple[float, ...]
    hm: tuple[float, ...]
    diss: tuple[float, ...]
    cumdiss: tuple[float, ...]
    budget_residual: tuple[float, ...]
    divres: tuple[float, ...]
    supratio: tuple[float, ...]
    sobolev_order: int
    nu: float

    def __post_init__(self):
        count = len(self.times)
        for name in ("l2", "linf", "hm", "diss", "cumdiss",
                     "budget_residual", "divres", "supratio"):
            column = getattr(self, name)
            if len(column) != count:
                raise ValueError(f"column {name} has {len(column)} entries "
                                 f"for {count} sample times")
            if not all(math.isfinite(x) for x in column):
                raise ValueError(f"column {name} contains non-finite entries")
        if any(nxt < prev - 1e-15 for prev, nxt in zip(self.cumdiss, self.cumdiss[1:])):
            raise ValueError("cumulative dissipation must be nondecreasing")

    def rows(self):
        for i in range(len(self.times)):
            yield (self.times[i], self.l2[i], self.linf[i], self.hm[i],
                   self.diss[i], self.cumdiss[i], self.budget_residual[i],
                   self.divres[i], self.supratio[i])


def write_diagnostics_csv(series: DiagnosticsSeries, path: str) -> None:
    """CSV export, one row per sample, written atomically."""
    lines = [DIAGNOSTICS_CSV_HEADER]
    for row in series.rows():
        lines.append(",".join(_fmt(x) for x in row))
    _atomic_write_text(path, "\n".join(lines) + "\n")


def energy_budget(traj: Trajectory, nu: float, sobolev_order: int = 7) -> DiagnosticsSeries:
    """Norm series and dissipation balance of a trajectory.

    The balance residual at each sample is |u(t)|^2_{L2} plus twice the
    viscosity-weighted cumulative dissipation (trapezoid on the trajectory's
    own samples) minus the initial energy; it vanishes exactly for the
    continuous flow and up to quadrature error for sampled ones.  Eight or
    more samples are expected for the trapezoid to carry meaning.
    """
    if len(traj) < 2:
        raise ValueError("energy budget needs at least 2 samples")
    times = np.asarray(traj.times)
    l2 = [norm(f, "L2") for f in traj.fields]
    linf = [norm(f, "Linf") for f in traj.fields]
    hm = [sobolev_norm(f, sobolev_order) for f in traj.fields]
    diss = [dissipation_rate(f) for f in traj.fields]
    divres = [float(np.max(np.abs(divergence(f).data))) for f in traj.fields]

    cumdiss = [0.0]
    for i in range(1, len(traj)):
        dt = times[i] - times[i - 1]
        cumdiss.append(cumdiss[-1] + 0.5 * dt * (diss[i] + diss[i - 1]))

    e0 = l2[0] ** 2
    residual = [l2[i] ** 2 + 2.0 * nu * cumdiss[i] - e0 for i in range(len(traj))]

    sup0 = linf[0]
    running = 0.0
    supratio = []
    for x in linf:
        running = max(running, x)
        supratio.append(running / sup0 if sup0 > 0.0 else 0.0)

    return DiagnosticsSeries(
        times=tuple(float(t) for t in times), l2=tuple(l2), linf=tuple(linf),
        hm=tuple(hm), diss=tuple(diss), cumdiss=tuple(cumdiss),
        budget_residual=tuple(residual), divres=tuple(divres),
        supratio=tuple(supratio), sobolev_order=sobolev_order, nu=float(nu))


@dataclass(frozen=True)
class SupnormReport:
    """Running sup-norm ratios with flagged excursions above 1 + slack."""

    times: tuple[float, ...]
    ratios: tuple[float, ...]
    excursions: tuple[tuple[float, float], ...]
    slack: float

    @property
    def flagged(self) -> bool:
        return bool(self.excursions)


def supnorm_monitor(traj: Trajectory, u_o: VectorField, slack: float = 1e-10,
                    linear_run: bool = False) -> SupnormReport:
    """Running ratio sup_{s<=t} |u(s)|_sup / |u_o|_sup with excursion flags.

    Excursions above 1 + slack are recorded, never raised: the sup-norm
    bound for the nonlinear flow is a claim under measurement here, not a
    discrete invariant.  Only with `linear_run` set (pure heat flow, where
    the semigroup contracts the sup norm unconditionally) does a violation
    raise.
    """
    sup0 = norm(u_o, "Linf")
    running = 0.0
    ratios = []
    excursions = []
    for t, f in zip(traj.times, traj.fields):
        running = max(running, norm(f, "Linf"))
        ratio = running / sup0 if sup0 > 0.0 else 0.0
        ratios.append(ratio)
        if ratio > 1.0 + slack:
            excursions.append((float(t), ratio))
    if linear_run and excursions:
        t, ratio = excursions[0]
        raise AssertionError(f"heat-flow sup ratio {ratio:.12f} exceeds "
                             f"1+{slack:g} at t={t:g}")
    return SupnormReport(tuple(float(t) for t in traj.times), tuple(ratios),
                         tuple(excursions), slack)


@dataclass(frozen=True)
class GradientProbe:
    """Measured pieces of the gradient sup bound for one (direction, component)."""

    direction: int
    component: int
    lhs: float
    initial_gradient: float
    shape: float
    implied_constant: float


def gradient_bound_probe(traj: Trajectory, u_o: VectorField) -> tuple[GradientProbe, ...]:
    """Implied constants of the gradient sup-norm bound, per derivative entry.

    For each direction j and component i: lhs = sup over samples of
    |d_j u_i|_sup, compared against 2 |d_j u_{o,i}|_sup plus a shape factor
    |u_o|_sup^{5/2} |u_o|_{L2}.  The reported implied constant
    (lhs - 2 |d_j u_{o,i}|_sup) / shape is a measured lower bound for the
    constant the bound would need; nonpositive values mean the initial
    gradient term alone already covers the sup.
    """
    shape = norm(u_o, "Linf") ** 2.5 * norm(u_o, "L2")
    units = ((1, 0, 0), (0, 1, 0), (0, 0, 1))
    sups = np.zeros((3, 3))
    for f in traj.fields:
        for j in range(3):
            g = derivative(f, units[j])
            sups[j] = np.maximum(sups[j], np.max(np.abs(g.data), axis=(1, 2, 3)))
    probes = []
    for j in range(3):
        g0 = derivative(u_o, units[j])
        for i in range(3):
            lhs = float(sups[j, i])
            grad0 = float(np.max(np.abs(g0.data[i])))
            implied = (lhs - 2.0 * grad0) / shape if shape > 0.0 else 0.0
            probes.append(GradientProbe(j, i, lhs, grad0, shape, implied))
    return tuple(probes)


@dataclass(frozen=True)
class SweepReport:
    """Pairwise distances inside a one-parameter family of solves.

    `values` keeps the caller's order and `distances[i][j]` is the
    sup-over-time sup-norm distance between runs i and j, so duplicates in
    `values` show as exact zeros.  The fitted order is the log-log slope of
    distance-to-reference against parameter over the non-reference entries
    with positive distance, NaN when fewer than two such points exist.
    `flags` carries named pass/fail verdicts for whichever criteria apply
    to this sweep kind.
    """

    kind: str
    values: tuple[float, ...]
    distances: tuple[tuple[float, ...], ...]
    reference: float
    fitted_order: float
    flags: tuple[tuple[str, bool], ...]

    def __post_init__(self):
        count = len(self.values)
        if len(self.distances) != count or any(len(r) != count for r in self.distances):
            raise ValueError("distance matrix shape must match the value list")
        for i in range(count):
            for j in range(count):
                if self.distances[i][j] < 0.0:
                    raise ValueError("sweep distances must be nonnegative")
                if self.distances[i][j] != self.distances[j][i]:
                    raise ValueError("sweep distance matrix must be symmetric")
        if self.reference not in self.values:
            raise ValueError("reference value must be a member of the sweep")

    @property
    def reference_index(self) -> int:
        return self.values.index(self.reference)

    @property
    def to_reference(self) -> tuple[float, ...]:
        """Distance of each run to the reference run, in list order."""
        ref = self.reference_index
        return tuple(row[ref] for row in self.distances)

    def passed(self, name: str) -> bool:
        for key, ok in self.flags:
            if key == name:
                return ok
        raise KeyError(f"no flag named {name!r}")

    def summary(self) -> str:
        lines = [f"{self.kind} sweep: reference {self.kind} = {_fmt(self.reference)}"]
        for v, d in zip(self.values, self.to_reference):
            lines.append(f"  {self.kind} = {_fmt(v)}: distance to reference {_fmt(d)}")
        order = "nan" if math.isnan(self.fitted_order) else _fmt(self.fitted_order)
        lines.append(f"  fitted order: {order}")
        for key, ok in self.flags:
            lines.append(f"  [{'PASS' if ok else 'FAIL'}] {key}")
        return "\n".join(lines) + "\n"


def write_sweep_csv(report: SweepReport, path: str) -> None:
    """Distance matrix as CSV: header row of values, one row per run."""
    header = [report.kind] + [_fmt(v) for v in report.values]
    lines = [",".join(header)]
    for v, row in zip(report.values, report.distances):
        lines.append(",".join([_fmt(v)] + [_fmt(d) for d in row]))
    _atomic_write_text(path, "\n".join(lines) + "\n")


def _fit_order(values, distances) -> float:
    points = [(v, d) for v, d in zip(values, distances) if v > 0.0 and d > 0.0]
    if len(points) < 2:
        return float("nan")
    logs = np.log([p[0] for p in points])
    logd = np.log([p[1] for p in points])
    return float(np.polyfit(logs, logd, 1)[0])


def _sup_distance(a: Trajectory, b: Trajectory) -> float:
    if len(a) != len(b) or not np.allclose(a.times, b.times, rtol=0, atol=1e-9):
        raise ValueError("sweep trajectories must share sample times")
    return max(float(np.max(np.abs(fa.data - fb.data)))
               for fa, fb in zip(a.fields, b.fields))


def pairwise_distances(runs: list[Trajectory]) -> tuple[tuple[float, ...], ...]:
    """Symmetric matrix of sup-over-time sup-norm distances between runs."""
    count = len(runs)
    matrix = [[0.0] * count for _ in range(count)]
    for i in range(count):
        for j in range(i + 1, count):
            if runs[i] is runs[j]:
                continue
            d = _sup_distance(runs[i], runs[j])
            matrix[i][j] = d
            matrix[j][i] = d
    return tuple(tuple(row) for row in matrix)


def gamma_sweep(u_o: VectorField, gammas, horizon: float, cfg: SolverConfig,
                sample_stride: int = 1, workers: int = 1) -> SweepReport:
    """Distance of mollified solves to the unmollified one, over a gamma list.

    The list must be sorted descending and contain the reference gamma = 0;
    every member is solved with the direct stepper on identical step lattices
    so the sup-over-time distances compare like with like.  Duplicate gammas
    reuse one solve and therefore sit at exactly zero mutual distance.  With
    `workers` above one the members run on a thread pool; results are always
    gathered in list order, so the report does not depend on scheduling.
    """
    values = [float(g) for g in gammas]
    if not values or any(b > a for a, b in zip(values, values[1:])):
        raise ValueError("gamma list must be sorted in descending order")
    if 0.0 not in values:
        raise ValueError("gamma list must contain the reference value 0")

    def solve_one(g: float) -> Trajectory:
        try:
            return direct_stepper(
                u_o, replace(cfg, gamma=g, horizon=horizon), sample_stride)
        except Exception as err:
            raise RuntimeError(f"sweep member gamma={g:g} failed: {err}") from err

    unique = list(dict.fromkeys(values))
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=min(workers, len(unique))) as pool:
            futures = {g: pool.submit(solve_one, g) for g in unique}
            solved = {g: futures[g].result() for g in unique}
    else:
        solved = {g: solve_one(g) for g in unique}

    distances = pairwise_distances([solved[g] for g in values])
    ref = values.index(0.0)
    positive = [(g, row[ref]) for g, row in zip(values, distances) if g > 0.0]
    slack = 1e-15 + 1e-9 * max((d for _, d in positive), default=0.0)
    monotone = all(a[1] >= b[1] - slack for a, b in zip(positive, positive[1:]))
    order = _fit_order([g for g, _ in positive], [d for _, d in positive])
    flags = [("distance_monotone_in_gamma", monotone)]
    if not math.isnan(order):
        flags.append(("fitted_order_at_least_0.9", order >= 0.9))
    return SweepReport("gamma", tuple(values), distances, 0.0, order, tuple(flags))


def divfree_residual(traj: Trajectory) -> float:
    """Max over samples of the sup norm of the spectral divergence."""
    return max(float(np.max(np.abs(divergence(f).data))) for f in traj.fields)
