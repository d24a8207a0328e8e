"""Command-line entry points: solve, verify, sweep, pressure, norms.

Runs are driven by flat key = value config files so that a manifest can
echo the complete configuration and a rerun from it is bitwise identical.
Exit codes separate failure classes: 0 success, 2 usage, 3 bad config,
4 solver non-convergence, 5 blow-up guard.

Every file this module writes goes through a temp-then-rename step, so an
interrupted run never leaves a truncated snapshot, CSV, or manifest.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, replace

import numpy as np

from .diagnostics import (
    DIAGNOSTICS_CSV_HEADER,
    SweepReport,
    _atomic_write_text,
    _fmt,
    energy_budget,
    gamma_sweep,
    pairwise_distances,
    supnorm_monitor,
    write_diagnostics_csv,
    write_sweep_csv,
)
from .fields import (
    TorusGrid,
    VectorField,
    apply_initial_scaling,
    dilate,
    dissipation_rate,
    divergence,
    inner_product,
    make_divfree_bump,
    norm,
    read_snapshot,
    refine,
    shear_flow,
    sobolev_energy,
    taylor_green,
    to_spectral,
    vector_from_spectral,
    write_snapshot,
)
from .helmholtz import gradient_part, leray_project, pressure_nonlinear
from .kernels import (
    Mollifier,
    duhamel_weights,
    grid_oseen_kernel_l1,
    heat_kernel_norms,
    mollifier_sup_bound,
    mollify,
)
from .mild_solver import (
    DEFAULT_SLAB_CONSTANT,
    ConfigError,
    PicardConvergenceError,
    SolverConfig,
    Trajectory,
    continue_solve,
    direct_stepper,
    rescale_solution,
    viscosity_transport,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_SOLVER = 4
EXIT_BLOWUP = 5

MANIFEST_FORMAT = "mnslab-manifest-1"


def _worker_cap() -> int:
    """Worker count cap from MNS_THREADS; defaults to single-threaded."""
    raw = os.environ.get("MNS_THREADS", "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------


class ConfigFileError(ValueError):
    pass


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ConfigFileError(f"expected a boolean, got {text!r}")


def _parse_optional_float(text: str) -> float | None:
    return None if text.lower() == "none" else float(text)


def _parse_float_list(text: str) -> tuple[float, ...]:
    items = [p.strip() for p in text.split(",") if p.strip()]
    if not items:
        raise ConfigFileError("expected a comma-separated number list")
    return tuple(float(p) for p in items)


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in _parse_float_list(text))


def _parse_triple(text: str) -> tuple[float, float, float] | None:
    if text.lower() == "none":
        return None
    values = _parse_float_list(text)
    if len(values) != 3:
        raise ConfigFileError(f"expected three comma-separated numbers, got {text!r}")
    return values


_REQUIRED = object()

# key -> (parser, default); defaults mirror SolverConfig where one exists
_SCHEMA: dict = {
    "n": (int, 32),
    "length": (float, 2.0 * math.pi),
    "horizon": (float, _REQUIRED),
    "gamma": (float, 0.0),
    "nu": (float, 1.0),
    "sobolev_order": (int, 7),
    "substeps": (int, 8),
    "tolerance": (float, 1e-10),
    "max_iterations": (int, 40),
    "c_slab": (float, DEFAULT_SLAB_CONSTANT),
    "dealias": (_parse_bool, True),
    "blowup_factor": (float, 1e3),
    "linear_only": (_parse_bool, False),
    "direct_dt": (_parse_optional_float, None),
    "max_slab_halvings": (int, 8),
    "initial": (str, "taylor_green"),
    "amplitude": (float, 1.0),
    "bump_center": (_parse_triple, None),
    "bump_radius": (_parse_optional_float, None),
    "snapshot_path": (str, ""),
    "out": (str, "mns_out"),
    "method": (str, "picard"),
    "samples": (int, 16),
    "sample_stride": (int, 1),
    "gammas": (_parse_float_list, (0.4, 0.2, 0.1, 0.05, 0.0)),
    "alphas": (_parse_int_list, (1, 2)),
    "nus": (_parse_int_list, (1, 2)),
}

_INITIAL_KINDS = ("taylor_green", "shear_flow", "divfree_bump", "snapshot")
_METHODS = ("picard", "direct")


@dataclass(frozen=True)
class RunConfig:
    """One run's full configuration, as parsed from a key = value file."""

    values: dict
    explicit: frozenset

    def __getattr__(self, name):
        try:
            return self.values[name]
        except KeyError:
            raise AttributeError(name) from None


def parse_run_config(path: str) -> RunConfig:
    """Read a flat key = value config; unknown keys are an error."""
    values = {key: default for key, (_, default) in _SCHEMA.items()}
    explicit = set()
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as err:
        raise ConfigFileError(f"cannot read config {path!r}: {err}") from err
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigFileError(f"{path}:{lineno}: expected key = value, got {raw.strip()!r}")
        key, _, text = line.partition("=")
        key, text = key.strip(), text.strip()
        if key not in _SCHEMA:
            raise ConfigFileError(f"{path}:{lineno}: unknown key {key!r}")
        parser = _SCHEMA[key][0]
        try:
            values[key] = parser(text)
        except (ValueError, ConfigFileError) as err:
            raise ConfigFileError(f"{path}:{lineno}: bad value for {key}: {err}") from err
        explicit.add(key)

    missing = [key for key, v in values.items() if v is _REQUIRED]
    if missing:
        raise ConfigFileError(f"{path}: missing required key(s): {', '.join(sorted(missing))}")
    if values["initial"] not in _INITIAL_KINDS:
        raise ConfigFileError(f"initial must be one of {_INITIAL_KINDS}, got {values['initial']!r}")
    if values["method"] not in _METHODS:
        raise ConfigFileError(f"method must be one of {_METHODS}, got {values['method']!r}")
    if values["horizon"] < 0.0:
        raise ConfigFileError(f"horizon must be non-negative, got {values['horizon']}")
    if values["samples"] < 1:
        raise ConfigFileError(f"samples must be at least 1, got {values['samples']}")
    if values["sample_stride"] < 1:
        raise ConfigFileError(f"sample_stride must be at least 1, got {values['sample_stride']}")
    rc = RunConfig(values, frozenset(explicit))
    _revalidate_solver_fields(rc)
    return rc


def _revalidate_solver_fields(rc: RunConfig) -> None:
    # horizon 0 is a legal run config (trivial run) but not a legal solver
    # config, so the shared constraints are checked with a stand-in horizon
    try:
        SolverConfig(
            grid=TorusGrid(rc.n, rc.length),
            horizon=rc.horizon if rc.horizon > 0.0 else 1.0,
            gamma=rc.gamma,
            nu=rc.nu,
            sobolev_order=rc.sobolev_order,
            substeps=rc.substeps,
            tolerance=rc.tolerance,
            max_iterations=rc.max_iterations,
            c_slab=rc.c_slab,
            dealias=rc.dealias,
            blowup_factor=rc.blowup_factor,
            linear_only=rc.linear_only,
            direct_dt=rc.direct_dt,
            max_slab_halvings=rc.max_slab_halvings,
        )
    except (ConfigError, ValueError) as err:
        raise ConfigFileError(str(err)) from err


def _config_lines(rc: RunConfig) -> list[str]:
    lines = []
    for key in sorted(_SCHEMA):
        lines.append(f"config.{key} = {_format_value(rc.values[key])}")
    return lines


def _format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return _fmt(v)
    if isinstance(v, tuple):
        return ",".join(_format_value(x) for x in v)
    return str(v)


def build_initial_field(rc: RunConfig) -> VectorField:
    grid = TorusGrid(rc.n, rc.length)
    kind = rc.initial
    if kind == "taylor_green":
        return taylor_green(grid, amplitude=rc.amplitude)
    if kind == "shear_flow":
        return shear_flow(grid, amplitude=rc.amplitude)
    if kind == "divfree_bump":
        return make_divfree_bump(grid, center=rc.bump_center,
                                 radius=rc.bump_radius, amplitude=rc.amplitude)
    if not rc.snapshot_path:
        raise ConfigFileError("initial = snapshot requires snapshot_path")
    u, _ = read_snapshot(rc.snapshot_path)
    if "n" in rc.explicit and u.grid.n != rc.n:
        raise ConfigFileError(
            f"snapshot grid n={u.grid.n} does not match configured n={rc.n}")
    if "length" in rc.explicit and abs(u.grid.length - rc.length) > 1e-12 * rc.length:
        raise ConfigFileError(
            f"snapshot length {u.grid.length} does not match configured {rc.length}")
    return u


def _solver_config(rc: RunConfig) -> SolverConfig:
    return SolverConfig(
        grid=TorusGrid(rc.n, rc.length),
        horizon=rc.horizon,
        gamma=rc.gamma,
        nu=rc.nu,
        sobolev_order=rc.sobolev_order,
        substeps=rc.substeps,
        tolerance=rc.tolerance,
        max_iterations=rc.max_iterations,
        c_slab=rc.c_slab,
        dealias=rc.dealias,
        blowup_factor=rc.blowup_factor,
        linear_only=rc.linear_only,
        direct_dt=rc.direct_dt,
        max_slab_halvings=rc.max_slab_halvings,
    )


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------


def _write_manifest(path: str, command: str, status: str, rc: RunConfig,
                    result_lines: list[str]) -> None:
    lines = [f"format = {MANIFEST_FORMAT}", f"command = {command}",
             f"status = {status}"]
    lines.extend(_config_lines(rc))
    lines.extend(result_lines)
    _atomic_write_text(path, "\n".join(lines) + "\n")


def _snapshot_name(index: int) -> str:
    return f"snapshot_{index:06d}.mnsf"


def _initial_lines(u_o: VectorField, rc: RunConfig) -> list[str]:
    return [
        f"initial.l2 = {_fmt(norm(u_o, 'L2'))}",
        f"initial.linf = {_fmt(norm(u_o, 'Linf'))}",
        f"initial.hm = {_fmt(norm(u_o, 'Hm', m=rc.sobolev_order))}",
        f"initial.divres = {_fmt(float(np.max(np.abs(divergence(u_o).data))))}",
    ]


def _trivial_solve(rc: RunConfig, u_o: VectorField, out: str) -> int:
    """Horizon-zero run: the initial state is the whole trajectory."""
    write_snapshot(os.path.join(out, _snapshot_name(0)), u_o, 0.0)
    sup0 = norm(u_o, "Linf")
    row = (0.0, norm(u_o, "L2"), sup0, norm(u_o, "Hm", m=rc.sobolev_order),
           dissipation_rate(u_o), 0.0, 0.0,
           float(np.max(np.abs(divergence(u_o).data))),
           1.0 if sup0 > 0.0 else 0.0)
    csv = DIAGNOSTICS_CSV_HEADER + "\n" + ",".join(_fmt(x) for x in row) + "\n"
    _atomic_write_text(os.path.join(out, "diagnostics.csv"), csv)
    result = _initial_lines(u_o, rc) + [
        "result.samples = 1",
        "result.t_first = 0",
        "result.t_last = 0",
        f"result.snapshots = {_snapshot_name(0)}",
    ]
    _write_manifest(os.path.join(out, "manifest.txt"), "solve", "success", rc, result)
    print(f"horizon 0: wrote initial snapshot and manifest to {out}")
    return EXIT_OK


def _run_solver(rc: RunConfig, u_o: VectorField, cfg: SolverConfig) -> Trajectory:
    if rc.method == "direct":
        return direct_stepper(u_o, cfg, sample_stride=rc.sample_stride)
    marks = [rc.horizon * (i + 1) / rc.samples for i in range(rc.samples)]
    return continue_solve(u_o, cfg, required_times=marks)


def _result_lines(traj: Trajectory, series, monitor, names: list[str]) -> list[str]:
    lines = [
        f"result.samples = {len(traj)}",
        f"result.t_first = {_fmt(traj.times[0])}",
        f"result.t_last = {_fmt(traj.times[-1])}",
        f"result.max_budget_residual = {_fmt(max(abs(r) for r in series.budget_residual))}",
        f"result.max_divres = {_fmt(max(series.divres))}",
        f"result.sup_ratio_max = {_fmt(max(monitor.ratios))}",
        f"result.sup_excursions = {len(monitor.excursions)}",
    ]
    for t, ratio in monitor.excursions:
        lines.append(f"result.sup_excursion = t={_fmt(t)} ratio={_fmt(ratio)}")
    for i, state in enumerate(traj.slab_states):
        prefix = f"result.slab_{i:04d}"
        lines.append(f"{prefix}.t_start = {_fmt(state.t_start)}")
        lines.append(f"{prefix}.t_end = {_fmt(state.t_end)}")
        lines.append(f"{prefix}.iterations = {state.iterations}")
        history = ",".join(_fmt(r) for r in state.residual_history)
        lines.append(f"{prefix}.residuals = {history}")
    if traj.alert is not None:
        lines.append(f"result.alert = t={_fmt(traj.alert.time)} "
                     f"ratio={_fmt(traj.alert.ratio)} "
                     f"threshold={_fmt(traj.alert.threshold)}")
    lines.append(f"result.snapshots = {','.join(names)}")
    return lines


def cmd_solve(config_path: str, out_override: str | None = None) -> int:
    try:
        rc = parse_run_config(config_path)
        out = out_override or rc.out
        os.makedirs(out, exist_ok=True)
        u_o = build_initial_field(rc)
    except (ConfigFileError, ValueError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG

    if rc.horizon == 0.0:
        return _trivial_solve(rc, u_o, out)

    cfg = _solver_config(rc)
    try:
        traj = _run_solver(rc, u_o, cfg)
    except PicardConvergenceError as err:
        result = _initial_lines(u_o, rc) + [f"result.error = {err}"]
        _write_manifest(os.path.join(out, "manifest.txt"), "solve",
                        "picard_failure", rc, result)
        print(f"solver failed to converge: {err}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigError, ValueError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG

    series = energy_budget(traj, rc.nu, sobolev_order=rc.sobolev_order)
    try:
        monitor = supnorm_monitor(traj, u_o, linear_run=rc.linear_only)
    except AssertionError as err:
        print(f"invariant violated: {err}", file=sys.stderr)
        return 1

    names = []
    for i, (t, f) in enumerate(zip(traj.times, traj.fields)):
        name = _snapshot_name(i)
        write_snapshot(os.path.join(out, name), f, t)
        names.append(name)
    write_diagnostics_csv(series, os.path.join(out, "diagnostics.csv"))

    status = "success" if traj.alert is None else "blowup"
    result = _initial_lines(u_o, rc) + _result_lines(traj, series, monitor, names)
    _write_manifest(os.path.join(out, "manifest.txt"), "solve", status, rc, result)

    if traj.alert is not None:
        print(f"blow-up guard tripped at t={traj.alert.time:g} "
              f"(ratio {traj.alert.ratio:.3g})", file=sys.stderr)
        return EXIT_BLOWUP
    print(f"solved to t={traj.times[-1]:g} with {len(traj)} samples; "
          f"outputs in {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def _alpha_sweep(rc: RunConfig, u_o: VectorField, cfg: SolverConfig) -> SweepReport:
    alphas = rc.alphas
    if any(a < 1 for a in alphas):
        raise ConfigFileError(f"alphas must be positive integers, got {alphas}")
    if 1 not in alphas:
        raise ConfigFileError("alpha sweep needs the reference value 1")
    runs = []
    for alpha in alphas:
        if alpha == 1:
            runs.append(direct_stepper(u_o, cfg, sample_stride=rc.sample_stride))
            continue
        lifted_u = apply_initial_scaling(refine(u_o, alpha), alpha)
        lifted_cfg = SolverConfig(
            grid=lifted_u.grid, horizon=cfg.horizon / alpha**2,
            gamma=cfg.gamma / alpha, nu=cfg.nu,
            sobolev_order=cfg.sobolev_order, substeps=cfg.substeps,
            tolerance=cfg.tolerance, max_iterations=cfg.max_iterations,
            c_slab=cfg.c_slab, dealias=cfg.dealias,
            blowup_factor=cfg.blowup_factor, linear_only=cfg.linear_only,
            direct_dt=None if cfg.direct_dt is None else cfg.direct_dt / alpha**2,
            max_slab_halvings=cfg.max_slab_halvings,
        )
        lifted = direct_stepper(lifted_u, lifted_cfg, sample_stride=rc.sample_stride)
        runs.append(rescale_solution(lifted, alpha))
    distances = pairwise_distances(runs)
    values = tuple(float(a) for a in alphas)
    ref = values.index(1.0)
    worst = max(row[ref] for row in distances)
    flags = (("covariance_error_at_most_1e-3", worst <= 1e-3),)
    return SweepReport("alpha", values, distances, 1.0, float("nan"), flags)


def _nu_sweep_reports(rc: RunConfig, u_o: VectorField,
                      cfg: SolverConfig) -> list[SweepReport]:
    if any(v < 1 for v in rc.nus):
        raise ConfigFileError(f"nus must be positive integers, got {rc.nus}")
    reports = []
    for nu in rc.nus:
        direct = direct_stepper(u_o, replace(cfg, nu=float(nu)),
                                sample_stride=rc.sample_stride)
        moved = viscosity_transport(u_o, nu, cfg, sample_stride=rc.sample_stride)
        distances = pairwise_distances([direct, moved])
        worst = distances[0][1]
        flags = (("transport_error_at_most_1e-5", worst <= 1e-5),)
        reports.append(SweepReport("nu", (float(nu), float(nu)), distances,
                                   float(nu), float("nan"), flags))
    return reports


def cmd_sweep(config_path: str, kind: str, out_override: str | None = None) -> int:
    try:
        rc = parse_run_config(config_path)
        out = out_override or rc.out
        os.makedirs(out, exist_ok=True)
        u_o = build_initial_field(rc)
        cfg = _solver_config(rc)
    except (ConfigFileError, ConfigError, ValueError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if kind == "gamma":
            report = gamma_sweep(u_o, rc.gammas, rc.horizon, cfg,
                                 sample_stride=rc.sample_stride,
                                 workers=_worker_cap())
            reports = [("sweep_gamma", report)]
        elif kind == "alpha":
            reports = [("sweep_alpha", _alpha_sweep(rc, u_o, cfg))]
        elif kind == "nu":
            reports = [(f"sweep_nu_{nu:g}", rep) for nu, rep in
                       zip(rc.nus, _nu_sweep_reports(rc, u_o, cfg))]
        else:
            print(f"unknown sweep kind {kind!r}", file=sys.stderr)
            return EXIT_USAGE
    except (ConfigFileError, ValueError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except RuntimeError as err:
        print(f"sweep failed: {err}", file=sys.stderr)
        return EXIT_SOLVER

    for stem, report in reports:
        write_sweep_csv(report, os.path.join(out, f"{stem}.csv"))
        text = report.summary()
        if report.kind == "nu":
            text = "# members: first entry direct route, second transported route\n" + text
        _atomic_write_text(os.path.join(out, f"{stem}.txt"), text)
        print(text, end="")
    result = [f"result.reports = {','.join(stem + '.csv' for stem, _ in reports)}"]
    _write_manifest(os.path.join(out, "manifest.txt"), f"sweep:{kind}",
                    "success", rc, result)
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify suites
# ---------------------------------------------------------------------------


Check = tuple[str, float, float, bool]


def _check(name: str, measured: float, tol: float) -> Check:
    return (name, measured, tol, measured <= tol)


def _random_bandlimited(grid: TorusGrid, rng: np.random.Generator,
                        kmax: float = 6.0) -> VectorField:
    data = rng.standard_normal((3,) + grid.real_shape)
    spec = to_spectral(VectorField(grid, data))
    spec = spec * (grid.k_squared <= kmax * kmax)
    return vector_from_spectral(grid, spec)


def _fit_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def suite_helmholtz(seed: int) -> list[Check]:
    rng = np.random.default_rng(seed)
    grid = TorusGrid(32)
    div_rel = idem = ortho = pyth = cov = 0.0
    for _ in range(50):
        v = _random_bandlimited(grid, rng)
        w = _random_bandlimited(grid, rng)
        pv = leray_project(v)
        gv = gradient_part(v)
        div_rel = max(div_rel,
                      float(np.max(np.abs(divergence(pv).data))) / norm(v, "Linf"))
        idem = max(idem, float(np.max(np.abs(leray_project(pv).data - pv.data))))
        ortho = max(ortho, abs(inner_product(pv, gradient_part(w)))
                    / (norm(v, "L2") * norm(w, "L2")))
        for m in (0, 1, 2):
            total = sobolev_energy(v, m)
            split = sobolev_energy(pv, m) + sobolev_energy(gv, m)
            pyth = max(pyth, abs(total - split) / total)
        cov = max(cov, float(np.max(np.abs(
            leray_project(dilate(v, 2)).data - dilate(pv, 2).data)))
            / norm(v, "Linf"))
    return [
        _check("projection_kills_divergence", div_rel, 1e-12),
        _check("projection_idempotent", idem, 1e-12),
        _check("projection_orthogonal_to_gradients", ortho, 1e-10),
        _check("projection_energy_pythagoras_m012", pyth, 1e-10),
        _check("projection_dilation_covariance", cov, 1e-12),
    ]


def suite_kernels(seed: int) -> list[Check]:
    del seed
    times = np.geomspace(1e-3, 1e-1, 5)
    mass_err = max(abs(heat_kernel_norms((0, 0, 0), t)[0] - 1.0) for t in times)

    slope_err = 0.0
    for k in ((0, 0, 0), (1, 0, 0), (0, 1, 1), (2, 0, 0), (1, 1, 0), (0, 0, 2)):
        order = sum(k)
        l1 = [heat_kernel_norms(k, t)[0] for t in times]
        l2 = [heat_kernel_norms(k, t)[1] for t in times]
        if order > 0:
            target = -order / 2.0
            slope_err = max(slope_err, abs(_fit_slope(times, l1) - target)
                            / max(1.0, abs(target)))
        target2 = -order / 2.0 - 0.75
        slope_err = max(slope_err, abs(_fit_slope(times, l2) - target2) / abs(target2))

    oseen_l1 = [grid_oseen_kernel_l1(t, j=0, n=64) for t in times]
    oseen_err = abs(_fit_slope(times, oseen_l1) - (-0.5)) / 0.5

    weight_err = 0.0
    for nodes in (3, 5, 9, 17):
        w = duhamel_weights(nodes, 0.125)
        weight_err = max(weight_err, abs(float(np.sum(w)) - (nodes - 1) * 0.125))
    return [
        _check("heat_kernel_unit_mass", mass_err, 1e-6),
        _check("heat_kernel_norm_power_laws", slope_err, 0.02),
        _check("projected_kernel_l1_power_law", oseen_err, 0.05),
        _check("memory_weights_integrate_constants", weight_err, 1e-12),
    ]


def suite_mollifier(seed: int) -> list[Check]:
    rng = np.random.default_rng(seed)
    grid = TorusGrid(32)
    ident = float(np.max(np.abs(Mollifier(0.0).multiplier(grid) - 1.0)))
    mol = Mollifier(0.3)
    mult = mol.multiplier(grid)
    over_one = float(np.max(np.abs(mult))) - 1.0

    sup_slack = contract = commute = 0.0
    for _ in range(20):
        v = _random_bandlimited(grid, rng)
        lhs, rhs = mollifier_sup_bound(v, mol)
        sup_slack = max(sup_slack, lhs - rhs)
        contract = max(contract, norm(mollify(v, mol), "Linf") - norm(v, "Linf"))
        pv = leray_project(v)
        commute = max(commute, float(np.max(np.abs(divergence(mollify(pv, mol)).data))))
    return [
        _check("scale_zero_is_identity", ident, 0.0),
        _check("multiplier_bounded_by_one", over_one, 0.0),
        _check("sup_bound_by_l2_price", sup_slack, 1e-10),
        _check("sup_norm_contraction", contract, 1e-10),
        _check("divergence_free_commutation", commute, 1e-10),
    ]


def suite_energy(seed: int) -> list[Check]:
    del seed
    g = TorusGrid(16)
    sh = shear_flow(g)
    cfg = SolverConfig(grid=g, horizon=0.1, nu=0.5, direct_dt=0.1 / 128)
    series = energy_budget(direct_stepper(sh, cfg), nu=0.5)
    shear_res = max(abs(r) for r in series.budget_residual) / series.l2[0] ** 2

    g32 = TorusGrid(32)
    tg = taylor_green(g32)
    cfg32 = SolverConfig(grid=g32, horizon=0.25, nu=1.0, direct_dt=0.25 / 128)
    traj = direct_stepper(tg, cfg32, sample_stride=4)
    fine = energy_budget(traj, nu=1.0)
    coarse = energy_budget(Trajectory(grid=traj.grid, times=traj.times[::2],
                                      fields=traj.fields[::2], provenance="direct"),
                           nu=1.0)
    r_fine = max(abs(r) for r in fine.budget_residual)
    r_coarse = max(abs(r) for r in coarse.budget_residual)
    return [
        _check("shear_budget_residual", shear_res, 1e-8),
        _check("vortex_budget_residual", r_fine / fine.l2[0] ** 2, 1e-3),
        _check("budget_quadrature_order", 3.0 / (r_coarse / r_fine), 1.0),
    ]


def suite_equivalence(seed: int) -> list[Check]:
    del seed
    g = TorusGrid(32)
    sh = shear_flow(g)
    worst = 0.0
    for gamma in (0.0, 0.2):
        cfg = SolverConfig(grid=g, horizon=0.5, gamma=gamma, nu=1.0,
                           direct_dt=0.5 / 256)
        picard = continue_solve(sh, cfg, required_times=[0.5])
        direct = direct_stepper(sh, cfg, sample_stride=256)
        exact = math.exp(-0.5) * sh.data
        for traj in (picard, direct):
            err = norm(VectorField(g, traj.fields[-1].data - exact), "L2")
            worst = max(worst, err / (math.exp(-0.5) * norm(sh, "L2")))
    return [_check("shear_flow_exactness_both_methods", worst, 1e-6)]


def suite_scaling(seed: int) -> list[Check]:
    del seed
    g = TorusGrid(32)
    tg = taylor_green(g)
    scaled = apply_initial_scaling(tg, 2)
    sup_ratio = abs(norm(scaled, "Linf") / norm(tg, "Linf") - 2.0)
    l2_ratio = abs(norm(scaled, "L2") / norm(tg, "L2") - 2.0**-0.5)

    # periodic form of the solution-scaling covariance: for torus-global
    # data the scaled field is alpha u(alpha x) with no zero-extension, so
    # the scaled solve must track alpha u(alpha x, alpha^2 t) directly
    base_cfg = SolverConfig(grid=g, horizon=0.04, gamma=0.1, nu=1.0, direct_dt=2e-3)
    base = direct_stepper(tg, base_cfg, sample_stride=4)
    hat_u = VectorField(g, 2.0 * dilate(tg, 2).data)
    hat_cfg = SolverConfig(grid=g, horizon=0.01, gamma=0.05, nu=1.0, direct_dt=5e-4)
    hat = direct_stepper(hat_u, hat_cfg, sample_stride=4)
    alpha_err = max(float(np.max(np.abs(2.0 * dilate(fb, 2).data - fh.data)))
                    for fb, fh in zip(base.fields, hat.fields))
    alpha_rel = alpha_err / max(norm(f, "Linf") for f in hat.fields)

    moved = viscosity_transport(tg, 2, SolverConfig(
        grid=g, horizon=0.1, gamma=0.2, nu=1.0, direct_dt=2.5e-3), sample_stride=8)
    straight = direct_stepper(tg, SolverConfig(
        grid=g, horizon=0.1, gamma=0.2, nu=2.0, direct_dt=2.5e-3), sample_stride=8)
    nu_err = max(float(np.max(np.abs(a.data - b.data)))
                 for a, b in zip(moved.fields, straight.fields))
    return [
        _check("initial_scaling_sup_ratio", sup_ratio, 1e-12),
        _check("initial_scaling_l2_ratio", l2_ratio, 1e-12),
        _check("solution_scaling_covariance", alpha_rel, 1e-3),
        _check("viscosity_transport_equivalence", nu_err, 1e-10),
    ]


_SUITES = {
    "helmholtz": suite_helmholtz,
    "kernels": suite_kernels,
    "mollifier": suite_mollifier,
    "energy": suite_energy,
    "equivalence": suite_equivalence,
    "scaling": suite_scaling,
}


def cmd_verify(suite: str, seed: int = 7) -> int:
    if suite != "all" and suite not in _SUITES:
        print(f"unknown suite {suite!r}; choose from "
              f"{', '.join(list(_SUITES) + ['all'])}", file=sys.stderr)
        return EXIT_USAGE
    names = list(_SUITES) if suite == "all" else [suite]
    failed = 0
    for name in names:
        print(f"suite {name}:")
        for check_name, measured, tol, ok in _SUITES[name](seed):
            tag = "PASS" if ok else "FAIL"
            print(f"  [{tag}] {check_name}: measured={measured:.3e} tol={tol:.3e}")
            failed += 0 if ok else 1
    if failed:
        print(f"{failed} check(s) failed", file=sys.stderr)
        return 1
    return EXIT_OK


# ---------------------------------------------------------------------------
# pressure and norms
# ---------------------------------------------------------------------------


def cmd_pressure(config_path: str, out_override: str | None = None) -> int:
    try:
        rc = parse_run_config(config_path)
        out = out_override or rc.out
        os.makedirs(out, exist_ok=True)
        u_o = build_initial_field(rc)
        p = pressure_nonlinear(u_o)
    except (ConfigFileError, ValueError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    path = os.path.join(out, "pressure_t0.npy")
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        np.save(fh, p.data)
    os.replace(tmp, path)
    print(f"pressure of the initial state: L2={norm(p, 'L2'):.12g} "
          f"Linf={norm(p, 'Linf'):.12g} -> {path}")
    return EXIT_OK


def cmd_norms(config_path: str) -> int:
    try:
        rc = parse_run_config(config_path)
        u_o = build_initial_field(rc)
    except (ConfigFileError, ValueError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    m = rc.sobolev_order
    print(f"L1   = {norm(u_o, 'L1'):.12g}")
    print(f"L2   = {norm(u_o, 'L2'):.12g}")
    print(f"Linf = {norm(u_o, 'Linf'):.12g}")
    print(f"H{m}   = {norm(u_o, 'Hm', m=m):.12g}")
    print(f"div  = {float(np.max(np.abs(divergence(u_o).data))):.12g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mns",
        description="Pseudo-spectral laboratory for the mollified "
                    "incompressible Navier-Stokes system")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="run a configured solve")
    p_solve.add_argument("--config", required=True)
    p_solve.add_argument("--out", default=None)

    p_verify = sub.add_parser("verify", help="run a named property suite")
    p_verify.add_argument("--suite", required=True)
    p_verify.add_argument("--seed", type=int, default=7)

    p_sweep = sub.add_parser("sweep", help="run a parameter sweep")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--kind", required=True, choices=("gamma", "alpha", "nu"))
    p_sweep.add_argument("--out", default=None)

    p_pressure = sub.add_parser("pressure", help="recover the initial pressure")
    p_pressure.add_argument("--config", required=True)
    p_pressure.add_argument("--out", default=None)

    p_norms = sub.add_parser("norms", help="print norms of the initial state")
    p_norms.add_argument("--config", required=True)

    args = parser.parse_args(argv)
    if args.command == "solve":
        return cmd_solve(args.config, args.out)
    if args.command == "verify":
        return cmd_verify(args.suite, args.seed)
    if args.command == "sweep":
        return cmd_sweep(args.config, args.kind, args.out)
    if args.command == "pressure":
        return cmd_pressure(args.config, args.out)
    return cmd_norms(args.config)


if __name__ == "__main__":
    sys.exit(main())
