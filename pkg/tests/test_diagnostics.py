"""Trajectory readers: norm series, energy budget, claim monitors, sweeps.

Validates:
- the dissipation balance on an analytic decay and its quadrature order
- series container gates (shape, finiteness, monotone cumulative dissipation)
- CSV exports: fixed header, atomicity, bitwise reruns
- the sup-norm monitor's record-only versus assert-on-linear-run split
- gradient bound probes on flows with known gradient behavior
- smoothing-scale sweeps: reference handling, duplicates, failure wrapping
- solenoidality residuals, including an injected fault
"""
import math

import numpy as np
import pytest

import mnslab.fields as F
from mnslab.diagnostics import (
    DIAGNOSTICS_CSV_HEADER,
    DiagnosticsSeries,
    SweepReport,
    divfree_residual,
    energy_budget,
    gamma_sweep,
    gradient_bound_probe,
    pairwise_distances,
    supnorm_monitor,
    write_diagnostics_csv,
    write_sweep_csv,
)
from mnslab.kernels import heat_convolve
from mnslab.mild_solver import SolverConfig, Trajectory, direct_stepper
from conftest import band_limited, div_free


@pytest.fixture(scope="module")
def shear_budget_run(grid16):
    sh = F.shear_flow(grid16)
    cfg = SolverConfig(grid=grid16, horizon=0.1, nu=0.5, direct_dt=0.1 / 128)
    return sh, direct_stepper(sh, cfg)


def _series_kwargs(**overrides):
    base = dict(times=(0.0, 1.0), l2=(1.0, 0.5), linf=(1.0, 0.5),
                hm=(2.0, 1.0), diss=(1.0, 0.5), cumdiss=(0.0, 0.7),
                budget_residual=(0.0, 1e-9), divres=(0.0, 0.0),
                supratio=(1.0, 1.0), sobolev_order=7, nu=1.0)
    base.update(overrides)
    return base


class TestEnergyBudget:
    def test_balances_on_analytic_decay(self, shear_budget_run):
        sh, traj = shear_budget_run
        series = energy_budget(traj, nu=0.5)
        rel = max(abs(r) for r in series.budget_residual) / series.l2[0] ** 2
        assert rel < 1e-8

    def test_matches_closed_form_columns(self, shear_budget_run):
        sh, traj = shear_budget_run
        series = energy_budget(traj, nu=0.5)
        assert series.times == traj.times
        assert series.l2[0] == pytest.approx(F.norm(sh, "L2"), rel=1e-12)
        for t, l2 in zip(series.times, series.l2):
            assert l2 == pytest.approx(math.exp(-0.5 * t) * series.l2[0],
                                       rel=1e-10)
        assert series.cumdiss[0] == 0.0
        assert all(b >= a for a, b in zip(series.cumdiss, series.cumdiss[1:]))

    def test_residual_shrinks_under_finer_sampling(self, grid32):
        tg = F.taylor_green(grid32)
        cfg = SolverConfig(grid=grid32, horizon=0.25, direct_dt=0.25 / 128)
        traj = direct_stepper(tg, cfg, sample_stride=4)
        fine = energy_budget(traj, nu=1.0)
        coarse = energy_budget(Trajectory(traj.grid, traj.times[::2],
                                          traj.fields[::2], "direct"), nu=1.0)
        r_fine = max(abs(r) for r in fine.budget_residual)
        r_coarse = max(abs(r) for r in coarse.budget_residual)
        assert r_coarse / r_fine > 3.0  # second-order time quadrature

    def test_zero_trajectory(self, grid16):
        z = F.VectorField(grid16, np.zeros((3,) + grid16.real_shape))
        traj = Trajectory(grid16, (0.0, 0.1), (z, z), "direct")
        series = energy_budget(traj, nu=1.0)
        assert series.budget_residual == (0.0, 0.0)
        assert series.supratio == (0.0, 0.0)

    def test_needs_two_samples(self, grid16):
        u = div_free(grid16, 80)
        traj = Trajectory(grid16, (0.0,), (u,), "direct")
        with pytest.raises(ValueError):
            energy_budget(traj, nu=1.0)


class TestDiagnosticsSeries:
    def test_rejects_ragged_columns(self):
        with pytest.raises(ValueError, match="column"):
            DiagnosticsSeries(**_series_kwargs(l2=(1.0,)))

    def test_rejects_non_finite_entries(self):
        with pytest.raises(ValueError, match="non-finite"):
            DiagnosticsSeries(**_series_kwargs(hm=(2.0, float("nan"))))

    def test_rejects_decreasing_cumulative_dissipation(self):
        with pytest.raises(ValueError, match="nondecreasing"):
            DiagnosticsSeries(**_series_kwargs(cumdiss=(0.7, 0.0)))

    def test_rows_follow_the_header(self):
        series = DiagnosticsSeries(**_series_kwargs())
        rows = list(series.rows())
        assert len(rows) == 2
        assert len(rows[0]) == len(DIAGNOSTICS_CSV_HEADER.split(","))


class TestCsvExports:
    def test_diagnostics_csv_layout(self, shear_budget_run, tmp_path):
        _, traj = shear_budget_run
        series = energy_budget(traj, nu=0.5)
        path = tmp_path / "series.csv"
        write_diagnostics_csv(series, str(path))
        lines = path.read_text().splitlines()
        assert lines[0] == DIAGNOSTICS_CSV_HEADER
        assert len(lines) == 1 + len(series.times)
        first = [float(x) for x in lines[1].split(",")]
        assert first[0] == 0.0
        assert first[1] == pytest.approx(series.l2[0], rel=1e-15)

    def test_rewrites_are_bitwise(self, shear_budget_run, tmp_path):
        _, traj = shear_budget_run
        series = energy_budget(traj, nu=0.5)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_diagnostics_csv(series, str(a))
        write_diagnostics_csv(series, str(b))
        assert a.read_bytes() == b.read_bytes()

    def test_no_temp_files_survive(self, shear_budget_run, tmp_path):
        _, traj = shear_budget_run
        series = energy_budget(traj, nu=0.5)
        write_diagnostics_csv(series, str(tmp_path / "series.csv"))
        assert [p.name for p in tmp_path.iterdir()] == ["series.csv"]

    def test_sweep_csv_layout(self, tmp_path):
        report = SweepReport("gamma", (0.2, 0.0), ((0.0, 0.5), (0.5, 0.0)),
                             0.0, float("nan"), ())
        path = tmp_path / "sweep.csv"
        write_sweep_csv(report, str(path))
        lines = path.read_text().splitlines()
        assert lines[0].startswith("gamma,")
        assert len(lines) == 3


def _amplified_trajectory(u, factors):
    grid = u.grid
    times = tuple(0.1 * i for i in range(len(factors)))
    fields = tuple(F.VectorField(grid, c * u.data) for c in factors)
    return Trajectory(grid, times, fields, "direct")


class TestSupnormMonitor:
    def test_heat_flow_stays_below_one(self, grid16):
        u = div_free(grid16, 81)
        times = (0.0, 0.1, 0.2, 0.4)
        traj = Trajectory(grid16, times,
                          tuple(heat_convolve(u, t) for t in times), "direct")
        report = supnorm_monitor(traj, u, linear_run=True)
        assert not report.flagged
        assert max(report.ratios) <= 1.0 + 1e-10
        assert report.times == times

    def test_ratios_are_running_maxima(self, grid16):
        u = div_free(grid16, 82)
        traj = _amplified_trajectory(u, (1.0, 1.3, 0.7))
        report = supnorm_monitor(traj, u)
        assert report.ratios == pytest.approx((1.0, 1.3, 1.3), rel=1e-12)

    def test_records_excursions_without_raising(self, grid16):
        u = div_free(grid16, 82)
        traj = _amplified_trajectory(u, (1.0, 1.3, 0.7))
        report = supnorm_monitor(traj, u)
        assert report.flagged
        times = [t for t, _ in report.excursions]
        assert times == [0.1, 0.2]  # the running sup stays high after the spike

    def test_linear_run_asserts_on_excursions(self, grid16):
        u = div_free(grid16, 82)
        traj = _amplified_trajectory(u, (1.0, 1.3, 0.7))
        with pytest.raises(AssertionError):
            supnorm_monitor(traj, u, linear_run=True)

    def test_zero_initial_field(self, grid16):
        z = F.VectorField(grid16, np.zeros((3,) + grid16.real_shape))
        traj = _amplified_trajectory(z, (1.0, 1.0))
        report = supnorm_monitor(traj, z)
        assert report.ratios == (0.0, 0.0)
        assert not report.flagged


class TestGradientBoundProbe:
    def test_shear_flow_needs_no_shape_term(self, grid16):
        # the gradient of decaying shear is largest at time zero, so the
        # initial-gradient term alone covers the sup and the implied
        # constants stay nonpositive
        sh = F.shear_flow(grid16)
        cfg = SolverConfig(grid=grid16, horizon=0.3, direct_dt=0.3 / 32)
        traj = direct_stepper(sh, cfg, sample_stride=4)
        probes = gradient_bound_probe(traj, sh)
        assert len(probes) == 9
        live = [p for p in probes if p.direction == 1 and p.component == 0]
        assert live[0].lhs == pytest.approx(live[0].initial_gradient, rel=1e-6)
        assert all(p.implied_constant <= 0.0 for p in probes)

    def test_zero_data_reports_zeros(self, grid16):
        z = F.VectorField(grid16, np.zeros((3,) + grid16.real_shape))
        traj = _amplified_trajectory(z, (1.0, 1.0))
        probes = gradient_bound_probe(traj, z)
        assert all(p.lhs == 0.0 and p.implied_constant == 0.0 for p in probes)

    def test_amplitude_sweep_moves_the_shape_term(self, grid16):
        # the shape factor grows like amplitude^{7/2}, so doubling the data
        # multiplies it by 2^{3.5} exactly
        a = gradient_bound_probe(
            _amplified_trajectory(F.taylor_green(grid16), (1.0,)),
            F.taylor_green(grid16))
        b = gradient_bound_probe(
            _amplified_trajectory(F.taylor_green(grid16, 2.0), (1.0,)),
            F.taylor_green(grid16, 2.0))
        assert b[0].shape == pytest.approx(2**3.5 * a[0].shape, rel=1e-12)


class TestSweepReport:
    def test_rejects_bad_matrices(self):
        with pytest.raises(ValueError, match="shape"):
            SweepReport("gamma", (0.1, 0.0), ((0.0,),), 0.0, 1.0, ())
        with pytest.raises(ValueError, match="nonnegative"):
            SweepReport("gamma", (0.1, 0.0), ((0.0, -0.1), (-0.1, 0.0)),
                        0.0, 1.0, ())
        with pytest.raises(ValueError, match="symmetric"):
            SweepReport("gamma", (0.1, 0.0), ((0.0, 0.2), (0.3, 0.0)),
                        0.0, 1.0, ())
        with pytest.raises(ValueError, match="member"):
            SweepReport("gamma", (0.2, 0.1), ((0.0, 0.1), (0.1, 0.0)),
                        0.0, 1.0, ())

    def test_reference_views(self):
        report = SweepReport("gamma", (0.2, 0.1, 0.0),
                             ((0.0, 0.1, 0.4), (0.1, 0.0, 0.2),
                              (0.4, 0.2, 0.0)), 0.0, 1.0,
                             (("distance_monotone_in_gamma", True),))
        assert report.reference_index == 2
        assert report.to_reference == (0.4, 0.2, 0.0)
        assert report.passed("distance_monotone_in_gamma")
        with pytest.raises(KeyError):
            report.passed("unknown_flag")
        text = report.summary()
        assert "gamma sweep" in text and "PASS" in text


class TestGammaSweep:
    def test_shear_flow_ignores_the_smoothing_scale(self, grid16):
        # mollified shear is still shear, so every member rides the same
        # heat flow and the sweep collapses
        sh = F.shear_flow(grid16)
        cfg = SolverConfig(grid=grid16, horizon=0.1, direct_dt=0.1 / 32)
        report = gamma_sweep(sh, (0.2, 0.1, 0.0), 0.1, cfg, sample_stride=8)
        assert max(report.to_reference) < 1e-10
        assert report.passed("distance_monotone_in_gamma")

    def test_duplicates_reuse_one_solve(self, grid16):
        sh = F.shear_flow(grid16)
        cfg = SolverConfig(grid=grid16, horizon=0.1, direct_dt=0.1 / 32)
        report = gamma_sweep(sh, (0.1, 0.1, 0.0), 0.1, cfg, sample_stride=8)
        assert report.distances[0][1] == 0.0

    def test_rejects_bad_lists(self, grid16):
        sh = F.shear_flow(grid16)
        cfg = SolverConfig(grid=grid16, horizon=0.1, direct_dt=0.1 / 32)
        with pytest.raises(ValueError, match="descending"):
            gamma_sweep(sh, (0.1, 0.2, 0.0), 0.1, cfg)
        with pytest.raises(ValueError, match="reference"):
            gamma_sweep(sh, (0.2, 0.1), 0.1, cfg)

    def test_wraps_member_failures(self, grid16):
        # an amplitude far past the advective limit fails inside the sweep
        u = F.taylor_green(grid16, amplitude=8.0)
        cfg = SolverConfig(grid=grid16, horizon=0.5, direct_dt=0.2)
        with pytest.raises(RuntimeError, match="gamma=0.2"):
            gamma_sweep(u, (0.2, 0.0), 0.5, cfg)


class TestPairwiseDistances:
    def test_identical_objects_are_exact_zeros(self, grid16):
        u = div_free(grid16, 83)
        traj = _amplified_trajectory(u, (1.0, 0.9))
        matrix = pairwise_distances([traj, traj])
        assert matrix == ((0.0, 0.0), (0.0, 0.0))

    def test_distinct_runs_must_share_times(self, grid16):
        u = div_free(grid16, 83)
        a = _amplified_trajectory(u, (1.0, 0.9))
        b = Trajectory(grid16, (0.0, 0.25), a.fields, "direct")
        with pytest.raises(ValueError, match="share sample times"):
            pairwise_distances([a, b])


class TestDivfreeResidual:
    def test_solver_output_is_clean(self, grid16):
        tg = F.taylor_green(grid16)
        cfg = SolverConfig(grid=grid16, horizon=0.2, direct_dt=0.01)
        traj = direct_stepper(tg, cfg, sample_stride=5)
        assert divfree_residual(traj) < 1e-12

    def test_detects_an_injected_fault(self, grid16):
        u = div_free(grid16, 84)
        bad = F.VectorField(grid16, u.data + 0.1 * band_limited(grid16, 85).data)
        traj = Trajectory(grid16, (0.0, 0.1), (u, bad), "direct")
        assert divfree_residual(traj) > 1e-3
