"""Grid, transform, calculus, and norm layer.

Validates:
- lattice and mode bookkeeping of the periodic grid
- forward-normalized transform pairs and their caching
- spectral derivatives against a fourth-order finite-difference oracle
- integral norms against closed forms and Parseval's identity
- Leibniz expansion structure and the numeric product rule
- named initial data (vortex, shear, compact bump) and their constraints
- scaling transports: dilation, refinement, amplitude-space reindexing
- snapshot container round-trip and corruption handling
"""
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import mnslab.fields as F
from conftest import band_limited, div_free, scalar_band_limited

PI = math.pi


class TestTorusGrid:
    def test_lattice_spacing(self, grid16):
        assert grid16.dx == pytest.approx(2 * PI / 16, rel=1e-15)
        assert grid16.cell_volume() == pytest.approx(grid16.dx**3, rel=1e-15)
        assert grid16.spectral_shape == (16, 16, 9)
        assert grid16.real_shape == (16, 16, 16)

    def test_dealias_band(self, grid16):
        # 2/3 rule on N=16 keeps |k| <= 5
        kept = np.abs(grid16.modes_full[grid16.dealias_mask.any(axis=(1, 2))])
        assert kept.max() == 5

    def test_parseval_weights(self, grid16):
        w = np.broadcast_to(grid16.parseval_weights, grid16.spectral_shape)
        assert set(np.unique(w)) == {1.0, 2.0}
        # the z = 0 and Nyquist planes are self-conjugate and carry weight 1
        assert np.all(w[:, :, 0] == 1.0)
        assert np.all(w[:, :, -1] == 1.0)
        assert np.all(w[:, :, 1:-1] == 2.0)

    @pytest.mark.parametrize("n", [7, 9, 6, 0, -8])
    def test_rejects_bad_sizes(self, n):
        with pytest.raises(ValueError):
            F.TorusGrid(n)

    @pytest.mark.parametrize("length", [0.0, -1.0])
    def test_rejects_bad_lengths(self, length):
        with pytest.raises(ValueError):
            F.TorusGrid(16, length)


class TestTransforms:
    def test_constant_field_concentrates_at_zero(self, grid16):
        c = -2.75
        u = F.VectorField(grid16, np.full((3,) + grid16.real_shape, c))
        spec = F.to_spectral(u)
        assert spec[0, 0, 0, 0] == c
        rest = spec.copy()
        rest[:, 0, 0, 0] = 0.0
        assert np.all(rest == 0.0)

    def test_single_mode_coefficients(self, grid16):
        x = grid16.x.ravel()
        u = np.zeros((3,) + grid16.real_shape)
        u[0] = np.sin(x)[:, None, None]
        spec = F.to_spectral(F.VectorField(grid16, u))
        assert spec[0, 1, 0, 0] == pytest.approx(-0.5j, abs=1e-15)
        assert spec[0, grid16.n - 1, 0, 0] == pytest.approx(0.5j, abs=1e-15)
        live = np.abs(spec) > 1e-14
        assert live.sum() == 2

    @given(seed=st.integers(0, 2**31 - 1))
    def test_roundtrip(self, grid8, seed):
        u = band_limited(grid8, seed, kmax=2.0)
        back = F.vector_from_spectral(grid8, F.to_spectral(u))
        assert np.max(np.abs(back.data - u.data)) < 1e-12

    def test_spectrum_is_cached(self, grid16):
        u = band_limited(grid16, 0)
        assert F.to_spectral(u) is F.to_spectral(u)

    def test_to_real_is_the_sample_array(self, grid16):
        u = band_limited(grid16, 1)
        assert F.to_real(u) is u.data


FD_STENCIL = ((2, -1.0), (1, 8.0), (-1, -8.0), (-2, 1.0))


def _fd_x_derivative(data, dx):
    """Fourth-order centered difference along x (data axis 1), periodic."""
    out = np.zeros_like(data)
    for shift, coeff in FD_STENCIL:
        out += coeff * np.roll(data, -shift, axis=1)
    return out / (12.0 * dx)


def _oracle_field(grid):
    x, y, z = grid.x, grid.y, grid.z
    d = np.sin(x) * np.cos(2 * y) + 0.5 * np.sin(3 * z) * np.cos(x) \
        + 0.25 * np.sin(2 * (x + y - z))
    return F.VectorField(grid, np.stack([d, 0.3 * d, 0.1 * d]))


class TestDerivatives:
    def test_matches_finite_differences_at_fourth_order(self):
        errs = []
        for n in (16, 32):
            g = F.TorusGrid(n)
            u = _oracle_field(g)
            spectral = F.derivative(u, (1, 0, 0))
            fd = _fd_x_derivative(u.data, g.dx)
            errs.append(float(np.max(np.abs(spectral.data - fd))))
        assert errs[0] / errs[1] > 12.0  # O(dx^4) stencil error, halved dx

    def test_derivative_of_constant_vanishes(self, grid16):
        u = F.VectorField(grid16, np.full((3,) + grid16.real_shape, 1.5))
        for k in ((1, 0, 0), (0, 2, 0), (1, 1, 1)):
            assert np.all(F.derivative(u, k).data == 0.0)

    def test_laplacian_eigenfunction(self, grid16):
        x = grid16.x.ravel()
        u = np.zeros((3,) + grid16.real_shape)
        u[1] = np.sin(2 * x)[:, None, None]
        lap = F.laplacian(F.VectorField(grid16, u))
        assert np.max(np.abs(lap.data + 4.0 * u)) < 1e-12

    @given(seed=st.integers(0, 2**31 - 1))
    def test_mixed_partials_commute(self, grid8, seed):
        u = band_limited(grid8, seed, kmax=2.0)
        joint = F.derivative(u, (1, 1, 0))
        staged = F.derivative(F.derivative(u, (1, 0, 0)), (0, 1, 0))
        assert np.max(np.abs(joint.data - staged.data)) < 1e-12

    def test_multi_index_rejects_negative_orders(self):
        with pytest.raises(ValueError):
            F.MultiIndex(1, -1, 0)

    def test_divergence_requires_a_vector(self, grid16):
        with pytest.raises(TypeError):
            F.divergence(scalar_band_limited(grid16, 0))

    def test_named_flows_are_divergence_free(self, grid32):
        for u in (F.taylor_green(grid32), F.shear_flow(grid32, 2.0)):
            assert np.max(np.abs(F.divergence(u).data)) < 1e-13


class TestNorms:
    def test_single_mode_l2(self, grid32):
        x = grid32.x.ravel()
        u = np.zeros((3,) + grid32.real_shape)
        u[0] = np.sin(x)[:, None, None]
        v = F.VectorField(grid32, u)
        # integral of sin^2 over the box is (2 pi)^3 / 2
        assert F.norm(v, "L2") ** 2 == pytest.approx(4 * PI**3, rel=1e-12)
        # order-1 norm adds one more copy of the same mode energy
        assert F.norm(v, "Hm", m=1) == pytest.approx(2 * math.sqrt(4 * PI**3),
                                                     rel=1e-12)

    def test_taylor_green_closed_forms(self, grid32):
        tg = F.taylor_green(grid32)
        assert F.norm(tg, "L2") == pytest.approx(math.sqrt(2 * PI**3), rel=1e-12)
        assert F.norm(tg, "Hm", m=7) == pytest.approx(944.9765967433435, rel=1e-12)
        assert F.norm(tg, "Linf") == pytest.approx(1.0, abs=1e-15)
        # six first partials are live, each integrating to (2 pi)^3 / 8
        assert F.dissipation_rate(tg) == pytest.approx(0.75 * (2 * PI) ** 3,
                                                       rel=1e-12)

    def test_shear_closed_forms(self, grid32):
        sh = F.shear_flow(grid32)
        assert F.norm(sh, "Hm", m=7) == pytest.approx(89.09324794930731, rel=1e-12)
        assert F.dissipation_rate(sh) == pytest.approx(0.5 * (2 * PI) ** 3,
                                                       rel=1e-12)

    def test_kind_is_case_insensitive(self, grid16):
        u = band_limited(grid16, 2)
        assert F.norm(u, "L2") == F.norm(u, "l2")
        assert F.norm(u, "HM", m=2) == F.norm(u, "hm", m=2)

    def test_rejects_bad_requests(self, grid16):
        u = band_limited(grid16, 2)
        with pytest.raises(ValueError):
            F.norm(u, "hm")          # order missing
        with pytest.raises(ValueError):
            F.norm(u, "hm", m=-1)
        with pytest.raises(ValueError):
            F.norm(u, "hm", m=8)     # beyond the supported order
        with pytest.raises(ValueError):
            F.norm(u, "h2")

    @given(seed=st.integers(0, 2**31 - 1))
    def test_l2_below_sobolev(self, grid8, seed):
        u = band_limited(grid8, seed, kmax=2.0)
        assert F.norm(u, "L2") <= F.norm(u, "hm", m=2) * (1 + 1e-12)

    def test_sobolev_energy_order_zero_is_squared_l2(self, grid16):
        u = band_limited(grid16, 3)
        assert F.sobolev_energy(u, 0) == pytest.approx(F.norm(u, "L2") ** 2,
                                                       rel=1e-12)

    def test_sobolev_norm_alias(self, grid16):
        u = band_limited(grid16, 3)
        assert F.sobolev_norm(u, 2) == F.norm(u, "Hm", m=2)


class TestInnerProduct:
    def test_orthogonal_modes(self, grid16):
        x = grid16.x.ravel()
        base = np.ones(grid16.real_shape)
        s = F.ScalarField(grid16, np.sin(x)[:, None, None] * base)
        c = F.ScalarField(grid16, np.cos(x)[:, None, None] * base)
        assert abs(F.inner_product(s, c)) < 1e-12

    def test_pairing_recovers_the_norm(self, grid16):
        u = band_limited(grid16, 4)
        assert F.inner_product(u, u) == pytest.approx(F.norm(u, "L2") ** 2,
                                                      rel=1e-12)

    def test_rejects_mismatches(self, grid16, grid8):
        with pytest.raises(ValueError):
            F.inner_product(band_limited(grid16, 0), band_limited(grid8, 0))
        with pytest.raises(TypeError):
            F.inner_product(band_limited(grid16, 0), scalar_band_limited(grid16, 0))

    @given(seed=st.integers(0, 2**31 - 1))
    def test_parseval(self, grid8, seed):
        # Riemann sum on samples against the weighted half-spectrum sum:
        # independent routes through the same quadratic functional.
        u = band_limited(grid8, seed, kmax=2.0)
        real_side = float(np.sum(u.data**2)) * grid8.cell_volume()
        spec = F.to_spectral(u)
        spectral_side = grid8.length**3 * float(
            np.sum(grid8.parseval_weights * np.abs(spec) ** 2))
        assert real_side == pytest.approx(spectral_side, rel=1e-12)


class TestProducts:
    def test_squared_sine_identity(self, grid16):
        x = grid16.x.ravel()
        s = F.ScalarField(grid16, np.sin(x)[:, None, None]
                          * np.ones(grid16.real_shape))
        p = F.pointwise_product(s, s)
        expected = (1.0 - np.cos(2 * x)[:, None, None]) / 2.0
        assert np.max(np.abs(p.data - expected)) < 1e-13

    def test_scalar_first_factor_required(self, grid16):
        u = band_limited(grid16, 5)
        with pytest.raises(TypeError):
            F.pointwise_product(u, u)

    def test_same_grid_required(self, grid16, grid8):
        with pytest.raises(ValueError):
            F.pointwise_product(scalar_band_limited(grid16, 0),
                                band_limited(grid8, 0))

    def test_dealiasing_confines_the_result(self, grid16):
        a = scalar_band_limited(grid16, 6, kmax=5.0)
        p = F.pointwise_product(a, a)
        spec = F.to_spectral(p)
        assert np.max(np.abs(spec[~grid16.dealias_mask])) == 0.0


class TestLeibniz:
    def test_exact_expansions(self):
        def listed(k):
            return sorted((a.astuple(), b.astuple(), c)
                          for a, b, c in F.leibniz_expand(k))

        assert listed((0, 0, 0)) == [((0, 0, 0), (0, 0, 0), 1)]
        assert listed((1, 0, 0)) == [((0, 0, 0), (1, 0, 0), 1),
                                     ((1, 0, 0), (0, 0, 0), 1)]
        assert listed((2, 0, 0)) == [((0, 0, 0), (2, 0, 0), 1),
                                     ((1, 0, 0), (1, 0, 0), 2),
                                     ((2, 0, 0), (0, 0, 0), 1)]
        assert listed((1, 1, 0)) == [((0, 0, 0), (1, 1, 0), 1),
                                     ((0, 1, 0), (1, 0, 0), 1),
                                     ((1, 0, 0), (0, 1, 0), 1),
                                     ((1, 1, 0), (0, 0, 0), 1)]

    @given(k=st.tuples(st.integers(0, 3), st.integers(0, 3), st.integers(0, 3)))
    def test_structure(self, k):
        terms = F.leibniz_expand(k)
        count = 1
        for ki in k:
            count *= ki + 1
        assert len(terms) == count
        # binomial theorem: the coefficients over one axis sum to 2^k_i
        total = 1
        for ki in k:
            total *= 2**ki
        assert sum(c for _, _, c in terms) == total
        for a, b, _ in terms:
            assert tuple(x + y for x, y in zip(a.astuple(), b.astuple())) == k

    @pytest.mark.parametrize("k", [(1, 0, 0), (2, 0, 0), (1, 1, 0), (1, 1, 1),
                                   (2, 1, 0), (0, 0, 3)])
    def test_numeric_product_rule(self, grid16, k):
        a = scalar_band_limited(grid16, 7, kmax=2.0)
        b = scalar_band_limited(grid16, 8, kmax=2.0)
        lhs = F.derivative(F.pointwise_product(a, b), k)
        acc = np.zeros(grid16.real_shape)
        for ka, kb, c in F.leibniz_expand(k):
            term = F.pointwise_product(F.derivative(a, ka), F.derivative(b, kb))
            acc += c * term.data
        scale = max(1.0, float(np.max(np.abs(lhs.data))))
        assert np.max(np.abs(lhs.data - acc)) < 1e-10 * scale


class TestCompactBump:
    def test_zero_amplitude_is_zero(self, grid16):
        u = F.make_divfree_bump(grid16, amplitude=0.0)
        assert np.all(u.data == 0.0)

    def test_sup_matches_requested_amplitude(self, grid32):
        u = F.make_divfree_bump(grid32, amplitude=1.75)
        assert F.norm(u, "Linf") == pytest.approx(1.75, rel=1e-12)

    def test_divergence_and_support_at_scale(self):
        # resolution matters: the Gaussian tail of the profile sets both the
        # spectral divergence and the leakage outside the stated ball
        g = F.TorusGrid(96)
        rng = np.random.default_rng(5)
        center = tuple(PI + rng.uniform(-0.4, 0.4, 3))
        axis = tuple(rng.standard_normal(3))
        amp = float(rng.uniform(0.5, 2.0))
        radius = float(rng.uniform(1.45, 1.55))
        u = F.make_divfree_bump(g, center=center, radius=radius,
                                amplitude=amp, axis=axis)
        assert np.max(np.abs(F.divergence(u).data)) < 1e-12 * amp
        xs = g.x.ravel()
        dist2 = ((xs[:, None, None] - center[0]) ** 2
                 + (xs[None, :, None] - center[1]) ** 2
                 + (xs[None, None, :] - center[2]) ** 2)
        outside = dist2 > radius * radius
        assert np.max(np.abs(u.data[:, outside])) < 1e-14 * amp

    def test_rejects_bad_geometry(self, grid16):
        with pytest.raises(ValueError):
            F.make_divfree_bump(grid16, radius=grid16.length / 4 + 0.1)
        with pytest.raises(ValueError):
            F.make_divfree_bump(grid16, radius=0.0)
        with pytest.raises(ValueError):
            F.make_divfree_bump(grid16, axis=(0.0, 0.0, 0.0))


class TestScalingTransports:
    def test_dilate_doubles_a_mode(self, grid16):
        x = grid16.x.ravel()
        s = F.ScalarField(grid16, np.sin(x)[:, None, None]
                          * np.ones(grid16.real_shape))
        d = F.dilate(s, 2)
        assert np.max(np.abs(d.data - np.sin(2 * x)[:, None, None])) < 1e-13

    def test_dilate_identity_copies(self, grid16):
        u = band_limited(grid16, 9)
        d = F.dilate(u, 1)
        assert np.array_equal(d.data, u.data)
        assert not np.shares_memory(d.data, u.data)

    @given(seed=st.integers(0, 2**31 - 1))
    def test_dilate_preserves_l2(self, grid16, seed):
        # measure preservation needs |u|^2 resolvable on the stride-beta
        # sublattice, hence the low band: 2 kmax < n / beta here
        u = band_limited(grid16, seed, kmax=3.0)
        assert F.norm(F.dilate(u, 2), "L2") == pytest.approx(F.norm(u, "L2"),
                                                             rel=1e-12)

    def test_dilate_rejects_bad_factors(self, grid16):
        u = band_limited(grid16, 9)
        for bad in (0, -2):
            with pytest.raises(ValueError):
                F.dilate(u, bad)

    def test_refine_reproduces_band_limited_data(self):
        coarse = F.taylor_green(F.TorusGrid(16))
        fine = F.refine(coarse, 2)
        target = F.taylor_green(F.TorusGrid(32))
        assert np.max(np.abs(fine.data - target.data)) < 1e-13

    def test_refine_then_subsample_is_identity(self, grid16):
        u = band_limited(grid16, 10)
        fine = F.refine(u, 2)
        assert np.max(np.abs(fine.data[:, ::2, ::2, ::2] - u.data)) < 1e-13

    def test_refine_rejects_bad_factors(self, grid16):
        with pytest.raises(ValueError):
            F.refine(band_limited(grid16, 10), 0)

    def test_initial_scaling_identity(self, grid16):
        u = div_free(grid16, 11)
        s = F.apply_initial_scaling(u, 1)
        assert np.array_equal(s.data, u.data)

    def test_initial_scaling_rejects_bad_factors(self, grid16):
        u = div_free(grid16, 11)
        for bad in (0, -1, 2.5):
            with pytest.raises(ValueError):
                F.apply_initial_scaling(u, bad)

    def test_initial_scaling_norm_ratios(self):
        # compact data, fine grid: sup doubles, L2 drops by 2^{-1/2}, and the
        # scaled field keeps a spectral-tail-limited divergence
        g = F.TorusGrid(160)
        u = F.make_divfree_bump(g, radius=1.5)
        s = F.apply_initial_scaling(u, 2)
        sup_ratio = F.norm(s, "Linf") / F.norm(u, "Linf")
        l2_ratio = F.norm(s, "L2") / F.norm(u, "L2")
        assert abs(sup_ratio - 2.0) < 1e-6
        assert abs(l2_ratio - 2.0**-0.5) < 1e-3
        assert np.max(np.abs(F.divergence(s).data)) < 1e-8


class TestSnapshots:
    def test_roundtrip_is_bitwise(self, grid16, tmp_path):
        u = div_free(grid16, 12, amplitude=0.7)
        path = tmp_path / "state.mnsf"
        F.write_snapshot(path, u, 0.125)
        back, t = F.read_snapshot(path)
        assert t == 0.125
        assert back.grid.n == 16
        assert back.grid.length == grid16.length
        assert np.array_equal(back.data, u.data)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "broken.mnsf"
        path.write_bytes(b"MN")
        with pytest.raises(ValueError, match="truncated snapshot header"):
            F.read_snapshot(path)

    def test_bad_magic(self, grid16, tmp_path):
        u = div_free(grid16, 12)
        path = tmp_path / "state.mnsf"
        F.write_snapshot(path, u, 0.0)
        blob = bytearray(path.read_bytes())
        blob[:4] = b"XXXX"
        path.write_bytes(bytes(blob))
        with pytest.raises(ValueError, match="magic"):
            F.read_snapshot(path)

    def test_unsupported_version(self, grid16, tmp_path):
        u = div_free(grid16, 12)
        path = tmp_path / "state.mnsf"
        F.write_snapshot(path, u, 0.0)
        blob = bytearray(path.read_bytes())
        blob[4:8] = (99).to_bytes(4, "little")
        path.write_bytes(bytes(blob))
        with pytest.raises(ValueError, match="version"):
            F.read_snapshot(path)

    def test_truncated_payload(self, grid16, tmp_path):
        u = div_free(grid16, 12)
        path = tmp_path / "state.mnsf"
        F.write_snapshot(path, u, 0.0)
        blob = path.read_bytes()
        path.write_bytes(blob[:-16])
        with pytest.raises(ValueError, match="payload"):
            F.read_snapshot(path)

    def test_no_temp_file_left_behind(self, grid16, tmp_path):
        u = div_free(grid16, 12)
        path = tmp_path / "state.mnsf"
        F.write_snapshot(path, u, 0.0)
        assert [p.name for p in tmp_path.iterdir()] == ["state.mnsf"]
