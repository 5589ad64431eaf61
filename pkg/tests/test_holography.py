import numpy as np
import pytest

from holomera import flows
from holomera import holography as holo


class TestMetric:
    def test_warp_factor_values(self):
        g = holo.Geometry("pure-AdS")
        assert holo.warp_factor(g, 1.0) == 1.0
        assert holo.warp_factor(g, 2.0) == 0.5

    def test_warp_needs_positive_depth(self):
        with pytest.raises(holo.GeometryError):
            holo.warp_factor(holo.Geometry("pure-AdS"), 0.0)

    def test_emblackening_boundary_and_horizon(self):
        g = holo.Geometry("BTZ", zstar=2.0)
        assert holo.emblackening(g, 0.0) == 1.0
        assert abs(holo.emblackening(g, 2.0)) < 1e-15

    def test_emblackening_pure_ads_limit(self):
        g = holo.Geometry("BTZ", zstar=1e12)
        assert abs(holo.emblackening(g, 1.0) - 1.0) < 1e-12
        assert holo.emblackening(holo.Geometry("pure-AdS"), 7.0) == 1.0

    def test_rescaling_invariance_of_line_element(self, rng):
        g = holo.Geometry("pure-AdS")
        for _ in range(10):
            z = float(rng.uniform(0.1, 5.0))
            dx, dz = rng.uniform(-1, 1, 2)
            u = float(rng.uniform(-1.0, 1.0))
            s = np.exp(u)
            ds2 = holo.line_element(g, z, dx, dz)
            ds2_scaled = holo.line_element(g, s * z, s * dx, s * dz)
            assert abs(ds2 - ds2_scaled) < 1e-12 * max(abs(ds2), 1.0)


class TestMassDimension:
    def test_massless_constant_mode(self):
        dp, dm = holo.dimension_from_mass(0.0)
        assert dp == 0.0 and dm == -1.0

    @pytest.mark.parametrize("m2", [0.0, 1.0, 2.0])
    def test_roots_solve_radial_equation(self, m2):
        grid = np.geomspace(1.0, 2.0, 200)
        for delta in holo.dimension_from_mass(m2):
            assert holo.radial_ode_residual(m2, delta, grid) < 1e-8

    def test_m2_two_gives_delta_one(self):
        dp, _dm = holo.dimension_from_mass(2.0)
        assert abs(dp - 1.0) < 1e-14

    def test_perturbed_root_detected(self):
        grid = np.geomspace(1.0, 2.0, 200)
        dp, _ = holo.dimension_from_mass(2.0)
        assert holo.radial_ode_residual(2.0, dp + 0.1, grid) > 1e-3

    def test_double_root_at_bound(self):
        dp, dm = holo.dimension_from_mass(-0.25)
        assert dp == dm == -0.5

    def test_stability_bound_error(self):
        with pytest.raises(holo.StabilityBoundError):
            holo.dimension_from_mass(-0.26)

    def test_grid_requirements(self):
        with pytest.raises(holo.GeometryError):
            holo.radial_ode_residual(1.0, 0.5, np.geomspace(1, 2, 4))
        with pytest.raises(holo.GeometryError):
            holo.radial_ode_residual(1.0, 0.5, np.linspace(1, 2, 30))

    def test_bulk_field_carries_both_roots(self):
        f = holo.BulkField(2.0)
        assert f.delta == 1.0 and f.delta_minus == -2.0


class TestGeodesics:
    def test_closed_form_small_separation(self):
        # log(zstar sinh(z/zstar)) -> log z + O((z/zstar)^2)
        z, zs = 0.01, 10.0
        assert abs(holo.geodesic_closed_form(z, zs) - np.log(z)) < 1e-6

    def test_closed_form_large_separation(self):
        z, zs = 200.0, 10.0
        expect = z / zs + np.log(zs / 2.0)
        assert abs(holo.geodesic_closed_form(z, zs) - expect) < 1e-12

    def test_closed_form_pure_ads_limit(self):
        assert holo.geodesic_closed_form(3.0, np.inf) == np.log(3.0)

    def test_pure_ads_length_differences(self):
        g = holo.Geometry("pure-AdS")
        for eps in (1e-4, 5e-5):
            l2 = holo.geodesic_numeric(2.0, g, eps=eps).length
            l5 = holo.geodesic_numeric(5.0, g, eps=eps).length
            kappa = (l5 - l2) / np.log(5.0 / 2.0)
            assert abs(kappa - 2.0) < 1e-7

    def test_btz_fits_sinh_family_with_thermal_scale(self):
        g = holo.Geometry("BTZ", zstar=1.0)
        zs = g.thermal_scale
        seps = zs * np.geomspace(0.1, 10.0, 21)
        lengths = np.array([holo.geodesic_numeric(x, g, eps=1e-5).length
                            for x in seps])
        kappa, _c, resid = holo.fit_geodesic_family(seps, lengths, zs)
        assert resid < 1e-3
        assert abs(kappa - 2.0) < 1e-6

    def test_cutoff_shifts_additive_constant_only(self):
        g = holo.Geometry("BTZ", zstar=1.0)
        shifts = []
        for x in (0.5, 2.0, 8.0):
            l1 = holo.geodesic_numeric(x, g, eps=1e-4).length
            l2 = holo.geodesic_numeric(x, g, eps=5e-5).length
            shifts.append(l2 - l1)
        assert max(shifts) - min(shifts) < 1e-6

    def test_turning_point_under_horizon(self):
        g = holo.Geometry("BTZ", zstar=1.0)
        res = holo.geodesic_numeric(30.0, g, eps=1e-5)
        assert res.turning_point < g.zstar

    def test_horizon_wrapping_regime(self):
        g = holo.Geometry("BTZ", zstar=1.0)
        res = holo.geodesic_numeric(60.0, g, eps=1e-5)
        assert res.regime == "horizon-wrapping"
        expect = 60.0 / 1.0 + 2.0 * np.log(2.0 / 1e-5)
        assert abs(res.length - expect) / expect < 1e-6

    def test_bad_cutoff_rejected(self):
        g = holo.Geometry("pure-AdS")
        with pytest.raises(holo.GeometryError):
            holo.geodesic_numeric(1.0, g, eps=0.9)


class TestPropagator:
    def test_small_z_power_law(self):
        zs, eta = 10.0, 0.5
        z = np.geomspace(0.01, zs / 10.0, 30)
        ratio = holo.holo_propagator(z, zs, eta) / z ** (-eta)
        assert np.max(np.abs(ratio - 1.0)) < 0.01

    def test_large_z_exponential(self):
        # sinh -> e^x / 2, so the deep asymptote is (zs / 2)^-eta
        # e^(-eta z / zs): the rate is eta / zs and the amplitude differs
        # from the loose zs^-eta by exactly 2^eta
        zs, eta = 2.0, 0.5
        z = np.geomspace(5 * zs, 20 * zs, 30)
        expect = (zs / 2.0) ** (-eta) * np.exp(-eta * z / zs)
        ratio = holo.holo_propagator(z, zs, eta) / expect
        assert np.max(np.abs(ratio - 1.0)) < 0.01
        rate = -np.polyfit(z, np.log(holo.holo_propagator(z, zs, eta)), 1)[0]
        assert abs(rate - eta / zs) / (eta / zs) < 0.01

    def test_eta_zero(self):
        assert holo.holo_propagator(3.0, 2.0, 0.0) == 1.0


class TestFlowEquation:
    def test_exact_power_annihilated(self):
        delta = 0.44
        z = 3.0 ** np.arange(6)
        curve = flows.FlowCurve(z, z ** (-2 * delta))
        _zi, res = holo.holographic_cs_residual(curve, delta)
        assert np.max(np.abs(res)) < 1e-10

    def test_operator_identity_with_network_flow(self, rng):
        # the two discrete flow operators agree sample by sample once
        # eta = 2 Delta: this is the central equivalence at the level of
        # the implemented discretizations
        z = 3.0 ** np.arange(7)
        vals = np.exp(rng.standard_normal(7) * 0.2) * z ** -0.4
        curve = flows.FlowCurve(z, vals)
        delta = 0.31
        _z1, r_holo = holo.holographic_cs_residual(curve, delta)
        _z2, r_mera = flows.cs_residual(curve, 2 * delta)
        assert np.max(np.abs(r_holo - r_mera)) < 1e-14

    def test_perturbation_grows_linearly(self):
        z = 3.0 ** np.arange(6)
        curve = flows.FlowCurve(z, z ** -0.8)
        eps = np.array([0.01, 0.02, 0.04])
        r = []
        for e in eps:
            _zi, res = holo.holographic_cs_residual(curve, 0.4 + e)
            r.append(np.max(np.abs(res)))
        assert np.allclose(r, 2 * eps, rtol=1e-8)

    def test_needs_three_samples(self):
        curve = flows.FlowCurve([1.0, 3.0], [1.0, 0.3])
        with pytest.raises(holo.GeometryError):
            holo.holographic_cs_residual(curve, 0.5)
