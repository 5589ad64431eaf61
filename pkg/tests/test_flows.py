import numpy as np
import pytest

from holomera import flows, mera, mps
from holomera import superoperators as so


@pytest.fixture(scope="module")
def network():
    return mera.build_scale_invariant(3, b=3, seed=7)


@pytest.fixture(scope="module")
def spectrum(network):
    return so.spectral_decompose(so.build_scaling_superoperator(network))


class TestCorrelatorDirect:
    def test_identity_normalization(self, network):
        ident = np.eye(3)
        c = flows.correlator_direct(network, ident, ident, 9)
        assert abs(c - 1.0) < 1e-12

    def test_channel_composition(self, network, spectrum):
        # one more coarse-graining step relates consecutive separations
        phi = spectrum.operators[1]
        lam = spectrum.eigenvalues[1]
        for q in range(4):
            c_lo = flows.correlator_direct(network, phi, phi, 3 ** q)
            c_hi = flows.correlator_direct(network, phi, phi, 3 ** (q + 1))
            assert abs(c_hi - lam * lam * c_lo) <= 1e-10 * max(abs(c_hi), 1e-8)

    def test_matches_prediction(self, network, spectrum):
        phi = spectrum.operators[1]
        lam = spectrum.eigenvalues[1]
        c0 = flows.correlator_direct(network, phi, phi, 1)
        for q in (1, 2, 3, 4):
            c = flows.correlator_direct(network, phi, phi, 3 ** q)
            pred = flows.correlator_predicted(lam, lam, q, c0)
            assert abs(c - pred) / abs(pred) < 1e-8

    def test_dense_window_oracle(self):
        # interior correlator of a small finite-range network against the
        # brute-force state vector of an open 15-site realization
        fr = mera.build_finite_range(2, 3, 1, cap="product", seed=3)
        dec = so.spectral_decompose(
            so.build_scaling_superoperator(
                mera.ScaleInvariantMera(2, 3, fr.layers[0])))
        phi = dec.operators[1]
        psi = mps.dense_finite_range_state(fr, 5)
        c_net = flows.correlator_direct(fr, phi, phi, 3)
        x, y = mera.aligned_pair_sites(1)     # (1, 4), shift to the bulk
        x, y = x + 6, y + 6
        psi_t = psi.reshape((2,) * 15)
        op = np.einsum("ab,cd->acbd", phi, phi).reshape(4, 4)
        # dense two-point value at (x, y)
        perm = [x, y] + [i for i in range(15) if i not in (x, y)]
        mat = np.transpose(psi_t, perm).reshape(4, -1)
        rho2 = mat @ mat.conj().T
        c_dense = np.trace(rho2 @ np.kron(phi, phi))
        assert abs(c_net - c_dense) < 1e-10

    def test_beyond_cap_factorizes(self):
        fr = mera.build_finite_range(2, 3, 2, cap="product", seed=4)
        dec = so.spectral_decompose(
            so.build_scaling_superoperator(
                mera.ScaleInvariantMera(2, 3, fr.layers[0])))
        phi = dec.operators[1]
        c = flows.correlator_direct(fr, phi, phi, 27)   # r = 3 xi
        e1 = flows._site_expectation(fr, phi, 3)
        assert abs(c - e1 * e1) < 1e-12

    def test_unsupported_separation(self, network, spectrum):
        with pytest.raises(flows.FlowError):
            flows.correlator_direct(network, spectrum.operators[1],
                                    spectrum.operators[1], 5)

    def test_operator_mismatch(self, network):
        with pytest.raises(flows.FlowError):
            flows.correlator_direct(network, np.eye(2), np.eye(2), 3)


class TestClosedForms:
    def test_predicted_w0(self):
        assert flows.correlator_predicted(0.5, 0.5, 0, 1.25) == 1.25

    def test_predicted_marginal_operators(self):
        assert flows.correlator_predicted(1.0, 1.0, 9, 0.7) == 0.7

    def test_power_law_z1(self):
        assert flows.power_law(1.0, 0.25, 3.0) == 3.0

    def test_power_law_eta0(self):
        z = np.array([1.0, 2.0, 7.0])
        assert np.allclose(flows.power_law(z, 0.0, 2.0), 2.0)

    def test_loglog_slope(self):
        z = np.geomspace(1, 100, 40)
        c = flows.power_law(z, 0.37, 2.0)
        slope = np.polyfit(np.log(z), np.log(c), 1)[0]
        assert abs(slope + 0.37) < 1e-12


class TestResiduals:
    def test_exact_power_annihilated(self):
        z = 3.0 ** np.arange(6)
        curve = flows.FlowCurve(z, flows.power_law(z, 0.81, 2.0), eta=0.81)
        _zi, res = flows.cs_residual(curve, 0.81)
        assert np.max(np.abs(res)) < 1e-10

    def test_constant_curve_eta0(self):
        z = 2.0 ** np.arange(5)
        curve = flows.FlowCurve(z, np.full(5, 3.3))
        _zi, res = flows.cs_residual(curve, 0.0)
        assert np.max(np.abs(res)) < 1e-14

    def test_measured_curve(self, network, spectrum):
        curve = flows.measure_flow_curve(network, spectrum, 1, qs=range(5))
        _zi, res = flows.cs_residual(curve, curve.eta)
        assert np.max(np.abs(res)) < 1e-6

    def test_needs_three_samples(self):
        curve = flows.FlowCurve([1.0, 3.0], [1.0, 0.5])
        with pytest.raises(flows.FlowError):
            flows.cs_residual(curve, 0.3)

    def test_truncated_exponential_family(self):
        z = 81.0 * 1.01 ** np.arange(0, 120)
        curve = flows.FlowCurve(z, 0.37 * np.exp(-0.25 * z / 81.0))
        _zi, res = flows.truncated_cs_residual(curve, 0.25, 81.0)
        assert np.max(np.abs(res)) < 1e-6

    def test_truncated_on_power_law_grows(self):
        z = 81.0 * 1.01 ** np.arange(0, 80)
        curve = flows.FlowCurve(z, flows.power_law(z, 0.25, 1.0))
        _zi, res = flows.truncated_cs_residual(curve, 0.25, 81.0)
        # analytic: residual = -eta + eta z / zstar, growing through zero
        assert res[-1] > res[0]
        assert abs(res[0] - 0.25 * (z[1] / 81.0 - 1.0)) < 1e-3

    def test_large_zstar_recovers_scale_flow(self):
        z = np.geomspace(1, 10, 30)
        rate = 1e-9
        curve = flows.FlowCurve(z, np.exp(-rate * z))
        _zi, r1 = flows.truncated_cs_residual(curve, 0.4, 1e12)
        _zi, r2 = flows.cs_residual(curve, 0.0)
        assert np.max(np.abs(r1 - r2)) < 1e-6


class TestRescaleCovariance:
    def test_zero_displacement_identity(self):
        z = 3.0 ** np.arange(4)
        curve = flows.FlowCurve(z, flows.power_law(z, 0.5, 1.0), eta=0.5)
        rep = flows.rescale_covariance(curve, 0.0)
        assert rep["passed"] and rep["max_rel_deviation"] < 1e-14

    def test_power_law_any_ratio(self):
        z = np.array([1.0, 2.0, 4.0, 8.0])
        curve = flows.FlowCurve(z, flows.power_law(z, 1.3, 2.0), eta=1.3)
        rep = flows.rescale_covariance(curve, np.log(2.0))
        assert rep["passed"] and rep["pairs"] == 3

    def test_measured_curve_at_ratio_b(self, network, spectrum):
        curve = flows.measure_flow_curve(network, spectrum, 1, qs=range(5))
        rep = flows.rescale_covariance(curve, np.log(3.0))
        assert rep["max_rel_deviation"] < 1e-8

    def test_missing_ratio_raises(self):
        z = 3.0 ** np.arange(4)
        curve = flows.FlowCurve(z, flows.power_law(z, 0.5, 1.0), eta=0.5)
        with pytest.raises(flows.FlowError):
            flows.rescale_covariance(curve, 0.31)


class TestCrossoverFit:
    def _synthetic(self, eta=0.25, zstar=81.0, c1=0.8):
        z = np.geomspace(1.0, 20 * zstar, 160)
        vals = c1 * z ** (-eta) * np.exp(-eta * z / zstar)
        return flows.FlowCurve(z, vals, eta=eta)

    def test_recovers_exponent_and_rate(self):
        eta, zstar = 0.25, 81.0
        fit = flows.crossover_fit(self._synthetic(eta, zstar), zstar)
        assert abs(fit.power_exponent - eta) / eta < 0.01
        assert abs(fit.exp_rate - eta / zstar) / (eta / zstar) < 0.01
        assert fit.exp_window_ok

    def test_pure_power_flags_exponential_window(self):
        z = np.geomspace(1.0, 2000.0, 120)
        curve = flows.FlowCurve(z, flows.power_law(z, 0.25, 1.0))
        fit = flows.crossover_fit(curve, 81.0)
        assert not fit.exp_window_ok

    def test_insufficient_span(self):
        z = np.geomspace(1.0, 10.0, 12)
        curve = flows.FlowCurve(z, flows.power_law(z, 0.3, 1.0))
        with pytest.raises(flows.FlowError):
            flows.crossover_fit(curve, 81.0)

    def test_crossover_scale_estimate(self):
        fit = flows.crossover_fit(self._synthetic(0.25, 81.0), 81.0)
        assert abs(fit.crossover_scale - 81.0) / 81.0 < 0.02


class TestHolographicRatio:
    def test_unit_at_z1(self):
        z = 3.0 ** np.arange(4)
        curve = flows.FlowCurve(z, flows.power_law(z, 0.5, 2.0), eta=0.5)
        out = flows.holographic_ratio(curve, curve.values[0])
        assert out.values[0] == 1.0

    def test_power_law_normalizes_to_pure_power(self):
        z = 3.0 ** np.arange(5)
        curve = flows.FlowCurve(z, flows.power_law(z, 0.7, 5.0), eta=0.7)
        out = flows.holographic_ratio(curve, 5.0)
        assert np.allclose(out.values, z ** -0.7)

    def test_zero_amplitude_rejected(self):
        z = 3.0 ** np.arange(4)
        curve = flows.FlowCurve(z, flows.power_law(z, 0.5, 1.0))
        with pytest.raises(flows.FlowError):
            flows.holographic_ratio(curve, 0.0)


class TestFlowCurveInvariants:
    def test_strictly_increasing_z(self):
        with pytest.raises(flows.FlowError):
            flows.FlowCurve([1.0, 1.0, 3.0], [1.0, 2.0, 3.0])

    def test_finite_values(self):
        with pytest.raises(flows.FlowError):
            flows.FlowCurve([1.0, 3.0], [1.0, np.inf])
