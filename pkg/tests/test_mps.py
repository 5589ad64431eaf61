import numpy as np
import pytest

from holomera import flows, mera, mps
from holomera import superoperators as so


class TestToMps:
    def test_bond_bounds_and_metadata(self):
        for w_star in (1, 2):
            fr = mera.build_finite_range(2, 3, w_star, cap="product", seed=3)
            m = mps.to_mps(fr)
            assert m.chi_mps <= fr.chi ** (2 * w_star)
            assert m.meta["per_layer_chi_estimate"] == fr.chi ** w_star
            assert m.meta["numerical_ranks"]

    def test_boundary_disentangler_rank(self):
        # a cut crossing one boundary disentangler per layer reaches
        # chi ** (2 w_star); generic layers saturate it, which is why the
        # per-layer-chi estimate is an estimate and not a bound
        fr = mera.build_finite_range(2, 3, 1, cap="product", seed=3)
        m = mps.to_mps(fr)
        assert m.chi_mps == 4

    def test_window_overlap_with_dense_state(self):
        for chi, w_star, cells in [(2, 1, 3), (2, 2, 2), (3, 1, 2)]:
            fr = mera.build_finite_range(chi, 3, w_star, cap="product", seed=5)
            chain = mps._build_open_chain(fr, cells)
            dense_direct = mps.dense_finite_range_state(fr, cells)
            dense_mps = chain.dense_state()
            overlap = abs(np.vdot(dense_mps, dense_direct)) / (
                np.linalg.norm(dense_mps) * np.linalg.norm(dense_direct))
            assert abs(overlap - 1.0) < 1e-10

    def test_mixed_cap_rejected_with_diagnostic(self):
        fr = mera.build_finite_range(2, 3, 2, cap="maximally-mixed", seed=0)
        with pytest.raises(mps.MpsError, match="purified"):
            mps.to_mps(fr)

    def test_cell_length(self):
        fr = mera.build_finite_range(2, 3, 2, cap="product", seed=1)
        m = mps.to_mps(fr)
        assert m.cell_sites == fr.xi == 9


class TestTransferSpectrum:
    def test_product_state(self):
        v = np.zeros((1, 2, 1))
        v[0, 0, 0] = 1.0
        m = mps.Mps([v], 1)
        spec = mps.transfer_spectrum(m)
        assert abs(spec.t2) < 1e-14
        assert spec.xi_tm == 0.0

    def test_ghz_degenerate_flagged(self):
        a = np.zeros((2, 2, 2))
        a[0, 0, 0] = 1.0
        a[1, 1, 1] = 1.0
        m = mps.Mps([a], 2)
        spec = mps.transfer_spectrum(m)
        assert spec.degenerate

    def test_random_injective_matches_correlator_decay(self, rng):
        # bond-symmetric tensor: the transfer matrix is symmetric, so the
        # subleading eigenvalue is real and the decay is oscillation-free
        a = rng.standard_normal((4, 2, 4)) + 0.3
        a = 0.5 * (a + a.transpose(2, 1, 0))
        m = mps.Mps([a], 4)
        spec = mps.transfer_spectrum(m)
        assert not spec.degenerate and np.isfinite(spec.xi_tm)
        op = np.array([[1.0, 0.0], [0.0, -1.0]])
        rs = np.arange(14, 26)
        cs = []
        for r in rs:
            c = mps.mps_correlator(m, op, op, int(r), offset=0)
            e1 = mps.mps_correlator(m, op, np.eye(2), int(r), offset=0)
            e2 = mps.mps_correlator(m, np.eye(2), op, int(r), offset=0)
            cs.append(abs(c - e1 * e2))
        slope = np.polyfit(rs, np.log(cs), 1)[0]
        assert abs(-1.0 / slope - spec.xi_tm) / spec.xi_tm < 0.01


class TestMpsCorrelator:
    def test_identity_normalization(self):
        fr = mera.build_finite_range(2, 3, 2, cap="product", seed=3)
        m = mps.to_mps(fr)
        val = mps.mps_correlator(m, np.eye(2), np.eye(2), 7)
        assert abs(val - 1.0) < 1e-10

    def test_cross_representation_agreement(self):
        fr = mera.build_finite_range(2, 3, 2, cap="product", seed=3)
        sci = mera.ScaleInvariantMera(2, 3, fr.layers[0])
        dec = so.spectral_decompose(so.build_scaling_superoperator(sci))
        phi = dec.operators[1]
        m = mps.to_mps(fr)
        for q, r in [(0, 1), (1, 3), (2, 9), (3, 27)]:
            direct = flows.correlator_direct(fr, phi, phi, r)
            offset = ((3 ** q - 1) // 2) % fr.xi   # channel-aligned column
            via_mps = mps.mps_correlator(m, phi, phi, r, offset=offset)
            assert abs(direct - via_mps) < 1e-8

    def test_exponential_envelope(self, rng):
        a = rng.standard_normal((3, 2, 3)) + 0.4
        a = 0.5 * (a + a.transpose(2, 1, 0))
        m = mps.Mps([a], 3)
        spec = mps.transfer_spectrum(m)
        op = np.array([[0.0, 1.0], [1.0, 0.0]])
        base = None
        for r in (10, 15, 20, 25):
            c = mps.mps_correlator(m, op, op, r, offset=0)
            e1 = mps.mps_correlator(m, op, np.eye(2), r, offset=0)
            e2 = mps.mps_correlator(m, np.eye(2), op, r, offset=0)
            conn = abs(c - e1 * e2)
            bound = np.exp(-r / spec.xi_tm)
            if base is None:
                base = conn / bound * 10.0
            assert conn <= base * bound

    def test_dimension_mismatch(self):
        fr = mera.build_finite_range(2, 3, 1, cap="product", seed=0)
        m = mps.to_mps(fr)
        with pytest.raises(mps.MpsError):
            mps.mps_correlator(m, np.eye(3), np.eye(3), 3)

    def test_needs_positive_separation(self):
        fr = mera.build_finite_range(2, 3, 1, cap="product", seed=0)
        m = mps.to_mps(fr)
        with pytest.raises(mps.MpsError):
            mps.mps_correlator(m, np.eye(2), np.eye(2), 0)


class TestPurifiedChain:
    def test_identity_marginals(self):
        fr = mera.build_finite_range(2, 3, 1, cap="maximally-mixed", seed=2)
        m = mps.purified_cell_mps(fr)
        assert any(m.anc)
        # the purified state is trace-normalized: <1 1> through the
        # transfer machinery equals 1
        phys = [i for i, a in enumerate(m.anc) if not a]
        d = m.tensors[phys[0]].shape[1]
        ident = np.eye(d)
        got = mps.mps_correlator(m, ident, ident, 4)
        assert abs(got - 1.0) < 1e-10
