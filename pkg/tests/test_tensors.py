import numpy as np
import pytest

from holomera import tensors as tn


def loop_contract(a, b, pairs):
    """Brute-force index-loop contraction oracle."""
    ax_a = [p[0] for p in pairs]
    ax_b = [p[1] for p in pairs]
    free_a = [i for i in range(a.ndim) if i not in ax_a]
    free_b = [i for i in range(b.ndim) if i not in ax_b]
    out_shape = [a.shape[i] for i in free_a] + [b.shape[i] for i in free_b]
    out = np.zeros(out_shape, dtype=np.result_type(a, b))
    for idx_a in np.ndindex(*a.shape):
        for idx_b in np.ndindex(*b.shape):
            if any(idx_a[i] != idx_b[j] for i, j in pairs):
                continue
            pos = tuple(idx_a[i] for i in free_a) + tuple(idx_b[i] for i in free_b)
            out[pos] += a[idx_a] * b[idx_b]
    return out


class TestContract:
    def test_matrix_product(self, rng):
        a = rng.standard_normal((2, 3))
        b = rng.standard_normal((3, 2))
        assert np.allclose(tn.contract(a, b, [(1, 0)]), a @ b)

    def test_identity(self, rng):
        a = rng.standard_normal((4, 3))
        out = tn.contract(a, np.eye(3), [(1, 0)])
        assert np.allclose(out, a)

    def test_against_loop_oracle(self, rng):
        a = rng.standard_normal((2, 2, 2)) + 1j * rng.standard_normal((2, 2, 2))
        b = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        got = tn.contract(a, b, [(1, 0)])
        want = loop_contract(a, b, [(1, 0)])
        assert np.max(np.abs(got - want)) < 1e-13

    def test_bilinear(self, rng):
        a = rng.standard_normal((3, 4))
        b = rng.standard_normal((4, 2))
        lhs = tn.contract(2.5 * a, b, [(1, 0)])
        rhs = 2.5 * tn.contract(a, b, [(1, 0)])
        assert np.allclose(lhs, rhs)

    def test_dimension_mismatch(self):
        with pytest.raises(tn.TensorError):
            tn.contract(np.zeros((2, 3)), np.zeros((2, 2)), [(1, 0)])

    def test_repeated_leg(self):
        with pytest.raises(tn.TensorError):
            tn.contract(np.zeros((2, 2)), np.zeros((2, 2)), [(0, 0), (0, 1)])

    def test_nonfinite_rejected(self):
        bad = np.array([[1.0, np.nan], [0.0, 1.0]])
        with pytest.raises(tn.TensorError):
            tn.contract(bad, np.eye(2), [(1, 0)])


class TestPermute:
    def test_identity_permutation(self, rng):
        a = rng.standard_normal((2, 3, 4))
        assert np.array_equal(tn.permute(a, (0, 1, 2)), a)

    def test_double_transpose(self, rng):
        a = rng.standard_normal((3, 5))
        assert np.array_equal(tn.permute(tn.permute(a, (1, 0)), (1, 0)), a)

    def test_permute_then_contract(self, rng):
        a = rng.standard_normal((2, 3, 4))
        b = rng.standard_normal((4, 3))
        direct = tn.contract(a, b, [(1, 1), (2, 0)])
        relabeled = tn.contract(tn.permute(a, (0, 2, 1)), b, [(2, 1), (1, 0)])
        assert np.allclose(direct, relabeled)

    def test_invalid_permutation(self):
        with pytest.raises(tn.TensorError):
            tn.permute(np.zeros((2, 2)), (0, 0))


class TestEigGeneral:
    def test_diagonal_sorted(self):
        m = np.diag([1.0, -3.0, 2.0])
        dec = tn.eig_general(m)
        assert np.allclose(dec.eigenvalues, [-3.0, 2.0, 1.0])

    def test_symmetric_pair(self):
        dec = tn.eig_general(np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert set(np.round(dec.eigenvalues.real, 12)) == {1.0, -1.0}
        # tie on modulus broken by descending real part
        assert dec.eigenvalues[0].real > dec.eigenvalues[1].real

    @pytest.mark.parametrize("n", [6, 16, 64])
    def test_reconstruction(self, n, rng):
        m = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        dec = tn.eig_general(m)
        assert dec.reconstruction_error(m) < 1e-10
        assert not dec.defective

    def test_biorthonormal(self, rng):
        m = rng.standard_normal((8, 8))
        dec = tn.eig_general(m)
        gram = dec.left_vectors.conj().T @ dec.right_vectors
        assert np.max(np.abs(gram - np.eye(8))) < 1e-10

    def test_degenerate_cluster_reported(self):
        m = np.diag([2.0, 2.0, 1.0])
        dec = tn.eig_general(m)
        assert dec.clusters == [[0, 1]]
        assert dec.reconstruction_error(m) < 1e-12

    def test_nonsquare_rejected(self):
        with pytest.raises(tn.TensorError):
            tn.eig_general(np.zeros((2, 3)))


class TestRandomIsometry:
    def test_square_is_unitary(self):
        v = tn.random_isometry(4, 4, seed=0)
        assert tn.isometry_residual(v) < 1e-12
        assert tn.isometry_residual(v.conj().T) < 1e-12

    def test_tall_isometry(self):
        v = tn.random_isometry(9, 3, seed=1)
        assert tn.isometry_residual(v) < 1e-12

    def test_deterministic(self):
        a = tn.random_isometry(6, 2, seed=7)
        b = tn.random_isometry(6, 2, seed=7)
        assert np.array_equal(a, b)

    def test_rows_less_than_cols(self):
        with pytest.raises(tn.TensorError):
            tn.random_isometry(2, 4, seed=0)

    @pytest.mark.parametrize("seed", range(5))
    def test_residual_sweep(self, seed):
        v = tn.random_isometry(8, 5, seed=seed)
        assert tn.isometry_residual(v) < 1e-12


class TestSvdPolar:
    def test_identity(self):
        v, p = tn.svd_polar(np.eye(3))
        assert np.allclose(v, np.eye(3))
        assert np.allclose(p, np.eye(3))

    def test_diagonal_positive(self):
        d = np.diag([3.0, 1.0, 0.5])
        v, p = tn.svd_polar(d)
        assert np.allclose(v, np.eye(3), atol=1e-12)
        assert np.allclose(p, d, atol=1e-12)

    def test_reconstruction(self, rng):
        m = rng.standard_normal((6, 4)) + 1j * rng.standard_normal((6, 4))
        v, p = tn.svd_polar(m)
        assert tn.isometry_residual(v) < 1e-12
        assert np.max(np.abs(v @ p - m)) < 1e-10
        evals = np.linalg.eigvalsh(p)
        assert evals.min() > -1e-12
