"""Dense tensor algebra: contraction, permutation, spectral and polar
decompositions, random isometries.

Everything is double precision (float64 / complex128) and dense; bond
dimensions stay small enough that nothing fancier pays off.  Tensors are
plain numpy arrays whose axes play the role of named legs; leg order is
part of every function contract.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_TOL = 1e-12


class TensorError(ValueError):
    """Raised for malformed tensor operations (bad legs, dimensions, input)."""


def as_tensor(data, complex_ok=True):
    """Coerce to a float64/complex128 array and reject non-finite entries."""
    arr = np.asarray(data)
    if np.iscomplexobj(arr):
        if not complex_ok:
            raise TensorError("complex data where a real tensor is required")
        arr = arr.astype(np.complex128)
    else:
        arr = arr.astype(np.float64)
    if not np.all(np.isfinite(arr)):
        raise TensorError("tensor contains NaN or Inf entries")
    return arr


def is_effectively_real(arr, tol=1e-10):
    """True when every imaginary part is below ``tol``."""
    if not np.iscomplexobj(arr):
        return True
    return float(np.max(np.abs(arr.imag))) < tol if arr.size else True


def realify(arr, tol=1e-10):
    """Drop a negligible imaginary part, else return the array unchanged."""
    if np.iscomplexobj(arr) and is_effectively_real(arr, tol):
        return arr.real.copy()
    return arr


def contract(a, b, pairs):
    """Contract tensors ``a`` and ``b`` over the given leg pairs.

    ``pairs`` is a sequence of ``(leg_of_a, leg_of_b)``.  The result carries
    the unpaired legs of ``a`` followed by the unpaired legs of ``b``, in
    their original order.
    """
    a = as_tensor(a)
    b = as_tensor(b)
    pairs = list(pairs)
    ax_a = [p[0] for p in pairs]
    ax_b = [p[1] for p in pairs]
    if len(set(ax_a)) != len(ax_a) or len(set(ax_b)) != len(ax_b):
        raise TensorError("repeated leg in contraction pairs")
    for ia, ib in pairs:
        if not (0 <= ia < a.ndim and 0 <= ib < b.ndim):
            raise TensorError(f"leg pair ({ia},{ib}) out of range")
        if a.shape[ia] != b.shape[ib]:
            raise TensorError(
                f"dimension mismatch on pair ({ia},{ib}): "
                f"{a.shape[ia]} != {b.shape[ib]}")
    return np.tensordot(a, b, axes=(ax_a, ax_b))


def permute(a, order):
    """Transpose legs of ``a`` so that new leg i is old leg ``order[i]``."""
    a = as_tensor(a)
    order = list(order)
    if sorted(order) != list(range(a.ndim)):
        raise TensorError(f"{order} is not a permutation of 0..{a.ndim - 1}")
    return np.transpose(a, order)


@dataclass
class SpectralDecomposition:
    """Eigen-data of a general square matrix.

    ``eigenvalues`` are sorted by descending modulus (ties: descending real
    part, then descending imaginary part).  ``right_vectors`` holds right
    eigenvectors as columns; ``left_vectors`` holds the biorthonormal left
    duals as columns, so that ``left_vectors.conj().T @ right_vectors = 1``
    and ``sum_i lam_i r_i l_i^dag`` reconstructs the input.
    """

    eigenvalues: np.ndarray
    right_vectors: np.ndarray
    left_vectors: np.ndarray
    defective: bool = False
    clusters: list = field(default_factory=list)

    def reconstruct(self):
        lam = self.eigenvalues
        return (self.right_vectors * lam) @ self.left_vectors.conj().T

    def reconstruction_error(self, m):
        m = np.asarray(m)
        scale = max(np.linalg.norm(m), 1.0)
        return float(np.linalg.norm(self.reconstruct() - m) / scale)


def _sort_key(lams):
    # descending |lam|, ties by descending real then imaginary part
    return np.lexsort((-lams.imag, -lams.real, -np.abs(lams)))


def eig_general(m, cluster_tol=1e-9):
    """Full eigendecomposition of a general square matrix.

    Left duals come from inverting the right eigenvector matrix, which
    biorthonormalizes degenerate clusters in one joint linear solve.  If the
    eigenvector matrix is numerically singular the matrix is flagged
    defective and a least-squares dual is returned instead.
    """
    m = as_tensor(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise TensorError("eig_general requires a square matrix")
    lams, right = np.linalg.eig(m)
    order = _sort_key(lams)
    lams = lams[order]
    right = right[:, order]

    defective = False
    cond = np.linalg.cond(right)
    if not np.isfinite(cond) or cond > 1e12:
        defective = True
        left_h = np.linalg.pinv(right)          # rows are left duals
    else:
        left_h = np.linalg.inv(right)
    left = left_h.conj().T

    clusters = []
    start = 0
    for i in range(1, len(lams) + 1):
        if i == len(lams) or abs(lams[i] - lams[start]) >= cluster_tol:
            if i - start > 1:
                clusters.append(list(range(start, i)))
            start = i
    return SpectralDecomposition(lams, right, left, defective, clusters)


def random_unitary(n, seed=None, real=False):
    """Haar-ish random unitary (orthogonal when ``real``) from QR of a
    Ginibre matrix with the usual phase fix."""
    rng = np.random.default_rng(seed)
    if real:
        a = rng.standard_normal((n, n))
    else:
        a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(a)
    d = np.diagonal(r)
    q = q * (d / np.abs(d))
    return q


def random_isometry(rows, cols, seed=None, real=False):
    """Random ``rows x cols`` isometry, ``V^dag V = 1``; deterministic per seed.

    Columns are the orthonormalization of independent rotation-invariant
    (Gaussian) columns.
    """
    if rows < cols:
        raise TensorError(f"random_isometry needs rows >= cols, got {rows} < {cols}")
    rng = np.random.default_rng(seed)
    if real:
        a = rng.standard_normal((rows, cols))
    else:
        a = rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))
    q, r = np.linalg.qr(a)
    d = np.diagonal(r)
    q = q * (d / np.abs(d))
    return q[:, :cols]


def svd_polar(m):
    """Polar factors ``(v, p)`` of a matrix: ``m = v @ p`` with ``v`` an
    isometry and ``p`` positive semidefinite."""
    m = as_tensor(m)
    if m.ndim != 2:
        raise TensorError("svd_polar requires a matrix")
    u, s, vh = np.linalg.svd(m, full_matrices=False)
    v = u @ vh
    p = vh.conj().T @ (s[:, None] * vh)
    return v, p


def isometry_residual(v):
    """Max-abs deviation of ``v^dag v`` from the identity."""
    v = np.asarray(v)
    g = v.conj().T @ v
    return float(np.max(np.abs(g - np.eye(g.shape[0]))))


def dagger(m):
    return np.asarray(m).conj().T
