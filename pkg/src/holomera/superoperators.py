"""One-site scaling superoperator: explicit matrix form, eigen-operators,
eigenvalues and scaling dimensions.

The superoperator is the linear map a one-site operator undergoes per layer
(``mera.ascend_one_site``) written as a chi^2 x chi^2 matrix on vectorized
operators.  Its eigen-operators phi_alpha with eigenvalues lambda_alpha
define the scaling dimensions Delta_alpha = -log_b |lambda_alpha|; the base
is the branching factor because one layer rescales lengths by b, which
makes correlators decay as r ** -(Delta_a + Delta_b) with r in lattice
units.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mera import NetworkError, ascend_one_site
from .tensors import eig_general

UNITALITY_TOL = 1e-12


@dataclass
class ScalingSuperoperator:
    matrix: np.ndarray
    chi: int
    b: int

    def apply(self, op):
        op = np.asarray(op)
        return (self.matrix @ op.reshape(-1)).reshape(self.chi, self.chi)

    def unitality_residual(self):
        ident = np.eye(self.chi)
        return float(np.max(np.abs(self.apply(ident) - ident)))


@dataclass
class ScalingOperatorSet:
    """Eigen-data (lambda_alpha, Delta_alpha, phi_alpha) sorted by
    non-decreasing Delta.  ``duals`` are the left eigen-operators
    normalized so Tr(dual_a^dag phi_b) = delta_ab, which makes the spectral
    form S(o) = sum_a lambda_a phi_a Tr(dual_a^dag o) exact."""

    eigenvalues: np.ndarray
    dimensions: np.ndarray
    operators: list
    duals: list
    b: int
    defective: bool = False
    clusters: list = field(default_factory=list)
    trace_gram: np.ndarray | None = None

    def __len__(self):
        return len(self.eigenvalues)

    def nontrivial_dimensions(self, count=None):
        """Scaling dimensions excluding the identity (Delta = 0) entry."""
        dims = self.dimensions[1:]
        return dims if count is None else dims[:count]


def build_scaling_superoperator(mera):
    """Column-by-column matrix of O -> ascend_one_site(O, layer) in the
    vectorized operator basis."""
    layer = mera.layer
    chi = mera.chi
    cols = []
    basis = np.zeros((chi, chi), dtype=complex if np.iscomplexobj(layer.w) else float)
    for k in range(chi * chi):
        basis.flat[k] = 1.0
        cols.append(ascend_one_site(basis, layer).reshape(-1))
        basis.flat[k] = 0.0
    s = ScalingSuperoperator(np.stack(cols, axis=1), chi, mera.b)
    resid = s.unitality_residual()
    if resid > UNITALITY_TOL:
        raise NetworkError(f"superoperator is not unital: residual {resid:.3e}")
    return s


def spectral_decompose(s, cluster_tol=1e-9):
    """Eigen-operators of the scaling superoperator.

    Right eigen-operators are Hilbert-Schmidt normalized; left duals carry
    the biorthonormality.  Degenerate eigenvalue clusters are reported, and
    a defective matrix is flagged but still returned.
    """
    dec = eig_general(s.matrix, cluster_tol=cluster_tol)
    lams = dec.eigenvalues
    if abs(lams[0] - 1.0) > 1e-8:
        raise NetworkError(f"leading superoperator eigenvalue is {lams[0]:.6f}, "
                           "expected 1 (identity operator)")
    chi = s.chi
    ops, duals = [], []
    for k in range(len(lams)):
        phi = dec.right_vectors[:, k].reshape(chi, chi)
        dual = dec.left_vectors[:, k].reshape(chi, chi)
        nrm = np.sqrt(np.trace(phi.conj().T @ phi).real)
        phi = phi / nrm
        dual = dual * nrm  # keep Tr(dual^dag phi) = 1
        # fix the overall phase so the largest entry is real positive;
        # the dual rotates oppositely to keep Tr(dual^dag phi) = 1
        idx = int(np.argmax(np.abs(phi)))
        ph = phi.flat[idx] / abs(phi.flat[idx])
        phi = phi / ph
        dual = dual * np.conj(ph)
        ops.append(phi)
        duals.append(dual)

    dims = -np.log(np.abs(lams)) / np.log(s.b)
    order = np.argsort(dims, kind="stable")
    lams = lams[order]
    dims = dims[order]
    ops = [ops[i] for i in order]
    duals = [duals[i] for i in order]
    remap = {int(old): new for new, old in enumerate(order)}
    clusters = [sorted(remap[i] for i in cl) for cl in dec.clusters]

    gram = np.array([[np.trace(a @ c) for c in ops] for a in ops])
    return ScalingOperatorSet(lams, dims, ops, duals, s.b,
                              defective=dec.defective, clusters=clusters,
                              trace_gram=gram)


def apply_n_times(s, op, n):
    if n < 0:
        raise ValueError("n must be non-negative")
    out = np.asarray(op).astype(s.matrix.dtype, copy=True)
    for _ in range(n):
        out = s.apply(out)
    return out
