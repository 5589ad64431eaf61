"""Variational energy minimization for ternary scale-invariant networks.

The update rule is the standard linearized one: for each tensor, contract
its environment out of the energy network against the descending fixed
point, then replace the tensor by the sign-flipped polar isometry of that
environment (singular-value update).  Sweeps go disentangler first, then
isometry, with one fixed-point refresh per sweep.  The local Hamiltonian
is shifted negative semidefinite, which is what makes the linearized
update monotone in practice.

Working at chi > physical dimension requires one dimension-lifting layer
at the bottom (a d^3 -> chi isometry with its own disentangler); the
scale-invariant layer above it is optimized against its own fixed point
from the first sweep.  Environments for the shared layer are accumulated
over ``scales`` RG images of the Hamiltonian, all evaluated in the fixed
point density, because the shared tensors appear at every scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ising_exact import PAULI_X, PAULI_Z
from .mera import (
    Layer,
    NetworkError,
    ScaleInvariantMera,
    ascend_two_site,
    channel_fixed_point,
    descend_one_site,
    descend_two_site,
    two_site_environment,
)
from .tensors import TensorError, as_tensor


class OptimizationError(RuntimeError):
    pass


@dataclass
class LocalHamiltonian:
    """Translation-invariant two-site term on a chain of ``dim``-state sites."""

    matrix: np.ndarray
    g: float = 1.0
    dim: int = 2

    def __post_init__(self):
        self.matrix = as_tensor(self.matrix)
        n = self.dim * self.dim
        if self.matrix.shape != (n, n):
            raise TensorError(f"two-site term must be {n}x{n}")
        herm = float(np.max(np.abs(self.matrix - self.matrix.conj().T)))
        if herm > 1e-12:
            raise TensorError(f"two-site term not Hermitian: {herm:.2e}")


@dataclass
class OptimizationReport:
    energies: list = field(default_factory=list)
    isometry_residuals: list = field(default_factory=list)
    sweeps: int = 0
    converged: bool = False
    reverted_sweeps: int = 0
    shift: float = 0.0
    fixed_point_iterations: list = field(default_factory=list)

    @property
    def final_energy(self):
        return self.energies[-1] if self.energies else None


def ising_critical_hamiltonian(g=1.0):
    """Critical transverse-field Ising two-site term, field split evenly."""
    eye = np.eye(2)
    h = (-np.kron(PAULI_X, PAULI_X)
         - 0.5 * g * (np.kron(PAULI_Z, eye) + np.kron(eye, PAULI_Z)))
    return LocalHamiltonian(h, g=g, dim=2)


def _shifted(h):
    lam = float(np.linalg.eigvalsh(h.matrix).max())
    return h.matrix - lam * np.eye(h.matrix.shape[0]), lam


def _update_isometry(env, shape, cols):
    """Minimize the energy linearized as sum(tensor * env) over isometries:
    with env = P S Q^dag, the minimizer is -conj(P) Q^T."""
    mat = env.reshape(-1, cols)
    p, _s, qh = np.linalg.svd(mat, full_matrices=False)
    new = -(p.conj() @ qh.conj())
    return new.reshape(shape)


def _block3_isometry(h2, chi):
    """Lowest-chi eigenbasis of the two-bond Hamiltonian on a 3-site block;
    a cheap, deterministic isometry seed."""
    d2 = h2.shape[0]
    d = int(round(np.sqrt(d2)))
    eye = np.eye(d)
    h3 = np.kron(h2, eye) + np.kron(eye, h2)
    _vals, vecs = np.linalg.eigh(0.5 * (h3 + h3.conj().T))
    return vecs[:, :chi].reshape(d, d, d, chi)


def _polar_unitary(m):
    u, _s, vh = np.linalg.svd(m)
    return u @ vh


def fixed_point_density(mera, tol=1e-12, maxiter=4000):
    """One- and two-site densities invariant under the descending channels
    of the scale-invariant layer."""
    layer = mera.layer
    rho1, _ = channel_fixed_point(lambda r: descend_one_site(r, layer),
                                  mera.chi, tol=tol, maxiter=maxiter)
    rho2, _ = channel_fixed_point(lambda r: descend_two_site(r, layer, cls="avg"),
                                  mera.chi ** 2, tol=tol, maxiter=maxiter)
    return rho1, rho2


def fixed_point_product_cap(mera, tol=1e-12):
    """Product cap whose single-site vector is the best rank-one
    approximation of the one-site fixed-point density.

    A finite-range construction built from a critical layer approximates
    the renormalized state at its top; the first basis vector is an
    arbitrary microstate, while the dominant eigenvector of the fixed
    point keeps the cap as close to the scale-invariant density as a
    product state can get, which is what the crossover comparisons
    presume.
    """
    rho1, _ = fixed_point_density(mera, tol=tol)
    vals, vecs = np.linalg.eigh(0.5 * (rho1 + rho1.conj().T))
    vec = vecs[:, -1]
    idx = int(np.argmax(np.abs(vec)))
    vec = vec / (vec[idx] / abs(vec[idx]))
    from .mera import CapState
    return CapState("product", vector=vec / np.linalg.norm(vec))


def energy_per_site(mera, h, rho2=None, tol=1e-11):
    """Tr(h rho_2) with rho_2 the bottom two-site density of the network."""
    if rho2 is None:
        _, rho2 = fixed_point_density(mera, tol=tol)
    if mera.lift is not None:
        rho_bottom = descend_two_site(rho2, mera.lift, cls="avg")
    else:
        rho_bottom = rho2
    if rho_bottom.shape != h.matrix.shape:
        raise NetworkError("Hamiltonian dimension does not match the network's "
                           "physical lattice")
    val = complex(np.trace(rho_bottom @ h.matrix))
    if abs(val.imag) > 1e-10:
        raise OptimizationError(f"energy has imaginary residue {val.imag:.3e}")
    return float(val.real)


def optimize(h, chi, sweeps=300, seed=0, b=3, scales=8, warmup=10, inner=2,
             conv_tol=1e-8, conv_window=5, fp_tol=1e-11, resume=None,
             checkpoint_every=None, checkpoint_path=None, verbose=False):
    """Minimize the energy of a ternary scale-invariant network.

    Returns ``(ScaleInvariantMera, OptimizationReport)``.  Deterministic
    per seed.  The network keeps real tensors: the target ground state has
    a real representation and real tensors halve the work.  ``resume``
    warm-starts from an existing network (warmup is skipped);
    ``checkpoint_every`` writes the serialized network plus report to
    ``checkpoint_path`` every N sweeps.
    """
    if b != 3:
        raise NetworkError("the optimizer supports ternary networks only")
    if chi < 2:
        raise NetworkError("chi must be at least 2")
    d = h.dim
    if chi > d ** 3:
        raise NetworkError(f"chi={chi} exceeds the one-layer lifting bound {d ** 3}")

    hshift, shift = _shifted(h)
    rng = np.random.default_rng(seed)

    if resume is not None:
        if resume.chi != chi:
            raise NetworkError("resume network has a different chi")
        layer, lift = resume.layer, resume.lift
        warmup = 0
    elif chi == d:
        lift = None
        w0 = _block3_isometry(hshift, chi)
        layer = Layer(_polar_unitary(np.eye(chi * chi)
                                     + 0.02 * _skew(rng, chi * chi)).reshape((chi,) * 4),
                      w0, b=3)
    else:
        wl = _block3_isometry(hshift, chi)
        lift = Layer(np.eye(d * d).reshape((d,) * 4), wl, b=3)
        h1 = ascend_two_site(hshift, lift)
        w0 = _block3_isometry(h1, chi)
        layer = Layer(_polar_unitary(np.eye(chi * chi)
                                     + 0.02 * _skew(rng, chi * chi)).reshape((chi,) * 4),
                      w0, b=3)

    report = OptimizationReport(shift=shift)
    rho2 = np.eye(chi * chi) / chi ** 2
    best = None

    def _energy(layer_, lift_, rho2_):
        rho_b = descend_two_site(rho2_, lift_, cls="avg") if lift_ is not None else rho2_
        return float(np.trace(rho_b @ hshift).real) + shift

    for sweep in range(sweeps):
        rho2, fp_iters = _refresh_fixed_point(layer, rho2, fp_tol)
        prev_layer, prev_lift = layer, lift

        if lift is not None:
            if sweep >= warmup:
                env_u0 = two_site_environment(rho2, hshift, lift, "u")
                u0 = _update_isometry(env_u0, lift.u.shape, d * d)
            else:
                u0 = lift.u
            env_w0 = two_site_environment(rho2, hshift,
                                          Layer(u0, lift.w, b=3), "w")
            w0 = _update_isometry(env_w0, lift.w.shape, chi)
            lift = Layer(u0, w0, b=3)
            h_base = ascend_two_site(hshift, lift)
        else:
            h_base = hshift

        # Each RG image of the Hamiltonian is re-shifted so its top
        # eigenvalue is zero: the coarse images otherwise approach a pure
        # negative multiple of the identity, whose only effect on the
        # linearized update is to freeze the tensors in place.
        ladder = [_reshift(h_base)]
        for _ in range(scales - 1):
            ladder.append(_reshift(ascend_two_site(ladder[-1], layer)))

        for it in range(max(inner, 1)):
            if sweep >= warmup:
                env_u = sum(two_site_environment(rho2, hk, layer, "u")
                            for hk in ladder)
                u = _update_isometry(env_u, layer.u.shape, chi * chi)
            else:
                u = layer.u
            trial = Layer(u, layer.w, b=3)
            env_w = sum(two_site_environment(rho2, hk, trial, "w")
                        for hk in ladder)
            w = _update_isometry(env_w, layer.w.shape, chi)
            layer = Layer(u, w, b=3)
            if it < inner - 1:
                ladder = [ladder[0]]
                for _ in range(scales - 1):
                    ladder.append(_reshift(ascend_two_site(ladder[-1], layer)))

        rho2, it2 = _refresh_fixed_point(layer, rho2, fp_tol)
        energy = _energy(layer, lift, rho2)

        if report.energies and energy > report.energies[-1] + 1e-9:
            layer, lift = prev_layer, prev_lift
            report.reverted_sweeps += 1
            energy = report.energies[-1]
            if _diverging(report):
                raise OptimizationError(
                    "energy diverged: repeated increases above 1e-6; "
                    f"report: {report.energies[-10:]}")
        report.energies.append(energy)
        resid = max(layer.unitary_residual(), layer.isometry_residual(),
                    lift.isometry_residual() if lift is not None else 0.0)
        report.isometry_residuals.append(resid)
        report.fixed_point_iterations.append(fp_iters + it2)
        report.sweeps = sweep + 1
        if verbose and (sweep % 20 == 0 or sweep == sweeps - 1):
            print(f"sweep {sweep:4d}  E = {energy:+.10f}")

        if checkpoint_every and checkpoint_path \
                and (sweep + 1) % checkpoint_every == 0:
            _write_checkpoint(checkpoint_path, chi, layer, lift, report, seed, h)

        if _converged(report.energies, conv_tol, conv_window):
            report.converged = True
            break

    mera = ScaleInvariantMera(chi, 3, layer, lift=lift,
                              meta={"seed": seed, "model_g": h.g,
                                    "energy": report.final_energy})
    mera.validate(tol=1e-11)
    return mera, report


def _skew(rng, n):
    a = rng.standard_normal((n, n))
    return a - a.T


def _write_checkpoint(path, chi, layer, lift, report, seed, h):
    from . import serialize as ser
    net = ScaleInvariantMera(chi, 3, layer, lift=lift,
                             meta={"seed": seed, "model_g": h.g,
                                   "energy": report.final_energy})
    ser.write_json(path, {
        "network": ser.network_to_json(net),
        "report": {
            "energies": [ser.fmt(e) for e in report.energies],
            "sweeps": report.sweeps,
            "converged": report.converged,
            "reverted_sweeps": report.reverted_sweeps,
        },
    })


def _reshift(h):
    hh = 0.5 * (h + h.conj().T)
    top = float(np.linalg.eigvalsh(hh).max())
    return hh - top * np.eye(hh.shape[0])


def _refresh_fixed_point(layer, start, tol, maxiter=3000):
    rho = start
    for it in range(maxiter):
        new = descend_two_site(rho, layer, cls="avg")
        new = 0.5 * (new + new.conj().T)
        new /= np.trace(new).real
        resid = float(np.max(np.abs(new - rho)))
        rho = new
        if resid < tol:
            return rho, it + 1
    raise OptimizationError(f"fixed-point iteration stalled at residual {resid:.2e}")


def _converged(energies, tol, window):
    if len(energies) <= window:
        return False
    ref = abs(energies[-1]) + 1e-30
    span = max(energies[-window - 1:]) - min(energies[-window - 1:])
    return span / ref < tol


def _diverging(report, threshold=1e-6, window=10):
    es = report.energies[-window:]
    return len(es) == window and es[-1] > min(es) + threshold
