"""Layered isometric networks: construction, validation, one- and two-site
renormalization channels, causal-cone bookkeeping.

Geometry conventions (ternary, b = 3)
-------------------------------------

Coarse site k feeds the isometry ``w`` whose three fine legs sit on sites
(3k, 3k+1, 3k+2); disentanglers ``u`` act on the boundary pairs
(3k+2, 3k+3).  Center sites (index = 1 mod 3) are touched by no
disentangler, so a one-site operator on a center site renormalizes through
``w`` alone -- that closed channel is what ``ascend_one_site`` implements
for b = 3.

For b = 2 the disentangler sits inside the two-site block (coarse site k
-> ``w`` -> ``u`` -> fine sites (2k, 2k+1)), and one-site operators
renormalize through the average of the left and right placements.

Tensor layout
-------------

``u``: shape (d, d, d, d), legs (fine1, fine2, top1, top2); unitary as the
(d^2, d^2) matrix mapping tops to fines.
``w`` (b = 3): shape (d, d, d, chi), legs (fine1, fine2, fine3, coarse);
isometric as the (d^3, chi) matrix.
``w`` (b = 2): shape (d, d, chi).

Operators and density matrices on k sites are (dim^k, dim^k) matrices with
row = bra.  ``d`` (fine) and ``chi`` (coarse) may differ, which is how a
physical-dimension lattice is lifted to the working bond dimension.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensors import (
    as_tensor,
    isometry_residual,
    random_isometry,
    random_unitary,
)

ISOMETRY_TOL = 1e-12


class NetworkError(ValueError):
    """Raised for invalid network construction or channel input."""


# ---------------------------------------------------------------------------
# small einsum-network engine
#
# A channel is written once as a list of terms (name, slot, conj, labels);
# the scalar value, the ascended operator, the descended density and every
# optimization environment are all read off the same term list, which keeps
# the adjoint pairs consistent by construction.
# ---------------------------------------------------------------------------

_PATH_CACHE = {}


def _einsum_cached(cache_key, args):
    path = _PATH_CACHE.get(cache_key)
    if path is None:
        # the default memory cap (largest input) forces terrible orderings
        # on these networks; intermediates here stay below chi^8 anyway.
        # exhaustive path search is affordable up to ~8 tensors; beyond
        # that greedy is near-optimal at these sizes and avoids the
        # combinatorial search
        n_terms = (len(args) - 1) // 2
        method = "optimal" if n_terms <= 8 else "greedy"
        path, _ = np.einsum_path(*args, optimize=(method, 1 << 26))
        _PATH_CACHE[cache_key] = path
    return np.einsum(*args, optimize=path)


def _net_scalar(terms, tensors):
    args = []
    shapes = []
    for name, _slot, conj, labels in terms:
        arr = tensors[name]
        args.append(arr.conj() if conj else arr)
        args.append(list(labels))
        shapes.append(arr.shape)
    args.append([])
    return _einsum_cached((id(terms), None, tuple(shapes)), args)


def _net_env(terms, tensors, name, slot):
    """Contraction of every term except (name, slot); output carries that
    term's labels.  This is the derivative of the scalar with respect to
    the removed (non-conjugated) slot."""
    args = []
    shapes = []
    out = None
    for tname, tslot, conj, labels in terms:
        if tname == name and tslot == slot:
            out = list(labels)
            continue
        arr = tensors[tname]
        args.append(arr.conj() if conj else arr)
        args.append(list(labels))
        shapes.append(arr.shape)
    if out is None:
        raise KeyError(f"no term ({name}, {slot}) in network")
    args.append(out)
    return _einsum_cached((id(terms), (name, slot), tuple(shapes)), args)


# Term lists for the two-site channels.  Scalars evaluate Tr[rho_coarse *
# Ascend_cls(h_fine)].  rho is stored 4-leg [s,t,S,T] with (s,t) the bra
# pair; operators 4-leg [r1,r2,c1,c2] with (r1,r2) the bra pair.
#
# b = 3 classes, named for where the fine bond sits inside a block:
#   'L': bond (3k, 3k+1)     coarse support (k-1, k)
#   'M': bond (3k+2, 3k+3)   coarse support (k, k+1)   (the disentangler pair)
#   'R': bond (3k+1, 3k+2)   coarse support (k, k+1)

_TERNARY_2SITE = {
    "M": [
        ("rho", 0, False, (0, 1, 2, 3)),
        ("w", 0, True, (4, 5, 6, 2)),
        ("u", 0, True, (8, 9, 6, 7)),
        ("h", 0, False, (8, 9, 10, 11)),
        ("u", 1, False, (10, 11, 12, 13)),
        ("w", 1, False, (4, 5, 12, 0)),
        ("w", 2, True, (7, 14, 15, 3)),
        ("w", 3, False, (13, 14, 15, 1)),
    ],
    "R": [
        ("rho", 0, False, (0, 1, 2, 3)),
        ("w", 0, True, (4, 5, 6, 2)),
        ("u", 0, True, (8, 9, 6, 7)),
        ("h", 0, False, (5, 8, 10, 11)),
        ("u", 1, False, (11, 9, 12, 13)),
        ("w", 1, False, (4, 10, 12, 0)),
        ("w", 2, True, (7, 14, 15, 3)),
        ("w", 3, False, (13, 14, 15, 1)),
    ],
    "L": [
        ("rho", 0, False, (0, 1, 2, 3)),
        ("w", 0, True, (4, 5, 6, 2)),
        ("u", 0, True, (8, 9, 6, 7)),
        ("h", 0, False, (9, 10, 11, 12)),
        ("u", 1, False, (8, 11, 13, 14)),
        ("w", 1, False, (4, 5, 13, 0)),
        ("w", 2, True, (7, 10, 15, 3)),
        ("w", 3, False, (14, 12, 15, 1)),
    ],
}

# b = 2: 'B' is the block-boundary bond (2k+1, 2k+2) which stays two-site;
# 'I' is the in-block bond (2k, 2k+1) which renormalizes to one site.

_BINARY_2SITE_B = [
    ("rho", 0, False, (0, 1, 2, 3)),
    ("w", 0, True, (4, 5, 2)),
    ("u", 0, True, (6, 7, 4, 5)),
    ("w", 2, True, (8, 9, 3)),
    ("u", 2, True, (10, 11, 8, 9)),
    ("h", 0, False, (7, 10, 12, 13)),
    ("u", 1, False, (6, 12, 14, 15)),
    ("u", 3, False, (13, 11, 16, 17)),
    ("w", 1, False, (14, 15, 0)),
    ("w", 3, False, (16, 17, 1)),
]

_BINARY_2SITE_I = [
    ("rho", 0, False, (0, 1)),
    ("w", 0, True, (2, 3, 1)),
    ("u", 0, True, (4, 5, 2, 3)),
    ("h", 0, False, (4, 5, 6, 7)),
    ("u", 1, False, (6, 7, 8, 9)),
    ("w", 1, False, (8, 9, 0)),
]

# one-site channels

_TERNARY_1SITE = [
    ("rho", 0, False, (0, 1)),
    ("w", 0, True, (2, 3, 4, 1)),
    ("op", 0, False, (3, 5)),
    ("w", 1, False, (2, 5, 4, 0)),
]

_BINARY_1SITE_L = [
    ("rho", 0, False, (0, 1)),
    ("w", 0, True, (2, 3, 1)),
    ("u", 0, True, (4, 5, 2, 3)),
    ("op", 0, False, (4, 6)),
    ("u", 1, False, (6, 5, 7, 8)),
    ("w", 1, False, (7, 8, 0)),
]

_BINARY_1SITE_R = [
    ("rho", 0, False, (0, 1)),
    ("w", 0, True, (2, 3, 1)),
    ("u", 0, True, (4, 5, 2, 3)),
    ("op", 0, False, (5, 6)),
    ("u", 1, False, (4, 6, 7, 8)),
    ("w", 1, False, (7, 8, 0)),
]


# ---------------------------------------------------------------------------
# network data types
# ---------------------------------------------------------------------------

@dataclass
class Layer:
    """One renormalization layer: disentangler ``u`` plus isometry ``w``."""

    u: np.ndarray
    w: np.ndarray
    b: int = 3
    dim_in: int = 0    # fine dimension d
    dim_out: int = 0   # coarse dimension chi

    def __post_init__(self):
        self.u = as_tensor(self.u)
        self.w = as_tensor(self.w)
        if self.b not in (2, 3):
            raise NetworkError(f"unsupported branching factor b={self.b}")
        d = self.u.shape[0]
        if self.u.shape != (d, d, d, d):
            raise NetworkError(f"u has shape {self.u.shape}, expected rank-4 ({d},)*4")
        expect_w = (d,) * self.b
        if self.w.shape[:self.b] != expect_w:
            raise NetworkError(
                f"w fine legs {self.w.shape[:self.b]} do not match u dimension {d}")
        chi = self.w.shape[self.b]
        self.dim_in = d
        self.dim_out = chi

    def validate(self, tol=ISOMETRY_TOL):
        ru = self.unitary_residual()
        rw = self.isometry_residual()
        if ru > tol:
            raise NetworkError(f"disentangler not unitary: residual {ru:.3e}")
        if rw > tol:
            raise NetworkError(f"isometry residual {rw:.3e} exceeds {tol:.0e}")

    def unitary_residual(self):
        d = self.dim_in
        um = self.u.reshape(d * d, d * d)
        return max(isometry_residual(um), isometry_residual(um.conj().T))

    def isometry_residual(self):
        return isometry_residual(self.w_matrix())

    def w_matrix(self):
        return self.w.reshape(self.dim_in ** self.b, self.dim_out)

    def tensors(self):
        return {"u": self.u, "w": self.w}


@dataclass
class CapState:
    """Top state of a finite-range network: an uncorrelated product of a
    single-site vector, or the maximally mixed state on every top site."""

    kind: str = "product"
    vector: np.ndarray | None = None
    dim: int = 0

    def __post_init__(self):
        if self.kind not in ("product", "maximally-mixed"):
            raise NetworkError(f"unknown cap kind {self.kind!r}")
        if self.kind == "product":
            if self.vector is None:
                if not self.dim:
                    raise NetworkError("product cap needs a vector or a dimension")
                v = np.zeros(self.dim)
                v[0] = 1.0
                self.vector = v
            self.vector = as_tensor(self.vector)
            self.dim = self.vector.shape[0]
            nrm = float(np.linalg.norm(self.vector))
            if abs(nrm - 1.0) > ISOMETRY_TOL:
                raise NetworkError(f"product cap vector has norm {nrm!r}")
        else:
            if not self.dim:
                raise NetworkError("maximally-mixed cap needs a dimension")
            self.vector = None

    def site_density(self):
        if self.kind == "product":
            return np.outer(self.vector, self.vector.conj())
        return np.eye(self.dim) / self.dim

    def pair_density(self):
        rho = self.site_density()
        return np.kron(rho, rho)


@dataclass
class ScaleInvariantMera:
    """A single layer reused at every scale.  ``lift`` optionally adapts a
    physical lattice of smaller site dimension to the working chi."""

    chi: int
    b: int
    layer: Layer
    lift: Layer | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.layer.dim_in != self.chi or self.layer.dim_out != self.chi:
            raise NetworkError("scale-invariant layer must map chi -> chi")
        if self.layer.b != self.b:
            raise NetworkError("layer branching factor mismatch")
        if self.lift is not None:
            if self.lift.dim_out != self.chi or self.lift.b != self.b:
                raise NetworkError("lift layer must map the physical lattice to chi")

    @property
    def physical_dim(self):
        return self.lift.dim_in if self.lift is not None else self.chi

    def validate(self, tol=ISOMETRY_TOL):
        self.layer.validate(tol)
        if self.lift is not None:
            self.lift.validate(tol)


@dataclass
class FiniteRangeMera:
    """Finitely many layers capped by an uncorrelated top state.

    The standard construction reuses one scale-invariant layer ``w_star``
    times, so the network's characteristic length is xi = b ** w_star.
    """

    chi: int
    b: int
    layers: list
    cap: CapState
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.layers) < 1:
            raise NetworkError("finite-range network needs at least one layer")
        for lay in self.layers:
            if lay.dim_in != self.chi or lay.dim_out != self.chi:
                raise NetworkError("finite-range layers must map chi -> chi")
            if lay.b != self.b:
                raise NetworkError("layer branching factor mismatch")
        if self.cap.dim != self.chi:
            raise NetworkError("cap dimension must equal chi")

    @property
    def w_star(self):
        return len(self.layers)

    @property
    def xi(self):
        return self.b ** self.w_star

    def validate(self, tol=ISOMETRY_TOL):
        for lay in self.layers:
            lay.validate(tol)


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def random_layer(chi, b=3, seed=None, real=False, dim_in=None):
    d = chi if dim_in is None else dim_in
    rng = np.random.default_rng(seed)
    u = random_unitary(d * d, seed=rng.integers(2 ** 31), real=real)
    w = random_isometry(d ** b, chi, seed=rng.integers(2 ** 31), real=real)
    return Layer(u.reshape((d,) * 4), w.reshape((d,) * b + (chi,)), b=b)


def identity_layer(chi, b=3):
    """u = identity, w = center embedding |c> -> |0, c, 0> (b=3) or
    |c> -> |c, 0> (b=2).  Useful as a fixture: its one-site descending
    channel is the identity map."""
    u = np.eye(chi * chi).reshape((chi,) * 4)
    w = np.zeros((chi,) * b + (chi,))
    if b == 3:
        for c in range(chi):
            w[0, c, 0, c] = 1.0
    else:
        for c in range(chi):
            w[c, 0, c] = 1.0
    return Layer(u, w, b=b)


def build_scale_invariant(chi, b=3, seed=None, real=False):
    """Random scale-invariant network; deterministic per seed."""
    if chi < 2:
        raise NetworkError("chi must be at least 2")
    if b not in (2, 3):
        raise NetworkError(f"unsupported branching factor b={b}")
    layer = random_layer(chi, b=b, seed=seed, real=real)
    mera = ScaleInvariantMera(chi, b, layer)
    mera.validate()
    return mera


def build_finite_range(chi, b, w_star, cap="product", seed=None, layer=None,
                       real=False):
    """Finite-range network whose ``w_star`` layers all equal one
    scale-invariant layer (random per seed unless ``layer`` is given)."""
    if w_star < 1:
        raise NetworkError("w_star must be at least 1")
    if layer is None:
        layer = random_layer(chi, b=b, seed=seed, real=real)
    if isinstance(cap, str):
        cap = CapState(kind=cap, dim=chi)
    fr = FiniteRangeMera(chi, b, [layer] * w_star, cap)
    fr.validate()
    return fr


def finite_range_from_scale_invariant(mera, w_star, cap="product"):
    if isinstance(cap, str):
        cap = CapState(kind=cap, dim=mera.chi)
    fr = FiniteRangeMera(mera.chi, mera.b, [mera.layer] * w_star, cap)
    fr.meta = dict(mera.meta)
    return fr


# ---------------------------------------------------------------------------
# channels
# ---------------------------------------------------------------------------

def _as_pair_tensor(x, d1, d2):
    x = as_tensor(x)
    if x.shape == (d1 * d2, d1 * d2):
        return x.reshape(d1, d2, d1, d2)
    if x.shape == (d1, d2, d1, d2):
        return x
    raise NetworkError(f"two-site object has shape {x.shape}, expected "
                       f"({d1 * d2},{d1 * d2}) or ({d1},{d2},{d1},{d2})")


def ascend_one_site(op, layer):
    """One RG step on a one-site operator; linear, unital for a valid layer.

    b = 3: the center-site channel w^dag (1 x op x 1) w.
    b = 2: average of the left and right in-block placements.
    """
    op = as_tensor(op)
    d = layer.dim_in
    if op.shape != (d, d):
        raise NetworkError(f"operator shape {op.shape} does not match fine dim {d}")
    tensors = dict(layer.tensors())
    tensors["op"] = op
    if layer.b == 3:
        out = _net_env(_TERNARY_1SITE, tensors, "rho", 0)
    else:
        out = 0.5 * (_net_env(_BINARY_1SITE_L, tensors, "rho", 0)
                     + _net_env(_BINARY_1SITE_R, tensors, "rho", 0))
    # env over the rho slot [s, S] is the ascended operator transposed
    return out.T


def descend_one_site(rho, layer):
    """Adjoint of ``ascend_one_site``: coarse one-site density to fine."""
    rho = as_tensor(rho)
    chi = layer.dim_out
    if rho.shape != (chi, chi):
        raise NetworkError(f"density shape {rho.shape} does not match chi {chi}")
    tensors = dict(layer.tensors())
    tensors["rho"] = rho
    if layer.b == 3:
        out = _net_env(_TERNARY_1SITE, tensors, "op", 0)
    else:
        out = 0.5 * (_net_env(_BINARY_1SITE_L, tensors, "op", 0)
                     + _net_env(_BINARY_1SITE_R, tensors, "op", 0))
    return out.T


def two_site_classes(b):
    return ("L", "M", "R") if b == 3 else ("B",)


def ascend_two_site(h, layer, cls="avg"):
    """One RG step on a two-site (bond) operator.

    ``cls`` picks the bond position class; 'avg' averages all classes,
    which maps the translation-invariant bond operator at one scale to the
    next while preserving energy-per-original-site accounting.
    """
    d = layer.dim_in
    h4 = _as_pair_tensor(h, d, d)
    tensors = dict(layer.tensors())
    tensors["h"] = h4
    chi = layer.dim_out
    if layer.b == 3:
        if cls == "avg":
            out = sum(_net_env(_TERNARY_2SITE[c], tensors, "rho", 0)
                      for c in ("L", "M", "R")) / 3.0
        else:
            out = _net_env(_TERNARY_2SITE[cls], tensors, "rho", 0)
    else:
        if cls not in ("B", "avg"):
            raise NetworkError(f"unknown binary two-site class {cls!r}")
        out = _net_env(_BINARY_2SITE_B, tensors, "rho", 0)
    # env over rho[s,t,S,T] is A[(S,T),(s,t)] -> reorder to row-first 4-leg
    a4 = np.transpose(out, (2, 3, 0, 1))
    return a4.reshape(chi * chi, chi * chi)


def descend_two_site(rho, layer, cls="avg"):
    """Adjoint of ``ascend_two_site``: coarse pair density to fine pair."""
    chi = layer.dim_out
    rho4 = _as_pair_tensor(rho, chi, chi)
    tensors = dict(layer.tensors())
    tensors["rho"] = rho4
    d = layer.dim_in
    if layer.b == 3:
        if cls == "avg":
            out = sum(_net_env(_TERNARY_2SITE[c], tensors, "h", 0)
                      for c in ("L", "M", "R")) / 3.0
        else:
            out = _net_env(_TERNARY_2SITE[cls], tensors, "h", 0)
    else:
        if cls not in ("B", "avg"):
            raise NetworkError(f"unknown binary two-site class {cls!r}")
        out = _net_env(_BINARY_2SITE_B, tensors, "h", 0)
    s4 = np.transpose(out, (2, 3, 0, 1))
    return s4.reshape(d * d, d * d)


def _check_density(rho, tol=1e-10):
    herm = float(np.max(np.abs(rho - rho.conj().T)))
    tr = complex(np.trace(rho))
    if herm > tol or abs(tr - 1.0) > max(tol, 1e-8):
        raise NetworkError(
            f"not a density matrix: hermiticity {herm:.2e}, trace {tr:.6f}")
    evals = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    if float(evals.min()) < -tol:
        raise NetworkError(f"density has negative eigenvalue {evals.min():.2e}")


def descend_density(rho, layer, check=True):
    """Descend a one- or two-site density matrix through a layer.

    The adjoint pairing Tr[ascend(O) rho] = Tr[O descend(rho)] holds with
    ``ascend_one_site`` for one site and with the matching two-site channel
    average for two sites.
    """
    rho = as_tensor(rho)
    chi = layer.dim_out
    if rho.ndim == 4:
        rho = rho.reshape(rho.shape[0] * rho.shape[1], -1)
    if rho.shape == (chi, chi):
        if check:
            _check_density(rho)
        return descend_one_site(rho, layer)
    if rho.shape == (chi * chi, chi * chi):
        if check:
            _check_density(rho)
        return descend_two_site(rho, layer, cls="avg")
    raise NetworkError(f"density shape {rho.shape} matches neither one nor two "
                       f"sites at chi={chi}")


def channel_fixed_point(step, dim, tol=1e-12, maxiter=4000):
    """Power-iterate a trace-preserving channel from the maximally mixed
    state; returns the Hermitian unit-trace fixed point."""
    rho = np.eye(dim) / dim
    for it in range(maxiter):
        new = step(rho)
        new = 0.5 * (new + new.conj().T)
        new = new / np.trace(new).real
        resid = float(np.max(np.abs(new - rho)))
        rho = new
        if resid < tol:
            return rho, it + 1
    raise NetworkError(
        f"channel fixed point did not converge below {tol:.0e} in "
        f"{maxiter} iterations (residual {resid:.3e})")


# environments for the optimizer ------------------------------------------------

def two_site_energy(rho, h, layer, cls):
    chi = layer.dim_out
    d = layer.dim_in
    tensors = dict(layer.tensors())
    tensors["rho"] = _as_pair_tensor(rho, chi, chi)
    tensors["h"] = _as_pair_tensor(h, d, d)
    net = _TERNARY_2SITE[cls] if layer.b == 3 else _BINARY_2SITE_B
    return _net_scalar(net, tensors)


def two_site_environment(rho, h, layer, which):
    """Sum over position classes of the derivative of
    Tr[rho Ascend(h)] with respect to the unconjugated ``u`` or ``w`` slots.

    Returned with tensor-shaped legs, one array matching ``layer.u`` or
    ``layer.w``.  Only b = 3 is supported (the optimizer is ternary)."""
    if layer.b != 3:
        raise NetworkError("environments are implemented for ternary layers")
    chi = layer.dim_out
    d = layer.dim_in
    tensors = dict(layer.tensors())
    tensors["rho"] = _as_pair_tensor(rho, chi, chi)
    tensors["h"] = _as_pair_tensor(h, d, d)
    slots = {"u": [1], "w": [1, 3]}[which]
    env = None
    for cls in ("L", "M", "R"):
        for slot in slots:
            e = _net_env(_TERNARY_2SITE[cls], tensors, which, slot)
            env = e if env is None else env + e
    return env / 3.0


# ---------------------------------------------------------------------------
# causal cones
# ---------------------------------------------------------------------------

def _halo(sites, b):
    out = set(sites)
    if b == 3:
        for s in sites:
            m = s % 3
            if m == 2:
                out.add(s + 1)
            elif m == 0:
                out.add(s - 1)
    return out


def cone_step(sites, b):
    """Support on the next-coarser lattice of the causal cone of ``sites``."""
    return {s // b for s in _halo(sites, b)}


def causal_cone_sites(sites, depth, b=3):
    """Per-level supports of the causal cone, levels 0..depth."""
    cur = set(int(s) for s in sites)
    if not cur:
        raise NetworkError("causal cone of an empty site set")
    levels = [frozenset(cur)]
    for _ in range(depth):
        cur = cone_step(cur, b)
        levels.append(frozenset(cur))
    return levels


def merge_level(x, y, b=3, max_depth=64):
    """First level at which the cones of two sites touch (supports overlap
    or become adjacent)."""
    cx, cy = {int(x)}, {int(y)}
    for level in range(max_depth + 1):
        if min(abs(a - c) for a in cx for c in cy) <= 1:
            return level
        cx = cone_step(cx, b)
        cy = cone_step(cy, b)
    raise NetworkError(f"cones did not merge within {max_depth} levels")


def cone_window_path(lo, hi, levels, b=3):
    """Contiguous per-level windows [lo, hi) whose marginals determine the
    level-0 window: each coarser window covers the halo of the finer one."""
    path = [(int(lo), int(hi))]
    for _ in range(levels):
        wlo, whi = path[-1]
        sites = _halo(set(range(wlo, whi)), b)
        plo = min(sites) // b
        phi = max(sites) // b + 1
        path.append((plo, phi))
    return path


def aligned_pair_sites(q, b=3):
    """Lattice positions (x, y) at separation b**q whose one-site cones stay
    one column wide for q levels and land on adjacent coarse sites.

    For b = 3 these are the sites whose base-3 digits are all 1.
    """
    if b == 3:
        x = (3 ** q - 1) // 2
    else:
        x = 2 ** q - 1  # all-ones in base 2: always the right in-block leg
    return x, x + b ** q
