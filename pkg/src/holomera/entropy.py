"""Block entanglement entropy of network states, minimal cuts through the
network geometry, and entropy-scaling fits.

Entropies are in nats.  Two exact evaluation routes:

* window descent (blocks within the dense budget): the block's reduced
  density is carried down the causal cone as a purified factor
  X[window legs, environment leg].  Each layer embeds the isometries of
  the coarse window, applies the interior disentanglers, folds freshly
  traced legs into the environment leg and recompresses it.  A boundary
  disentangler whose partner leg falls outside the window span acts on a
  fully traced pair and cancels, which is what keeps windows narrow.  The
  block spectrum is the squared singular spectrum of the final factor.

* matrix-product route (finite-range networks, long cell-aligned blocks):
  the block spectrum equals that of the Gram matrix of the purification
  over (left bond, enclosed cap environments, right bond).  A product cap
  contributes no environment legs; the maximally mixed cap contributes one
  chi-dimensional leg per enclosed cell, the source of extensive entropy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mera import (
    FiniteRangeMera,
    ScaleInvariantMera,
    channel_fixed_point,
    cone_window_path,
    descend_two_site,
)
from . import mps as mpslib

DENSE_BUDGET = 1 << 14
EIG_FLOOR = 1e-14
_GRAM_MEMORY = 600_000_000      # bytes allowed for the Gram sweep intermediate


class EntropyError(ValueError):
    pass


@dataclass
class EntropyCurve:
    lengths: np.ndarray
    entropies: np.ndarray
    cap: str = ""
    network_id: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lengths = np.asarray(self.lengths, dtype=float)
        self.entropies = np.asarray(self.entropies, dtype=float)
        if np.any(self.entropies < -1e-12):
            raise EntropyError("negative entropy sample")
        if not np.all(np.isfinite(self.entropies)):
            raise EntropyError("non-finite entropy sample")


def entropy_of_spectrum(p, floor=EIG_FLOOR):
    p = np.asarray(p, dtype=float)
    p = p[p > floor]
    if p.size == 0:
        return 0.0
    p = p / p.sum()
    return float(-np.sum(p * np.log(p)))


def entropy_of_density(rho, floor=EIG_FLOOR):
    vals = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    return entropy_of_spectrum(vals, floor)


def entropy_from_state(psi, n_sites, dim, block):
    """Entropy of a site subset of a dense pure state (brute-force oracle)."""
    psi = np.asarray(psi).reshape([dim] * n_sites)
    block = sorted(block)
    rest = [i for i in range(n_sites) if i not in block]
    mat = np.transpose(psi, block + rest).reshape(dim ** len(block), -1)
    s = np.linalg.svd(mat, compute_uv=False)
    return entropy_of_spectrum(s ** 2)


# ---------------------------------------------------------------------------
# factored window descent
# ---------------------------------------------------------------------------

class _Factor:
    """Purified window density: array legs are tagged sites plus a trailing
    untagged environment axis."""

    def __init__(self, array, sites):
        self.x = array
        self.sites = list(sites)
        assert array.ndim == len(self.sites) + 1

    def fold(self, site):
        ax = self.sites.index(site)
        self.x = np.moveaxis(self.x, ax, -1)
        shp = self.x.shape
        self.x = self.x.reshape(shp[:-2] + (shp[-2] * shp[-1],))
        del self.sites[ax]

    def compress(self, cutoff=1e-13, cap=256):
        aux = self.x.shape[-1]
        if aux <= cap:
            return
        shp = self.x.shape
        mat = self.x.reshape(-1, aux)
        u, s, _vh = np.linalg.svd(mat, full_matrices=False)
        keep = max(int(np.sum(s > cutoff * s[0])), 1) if s.size else 1
        self.x = (u[:, :keep] * s[:keep]).reshape(shp[:-1] + (keep,))

    def spectrum(self):
        mat = self.x.reshape(-1, self.x.shape[-1])
        s = np.linalg.svd(mat, compute_uv=False)
        return s ** 2


def _apply_gate(x, gate, ax):
    """Two-site gate on adjacent axes (ax, ax + 1)."""
    out = np.tensordot(gate, x, axes=([2, 3], [ax, ax + 1]))
    order = list(range(2, 2 + ax)) + [0, 1] + list(range(2 + ax, out.ndim))
    return np.transpose(out, order)


def _descend_window(factor, layer, coarse_lo, coarse_hi, keep_lo, keep_hi,
                    aux_cap=256, cutoff=1e-13):
    """One layer of factored descent: legs at coarse sites [coarse_lo,
    coarse_hi) become legs at the kept fine sites [keep_lo, keep_hi), all
    other fine legs folded into the environment axis."""
    span_lo, span_hi = 3 * coarse_lo, 3 * coarse_hi
    # the kept window's halo must stay inside the span, otherwise skipped
    # edge disentanglers would touch kept legs
    halo_lo = keep_lo - 1 if keep_lo % 3 == 0 else keep_lo
    halo_hi = keep_hi + 1 if (keep_hi - 1) % 3 == 2 else keep_hi
    if halo_lo < span_lo or halo_hi > span_hi:
        raise EntropyError("kept window's halo escapes the descent span")

    n = coarse_hi - coarse_lo
    pending = None
    for i in range(n):
        c = coarse_lo + i
        ax = factor.sites.index(("c", c))
        factor.x = np.tensordot(factor.x, layer.w, axes=(ax, layer.b))
        nd = factor.x.ndim
        order = list(range(nd - 3))
        order[ax:ax] = [nd - 3, nd - 2, nd - 1]
        factor.x = np.transpose(factor.x, order)
        factor.sites[ax:ax + 1] = [("f", 3 * c), ("f", 3 * c + 1),
                                   ("f", 3 * c + 2)]
        if pending is not None:
            pax = factor.sites.index(("f", 3 * c - 1))
            assert factor.sites[pax + 1] == ("f", 3 * c)
            factor.x = _apply_gate(factor.x, layer.u, pax)
        finals = [3 * c - 1] if pending is not None else []
        finals += [3 * c, 3 * c + 1]
        if i == n - 1:
            finals.append(3 * c + 2)
            pending = None
        else:
            pending = 3 * c + 2
        for site in finals:
            if keep_lo <= site < keep_hi:
                continue
            factor.fold(("f", site))
        factor.compress(cutoff=cutoff, cap=aux_cap)
    kept = [s for s in factor.sites]
    assert all(tag == "f" and keep_lo <= pos < keep_hi for tag, pos in kept)
    return factor


def _seed_scale_invariant(network, window, tol=1e-12):
    """Environment factor of the stable boundary pair of the cone: the
    eigen-factorization of the boundary-class descending fixed point."""
    layer = network.layer
    chi = network.chi
    sigma, _ = channel_fixed_point(
        lambda r: descend_two_site(r, layer, cls="M"), chi * chi, tol=tol)
    vals, vecs = np.linalg.eigh(0.5 * (sigma + sigma.conj().T))
    keep = vals > EIG_FLOOR
    x = (vecs[:, keep] * np.sqrt(vals[keep])).reshape(chi, chi, -1)
    lo = window[0]
    return _Factor(x, [("c", lo), ("c", lo + 1)])


def block_entropy(network, ell, offset=0, budget=DENSE_BUDGET, tol=1e-12):
    """Von Neumann entropy (nats) of ``ell`` contiguous bottom-lattice
    sites starting at ``offset``.

    Scale-invariant networks use the window descent seeded at the cone's
    stable boundary pair.  Finite-range networks use the window descent
    within the dense budget and the matrix-product route beyond it.
    """
    if ell <= 0:
        raise EntropyError("block length must be positive")
    if isinstance(network, ScaleInvariantMera):
        d0 = network.physical_dim
        if d0 ** ell > budget:
            raise EntropyError(
                f"block of {ell} sites at dimension {d0} exceeds the dense "
                "budget and a scale-invariant network has no matrix-product "
                "route")
        return _window_entropy_sci(network, ell, offset, tol)
    if isinstance(network, FiniteRangeMera):
        if network.chi ** ell <= budget:
            return _window_entropy_fr(network, ell, offset, tol)
        return mps_block_entropy(network, ell)
    raise EntropyError(f"unsupported network type {type(network).__name__}")


def _window_entropy_sci(network, ell, offset, tol):
    path = cone_window_path(offset, offset + ell, 48)
    top = None
    for j in range(1, len(path)):
        wlo, whi = path[j]
        if whi - wlo == 2 and wlo % 3 == 2 and path[j + 1] == path[j]:
            top = j
            break
    if top is None:
        raise EntropyError("cone window did not stabilize to a boundary pair")
    factor = _seed_scale_invariant(network, path[top], tol)
    for j in range(top, 0, -1):
        layer = network.lift if (j == 1 and network.lift is not None) \
            else network.layer
        factor.sites = [("c", pos) for _tag, pos in factor.sites]
        factor = _descend_window(factor, layer, path[j][0], path[j][1],
                                 path[j - 1][0], path[j - 1][1])
    return entropy_of_spectrum(factor.spectrum())


def _window_entropy_fr(network, ell, offset, tol):
    path = cone_window_path(offset, offset + ell, network.w_star)
    wlo, whi = path[-1]
    n_top = whi - wlo
    chi = network.chi
    if network.cap.kind == "product":
        x = np.ones((1,))
        for _ in range(n_top):
            x = np.kron(x, network.cap.vector)
        factor = _Factor(x.reshape((chi,) * n_top + (1,)),
                         [("c", wlo + k) for k in range(n_top)])
    else:
        dim = chi ** n_top
        x = (np.eye(dim) / np.sqrt(dim)).reshape((chi,) * n_top + (dim,))
        factor = _Factor(x, [("c", wlo + k) for k in range(n_top)])
    for j in range(network.w_star, 0, -1):
        factor.sites = [("c", pos) for _tag, pos in factor.sites]
        factor = _descend_window(factor, network.layers[j - 1],
                                 path[j][0], path[j][1],
                                 path[j - 1][0], path[j - 1][1])
    return entropy_of_spectrum(factor.spectrum())


# ---------------------------------------------------------------------------
# matrix-product route
# ---------------------------------------------------------------------------

def _psd_fix(mat):
    """Nearest positive-semidefinite version of an environment matrix."""
    m = 0.5 * (mat + mat.conj().T)
    if np.trace(m).real < 0:
        m = -m
    vals, vecs = np.linalg.eigh(m)
    vals = np.clip(vals.real, 0.0, None)
    return (vecs * vals) @ vecs.conj().T


def _herm_sqrt(mat):
    vals, vecs = np.linalg.eigh(0.5 * (mat + mat.conj().T))
    vals = np.clip(vals.real, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


def gram_block_offset(fr):
    """Lattice offset of the minimal-bond boundary the matrix-product
    entropy route uses for its cell-aligned blocks."""
    if fr.cap.kind == "product":
        m = mpslib.to_mps(fr)
    else:
        m = mpslib.purified_cell_mps(fr)
    bonds = [t.shape[0] for t in m.tensors]
    start = int(np.argmin(bonds))
    return sum(1 for i in range(start) if not m.anc[i])


def mps_block_entropy(fr, ell):
    """Entropy of a cell-aligned block of ``ell`` sites of a finite-range
    network, via the unit-cell matrix-product form.

    The block boundary is placed at the minimal-bond position inside the
    cell (``gram_block_offset``); the Gram sweep keeps the maximally mixed
    cap's environment legs open, one per enclosed cell.
    """
    xi = fr.xi
    if ell % xi != 0:
        raise EntropyError(f"matrix-product route needs cell-aligned blocks; "
                           f"{ell} is not a multiple of xi = {xi}")
    n_cells = ell // xi
    if fr.cap.kind == "product":
        m = mpslib.to_mps(fr)
    else:
        m = mpslib.purified_cell_mps(fr)

    # dominant left/right environments of the cell transfer
    t = mpslib.cell_transfer(m)
    lams, vecs = np.linalg.eig(t)
    k = int(np.argmax(np.abs(lams)))
    t1 = complex(lams[k])
    right = vecs[:, k]
    lams_l, vecs_l = np.linalg.eig(t.T)
    left = vecs_l[:, int(np.argmax(np.abs(lams_l)))]
    d = int(round(np.sqrt(t.shape[0])))
    gl = _psd_fix(left.reshape(d, d))
    if np.isrealobj(m.tensors[0]):
        gl = gl.real

    # rotate the cell so the block boundary sits at the smallest bond
    bonds = [tt.shape[0] for tt in m.tensors]
    start = int(np.argmin(bonds))
    tensors = m.tensors[start:] + m.tensors[:start]
    anc = m.anc[start:] + m.anc[:start]
    # propagate the left environment to the rotated boundary
    for i in range(start):
        e = mpslib._site_transfer(m.tensors[i])
        dl = m.tensors[i].shape[0] ** 2
        dr2 = m.tensors[i].shape[2] ** 2
        gl = (gl.reshape(-1) @ e.reshape(dl, dr2)).reshape(
            m.tensors[i].shape[2], m.tensors[i].shape[2])
        gl = _psd_fix(gl)
        if np.isrealobj(m.tensors[0]):
            gl = gl.real
    # right environment of the rotated transfer
    t_rot = None
    for tt in tensors:
        e = mpslib._site_transfer(tt).reshape(tt.shape[0] ** 2, tt.shape[2] ** 2)
        t_rot = e if t_rot is None else t_rot @ e
    lams_r, vecs_r = np.linalg.eig(t_rot)
    kr = int(np.argmax(np.abs(lams_r)))
    t1 = complex(lams_r[kr])
    dr = tensors[0].shape[0]
    gr = _psd_fix(vecs_r[:, kr].reshape(dr, dr))
    if np.isrealobj(tensors[0]):
        gr = gr.real

    # Gram sweep: e carries (kappa-compound, lambda-compound, l, l') with
    # the environment (ancilla) legs accumulated into the compounds
    gl_half = _herm_sqrt(gl)
    dl = tensors[0].shape[0]
    e = np.einsum("lk,mK->kKlm", gl_half.conj(), gl_half, optimize=True)
    mem_guard = _GRAM_MEMORY
    for _cell in range(n_cells):
        for i, tt in enumerate(tensors):
            if anc[i]:
                e = np.einsum("kKlm,lar,mbs->kaKbrs", e, tt.conj(), tt,
                              optimize=True)
                sh = e.shape
                e = e.reshape(sh[0] * sh[1], sh[2] * sh[3], sh[4], sh[5])
            else:
                e = np.einsum("kKlm,lpr,mps->kKrs", e, tt.conj(), tt,
                              optimize=True)
            if e.nbytes > mem_guard:
                raise EntropyError(
                    "Gram sweep intermediate exceeds the memory guard; "
                    "use a shorter block")
        e = e / abs(t1)
    gr_half = _herm_sqrt(gr)
    g = np.einsum("kKlm,lq,mQ->kqKQ", e, gr_half.conj(), gr_half,
                  optimize=True)
    sh = g.shape
    g = g.reshape(sh[0] * sh[1], sh[2] * sh[3])
    g = 0.5 * (g + g.conj().T)
    vals = np.linalg.eigvalsh(g)
    return entropy_of_spectrum(vals)


# ---------------------------------------------------------------------------
# scaling fits
# ---------------------------------------------------------------------------

def entropy_scaling_fit(curve, model, zstar=None):
    """Least-squares fit of an entropy curve.

    model 'log':             S = a log(l) + c
    model 'linear-plus-log': S = a (l / zstar) + c  with zstar known; the
        boundary term b log(zstar) of the two-scale form is a constant at
        fixed zstar and is absorbed into c (only their sum is
        identifiable from a single network).

    Returns a dict with coefficients, the per-site extensive coefficient,
    max residual, R^2 and a model-comparison score (residual sum of
    squares per degree of freedom).
    """
    ls = np.asarray(curve.lengths, dtype=float)
    ss = np.asarray(curve.entropies, dtype=float)
    if len(ls) < 4:
        raise EntropyError("scaling fits need at least 4 samples")
    if model == "log":
        a_mat = np.stack([np.log(ls), np.ones_like(ls)], axis=1)
    elif model == "linear-plus-log":
        if zstar is None or zstar <= 0:
            raise EntropyError("linear-plus-log model needs zstar")
        a_mat = np.stack([ls / zstar, np.ones_like(ls)], axis=1)
    else:
        raise EntropyError(f"unknown model {model!r}")
    coef, _res, _rank, _sv = np.linalg.lstsq(a_mat, ss, rcond=None)
    fit = a_mat @ coef
    resid = ss - fit
    tss = float(np.sum((ss - ss.mean()) ** 2))
    rss = float(np.sum(resid ** 2))
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    dof = max(len(ls) - 2, 1)
    out = {
        "model": model,
        "coefficient": float(coef[0]),
        "intercept": float(coef[1]),
        "max_residual": float(np.max(np.abs(resid))),
        "r_squared": float(r2),
        "score": rss / dof,
    }
    if model == "linear-plus-log":
        out["extensive_per_site"] = float(coef[0] / zstar)
        out["zstar"] = float(zstar)
    return out


# ---------------------------------------------------------------------------
# minimal cuts through the network graph
# ---------------------------------------------------------------------------

@dataclass
class CutReport:
    weight: float
    edges: list
    per_level: dict
    cap_sites_cut: int
    block: tuple


class _Dinic:
    def __init__(self):
        self.adj = {}
        self.edges = []

    def add(self, u, v, cap):
        self.adj.setdefault(u, []).append(len(self.edges))
        self.edges.append([u, v, cap])
        self.adj.setdefault(v, []).append(len(self.edges))
        self.edges.append([v, u, cap])      # undirected leg

    def max_flow(self, s, t):
        flow = 0.0
        while True:
            level = {s: 0}
            queue = [s]
            for u in queue:
                for ei in self.adj.get(u, []):
                    _u, v, cap = self.edges[ei]
                    if cap > 1e-12 and v not in level:
                        level[v] = level[u] + 1
                        queue.append(v)
            if t not in level:
                break
            it = {u: 0 for u in self.adj}

            def dfs(u, pushed):
                if u == t:
                    return pushed
                while it[u] < len(self.adj[u]):
                    ei = self.adj[u][it[u]]
                    _u, v, cap = self.edges[ei]
                    if cap > 1e-12 and level.get(v, -1) == level[u] + 1:
                        got = dfs(v, min(pushed, cap))
                        if got > 1e-12:
                            self.edges[ei][2] -= got
                            self.edges[ei ^ 1][2] += got
                            return got
                    it[u] += 1
                return 0.0

            while True:
                pushed = dfs(s, np.inf)
                if pushed <= 1e-12:
                    break
                flow += pushed
        reach = {s}
        queue = [s]
        for u in queue:
            for ei in self.adj.get(u, []):
                _u, v, cap = self.edges[ei]
                if cap > 1e-12 and v not in reach:
                    reach.add(v)
                    queue.append(v)
        return flow, reach


def cut_length(network, block, margin=None):
    """Minimal-weight set of network legs separating the block's causal
    cone from the rest; bond crossings count log(dim), maximally mixed cap
    sites count log(chi), product cap sites are free.

    Returns a CutReport; the weight upper-bounds the block entropy.
    """
    lo, hi = int(block[0]), int(block[1])
    if hi <= lo:
        raise EntropyError("block must be a nonempty (lo, hi) interval")
    if network.b != 3:
        raise EntropyError("cut search is implemented for ternary networks")

    if isinstance(network, FiniteRangeMera):
        levels = network.w_star
        cap_kind = network.cap.kind
        dims = [network.chi] * (levels + 1)
    else:
        path = cone_window_path(lo, hi, 40)
        levels = None
        for j in range(1, len(path)):
            if path[j + 1] == path[j]:
                levels = j + 2
                break
        if levels is None:
            raise EntropyError("cone did not stabilize")
        cap_kind = None
        dims = [network.physical_dim] + [network.chi] * levels

    margin = margin if margin is not None else max(6, (hi - lo))
    windows = cone_window_path(lo - margin, hi + margin, levels)

    graph = _Dinic()
    SRC, SNK = ("src",), ("snk",)

    def w_node(lvl, k):
        wlo, whi = windows[lvl]
        return ("w", lvl, k) if wlo <= k < whi else SNK

    for m in range(levels):
        wlo, whi = windows[m]
        weight = float(np.log(dims[m]))
        for q in range(wlo, whi):
            if q % 3 == 1:
                upper = w_node(m + 1, q // 3)
            elif q % 3 == 2:
                upper = ("u", m + 1, (q - 2) // 3)
            else:
                upper = ("u", m + 1, q // 3 - 1)
            if isinstance(upper, tuple) and upper[0] == "u":
                j = upper[2]
                pair = (3 * j + 2, 3 * j + 3)
                if not (wlo <= pair[0] < whi and wlo <= pair[1] < whi):
                    upper = SNK
            if m == 0:
                lower = SRC if lo <= q < hi else SNK
            else:
                lower = w_node(m, q)
            if lower == upper:
                continue
            graph.add(lower, upper, weight)
        # disentangler top legs
        for j in range((wlo - 3) // 3, whi // 3 + 1):
            pair = (3 * j + 2, 3 * j + 3)
            if not (wlo <= pair[0] < whi and wlo <= pair[1] < whi):
                continue
            graph.add(("u", m + 1, j), w_node(m + 1, j), weight)
            graph.add(("u", m + 1, j), w_node(m + 1, j + 1), weight)

    # top closure
    tlo, thi = windows[levels]
    cap_weight = float(np.log(network.chi))
    for k in range(tlo, thi):
        node = ("w", levels, k)
        if isinstance(network, FiniteRangeMera):
            if cap_kind == "maximally-mixed":
                graph.add(node, SNK, cap_weight)
            # product cap: dangling top leg, no edge
        else:
            graph.add(node, SNK, 1e6)

    weight, reach = graph.max_flow(SRC, SNK)
    cut_edges = []
    cap_cut = 0
    for ei in range(0, len(graph.edges), 2):
        u, v, _cap = graph.edges[ei]
        if (u in reach) != (v in reach):
            cut_edges.append((u, v))
            if v == SNK and isinstance(u, tuple) and u[0] == "w" \
                    and u[1] == levels:
                cap_cut += 1
    per_level: dict = {}
    for u, v in cut_edges:
        lvl = u[1] if isinstance(u, tuple) and len(u) == 3 else \
            (v[1] if isinstance(v, tuple) and len(v) == 3 else 0)
        per_level[lvl] = per_level.get(lvl, 0) + 1
    return CutReport(float(weight), cut_edges, per_level, cap_cut, (lo, hi))
