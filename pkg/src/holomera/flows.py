"""Two-point correlator flows: direct network evaluation, closed-form flow
laws, and finite-difference residuals of the flow equations.

Separations are sampled at r = b**q on channel-aligned positions (base-b
digits all 1, see ``mera.aligned_pair_sites``): each operator then
renormalizes through the one-site channel q times, after which the pair
sits on adjacent sites whose joint environment is position-class exact.
With z = b**w = r, eigen-operator correlators obey

    C(z) = z**-eta * C(1),    eta = Delta_a + Delta_b,

which solves (z d/dz + eta) C = 0.  Residuals of that flow operator are
formed with centered differences of log C against log z, so any exact
power law is annihilated to rounding accuracy regardless of step size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mera import (
    FiniteRangeMera,
    ScaleInvariantMera,
    aligned_pair_sites,
    ascend_one_site,
    channel_fixed_point,
    descend_two_site,
)

VALUE_FLOOR = 1e-300


class FlowError(ValueError):
    pass


@dataclass
class FlowCurve:
    """Sampled correlator (or other scale-resolved quantity) versus z >= 1."""

    z: np.ndarray
    values: np.ndarray
    eta: float | None = None
    alpha: int | None = None
    beta: int | None = None
    network_id: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.z.ndim != 1 or self.z.shape != self.values.shape:
            raise FlowError("z and values must be matching 1-d arrays")
        if np.any(np.diff(self.z) <= 0):
            raise FlowError("z samples must be strictly increasing")
        if not (np.all(np.isfinite(self.z)) and np.all(np.isfinite(self.values))):
            raise FlowError("flow curve contains non-finite samples")

    def __len__(self):
        return len(self.z)


@dataclass
class CrossoverFit:
    power_exponent: float
    power_window: tuple
    power_residual: float
    exp_rate: float
    exp_window: tuple
    exp_residual: float
    crossover_scale: float
    exp_window_ok: bool
    dropped_below_floor: int = 0


# ---------------------------------------------------------------------------
# direct evaluation
# ---------------------------------------------------------------------------

def pair_base_density(network, levels_up=0, tol=1e-12):
    """Joint density of the adjacent aligned pair, ``levels_up`` layers above
    the bottom of the network.

    The aligned pair (0, 1) has a causal cone that closes onto the boundary
    pair (-1, 0), which maps to itself one level up; its density is the
    fixed point of the boundary-class descending channel for a
    scale-invariant network, and the cap state descended w* - levels_up
    times for a finite-range one.
    """
    if isinstance(network, ScaleInvariantMera):
        layer = network.layer
        sigma, _ = channel_fixed_point(
            lambda r: descend_two_site(r, layer, cls="M"),
            network.chi ** 2, tol=tol)
        return descend_two_site(sigma, layer, cls="L")
    if isinstance(network, FiniteRangeMera):
        depth = network.w_star - levels_up
        if depth < 0:
            raise FlowError("levels_up exceeds the network depth")
        rho = network.cap.pair_density()
        if depth == 0:
            return rho
        for j in range(depth - 1):
            rho = descend_two_site(rho, network.layers[network.w_star - 1 - j],
                                   cls="M")
        return descend_two_site(rho, network.layers[levels_up], cls="L")
    raise FlowError(f"unsupported network type {type(network).__name__}")


def _dense_window_correlator(network, phi_a, phi_b, r, budget=1 << 20):
    """Arbitrary-separation correlator by brute-force contraction of an
    open window wide enough that its bulk matches the infinite chain
    (finite-depth circuits have a strict causal range)."""
    from .mps import MpsError, dense_finite_range_state
    xi = network.xi
    pad = 2 * xi
    n_cells = (r + 1 + 2 * pad + xi - 1) // xi
    n_sites = n_cells * xi
    if network.chi ** n_sites > budget:
        raise FlowError(
            f"separation {r} needs a {n_sites}-site window at chi="
            f"{network.chi}, beyond the full-contraction budget; supported "
            "off-grid separations are small windows only")
    try:
        psi = dense_finite_range_state(network, n_cells, budget=budget)
    except MpsError as err:
        raise FlowError(str(err)) from err
    chi = network.chi
    psi = psi.reshape((chi,) * n_sites)
    x = pad
    y = pad + r
    perm = [x, y] + [i for i in range(n_sites) if i not in (x, y)]
    mat = np.transpose(psi, perm).reshape(chi * chi, -1)
    rho2 = mat @ mat.conj().T
    rho2 /= np.trace(rho2)
    return complex(np.trace(rho2 @ np.kron(phi_a, phi_b)))


def _site_expectation(network, op, q):
    """<op> on an aligned site after q renormalization steps (finite-range
    networks only; used for separations beyond the cap)."""
    cur = np.asarray(op)
    for j in range(min(q, network.w_star)):
        cur = ascend_one_site(cur, network.layers[j])
    v = network.cap.site_density()
    return complex(np.trace(v @ cur))


def correlator_direct(network, phi_a, phi_b, r, tol=1e-12):
    """<phi_a(x) phi_b(y)> at separation r = b**q on aligned positions.

    Both operators renormalize through the one-site channel once per level
    until adjacent, then meet the pair density of the enclosing network.
    For finite-range networks with r > xi the residual separation at the
    cap leaves the two operators on uncorrelated cap sites.  Separations
    off the b**q grid are supported for finite-range networks only, by
    full contraction of a small open window.
    """
    b = network.b
    if b != 3:
        raise FlowError("direct correlator evaluation is ternary-only")
    chi = network.chi
    phi_a = np.asarray(phi_a)
    phi_b = np.asarray(phi_b)
    if phi_a.shape != (chi, chi) or phi_b.shape != (chi, chi):
        raise FlowError("operator dimension does not match the network")
    q = int(round(np.log(r) / np.log(b)))
    if b ** q != r or r < 1:
        if r >= 1 and isinstance(network, FiniteRangeMera):
            return _dense_window_correlator(network, phi_a, phi_b, int(r))
        raise FlowError(f"separation {r} is not a power of b={b} and only "
                        "finite-range networks support off-grid windows")

    if isinstance(network, ScaleInvariantMera):
        a, bop = phi_a, phi_b
        for _ in range(q):
            a = ascend_one_site(a, network.layer)
            bop = ascend_one_site(bop, network.layer)
        rho = pair_base_density(network, tol=tol)
        val = complex(np.trace(rho @ np.kron(a, bop)))
        return val

    if isinstance(network, FiniteRangeMera):
        w_star = network.w_star
        if q <= w_star:
            a, bop = phi_a, phi_b
            for j in range(q):
                a = ascend_one_site(a, network.layers[j])
                bop = ascend_one_site(bop, network.layers[j])
            rho = pair_base_density(network, levels_up=q, tol=tol)
            return complex(np.trace(rho @ np.kron(a, bop)))
        # operators end up on cap sites separated by b**(q - w*) > 1:
        # the cap is a site-wise product, so the expectation factorizes
        return _site_expectation(network, phi_a, q) * _site_expectation(
            network, phi_b, q)

    raise FlowError(f"unsupported network type {type(network).__name__}")


def measure_flow_curve(network, dec, alpha, beta=None, qs=(0, 1, 2, 3, 4),
                       network_id="", tol=1e-12):
    """FlowCurve of |C| for a pair of eigen-operators at z = b**q."""
    beta = alpha if beta is None else beta
    phi_a = dec.operators[alpha]
    phi_b = dec.operators[beta]
    eta = float(dec.dimensions[alpha] + dec.dimensions[beta])
    z, vals = [], []
    for q in qs:
        c = correlator_direct(network, phi_a, phi_b, network.b ** q, tol=tol)
        z.append(float(network.b ** q))
        vals.append(abs(c))
    return FlowCurve(np.array(z), np.array(vals), eta=eta, alpha=alpha,
                     beta=beta, network_id=network_id,
                     meta={"kind": "eigen-correlator"})


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------

def correlator_predicted(lam_a, lam_b, w, c0):
    if w < 0:
        raise FlowError("w must be non-negative")
    return (lam_a * lam_b) ** w * c0


def power_law(z, eta, c1):
    z = np.asarray(z, dtype=float)
    if np.any(z < 1):
        raise FlowError("power_law expects z >= 1")
    return c1 * z ** (-eta)


# ---------------------------------------------------------------------------
# flow-equation residuals
# ---------------------------------------------------------------------------

def _log_derivative(logz, logc):
    """First derivative d(log C)/d(log z) at interior samples.

    Log-uniform grids with >= 5 samples get fourth-order 5-point stencils
    (centered in the bulk, offset by one at the two edge-interior points);
    shorter or non-uniform grids get the two-sided 3-point formula.  Every
    stencil differentiates an affine log C exactly, so pure power laws are
    annihilated to rounding regardless of step size.
    Returns (indices, derivative values).
    """
    n = len(logz)
    steps = np.diff(logz)
    uniform = steps.size > 0 and np.max(np.abs(steps - steps[0])) < 1e-9 * abs(steps[0])
    idx, der = [], []
    for k in range(1, n - 1):
        if uniform and n >= 5:
            hstep = steps[0]
            if 2 <= k <= n - 3:
                val = (-logc[k + 2] + 8 * logc[k + 1] - 8 * logc[k - 1]
                       + logc[k - 2]) / (12 * hstep)
            elif k == 1:
                val = (-3 * logc[0] - 10 * logc[1] + 18 * logc[2]
                       - 6 * logc[3] + logc[4]) / (12 * hstep)
            else:  # k == n - 2
                val = (3 * logc[n - 1] + 10 * logc[n - 2] - 18 * logc[n - 3]
                       + 6 * logc[n - 4] - logc[n - 5]) / (12 * hstep)
        else:
            hm = logz[k] - logz[k - 1]
            hp = logz[k + 1] - logz[k]
            val = (hm ** 2 * logc[k + 1] - hp ** 2 * logc[k - 1]
                   + (hp ** 2 - hm ** 2) * logc[k]) / (hm * hp * (hm + hp))
        idx.append(k)
        der.append(val)
    return np.array(idx), np.array(der)


def _residual_core(curve, local_term):
    """Relative residual of (z d/dz + local_term(z)) C at interior samples:
    d log|C| / d log z + local_term(z_k)."""
    if len(curve) < 3:
        raise FlowError("flow residuals need at least 3 samples")
    vals = curve.values
    if np.any(np.abs(vals) < VALUE_FLOOR):
        raise FlowError("curve touches zero; log-derivative undefined")
    if np.any(vals < 0) and np.any(vals > 0):
        raise FlowError("curve changes sign; split it before taking residuals")
    logz = np.log(curve.z)
    logc = np.log(np.abs(vals))
    idx, der = _log_derivative(logz, logc)
    res = der + local_term(curve.z[idx])
    return curve.z[idx], res


def cs_residual(curve, eta):
    """Residual of the scale-flow equation (z d/dz + eta) C = 0, relative
    to |C|, at interior samples."""
    return _residual_core(curve, lambda z: eta * np.ones_like(z))


def truncated_cs_residual(curve, eta, zstar):
    """Residual of the truncated flow (z d/dz + eta z / zstar) C = 0."""
    if zstar <= 0:
        raise FlowError("zstar must be positive")
    return _residual_core(curve, lambda z: eta * z / zstar)


def rescale_covariance(curve, u, rel_tol=1e-8):
    """Check C(z e^u) = e^(-eta u) C(z) on every sample pair at ratio e^u.

    Returns a report dict; raises if the curve has no pair at that ratio.
    """
    if curve.eta is None:
        raise FlowError("curve carries no eta")
    logz = np.log(curve.z)
    pairs = []
    for i in range(len(curve)):
        for j in range(len(curve)):
            if abs((logz[j] - logz[i]) - u) < 1e-10:
                pairs.append((i, j))
    if not pairs:
        raise FlowError(f"no sample pairs at ratio e^{u:.4f}")
    devs = []
    for i, j in pairs:
        predicted = np.exp(-curve.eta * u) * curve.values[i]
        scale = max(abs(curve.values[j]), abs(predicted), VALUE_FLOOR)
        devs.append(abs(curve.values[j] - predicted) / scale)
    devs = np.array(devs)
    return {
        "u": float(u),
        "pairs": len(pairs),
        "max_rel_deviation": float(devs.max()),
        "passed": bool(devs.max() < rel_tol),
        "rel_tol": rel_tol,
    }


# ---------------------------------------------------------------------------
# crossover fits
# ---------------------------------------------------------------------------

def _lstsq_fit(a, y):
    coef, _res, _rank, _sv = np.linalg.lstsq(a, y, rcond=None)
    resid = float(np.max(np.abs(a @ coef - y))) if len(y) else np.inf
    return coef, resid


def crossover_fit(curve, zstar, floor_rel=1e-13):
    """Fit the two asymptotic regimes of a crossover curve.

    Power window (z <= zstar / 3): log|C| = a - eta (log z + z / zstar),
    the one-exponent crossover family with the known scale, reported as the
    power-law exponent.  Exponential window (z >= 3 zstar):
    log|C| = a' - b log z - rate * z when four or more samples are
    available (the subleading log term otherwise biases the rate at the
    percent level), plain two-parameter exponential below that.  Samples
    with |C| below ``floor_rel`` times the curve maximum are dropped and
    counted.
    """
    if zstar <= 0:
        raise FlowError("zstar must be positive")
    absv = np.abs(curve.values)
    floor = floor_rel * float(absv.max()) if absv.max() > 0 else VALUE_FLOOR
    keep = absv > floor
    dropped = int(np.sum(~keep))
    z = curve.z[keep]
    logc = np.log(absv[keep])

    pmask = z <= zstar / 3.0
    emask = z >= 3.0 * zstar
    if np.sum(pmask) < 2 or np.sum(emask) < 2:
        raise FlowError(
            f"insufficient span: {int(np.sum(pmask))} usable samples at "
            f"z <= zstar/3 and {int(np.sum(emask))} at z >= 3 zstar "
            f"({dropped} below the value floor)")

    zp = z[pmask]
    ap = np.stack([np.ones_like(zp), -(np.log(zp) + zp / zstar)], axis=1)
    (_c0, eta_fit), p_res = _lstsq_fit(ap, logc[pmask])

    ze = z[emask]
    if len(ze) >= 4:
        ae = np.stack([np.ones_like(ze), -np.log(ze), -ze], axis=1)
        coefs, e_res = _lstsq_fit(ae, logc[emask])
        rate_fit = coefs[2]
    else:
        ae = np.stack([np.ones_like(ze), -ze], axis=1)
        coefs, e_res = _lstsq_fit(ae, logc[emask])
        rate_fit = coefs[1]

    # flag windows where the decaying term does no work (pure power data)
    ae_pow = np.stack([np.ones_like(ze), -np.log(ze)], axis=1)
    _cp, e_res_pow = _lstsq_fit(ae_pow, logc[emask])
    exp_ok = bool(rate_fit > 0 and e_res < 0.5 * e_res_pow)

    crossover = float(eta_fit / rate_fit) if rate_fit != 0 else np.inf
    return CrossoverFit(
        power_exponent=float(eta_fit),
        power_window=(float(zp.min()), float(zp.max())),
        power_residual=p_res,
        exp_rate=float(rate_fit),
        exp_window=(float(ze.min()), float(ze.max())),
        exp_residual=e_res,
        crossover_scale=crossover,
        exp_window_ok=exp_ok,
        dropped_below_floor=dropped,
    )


def holographic_ratio(curve, c1):
    """Normalize a curve by its z = 1 amplitude for comparison with a bulk
    propagator."""
    if c1 == 0:
        raise FlowError("cannot normalize by a vanishing amplitude")
    return FlowCurve(curve.z.copy(), curve.values / c1, eta=curve.eta,
                     alpha=curve.alpha, beta=curve.beta,
                     network_id=curve.network_id,
                     meta={**curve.meta, "normalized": True})
