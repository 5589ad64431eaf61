"""Batch front end: one experiment per process, a single JSON config per
run, deterministic seeding, delimited outputs plus rendered figures.

Invocation:  holomera <experiment> --config cfg.json [--out DIR] [--seed N]
             holomera validate --config cfg.json

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure.
Every artifact embeds the config hash and software version (JSON fields,
a leading comment line in CSV, PNG metadata).  HOLOMERA_THREADS caps the
linear-algebra thread pools; it must be set before numpy is first
imported, so it is read here at module import.
"""

from __future__ import annotations

import os

_threads = os.environ.get("HOLOMERA_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                 "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse
import json
import sys
import traceback

import numpy as np

from . import __version__
from . import entropy as entlib
from . import flows
from . import holography as holo
from . import mps as mpslib
from . import serialize as ser
from . import superoperators as so
from .mera import build_scale_invariant, finite_range_from_scale_invariant
from .optimizer import ising_critical_hamiltonian, optimize

EXPERIMENTS = ("scaling-dims", "flow", "crossover", "holo-compare",
               "entropy", "mps-export", "optimize")

# name -> (type, min, max) or (type, choices)
_COMMON = {
    "experiment": (str, EXPERIMENTS),
    "seed": (int, 0, 2 ** 31 - 1),
    "chi": (int, 2, 8),
    "source": (str, ("random", "ising", "file")),
    "network_file": (str, None),
    "sweeps": (int, 1, 5000),
}

_SCHEMAS = {
    "optimize": {"chi", "seed", "sweeps", "scales", "warmup", "inner",
                 "checkpoint_every"},
    "scaling-dims": {"chi", "seed", "source", "network_file", "sweeps"},
    "flow": {"chi", "seed", "source", "network_file", "sweeps", "alpha",
             "beta", "q_max"},
    "crossover": {"chi", "seed", "source", "network_file", "sweeps",
                  "w_star", "cap", "alpha", "exp_separations"},
    "holo-compare": {"chi", "seed", "source", "network_file", "sweeps",
                     "w_star", "alpha", "m_squared"},
    "entropy": {"chi", "seed", "source", "network_file", "sweeps", "blocks",
                "w_star", "caps"},
    "mps-export": {"chi", "seed", "source", "network_file", "sweeps",
                   "w_star", "cap"},
}

_EXTRA = {
    "scales": (int, 2, 16),
    "warmup": (int, 0, 100),
    "inner": (int, 1, 8),
    "checkpoint_every": (int, 1, 5000),
    "alpha": (int, 1, 63),
    "beta": (int, 1, 63),
    "q_max": (int, 2, 6),
    "w_star": (int, 1, 6),
    "cap": (str, ("product", "maximally-mixed", "fixed-point")),
    "caps": (list, None),
    "blocks": (list, None),
    "exp_separations": (list, None),
    "m_squared": (float, -0.25, 64.0),
}


class ConfigError(ValueError):
    pass


def validate(config):
    """Schema/range report for a config document; no execution."""
    errors = []
    if not isinstance(config, dict):
        return ["config must be a JSON object"]
    kind = config.get("experiment")
    if kind not in EXPERIMENTS:
        errors.append(f"experiment must be one of {EXPERIMENTS}, got {kind!r}")
        return errors
    allowed = _SCHEMAS[kind] | {"experiment"}
    for key in config:
        if key not in allowed:
            errors.append(f"unknown key {key!r} for experiment {kind}")
    rules = {**_COMMON, **_EXTRA}
    for key, val in config.items():
        if key == "experiment" or key not in rules:
            continue
        rule = rules[key]
        typ = rule[0]
        if typ is float and isinstance(val, int):
            val = float(val)
        if not isinstance(val, typ):
            errors.append(f"{key} must be {typ.__name__}, got {type(val).__name__}")
            continue
        if typ in (int, float) and rule[1] is not None:
            lo, hi = rule[1], rule[2]
            if not (lo <= val <= hi):
                errors.append(f"{key}={val} outside allowed range [{lo}, {hi}]")
        if typ is str and isinstance(rule[1], tuple) and val not in rule[1]:
            errors.append(f"{key}={val!r} not in {rule[1]}")
    if config.get("source") == "file" and not config.get("network_file"):
        errors.append("source 'file' requires network_file")
    return errors


class _Ctx:
    """Artifact writer that stamps everything with config hash & version."""

    def __init__(self, out, stamp, plot):
        self.out = out
        self.stamp = stamp
        self.plot_enabled = plot
        self.artifacts = []

    def json(self, name, doc):
        ser.write_json(os.path.join(self.out, name), {**doc, **self.stamp})
        self.artifacts.append(name)

    def csv(self, name, header, rows):
        ser.write_csv(os.path.join(self.out, name), header, rows,
                      stamp=self.stamp)
        self.artifacts.append(name)

    def figure(self, name, draw):
        if not self.plot_enabled:
            return
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        draw(ax)
        fig.tight_layout()
        fig.savefig(os.path.join(self.out, name), dpi=120,
                    metadata={"Software": "holomera "
                              + self.stamp["version"] + " "
                              + self.stamp["config_hash"]})
        plt.close(fig)
        self.artifacts.append(name)


def _network(config, rng_seed):
    source = config.get("source", "random")
    chi = config.get("chi", 2)
    if source == "file":
        with open(config["network_file"], encoding="utf-8") as fh:
            return ser.network_from_json(json.load(fh))
    if source == "ising":
        h = ising_critical_hamiltonian()
        net, _rep = optimize(h, chi=chi, sweeps=config.get("sweeps", 300),
                             seed=rng_seed)
        return net
    return build_scale_invariant(chi, b=3, seed=rng_seed)


def _finite_range(config, network):
    from .optimizer import fixed_point_product_cap
    w_star = config.get("w_star", 4)
    cap = config.get("cap", "product")
    if cap == "fixed-point":
        cap = fixed_point_product_cap(network)
    return finite_range_from_scale_invariant(network, w_star, cap)


def _decomposed(network):
    s = so.build_scaling_superoperator(network)
    return s, so.spectral_decompose(s)


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def _run_optimize(config, ctx, seed):
    h = ising_critical_hamiltonian()
    ckpt = config.get("checkpoint_every")
    ckpt_path = os.path.join(ctx.out, "checkpoint.json") if ckpt else None
    net, rep = optimize(h, chi=config.get("chi", 4),
                        sweeps=config.get("sweeps", 300),
                        scales=config.get("scales", 8),
                        warmup=config.get("warmup", 10),
                        inner=config.get("inner", 2), seed=seed,
                        checkpoint_every=ckpt, checkpoint_path=ckpt_path)
    if ckpt_path and os.path.exists(ckpt_path):
        with open(ckpt_path, encoding="utf-8") as fh:
            ctx.json("checkpoint.json", json.load(fh))   # re-write stamped
    ctx.json("network.json", ser.network_to_json(net))
    ctx.json("optimize_report.json", {
        "final_energy": ser.fmt(rep.final_energy),
        "reference_energy": ser.fmt(-4.0 / np.pi),
        "sweeps": rep.sweeps,
        "converged": rep.converged,
        "reverted_sweeps": rep.reverted_sweeps,
        "max_isometry_residual": ser.fmt(max(rep.isometry_residuals)),
    })
    ctx.csv("energy_trajectory.csv", ["sweep", "energy_per_site"],
            [[i, e] for i, e in enumerate(rep.energies)])
    ctx.figure("energy_trajectory.png",
               lambda ax: (ax.plot(rep.energies),
                           ax.axhline(-4 / np.pi, ls="--", color="k"),
                           ax.set_xlabel("sweep"),
                           ax.set_ylabel("energy per site")))


def _run_scaling_dims(config, ctx, seed):
    network = _network(config, seed)
    s, dec = _decomposed(network)
    doc = ser.scaling_set_to_json(dec)
    doc["unitality_residual"] = ser.fmt(s.unitality_residual())
    ctx.json("scaling_dims.json", doc)
    ctx.figure("scaling_dims.png",
               lambda ax: (ax.plot(dec.dimensions, "o"),
                           ax.set_xlabel("alpha"),
                           ax.set_ylabel("scaling dimension")))


def _run_flow(config, ctx, seed):
    network = _network(config, seed)
    _s, dec = _decomposed(network)
    alpha = config.get("alpha", 1)
    beta = config.get("beta", alpha)
    qs = tuple(range(config.get("q_max", 4) + 1))
    curve = flows.measure_flow_curve(network, dec, alpha, beta, qs=qs,
                                     network_id=f"chi{network.chi}-seed{seed}")
    zi, res = flows.cs_residual(curve, curve.eta)
    resmap = dict(zip(zi, res))
    rows = [[z, v, curve.eta, alpha, beta, curve.network_id,
             resmap.get(z, "")] for z, v in zip(curve.z, curve.values)]
    ctx.csv("flow_curve.csv", ser.FLOW_HEADER + ["cs_residual"], rows)
    rescale = flows.rescale_covariance(curve, np.log(network.b))
    ctx.json("flow_report.json", {
        "eta": ser.fmt(curve.eta),
        "max_cs_residual": ser.fmt(float(np.max(np.abs(res)))),
        "rescale_covariance": {k: (ser.fmt(v) if isinstance(v, float) else v)
                               for k, v in rescale.items()},
    })
    ctx.figure("flow_curve.png",
               lambda ax: (ax.loglog(curve.z, np.abs(curve.values), "o-"),
                           ax.set_xlabel("z"),
                           ax.set_ylabel("|C(z)|")))


def _run_crossover(config, ctx, seed):
    network = _network(config, seed)
    _s, dec = _decomposed(network)
    fr = _finite_range(config, network)
    alpha = config.get("alpha", 1)
    eta = float(2 * dec.dimensions[alpha])
    phi = dec.operators[alpha]
    qs = tuple(range(0, fr.w_star + 3))
    curve = flows.measure_flow_curve(fr, dec, alpha, qs=qs,
                                     network_id=f"fr-w{fr.w_star}-chi{fr.chi}")
    rows = list(zip(curve.z, curve.values))
    extra, conn = [], []
    mps_ok = fr.cap.kind == "product" and fr.chi ** (2 * fr.w_star) <= 1024
    if mps_ok:
        m = mpslib.to_mps(fr)
        seps = config.get("exp_separations",
                          [2 * fr.xi, 3 * fr.xi, 4 * fr.xi, 5 * fr.xi])
        batch = mpslib.correlator_batch(m, phi, phi, [int(r) for r in seps])
        for r, (c, e1, e2) in sorted(batch.items()):
            extra.append((float(r), abs(c)))
            conn.append((float(r), abs(c - e1 * e2)))
    all_rows = [[z, v, eta, alpha, alpha, curve.network_id] for z, v in rows]
    all_rows += [[z, v, eta, alpha, alpha, curve.network_id + "-mps"]
                 for z, v in extra]
    ctx.csv("crossover_curve.csv", ser.FLOW_HEADER, all_rows)
    report = {"eta_spectral": ser.fmt(eta), "xi": fr.xi,
              "cap": fr.cap.kind,
              "cap_config": config.get("cap", "product")}
    try:
        seen = {}
        for z, v in rows + extra:      # direct values win at shared r
            seen.setdefault(z, v)
        zs = np.array(sorted(seen))
        vs = np.array([seen[z] for z in zs])
        merged = flows.FlowCurve(zs, vs, eta=eta)
        fit = flows.crossover_fit(merged, float(fr.xi))
        report["fit"] = {
            "power_exponent": ser.fmt(fit.power_exponent),
            "power_window": list(fit.power_window),
            "exp_rate": ser.fmt(fit.exp_rate),
            "exp_window": list(fit.exp_window),
            "exp_window_ok": fit.exp_window_ok,
            "crossover_scale": ser.fmt(fit.crossover_scale),
            "dropped_below_floor": fit.dropped_below_floor,
        }
    except flows.FlowError as err:
        report["fit_error"] = str(err)
    if mps_ok:
        spec = mpslib.transfer_spectrum(m)
        report["transfer"] = {"ratio": ser.fmt(spec.ratio),
                              "xi_tm_sites": ser.fmt(spec.xi_tm),
                              "degenerate": spec.degenerate}
        report["connected_beyond_cap"] = {str(int(r)): ser.fmt(v)
                                          for r, v in conn}
    ctx.json("crossover_report.json", report)
    pts = rows + extra
    ctx.figure("crossover_curve.png",
               lambda ax: (ax.loglog([p[0] for p in pts],
                                     [max(p[1], 1e-300) for p in pts], "o"),
                           ax.axvline(fr.xi, ls="--", color="k"),
                           ax.set_xlabel("r"), ax.set_ylabel("|C(r)|")))


def _run_holo_compare(config, ctx, seed):
    network = _network(config, seed)
    _s, dec = _decomposed(network)
    alpha = config.get("alpha", 1)
    eta = float(2 * dec.dimensions[alpha])
    config = dict(config)
    config.setdefault("cap", "fixed-point")
    fr = _finite_range(config, network)
    zstar = float(fr.xi)
    qs = tuple(range(0, fr.w_star + 3))
    curve = flows.measure_flow_curve(fr, dec, alpha, qs=qs,
                                     network_id=f"fr-w{fr.w_star}")
    norm = flows.holographic_ratio(curve, curve.values[0])
    prop = holo.holo_propagator(norm.z, zstar, eta)
    ctx.csv("holo_compare.csv", ["z", "network_ratio", "propagator"],
            [[z, v, p] for z, v, p in zip(norm.z, norm.values, prop)])

    geometry = holo.Geometry("BTZ", zstar=zstar / 2.0)
    thermal = geometry.thermal_scale
    seps = thermal * np.geomspace(0.1, 10.0, 25)
    geo = [holo.geodesic_numeric(x, geometry, eps=1e-4) for x in seps]
    ctx.csv("geodesics.csv", ser.GEODESIC_HEADER,
            [[g.separation, thermal, g.length, g.regime] for g in geo])
    kappa, c0, resid = holo.fit_geodesic_family(
        seps, np.array([g.length for g in geo]), thermal)
    m2 = config.get("m_squared", float(eta / 2 * (eta / 2 + 1)))
    dplus, dminus = holo.dimension_from_mass(m2)
    ctx.json("holo_report.json", {
        "eta": ser.fmt(eta),
        "zstar_flow": ser.fmt(zstar),
        "horizon": ser.fmt(geometry.zstar),
        "geodesic_fit": {"kappa": ser.fmt(kappa), "offset": ser.fmt(c0),
                         "max_residual": ser.fmt(resid)},
        "mass_dimension": {"m_squared": ser.fmt(m2),
                           "delta_plus": ser.fmt(dplus),
                           "delta_minus": ser.fmt(dminus)},
    })
    ctx.figure("holo_compare.png",
               lambda ax: (ax.loglog(norm.z, np.abs(norm.values) + 1e-300,
                                     "o", label="network"),
                           ax.loglog(norm.z, prop, "-", label="propagator"),
                           ax.legend(), ax.set_xlabel("z")))


def _run_entropy(config, ctx, seed):
    network = _network(config, seed)
    blocks = config.get("blocks", [2, 3, 4, 6, 8, 9, 12])
    rows = []
    curves = {}
    sci = [entlib.block_entropy(network, int(l)) for l in blocks]
    curves["scale-invariant"] = (list(map(int, blocks)), sci)
    rows += [[int(l), s, "scale-invariant", f"chi{network.chi}"]
             for l, s in zip(blocks, sci)]
    fit = entlib.entropy_scaling_fit(
        entlib.EntropyCurve(blocks, sci), "log")
    report = {"log_fit": {k: (ser.fmt(v) if isinstance(v, float) else v)
                          for k, v in fit.items()}}

    w_star = config.get("w_star", 2)
    caps = config.get("caps", ["product", "maximally-mixed"])
    for cap in caps:
        fr = finite_range_from_scale_invariant(network, w_star, cap)
        ls = [int(k * fr.xi) for k in (3, 4, 5, 6)]
        ss = [entlib.block_entropy(fr, l) for l in ls]
        rows += [[l, s, cap, f"fr-w{w_star}"] for l, s in zip(ls, ss)]
        curves[cap] = (ls, ss)
        ffit = entlib.entropy_scaling_fit(
            entlib.EntropyCurve(ls, ss), "linear-plus-log", zstar=float(fr.xi))
        cut = entlib.cut_length(fr, (0, 3 * fr.xi))
        report[cap] = {
            "fit": {k: (ser.fmt(v) if isinstance(v, float) else v)
                    for k, v in ffit.items()},
            "cut_weight_3xi": ser.fmt(cut.weight),
            "cap_sites_cut": cut.cap_sites_cut,
        }
    ctx.csv("entropy_curve.csv", ser.ENTROPY_HEADER, rows)
    ctx.json("entropy_report.json", report)

    def draw(ax):
        for name, (ls, ss) in curves.items():
            ax.plot(ls, ss, "o-", label=name)
        ax.set_xscale("log")
        ax.set_xlabel("block length")
        ax.set_ylabel("entropy (nats)")
        ax.legend()

    ctx.figure("entropy_curve.png", draw)


def _run_mps_export(config, ctx, seed):
    network = _network(config, seed)
    fr = _finite_range(config, network)
    if fr.cap.kind == "product":
        m = mpslib.to_mps(fr)
    else:
        m = mpslib.purified_cell_mps(fr)
    doc = ser.mps_to_json(m)
    doc["meta"].pop("_envs", None)
    ctx.json("mps.json", doc)
    spec = mpslib.transfer_spectrum(m)
    ctx.json("transfer_spectrum.json", {
        "t1_re": ser.fmt(spec.t1.real), "t1_im": ser.fmt(spec.t1.imag),
        "t2_re": ser.fmt(spec.t2.real), "t2_im": ser.fmt(spec.t2.imag),
        "ratio": ser.fmt(spec.ratio),
        "xi_tm_sites": ser.fmt(spec.xi_tm),
        "cell_sites": spec.cell_sites,
        "degenerate": spec.degenerate,
        "chi_mps": m.chi_mps,
        "per_layer_chi_estimate": m.meta.get("per_layer_chi_estimate"),
    })


_RUNNERS = {
    "optimize": _run_optimize,
    "scaling-dims": _run_scaling_dims,
    "flow": _run_flow,
    "crossover": _run_crossover,
    "holo-compare": _run_holo_compare,
    "entropy": _run_entropy,
    "mps-export": _run_mps_export,
}


def run(config, out_dir=".", seed_override=None, plot=True):
    """Execute one experiment; returns the list of artifacts written."""
    errors = validate(config)
    if errors:
        raise ConfigError("; ".join(errors))
    kind = config["experiment"]
    seed = seed_override if seed_override is not None else config.get("seed", 0)
    os.makedirs(out_dir, exist_ok=True)
    stamp = {"config_hash": ser.config_hash(config), "version": __version__}
    ctx = _Ctx(out_dir, stamp, plot)
    _RUNNERS[kind](config, ctx, seed)
    manifest = {
        "experiment": kind,
        "config": config,
        "seed": seed,
        "artifacts": sorted(ctx.artifacts),
    }
    ctx.json("manifest.json", manifest)
    return ctx.artifacts


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="holomera",
        description="entanglement-renormalization / holographic-geometry "
                    "experiments")
    parser.add_argument("experiment", choices=EXPERIMENTS + ("validate",))
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", default=".")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--no-plot", action="store_true")
    args = parser.parse_args(argv)

    try:
        with open(args.config, encoding="utf-8") as fh:
            config = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        print(json.dumps({"error": "config", "detail": str(err)}),
              file=sys.stderr)
        return 2

    if args.experiment == "validate":
        errors = validate(config)
        print(json.dumps({"valid": not errors, "errors": errors}, indent=2))
        return 0 if not errors else 2

    if config.get("experiment") != args.experiment:
        print(json.dumps({"error": "config",
                          "detail": f"config is for "
                                    f"{config.get('experiment')!r}, "
                                    f"not {args.experiment!r}"}),
              file=sys.stderr)
        return 2

    try:
        artifacts = run(config, out_dir=args.out, seed_override=args.seed,
                        plot=not args.no_plot)
    except ConfigError as err:
        print(json.dumps({"error": "config", "detail": str(err)}),
              file=sys.stderr)
        return 2
    except Exception as err:  # numerical / model failure
        print(json.dumps({"error": "numerical", "type": type(err).__name__,
                          "detail": str(err),
                          "trace": traceback.format_exc().splitlines()[-3:]}),
              file=sys.stderr)
        return 3
    print(json.dumps({"ok": True, "artifacts": sorted(artifacts)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
