"""Deterministic text serialization: tensors as decimal records inside
JSON documents, networks, operator sets, matrix-product forms, and the
delimited table formats the command line emits.

All floating-point values are written with 17 significant digits, which
round-trips float64 exactly; JSON keys are sorted and newlines are '\\n'
so identical inputs produce byte-identical artifacts.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .mera import (
    CapState,
    FiniteRangeMera,
    Layer,
    ScaleInvariantMera,
)

FMT = "%.17g"


def fmt(x):
    return FMT % float(x)


_fmt = fmt


def tensor_record(arr):
    """Text record of a dense tensor: shape, realness flag, row-major
    decimal values (re, im interleaved when complex)."""
    arr = np.asarray(arr)
    rec = {"shape": [int(s) for s in arr.shape],
           "complex": bool(np.iscomplexobj(arr))}
    flat = arr.reshape(-1)
    if rec["complex"]:
        vals = []
        for v in flat:
            vals.append(_fmt(v.real))
            vals.append(_fmt(v.imag))
    else:
        vals = [_fmt(v) for v in flat]
    rec["values"] = vals
    return rec


def tensor_from_record(rec):
    shape = tuple(rec["shape"])
    vals = [float(v) for v in rec["values"]]
    if rec["complex"]:
        re = np.array(vals[0::2])
        im = np.array(vals[1::2])
        return (re + 1j * im).reshape(shape)
    return np.array(vals).reshape(shape)


def network_to_json(network):
    if isinstance(network, ScaleInvariantMera):
        doc = {
            "kind": "scale-invariant",
            "chi": network.chi,
            "b": network.b,
            "tensors": {"u": tensor_record(network.layer.u),
                        "w": tensor_record(network.layer.w)},
            "meta": network.meta,
        }
        if network.lift is not None:
            doc["tensors"]["lift_u"] = tensor_record(network.lift.u)
            doc["tensors"]["lift_w"] = tensor_record(network.lift.w)
        return doc
    if isinstance(network, FiniteRangeMera):
        doc = {
            "kind": "finite-range",
            "chi": network.chi,
            "b": network.b,
            "w_star": network.w_star,
            "cap": {"kind": network.cap.kind},
            "tensors": {"u": tensor_record(network.layers[0].u),
                        "w": tensor_record(network.layers[0].w)},
            "meta": network.meta,
        }
        if network.cap.kind == "product":
            doc["cap"]["vector"] = tensor_record(network.cap.vector)
        return doc
    raise TypeError(f"cannot serialize {type(network).__name__}")


def network_from_json(doc):
    u = tensor_from_record(doc["tensors"]["u"])
    w = tensor_from_record(doc["tensors"]["w"])
    layer = Layer(u, w, b=doc["b"])
    if doc["kind"] == "scale-invariant":
        lift = None
        if "lift_u" in doc["tensors"]:
            lift = Layer(tensor_from_record(doc["tensors"]["lift_u"]),
                         tensor_from_record(doc["tensors"]["lift_w"]),
                         b=doc["b"])
        net = ScaleInvariantMera(doc["chi"], doc["b"], layer, lift=lift,
                                 meta=doc.get("meta", {}))
        return net
    if doc["kind"] == "finite-range":
        cap_doc = doc["cap"]
        if cap_doc["kind"] == "product":
            cap = CapState("product", tensor_from_record(cap_doc["vector"]))
        else:
            cap = CapState("maximally-mixed", dim=doc["chi"])
        return FiniteRangeMera(doc["chi"], doc["b"],
                               [layer] * doc["w_star"], cap,
                               meta=doc.get("meta", {}))
    raise ValueError(f"unknown network kind {doc['kind']!r}")


def scaling_set_to_json(dec):
    rows = []
    for k in range(len(dec)):
        lam = dec.eigenvalues[k]
        rows.append({
            "alpha": k,
            "re_lambda": _fmt(lam.real),
            "im_lambda": _fmt(lam.imag),
            "delta": _fmt(dec.dimensions[k]),
            "operator": tensor_record(dec.operators[k]),
        })
    return {"base": dec.b, "defective": dec.defective,
            "clusters": dec.clusters, "rows": rows}


def mps_to_json(m):
    return {
        "chi_mps": m.chi_mps,
        "anc": list(m.anc),
        "tensors": [tensor_record(t) for t in m.tensors],
        "meta": {k: v for k, v in m.meta.items() if not k.startswith("_")},
    }


def dumps(doc):
    return json.dumps(doc, sort_keys=True, indent=2,
                      ensure_ascii=False) + "\n"


def write_json(path, doc):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(doc))


def config_hash(config):
    return hashlib.sha256(
        json.dumps(config, sort_keys=True).encode("utf-8")).hexdigest()[:16]


def write_csv(path, header, rows, stamp=None):
    """UTF-8, '\\n' line endings, '.' decimal separator, 17 significant
    digits for floats.  ``stamp`` adds a leading comment line carrying the
    config hash and software version."""
    lines = []
    if stamp:
        lines.append("# " + " ".join(f"{k}={v}" for k, v in sorted(stamp.items())))
    lines.append(",".join(header))
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, (float, np.floating)):
                cells.append(fmt(v))
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def flow_curve_rows(curve):
    rows = []
    for z, v in zip(curve.z, curve.values):
        rows.append([z, v, curve.eta if curve.eta is not None else "",
                     curve.alpha if curve.alpha is not None else "",
                     curve.beta if curve.beta is not None else "",
                     curve.network_id])
    return rows


FLOW_HEADER = ["z", "value", "eta", "alpha", "beta", "network_id"]
ENTROPY_HEADER = ["ell", "entropy_nats", "cap", "network_id"]
GEODESIC_HEADER = ["z", "zstar", "value", "regime"]
