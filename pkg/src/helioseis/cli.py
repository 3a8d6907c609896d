"""Command-line front end.

Every output starts with the package version and the full run configuration
(CSV: two ``#`` comment lines; JSON: top-level ``helioseis`` and ``config``
keys).  Exit status is 0 on success, 2 for invalid input and 3 when the
numerics fail.
"""

from __future__ import annotations

import os

# must happen before numpy/scipy load their thread pools
_threads = os.environ.get("HELIOSEIS_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[_var] = _threads

import argparse
import csv
import io
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__, lsp, modes, rays, rigidity, trace
from .errors import NumericalError, SchemaError, ValidationError
from .model import MetricTable, as_profile, cross_term_rotation, load_model, normalize_metric

L_MAX_LIMIT = 5000
GRID_LIMIT = 2 ** 20


# --------------------------------------------------------------------------
# output helpers
# --------------------------------------------------------------------------


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _dumps(obj):
    return json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    try:
        return open(path, "w", encoding="utf-8", newline=""), True
    except OSError as exc:
        raise OSError(f"cannot write output {path!r}: {exc.strerror}") from exc


def write_csv(path, config, header, rows):
    buf = io.StringIO()
    buf.write(f"# helioseis {__version__}\n")
    buf.write(f"# config: {_dumps(config)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    fh, close = _open_out(path)
    try:
        fh.write(buf.getvalue())
    finally:
        if close:
            fh.close()


def write_json(path, config, data, **extra):
    doc = {"helioseis": __version__, "config": config, "data": data, **extra}
    fh, close = _open_out(path)
    try:
        fh.write(json.dumps(_jsonable(doc), sort_keys=True, indent=2, allow_nan=False))
        fh.write("\n")
    finally:
        if close:
            fh.close()


def read_csv(path):
    """``(config, header, columns)`` from a file written by :func:`write_csv`."""
    text = Path(path).read_text(encoding="utf-8")
    config = None
    body = []
    for line in text.splitlines():
        if line.startswith("# config: "):
            config = json.loads(line[len("# config: "):])
        elif not line.startswith("#") and line.strip():
            body.append(line)
    if not body:
        raise SchemaError(f"{path}: no CSV data")
    rows = list(csv.reader(body))
    header = rows[0]
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise SchemaError(f"{path}: non-numeric CSV entry ({exc})") from exc
    if data.size == 0:
        data = np.zeros((0, len(header)))
    if data.ndim != 2 or data.shape[1] != len(header):
        raise SchemaError(f"{path}: ragged CSV rows")
    return config, header, {h: data[:, i] for i, h in enumerate(header)}


def read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from exc


# --------------------------------------------------------------------------
# input helpers
# --------------------------------------------------------------------------


def _model(path):
    doc = read_json(path)
    if isinstance(doc, dict) and "helioseis" in doc and "data" in doc:
        doc = doc["data"]   # output of `model normalize`
    return load_model(doc)


def parse_profile(text):
    """Profile from a JSON document, a number, comma-separated coefficients or a file.

    A ``.csv`` file holds two columns ``r, value`` (``#`` comments and a
    header line allowed) and becomes a tabulated profile.
    """
    p = Path(text)
    if p.suffix.lower() in (".json", ".csv") or p.is_file():
        if not p.is_file():
            raise OSError(f"profile file {text!r} not found")
        if p.suffix.lower() == ".csv":
            r, v = _two_columns(p)
            return as_profile({"kind": "table", "r": r.tolist(), "c": v.tolist()})
        doc = read_json(p)
        if isinstance(doc, dict) and "data" in doc and "helioseis" in doc:
            doc = doc["data"]
        return as_profile(doc)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        try:
            doc = [float(v) for v in text.split(",")]
        except ValueError as exc:
            raise SchemaError(f"cannot parse profile {text!r}") from exc
    return as_profile(doc)


def _two_columns(path):
    _, header, cols = read_csv(path)
    if len(header) < 2:
        raise SchemaError(f"{path}: need two columns (r, value)")
    return cols[header[0]], cols[header[1]]


def parse_int_range(text):
    """``"a..b"`` (inclusive), ``"a"`` or ``"a,b,c"`` to a list of ints."""
    try:
        if ".." in text:
            a, b = text.split("..")
            a, b = int(a), int(b)
            if b < a:
                raise ValueError
            return list(range(a, b + 1))
        return [int(v) for v in text.split(",")]
    except ValueError as exc:
        raise ValidationError(f"bad integer range {text!r}") from exc


def parse_k(text):
    """``"a..b"`` (unit steps), ``"a..b:s"`` or a comma list of numbers."""
    try:
        if ".." in text:
            rng, _, step = text.partition(":")
            a, b = (float(v) for v in rng.split(".."))
            s = float(step) if step else 1.0
            if s <= 0 or b < a:
                raise ValueError
            count = int(np.floor((b - a) / s + 1e-9)) + 1
            return (a + s * np.arange(count)).tolist()
        return [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise ValidationError(f"bad k specification {text!r}") from exc


def _positive(name, value):
    if not value > 0:
        raise ValidationError(f"{name} must be positive")


def _grid(name, value, lo=2):
    if not lo <= value <= GRID_LIMIT:
        raise ValidationError(f"{name} must lie in [{lo}, {GRID_LIMIT}]")


def _config(args, **extra):
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "out") and v is not None}
    cfg.update(extra)
    return cfg


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_model_validate(args):
    model = _model(args.model)
    data = {"herglotz_margin": model.herglotz_margin, "margin_radius": model.margin_radius,
            "R": model.R, "dim": model.dim, "p_inner": model.p_inner, "p_outer": model.p_outer,
            "c_inner": float(model.c(model.R)), "c_outer": float(model.c(1.0)),
            "accepted": True}
    write_json(args.out, _config(args, model_doc=model.to_dict()), data)


def cmd_model_normalize(args):
    doc = read_json(args.metric)
    try:
        raw = MetricTable(tuple(doc["r"]), tuple(doc["a"]), tuple(doc["C"]),
                          None if doc.get("b") is None else tuple(doc["b"]))
        dim = int(doc.get("dim", 3))
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"metric document needs r, a, C arrays ({exc})") from exc
    _positive("--epsrel", args.epsrel)
    model = normalize_metric(raw, dim=dim, epsrel=args.epsrel)
    extra = {}
    if dim == 2 and raw.b is not None:
        extra["cross_term_rotation"] = {"r": list(raw.r), "phi": cross_term_rotation(raw)}
    extra["herglotz_margin"] = model.herglotz_margin
    write_json(args.out, _config(args), model.to_dict(), diagnostics=extra)


def cmd_rays_table(args):
    model = _model(args.model)
    _grid("--r-grid", args.r_grid)
    tips = lsp.tip_grid(model, args.r_grid)
    tab = rays.geodesic_table(model, tips)
    cols = ["r_tip", "p", "R_star", "alpha", "L", "alpha_prime"]
    write_csv(args.out, _config(args, model_doc=model.to_dict()), cols,
              zip(*(tab[c] for c in cols)))


def cmd_rays_path(args):
    model = _model(args.model)
    _grid("--samples", args.samples, lo=3)
    path = rays.ray_path(model, args.kind, args.tip, samples=args.samples)
    write_csv(args.out, _config(args, model_doc=model.to_dict()), ["t", "r", "theta"], path)


def _orbits_for(model, kind, n_max, grid):
    if kind == "diving":
        return lsp.enumerate_lsp(model, n_max, grid)
    if kind == "reflecting":
        return lsp.enumerate_lsp_reflecting(model, n_max)
    return lsp.enumerate_all(model, n_max, grid)


def cmd_lsp_list(args):
    model = _model(args.model)
    _grid("--grid", args.grid, lo=16)
    orbits = _orbits_for(model, args.kind, args.n_max, args.grid)
    data = [o.to_dict() for o in orbits]
    extra = {}
    if args.tol is not None:
        _positive("--tol", args.tol)
        extra["near_degenerate"] = [
            {"a": [a.kind, a.m, a.n], "b": [b.kind, b.m, b.n], "gap": g}
            for a, b, g in lsp.nondegeneracy_report(orbits, args.tol)]
    write_json(args.out, _config(args, model_doc=model.to_dict()), data, **extra)


def cmd_lsp_check(args):
    model = _model(args.model)
    _grid("--grid", args.grid, lo=64)
    _positive("--tol", args.tol)
    cells = lsp.conjugacy_scan(model, args.grid)
    orbits = _orbits_for(model, "both" if model.R > 0 else "diving", args.n_max, 512)
    pairs = lsp.nondegeneracy_report(orbits, args.tol)
    data = {
        "conjugate_cells": [list(c) for c in cells],
        "near_degenerate": [{"a": a.to_dict(), "b": b.to_dict(), "gap": g} for a, b, g in pairs],
        "n_orbits": len(orbits),
        "unstable": [o.to_dict() for o in orbits if o.stability != "stable"],
    }
    write_json(args.out, _config(args, model_doc=model.to_dict()), data)


def cmd_modes_solve(args):
    model = _model(args.model)
    n_list = parse_int_range(args.n)
    k_list = parse_k(args.k)
    if len(n_list) * len(k_list) > GRID_LIMIT:
        raise ValidationError("too many (n, k) cells")
    if min(n_list) < 0 or min(k_list) < 0:
        raise ValidationError("n and k must be nonnegative")
    table = modes.dispersion_table(model, args.regime, n_list, k_list)
    rows, missing = [], 0
    for row in table:
        for m in row:
            if m is None:
                missing += 1
                continue
            rows.append((m.regime, m.n, m.k, m.omega, m.p, m.norm_constant))
    if not rows:
        raise NumericalError(f"no {args.regime} eigenfrequencies for the requested (n, k)")
    if missing:
        print(f"helioseis: {missing} (n, k) cells have no {args.regime} mode", file=sys.stderr)
    write_csv(args.out, _config(args, model_doc=model.to_dict()),
              ["regime", "n", "k", "omega", "p", "norm"], rows)


def cmd_trace_synth(args):
    model = _model(args.model)
    if not 0 <= args.l_max <= L_MAX_LIMIT:
        raise ValidationError(f"--l-max must lie in [0, {L_MAX_LIMIT}]")
    for name in ("omega_max", "window", "t_max", "dt"):
        _positive("--" + name.replace("_", "-"), getattr(args, name))
    if not 0 <= args.t_min < args.t_max:
        raise ValidationError("need 0 <= --t-min < --t-max")
    count = int(np.floor((args.t_max - args.t_min) / args.dt + 1e-9)) + 1
    _grid("time grid", count)
    t = args.t_min + args.dt * np.arange(count)
    ms = modes.mode_set(model, args.l_max, args.omega_max)
    tr = trace.synth_trace(ms, t, args.window, envelope=False)
    write_csv(args.out, _config(args, model_doc=model.to_dict(), n_modes=len(ms)),
              ["t", "value"], zip(tr.t, tr.values))


def _load_trace(path):
    config, header, cols = read_csv(path)
    if config is None or "window" not in config or header[:2] != ["t", "value"]:
        raise SchemaError(f"{path}: not a trace file (missing config header or t,value columns)")
    t, v = cols["t"], cols["value"]
    return config, trace.TraceSeries(t=t, values=v, window=float(config["window"]),
                                     cutoffs={k: config.get(k) for k in ("l_max", "omega_max")})


def cmd_trace_peaks(args):
    config, tr = _load_trace(args.trace)
    _positive("--threshold", args.threshold)
    peaks = trace.detect_peaks(tr, args.threshold)
    write_csv(args.out, _config(args, trace_config=config), ["t", "height"], peaks)


_ORBIT_FIELDS = {f.name for f in fields(lsp.PeriodicOrbit)}


def cmd_trace_match(args):
    model = _model(args.model)
    doc = model.to_dict()
    config, tr = _load_trace(args.trace)
    if config.get("model_doc") != doc:
        raise ValidationError(f"trace {args.trace} was synthesized for a different model")
    orb_doc = read_json(args.lsp)
    if not isinstance(orb_doc, dict) or "data" not in orb_doc:
        raise SchemaError(f"{args.lsp}: not an lsp list output")
    if orb_doc.get("config", {}).get("model_doc") != doc:
        raise ValidationError(f"orbit list {args.lsp} belongs to a different model")
    try:
        orbits = [lsp.PeriodicOrbit(**{k: v for k, v in o.items() if k in _ORBIT_FIELDS})
                  for o in orb_doc["data"]]
    except TypeError as exc:
        raise SchemaError(f"{args.lsp}: malformed orbit entry ({exc})") from exc
    tol = 2 * np.pi / tr.window if args.tol is None else args.tol
    _positive("--tol", tol)
    _positive("--threshold", args.threshold)
    preds = trace.predict_singularities(model, orbits, float(tr.t[-1]))
    preds = [p for p in preds if p.T >= tr.t[0]]
    peaks = trace.detect_peaks(tr, args.threshold)
    rep = trace.match_report(preds, peaks, tol)

    def pred_row(p):
        return {"T": p.T, "kind": p.orbit.kind, "m": p.orbit.m, "n": p.orbit.n, "q": p.q,
                "maslov": p.maslov, "amplitude": p.amplitude, "note": p.note}

    iso = {id(p) for p in trace.isolated(preds, 2 * tol)}
    data = {
        "tol": tol,
        "matched": [{**pred_row(p), "peak_t": pk[0], "peak_height": pk[1]} for p, pk in rep["matched"]],
        "missing": [{**pred_row(p), "isolated": id(p) in iso} for p in rep["missing"]],
        "unexplained": [{"t": t, "height": h} for t, h in rep["unexplained"]],
        "amplitudes": rep["amplitudes"],
    }
    write_json(args.out, _config(args, model_doc=doc), data)


def _abel_input(model, spec, grid):
    """Radii and values for the Abel commands: CSV data is used as given."""
    if Path(spec).suffix.lower() == ".csv":
        r, v = _two_columns(Path(spec))
        return r, v, None
    prof = parse_profile(spec)
    r = np.linspace(model.R, 1.0, grid)
    return r, None, prof


def cmd_abel_forward(args):
    model = _model(args.model)
    _grid("--grid", args.grid)
    r, values, prof = _abel_input(model, args.f, args.grid)
    if prof is None:
        prof = as_profile({"kind": "table", "r": r.tolist(), "c": values.tolist()})
        r = np.linspace(max(model.R, r[0]), min(1.0, r[-1]), args.grid)
    g = rigidity.abel_forward(model, prof, r)
    write_csv(args.out, _config(args, model_doc=model.to_dict()), ["r", "g"], zip(r, g))


def cmd_abel_invert(args):
    model = _model(args.model)
    _grid("--grid", args.grid)
    r, values, prof = _abel_input(model, args.f, args.grid)
    if prof is not None:
        values = prof(r)
    inv = rigidity.abel_invert(model, np.asarray(values, dtype=float), np.asarray(r, dtype=float))
    write_csv(args.out, _config(args, model_doc=model.to_dict(), effective_rank=inv.effective_rank,
                                consistency=inv.consistency),
              ["r", "f"], zip(inv.r, inv.f))


def cmd_rigidity_check(args):
    model = _model(args.model)
    _positive("--eps", args.eps)
    fam = rigidity.DeformationFamily(model, parse_profile(args.h), eps=args.eps,
                                     additive=args.additive)
    orbits = rigidity.stable_diving(lsp.enumerate_lsp(model, args.n_max))
    if not orbits:
        raise NumericalError("no stable diving orbits for this n_max")
    dl = rigidity.length_derivatives(fam, orbits)
    density = fam.variation if args.unweighted else fam.length_density
    rows = []
    for o, d in zip(orbits, dl):
        pb = rigidity.pbrt_integral(model, o, density)
        res = abs(2 * d - pb) / abs(pb) if pb != 0 else abs(2 * d - pb)
        rows.append({"orbit": o.to_dict(), "dl_dtau": float(d), "pbrt_value": pb,
                     "residual": res})
    identity = "c0^-2 weighted: 2 dl/dtau = orbit integral of c0^2 d(c^-2)/dtau"
    if args.unweighted:
        identity = "unweighted: 2 dl/dtau = orbit integral of d(c^-2)/dtau"
    write_json(args.out, _config(args, model_doc=model.to_dict(), identity=identity), rows,
               max_residual=max(r["residual"] for r in rows))


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser():
    ap = argparse.ArgumentParser(prog="helioseis", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"helioseis {__version__}")
    sub = ap.add_subparsers(dest="group", required=True)

    def leaf(group, name, func, helptext, model=True):
        p = group.add_parser(name, help=helptext)
        if model:
            p.add_argument("model", help="model JSON document")
        p.add_argument("--out", "-o", help="output file (default stdout)")
        p.set_defaults(func=func)
        return p

    g = sub.add_parser("model", help="validate or normalize models").add_subparsers(dest="cmd", required=True)
    leaf(g, "validate", cmd_model_validate, "check c > 0 and the Herglotz condition")
    p = leaf(g, "normalize", cmd_model_normalize, "metric table to conformal speed", model=False)
    p.add_argument("metric", help="JSON with r, a, C (and optionally b, dim)")
    p.add_argument("--epsrel", type=float, default=1e-10)

    g = sub.add_parser("rays", help="geodesic tables and paths").add_subparsers(dest="cmd", required=True)
    p = leaf(g, "table", cmd_rays_table, "alpha, L and alpha' over tip radii")
    p.add_argument("--r-grid", type=int, default=64)
    p = leaf(g, "path", cmd_rays_path, "sampled ray (t, r, theta)")
    p.add_argument("--tip", type=float, required=True,
                   help="tip radius (diving) or angular momentum z (reflecting)")
    p.add_argument("--kind", choices=[rays.DIVING, rays.REFLECTING], default=rays.DIVING)
    p.add_argument("--samples", type=int, default=201)

    g = sub.add_parser("lsp", help="length spectrum").add_subparsers(dest="cmd", required=True)
    p = leaf(g, "list", cmd_lsp_list, "periodic orbits as JSON")
    p.add_argument("--kind", choices=["diving", "reflecting", "both"], default="diving")
    p.add_argument("--n-max", type=int, required=True)
    p.add_argument("--tol", type=float, help="report orbit pairs with periods closer than this")
    p.add_argument("--grid", type=int, default=lsp.DEFAULT_GRID)
    p = leaf(g, "check", cmd_lsp_check, "conjugacy scan and period clustering")
    p.add_argument("--n-max", type=int, default=12)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--grid", type=int, default=1024)

    g = sub.add_parser("modes", help="WKB eigenfrequencies").add_subparsers(dest="cmd", required=True)
    p = leaf(g, "solve", cmd_modes_solve, "omega_n(k) table as CSV")
    p.add_argument("--regime", choices=[modes.DIVING, modes.REFLECTING], required=True)
    p.add_argument("--n", required=True, help="overtones: a..b or comma list")
    p.add_argument("--k", required=True, help="k values: a..b[:step] or comma list")

    g = sub.add_parser("trace", help="mode-sum trace").add_subparsers(dest="cmd", required=True)
    p = leaf(g, "synth", cmd_trace_synth, "windowed trace on a time grid")
    p.add_argument("--l-max", type=int, required=True)
    p.add_argument("--omega-max", type=float, required=True)
    p.add_argument("--window", type=float, required=True)
    p.add_argument("--t-max", type=float, required=True)
    p.add_argument("--t-min", type=float, default=0.3,
                   help="start of the grid; the t = 0 singularity dominates below ~0.2")
    p.add_argument("--dt", type=float, default=0.002)
    p = leaf(g, "peaks", cmd_trace_peaks, "local maxima of |trace|", model=False)
    p.add_argument("trace", help="CSV from trace synth")
    p.add_argument("--threshold", type=float, default=0.1)
    p = leaf(g, "match", cmd_trace_match, "compare peaks with orbit periods")
    p.add_argument("trace", help="CSV from trace synth")
    p.add_argument("lsp", help="JSON from lsp list")
    p.add_argument("--threshold", type=float, default=0.1)
    p.add_argument("--tol", type=float, help="time tolerance (default 2 pi / window)")

    g = sub.add_parser("abel", help="Abel-type transform").add_subparsers(dest="cmd", required=True)
    for name, func in (("forward", cmd_abel_forward), ("invert", cmd_abel_invert)):
        p = leaf(g, name, func, f"{name} transform")
        p.add_argument("--f", required=True, help="profile (JSON, number, coefficients) or r,value CSV")
        p.add_argument("--grid", type=int, default=200)

    g = sub.add_parser("rigidity", help="length-variation identity").add_subparsers(dest="cmd", required=True)
    p = leaf(g, "check", cmd_rigidity_check, "compare d ell/d tau with orbit integrals")
    p.add_argument("--h", required=True, help="perturbation profile")
    p.add_argument("--n-max", type=int, default=8)
    p.add_argument("--eps", type=float, default=1e-2)
    p.add_argument("--additive", action="store_true", help="c0 + tau h instead of c0 (1 + tau h)")
    p.add_argument("--unweighted", action="store_true",
                   help="use d(c^-2)/dtau without the c0^2 weight (exact only for c0 = 1)")
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (ValidationError, ValueError, OSError) as exc:
        print(f"helioseis: error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, ArithmeticError) as exc:
        print(f"helioseis: numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
