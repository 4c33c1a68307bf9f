"""Config-driven command line front end.

Commands: check, simulate, estimate, mbrw-build, report.  Every run
writes a manifest (command line, hashes, seed, version) sufficient to
reproduce its outputs bitwise.  Exit codes: 0 success, 1 usage error,
2 input/consistency error, 3 all replicates failed.  Scientific verdicts
never change the exit code.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .model import ModelError, load_model, save_model, validate_model
from .spectral import SpectralError
from .conditions import (check_alpha_moment, check_complex, check_harmonic,
                         exponential_profile)
from .engine import (SimulationError, batch_from_binary, batch_to_binary,
                     batch_to_csv, simulate_batch, DEFAULT_CAP)
from .estimate import (EstimateError, estimate_harmonic, estimate_laplace,
                       estimate_moment, fit_power_decay,
                       fit_stretched_exponential, tail_curve)
from .mbrw import build_cascade_from_mbrw, load_mbrw_spec, mbrw_condition_report

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_ALL_FAILED = 3


def _file_hash(path):
    with open(path, "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()


def _write_manifest(outdir, args_ns, extra):
    manifest = {
        "argv": sys.argv[1:],
        "version": __version__,
        "config": {k: v for k, v in sorted(vars(args_ns).items())
                   if k != "func"},
    }
    manifest.update(extra)
    blob = json.dumps(manifest["config"], sort_keys=True, default=str)
    manifest["config_hash"] = hashlib.sha256(blob.encode()).hexdigest()
    path = os.path.join(outdir, "manifest.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True, default=str)
        f.write("\n")


def _report_to_row(report):
    return {"theorem": report.theorem, "verdict": report.verdict,
            "quantities": report.quantities,
            "assumptions": report.assumptions_checked,
            "notes": report.notes}


def _render_table(reports):
    lines = []
    for r in reports:
        lines.append(f"[{r['theorem']}] verdict: {r['verdict']}")
        for k, v in r["quantities"].items():
            if isinstance(v, float):
                lines.append(f"    {k:<55} {v:.12g}")
            else:
                lines.append(f"    {k:<55} {v}")
        for name, status in r.get("assumptions", []):
            lines.append(f"    assumption {name}: {status}")
        for note in r.get("notes", []):
            lines.append(f"    note: {note}")
        lines.append("")
    return "\n".join(lines)


def cmd_check(args):
    try:
        model = load_model(args.model)
    except ModelError as e:
        print(f"error: cannot read model: {e}", file=sys.stderr)
        return EXIT_INPUT
    os.makedirs(args.out, exist_ok=True)

    rows = []
    validation = validate_model(model)
    rows.append({
        "theorem": "validation", "verdict": validation.assumption_h,
        "quantities": {
            "mean_matrix": validation.mean_matrix.tolist(),
            "primitive": validation.primitive,
            "primitivity_exponent": validation.primitivity_exponent,
            "rho": validation.perron.rho if validation.perron else None,
            "spectral_radius_deviation": validation.spectral_radius_deviation,
        },
        "assumptions": [], "notes": [validation.norm_convention],
    })
    try:
        if model.is_complex:
            for alpha in args.alpha:
                rep = check_complex(model, alpha, beta_grid=args.beta or None)
                rows.append(_report_to_row(rep))
        else:
            for alpha in args.alpha:
                rep = check_alpha_moment(model, alpha, n_max=args.n_max)
                rows.append(_report_to_row(rep))
            for lam in args.lam:
                rows.append(_report_to_row(check_harmonic(model, lam)))
            if model.min_offspring() >= 2:
                for eps in args.epsilon:
                    rep_a, rep_b = exponential_profile(model, eps)
                    rows.append(_report_to_row(rep_a))
                    rows.append(_report_to_row(rep_b))
    except (ModelError, SpectralError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT

    with open(os.path.join(args.out, "conditions.json"), "w",
              encoding="utf-8") as f:
        json.dump(rows, f, indent=2, sort_keys=True, default=str)
        f.write("\n")
    table = _render_table(rows)
    with open(os.path.join(args.out, "conditions.txt"), "w",
              encoding="utf-8") as f:
        f.write(table)
    print(table)
    _write_manifest(args.out, args, {"model_hash": _file_hash(args.model)})
    return EXIT_OK


def cmd_simulate(args):
    if args.replicates < 1:
        print("error: --replicates must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        model = load_model(args.model)
    except ModelError as e:
        print(f"error: cannot read model: {e}", file=sys.stderr)
        return EXIT_INPUT
    os.makedirs(args.out, exist_ok=True)
    try:
        batch = simulate_batch(model, args.n, args.replicates, args.seed,
                               cap=args.cap)
    except (SimulationError, SpectralError, ModelError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    if batch.capped_count == batch.replicates:
        print("error: every replicate exceeded the population cap",
              file=sys.stderr)
        return EXIT_ALL_FAILED
    batch_to_csv(batch, os.path.join(args.out, "batch.csv"))
    batch_to_binary(batch, os.path.join(args.out, "batch.bin"))
    meta = {
        "model_hash": _file_hash(args.model),
        "model_id": batch.model_id,
        "n": batch.n, "replicates": batch.replicates,
        "seed": batch.master_seed,
        "extinct_count": batch.extinct_count,
        "capped_count": batch.capped_count,
        "field": batch.field_kind,
    }
    with open(os.path.join(args.out, "batch_meta.json"), "w",
              encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    _write_manifest(args.out, args, {"model_hash": meta["model_hash"]})
    print(f"wrote {batch.replicates} replicates "
          f"({batch.extinct_count} extinct, {batch.capped_count} capped)")
    return EXIT_OK


def _load_or_simulate(args, model):
    if args.fresh:
        return simulate_batch(model, args.n, args.replicates, args.seed,
                              cap=args.cap), model.content_hash()
    meta_path = os.path.join(args.batch, "batch_meta.json")
    try:
        with open(meta_path, encoding="utf-8") as f:
            meta = json.load(f)
    except OSError as e:
        raise EstimateError(f"cannot read batch metadata: {e}") from e
    batch = batch_from_binary(os.path.join(args.batch, "batch.bin"),
                              model_id=meta.get("model_id", ""),
                              master_seed=meta.get("seed", -1))
    return batch, meta.get("model_id", "")


def cmd_estimate(args):
    try:
        model = load_model(args.model)
    except ModelError as e:
        print(f"error: cannot read model: {e}", file=sys.stderr)
        return EXIT_INPUT
    os.makedirs(args.out, exist_ok=True)
    try:
        batch, batch_model_id = _load_or_simulate(args, model)
    except (EstimateError, SimulationError, ModelError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    if batch_model_id and batch_model_id != model.content_hash():
        print("error: batch was produced from a different model "
              "(hash mismatch); re-simulate or pass --fresh", file=sys.stderr)
        return EXIT_INPUT

    out = {"n": batch.n, "replicates": batch.replicates}
    try:
        for alpha in args.alpha:
            est = estimate_moment(batch, alpha, target="norm")
            side = check_alpha_moment(model, alpha, n_max=args.n_max) \
                if alpha > 1 and not model.is_complex else None
            out.setdefault("moments", []).append({
                "estimate": est.__dict__,
                "condition": _report_to_row(side) if side else None,
            })
        y = np.ones(model.p)
        for lam in args.lam:
            est = estimate_harmonic(batch, lam, y)
            side = check_harmonic(model, lam) if not model.is_complex else None
            out.setdefault("harmonic", []).append({
                "estimate": est.__dict__,
                "condition": _report_to_row(side) if side else None,
            })
        if args.laplace_fit and not model.is_complex:
            grid = [s * y for s in np.geomspace(args.t_min, args.t_max, 40)]
            curve = estimate_laplace(batch, grid)
            fits = {}
            for name, fitter in (("power", fit_power_decay),
                                 ("stretched", fit_stretched_exponential)):
                try:
                    fit = fitter(curve, replicates=batch.replicates)
                    fits[name] = {k: v for k, v in fit.__dict__.items()
                                  if k != "grid"}
                    # plot-ready two-column file in the regression coordinates
                    with open(os.path.join(args.out, f"{name}_fit_points.csv"),
                              "w", encoding="utf-8") as f:
                        if name == "power":
                            f.write("log_norm_t,log_phi\n")
                            rows_fit = ((math.log(s), math.log(phi))
                                        for s, phi in fit.grid)
                        else:
                            f.write("log_norm_t,log_neg_log_phi\n")
                            rows_fit = ((math.log(s), math.log(-math.log(phi)))
                                        for s, phi in fit.grid)
                        for a, b in rows_fit:
                            f.write(f"{a!r},{b!r}\n")
                except EstimateError as e:
                    fits[name] = {"error": str(e)}
            out["laplace_fits"] = fits
            with open(os.path.join(args.out, "laplace_curve.csv"), "w",
                      encoding="utf-8") as f:
                f.write("norm_t,phi\n")
                for t, phi in curve:
                    f.write(f"{float(np.abs(t).sum())!r},{phi!r}\n")
    except (EstimateError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT

    with open(os.path.join(args.out, "estimates.json"), "w",
              encoding="utf-8") as f:
        json.dump(out, f, indent=2, sort_keys=True, default=str)
        f.write("\n")
    _write_manifest(args.out, args, {"model_hash": _file_hash(args.model)})
    print(json.dumps(out, indent=2, sort_keys=True, default=str))
    return EXIT_OK


def cmd_mbrw_build(args):
    try:
        spec = load_mbrw_spec(args.spec)
        model = build_cascade_from_mbrw(spec, args.t)
    except (ModelError, SpectralError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    os.makedirs(os.path.dirname(os.path.abspath(args.out_model)), exist_ok=True)
    save_model(model, args.out_model)
    rows = [_report_to_row(r) for r in mbrw_condition_report(
        spec, args.t, alpha=args.alpha[0] if args.alpha else None,
        lam=args.lam[0] if args.lam else None, epsilon=args.epsilon[0])]
    if rows:
        print(_render_table(rows))
    print(f"wrote cascade model to {args.out_model}")
    return EXIT_OK


def cmd_report(args):
    try:
        with open(args.input, encoding="utf-8") as f:
            rows = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        print(f"error: cannot read report: {e}", file=sys.stderr)
        return EXIT_INPUT
    print(_render_table(rows if isinstance(rows, list) else [rows]))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="matcascade",
        description="Matrix cascade condition checks, simulation, estimation")
    sub = parser.add_subparsers(dest="command", required=True)

    pc = sub.add_parser("check", help="validate a model and run condition checks")
    pc.add_argument("--model", required=True)
    pc.add_argument("--alpha", type=float, action="append", default=[])
    pc.add_argument("--lambda", dest="lam", type=float, action="append",
                    default=[])
    pc.add_argument("--epsilon", type=float, action="append", default=[])
    pc.add_argument("--beta", type=float, action="append", default=[])
    pc.add_argument("--n-max", type=int, default=3)
    pc.add_argument("--out", default="out-check")
    pc.set_defaults(func=cmd_check)

    ps = sub.add_parser("simulate", help="draw a reproducible sample batch")
    ps.add_argument("--model", required=True)
    ps.add_argument("--n", type=int, required=True)
    ps.add_argument("--replicates", type=int, required=True)
    ps.add_argument("--seed", type=int, required=True)
    ps.add_argument("--cap", type=int, default=DEFAULT_CAP)
    ps.add_argument("--workers", type=int, default=1,
                    help="wall time only; never changes output bytes")
    ps.add_argument("--out", default="out-simulate")
    ps.set_defaults(func=cmd_simulate)

    pe = sub.add_parser("estimate", help="moment/harmonic/decay estimates")
    pe.add_argument("--model", required=True)
    pe.add_argument("--batch", default="out-simulate",
                    help="directory holding batch.bin + batch_meta.json")
    pe.add_argument("--fresh", action="store_true",
                    help="simulate inline instead of reading a batch")
    pe.add_argument("--n", type=int, default=8)
    pe.add_argument("--replicates", type=int, default=10000)
    pe.add_argument("--seed", type=int, default=1)
    pe.add_argument("--cap", type=int, default=DEFAULT_CAP)
    pe.add_argument("--alpha", type=float, action="append", default=[])
    pe.add_argument("--lambda", dest="lam", type=float, action="append",
                    default=[])
    pe.add_argument("--n-max", type=int, default=3)
    pe.add_argument("--laplace-fit", action="store_true")
    pe.add_argument("--t-min", type=float, default=0.1)
    pe.add_argument("--t-max", type=float, default=1000.0)
    pe.add_argument("--out", default="out-estimate")
    pe.set_defaults(func=cmd_estimate)

    pm = sub.add_parser("mbrw-build",
                        help="reduce a branching-walk spec to a cascade model")
    pm.add_argument("--spec", required=True)
    pm.add_argument("--t", type=float, required=True)
    pm.add_argument("--alpha", type=float, action="append", default=[])
    pm.add_argument("--lambda", dest="lam", type=float, action="append",
                    default=[])
    pm.add_argument("--epsilon", type=float, action="append", default=[0.0])
    pm.add_argument("--out-model", required=True)
    pm.set_defaults(func=cmd_mbrw_build)

    pr = sub.add_parser("report", help="render a JSON report as a text table")
    pr.add_argument("--input", required=True)
    pr.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else 0
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
