"""Command-line front end.

Exit codes: 0 success, 1 parse/validation error, 2 solver error,
3 certificate/model digest mismatch, 4 certificate failed re-verification.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .eigen import eigen_threshold
from .errors import InstabError, NoUnstableNoisyMode, ParseError, SolverError, ThresholdError
from .lmi import DEFAULT_GRID, InstabilityCertificate, LmiEngine, verify_certificate
from .model import PowerConstraint, SystemModel, load_model
from .moments import divergence_envelope, propagate_moments
from .noise import construct_noise
from .scalar import scalar_analyze
from .sim import Controller, SimConfig, audit_constraint, compare_to_oracle, simulate

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_DIGEST, EXIT_INVALID = 0, 1, 2, 3, 4
SCHEMA_VERSION = 1


def _num(x):
    if x is None:
        return None
    x = float(x)
    return "unbounded" if math.isinf(x) else x


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return _num(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _emit(doc, out_dir, name):
    text = json.dumps(_jsonable(doc), indent=2) + "\n"
    if out_dir:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / name).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _fail(msg, code):
    print(f"instab: {msg}", file=sys.stderr)
    return code


def _parse_matrix(text):
    """Gain as JSON ("[[-3]]"), a bare number ("-3"), or rows "a,b;c,d"."""
    text = text.strip()
    try:
        val = json.loads(text)
    except json.JSONDecodeError:
        val = [[float(x) for x in row.split(",")] for row in text.split(";")]
    return np.atleast_2d(np.asarray(val, dtype=float))


def _engine(model):
    return LmiEngine(model, threads=int(os.environ.get("INSTAB_THREADS", "1") or 1))


# -- analyze -------------------------------------------------------------------

def cmd_analyze(args) -> int:
    try:
        model = load_model(args.model)
    except (InstabError, ValueError, OSError) as exc:
        return _fail(str(exc), EXIT_INPUT)
    u_hat = None
    if args.u_hat is not None:
        u_hat = PowerConstraint.parse(args.u_hat)
    elif model.u_hat is not None:
        u_hat = model.u_hat

    report = {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "model": {"digest": model.digest(), "label": model.label, "n": model.n, "m": model.m,
                  "ell1": model.ell1, "ell2": model.ell2},
        "u_hat": None if u_hat is None else u_hat.to_json(),
        "sections": {},
        "timings": {},
    }
    sections, timings = report["sections"], report["timings"]
    code = EXIT_OK
    engine = _engine(model)
    cert = None

    t0 = time.perf_counter()
    try:
        res = engine.max_threshold(n_points=args.phi_grid, phi_max=args.phi_max)
        cert = res.certificate
        sec = {
            "status": "ok" if cert is not None else "not_certified",
            "u_star": _num(res.u_star) if cert is not None else None,
            "phi_max": res.phi_max,
            "phi_max_heuristic": res.phi_max_heuristic,
            "n_phi_searched": len(res.searched_phi),
            "certificate": None if cert is None else cert.to_dict(),
        }
        if cert is None:
            sec["message"] = "no certificate found; this does not prove stabilizability"
        if u_hat is not None:
            verdict = engine.certify(u_hat, n_points=args.phi_grid, phi_max=args.phi_max)
            sec["verdict"] = {"u_hat": u_hat.to_json(), "status": verdict.status,
                              "phi_L": None if verdict.certificate is None else verdict.certificate.phi_L}
        sections["lmi"] = sec
    except SolverError as exc:
        sections["lmi"] = {"status": "error", "message": f"{exc} (phi_L={exc.phi_L})"}
        code = EXIT_SOLVER
    timings["lmi"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if model.additive_only:
        try:
            u_eig, entries = eigen_threshold(model)
            sections["eigen"] = {"status": "ok", "u_star": _num(u_eig),
                                 "entries": [e.to_json() for e in entries]}
        except NoUnstableNoisyMode as exc:
            sections["eigen"] = {"status": "not_certified", "message": str(exc)}
    else:
        sections["eigen"] = {"status": "skipped", "message": "multiplicative noise present"}
    timings["eigen"] = time.perf_counter() - t0

    if model.n == 1 and model.m == 1 and model.ell1 <= 1 and model.ell2 == 1:
        c1 = float(model.C[0][0, 0]) if model.ell1 else 0.0
        sv = scalar_analyze(float(model.A[0, 0]), float(model.B[0, 0]), c1, float(model.D[0, 0]))
        sec = {"status": "ok", **sv.to_json()}
        if sv.u_threshold is not None:
            sec["u_star"] = sv.u_threshold
        sections["scalar"] = sec

    if cert is not None and u_hat is not None and not u_hat.unbounded:
        try:
            curve = divergence_envelope(model, cert, u_hat.u_hat)
            sections["envelope"] = {"status": "ok", "c0": curve.c0, "c1": curve.c1, "phi": curve.phi,
                                    "note": "explicit witness; not the tightest envelope"}
        except ThresholdError as exc:
            sections["envelope"] = {"status": "skipped", "message": str(exc)}

    if args.format in ("csv", "both") and cert is not None:
        out = Path(args.out or ".")
        out.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        traj = propagate_moments(model, None, None, args.t_end, args.t_end / 200, R=cert.R)
        traj.to_csv(out / "moments.csv")
        timings["moments"] = time.perf_counter() - t0
    if cert is not None and args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        cert.save(Path(args.out) / "certificate.json")
    if args.format in ("json", "both") or not args.out:
        _emit(report, args.out, "report.json")
    return code


# -- certify -------------------------------------------------------------------

def cmd_certify(args) -> int:
    if args.check:
        return cmd_certify_check(args.check, args.model)
    try:
        model = load_model(args.model)
    except (InstabError, ValueError, OSError) as exc:
        return _fail(str(exc), EXIT_INPUT)
    u_hat = args.u_hat if args.u_hat is not None else (model.u_hat.to_json() if model.u_hat else None)
    if u_hat is None:
        return _fail("--u-hat is required (or set u_hat in the model file)", EXIT_INPUT)
    try:
        verdict = _engine(model).certify(u_hat, n_points=args.phi_grid, phi_max=args.phi_max)
    except SolverError as exc:
        return _fail(f"{exc} (phi_L={exc.phi_L})", EXIT_SOLVER)
    doc = {"status": verdict.status, "u_hat": PowerConstraint.parse(u_hat).to_json(),
           "n_phi_searched": len(verdict.searched_phi),
           "certificate": None if verdict.certificate is None else verdict.certificate.to_dict()}
    if verdict.certificate is not None and args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        verdict.certificate.save(Path(args.out) / "certificate.json")
    _emit(doc, args.out, "verdict.json")
    return EXIT_OK


def cmd_certify_check(cert_path, model_path) -> int:
    try:
        model = load_model(model_path)
        cert = InstabilityCertificate.load(cert_path)
    except (InstabError, ValueError, OSError) as exc:
        return _fail(str(exc), EXIT_INPUT)
    if cert.model_digest is not None and cert.model_digest != model.digest():
        return _fail("certificate does not match the model (digest mismatch)", EXIT_DIGEST)
    chk = verify_certificate(model, cert)
    if chk.passed:
        print("certificate OK")
        return EXIT_OK
    for f in chk.failures:
        print(f"FAIL: {f}", file=sys.stderr)
    return EXIT_INVALID


# -- simulate ------------------------------------------------------------------

def cmd_simulate(args) -> int:
    try:
        model = load_model(args.model)
    except (InstabError, ValueError, OSError) as exc:
        return _fail(str(exc), EXIT_INPUT)
    try:
        if args.controller == "zero":
            ctrl = Controller.zero()
        else:
            if args.gain is None:
                return _fail("--gain is required for feedback controllers", EXIT_INPUT)
            K = _parse_matrix(args.gain)
            if args.controller == "feedback":
                ctrl = Controller.linear(K)
            else:
                if args.power_cap is None:
                    return _fail("--power-cap is required for the saturated controller", EXIT_INPUT)
                ctrl = Controller.saturated(K, args.power_cap)
        x0 = None if args.x0 is None else tuple(float(v) for v in args.x0.split(","))
        cfg = SimConfig(dt=args.dt, t_end=args.t_end, n_paths=args.paths, seed=args.seed, x0=x0)
        R = None
        if args.certificate:
            R = InstabilityCertificate.load(args.certificate).R
        report = simulate(model, ctrl, cfg, R=R)
    except (InstabError, ValueError, OSError) as exc:
        return _fail(str(exc), EXIT_INPUT)

    summary = report.summary()
    audit_u = args.u_hat
    if audit_u is None and ctrl.kind == "saturated":
        audit_u = args.power_cap
    if audit_u is None and model.u_hat is not None and not model.u_hat.unbounded:
        audit_u = model.u_hat.u_hat
    if audit_u is not None:
        try:
            ok, worst = audit_constraint(report, audit_u)
            summary["audit"] = {"u_hat": audit_u, "passed": ok, "worst_ratio": worst}
        except InstabError as exc:
            summary["audit"] = {"u_hat": audit_u, "passed": False, "message": str(exc)}
    if ctrl.kind in ("zero", "linear"):
        try:
            traj = propagate_moments(model, None if ctrl.kind == "zero" else ctrl.K, x0,
                                     args.t_end, cfg.dt_out, R=R)
            summary["oracle_final_mean_x2"] = float(traj.mean_x2[-1])
            summary["oracle_max_dev_stderr"] = compare_to_oracle(report, traj)
        except InstabError as exc:
            summary["oracle"] = f"unavailable: {exc}"
    out = Path(args.out) if args.out else None
    if out is None:
        # stdout carries one document; with both formats the summary goes to stderr
        if args.format in ("csv", "both"):
            report.to_csv(sys.stdout)
        if args.format == "json":
            _emit(summary, None, "summary.json")
        elif args.format == "both":
            sys.stderr.write(json.dumps(_jsonable(summary), indent=2) + "\n")
        return EXIT_OK
    out.mkdir(parents=True, exist_ok=True)
    if args.format in ("csv", "both"):
        report.to_csv(out / "simulation.csv")
    if args.format in ("json", "both"):
        _emit(summary, args.out, "summary.json")
    return EXIT_OK


# -- synth-noise ---------------------------------------------------------------

def cmd_synth_noise(args) -> int:
    try:
        model = load_model(args.model)
        cert = InstabilityCertificate.load(args.certificate)
    except (InstabError, ValueError, OSError) as exc:
        return _fail(str(exc), EXIT_INPUT)
    if cert.model_digest is not None and cert.model_digest != model.digest():
        return _fail("certificate does not match the model (digest mismatch)", EXIT_DIGEST)
    try:
        nc = construct_noise(cert.R, model.B, args.u_hat, cert.phi_L, args.alpha, args.ell2)
    except (InstabError, ValueError) as exc:
        return _fail(str(exc), EXIT_INPUT)
    new = model.replace(D=nc.D, u_hat=PowerConstraint(args.u_hat),
                        label=(model.label or "model") + "+synth-noise")
    _emit(new.to_dict(), args.out, "model.json")
    return EXIT_OK


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="instab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"instab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def lmi_flags(sp):
        sp.add_argument("--phi-grid", type=int, default=DEFAULT_GRID, help="number of phi_L grid points")
        sp.add_argument("--phi-max", type=float, default=None, help="override the phi_L upper limit")
        sp.add_argument("--u-hat", default=None, help="power bound (number or 'unbounded')")
        sp.add_argument("--out", default=None, help="output directory (default: stdout)")

    a = sub.add_parser("analyze", help="thresholds from every applicable method")
    a.add_argument("model", help="model file ('-' for stdin)")
    lmi_flags(a)
    a.add_argument("--format", choices=("json", "csv", "both"), default="json")
    a.add_argument("--t-end", type=float, default=5.0, help="horizon for CSV moment data")
    a.set_defaults(func=cmd_analyze)

    c = sub.add_parser("certify", help="certify instabilizability at a given u_hat, or --check a certificate")
    c.add_argument("model", help="model file ('-' for stdin)")
    c.add_argument("--check", metavar="CERTIFICATE", default=None,
                   help="re-verify a certificate file against the model")
    lmi_flags(c)
    c.set_defaults(func=cmd_certify)

    s = sub.add_parser("simulate", help="Monte Carlo simulation with moment-oracle comparison")
    s.add_argument("model")
    s.add_argument("--controller", choices=("zero", "feedback", "saturated"), default="zero")
    s.add_argument("--gain", default=None, help="K as JSON, a number, or rows 'a,b;c,d'")
    s.add_argument("--power-cap", type=float, default=None)
    s.add_argument("--u-hat", type=float, default=None, help="audit the empirical input power against this bound")
    s.add_argument("--certificate", default=None, help="certificate whose R defines V(x) = x^T R x")
    s.add_argument("--x0", default=None, help="initial state, comma separated (default 0)")
    s.add_argument("--paths", type=int, default=2000)
    s.add_argument("--dt", type=float, default=1e-3)
    s.add_argument("--t-end", type=float, default=5.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default=None)
    s.add_argument("--format", choices=("json", "csv", "both"), default="both")
    s.set_defaults(func=cmd_simulate)

    n = sub.add_parser("synth-noise", help="substitute an instability-inducing D into a model")
    n.add_argument("model")
    n.add_argument("certificate")
    n.add_argument("--u-hat", type=float, required=True)
    n.add_argument("--alpha", type=float, default=None)
    n.add_argument("--ell2", type=int, default=1)
    n.add_argument("--out", default=None)
    n.set_defaults(func=cmd_synth_noise)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        return _fail(str(exc), EXIT_INPUT)


if __name__ == "__main__":
    sys.exit(main())
