"""Command-line front end.

::

    fdshape synth problem.json [--gamma0 V] [--mu V] [--max-iters K] [--out-dir D]
                               [--shared-lyapunov {on,off}]
    fdshape analyze problem.json --filter q.json [--post-scale] [--scale A]
    fdshape example [--out problem.json]

Exit codes: 0 success, 1 input error, 2 infeasible, 3 no convergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (FdshapeError, ImproperScaling, InfeasibleAtStep1, NonconvergedIteration,
                     UnstableScaling)
from .lti import RationalTF, StateSpace
from .plant import GeneralizedPlant, build_fdi_plant, check_hminus_feasibility
from .sdp import SolverOptions
from .synthesis import (SynthesisConfig, SynthesisResult, VerificationReport, post_scale_update,
                        synthesize, verify)

SCHEMA_VERSION = 1
EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_NONCONVERGED = 0, 1, 2, 3

PLANT_KEYS = ("A", "B1", "B2", "C1", "C2", "D11", "D12", "D21", "D22")
CSV_HEADER = "omega,sigma_max_T_ed,sigma_min_T_ef,gamma_over_abs_Gd,nu_over_abs_Gf"

log = logging.getLogger("fdshape")

EXAMPLE_FILE = Path(__file__).parent / "data" / "loop_fdi_example.json"


class InputError(Exception):
    """Malformed or inconsistent input; maps to exit code 1."""


@dataclass
class Problem:
    plant: GeneralizedPlant
    weights: tuple | None
    settings: dict


# --- parsing ---------------------------------------------------------------


def _matrix(value, where):
    try:
        M = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise InputError(f"{where}: matrix must be a rectangular array of numbers") from None
    if M.size == 0:
        return np.zeros((0, 0))
    if M.ndim == 1:
        M = M[None, :]
    if M.ndim != 2:
        raise InputError(f"{where}: expected a 2-D matrix (list of rows), got {M.ndim}-D")
    if not np.all(np.isfinite(M)):
        raise InputError(f"{where}: entries must be finite")
    return M


def _coeffs(value, where):
    try:
        c = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise InputError(f"{where}: coefficients must be numbers") from None
    if c.ndim != 1 or c.size == 0 or not np.all(np.isfinite(c)):
        raise InputError(f"{where}: expected a non-empty list of finite coefficients")
    return c


def _tf(doc, where) -> RationalTF:
    if not isinstance(doc, dict) or "num" not in doc:
        raise InputError(f"{where}: expected an object with 'num' (and optional 'den')")
    num = _coeffs(doc["num"], f"{where}.num")
    den = _coeffs(doc.get("den", [1.0]), f"{where}.den")
    if not np.any(den):
        raise InputError(f"{where}.den: denominator is zero")
    return RationalTF(num, den)


def _channels(doc, where):
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise InputError(f"{where}: expected an object mapping labels to [start, stop]")
    out = {}
    for k, v in doc.items():
        if not (isinstance(v, (list, tuple)) and len(v) == 2 and all(isinstance(i, int) for i in v)):
            raise InputError(f"{where}.{k}: expected [start, stop] integers")
        out[k] = (v[0], v[1])
    return out


def load_problem(path) -> Problem:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise InputError(f"{path}: file not found") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise InputError(f"{path}: top level must be an object")
    if "schema_version" not in doc:
        raise InputError("missing field 'schema_version'")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise InputError(f"unsupported schema_version {doc['schema_version']!r} "
                         f"(expected {SCHEMA_VERSION})")
    has_tf = "transfer_functions" in doc
    has_pl = "generalized_plant" in doc
    if has_tf == has_pl:
        raise InputError("exactly one of 'transfer_functions' and 'generalized_plant' must be given")
    weights = None
    try:
        if has_tf:
            tfs = doc["transfer_functions"]
            for key in ("G", "C", "G_d", "G_f"):
                if key not in tfs:
                    raise InputError(f"missing field 'transfer_functions.{key}'")
            G, C, Gd, Gf = (_tf(tfs[k], f"transfer_functions.{k}") for k in ("G", "C", "G_d", "G_f"))
            plant = build_fdi_plant(G, C, Gd, Gf)
            weights = (Gd, Gf)
        else:
            pd = doc["generalized_plant"]
            mats = {}
            for key in PLANT_KEYS:
                if key not in pd:
                    raise InputError(f"missing field 'generalized_plant.{key}'")
                mats[key] = _matrix(pd[key], f"generalized_plant.{key}")
            plant = GeneralizedPlant(**mats, w_channels=_channels(pd.get("w_channels"), "w_channels"),
                                     z_channels=_channels(pd.get("z_channels"), "z_channels"))
            if "weights" in pd:
                w = pd["weights"]
                weights = (_tf(w["G_d"], "weights.G_d"), _tf(w["G_f"], "weights.G_f"))
    except InputError:
        raise
    except (FdshapeError, ValueError) as exc:
        raise InputError(str(exc)) from None
    settings = doc.get("synthesis", {})
    if not isinstance(settings, dict):
        raise InputError("'synthesis' must be an object")
    return Problem(plant, weights, settings)


def _setting(settings, args, key, flag, cast, default=None, required=False):
    v = getattr(args, flag, None)
    if v is not None:
        return cast(v)
    if key in settings:
        try:
            return cast(settings[key])
        except (TypeError, ValueError):
            raise InputError(f"synthesis.{key}: invalid value {settings[key]!r}") from None
    if required:
        raise InputError(f"missing field 'synthesis.{key}'")
    return default


def _config(problem: Problem, args) -> SynthesisConfig:
    s = problem.settings
    gamma0 = _setting(s, args, "gamma0", "gamma0", float, required=True)
    shared = getattr(args, "shared_lyapunov", None)
    shared = (shared == "on") if shared is not None else bool(s.get("shared_lyapunov", True))
    solver = SolverOptions(gap_tol=_setting(s, args, "gap_tol", "gap_tol", float, 1e-7))
    try:
        return SynthesisConfig(
            gamma0=gamma0,
            mu=_setting(s, args, "mu", "mu", float, 1e-4),
            max_outer_iters=_setting(s, args, "max_outer_iters", "max_iters", int, 30),
            solver=solver,
            shared_lyapunov=shared,
            fault_channel=s.get("fault_channel", "f"),
            dist_channel=s.get("dist_channel", "d"),
            residual_channel=s.get("residual_channel"),
            step2_reading=s.get("step2_reading", "min-gain"),
            radius=_setting(s, args, "radius", "radius", float, 1e3),
            eps=_setting(s, args, "eps", "eps", float, 1e-7),
        )
    except ValueError as exc:
        raise InputError(f"synthesis settings: {exc}") from None


def load_filter(path) -> tuple[StateSpace, dict]:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise InputError(f"{path}: file not found") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None
    for key in ("A", "B", "C", "D"):
        if key not in doc:
            raise InputError(f"filter file: missing field '{key}'")
    D = _matrix(doc["D"], "filter.D")
    A = _matrix(doc["A"], "filter.A")
    n = A.shape[0]
    B = _matrix(doc["B"], "filter.B") if n else np.zeros((0, D.shape[1]))
    C = _matrix(doc["C"], "filter.C") if n else np.zeros((D.shape[0], 0))
    try:
        return StateSpace(A, B, C, D), doc.get("certificate", {})
    except FdshapeError as exc:
        raise InputError(f"filter file: {exc}") from None


# --- writing ---------------------------------------------------------------


def _jsonable(M):
    return np.asarray(M, dtype=float).tolist()


def write_filter(path, Q: StateSpace, certificate=None):
    doc = {"schema_version": SCHEMA_VERSION, "kind": "filter",
           "A": _jsonable(Q.A), "B": _jsonable(Q.B), "C": _jsonable(Q.C), "D": _jsonable(Q.D)}
    if certificate:
        doc["certificate"] = certificate
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def write_csv(path, rep: VerificationReport):
    nan = np.full(len(rep.omegas), np.nan)
    db = rep.dist_bound if rep.dist_bound is not None else nan
    fb = rep.fault_bound if rep.fault_bound is not None else nan
    lines = [CSV_HEADER]
    for row in zip(rep.omegas, rep.sigma_max_dist, rep.sigma_min_fault, db, fb):
        lines.append(",".join(f"{v:.12e}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def write_svg(path, rep: VerificationReport, width=640, height=400):
    """Singular-value curves in dB over a log frequency axis."""
    w = np.log10(rep.omegas)
    curves = [(rep.sigma_max_dist, "#1f4e99", "sigma_max T_ed"),
              (rep.sigma_min_fault, "#b22222", "sigma_min T_ef")]
    if rep.dist_bound is not None:
        curves.append((rep.dist_bound, "#1f4e99", "gamma/|Gd|"))
    if rep.fault_bound is not None:
        curves.append((rep.fault_bound, "#b22222", "nu/|Gf|"))
    with np.errstate(divide="ignore"):
        dbs = [20 * np.log10(np.maximum(c, 1e-12)) for c, _, _ in curves]
    lo = max(min(float(d.min()) for d in dbs), -200.0)
    hi = max(float(d.max()) for d in dbs)
    pad = 40

    def xy(xv, yv):
        x = pad + (xv - w[0]) / (w[-1] - w[0]) * (width - 2 * pad)
        y = height - pad - (np.clip(yv, lo, hi) - lo) / max(hi - lo, 1e-9) * (height - 2 * pad)
        return x, y

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>']
    for (_, color, label), d, k in zip(curves, dbs, range(len(curves))):
        x, y = xy(w, d)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(x, y))
        dash = ' stroke-dasharray="6,4"' if k >= 2 else ""
        out.append(f'<polyline fill="none" stroke="{color}"{dash} points="{pts}"/>')
        out.append(f'<text x="{pad + 5}" y="{pad + 14 * (k + 1)}" fill="{color}" '
                   f'font-size="11">{label}</text>')
    out.append(f'<text x="{pad}" y="{height - 10}" font-size="11">log10 omega [rad/s]: '
               f'{w[0]:.0f} .. {w[-1]:.0f}; magnitude {lo:.0f} .. {hi:.0f} dB</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")


def _report_lines(title, header: dict, body: dict, table=None):
    lines = [title, "=" * len(title), "", "settings:"]
    lines += [f"  {k}: {v}" for k, v in header.items()]
    lines += ["", "results:"]
    lines += [f"  {k}: {v}" for k, v in body.items()]
    if table:
        lines += ["", "iterations (k, nu2 after step 1, nu2 after step 2, seconds):"]
        lines += [f"  {h.k:3d}  {h.nu2_step1:.10f}  {h.nu2_step2:.10f}  {h.seconds:.2f}" for h in table]
    return "\n".join(lines) + "\n"


def _fmt(x):
    return f"{x:.6g}"


# --- commands --------------------------------------------------------------


def run_synthesize(path, args) -> int:
    problem = load_problem(path)
    cfg = _config(problem, args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    diag = check_hminus_feasibility(problem.plant, cfg.fault_channel)
    if not diag:
        print(f"infeasible: {diag.message}", file=sys.stderr)
        return EXIT_INFEASIBLE
    code = EXIT_OK
    try:
        res = synthesize(problem.plant, cfg, weights=problem.weights)
    except InfeasibleAtStep1 as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NonconvergedIteration as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        res, code = exc.result, EXIT_NONCONVERGED
    _write_synthesis(out, res, cfg, args)
    print(f"nu = {res.nu:.6f}  gamma0 = {res.gamma0:g}  J = {res.J:.6f}  "
          f"|T_ed|inf = {res.hinf_measured:.6f}  |T_ef|- = {res.nu_measured:.6f}")
    return code


def _write_synthesis(out: Path, res: SynthesisResult, cfg: SynthesisConfig, args):
    cert = {"nu": res.nu_certified, "gamma0": res.gamma0}
    write_filter(out / "filter.json", res.Q, cert)
    certificates = {
        "schema_version": SCHEMA_VERSION,
        "nu_certified": res.nu_certified,
        "nu_measured": res.nu_measured,
        "nu_reported": res.nu,
        "gamma0": res.gamma0,
        "J": res.J,
        "hinf_measured": res.hinf_measured,
        "converged": res.converged,
        "iterations": [[h.k, h.nu2_step1, h.nu2_step2] for h in res.history],
        "tolerances": res.tolerances,
    }
    (out / "certificates.json").write_text(json.dumps(certificates, indent=1) + "\n")
    write_csv(out / "sweep.csv", res.report)
    if getattr(args, "svg", False):
        write_svg(out / "sweep.svg", res.report)
    header = {"version": __version__, "gamma0": cfg.gamma0, "mu": cfg.mu,
              "max_outer_iters": cfg.max_outer_iters, "shared_lyapunov": cfg.shared_lyapunov,
              "step2_reading": cfg.step2_reading, **res.tolerances}
    body = {"converged": res.converged, "nu (reported)": _fmt(res.nu),
            "nu certified": _fmt(res.nu_certified), "H-minus measured": _fmt(res.nu_measured),
            "H-infinity measured": _fmt(res.hinf_measured), "J = nu/gamma0": _fmt(res.J),
            "filter order": res.Q.n}
    (out / "report.txt").write_text(_report_lines("filter synthesis", header, body, res.history))


def run_analyze(path, args) -> int:
    problem = load_problem(path)
    s = problem.settings
    gamma0 = _setting(s, args, "gamma0", "gamma0", float, required=True)
    Q, cert = load_filter(args.filter)
    P = problem.plant
    fault, dist = s.get("fault_channel", "f"), s.get("dist_channel", "d")
    if Q.shape != (P.mu, P.py):
        raise InputError(f"filter is {Q.p}x{Q.m}; the plant needs {P.mu}x{P.py}")
    if args.scale is not None:
        Q = StateSpace(Q.A, Q.B, args.scale * Q.C, args.scale * Q.D)
    if args.post_scale:
        if problem.weights is None:
            raise InputError("--post-scale needs the disturbance weight G_d")
        try:
            Q = post_scale_update(P, Q, gamma0, problem.weights[0], dist)
        except (ImproperScaling, UnstableScaling) as exc:
            print(f"post scaling failed: {exc}", file=sys.stderr)
            return EXIT_INFEASIBLE
    rep = verify(P, Q, fault, dist, s.get("residual_channel"))
    nu = float(cert.get("nu", rep.hminus_fault))
    if args.scale is not None:
        nu *= args.scale
    if problem.weights is not None:
        rep = verify(P, Q, fault, dist, s.get("residual_channel"), weights=problem.weights,
                     levels=(gamma0, nu))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "sweep.csv", rep)
    if args.svg:
        write_svg(out / "sweep.svg", rep)
    if args.post_scale or args.scale is not None:
        write_filter(out / "filter_updated.json", Q)
    measurements = {"schema_version": SCHEMA_VERSION, "hinf_measured": rep.hinf_dist,
                    "hminus_measured": rep.hminus_fault, "J_measured": rep.J, "gamma0": gamma0}
    (out / "measurements.json").write_text(json.dumps(measurements, indent=1) + "\n")
    header = {"version": __version__, "gamma0": gamma0, "post_scale": args.post_scale,
              "scale": args.scale, "hinf_tol": 1e-6, "hminus_tol": 1e-6}
    body = {"H-infinity measured": _fmt(rep.hinf_dist), "H-minus measured": _fmt(rep.hminus_fault),
            "J measured": _fmt(rep.J), "filter order": Q.n}
    (out / "report.txt").write_text(_report_lines("filter analysis", header, body))
    print(f"|T_ed|inf = {rep.hinf_dist:.6f}  |T_ef|- = {rep.hminus_fault:.6f}  J = {rep.J:.6f}")
    return EXIT_OK


def run_example(args) -> int:
    text = EXAMPLE_FILE.read_text()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fdshape", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="synthesize a residual filter")
    s.add_argument("problem")
    s.add_argument("--gamma0", type=float)
    s.add_argument("--mu", type=float)
    s.add_argument("--max-iters", dest="max_iters", type=int)
    s.add_argument("--out-dir", default="fdshape_out")
    s.add_argument("--shared-lyapunov", choices=("on", "off"))
    s.add_argument("--gap-tol", dest="gap_tol", type=float)
    s.add_argument("--eps", type=float)
    s.add_argument("--radius", type=float)
    s.add_argument("--svg", action="store_true", help="also write sweep.svg")

    a = sub.add_parser("analyze", help="measure a given filter")
    a.add_argument("problem")
    a.add_argument("--filter", required=True)
    a.add_argument("--post-scale", action="store_true")
    a.add_argument("--scale", type=float)
    a.add_argument("--gamma0", type=float)
    a.add_argument("--out-dir", default="fdshape_out")
    a.add_argument("--svg", action="store_true")

    e = sub.add_parser("example", help="print the bundled feedback-loop problem")
    e.add_argument("--out", help="write to this file instead of stdout")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            return run_synthesize(args.problem, args)
        if args.command == "example":
            return run_example(args)
        return run_analyze(args.problem, args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FdshapeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
