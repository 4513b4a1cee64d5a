"""Command-line front end: ``ecs spectrum | oracle-compare | verify | qseries``.

Every run resolves one configuration (defaults, then an optional JSON config
file, then flags) and writes it next to the results. Output is deterministic:
keys are sorted, floats use ``repr`` (JSON) or 17 significant digits (CSV), and
no timings are recorded.

Exit codes: 0 success, 2 resonance, 3 no convergence, 4 configuration error,
5 failed asserted check.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import re
import sys
import warnings
from fractions import Fraction
from importlib import resources
from typing import Any, Dict, List, Optional, Sequence, Tuple

import jsonschema
import numpy as np

from .eigenfunction import QuadratureConfig
from .lattice import (
    MODES,
    HypothesisConstants,
    HypothesisError,
    ModelParams,
    ResonanceEncountered,
    check_hypothesis,
    hypothesis_constants,
)
from .oracle import OracleError, build_truncated_operator, oracle_eigenpair
from .solver import (
    BoundViolation,
    NoConvergence,
    SpectralResult,
    TruncationPolicy,
    TruncationTooSmall,
    default_constants,
    degenerate_solve,
    explicit_solve,
    implicit_solve,
    perturbative_solve,
)
from .verify import CHECKS, VerifyConfig, run_suite, suite_passed

SCHEMA_ID = "ecs-result/1"
EXIT_OK, EXIT_RESONANCE, EXIT_NO_CONVERGENCE, EXIT_CONFIG, EXIT_CHECK = 0, 2, 3, 4, 5
STATUS = {0: "ok", 2: "resonance", 3: "no-convergence", 4: "config-error", 5: "check-failure"}
METHODS = ("perturbative", "implicit", "explicit", "degenerate", "all")

DEFAULTS: Dict[str, Any] = {
    "model": {"lambda": "2.5", "q": 0.1},
    "target": [0, 0],
    "method": "all",
    "policy": {"s_max": 8, "nu_cutoff": 8, "shell_radius": 12, "phi_depth": None, "eta_order": 8, "coefficient_radius": 4},
    "constants": {"mode": "auto", "a": None, "k1": 0, "k2": 0, "a0": None, "radius": 12},
    "quadrature": {"nodes": 64, "fd_step": 4e-3, "fd_levels": 5},
    "oracle": {"cutoff": 16, "inner_radius": 4, "tolerance": None},
    "verify": {"only": [], "particles": [2, 3], "seed": 0},
    "output": {"path": None, "format": "json"},
}


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------- parsing


def load_schema(name: str) -> dict:
    return json.loads(resources.files("ecs").joinpath("schemas", name).read_text())


def parse_lambda(token) -> Tuple[float, str]:
    """``2.5``, ``5/2`` or ``sqrt2`` / ``sqrt(2)`` -> ``(value, label)``."""
    if isinstance(token, (int, float)) and not isinstance(token, bool):
        return float(token), repr(float(token))
    text = str(token).strip().replace(" ", "")
    m = re.fullmatch(r"sqrt\(?(\d+(?:\.\d+)?)\)?", text)
    if m:
        return math.sqrt(float(m.group(1))), f"sqrt{m.group(1)}"
    m = re.fullmatch(r"(-?\d+)/(\d+)", text)
    if m:
        frac = Fraction(int(m.group(1)), int(m.group(2)))
        return float(frac), f"{frac.numerator}/{frac.denominator}"
    try:
        return float(text), text
    except ValueError:
        raise ConfigError(f"cannot parse lambda {token!r}") from None


def parse_ints(text: str) -> List[int]:
    try:
        return [int(v) for v in str(text).split(",") if v.strip() != ""]
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


def parse_floats(text: str) -> List[float]:
    try:
        return [float(v) for v in str(text).split(",") if v.strip() != ""]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then flags; validated against the shipped schema."""
    cfg = copy.deepcopy(DEFAULTS)
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                user = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
        _validate_config(user)
        cfg = _merge(cfg, user)
    flags: Dict[str, Any] = {}

    def put(section, key, value):
        if value is not None:
            flags.setdefault(section, {})[key] = value

    if args.n is not None:
        flags["target"] = parse_ints(args.n)
    if args.lam is not None:
        put("model", "lambda", args.lam)
    if args.q is not None:
        qs = parse_floats(args.q)
        put("model", "q", qs if len(qs) > 1 or args.command == "qseries" else qs[0])
    if getattr(args, "method", None) is not None:
        flags["method"] = args.method
    put("policy", "s_max", args.smax)
    put("policy", "nu_cutoff", args.nucut)
    put("policy", "shell_radius", args.shell)
    put("policy", "phi_depth", args.phi_depth)
    put("policy", "eta_order", args.orders)
    put("constants", "a", args.a)
    put("constants", "mode", args.delta_mode)
    put("constants", "k1", args.k1)
    put("constants", "k2", args.k2)
    put("constants", "a0", args.a0)
    put("quadrature", "nodes", args.nodes)
    put("oracle", "cutoff", getattr(args, "cutoff", None))
    put("oracle", "tolerance", getattr(args, "tol", None))
    if getattr(args, "only", None):
        put("verify", "only", [v for v in args.only.split(",") if v])
    if getattr(args, "N", None) is not None:
        put("verify", "particles", [args.N])
    put("verify", "seed", getattr(args, "seed", None))
    put("output", "path", args.out)
    put("output", "format", args.format)
    cfg = _merge(cfg, flags)
    _validate_config(cfg)
    parse_lambda(cfg["model"]["lambda"])
    return cfg


def _validate_config(doc: dict) -> None:
    try:
        jsonschema.validate(doc, load_schema("config-v1.json"))
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise ConfigError(f"config invalid at '{path}': {exc.message}") from None


def model_params(cfg: dict, q: Optional[float] = None) -> ModelParams:
    lam, label = parse_lambda(cfg["model"]["lambda"])
    qv = cfg["model"]["q"] if q is None else q
    if isinstance(qv, list):
        if len(qv) != 1:
            raise ConfigError("this command takes a single q")
        qv = qv[0]
    N = len(cfg["target"])
    try:
        return ModelParams.make(N, lam, float(qv), label)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def policy_of(cfg: dict) -> TruncationPolicy:
    p = cfg["policy"]
    try:
        return TruncationPolicy(s_max=p["s_max"], nu_cutoff=p["nu_cutoff"], shell_radius=p["shell_radius"], phi_depth=p["phi_depth"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def constants_of(cfg: dict, n: Sequence[int], params: ModelParams) -> Optional[HypothesisConstants]:
    c = cfg["constants"]
    mode = c["mode"]
    if mode == "auto":
        consts = default_constants(n, params, c["radius"])
    elif mode in MODES:
        try:
            consts = hypothesis_constants(n, params, mode, c["radius"], k1=c["k1"], k2=c["k2"], a0=c["a0"])
        except HypothesisError as exc:
            raise ConfigError(str(exc)) from None
    else:
        raise ConfigError(f"unknown delta mode {mode!r}")
    if c["a"] is not None:
        a = float(c["a"])
        probe = HypothesisConstants(a, 1.0, "user", certified=False)
        delta = check_hypothesis(n, params, probe, c["radius"])
        if delta <= 0:
            raise ConfigError(f"a = {a} hits a free-energy difference exactly")
        consts = HypothesisConstants(a, delta, "user", radius=c["radius"], certified=False)
    return consts


# --------------------------------------------------------------------------- serialization


def _num(x):
    """JSON-safe float: non-finite values become strings."""
    if isinstance(x, (complex, np.complexfloating)):
        return {"re": _num(x.real), "im": _num(x.imag)}
    x = float(x)
    if math.isfinite(x):
        return x
    return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating, complex, np.complexfloating)):
        return _num(obj)
    if obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return str(obj)


_DIAG_KEYS = ("walk_depth", "walk_tail", "iterations", "damping", "shell_size", "last_term", "a", "alpha_bound_ratio", "partners", "mixing")


def spectral_record(res: SpectralResult, coef_radius: int) -> dict:
    cmap = res.coefficients.restrict(coef_radius)
    coeffs = [{"m": list(m), "value": v} for m, v in sorted(cmap.items_absolute())]
    consts = None
    if res.constants is not None:
        c = res.constants
        consts = {"a": c.a, "delta": c.delta, "mode": c.mode, "certified": c.certified}
    gate = None
    if res.gate is not None:
        g = res.gate
        gate = {"B": g.B, "passed": g.gate_passed, "enclosure": g.enclosure, "enclosure_ok": g.enclosure_ok}
    diag = {k: res.diagnostics[k] for k in _DIAG_KEYS if k in res.diagnostics}
    return _jsonable(
        {
            "method": res.method,
            "base": list(res.base),
            "eigenvalue": res.eigenvalue,
            "E0": res.diagnostics.get("E0"),
            "eta_terms": res.eta_terms,
            "coefficients": coeffs,
            "constants": consts,
            "gate": gate,
            "diagnostics": diag,
            "flags": res.flags,
        }
    )


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    if isinstance(v, (list, tuple)):
        return " ".join(_fmt(x) for x in v)
    if v is None:
        return ""
    if isinstance(v, dict):
        return json.dumps(v, sort_keys=True)
    return str(v)


def write_csv(doc: dict, rows: List[dict]) -> str:
    buf = io.StringIO()
    buf.write("# schema: " + doc["schema"] + "\n")
    buf.write("# command: " + doc["command"] + "\n")
    buf.write("# status: " + doc["status"] + "\n")
    buf.write("# config: " + json.dumps(doc["config"], sort_keys=True) + "\n")
    if doc.get("error"):
        buf.write("# error: " + doc["error"] + "\n")
    if rows:
        keys: List[str] = []
        for r in rows:
            for k in r:
                if k not in keys:
                    keys.append(k)
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(keys)
        for r in rows:
            w.writerow([_fmt(r.get(k)) for k in keys])
    return buf.getvalue()


def emit(doc: dict, rows: List[dict], cfg: dict) -> str:
    jsonschema.validate(doc, load_schema("result-v1.json"))
    if cfg["output"]["format"] == "csv":
        text = write_csv(doc, rows)
    else:
        text = json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"
    path = cfg["output"]["path"]
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return text


# --------------------------------------------------------------------------- commands


def _run_method(method: str, n, params, policy, consts, cfg) -> List[SpectralResult]:
    if method == "perturbative":
        return [perturbative_solve(n, params, policy)]
    if method == "implicit":
        return [implicit_solve(n, params, policy, constants=consts)]
    if method == "explicit":
        a = cfg["constants"]["a"]
        return [explicit_solve(n, params, policy, constants=consts, eta_order=cfg["policy"]["eta_order"], a=a)]
    if method == "degenerate":
        return degenerate_solve(n, params, policy, radius=cfg["constants"]["radius"])
    raise ConfigError(f"unknown method {method!r}")


def cmd_spectrum(cfg: dict) -> Tuple[int, dict, List[dict]]:
    n = tuple(cfg["target"])
    params = model_params(cfg)
    policy = policy_of(cfg)
    method = cfg["method"]
    methods = ["perturbative", "implicit", "explicit"] if method == "all" else [method]
    consts = constants_of(cfg, n, params) if method != "degenerate" else None
    results: List[SpectralResult] = []
    for m in methods:
        results.extend(_run_method(m, n, params, policy, consts, cfg))
    radius = cfg["policy"]["coefficient_radius"]
    records = [spectral_record(r, radius) for r in results]
    doc: Dict[str, Any] = {"results": records}
    if len(results) > 1 and method == "all":
        vals = [r.eigenvalue for r in results]
        doc["agreement"] = {"max_pairwise": _num(max(abs(a - b) for a in vals for b in vals))}
    rows = []
    for r in records:
        rows.append({"method": r["method"], "base": r["base"], "m": None, "kind": "eigenvalue", "value": r["eigenvalue"]})
        for i, t in enumerate(r["eta_terms"], 1):
            rows.append({"method": r["method"], "base": r["base"], "m": i, "kind": "eta_term", "value": t})
        for c in r["coefficients"]:
            rows.append({"method": r["method"], "base": r["base"], "m": c["m"], "kind": "coefficient", "value": c["value"]})
    return EXIT_OK, doc, rows


def cmd_oracle_compare(cfg: dict) -> Tuple[int, dict, List[dict]]:
    n = tuple(cfg["target"])
    params = model_params(cfg)
    if params.N > 4:
        raise ConfigError("oracle-compare needs N <= 4")
    policy = policy_of(cfg)
    consts = constants_of(cfg, n, params)
    o = cfg["oracle"]
    op = build_truncated_operator(n, params, o["cutoff"])
    E_or, cmap_or, info = oracle_eigenpair(op, n)
    inner = o["inner_radius"]
    ref = cmap_or.restrict(inner)
    method = cfg["method"]
    methods = ["perturbative", "implicit", "explicit"] if method == "all" else [method]
    rows = [{"method": "oracle", "eigenvalue": E_or, "abs_diff": 0.0, "coef_max_err": 0.0}]
    for m in methods:
        for r in _run_method(m, n, params, policy, consts, cfg):
            err = max((abs(r.coefficients[k] - v) for k, v in ref.items_absolute()), default=0.0)
            rows.append({"method": r.method, "eigenvalue": r.eigenvalue, "abs_diff": abs(r.eigenvalue - E_or), "coef_max_err": err})
    code = EXIT_OK
    tol = o["tolerance"]
    if tol is not None and any(r["abs_diff"] > tol * max(1.0, abs(E_or)) for r in rows):
        code = EXIT_CHECK
    doc = {"rows": _jsonable(rows), "oracle": _jsonable({"basis_size": info["basis_size"], "projector_weight": info["projector_weight"], "imag_flag": info["imag_flag"]})}
    return code, doc, rows


def cmd_verify(cfg: dict) -> Tuple[int, dict, List[dict]]:
    v = cfg["verify"]
    q = cfg["quadrature"]
    try:
        quad = QuadratureConfig(nodes_per_contour=q["nodes"], fd_step=q["fd_step"], fd_levels=q["fd_levels"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    vc = VerifyConfig(seed=v["seed"], particles=tuple(v["particles"]), quad=quad)
    try:
        results = run_suite(vc, v["only"] or None)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from None
    checks = []
    rows = []
    for r in results:
        d = r.as_dict()
        d.pop("seconds")
        checks.append(_jsonable(d))
        rows.append({k: d[k] for k in ("name", "tag", "residual", "tolerance", "passed", "asserted")})
    code = EXIT_OK if suite_passed(results) else EXIT_CHECK
    return code, {"checks": checks}, rows


def fit_slopes(qs: Sequence[float], table: np.ndarray) -> List[dict]:
    """Least-squares slope of ``log|term_m|`` against ``log q`` over ``q > 0`` rows."""
    out = []
    qs = np.asarray(qs, float)
    for m in range(table.shape[1]):
        vals = np.abs(table[:, m])
        mask = (qs > 0) & (vals > 0)
        if mask.sum() >= 2:
            slope = float(np.polyfit(np.log(qs[mask]), np.log(vals[mask]), 1)[0])
        else:
            slope = math.nan
        out.append({"m": m + 1, "slope": slope, "expected": 2.0 * (m + 1), "points": int(mask.sum())})
    return out


def cmd_qseries(cfg: dict) -> Tuple[int, dict, List[dict]]:
    n = tuple(cfg["target"])
    qs = cfg["model"]["q"]
    qs = qs if isinstance(qs, list) else [qs]
    policy = policy_of(cfg)
    M = cfg["policy"]["eta_order"]
    table = np.zeros((len(qs), M))
    rows = []
    gates = []
    for i, q in enumerate(qs):
        params = model_params(cfg, q)
        consts = constants_of(cfg, n, params)
        r = explicit_solve(n, params, policy, constants=consts, eta_order=M, a=cfg["constants"]["a"])
        table[i] = r.eta_terms
        gates.append(bool(r.gate.gate_passed) if r.gate is not None else None)
        for m, t in enumerate(r.eta_terms, 1):
            rows.append({"kind": "term", "q": float(q), "m": m, "value": t, "gate": gates[-1]})
    fits = fit_slopes(qs, table)
    for f in fits:
        rows.append({"kind": "fit", "q": None, "m": f["m"], "value": f["slope"], "gate": None})
    return EXIT_OK, {"rows": _jsonable(rows), "fits": _jsonable(fits)}, rows


COMMANDS = {
    "spectrum": cmd_spectrum,
    "oracle-compare": cmd_oracle_compare,
    "verify": cmd_verify,
    "qseries": cmd_qseries,
}


# --------------------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ecs", description="Elliptic Calogero-Sutherland eigenvalue solver.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file (flags override it)")
        p.add_argument("--n", help="target lattice vector, e.g. 1,0")
        p.add_argument("--lambda", dest="lam", help="coupling: 2.5, 5/2 or sqrt2")
        p.add_argument("--q", help="nome (qseries: comma-separated grid)")
        p.add_argument("--smax", type=int)
        p.add_argument("--nucut", type=int)
        p.add_argument("--shell", type=int)
        p.add_argument("--phi-depth", type=int)
        p.add_argument("--orders", type=int, help="eta order of the explicit series")
        p.add_argument("--a", type=float, help="expansion point / start value for Etilde")
        p.add_argument("--delta-mode", choices=["auto", *MODES])
        p.add_argument("--k1", type=int)
        p.add_argument("--k2", type=int)
        p.add_argument("--a0", type=float)
        p.add_argument("--nodes", type=int, help="quadrature nodes per contour")
        p.add_argument("--out", help="output file (default stdout)")
        p.add_argument("--format", choices=["json", "csv"])
        if name in ("spectrum", "oracle-compare"):
            p.add_argument("--method", choices=METHODS)
        if name == "oracle-compare":
            p.add_argument("--cutoff", type=int, help="oracle box half-width")
            p.add_argument("--tol", type=float, help="fail (exit 5) if a method misses the oracle by more")
        if name == "verify":
            p.add_argument("--only", help=f"comma-separated subset of: {', '.join(CHECKS)}")
            p.add_argument("--N", type=int, help="particle number for the N-dependent checks")
            p.add_argument("--seed", type=int)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg: Optional[dict] = None
    warns: List[str] = []
    rows: List[dict] = []
    body: Dict[str, Any] = {}
    error = None
    try:
        cfg = resolve_config(args)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            code, body, rows = COMMANDS[args.command](cfg)
        warns = sorted({str(w.message) for w in caught})
    except ConfigError as exc:
        code, error = EXIT_CONFIG, str(exc)
    except ResonanceEncountered as exc:
        code = EXIT_RESONANCE
        error = f"{exc}; resonance vector {exc.vector}; try --method degenerate"
    except (NoConvergence, TruncationTooSmall) as exc:
        code, error = EXIT_NO_CONVERGENCE, f"{type(exc).__name__}: {exc}"
    except (BoundViolation, OracleError) as exc:
        code, error = EXIT_CHECK, f"{type(exc).__name__}: {exc}"
    if cfg is None:
        sys.stderr.write(f"ecs: {error}\n")
        return code
    doc = {"schema": SCHEMA_ID, "command": args.command, "config": _jsonable(cfg), "status": STATUS[code], "exit_code": code}
    if error:
        doc["error"] = error
        sys.stderr.write(f"ecs: {error}\n")
    if warns:
        doc["warnings"] = warns
    doc.update(body)
    emit(doc, rows, cfg)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
