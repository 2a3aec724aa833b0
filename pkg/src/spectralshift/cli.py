"""Command line runner.

Exit codes: 0 success, 1 a configured check failed, 2 usage or schema
error, 3 numeric fault.
"""
import argparse
import csv
import hashlib
import io
import json
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import DEFAULT_TOLERANCES, ExperimentConfig, validate
from .density import SpectralShiftDensity, format_number
from .errors import NumericError, SpectralShiftError

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ output
def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_number(v + 0.0)  # no negative zero
    return str(v)


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, delimiter=",", lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [_jsonable(obj.real), _jsonable(obj.imag)]
    if isinstance(obj, (float, np.floating)):
        x = float(obj) + 0.0
        if not math.isfinite(x):
            return None
        return float(format_number(x))
    if isinstance(obj, SpectralShiftDensity):
        return obj.to_dict()
    return obj


def json_text(obj):
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _emit(text, out):
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _load_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise UsageError(f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"invalid JSON in {path}: {exc}") from exc


def _matrix(rows):
    return np.array([[complex(*v) if isinstance(v, list) else v for v in row] for row in rows], dtype=complex)


def _parse_grid(spec):
    try:
        a, b, n = spec.split(":")
        return np.linspace(float(a), float(b), int(n))
    except ValueError as exc:
        raise UsageError(f"grid must look like start:stop:num, got {spec!r}") from exc


# ---------------------------------------------------------------- commands
def cmd_clifford(d_list, tol=DEFAULT_TOLERANCES["clifford"]):
    from .clifford import build_clifford, identity_residuals

    rows, worst = [], 0.0
    for d in d_list:
        if d < 1 or d % 2 == 0:
            raise UsageError(f"d must be odd and positive, got {d}")
        res = identity_residuals(build_clifford(d))
        mx = max(res.values())
        worst = max(worst, mx)
        rows.append([d, res["anticommutation"], res["anti_hermitian"], res["full_trace"], res["short_trace"], mx])
    text = csv_text(["d", "anticommutation", "anti_hermitian", "full_trace", "short_trace", "max"], rows)
    return text, worst < tol


def _lattice_model(block):
    from .lattice import LatticeModel

    return LatticeModel.from_config(block.as_model_dict())


def cmd_ssf(cfg_raw):
    """``cfg_raw`` is a lattice model block or a matrix block ``{n, A, T0, T}``."""
    from .config import LatticeConfig, SsfConfig
    from .ssf import eta_callias, ssf_density

    if "potential" in cfg_raw:
        model = _lattice_model(LatticeConfig.model_validate(cfg_raw))
        return eta_callias(model).to_json()
    block = SsfConfig.model_validate(cfg_raw)
    A = _matrix(block.A)
    T0 = _matrix(block.T0) if block.T0 is not None else None
    T = [_matrix(t) for t in block.T]
    return ssf_density(block.n, A, T0, T).to_json()


def cmd_trace_compare(block, tol=DEFAULT_TOLERANCES["trace_relgap"], floor=1e-3):
    from .lattice import assemble, heat_trace_diff, rhs_trace_formula

    model = _lattice_model(block)
    ts = block.t_list or [0.5 / model.potential.scale ** 2]
    ops = assemble(model)
    lhs = heat_trace_diff(ops, ts)
    rhs = rhs_trace_formula(model, ts, points=block.rhs_points)
    rows = []
    for t, l, r in zip(ts, np.atleast_1d(lhs), np.atleast_1d(rhs)):
        rows.append([t, l, r, abs(l - r) / max(abs(l), abs(r), floor)])
    ok = all(row[3] <= tol for row in rows)
    return csv_text(["t", "lhs", "rhs", "relgap"], rows), ok, rows


def cmd_transform_xi(eta, d, grid):
    from .errors import HypothesisNotMetError
    from .transform import xi_dminus1_from_eta, xi_from_eta, xi_k_from_eta

    xi = np.real(xi_from_eta(eta, d)(grid))
    xik = np.real(xi_k_from_eta(eta, d)(grid))
    try:
        xid = np.real(xi_dminus1_from_eta(eta, d)(grid))
    except HypothesisNotMetError as exc:
        sys.stderr.write(f"xi^(d-1) not available: {exc}\n")
        xid = np.full(grid.shape, math.nan)
    rows = [[l, a, b, c] for l, a, b, c in zip(grid, xi, xik, xid)]
    return csv_text(["lambda", "xi", "xi_k", "xi_dminus1"], rows)


def cmd_transform_witten(eta, d):
    from .transform import witten_index

    rep = witten_index(eta, d)
    return {"L": rep["L"], "index": rep["index"], "index_direct": rep["index_direct"],
            "diagnostics": rep["diagnostics"]}


def _potential(name):
    from .dirac_example import PotentialV

    return {"hedgehog": PotentialV.hedgehog, "scalar": PotentialV.scalar, "zero": PotentialV.zero}[name]()


def cmd_example_index(block, seed, tolerances):
    from .dirac_example import integrated_index_density, pipeline_index, winding_index

    V = _potential(block.potential)
    methods = ["winding", "density", "pipeline"] if block.method == "all" else [block.method]
    report = {"potential": block.potential, "seed": seed, "routes": {}}
    for m in methods:
        if m == "winding":
            report["routes"]["winding"] = winding_index(V, L=block.winding_L, n=block.winding_n)
        elif m == "density":
            report["routes"]["density"] = integrated_index_density(
                V, n=block.samples if block.integrator == "mc" else block.grid_points,
                method=block.integrator, seed=seed)
        elif m == "pipeline":
            rep = pipeline_index(V, n=block.grid_points, method="grid", seed=seed)
            report["routes"]["pipeline"] = {"index": rep["index"], "index_direct": rep["index_direct"],
                                            "L": rep["L"], "diagnostics": rep["diagnostics"]}
    ok = _index_checks(report, tolerances)
    report["checks"] = ok
    return report, all(ok.values())


def _index_checks(report, tol):
    routes = report["routes"]
    checks = {}
    ref = None
    if "winding" in routes:
        w = routes["winding"]["index"]
        checks["winding_integer"] = abs(w - round(w)) <= tol["winding_integer"]
        ref = round(w)
    if ref is None:
        return checks
    scale = max(abs(ref), 1.0)
    if "density" in routes:
        checks["index_density"] = abs(routes["density"]["index"] - ref) <= tol["index_density"] * scale
    if "pipeline" in routes:
        checks["index_pipeline"] = abs(routes["pipeline"]["index"] - ref) <= tol["index_pipeline"] * scale
    return checks


def cmd_example_kernels(d, check, tol=DEFAULT_TOLERANCES["schlafli"]):
    from .dirac_example import ExampleKernels, bessel_ratio, schlafli_residuals

    if check == "schlafli":
        rows = schlafli_residuals(d)
        text = csv_text(["a", "t", "quadrature", "exact", "residual"],
                        [[r["a"], r["t"], r["quadrature"], r["exact"], r["residual"]] for r in rows])
        return text, all(r["residual"] <= tol for r in rows)
    if check == "bessel-derivative":
        rows, ok = [], True
        for nu in (d / 2 - 1, d - 1.0):
            for a in (0.5, 1.0, 2.0):
                lam, e = 1.3, 1e-5
                num = (bessel_ratio(nu, a, lam + e) - bessel_ratio(nu, a, lam - e)) / (2 * e)
                res = abs(float(num) - float(bessel_ratio(nu - 1, a, lam)))
                ok &= res <= 1e-9
                rows.append([nu, a, lam, res])
        return csv_text(["nu", "a", "lambda", "residual"], rows), ok
    raise UsageError(f"unknown kernel check {check!r}")


# -------------------------------------------------------------- config runner
def _sha(raw):
    return hashlib.sha256(json.dumps(raw, sort_keys=True).encode()).hexdigest()


def _manifest(raw, cfg, artifacts, wall, status):
    import scipy

    return {
        "config_sha256": _sha(raw),
        "seed": cfg.seed,
        "kind": cfg.kind,
        "versions": {"package": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "wall_time_s": wall,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "artifacts": sorted(artifacts),
        "status": status,
    }


def run_config(raw, output_dir=None):
    """Run an experiment config, write artifacts and a manifest; return the exit code."""
    issues = validate(raw)
    if issues:
        for it in issues:
            sys.stderr.write(f"config error at {it['field']}: {it['message']}\n")
        return EXIT_USAGE
    cfg = ExperimentConfig.model_validate(raw)
    tol = {k: cfg.tolerance(k) for k in DEFAULT_TOLERANCES}
    out = Path(output_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    np.random.seed(cfg.seed)
    start = time.perf_counter()
    artifacts = {}
    summary = {}
    if cfg.kind == "clifford-check":
        text, ok = cmd_clifford(cfg.clifford.d, tol["clifford"])
        artifacts["clifford.csv"] = text
        summary["clifford"] = ok
    elif cfg.kind == "ssf":
        raw_block = raw["ssf"]
        artifacts["density.json"] = cmd_ssf(raw_block)
    elif cfg.kind == "trace-compare":
        text, ok, _ = cmd_trace_compare(cfg.lattice, tol["trace_relgap"])
        artifacts["trace_compare.csv"] = text
        summary["trace_relgap"] = ok
    elif cfg.kind == "transform":
        eta = SpectralShiftDensity.from_json(Path(cfg.transform.eta).read_text(encoding="utf-8"))
        if cfg.transform.mode == "xi":
            g = cfg.transform.grid
            if g is None:
                raise UsageError("transform xi needs a grid block")
            artifacts["xi.csv"] = cmd_transform_xi(eta, cfg.transform.d, np.linspace(g.start, g.stop, g.num))
        else:
            artifacts["witten.json"] = json_text(cmd_transform_witten(eta, cfg.transform.d))
    elif cfg.kind == "example":
        if cfg.example.method == "kernels":
            text, ok = cmd_example_kernels(cfg.example.d, "schlafli", tol["schlafli"])
            artifacts["kernels.csv"] = text
            summary["schlafli"] = ok
        else:
            report, ok = cmd_example_index(cfg.example, cfg.seed, tol)
            artifacts["example_index.json"] = json_text(report)
            summary.update(report["checks"])
    elif cfg.kind == "full-pipeline":
        report = full_pipeline(cfg, tol)
        artifacts["full_pipeline.json"] = json_text(report)
        artifacts["trace_compare.csv"] = report.pop("_trace_csv")
        summary.update(report["checks"])
    for name, text in artifacts.items():
        (out / name).write_text(text, encoding="utf-8")
    status = "pass" if all(summary.values()) else "fail"
    wall = time.perf_counter() - start
    (out / "manifest.json").write_text(json_text(_manifest(raw, cfg, artifacts, wall, status)), encoding="utf-8")
    (out / "summary.json").write_text(json_text({"checks": summary, "status": status}), encoding="utf-8")
    return EXIT_OK if status == "pass" else EXIT_CHECK


def full_pipeline(cfg, tol):
    """Lattice trace comparison, lattice eta/xi Laplace check, and the example's three index routes."""
    from .lattice import eta_and_xi_for_model

    text, ok_trace, rows = cmd_trace_compare(cfg.lattice, tol["trace_relgap"])
    model = _lattice_model(cfg.lattice)
    eta, _, lap = eta_and_xi_for_model(model, t_list=[r[0] for r in rows])
    index_report, _ = cmd_example_index(cfg.example, cfg.seed, tol)
    checks = dict(index_report["checks"])
    checks["trace_relgap"] = ok_trace
    return {
        "trace_compare": [{"t": r[0], "lhs": r[1], "rhs": r[2], "relgap": r[3]} for r in rows],
        "laplace_check": {"t": lap["t"], "minus_t_d_laplace_xi": lap["laplace"],
                          "laplace_eta_side": lap["laplace_eta"], "heat_trace": lap["lhs"]},
        "eta_total_mass": eta.total_mass(),
        "index_routes": index_report["routes"],
        "checks": checks,
        "_trace_csv": text,
    }


# --------------------------------------------------------------------- parser
def build_parser():
    p = argparse.ArgumentParser(prog="spectralshift", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("clifford-check", help="Clifford identity residuals as CSV")
    c.add_argument("--d", type=int, nargs="+", default=[3])
    c.add_argument("--out")

    s = sub.add_parser("ssf", help="higher order spectral shift densities")
    ssub = s.add_subparsers(dest="action", required=True)
    sc = ssub.add_parser("compute", help="density JSON from a model or matrix config")
    sc.add_argument("--config", required=True)
    sc.add_argument("--out")

    t = sub.add_parser("trace-compare", help="lattice heat trace against the potential-side formula")
    t.add_argument("--config", required=True)
    t.add_argument("--out")

    tr = sub.add_parser("transform", help="xi from eta, and the Witten index")
    trs = tr.add_subparsers(dest="action", required=True)
    tx = trs.add_parser("xi")
    tx.add_argument("--eta", required=True)
    tx.add_argument("--d", type=int, required=True)
    tx.add_argument("--grid", required=True, help="start:stop:num")
    tx.add_argument("--out")
    tw = trs.add_parser("witten")
    tw.add_argument("--eta", required=True)
    tw.add_argument("--d", type=int, required=True)
    tw.add_argument("--out")

    e = sub.add_parser("example", help="massless Dirac-Schroedinger example")
    es = e.add_subparsers(dest="action", required=True)
    ei = es.add_parser("index")
    ei.add_argument("--potential", choices=["hedgehog", "scalar", "zero"], default="hedgehog")
    ei.add_argument("--method", choices=["winding", "density", "pipeline", "all"], default="winding")
    ei.add_argument("--samples", type=int, default=65536)
    ei.add_argument("--integrator", choices=["mc", "grid"], default="mc")
    ei.add_argument("--seed", type=int, default=0)
    ei.add_argument("--out")
    ek = es.add_parser("kernels")
    ek.add_argument("--d", type=int, default=3)
    ek.add_argument("--check", choices=["schlafli", "bessel-derivative"], default="schlafli")
    ek.add_argument("--out")

    f = sub.add_parser("full-pipeline", help="run a full-pipeline experiment config")
    f.add_argument("--config", required=True)
    f.add_argument("--output-dir")

    r = sub.add_parser("run", help="run any experiment config")
    r.add_argument("--config", required=True)
    r.add_argument("--output-dir")

    v = sub.add_parser("validate", help="schema and plausibility checks for a config")
    v.add_argument("--config", required=True)
    return p


def _dispatch(args):
    from .config import ExampleConfig, LatticeConfig

    if args.command == "clifford-check":
        text, ok = cmd_clifford(args.d)
        _emit(text, args.out)
        return EXIT_OK if ok else EXIT_CHECK
    if args.command == "ssf":
        _emit(cmd_ssf(_load_json(args.config)), args.out)
        return EXIT_OK
    if args.command == "trace-compare":
        raw = _load_json(args.config)
        raw = raw.get("lattice", raw)
        text, ok, _ = cmd_trace_compare(LatticeConfig.model_validate(raw))
        _emit(text, args.out)
        return EXIT_OK if ok else EXIT_CHECK
    if args.command == "transform":
        if args.d < 1 or args.d % 2 == 0:
            raise UsageError(f"d must be odd and positive, got {args.d}")
        eta = SpectralShiftDensity.from_json(Path(args.eta).read_text(encoding="utf-8"))
        if args.action == "xi":
            _emit(cmd_transform_xi(eta, args.d, _parse_grid(args.grid)), args.out)
        else:
            _emit(json_text(cmd_transform_witten(eta, args.d)), args.out)
        return EXIT_OK
    if args.command == "example":
        if args.action == "kernels":
            text, ok = cmd_example_kernels(args.d, args.check)
            _emit(text, args.out)
            return EXIT_OK if ok else EXIT_CHECK
        block = ExampleConfig(potential=args.potential, method=args.method, samples=args.samples,
                              integrator=args.integrator)
        report, ok = cmd_example_index(block, args.seed, dict(DEFAULT_TOLERANCES))
        _emit(json_text(report), args.out)
        return EXIT_OK if ok else EXIT_CHECK
    if args.command in ("full-pipeline", "run"):
        raw = _load_json(args.config)
        if args.command == "full-pipeline" and isinstance(raw, dict):
            raw.setdefault("kind", "full-pipeline")
        return run_config(raw, args.output_dir)
    if args.command == "validate":
        issues = validate(_load_json(args.config))
        sys.stdout.write(json_text({"issues": issues}))
        return EXIT_OK if not issues else EXIT_USAGE
    raise UsageError(f"unknown command {args.command!r}")


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return _dispatch(args)
    except (NumericError, ArithmeticError, MemoryError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"numeric fault: {type(exc).__name__}: {exc}\n")
        diag = getattr(exc, "diagnostics", None)
        if diag:
            sys.stderr.write(json_text({"diagnostics": diag}))
        return EXIT_NUMERIC
    except (UsageError, ValueError, SpectralShiftError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
