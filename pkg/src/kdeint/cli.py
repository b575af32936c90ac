"""Command-line front end.

Single results are printed as JSON, bulk results written as CSV. Every
failure prints ``{"error": CODE, "message": ...}`` on stderr and exits with
the code's status.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .bandwidth import criterion_tables, parse_grid, rule_of_thumb_h0
from .density import default_threads, loo_density
from .errors import KdeintError, ParameterError, ParseError
from .estimators import estimate_from_numerators, estimate_regression_functional
from .experiments import (
    DEFAULT_SEED,
    ExperimentConfig,
    run_benchmark,
    run_clt_nonsmooth,
    run_clt_smooth,
    run_rate_check,
    run_regression_experiment,
)
from .io import read_sample
from .kernels import get_kernel
from .models import parse_integrand
from .report import write_clt, write_csv, write_csv_stream, write_rate
from .selftest import all_passed, format_table, run_selftest

ESTIMATE_VARIANTS = ("plain", "corrected", "trimmed-plain", "trimmed-corrected")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _emit_error("INVALID_ARGUMENT", message)
        sys.exit(2)


def _emit_error(code, message):
    print(json.dumps({"error": code, "message": message}), file=sys.stderr)


def _dump(doc) -> str:
    return json.dumps(_finite(doc), indent=2)


def _finite(value):
    # JSON has no NaN; report missing quantities as null.
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _finite(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite(v) for v in value]
    return value


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ParameterError(f"expected comma-separated numbers, got {text!r}") from None


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ParameterError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON in {path}: {exc.msg}", exc.lineno) from None
    if not isinstance(doc, dict):
        raise ParseError(f"config {path} must be a JSON object", 1)
    if doc.pop("schema", 1) != 1:
        raise ParameterError("unsupported config schema")
    return doc


def _merge(config: dict, args, keys) -> dict:
    """Config-file values overridden by flags that were given explicitly."""
    out = dict(config)
    for key in keys:
        value = getattr(args, key, None)
        if value is not None:
            out[key] = value
    return out


def _write_json(doc, out):
    text = _dump(doc)
    print(text)
    if out:
        Path(out).write_text(text + "\n")


# --------------------------------------------------------------------------
# subcommands


def cmd_integrate(args) -> int:
    s = read_sample(args.input, header=args.header, responses=args.responses)
    phi = parse_integrand(args.phi, s.d)
    k = get_kernel(args.kernel, s.d)
    variants = [v.strip() for v in args.variant.split(",") if v.strip()]
    for v in variants:
        if v not in ESTIMATE_VARIANTS:
            raise ParameterError(f"unknown variant {v!r}; choose from {ESTIMATE_VARIANTS}")
    if any(v.startswith("trimmed") for v in variants) and args.trim_b is None:
        raise ParameterError("trimmed variants need --trim-b")
    bases = list(dict.fromkeys(v.replace("trimmed-", "") for v in variants))
    if args.h == "auto":
        h0 = rule_of_thumb_h0(s)
        tables = criterion_tables(
            s, phi, parse_grid(args.grid, h0), tuple(bases), args.trim_unit_cube,
            kernel=k, trim_with=args.trim_with, h0=h0,
        )
        hs = {b: tables[b].h_star for b in bases}
    elif args.h == "rule-of-thumb":
        hs = dict.fromkeys(bases, rule_of_thumb_h0(s))
    else:
        try:
            h = float(args.h)
        except ValueError:
            raise ParameterError(f"--h must be a number, 'auto' or 'rule-of-thumb', got {args.h!r}") from None
        hs = dict.fromkeys(bases, h)
    numer = phi(s.points)
    results = []
    for v in variants:
        base = v.replace("trimmed-", "")
        loo = loo_density(s, k, hs[base], with_variance=(base == "corrected"), threads=default_threads())
        b = args.trim_b if v.startswith("trimmed") else None
        rep = estimate_from_numerators(numer, loo, v, corrected=(base == "corrected"), b=b)
        results.append({**rep.to_dict(), "kernel": k.id, "phi": phi.name})
    _write_json(results[0] if len(results) == 1 else {"results": results}, args.out)
    return 0


def cmd_select_bandwidth(args) -> int:
    s = read_sample(args.input, header=args.header)
    phi = parse_integrand(args.phi, s.d)
    h0 = rule_of_thumb_h0(s)
    sel = criterion_tables(
        s, phi, parse_grid(args.grid, h0), (args.variant,), args.trim_unit_cube,
        trim_with=args.trim_with, h0=h0,
    )[args.variant]
    records = [{"h": r.h, "criterion": r.criterion, "valid": r.valid} for r in sel.table]
    if args.out:
        write_csv(args.out, ("h", "criterion", "valid"), records)
    else:
        write_csv_stream(sys.stdout, ("h", "criterion", "valid"), records)
    print(json.dumps({"h_star": sel.h_star, "h0": sel.h0, "variant": sel.variant}), file=sys.stderr)
    return 0


BENCH_KEYS = (
    "model", "d", "n", "replications", "variants", "bandwidth", "h", "h_exponent", "h_constant",
    "phi", "trim_box", "trim_with", "trim_threshold", "grid_size", "seed", "threads", "out_dir",
)


def cmd_bench(args) -> int:
    doc = _merge(_load_config(args.config), args, BENCH_KEYS)
    if isinstance(doc.get("variants"), str):
        doc["variants"] = [v.strip() for v in doc["variants"].split(",") if v.strip()]
    doc.setdefault("seed", DEFAULT_SEED)
    cfg = ExperimentConfig.from_dict(doc)
    result = run_benchmark(cfg)
    print(_dump({"config": cfg.to_dict(), "target": result.target, "summary": [asdict(s) for s in result.summary]}))
    return 0


def cmd_rate(args) -> int:
    doc = _merge(_load_config(args.config), args, ("model", "d", "gamma", "n", "reps", "variants", "h_constant", "seed", "threads", "phi"))
    n_grid = doc.get("n", [250, 500, 1000, 2000, 4000])
    if isinstance(n_grid, str):
        n_grid = [int(v) for v in _floats(n_grid)]
    variants = doc.get("variants", ["corrected", "monte-carlo"])
    if isinstance(variants, str):
        variants = [v.strip() for v in variants.split(",") if v.strip()]
    if "gamma" not in doc:
        raise ParameterError("rate needs --gamma")
    check = run_rate_check(
        doc.get("model", "model1"), int(doc.get("d", 1)), float(doc["gamma"]), n_grid, int(doc.get("reps", 100)),
        variants=tuple(variants), phi=doc.get("phi", "sinprod"), h_constant=doc.get("h_constant"),
        seed=int(doc.get("seed", DEFAULT_SEED)), threads=doc.get("threads"),
    )
    if args.out:
        write_rate(check, args.out)
    print(_dump({"gamma": check.gamma, "h_constant": check.h_constant, "fits": {k: asdict(f) for k, f in check.fits.items()}}))
    return 0


def cmd_clt(args) -> int:
    common = ("n", "reps", "gamma", "h_constant", "seed", "threads")
    doc = _merge(_load_config(args.config), args, common + ("interval", "sigma"))
    kw = {k: doc[k] for k in common if k in doc}
    if args.kind == "smooth":
        summary = run_clt_smooth(**kw)
    elif args.kind == "nonsmooth":
        interval = doc.get("interval", (0.2, 0.8))
        if isinstance(interval, str):
            interval = _floats(interval)
        if len(interval) != 2:
            raise ParameterError("--interval takes a,b")
        summary = run_clt_nonsmooth(interval=tuple(interval), **kw)
    else:
        summary = run_regression_experiment(sigma=float(doc.get("sigma", 0.5)), **kw)
    if args.out:
        write_clt([summary], args.out)
    print(_dump(summary.to_dict()))
    return 0


def cmd_regress(args) -> int:
    s = read_sample(args.input, header=args.header, responses=True)
    psi = parse_integrand(args.psi, s.d)
    k = get_kernel(args.kernel, s.d)
    if args.h == "rule-of-thumb":
        h = rule_of_thumb_h0(s)
    else:
        try:
            h = float(args.h)
        except ValueError:
            raise ParameterError(f"--h must be a number or 'rule-of-thumb', got {args.h!r}") from None
    rep = estimate_regression_functional(s, psi, k, h)
    _write_json({**rep.to_dict(), "kernel": k.id, "psi": psi.name}, args.out)
    return 0


def cmd_selftest(args) -> int:
    results = run_selftest(quick=args.quick, fixture=args.fixture)
    print(format_table(results))
    if not all_passed(results):
        _emit_error("SELFTEST_FAILED", f"{sum(not r.passed for r in results)} check(s) failed")
        return 1
    return 0


# --------------------------------------------------------------------------
# parser


def _sample_flags(p, responses=True):
    p.add_argument("--input", required=True, help="CSV file or binary blob (detected by magic bytes)")
    p.add_argument("--header", action="store_true", help="CSV has a header line")
    if responses:
        p.add_argument("--responses", action="store_true", help="last CSV column is the response")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kdeint", description="Integral approximation by leave-one-out kernel smoothing.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("integrate", help="estimate the integral of phi from a sample")
    _sample_flags(p)
    p.add_argument("--phi", required=True, help="sinprod | zero | indicator:a,b | constant-on-box:lo,hi[,c] | custom-mixture:FILE")
    p.add_argument("--variant", default="corrected", help="comma-separated: plain, corrected, trimmed-plain, trimmed-corrected")
    p.add_argument("--h", default="auto", help="bandwidth: a number, 'auto' (simulation-validation) or 'rule-of-thumb'")
    p.add_argument("--kernel", default="order3", help="estimation kernel (order3 | epanechnikov)")
    p.add_argument("--grid", default="geometric:17", help="candidate grid for --h auto")
    p.add_argument("--trim-unit-cube", action="store_true", help="trimmed test function for designs on [0,1]^d")
    p.add_argument("--trim-with", default="candidate", choices=("candidate", "h0"))
    p.add_argument("--trim-b", type=float, default=None, help="threshold b of the trimmed variants")
    p.add_argument("--out", help="also write the JSON report here")
    p.set_defaults(func=cmd_integrate)

    p = sub.add_parser("select-bandwidth", help="simulation-validation criterion table as CSV")
    _sample_flags(p, responses=False)
    p.add_argument("--phi", required=True)
    p.add_argument("--variant", default="corrected", choices=("plain", "corrected"))
    p.add_argument("--grid", default="geometric:17", help="geometric[:COUNT] or explicit:h1,h2,...")
    p.add_argument("--trim-unit-cube", action="store_true")
    p.add_argument("--trim-with", default="candidate", choices=("candidate", "h0"))
    p.add_argument("--out", help="CSV path (stdout by default)")
    p.set_defaults(func=cmd_select_bandwidth)

    p = sub.add_parser("bench", help="replicated benchmark of estimator variants")
    p.add_argument("--config", help="JSON config (schema 1); flags override its values")
    p.add_argument("--model")
    p.add_argument("--d", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--reps", dest="replications", type=int)
    p.add_argument("--variants", help="comma-separated variants")
    p.add_argument("--bandwidth", choices=("simulation-validation", "rule-of-thumb", "fixed"))
    p.add_argument("--h", type=float)
    p.add_argument("--h-exponent", type=float)
    p.add_argument("--h-constant", type=float)
    p.add_argument("--phi")
    p.add_argument("--trim-box", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--trim-with", choices=("candidate", "h0"))
    p.add_argument("--trim-threshold", type=float)
    p.add_argument("--grid-size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", dest="out_dir")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("rate", help="log-log RMSE slope over a grid of sample sizes")
    p.add_argument("--config")
    p.add_argument("--model")
    p.add_argument("--d", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--n", help="comma-separated sample sizes")
    p.add_argument("--reps", type=int)
    p.add_argument("--variants")
    p.add_argument("--phi")
    p.add_argument("--h-constant", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("clt", help="empirical check of a limiting variance")
    p.add_argument("kind", choices=("smooth", "nonsmooth", "regression"))
    p.add_argument("--config")
    p.add_argument("--n", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--h-constant", type=float)
    p.add_argument("--interval", help="a,b for nonsmooth")
    p.add_argument("--sigma", type=float, help="noise level for regression")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_clt)

    p = sub.add_parser("regress", help="estimate int g psi from (X, Y) data")
    p.add_argument("--input", required=True, help="CSV with the response in the last column, or a blob")
    p.add_argument("--header", action="store_true")
    p.add_argument("--psi", required=True)
    p.add_argument("--h", default="rule-of-thumb")
    p.add_argument("--kernel", default="order3")
    p.add_argument("--out")
    p.set_defaults(func=cmd_regress)

    p = sub.add_parser("selftest", help="run installation checks")
    p.add_argument("--quick", action="store_true", help="fast subset (d = 1 only)")
    p.add_argument("--fixture", help="pinned-constants JSON to check against")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except KdeintError as exc:
        _emit_error(exc.code, str(exc))
        return exc.exit_status
    except OSError as exc:
        _emit_error("IO_ERROR", str(exc))
        return 3


if __name__ == "__main__":
    sys.exit(main())
