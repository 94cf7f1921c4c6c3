"""Command line: simulate, charfn, density, verify.

Exit codes: 0 success, 1 verification failure, 2 invalid arguments,
3 numerical or simulation error.
"""
from __future__ import annotations

import argparse
import csv
from datetime import datetime, timezone
import hashlib
import json
import math
import os
import sys

from . import __version__, analytic
from .analytic import CharFnQuery, Space
from .errors import DomainError, QsaError
from .sim import Route, SimConfig, simulate

SAMPLES_NAME = "samples.csv"
CHARFN_NAME = "charfn.csv"
DENSITY_NAME = "density.csv"
REPORT_NAME = "verify_report.json"
MANIFEST_NAME = "manifest.json"

DEFAULT_METHOD = {Space.FLAT: "closed", Space.HYPERBOLIC: "integral", Space.PROJECTIVE: "series"}
ROUTE_SPACES = {
    Route.TIMECHANGE: set(Space),
    Route.DIRECT: {Space.FLAT},
    Route.AMBIENT: {Space.PROJECTIVE},
}


class UsageError(Exception):
    """Arguments that parse but do not make sense together (exit 2)."""


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def content_hash(params: dict) -> str:
    """git blob hash of the canonical JSON encoding of the parameters."""
    body = json.dumps(params, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()


def manifest_text(manifest: dict) -> str:
    return json.dumps(manifest, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_manifest(out_dir: str, command: str, params: dict, files: list[str]) -> dict:
    manifest = {
        "command": command,
        "parameters": params,
        "seed": params.get("seed"),
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
        "content_hash": content_hash(params),
        "files": files,
    }
    with open(os.path.join(out_dir, MANIFEST_NAME), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(manifest_text(manifest))
    return manifest


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def parse_vector(text: str) -> tuple:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {text!r}")
    try:
        vec = tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number in {text!r}") from None
    if not all(math.isfinite(v) for v in vec):
        raise argparse.ArgumentTypeError(f"non-finite value in {text!r}")
    return vec


def parse_radii(text: str) -> list:
    try:
        radii = [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad radius list {text!r}") from None
    if not radii or any(not math.isfinite(r) or r < 0 for r in radii):
        raise argparse.ArgumentTypeError("radii must be finite and nonnegative")
    return radii


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _positive_float(text):
    v = float(text)
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError("must be a positive number")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qsa", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--space", required=True, choices=[s.value for s in Space])
        sp.add_argument("--n", type=_positive_int, default=1)
        sp.add_argument("--t", type=_positive_float, required=True)
        sp.add_argument("--out", required=True, help="output directory")

    s = sub.add_parser("simulate", help="Monte Carlo samples of the area")
    common(s)
    s.add_argument("--dt", type=_positive_float, default=1e-3)
    s.add_argument("--paths", type=_positive_int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--route", choices=[r.value for r in Route], default=Route.TIMECHANGE.value)

    c = sub.add_parser("charfn", help="characteristic function values")
    common(c)
    c.add_argument("--lambda", dest="lam", type=parse_vector, action="append", required=True,
                   help='"a,b,c"; repeatable')
    c.add_argument("--method", action="append", choices=["closed", "series", "integral"],
                   help="repeatable; defaults to the space's main method")

    d = sub.add_parser("density", help="area density at given radii")
    common(d)
    d.add_argument("--radii", type=parse_radii, required=True)

    v = sub.add_parser("verify", help="run the acceptance battery")
    v.add_argument("--suite", choices=["quick", "full"], default="quick")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", default=None, help="directory for the JSON report (stdout if omitted)")
    return p


def cmd_simulate(args) -> int:
    space, route = Space(args.space), Route(args.route)
    if space not in ROUTE_SPACES[route]:
        raise UsageError(f"route {route.value} is not available for the {space.value} space")
    cfg = SimConfig(space, args.n, args.t, args.dt, args.paths, args.seed)
    try:
        sample = simulate(cfg, route)
    except QsaError as exc:
        raise SimulationFailure(f"simulate_{route.value}: {exc}") from exc
    os.makedirs(args.out, exist_ok=True)
    t_col = fmt(cfg.t_final)
    rows = ([str(i), t_col, fmt(r), fmt(c), fmt(a[0]), fmt(a[1]), fmt(a[2])]
            for i, (r, c, a) in enumerate(zip(sample.r, sample.clock, sample.a)))
    _write_csv(os.path.join(args.out, SAMPLES_NAME),
               ["path_id", "time", "r", "clock", "aI", "aJ", "aK"], rows)
    params = {**cfg.as_dict(), "route": route.value, "n_steps": cfg.n_steps,
              "discarded_paths": sample.discarded}
    write_manifest(args.out, "simulate", params, [SAMPLES_NAME])
    return 0


def cmd_charfn(args) -> int:
    space = Space(args.space)
    methods = args.method or [DEFAULT_METHOD[space]]
    queries = [CharFnQuery(space, args.n, args.t, lam) for lam in args.lam]
    rows = []
    for method in methods:
        for lam, q in zip(args.lam, queries):
            try:
                val = analytic.char_fn(q, method)
            except DomainError as exc:
                raise UsageError(str(exc)) from exc
            except QsaError as exc:
                raise SimulationFailure(f"char_fn({method}) at lambda={lam}: {exc}") from exc
            rows.append([fmt(lam[0]), fmt(lam[1]), fmt(lam[2]), fmt(val), method])
    os.makedirs(args.out, exist_ok=True)
    _write_csv(os.path.join(args.out, CHARFN_NAME),
               ["lambda_I", "lambda_J", "lambda_K", "cf_value", "method"], rows)
    params = {"space": space.value, "n": args.n, "t": args.t, "lambdas": [list(l) for l in args.lam],
              "methods": methods}
    write_manifest(args.out, "charfn", params, [CHARFN_NAME])
    return 0


def cmd_density(args) -> int:
    space = Space(args.space)
    rows = []
    for rho in args.radii:
        try:
            val = analytic.density(space, rho, args.t, args.n)
        except QsaError as exc:
            raise SimulationFailure(f"density failed at radius {rho!r}: {type(exc).__name__}: {exc}") from exc
        rows.append([fmt(rho), fmt(val)])
    os.makedirs(args.out, exist_ok=True)
    _write_csv(os.path.join(args.out, DENSITY_NAME), ["radius", "density"], rows)
    params = {"space": space.value, "n": args.n, "t": args.t, "radii": args.radii}
    write_manifest(args.out, "density", params, [DENSITY_NAME])
    return 0


def cmd_verify(args) -> int:
    from .verify import report_json, run_suite

    report = run_suite(args.suite, args.seed, progress=lambda line: print(line, file=sys.stderr))
    text = report_json(report)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, REPORT_NAME), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if not report["all_passed"]:
        print("failed criteria: " + ", ".join(report["failed"]), file=sys.stderr)
        return 1
    return 0


class SimulationFailure(Exception):
    """Numerical failure inside a command (exit 3)."""


COMMANDS = {"simulate": cmd_simulate, "charfn": cmd_charfn, "density": cmd_density, "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, DomainError) as exc:
        print(f"qsa {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except SimulationFailure as exc:
        print(f"qsa {args.command}: {exc}", file=sys.stderr)
        return 3
    except QsaError as exc:
        print(f"qsa {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
