"""Command-line driver.

Subcommands:

* ``gen``     write a domain file from a shape family and parameters
* ``eig``     lowest Neumann eigenvalues of a domain file
* ``asym``    one-ball and two-ball asymmetries of a domain file
* ``certify`` full stability report of a domain file, as JSON
* ``sweep``   run a sweep config (or the default corpus) and emit artifacts
* ``report``  re-emit CSV/JSON/SVG artifacts from an existing corpus.csv

Exit codes: 0 on success, 1 on usage errors (bad arguments, unreadable
inputs, invalid config), 2 on numerical failures (eigensolver breakdown,
diverged searches, violated sweep invariants).

JSON output maps non-finite floats to null.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys

from .asymmetry import fraenkel, fraenkel2
from .certificate import TestPointSearchError, stability_report
from .domain import ShapeSpec, from_text, generate, to_text
from .spectral import EigensolverError, assemble, lowest_eigenpairs
from .sweep import (
    config_from_json,
    default_config,
    emit_report,
    fit_exponent,
    rows_from_csv,
    run_sweep,
    SweepConfig,
    SweepInvariantError,
)

__all__ = ["main"]

_USAGE_ERRORS = (ValueError, OSError, json.JSONDecodeError, KeyError)
_NUMERICAL_ERRORS = (
    EigensolverError,
    SweepInvariantError,
    TestPointSearchError,
    ArithmeticError,
)


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on usage errors; remap to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _parse_resolution(text: str) -> float:
    """Accept '1/64' fractions or plain decimals."""
    if "/" in text:
        num, den = text.split("/", maxsplit=1)
        value = float(num) / float(den)
    else:
        value = float(text)
    if not 0.0 < value < 1.0:
        raise ValueError(f"resolution must be in (0, 1), got {text!r}")
    return value


def _parse_params(pairs) -> dict:
    params = {}
    for pair in pairs:
        if "=" not in pair:
            raise ValueError(f"parameters take the form name=value, got {pair!r}")
        name, _, value = pair.partition("=")
        params[name] = float(value)
    return params


def _jsonable(obj):
    """Recursively convert to JSON-safe values; non-finite floats -> null."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return _jsonable(dataclasses.asdict(obj))
    return obj


def _emit(payload, out_path=None):
    text = json.dumps(_jsonable(payload), indent=2) + "\n"
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load_domain(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        return from_text(fh.read())


# ---------------------------------------------------------------------------
# subcommand handlers
# ---------------------------------------------------------------------------


def _cmd_gen(args) -> int:
    spec = ShapeSpec(args.family, _parse_params(args.params))
    d = generate(spec, _parse_resolution(args.resolution))
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(to_text(d))
    print(f"wrote {args.out} ({d.nx}x{d.ny} cells, h={d.h:.6g})")
    return 0


def _cmd_eig(args) -> int:
    d = _load_domain(args.domain)
    result = lowest_eigenpairs(assemble(d), k=args.k, tol=args.tol, seed=args.seed)
    _emit(
        {
            "h": d.h,
            "eigenvalues": list(result.eigenvalues),
            "residuals": list(result.residuals),
        },
        args.out,
    )
    return 0


def _cmd_asym(args) -> int:
    d = _load_domain(args.domain)
    one = fraenkel(d)
    two = fraenkel2(d, seed=args.seed)
    _emit(
        {
            "a1": one.value,
            "a1_center": list(one.optimizer.center),
            "a1_radius": one.optimizer.r,
            "a2": two.value,
            "a2_centers": [list(two.optimizer.c1), list(two.optimizer.c2)],
            "a2_radius": two.optimizer.r,
            "evaluations": one.evaluations + two.evaluations,
        },
        args.out,
    )
    return 0


def _cmd_certify(args) -> int:
    d = _load_domain(args.domain)
    spectral = lowest_eigenpairs(assemble(d), k=args.k, tol=args.tol, seed=args.seed)
    report = stability_report(d, spectral, seed=args.seed)
    _emit(report, args.out)
    return 0


def _cmd_sweep(args) -> int:
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            cfg = config_from_json(fh.read())
    else:
        cfg = default_config()
    if args.seed is not None or args.tol is not None or args.out is not None:
        cfg = SweepConfig(
            families=cfg.families,
            resolutions=cfg.resolutions,
            tol=cfg.tol if args.tol is None else args.tol,
            seed=cfg.seed if args.seed is None else args.seed,
            out_dir=cfg.out_dir if args.out is None else args.out,
        )
    rows = run_sweep(cfg)
    try:
        fit = fit_exponent(rows)
    except ValueError:
        fit = None
    paths = emit_report(rows, fit, cfg.out_dir, seed=cfg.seed)
    failed = sum(1 for r in rows if r.status != "ok")
    print(f"{len(rows)} rows ({failed} failed); artifacts: {paths['csv']}")
    return 0


def _cmd_report(args) -> int:
    with open(args.corpus, "r", encoding="utf-8") as fh:
        rows = rows_from_csv(fh.read())
    try:
        fit = fit_exponent(rows)
    except ValueError:
        fit = None
    out_dir = args.out
    if out_dir is None:
        import os

        out_dir = os.path.dirname(os.path.abspath(args.corpus))
    paths = emit_report(rows, fit, out_dir, seed=args.seed)
    print(f"re-emitted artifacts for {len(rows)} rows: {paths['csv']}")
    return 0


# ---------------------------------------------------------------------------
# parser assembly
# ---------------------------------------------------------------------------


def _build_parser() -> _Parser:
    parser = _Parser(prog="bhstab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_gen = sub.add_parser("gen", help="write a domain file from a shape spec")
    p_gen.add_argument("family", help="shape family (e.g. disk, two_disks, dumbbell)")
    p_gen.add_argument("params", nargs="*", help="shape parameters, name=value")
    p_gen.add_argument("--resolution", default="1/64", help="cell size, fraction or decimal")
    p_gen.add_argument("--out", required=True, help="output domain file")
    p_gen.set_defaults(handler=_cmd_gen)

    p_eig = sub.add_parser("eig", help="lowest Neumann eigenvalues of a domain file")
    p_eig.add_argument("domain", help="domain file from 'gen'")
    p_eig.add_argument("--k", type=int, default=3, help="number of eigenpairs")
    p_eig.add_argument("--tol", type=float, default=1e-8, help="eigensolver tolerance")
    p_eig.add_argument("--seed", type=int, default=0, help="solver seed")
    p_eig.add_argument("--out", default=None, help="write JSON here instead of stdout")
    p_eig.set_defaults(handler=_cmd_eig)

    p_asym = sub.add_parser("asym", help="one-ball and two-ball asymmetries")
    p_asym.add_argument("domain", help="domain file from 'gen'")
    p_asym.add_argument("--seed", type=int, default=42, help="search seed")
    p_asym.add_argument("--out", default=None, help="write JSON here instead of stdout")
    p_asym.set_defaults(handler=_cmd_asym)

    p_cert = sub.add_parser("certify", help="full stability report as JSON")
    p_cert.add_argument("domain", help="domain file from 'gen'")
    p_cert.add_argument("--k", type=int, default=3, help="number of eigenpairs")
    p_cert.add_argument("--tol", type=float, default=1e-8, help="eigensolver tolerance")
    p_cert.add_argument("--seed", type=int, default=0, help="search seed")
    p_cert.add_argument("--out", default=None, help="write JSON here instead of stdout")
    p_cert.set_defaults(handler=_cmd_certify)

    p_sweep = sub.add_parser("sweep", help="run a sweep config and emit artifacts")
    p_sweep.add_argument("--config", default=None, help="JSON sweep config (default corpus if omitted)")
    p_sweep.add_argument("--tol", type=float, default=None, help="override eigensolver tolerance")
    p_sweep.add_argument("--seed", type=int, default=None, help="override seed")
    p_sweep.add_argument("--out", default=None, help="override output directory")
    p_sweep.set_defaults(handler=_cmd_sweep)

    p_rep = sub.add_parser("report", help="re-emit artifacts from an existing corpus.csv")
    p_rep.add_argument("corpus", help="corpus.csv from a previous sweep")
    p_rep.add_argument("--seed", type=int, default=0, help="seed recorded in report.json")
    p_rep.add_argument("--out", default=None, help="output directory (default: alongside the CSV)")
    p_rep.set_defaults(handler=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.handler(args)
    except _NUMERICAL_ERRORS as exc:
        print(f"bhstab: numerical failure: {exc}", file=sys.stderr)
        return 2
    except _USAGE_ERRORS as exc:
        print(f"bhstab: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
