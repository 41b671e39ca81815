"""Command-line entry point.

Exit status: 0 when every check passes, 1 on any failure, 2 when the only
non-passing checks are inconclusive, 3 on bad input.
"""

from __future__ import annotations

import argparse
import sys
import time
from contextlib import contextmanager
from typing import List, Optional

from .cohomology import (
    CohomologyError,
    DegreeWindow,
    dr_cohomology,
    enhanced_cohomology,
    sen_phi,
    sen_ring,
    sen_solve,
    verify_sen_exactness,
)
from .connections import (
    SmallnessCertificate,
    certify_a_small,
    check_enhanced_relation,
    check_integrability,
    check_nilpotence,
)
from .pdalgebra import verify_formal_identities
from .realization import RealizationError, check_intertwining, realize
from .records import (
    FAIL,
    INCONCLUSIVE,
    PASS,
    InputError,
    Report,
    SpecFile,
    dumps,
    group_element_from_record,
    matrix_from_record,
    read_json,
    table_from_record,
)
from .rings import SeriesMatrix, TruncatedSeries, ValuationConfig, rational, rational_str
from .stratification import (
    PreconditionFailed,
    StratificationTable,
    build_stratification,
    check_iteration,
    verify_cocycle,
)


@contextmanager
def _timed(store: dict):
    t0 = time.perf_counter()
    yield
    store["seconds"] = time.perf_counter() - t0


def _status(ok: bool) -> str:
    return PASS if ok else FAIL


def _load_spec(args) -> SpecFile:
    sf = SpecFile.from_record(read_json(args.spec, "spec"))
    if args.pd_degree is not None:
        sf.pd_degree = args.pd_degree
    if args.prime is not None:
        sf.prime = args.prime
    if args.nmax is not None:
        sf.n_max = args.nmax
    if args.cutoff is not None:
        sf.cutoff = args.cutoff
    if args.seed is not None:
        sf.seed = args.seed
    if getattr(args, "window", None):
        sf.window = DegreeWindow.parse(args.window, sf.spec.d)
    return sf


def _valuation(prime: int) -> ValuationConfig:
    try:
        return ValuationConfig(prime)
    except ValueError as exc:
        raise InputError(f"--prime: {exc}") from exc


def _structural(report: Report, sf: SpecFile):
    spec = sf.spec
    for fn in (check_integrability, check_nilpotence):
        t = {}
        with _timed(t):
            res = fn(spec)
        report.add(res.name, res.status, res.witness or None, t["seconds"])
    if spec.phi is not None:
        t = {}
        with _timed(t):
            res = check_enhanced_relation(spec)
        report.add(res.name, res.status, res.witness or None, t["seconds"])
        t = {}
        with _timed(t):
            cert = certify_a_small(spec.phi, spec.a, _valuation(sf.prime), sf.n_max, sf.cutoff)
        status = PASS if isinstance(cert, SmallnessCertificate) else INCONCLUSIVE
        report.add("a_smallness", status, cert.to_record(), t["seconds"])


def cmd_check(args) -> Report:
    sf = _load_spec(args)
    report = Report("check")
    _structural(report, sf)
    return report


def _mutate(table: StratificationTable) -> StratificationTable:
    """Add the identity to the first coefficient past the constant term."""
    keys = [k for k in table.keys() if k[0] + sum(k[1]) > 0]
    if keys:
        i, n = keys[0]
    elif table.flavor.is_relative:
        i, n = 0, (1,) + (0,) * (table.flavor.d - 1)
    else:
        i, n = 1, (0,) * table.flavor.d
    return table.with_entry(i, n, table.get(i, n) + SeriesMatrix.identity(table.r, table.flavor.m))


def _cocycle_records(report: Report, table: StratificationTable, bound: int):
    t = {}
    with _timed(t):
        rep = verify_cocycle(table, bound)
    report.add("cocycle", _status(rep.passed), rep.witness, t["seconds"])
    if rep.passed:
        t = {}
        with _timed(t):
            it = check_iteration(table)
        report.add("iteration", _status(it.passed), it.failure, t["seconds"])


def cmd_stratify(args) -> Report:
    sf = _load_spec(args)
    report = Report("stratify")
    t = {}
    try:
        with _timed(t):
            table = build_stratification(sf.spec, sf.pd_degree, cfg=_valuation(sf.prime))
    except PreconditionFailed as exc:
        report.add("preconditions", FAIL, exc.check.to_record(), 0.0)
        return report
    report.add("build", PASS, None, t["seconds"])
    if args.mutate:
        table = _mutate(table)
    report.payload["table"] = table.to_record()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(dumps(table.to_record()))
    if args.verify or args.mutate:
        _cocycle_records(report, table, sf.pd_degree)
    return report


def cmd_verify_cocycle(args) -> Report:
    table = table_from_record(read_json(args.table, "table"))
    if args.mutate:
        table = _mutate(table)
    bound = table.bound if args.pd_degree is None else args.pd_degree
    report = Report("verify-cocycle")
    _cocycle_records(report, table, bound)
    return report


def cmd_cohomology(args) -> Report:
    sf = _load_spec(args)
    window = sf.window or DegreeWindow.cube(sf.spec.d, 0, 0)
    report = Report("cohomology")
    for name, fn in (("de_rham", dr_cohomology), ("enhanced", enhanced_cohomology)):
        if name == "enhanced" and sf.spec.phi is None:
            continue
        t = {}
        try:
            with _timed(t):
                coh = fn(sf.spec, window)
        except CohomologyError as exc:
            report.add(f"{name}_cohomology", FAIL, {"error": str(exc)}, 0.0)
            continue
        rec = coh.to_record()
        report.add(f"{name}_euler_balance", _status(coh.euler_consistent()), None, t["seconds"])
        report.payload[name] = rec
    return report


def cmd_identities(args) -> Report:
    degree = 6 if args.pd_degree is None else args.pd_degree
    report = Report("identities")
    t = {}
    with _timed(t):
        rep = verify_formal_identities(degree)
    report.add("formal_identities", _status(rep.passed), rep.first_difference, t["seconds"])
    report.payload["degree"] = degree
    report.payload["checks"] = rep.checks
    return report


def cmd_sen(args) -> Report:
    bound = 8 if args.pd_degree is None else args.pd_degree
    a = rational(args.a)
    if a == 0:
        raise InputError("--a must be nonzero")
    m = args.m
    ring = sen_ring(bound, m)
    if args.b_file:
        rec = read_json(args.b_file, "b")
        rows = rec.get("coefficients") if isinstance(rec, dict) else None
        if not isinstance(rows, list) or len(rows) > bound + 1:
            raise InputError(f"b: 'coefficients' must list at most {bound + 1} X-degrees")
        terms = {}
        for n, row in enumerate(rows):
            if not isinstance(row, list) or len(row) > m:
                raise InputError(f"b.coefficients[{n}]: at most {m} eps-coefficients")
            try:
                terms[(n,)] = TruncatedSeries(m, [rational(c) for c in row])
            except (TypeError, ValueError) as exc:
                raise InputError(f"b.coefficients[{n}]: {exc}") from exc
        b = ring.from_terms(terms)
    else:
        b = ring.var("X")
    report = Report("sen")
    t = {}
    with _timed(t):
        f = sen_solve(b, a)
        residual = sen_phi(f, a) - b
    top_only = all(exp[0] == bound for exp in residual.terms)
    report.add("solve_residual_top_degree", _status(top_only), None, t["seconds"])
    phi_M = None
    if args.phi_file:
        rec = read_json(args.phi_file, "phi")
        r = rec.get("r") if isinstance(rec, dict) else None
        if not isinstance(r, int):
            raise InputError("phi: expected fields 'r' and 'phi'")
        phi_M = matrix_from_record(rec.get("phi"), r, m, "phi.phi")
    t = {}
    with _timed(t):
        ex = verify_sen_exactness(bound, a, m, phi_M)
    report.add("short_exact_sequence", _status(ex.injective and ex.kernel_equals_image and ex.surjective_below_top), None, t["seconds"])
    if phi_M is not None:
        status = {"pass": PASS, "fail": FAIL}.get(ex.intertwining, INCONCLUSIVE)
        report.add("intertwining", status, ex.details.get("intertwining"), 0.0)
    report.payload["solution"] = [
        [rational_str(c) for c in f.coefficient((n,)).coeffs] for n in range(bound + 1)
    ]
    report.payload["exactness"] = ex.to_record()
    return report


def cmd_realize(args) -> Report:
    sf = _load_spec(args)
    spec = sf.spec
    if spec.phi is None:
        raise InputError("realize needs an absolute or arithmetic spec with phi")
    g = group_element_from_record(read_json(args.group, "group"), spec.d, spec.m)
    report = Report("realize")
    t = {}
    try:
        with _timed(t):
            mat = realize(spec, g)
            ok, bad = check_intertwining(spec, g.gE_over_E)
    except RealizationError as exc:
        report.add("realize", INCONCLUSIVE, {"reason": str(exc)}, 0.0)
        return report
    report.add("realize", PASS, None, t["seconds"])
    report.add("intertwining", _status(ok), None if ok else {"index": bad}, 0.0)
    report.payload["matrix"] = mat.to_record()
    report.payload["group"] = g.to_record()
    return report


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--pd-degree", type=int, default=None, help="PD degree bound (default 6)")
    common.add_argument("--window", default=None, help="Laurent degree window, e.g. -1:1 or -1:1,0:2")
    common.add_argument("--prime", type=int, default=None, help="prime for valuation scans (default 2)")
    common.add_argument("--nmax", type=int, default=None, help="steps in the smallness scan")
    common.add_argument("--cutoff", type=int, default=None, help="valuation cutoff for the smallness scan")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--format", choices=("text", "machine"), default="text")

    parser = argparse.ArgumentParser(prog="prismcrystal", description="Exact checks for truncated de Rham crystals.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", parents=[common], help="structural checks of a spec")
    p.add_argument("spec")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("stratify", parents=[common], help="build the stratification table")
    p.add_argument("spec")
    p.add_argument("--verify", action="store_true", help="also verify the cocycle condition")
    p.add_argument("--mutate", action="store_true", help="perturb one coefficient before verifying")
    p.add_argument("--out", default=None, help="write the table to this file")
    p.set_defaults(func=cmd_stratify)

    p = sub.add_parser("verify-cocycle", parents=[common], help="verify a table file")
    p.add_argument("table")
    p.add_argument("--mutate", action="store_true")
    p.set_defaults(func=cmd_verify_cocycle)

    p = sub.add_parser("cohomology", parents=[common], help="Betti numbers over a degree window")
    p.add_argument("spec")
    p.set_defaults(func=cmd_cohomology)

    p = sub.add_parser("identities", parents=[common], help="formal series identities")
    p.set_defaults(func=cmd_identities)

    p = sub.add_parser("sen", parents=[common], help="Sen operator solver and exactness")
    p.add_argument("--a", default="-1")
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--b-file", default=None, help="JSON with 'coefficients': rows per X-degree")
    p.add_argument("--phi-file", default=None, help="JSON with 'r' and 'phi' for the intertwining check")
    p.set_defaults(func=cmd_sen)

    p = sub.add_parser("realize", parents=[common], help="evaluate the semilinear action")
    p.add_argument("spec")
    p.add_argument("group")
    p.set_defaults(func=cmd_realize)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        report = args.func(args)
    except (InputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    out = report.machine() if args.format == "machine" else report.text()
    sys.stdout.write(out)
    return report.exit_code()


if __name__ == "__main__":
    raise SystemExit(main())
