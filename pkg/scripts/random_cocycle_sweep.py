"""Build and verify stratifications for a range of seeded random specs.

Prints one line per spec with its shape, table size and timings, then a
summary.  Useful for watching how cost grows with d, r, m and the PD degree.
"""

import argparse
import time

from prismcrystal.random_specs import random_spec
from prismcrystal.stratification import (
    ARITHMETIC_FIRST,
    build_stratification,
    check_iteration,
    extract_connection,
    verify_cocycle,
)

KINDS = ("relative_smooth", "relative_log", "absolute_smooth", "absolute_log")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=40)
    ap.add_argument("--start", type=int, default=0)
    ap.add_argument("--pd-degree", type=int, default=6)
    args = ap.parse_args()

    bad = 0
    total = time.perf_counter()
    print(f"{'seed':>5} {'flavor':<16} d r m {'keys':>5} {'build':>7} {'verify':>7}  result")
    for seed in range(args.start, args.start + args.count):
        kind = KINDS[seed % 4]
        spec = random_spec(seed, kind)
        t0 = time.perf_counter()
        table = build_stratification(spec, args.pd_degree)
        t_build = time.perf_counter() - t0
        t0 = time.perf_counter()
        ok = verify_cocycle(table).passed
        t_verify = time.perf_counter() - t0
        ok = ok and check_iteration(table).passed and extract_connection(table) == spec
        ok = ok and table == build_stratification(spec, args.pd_degree, ordering=ARITHMETIC_FIRST)
        bad += not ok
        print(
            f"{seed:>5} {kind:<16} {spec.d} {spec.r} {spec.m} {len(table.keys()):>5} "
            f"{t_build:>6.3f}s {t_verify:>6.3f}s  {'ok' if ok else 'FAILED'}"
        )
    print(f"{args.count - bad}/{args.count} specs consistent in {time.perf_counter() - total:.1f}s")
    raise SystemExit(1 if bad else 0)


if __name__ == "__main__":
    main()
