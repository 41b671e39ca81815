"""Betti numbers of random specs over a Laurent degree window.

For each spec the de Rham numbers (and the enhanced ones when phi is given)
are listed per multidegree, with a warning when nonzero classes sit on the
window boundary.
"""

import argparse

from prismcrystal.cohomology import DegreeWindow, dr_cohomology, enhanced_cohomology
from prismcrystal.random_specs import random_enhanced_spec, random_relative_spec


def show(name, rep):
    print(f"  {name}: totals {rep.totals}, euler balanced: {rep.euler_consistent()}")
    for k in sorted(rep.betti):
        if any(rep.betti[k]):
            print(f"    k={k}: {rep.betti[k]}")
    edge = rep.boundary_nonzero()
    if edge:
        print(f"    nonzero on the window boundary at {edge} (totals depend on the window)")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=4)
    ap.add_argument("--window", default="-2:2")
    ap.add_argument("--d", type=int, default=1)
    args = ap.parse_args()
    window = DegreeWindow.parse(args.window, args.d)
    for seed in range(args.count):
        for label, spec in (
            ("relative", random_relative_spec(seed, d=args.d, r=2, m=2)),
            ("enhanced", random_enhanced_spec(seed, d=args.d, r=2, m=2)),
        ):
            print(f"seed {seed} {label} ({spec.flavor.kind.value})")
            show("de Rham", dr_cohomology(spec, window))
            if spec.phi is not None:
                show("enhanced", enhanced_cohomology(spec, window))


if __name__ == "__main__":
    main()
