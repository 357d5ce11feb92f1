"""Probability of the Hamming l-neighborhood of a type class, l = 0..n.

A type class of small probability blows up to nearly the whole space after a
few symbol changes; the table shows how fast at small n.
"""

import argparse
import csv
import sys

from deception.prob import parse_rational
from deception.typeclasses import TypeClass, neighborhood_mass_profile, type_class_size


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--counts", default="2,6", help="type as comma-separated counts")
    ap.add_argument("--pmf", default="3/4,1/4", help="i.i.d. letter law, comma-separated rationals")
    args = ap.parse_args(argv)

    counts = tuple(int(c) for c in args.counts.split(","))
    pmf = [parse_rational(v) for v in args.pmf.split(",")]
    t = TypeClass(sum(counts), counts)
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["radius", "neighborhood_probability", "neighborhood_probability_rational", "class_size"])
    for l, mass in neighborhood_mass_profile(t, pmf):
        out.writerow([l, float(mass), str(mass), type_class_size(t)])


if __name__ == "__main__":
    main()
