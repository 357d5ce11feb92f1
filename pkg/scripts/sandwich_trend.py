"""Finite-n exponents -(1/n) ln P*_n against the limit E*(delta).

Prints CSV with the exact finite-n exponent, the limit, the dual lower bound
and the converse-side floor E* - |X||Y| ln(n+1) / n.
"""

import argparse
import csv
import math
import sys

from deception.exponent import ExponentOptions, deception_exponent
from deception.model_io import load_model
from deception.oracle import optimal_deception_prob


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model", default="models/dsbs.json")
    ap.add_argument("--delta", default="1/10")
    ap.add_argument("--n-max", type=int, default=10)
    ap.add_argument("--starts", type=int, default=16)
    args = ap.parse_args(argv)

    m = load_model(args.model)
    res = deception_exponent(m.p, m.spec, args.delta, ExponentOptions(starts=args.starts))
    cells = m.p.shape[0] * m.p.shape[1]
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["n", "p_star_probability", "exponent_n_nats", "e_star_nats", "dual_bound_nats",
                  "converse_floor_nats", "gap_nats"])
    for n in range(1, args.n_max + 1):
        r = optimal_deception_prob(m.p, m.spec, args.delta, n)
        floor = res.exponent - cells * math.log(n + 1) / n
        out.writerow([n, float(r.p_star), r.exponent_n, res.exponent, res.dual_bound, floor,
                      r.exponent_n - res.exponent])


if __name__ == "__main__":
    main()
