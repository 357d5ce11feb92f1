"""Heaviest-bin attack built from random side-information codes.

For each blocklength the script draws codes at rate R_SI(P, delta) + margin,
reports the exact distortion-violation probability of the code, the
success probability of the attack derived from it, and the oracle optimum.
"""

import argparse
import csv
import sys

import numpy as np

from deception.attack import code_violation_probability, construct_attack, deception_success_probability, random_rd_code
from deception.model_io import load_model
from deception.oracle import optimal_deception_prob
from deception.rd import rd_side_info


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model", default="models/dsbs.json")
    ap.add_argument("--delta", default="1/8")
    ap.add_argument("--margin", type=float, default=0.1, help="rate above R_SI, nats per letter")
    ap.add_argument("--n", default="4,6,8")
    ap.add_argument("--codes", type=int, default=5, help="random codes per blocklength")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    m = load_model(args.model)
    rate = rd_side_info(m.p, m.spec, args.delta).rate + args.margin
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["n", "rate_nats", "bins", "mean_violation_probability", "mean_attack_success_probability",
                  "oracle_p_star_probability"])
    for n in (int(t) for t in args.n.split(",")):
        viol, succ, bins = [], [], 0
        for k in range(args.codes):
            code = random_rd_code(m.p, m.spec, args.delta, n, rate, seed=args.seed + k)
            bins = code.index_count
            viol.append(code_violation_probability(code, m.p, m.spec, args.delta))
            f, _ = construct_attack(code, m.p, m.spec, args.delta)
            succ.append(float(deception_success_probability(f, m.p, m.spec, args.delta)))
        p_star = float(optimal_deception_prob(m.p, m.spec, args.delta, n).p_star)
        out.writerow([n, rate, bins, float(np.mean(viol)), float(np.mean(succ)), p_star])


if __name__ == "__main__":
    main()
