"""R_SI(Q, delta) on a grid of thresholds, with the slope that reaches each point.

Reads the joint law from a model file and prints CSV.
"""

import argparse
import csv
import math
import sys

import numpy as np

from deception.model_io import load_model
from deception.rd import InfeasibleDistortion, rd_side_info, zero_rate_distortion


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model", default="models/ternary.json")
    ap.add_argument("--points", type=int, default=21)
    args = ap.parse_args(argv)

    m = load_model(args.model)
    top = zero_rate_distortion(m.p, m.spec)
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["delta_per_letter", "rate_nats", "rate_bits", "lambda_nats_per_distortion", "achieved_distortion"])
    for delta in np.linspace(0.0, top * 1.1, args.points):
        try:
            pt = rd_side_info(m.p, m.spec, float(delta))
        except InfeasibleDistortion:
            continue
        out.writerow([float(delta), pt.rate, pt.rate / math.log(2), pt.slope, pt.distortion])


if __name__ == "__main__":
    main()
