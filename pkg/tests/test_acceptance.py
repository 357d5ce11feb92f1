"""Acceptance criteria 1-10.

Each test records one line in REPORT; the conftest prints them after the run.
Run directly with ``python tests/test_acceptance.py``.
"""

import math
import random
import sys
import time
from fractions import Fraction

import numpy as np
import pytest

from deception.attack import (
    bin_masses,
    code_acceptance_mass,
    construct_attack,
    deception_success_probability,
    random_rd_code,
    random_table_code,
)
from deception.exponent import ExponentOptions, deception_exponent, delta_zero_closed_form
from deception.oracle import monte_carlo_success_rate, optimal_deception_prob, oracle_strategy
from deception.prob import DistortionSpec, JointPmf, conditional_entropy, independent_joint, symmetric_observation
from deception.rd import SLOPE_GRID, SideInfoRD, rd_curve, rd_side_info
from deception.typeclasses import (
    TypeClass,
    covering_bound,
    enumerate_types,
    greedy_permutation_cover,
    total_probability_exact,
    type_class_members,
    type_class_size,
    cover_is_complete,
)
from oracles import binary_entropy

REPORT: dict[str, str] = {}


def record(k: int, passed: bool, detail: str) -> None:
    line = f"criterion {k}: {'PASS' if passed else 'FAIL'}  {detail}"
    REPORT[f"{k:02d}"] = line
    print(line)


def random_rational_joint(rng, nx, ny, den=40):
    w = rng.integers(1, den, size=(nx, ny))
    return JointPmf.from_table([[f"{int(v)}/{int(w.sum())}" for v in row] for row in w])


def bsc():
    return symmetric_observation(["1/2", "1/2"], "1/10")


def test_criterion_01_classical_rd_closed_form():
    spec = DistortionSpec.hamming(2)
    worst_err, worst_time = 0.0, 0.0
    for p in ("1/10", "1/5", "3/10", "1/2"):
        q = independent_joint([1 - Fraction(p), Fraction(p)], ["1/2", "1/2"])
        pf = float(Fraction(p))
        for frac in (0.05, 0.25, 0.5, 0.75, 0.95):
            delta = pf * frac
            t0 = time.perf_counter()
            rate = rd_side_info(q, spec, delta).rate
            worst_time = max(worst_time, time.perf_counter() - t0)
            worst_err = max(worst_err, abs(rate - (binary_entropy(pf) - binary_entropy(delta))))
    ok = worst_err <= 1e-6 and worst_time < 1.0
    record(1, ok, f"max error {worst_err:.2e} nats (tol 1e-6), slowest point {worst_time:.3f} s (limit 1 s)")
    assert ok


def test_criterion_02_zero_distortion_conditional_entropy():
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(20):
        nx = 2 if i % 2 == 0 else 3
        q = random_rational_joint(rng, nx, 2)
        rate = rd_side_info(q, DistortionSpec.hamming(nx), 0).rate
        worst = max(worst, abs(rate - conditional_entropy(q.mass)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed < 5.0
    record(2, ok, f"max error {worst:.2e} nats (tol 1e-6), {elapsed:.2f} s total (limit 5 s)")
    assert ok


def test_criterion_03_delta_zero_exponent_closed_form():
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(20):
        k = 2 if i % 2 == 0 else 3
        p = random_rational_joint(rng, k, k)
        res = deception_exponent(p, DistortionSpec.hamming(k), 0)
        worst = max(worst, abs(res.exponent - delta_zero_closed_form(p)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-4 and elapsed < 60.0
    record(3, ok, f"max error {worst:.2e} nats (tol 1e-4), {elapsed:.1f} s total (limit 60 s)")
    assert ok


def test_criterion_04_fast_equals_naive():
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    mismatches, checked = 0, 0
    for _ in range(100):
        p = random_rational_joint(rng, 2, 2, den=12)
        d = rng.integers(0, 3, size=(2, 2))
        spec = DistortionSpec.from_table(d.tolist()) if d.max() > 0 else DistortionSpec.hamming(2)
        for delta in (Fraction(0), Fraction(1, 4), Fraction(1, 2)):
            for n in range(1, 5):
                a = optimal_deception_prob(p, spec, delta, n, mode="naive").p_star
                b = optimal_deception_prob(p, spec, delta, n, mode="fast").p_star
                mismatches += a != b
                checked += 1
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 120.0
    record(4, ok, f"{mismatches} mismatches in {checked} exact comparisons, {elapsed:.1f} s (limit 120 s)")
    assert ok


def test_criterion_05_sandwich_convergence():
    t0 = time.perf_counter()
    p, spec = bsc(), DistortionSpec.hamming(2)
    exact_zero = all(optimal_deception_prob(p, spec, 0, n).p_star == Fraction(9, 10) ** n for n in range(1, 11))
    zero_vals = [optimal_deception_prob(p, spec, 0, n).exponent_n for n in range(1, 11)]
    zero_ok = exact_zero and all(v == pytest.approx(-math.log(0.9), abs=1e-15) for v in zero_vals)

    e_star = deception_exponent(p, spec, "1/10").exponent
    e_n = {n: optimal_deception_prob(p, spec, "1/10", n).exponent_n for n in range(2, 11)}
    lower_ok = all(e_n[n] >= e_star - 4 * math.log(n + 1) / n for n in e_n)
    gap_ok = abs(e_n[10] - e_star) < abs(e_n[2] - e_star)
    elapsed = time.perf_counter() - t0
    ok = zero_ok and lower_ok and gap_ok and elapsed < 300.0
    record(5, ok, f"delta=0 exact for n=1..10: {zero_ok}; delta=1/10: E*={e_star:.6f}, "
                  f"|e_2-E*|={abs(e_n[2] - e_star):.4f}, |e_10-E*|={abs(e_n[10] - e_star):.4f}, "
                  f"converse bound {lower_ok}, {elapsed:.1f} s")
    assert ok


def test_criterion_06_pigeonhole():
    rng = np.random.default_rng(6)
    failures = 0
    for trial in range(50):
        n = int(rng.integers(1, 5))
        p = random_rational_joint(rng, 2, 2, den=10)
        spec = DistortionSpec.hamming(2)
        delta = Fraction(int(rng.integers(0, n + 1)), 2 * n)
        bins = int(rng.integers(1, 9))
        if trial % 2 == 0:
            code = random_table_code(n, bins, 2, 2, spec, seed=trial)
        else:
            code = random_rd_code(p, spec, delta, n, math.log(bins) / n, seed=trial)
        masses = bin_masses(code, p, spec, delta)
        covered = code_acceptance_mass(code, p, spec, delta)
        f, i = construct_attack(code, p, spec, delta, masses)
        pigeon = max(masses) >= covered / code.index_count
        exact = deception_success_probability(f, p, spec, delta) == max(masses) == masses[i - 1]
        failures += not (pigeon and exact)
    record(6, failures == 0, f"{failures} of 50 codes violate the pigeonhole or max-bin identity")
    assert failures == 0


def test_criterion_07_covering_bound():
    rnd = random.Random(7)
    t0 = time.perf_counter()
    worst_ratio, failures = 0.0, 0
    for i in range(200):
        n = rnd.randint(2, 7)
        m = 2 if i % 2 == 0 else 3
        counts = [0] * m
        for _ in range(n):
            counts[rnd.randrange(m)] += 1
        t = TypeClass(n, tuple(counts))
        members = list(type_class_members(t))
        s = rnd.sample(members, rnd.randint(1, len(members)))
        cover = greedy_permutation_cover(s, t)
        bound = covering_bound(len(members), len(s))
        failures += not (len(cover) <= bound and cover_is_complete(s, t, cover))
        worst_ratio = max(worst_ratio, len(cover) / bound)
    elapsed = time.perf_counter() - t0
    ok = failures == 0 and elapsed < 120.0
    record(7, ok, f"{failures} of 200 covers exceed the bound or miss members, "
                  f"largest size/bound {worst_ratio:.2f}, {elapsed:.1f} s")
    assert ok


def test_criterion_08_type_partition():
    bad = []
    for m in (2, 3, 4):
        for n in range(1, 11):
            if sum(type_class_size(t) for t in enumerate_types(n, m)) != m**n:
                bad.append((n, m))
    pmfs = [["1/2", "1/2"], ["1/6", "1/3", "1/2"], ["1/10", "1/5", "3/10", "2/5"], bsc()]
    prob_ok = all(total_probability_exact(n, q) == 1 for q in pmfs for n in range(1, 9))
    ok = not bad and prob_ok
    record(8, ok, f"partition identity failures {bad or 'none'} for n<=10, sizes 2..4; "
                  f"total probability exactly 1: {prob_ok}")
    assert ok


def test_criterion_09_monte_carlo():
    p, spec, delta, n = bsc(), DistortionSpec.hamming(2), Fraction(1, 8), 8
    res = optimal_deception_prob(p, spec, delta, n)
    f = oracle_strategy(res)
    exact = float(res.p_star)
    attempts = []
    for seed in (9, 10):
        est, se = monte_carlo_success_rate(f, p, spec, delta, n, 10**6, seed=seed)
        attempts.append((est, se))
        if abs(est - exact) <= 3 * se:
            break
    est, se = attempts[-1]
    ok = abs(est - exact) <= 3 * se
    record(9, ok, f"estimate {est:.6f} +/- {se:.6f} vs exact {exact:.6f} "
                  f"({abs(est - exact) / se:.2f} standard errors, {len(attempts)} run(s))")
    assert ok


def test_criterion_10_blahut_arimoto_monotone():
    rng = np.random.default_rng(10)
    t0 = time.perf_counter()
    worst_rise, curve_failures = 0.0, 0
    shapes = [(2, 2), (3, 2), (2, 3), (3, 3)]
    for i in range(20):
        nx, ny = shapes[i % 4]
        q = random_rational_joint(rng, nx, ny)
        d = rng.integers(0, 4, size=(nx, nx))
        np.fill_diagonal(d, 0)
        spec = DistortionSpec.from_table(d.tolist())
        solver = SideInfoRD(q, spec)
        for lam in SLOPE_GRID:
            h = solver.solve(float(lam), trace=True, strict=False, max_iter=2000).history
            if len(h) > 1:
                worst_rise = max(worst_rise, float(np.max(np.diff(h))))
        curve = rd_curve(q, spec)
        curve_failures += not (curve.is_nonincreasing() and curve.is_convex())
    elapsed = time.perf_counter() - t0
    # float noise: one ulp-scale rise of the objective is not an increase
    ok = worst_rise <= 1e-12 and curve_failures == 0
    record(10, ok, f"largest per-iteration objective rise {worst_rise:.1e} (float tol 1e-12) over 20 models x "
                   f"{len(SLOPE_GRID)} slopes; {curve_failures} curves not convex/non-increasing; {elapsed:.1f} s")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
