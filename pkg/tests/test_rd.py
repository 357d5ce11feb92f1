import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from deception.prob import (
    DistortionSpec,
    JointPmf,
    conditional_entropy,
    conditional_mutual_information,
    expected_distortion,
    independent_joint,
    symmetric_observation,
)
from deception.rd import (
    ConvergenceError,
    InfeasibleDistortion,
    SideInfoRD,
    lossless_rate,
    rd_curve,
    rd_fixed_slope,
    rd_side_info,
    zero_rate_distortion,
)
from oracles import binary_entropy, brute_rd_binary


def random_joint(rng, nx, ny):
    w = rng.integers(1, 30, size=(nx, ny))
    return JointPmf.from_table([[f"{int(v)}/{int(w.sum())}" for v in row] for row in w])


def test_zero_slope_endpoint(dsbs, hamming2):
    pt = rd_fixed_slope(dsbs, hamming2, 0.0)
    assert pt.rate == 0.0
    # with Y, guessing xhat = y leaves distortion 1/10
    assert pt.distortion == pytest.approx(0.1)
    assert zero_rate_distortion(dsbs, hamming2) == pytest.approx(0.1)
    assert np.allclose(pt.channel.table[0, :, :], pt.channel.table[1, :, :])


def test_large_slope_endpoint_is_conditional_entropy(dsbs, hamming2):
    pt = rd_fixed_slope(dsbs, hamming2, 1e6)
    assert pt.distortion < 1e-6
    assert pt.rate == pytest.approx(conditional_entropy(dsbs.mass), abs=1e-6)


def test_binary_uniform_slope_hits_closed_form(hamming2):
    q = independent_joint(["1/2", "1/2"], ["1/2", "1/2"])
    # slope for distortion 0.1 on the binary Hamming curve is ln((1-D)/D)
    pt = rd_fixed_slope(q, hamming2, math.log(9))
    assert pt.distortion == pytest.approx(0.1, abs=1e-9)
    assert pt.rate == pytest.approx(0.368064, abs=1e-6)
    assert pt.rate == pytest.approx(math.log(2) - binary_entropy(0.1), abs=1e-9)


def test_zero_rate_region(dsbs, hamming2):
    assert rd_side_info(dsbs, hamming2, "1/10").rate == 0.0
    assert rd_side_info(dsbs, hamming2, "1/2").rate == 0.0


def test_zero_distortion_is_conditional_entropy(dsbs, hamming2):
    pt = rd_side_info(dsbs, hamming2, 0)
    assert pt.rate == pytest.approx(0.325083, abs=1e-6)
    assert pt.rate == pytest.approx(binary_entropy(0.1), abs=1e-9)
    assert lossless_rate(dsbs.mass) == pytest.approx(binary_entropy(0.1))


def test_independent_bernoulli_closed_form(hamming2):
    q = independent_joint(["4/5", "1/5"], ["1/2", "1/2"])
    pt = rd_side_info(q, hamming2, "1/10")
    assert pt.rate == pytest.approx(0.175319, abs=1e-6)
    assert pt.rate == pytest.approx(binary_entropy(0.2) - binary_entropy(0.1), abs=1e-9)


def test_returned_channel_attains_reported_point(dsbs, hamming2):
    pt = rd_side_info(dsbs, hamming2, "1/20")
    assert conditional_mutual_information(dsbs.mass, pt.channel) == pytest.approx(pt.rate, abs=1e-12)
    assert expected_distortion(dsbs.mass, pt.channel, hamming2) == pytest.approx(pt.distortion, abs=1e-12)
    assert pt.distortion <= 0.05 + 1e-9


def test_rd_with_side_info_dsbs_closed_form(dsbs, hamming2):
    # given y, X is Ber(0.1) relative to y, so R = h(0.1) - h(D) for D <= 0.1
    for delta in (0.01, 0.03, 0.05, 0.08):
        pt = rd_side_info(dsbs, hamming2, delta)
        assert pt.rate == pytest.approx(binary_entropy(0.1) - binary_entropy(delta), abs=1e-9)


def test_degenerate_y_matches_classical(hamming2):
    q = JointPmf.from_table([["7/10"], ["3/10"]])
    pt = rd_side_info(q, hamming2, "1/10")
    assert pt.rate == pytest.approx(binary_entropy(0.3) - binary_entropy(0.1), abs=1e-9)


@pytest.mark.parametrize("seed", range(6))
def test_agrees_with_grid_search(seed):
    rng = np.random.default_rng(seed)
    q = random_joint(rng, 2, 2)
    d = np.array([[0.0, 1.0 + rng.integers(0, 3)], [1.0, 0.0]])
    spec = DistortionSpec.from_table([[0, int(d[0, 1])], [1, 0]])
    delta = float(rng.uniform(0.02, 0.9 * zero_rate_distortion(q, spec)))
    ours = rd_side_info(q, spec, delta).rate
    grid = brute_rd_binary(q.mass, d, delta, steps=40)
    # the grid is only an upper bound; it must not beat the solver
    assert ours <= grid + 1e-9
    assert grid - ours < 0.05


@given(st.integers(0, 10_000))
def test_bounds_between_zero_and_conditional_entropy(seed):
    rng = np.random.default_rng(seed)
    q = random_joint(rng, 3, 2)
    spec = DistortionSpec.hamming(3)
    for delta in (0.0, 0.05, 0.2):
        r = rd_side_info(q, spec, delta).rate
        assert -1e-12 <= r <= conditional_entropy(q.mass) + 1e-9


def test_non_increasing_in_delta():
    q = random_joint(np.random.default_rng(3), 3, 3)
    spec = DistortionSpec.from_table([[0, 1, 2], [1, 0, 1], ["1/2", 1, 0]])
    rates = [rd_side_info(q, spec, d).rate for d in np.linspace(0, 0.6, 13)]
    assert all(b <= a + 1e-9 for a, b in zip(rates, rates[1:]))


def test_curve_is_sorted_monotone_and_convex():
    q = random_joint(np.random.default_rng(11), 3, 2)
    curve = rd_curve(q, DistortionSpec.hamming(3))
    assert len(curve.points) == 65
    d = [p.distortion for p in curve.points]
    assert d == sorted(d)
    assert curve.is_nonincreasing()
    assert curve.is_convex()


def test_objective_trace_non_increasing(dsbs, hamming2):
    pt = rd_fixed_slope(dsbs, hamming2, 2.0, trace=True)
    h = pt.history
    assert len(h) >= 2
    assert all(b <= a + 1e-12 for a, b in zip(h, h[1:]))


def test_infeasible_distortion_raises():
    # every reconstruction costs at least 1/2
    spec = DistortionSpec.from_table([["1/2", 1], [1, "1/2"]])
    q = independent_joint(["1/2", "1/2"], ["1"])
    with pytest.raises(InfeasibleDistortion):
        rd_side_info(q, spec, "1/4")
    with pytest.raises(ValueError):
        rd_side_info(q, spec, -1)


def test_iteration_cap_reports_gap(dsbs, hamming2):
    with pytest.raises(ConvergenceError) as exc:
        rd_fixed_slope(dsbs, hamming2, 2.0, max_iter=1, trace=True)
    assert exc.value.gap > 0
    assert "gap" in str(exc.value)


def test_null_y_symbols_are_pruned(hamming2):
    q = JointPmf.from_table([["1/2", "0"], ["1/2", "0"]])
    full = rd_side_info(q, hamming2, "1/10").rate
    assert full == pytest.approx(math.log(2) - binary_entropy(0.1), abs=1e-9)


def test_newton_stall_regression():
    # at tiny slopes the Newton line search runs out of float resolution; the fallback must finish
    q = random_joint(np.random.default_rng(7), 3, 3)
    spec = DistortionSpec.hamming(3)
    solver = SideInfoRD(q, spec)
    s = solver.solve(1e-4, accelerate=True)
    assert s.gap <= 1e-9


def test_boundary_optimum_with_repeated_distortion_rows():
    # rows 0 and 2 of d coincide; at tiny slopes the optimum is a simplex vertex
    q = JointPmf.from_table([["33/109", "20/109"], ["6/109", "6/109"], ["17/109", "27/109"]])
    spec = DistortionSpec.from_table([[0, 3, 0], [1, 0, 3], [0, 3, 0]])
    solver = SideInfoRD(q, spec)
    for lam in (1e-4, 1.3e-4, 1e-3):
        s = solver.solve(lam, accelerate=True)
        assert s.gap <= 1e-9 and s.iterations < 100
    assert rd_curve(q, spec).is_convex()
