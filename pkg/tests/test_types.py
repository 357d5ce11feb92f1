import math
import random
from fractions import Fraction
from itertools import product

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from deception.prob import BudgetExceeded, DistortionSpec, sequence_distortion
from deception.typeclasses import (
    Permutation,
    TypeClass,
    cover_is_complete,
    covering_bound,
    enumerate_types,
    greedy_permutation_cover,
    hamming_ball_bound_holds,
    hamming_ball_size,
    hamming_distance,
    hamming_neighborhood,
    joint_decode,
    joint_encode,
    neighborhood_mass_profile,
    sequence_log_prob_in_type,
    total_probability_exact,
    type_class_members,
    type_class_size,
    type_of,
)


def test_enumerate_examples():
    assert [t.counts for t in enumerate_types(2, 2)] == [(2, 0), (1, 1), (0, 2)]
    assert len(enumerate_types(1, 5)) == 5
    assert len(enumerate_types(4, 3)) == 15


def test_enumerate_guard():
    with pytest.raises(BudgetExceeded):
        enumerate_types(200, 8, limit=1000)
    with pytest.raises(ValueError):
        enumerate_types(0, 2)


def test_type_validation():
    with pytest.raises(ValueError):
        TypeClass(3, (1, 1))
    with pytest.raises(ValueError):
        TypeClass(1, (2, -1))
    assert TypeClass(4, (1, 3)).empirical == (Fraction(1, 4), Fraction(3, 4))


def test_class_size_examples():
    assert type_class_size(TypeClass(5, (5, 0, 0))) == 1
    assert type_class_size(TypeClass(4, (2, 2))) == 6
    assert type_class_size(TypeClass(6, (3, 2, 1))) == 60


@pytest.mark.parametrize("n,m", [(1, 3), (5, 2), (4, 3), (6, 3), (3, 4)])
def test_sizes_partition_the_space(n, m):
    types = enumerate_types(n, m)
    assert sum(type_class_size(t) for t in types) == m**n
    assert len(types) <= (n + 1) ** m


def test_members_enumerated_exactly():
    t = TypeClass(5, (2, 2, 1))
    members = list(type_class_members(t))
    assert len(members) == type_class_size(t) == len(set(members))
    assert members == sorted(members)
    brute = [x for x in product(range(3), repeat=5) if type_of(x, 3) == t]
    assert members == brute


def test_log_prob_examples():
    p = ["1/4", "3/4"]
    v = sequence_log_prob_in_type(TypeClass(2, (1, 1)), p)
    assert v == pytest.approx(0.836988, abs=1e-6)
    assert v == pytest.approx(0.5 * math.log(0.5 / 0.25) + 0.5 * math.log(0.5 / 0.75) + math.log(2), abs=1e-12)
    # the type equal to p gives H(p)
    h = -(0.25 * math.log(0.25) + 0.75 * math.log(0.75))
    assert sequence_log_prob_in_type(TypeClass(4, (1, 3)), p) == pytest.approx(h, abs=1e-12)
    assert sequence_log_prob_in_type(TypeClass(3, (0, 3)), p) == pytest.approx(-math.log(0.75), abs=1e-12)
    assert sequence_log_prob_in_type(TypeClass(2, (1, 1)), ["1", "0"]) == math.inf


@pytest.mark.parametrize("n", [1, 3, 6])
def test_total_probability_is_one(n, dsbs):
    assert total_probability_exact(n, ["1/6", "1/3", "1/2"]) == 1
    assert total_probability_exact(n, dsbs) == 1


def test_ball_size_examples_and_bound():
    assert hamming_ball_size(7, 0, 3) == 1
    assert hamming_ball_size(3, 1, 2) == 4
    assert hamming_ball_size(5, 2, 3) == 51
    for n in range(1, 13):
        for l in range(0, n // 2 + 1):
            for m in (2, 3, 4):
                assert hamming_ball_bound_holds(n, l, m)


def test_neighborhood_examples():
    s = {(0, 1, 1)}
    assert hamming_neighborhood(s, 0, 2) == s
    assert len(hamming_neighborhood(s, 3, 2)) == 8
    assert hamming_neighborhood({(0, 0), (1, 1)}, 1, 2) == set(product(range(2), repeat=2))
    assert len(hamming_neighborhood(s, 1, 3)) == hamming_ball_size(3, 1, 3)


@given(st.sets(st.tuples(*[st.integers(0, 2)] * 4), min_size=1, max_size=5), st.integers(0, 3),
       st.permutations(range(4)))
def test_neighborhood_monotone_and_commutes(s, l, perm):
    small = hamming_neighborhood(s, l, 3)
    assert s <= small <= hamming_neighborhood(s, l + 1, 3)
    assert small <= hamming_neighborhood(s | {(0, 0, 0, 0)}, l, 3)
    pi = Permutation(tuple(perm))
    assert {pi.apply(x) for x in small} == hamming_neighborhood({pi.apply(x) for x in s}, l, 3)
    assert all(min(hamming_distance(x, c) for c in s) <= l for x in small)


def test_permutation_algebra():
    pi = Permutation((2, 0, 1))
    seq = ("a", "b", "c")
    assert pi.apply(seq) == ("c", "a", "b")
    assert pi.inverse().apply(pi.apply(seq)) == seq
    sigma = Permutation((1, 0, 2))
    assert pi.compose(sigma).apply(seq) == pi.apply(sigma.apply(seq))
    with pytest.raises(ValueError):
        Permutation((0, 0, 1))


@given(st.lists(st.integers(0, 2), min_size=2, max_size=6).flatmap(
    lambda x: st.tuples(st.just(x), st.lists(st.integers(0, 2), min_size=len(x), max_size=len(x)),
                        st.permutations(range(len(x))))))
def test_distortion_invariant_under_joint_permutation(args):
    x, xh, perm = args
    spec = DistortionSpec.from_table([[0, 1, 3], [1, 0, 1], ["1/2", 2, 0]])
    pi = Permutation(tuple(perm))
    assert sequence_distortion(x, xh, spec) == sequence_distortion(pi.apply(x), pi.apply(xh), spec)


def test_joint_encoding_round_trip():
    x, y = (0, 1, 1, 0), (2, 0, 1, 1)
    z = joint_encode(x, y, 3)
    assert joint_decode(z, 3) == (x, y)


def test_cover_examples():
    t = TypeClass(2, (1, 1))
    cover = greedy_permutation_cover([(0, 1)], t)
    assert [p.index for p in cover] == [(0, 1), (1, 0)]
    full = list(type_class_members(TypeClass(4, (2, 2))))
    assert greedy_permutation_cover(full) == [Permutation.identity(4)]


def test_cover_rejects_outside_members():
    with pytest.raises(ValueError):
        greedy_permutation_cover([(0, 1), (1, 1)], TypeClass(2, (1, 1)))
    with pytest.raises(ValueError):
        greedy_permutation_cover([])


def test_cover_on_joint_type():
    # pairs (x, y) as product-alphabet symbols, permuted jointly
    x, y = (0, 0, 1, 1, 0), (0, 1, 1, 0, 0)
    z = joint_encode(x, y, 2)
    t = type_of(z, 4)
    cover = greedy_permutation_cover([z], t)
    assert cover_is_complete([z], t, cover)
    assert len(cover) <= covering_bound(type_class_size(t), 1)


def test_random_covers_within_bound():
    rng = random.Random(0)
    for _ in range(200):
        n = rng.randint(2, 7)
        m = rng.randint(2, 3)
        counts = [0] * m
        for _ in range(n):
            counts[rng.randrange(m)] += 1
        t = TypeClass(n, tuple(counts))
        members = list(type_class_members(t))
        k = rng.randint(1, max(1, math.ceil(len(members) / 4)))
        s = rng.sample(members, k)
        cover = greedy_permutation_cover(s, t)
        assert cover_is_complete(s, t, cover)
        assert len(cover) <= covering_bound(len(members), len(s))


def test_quarter_subset_n6():
    t = TypeClass(6, (3, 3))
    members = list(type_class_members(t))
    s = random.Random(1).sample(members, math.ceil(len(members) / 4))
    cover = greedy_permutation_cover(s, t)
    assert len(cover) <= covering_bound(20, 5)
    assert cover_is_complete(s, t, cover)


def test_cover_size_guard():
    t = TypeClass(9, (9, 0))
    with pytest.raises(BudgetExceeded):
        greedy_permutation_cover([(0,) * 9], t)


def test_neighborhood_mass_grows_to_one():
    profile = neighborhood_mass_profile(TypeClass(4, (2, 2)), ["1/4", "3/4"])
    masses = [m for _, m in profile]
    assert all(b >= a for a, b in zip(masses, masses[1:]))
    assert masses[-1] == 1
    assert masses[0] == 6 * Fraction(1, 16) * Fraction(9, 16)


def test_type_of_and_contains():
    t = type_of([0, 2, 2, 1], 3)
    assert t.counts == (1, 1, 2)
    assert t.contains((2, 2, 0, 1)) and not t.contains((2, 2, 2, 1))
    assert np.allclose(t.empirical_array(), [0.25, 0.25, 0.5])
