"""Method of types at small blocklength.

Types are compositions of n over a finite alphabet.  Joint types over X x Y
are handled as types over the product alphabet, with the pair (x, y) encoded
as the single symbol x * |Y| + y (see ``joint_encode``).

Everything that is a count is an exact integer and everything that is a
probability of a sequence is an exact Fraction when the model is rational.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import permutations as _all_permutations
from typing import Iterable, Iterator, Sequence

import numpy as np

from .prob import BudgetExceeded, JointPmf, entropy, kl_divergence, parse_rational

TYPE_COUNT_LIMIT = 10**7
NEIGHBORHOOD_LIMIT = 2 * 10**6
COVER_MAX_N = 8


@dataclass(frozen=True)
class TypeClass:
    n: int
    counts: tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if any(c < 0 for c in counts):
            raise ValueError(f"negative count in type {counts}")
        if sum(counts) != self.n:
            raise ValueError(f"counts {counts} do not sum to n={self.n}")
        if not counts:
            raise ValueError("type needs at least one symbol")
        object.__setattr__(self, "counts", counts)

    @property
    def alphabet_size(self) -> int:
        return len(self.counts)

    @property
    def empirical(self) -> tuple[Fraction, ...]:
        return tuple(Fraction(c, self.n) for c in self.counts)

    def empirical_array(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=float) / self.n

    def contains(self, seq: Sequence[int]) -> bool:
        return len(seq) == self.n and type_of(seq, self.alphabet_size) == self


def type_count(n: int, alphabet_size: int) -> int:
    return math.comb(n + alphabet_size - 1, alphabet_size - 1)


def _compositions(n: int, parts: int) -> Iterator[tuple[int, ...]]:
    # lexicographically descending in the first coordinate: (n,0,..), (n-1,1,..), ...
    if parts == 1:
        yield (n,)
        return
    for first in range(n, -1, -1):
        for rest in _compositions(n - first, parts - 1):
            yield (first,) + rest


def enumerate_types(n: int, alphabet_size: int, limit: int = TYPE_COUNT_LIMIT) -> list[TypeClass]:
    """All types of length-n sequences over an alphabet of the given size."""
    if n < 1 or alphabet_size < 1:
        raise ValueError("need n >= 1 and alphabet_size >= 1")
    count = type_count(n, alphabet_size)
    if count > limit:
        raise BudgetExceeded(f"{count} types for n={n}, alphabet {alphabet_size}; limit is {limit}")
    assert count <= (n + 1) ** alphabet_size
    return [TypeClass(n, c) for c in _compositions(n, alphabet_size)]


def type_of(seq: Sequence[int], alphabet_size: int) -> TypeClass:
    counts = [0] * alphabet_size
    for s in seq:
        if not 0 <= s < alphabet_size:
            raise ValueError(f"symbol {s} outside alphabet of size {alphabet_size}")
        counts[s] += 1
    return TypeClass(len(seq), tuple(counts))


def type_class_size(t: TypeClass) -> int:
    """Multinomial coefficient n! / prod counts!, checked against the entropy bounds."""
    size = math.factorial(t.n)
    for c in t.counts:
        size //= math.factorial(c)
    n_h = t.n * entropy(t.empirical_array())
    log_size = math.log(size)
    assert log_size <= n_h + 1e-9, (t, size)
    assert log_size >= n_h - t.alphabet_size * math.log(t.n + 1) - 1e-9, (t, size)
    return size


def type_class_members(t: TypeClass) -> Iterator[tuple[int, ...]]:
    """Members of the type class in lexicographic order."""
    counts = list(t.counts)
    seq = [0] * t.n

    def rec(pos):
        if pos == t.n:
            yield tuple(seq)
            return
        for a, c in enumerate(counts):
            if c:
                counts[a] -= 1
                seq[pos] = a
                yield from rec(pos + 1)
                counts[a] += 1

    yield from rec(0)


def _flat_pmf(p) -> tuple[np.ndarray, tuple[Fraction, ...] | None]:
    if isinstance(p, JointPmf):
        return p.mass.ravel(), tuple(v for row in p.exact for v in row)
    vals = list(p)
    try:
        exact = tuple(parse_rational(v) for v in vals)
    except (TypeError, ValueError):
        return np.asarray(vals, dtype=float), None
    return np.asarray([float(v) for v in exact]), exact


def sequence_prob_in_type_exact(t: TypeClass, p) -> Fraction:
    """P^n of any single sequence in the type: prod_a p(a)^{count_a}, exactly.

    ``p`` is a pmf over the type's alphabet; a JointPmf is read row-major,
    matching ``joint_encode``.
    """
    _, exact = _flat_pmf(p)
    if exact is None or len(exact) != t.alphabet_size:
        raise ValueError("pmf must be exact and match the type's alphabet")
    out = Fraction(1)
    for pa, c in zip(exact, t.counts):
        out *= pa**c
    return out


def sequence_log_prob_in_type(t: TypeClass, p) -> float:
    """-(1/n) ln P^n(x^n) for x^n in the type, computed as D(t||p) + H(t).

    The identity is checked against the direct product over one explicit
    member sequence.  Returns inf when the type puts mass outside support(p).
    """
    pf, _ = _flat_pmf(p)
    if pf.size != t.alphabet_size:
        raise ValueError("pmf size does not match the type's alphabet")
    emp = t.empirical_array()
    value = kl_divergence(emp, pf) + entropy(emp)
    member = next(type_class_members(t))
    with np.errstate(divide="ignore"):
        direct = -float(np.sum(np.log(pf[list(member)]))) / t.n
    if math.isinf(value) or math.isinf(direct):
        assert math.isinf(value) and math.isinf(direct)
        return math.inf
    assert abs(value - direct) <= 1e-9 * max(1.0, abs(direct)), (value, direct)
    return value


def total_probability_exact(n: int, p) -> Fraction:
    """Sum over types of |T| * P^n(member); equals 1 for any exact pmf."""
    _, exact = _flat_pmf(p)
    if exact is None:
        raise ValueError("total probability check needs an exact pmf")
    total = Fraction(0)
    for t in enumerate_types(n, len(exact)):
        total += type_class_size(t) * sequence_prob_in_type_exact(t, exact)
    return total


def _binary_entropy(a: float) -> float:
    if a <= 0 or a >= 1:
        return 0.0
    return -a * math.log(a) - (1 - a) * math.log(1 - a)


def hamming_ball_size(n: int, l: int, alphabet_size: int) -> int:
    """Number of sequences within Hamming distance l of a fixed center."""
    if not 0 <= l <= n:
        raise ValueError(f"radius {l} outside [0, {n}]")
    size = sum(math.comb(n, j) * (alphabet_size - 1) ** j for j in range(l + 1))
    if 2 * l <= n:
        assert hamming_ball_bound_holds(n, l, alphabet_size, size)
    return size


def hamming_ball_bound_holds(n: int, l: int, alphabet_size: int, size: int | None = None) -> bool:
    """(1/n) ln |ball| <= h(l/n) + (l/n) ln |alphabet|, meant for l <= n/2."""
    if size is None:
        size = sum(math.comb(n, j) * (alphabet_size - 1) ** j for j in range(l + 1))
    bound = _binary_entropy(l / n) + (l / n) * math.log(alphabet_size)
    return math.log(size) / n <= bound + 1e-12


def hamming_distance(a: Sequence, b: Sequence) -> int:
    if len(a) != len(b):
        raise ValueError("sequences differ in length")
    return sum(1 for u, v in zip(a, b) if u != v)


def hamming_neighborhood(s: Iterable[Sequence[int]], l: int, alphabet_size: int,
                         limit: int = NEIGHBORHOOD_LIMIT) -> set[tuple[int, ...]]:
    """All sequences within Hamming distance l of some member of s."""
    current = {tuple(x) for x in s}
    if not current:
        return set()
    lengths = {len(x) for x in current}
    if len(lengths) != 1:
        raise ValueError("sequences in s must share one length")
    n = lengths.pop()
    if l < 0:
        raise ValueError("radius must be non-negative")
    space = alphabet_size**n
    if space > limit:
        raise BudgetExceeded(f"space of {space} sequences exceeds the neighborhood limit {limit}")
    frontier = set(current)
    for _ in range(min(l, n)):
        new = set()
        for x in frontier:
            for i in range(n):
                for a in range(alphabet_size):
                    if a != x[i]:
                        y = x[:i] + (a,) + x[i + 1:]
                        if y not in current:
                            new.add(y)
        if not new:
            break
        current |= new
        frontier = new
    return current


@dataclass(frozen=True)
class Permutation:
    """Position permutation with apply(seq)[i] = seq[index[i]]."""

    index: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.index)
        if sorted(idx) != list(range(len(idx))):
            raise ValueError(f"{idx} is not a permutation of 0..{len(idx) - 1}")
        object.__setattr__(self, "index", idx)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(n)))

    @property
    def n(self) -> int:
        return len(self.index)

    def apply(self, seq: Sequence) -> tuple:
        if len(seq) != self.n:
            raise ValueError("sequence length does not match the permutation")
        return tuple(seq[i] for i in self.index)

    def inverse(self) -> "Permutation":
        inv = [0] * self.n
        for i, j in enumerate(self.index):
            inv[j] = i
        return Permutation(tuple(inv))

    def compose(self, other: "Permutation") -> "Permutation":
        """The permutation whose apply is self.apply(other.apply(seq))."""
        return Permutation(tuple(other.index[i] for i in self.index))


def joint_encode(x_seq: Sequence[int], y_seq: Sequence[int], y_size: int) -> tuple[int, ...]:
    if len(x_seq) != len(y_seq):
        raise ValueError("x and y sequences differ in length")
    return tuple(int(x) * y_size + int(y) for x, y in zip(x_seq, y_seq))


def joint_decode(seq: Sequence[int], y_size: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    return tuple(s // y_size for s in seq), tuple(s % y_size for s in seq)


def covering_bound(class_size: int, subset_size: int) -> int:
    """ceil((|T| / |S|) ln |T|) + 1."""
    return math.ceil(class_size / subset_size * math.log(class_size)) + 1


def greedy_permutation_cover(s: Iterable[Sequence[int]], t: TypeClass | None = None) -> list[Permutation]:
    """Permutations pi_1..pi_k whose images pi_i(s) together cover the type class.

    Greedy max-new-coverage over the whole symmetric group, ties broken by
    the lexicographically first permutation (the identity comes first).
    Since S_n acts transitively on a type class, a uniformly random
    permutation hits each uncovered member with probability |s|/|T|, so the
    best pick always covers at least that fraction of what is left and the
    greedy cover meets the counting bound.
    """
    seqs = sorted({tuple(int(a) for a in x) for x in s})
    if not seqs:
        raise ValueError("s must be non-empty")
    n = len(seqs[0])
    if t is None:
        t = type_of(seqs[0], max(max(x) for x in seqs) + 1)
    if n != t.n or any(not t.contains(x) for x in seqs):
        raise ValueError("every member of s must lie in the type class t")
    if n > COVER_MAX_N:
        raise BudgetExceeded(f"n={n} exceeds the symmetric-group enumeration limit {COVER_MAX_N}")

    m = t.alphabet_size
    members = np.array(list(type_class_members(t)), dtype=np.int64).reshape(-1, n)
    weights = m ** np.arange(n - 1, -1, -1, dtype=np.int64)
    member_codes = members @ weights  # ascending, since members are lexicographic
    perms = np.array(list(_all_permutations(range(n))), dtype=np.int64).reshape(-1, n)
    s_arr = np.array(seqs, dtype=np.int64)

    cover = np.zeros((perms.shape[0], members.shape[0]), dtype=bool)
    chunk = max(1, 2_000_000 // max(1, s_arr.shape[0] * n))
    for start in range(0, perms.shape[0], chunk):
        block = perms[start:start + chunk]
        images = s_arr[:, block]  # (|s|, chunk, n)
        codes = images @ weights
        hit = np.searchsorted(member_codes, codes)
        rows = np.broadcast_to(np.arange(block.shape[0])[None, :], hit.shape) + start
        cover[rows.ravel(), hit.ravel()] = True

    uncovered = np.ones(members.shape[0], dtype=bool)
    chosen: list[Permutation] = []
    while uncovered.any():
        gain = cover[:, uncovered].sum(axis=1)
        best = int(np.argmax(gain))
        assert gain[best] > 0, "no permutation covers the remaining members"
        chosen.append(Permutation(tuple(perms[best])))
        uncovered &= ~cover[best]
    bound = covering_bound(members.shape[0], len(seqs))
    assert len(chosen) <= bound, (len(chosen), bound)
    return chosen


def cover_is_complete(s: Iterable[Sequence[int]], t: TypeClass, cover: Sequence[Permutation]) -> bool:
    s = [tuple(x) for x in s]
    image = {pi.apply(x) for pi in cover for x in s}
    return image == set(type_class_members(t))


def neighborhood_mass_profile(t: TypeClass, p) -> list[tuple[int, Fraction]]:
    """P^n(Gamma^l(T)) for l = 0..n: how fast a type class blows up to the whole space."""
    _, exact = _flat_pmf(p)
    if exact is None or len(exact) != t.alphabet_size:
        raise ValueError("pmf must be exact and match the type's alphabet")
    members = list(type_class_members(t))
    out = []
    for l in range(t.n + 1):
        hood = hamming_neighborhood(members, l, t.alphabet_size)
        mass = Fraction(0)
        for x in hood:
            pr = Fraction(1)
            for a in x:
                pr *= exact[a]
            mass += pr
        out.append((l, mass))
    return out
