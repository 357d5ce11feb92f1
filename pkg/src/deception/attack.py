"""From a lossy code with side information to a deception function.

A code is an encoder g(x^n, y^n) -> i in {1..M} and a decoder
phi(i, y^n) -> xhat^n.  Its bins are the acceptance regions

    A_i = { (x^n, y^n) : d(x^n, phi(i, y^n)) <= delta }.

The code's own success region is covered by the union of the A_i, so the
heaviest bin carries at least 1/M of it.  Fixing the decoder index to that
bin gives a deception function f(y^n) = phi(i*, y^n) whose success
probability is exactly the bin's mass.

Bins are ranked by probability mass rather than by cardinality; the two
agree inside a single type class and mass is what the success probability
needs once bins straddle types.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Callable

import numpy as np

from .oracle import DeceptionFunction, _IntegerModel, _multinomial, _rep_y, success_probability
from .prob import BudgetExceeded, DistortionSpec, JointPmf
from .rd import rd_side_info
from .typeclasses import enumerate_types

CODE_BUDGET = 2 * 10**6


@dataclass(frozen=True, eq=False)
class EncoderDecoder:
    n: int
    index_count: int
    encode: Callable[[tuple, tuple], int]
    decode: Callable[[int, tuple], tuple]
    permutation_covariant: bool = False

    def __post_init__(self):
        if self.n < 1 or self.index_count < 1:
            raise ValueError("need n >= 1 and at least one index")

    def check_index(self, i: int) -> None:
        if not 1 <= i <= self.index_count:
            raise IndexError(f"bin {i} outside 1..{self.index_count}")

    def encode_checked(self, x, y) -> int:
        i = int(self.encode(tuple(x), tuple(y)))
        self.check_index(i)
        return i


def _y_sequences(model: _IntegerModel, n: int):
    for y in product(range(model.ny), repeat=n):
        if all(model.My[b] > 0 for b in y):
            yield y


def bin_acceptance_mass(code: EncoderDecoder, i: int, p: JointPmf, spec: DistortionSpec, delta) -> Fraction:
    """P^n(A_i), exactly.  Summed over y-types when the decoder is permutation-covariant."""
    code.check_index(i)
    model = _IntegerModel(p, spec, delta)
    n = code.n
    cap = model.cap(n)
    total = 0
    if code.permutation_covariant:
        for t in enumerate_types(n, model.ny):
            if any(c and model.My[b] == 0 for b, c in enumerate(t.counts)):
                continue
            y = _rep_y(t.counts)
            total += _multinomial(t.counts) * model.joint_mass(code.decode(i, y), y, cap)
    else:
        if model.ny**n > CODE_BUDGET:
            raise BudgetExceeded(f"{model.ny ** n} side-information sequences exceed the budget")
        for y in _y_sequences(model, n):
            total += model.joint_mass(code.decode(i, y), y, cap)
    return Fraction(total, model.L**n)


def code_acceptance_mass(code: EncoderDecoder, p: JointPmf, spec: DistortionSpec, delta) -> Fraction:
    """P^n{ d(x^n, phi(g(x^n, y^n), y^n)) <= delta }, by enumerating every pair."""
    model = _IntegerModel(p, spec, delta)
    n = code.n
    if (model.nx * model.ny) ** n > CODE_BUDGET:
        raise BudgetExceeded(f"{(model.nx * model.ny) ** n} sequence pairs exceed the budget")
    cap = model.cap(n)
    total = 0
    for y in _y_sequences(model, n):
        for x in product(range(model.nx), repeat=n):
            w = 1
            for a, b in zip(x, y):
                w *= model.M[a][b]
            if not w:
                continue
            xh = code.decode(code.encode_checked(x, y), y)
            if sum(model.D[a][c] for a, c in zip(x, xh)) <= cap:
                total += w
    return Fraction(total, model.L**n)


def bin_masses(code: EncoderDecoder, p: JointPmf, spec: DistortionSpec, delta) -> list[Fraction]:
    return [bin_acceptance_mass(code, i, p, spec, delta) for i in range(1, code.index_count + 1)]


def construct_attack(code: EncoderDecoder, p: JointPmf, spec: DistortionSpec, delta,
                     masses: list[Fraction] | None = None) -> tuple[DeceptionFunction, int]:
    """f = phi(i*, .) for the heaviest bin i* (smallest index on ties)."""
    masses = bin_masses(code, p, spec, delta) if masses is None else masses
    best = max(range(len(masses)), key=lambda j: (masses[j], -j)) + 1
    decode = code.decode
    return DeceptionFunction(code.n, callback=lambda y: decode(best, tuple(y))), best


def deception_success_probability(f: DeceptionFunction, p: JointPmf, spec: DistortionSpec, delta) -> Fraction:
    return success_probability(f, p, spec, delta)


def index_count_for_rate(n: int, rate_nats: float) -> int:
    if rate_nats < 0:
        raise ValueError("rate must be non-negative")
    # guard against exp(n ln k) landing a hair above an integer
    return max(1, math.ceil(math.exp(n * rate_nats) * (1 - 1e-12)))


def _nearest(x: tuple, codewords: np.ndarray, d_int: np.ndarray) -> int:
    cost = d_int[np.asarray(x)[None, :], codewords].sum(axis=1)
    return int(np.argmin(cost))


def _covariant_code(n: int, m: int, codebooks: dict, d_int: np.ndarray, ny: int) -> EncoderDecoder:
    """Codebooks are stored for the sorted representative of each y-type and
    moved to any y^n by the stable sort that sorts it."""

    def place(y):
        y = tuple(y)
        counts = tuple(y.count(b) for b in range(ny))
        order = np.argsort(np.asarray(y), kind="stable")
        book = codebooks[counts]
        out = np.empty_like(book)
        out[:, order] = book
        return out

    def decode(i, y):
        return tuple(int(a) for a in place(y)[i - 1])

    def encode(x, y):
        return _nearest(x, place(y), d_int) + 1

    return EncoderDecoder(n, m, encode, decode, permutation_covariant=True)


def random_rd_code(q: JointPmf, spec: DistortionSpec, delta, n: int, rate_nats: float, seed: int = 0,
                   budget: int = CODE_BUDGET) -> EncoderDecoder:
    """Random code at the given rate: per y-type codebooks drawn from the output
    conditional W(xhat | y) of the side-information rate-distortion channel,
    nearest-codeword encoding.  When the rate allows |Xhat|^n codewords, every
    sequence is a codeword (later indices repeat them cyclically)."""
    m = index_count_for_rate(n, rate_nats)
    ny, k = q.shape[1], spec.shape[1]
    types = enumerate_types(n, ny)
    exhaustive = m >= k**n
    words = k**n if exhaustive else m
    if len(types) * words * n > budget:
        raise BudgetExceeded(f"codebooks need {len(types) * words * n} symbols (budget {budget})")
    d_int, _ = spec.integer_scaled()

    if exhaustive:
        every = np.array(list(product(range(k), repeat=n)), dtype=np.int64)
        rows = np.arange(m) % every.shape[0]
        books = {t.counts: every[rows] for t in types}
        return _covariant_code(n, m, books, d_int, ny)

    point = rd_side_info(q.mass, spec, delta)
    v = point.channel.table
    qy = q.mass.sum(axis=0)
    w = np.einsum("xy,xyk->yk", q.mass, v) / np.where(qy > 0, qy, 1.0)[:, None]
    w[qy <= 0] = 1.0 / k
    w = w / w.sum(axis=1, keepdims=True)
    rng = np.random.default_rng(seed)
    books = {}
    for t in types:
        y = _rep_y(t.counts)
        book = np.empty((m, n), dtype=np.int64)
        for pos, b in enumerate(y):
            book[:, pos] = rng.choice(k, size=m, p=w[b])
        books[t.counts] = book
    return _covariant_code(n, m, books, d_int, ny)


def random_table_code(n: int, index_count: int, y_size: int, xhat_size: int, spec: DistortionSpec,
                      seed: int = 0) -> EncoderDecoder:
    """Arbitrary code with an i.i.d. uniform decoder table and nearest-codeword encoding."""
    if y_size**n * index_count * n > CODE_BUDGET:
        raise BudgetExceeded("decoder table too large")
    rng = np.random.default_rng(seed)
    ys = list(product(range(y_size), repeat=n))
    table = {y: rng.integers(0, xhat_size, size=(index_count, n)) for y in ys}
    d_int, _ = spec.integer_scaled()

    def decode(i, y):
        return tuple(int(a) for a in table[tuple(y)][i - 1])

    def encode(x, y):
        return _nearest(x, table[tuple(y)], d_int) + 1

    return EncoderDecoder(n, index_count, encode, decode)


def code_violation_probability(code: EncoderDecoder, q: JointPmf, spec: DistortionSpec, delta) -> float:
    """Q^n{ d(x^n, phi(g(x^n, y^n), y^n)) > delta }, by full enumeration."""
    n = code.n
    nx, ny = q.shape
    if (nx * ny) ** n > CODE_BUDGET * 4:
        raise BudgetExceeded(f"{(nx * ny) ** n} sequence pairs exceed the budget")
    d_int, ld = spec.integer_scaled()
    cap = math.floor(n * Fraction(delta) * ld) if not isinstance(delta, float) else math.floor(n * delta * ld + 1e-9)
    xs = np.array(list(product(range(nx), repeat=n)), dtype=np.int64)
    bad = 0.0
    for y in product(range(ny), repeat=n):
        probs = np.prod(q.mass[xs, np.asarray(y)[None, :]], axis=1)
        if not probs.any():
            continue
        for x, pr in zip(xs, probs):
            if pr == 0:
                continue
            xh = code.decode(code.encode_checked(tuple(x), y), y)
            if d_int[x, np.asarray(xh)].sum() > cap:
                bad += pr
    return float(bad)
