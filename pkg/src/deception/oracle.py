"""Exact optimal deception probability at finite blocklength.

P*_n = sum_{y^n} P(y^n) max_{xhat^n} Pr( d(X^n, xhat^n) <= delta | Y^n = y^n )

Everything is done over integers.  With P(x, y) = M[x][y] / L and
d = D[x][xhat] / L_d, the joint acceptance mass

    J(xhat^n, y^n) = sum over accepted x^n of prod_i M[x_i][y_i]

is an integer and P*_n = sum_{y^n} max_{xhat^n} J / L^n.  J is the
truncated product of per-letter generating polynomials in the integer
distortion sum, so acceptance (sum D <= floor(n delta L_d)) is exact.

Two evaluators: ``naive`` enumerates every y^n and xhat^n; ``fast`` groups
y^n by type (J depends on y^n only through its type) and, inside a type,
enumerates the composition of xhat over each y-symbol class.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Callable, Sequence

import numpy as np

from .prob import BudgetExceeded, DistortionSpec, JointPmf, parse_rational
from .typeclasses import _compositions, enumerate_types

EVAL_BUDGET = 10**8


class _IntegerModel:
    """Joint law and distortion scaled to integers, with the acceptance cap for n."""

    def __init__(self, p: JointPmf, spec: DistortionSpec, delta):
        if spec.shape[0] != p.shape[0]:
            raise ValueError("distortion table and joint law disagree on |X|")
        self.delta = parse_rational(delta)
        if self.delta < 0:
            raise ValueError("delta must be non-negative")
        self.L = math.lcm(*(v.denominator for row in p.exact for v in row))
        self.M = [[int(v * self.L) for v in row] for row in p.exact]
        self.nx, self.ny = p.shape
        self.nxh = spec.shape[1]
        self.My = [sum(self.M[x][y] for x in range(self.nx)) for y in range(self.ny)]
        d_int, self.Ld = spec.integer_scaled()
        self.D = d_int.tolist()
        self.dmax = max(max(r) for r in self.D)
        self.always = self.delta >= spec.d_max
        # per (y, xhat) polynomial in the integer distortion of one letter
        self.poly = [[self._letter(b, a) for a in range(self.nxh)] for b in range(self.ny)]

    def _letter(self, b: int, a: int) -> list[int]:
        out = [0] * (self.dmax + 1)
        for x in range(self.nx):
            out[self.D[x][a]] += self.M[x][b]
        return out

    def cap(self, n: int) -> int:
        return min(n * self.dmax, math.floor(n * self.delta * self.Ld))

    def joint_mass(self, xhat: Sequence[int], y: Sequence[int], cap: int) -> int:
        acc = [1]
        for a, b in zip(xhat, y):
            acc = _conv(acc, self.poly[b][a], cap)
        return sum(acc)


def _conv(a: list[int], b: list[int], cap: int) -> list[int]:
    out = [0] * min(len(a) + len(b) - 1, cap + 1)
    for i, ai in enumerate(a):
        if ai:
            for j in range(min(len(b), cap + 1 - i)):
                if b[j]:
                    out[i + j] += ai * b[j]
    return out


def _power(poly: list[int], k: int, cap: int) -> list[int]:
    out = [1]
    for _ in range(k):
        out = _conv(out, poly, cap)
    return out


def _indices(seq, alphabet) -> list[int]:
    return [alphabet.index(s) if not isinstance(s, (int, np.integer)) else int(s) for s in seq]


def acceptance_probability(xhat_seq, y_seq, p: JointPmf, spec: DistortionSpec, delta) -> Fraction:
    """Pr( sum_i d(X_i, xhat_i) <= n delta | Y^n = y^n ) with X_i | y_i ~ P(.|y_i), exactly."""
    if len(xhat_seq) != len(y_seq):
        raise ValueError(f"length mismatch: {len(xhat_seq)} vs {len(y_seq)}")
    if not y_seq:
        raise ValueError("sequences must be non-empty")
    model = _IntegerModel(p, spec, delta)
    y = _indices(y_seq, p.y_alphabet)
    xh = _indices(xhat_seq, spec.xhat_alphabet)
    if any(not 0 <= b < model.ny for b in y) or any(not 0 <= a < model.nxh for a in xh):
        raise ValueError("symbol outside its alphabet")
    null = [b for b in y if model.My[b] == 0]
    if null:
        raise ValueError(f"y sequence contains symbol {null[0]} with zero probability under P")
    n = len(y)
    den = 1
    for b in y:
        den *= model.My[b]
    return Fraction(model.joint_mass(xh, y, model.cap(n)), den)


@dataclass(frozen=True, eq=False)
class OracleResult:
    n: int
    p_star: Fraction
    exponent_n: float
    per_y_type_breakdown: dict = field(repr=False)
    delta: Fraction = Fraction(0)
    mode: str = "fast"
    best_xhat: dict = field(default_factory=dict, repr=False)
    evaluations: int = 0

    def breakdown_total(self, p: JointPmf) -> Fraction:
        """sum over y-types of count * P(representative) * best conditional success."""
        py = p.exact_y_marginal()
        total = Fraction(0)
        for counts, (count, best) in self.per_y_type_breakdown.items():
            rep = Fraction(1)
            for b, c in enumerate(counts):
                rep *= py[b] ** c
            total += count * rep * best
        return total

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "delta": str(self.delta),
            "mode": self.mode,
            "p_star": str(self.p_star),
            "p_star_float": float(self.p_star),
            "exponent_n_nats": self.exponent_n,
            "y_types": [
                {"counts": list(k), "count": v[0], "best_conditional_success": str(v[1]),
                 "best_xhat": list(self.best_xhat.get(k, ()))}
                for k, v in self.per_y_type_breakdown.items()
            ],
        }


def _log_fraction(x: Fraction) -> float:
    return math.log(x.numerator) - math.log(x.denominator)


def finite_exponent(p_star: Fraction, n: int) -> float:
    if p_star <= 0:
        return math.inf
    return max(0.0, -_log_fraction(p_star) / n)


def naive_evaluations(p: JointPmf, spec: DistortionSpec, n: int) -> int:
    return (p.shape[1] * spec.shape[1]) ** n


def fast_evaluations(p: JointPmf, spec: DistortionSpec, n: int) -> int:
    k = spec.shape[1]
    total = 0
    for t in enumerate_types(n, p.shape[1]):
        prod_ = 1
        for m in t.counts:
            prod_ *= math.comb(m + k - 1, k - 1)
        total += prod_
    return total


def _rep_y(counts: Sequence[int]) -> tuple[int, ...]:
    return tuple(b for b, c in enumerate(counts) for _ in range(c))


def _multinomial(counts: Sequence[int]) -> int:
    out = math.factorial(sum(counts))
    for c in counts:
        out //= math.factorial(c)
    return out


def _naive(model: _IntegerModel, n: int):
    cap = model.cap(n)
    total = 0
    breakdown: dict = {}
    best_xhat: dict = {}
    for y in product(range(model.ny), repeat=n):
        if any(model.My[b] == 0 for b in y):
            continue
        best, arg = -1, None
        for xh in product(range(model.nxh), repeat=n):
            j = model.joint_mass(xh, y, cap)
            if j > best:
                best, arg = j, xh
        total += best
        counts = tuple(y.count(b) for b in range(model.ny))
        if counts not in breakdown:
            # product order visits the sorted representative of each type first
            den = 1
            for b in y:
                den *= model.My[b]
            breakdown[counts] = [0, Fraction(best, den)]
            best_xhat[counts] = arg
        breakdown[counts][0] += 1
    return total, {k: tuple(v) for k, v in breakdown.items()}, best_xhat


def _best_in_type(model: _IntegerModel, counts: tuple[int, ...], cap: int):
    """Max of J over xhat^n for the sorted representative of a y-type.

    By exchangeability inside each y-symbol class only the composition of
    xhat over the class matters; the lexicographically smallest xhat^n with
    that composition lists each class's symbols in ascending order.
    """
    classes = [b for b, c in enumerate(counts) if c]
    comp_lists = [list(_compositions(counts[b], model.nxh)) for b in classes]
    power_cache: dict = {}

    def power(b, a, k):
        key = (b, a, k)
        if key not in power_cache:
            power_cache[key] = _power(model.poly[b][a], k, cap)
        return power_cache[key]

    best, arg = -1, None
    for combo in product(*comp_lists):
        acc = [1]
        xh: list[int] = []
        for b, comp in zip(classes, combo):
            for a, k in enumerate(comp):
                if k:
                    acc = _conv(acc, power(b, a, k), cap)
                    xh.extend([a] * k)
        j = sum(acc)
        cand = tuple(xh)
        if j > best or (j == best and cand < arg):
            best, arg = j, cand
    return best, arg


def _fast(model: _IntegerModel, n: int, threads: int = 1):
    cap = model.cap(n)
    types = [t.counts for t in enumerate_types(n, model.ny)
             if all(model.My[b] > 0 or c == 0 for b, c in enumerate(t.counts))]

    def work(counts):
        return counts, _best_in_type(model, counts, cap)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, types))
    else:
        results = [work(c) for c in types]

    parts = []
    breakdown: dict = {}
    best_xhat: dict = {}
    for counts, (best, arg) in results:
        mult = _multinomial(counts)
        parts.append(mult * best)
        den = 1
        for b, c in enumerate(counts):
            den *= model.My[b] ** c
        breakdown[counts] = (mult, Fraction(best, den))
        best_xhat[counts] = arg
    return _tree_sum(parts), breakdown, best_xhat


def _tree_sum(values: list[int]) -> int:
    while len(values) > 1:
        values = [sum(values[i:i + 2]) for i in range(0, len(values), 2)]
    return values[0] if values else 0


def optimal_deception_prob(p: JointPmf, spec: DistortionSpec, delta, n: int, mode: str = "fast",
                           budget: int = EVAL_BUDGET, force: bool = False, threads: int = 1) -> OracleResult:
    """Exact P*_n and its per-y-type maximizers."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if mode not in ("naive", "fast"):
        raise ValueError(f"unknown mode {mode!r}")
    # size estimate for the chosen evaluator, checked before any allocation
    estimate = naive_evaluations(p, spec, n) if mode == "naive" else fast_evaluations(p, spec, n)
    if estimate > budget and not force:
        raise BudgetExceeded(f"{mode} evaluator needs about {estimate} acceptance evaluations "
                             f"(budget {budget}); pass force to override")
    model = _IntegerModel(p, spec, delta)
    if mode == "naive":
        total, breakdown, best_xhat = _naive(model, n)
    else:
        total, breakdown, best_xhat = _fast(model, n, threads)
    p_star = Fraction(total, model.L**n)
    assert 0 <= p_star <= 1
    return OracleResult(n, p_star, finite_exponent(p_star, n), breakdown, model.delta, mode, best_xhat, estimate)


class DeceptionFunction:
    """Map y^n -> xhat^n over symbol indices, from a table or a callback."""

    def __init__(self, n: int, table: dict | None = None, callback: Callable | None = None):
        if (table is None) == (callback is None):
            raise ValueError("give exactly one of table or callback")
        self.n = n
        self._table = None if table is None else {tuple(k): tuple(v) for k, v in table.items()}
        self._callback = callback

    def __call__(self, y_seq) -> tuple[int, ...]:
        y = tuple(int(b) for b in y_seq)
        if len(y) != self.n:
            raise ValueError(f"expected length {self.n}, got {len(y)}")
        if self._table is not None:
            try:
                return self._table[y]
            except KeyError:
                raise KeyError(f"deception table has no entry for {y}") from None
        out = tuple(int(a) for a in self._callback(y))
        if len(out) != self.n:
            raise ValueError("strategy returned a sequence of the wrong length")
        return out

    def apply_batch(self, ys: np.ndarray) -> np.ndarray:
        """Row-wise application; each distinct y^n is evaluated once."""
        ys = np.asarray(ys)
        uniq, inverse = np.unique(ys, axis=0, return_inverse=True)
        mapped = np.array([self(row) for row in uniq], dtype=np.int64).reshape(len(uniq), self.n)
        return mapped[np.asarray(inverse).ravel()]

    @classmethod
    def constant(cls, xhat: Sequence[int]) -> "DeceptionFunction":
        xhat = tuple(int(a) for a in xhat)
        return cls(len(xhat), callback=lambda y: xhat)


def oracle_strategy(result: OracleResult) -> DeceptionFunction:
    """The optimal map behind an OracleResult, extended from each type's
    representative to all of its members by permuting positions."""
    blocks = {}
    for counts, xh in result.best_xhat.items():
        per_class, pos = {}, 0
        for b, c in enumerate(counts):
            per_class[b] = xh[pos:pos + c]
            pos += c
        blocks[counts] = per_class
    ny = len(next(iter(blocks)))

    def strategy(y):
        counts = tuple(y.count(b) for b in range(ny))
        per_class = blocks[counts]
        used = dict.fromkeys(per_class, 0)
        out = []
        for b in y:
            out.append(per_class[b][used[b]])
            used[b] += 1
        return out

    return DeceptionFunction(result.n, callback=strategy)


def success_probability(f: DeceptionFunction, p: JointPmf, spec: DistortionSpec, delta) -> Fraction:
    """Exact Pr(d(X^n, f(Y^n)) <= delta) of a given deception function."""
    model = _IntegerModel(p, spec, delta)
    n = f.n
    if model.ny**n > EVAL_BUDGET:
        raise BudgetExceeded(f"{model.ny ** n} side-information sequences exceed the budget")
    cap = model.cap(n)
    total = 0
    for y in product(range(model.ny), repeat=n):
        if any(model.My[b] == 0 for b in y):
            continue
        total += model.joint_mass(f(y), y, cap)
    return Fraction(total, model.L**n)


def monte_carlo_success_rate(f: DeceptionFunction, p: JointPmf, spec: DistortionSpec, delta, n: int,
                             trials: int, seed: int = 0, chunk: int = 100_000) -> tuple[float, float]:
    """Sample mean of the acceptance indicator over i.i.d. (X^n, Y^n) ~ P, and its standard error."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if f.n != n:
        raise ValueError(f"deception function has length {f.n}, expected {n}")
    delta = parse_rational(delta)
    if delta >= spec.d_max:
        return 1.0, 0.0
    d_int, ld = spec.integer_scaled()
    cap = math.floor(n * delta * ld)
    rng = np.random.default_rng(seed)
    flat = p.mass.ravel()
    ny = p.shape[1]
    hits = 0
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        idx = rng.choice(flat.size, size=(m, n), p=flat)
        x, y = np.divmod(idx, ny)
        xh = f.apply_batch(y)
        total = d_int[x, xh].sum(axis=1)
        hits += int(np.count_nonzero(total <= cap))
        done += m
    est = hits / trials
    stderr = math.sqrt(est * (1 - est) / trials)
    return est, stderr


@dataclass(frozen=True)
class TrendRow:
    n: int
    exponent_n: float
    p_star: Fraction


def exponent_trend(p: JointPmf, spec: DistortionSpec, delta, n_list, mode: str = "fast",
                   budget: int = EVAL_BUDGET) -> list[TrendRow]:
    rows = []
    for n in n_list:
        r = optimal_deception_prob(p, spec, delta, int(n), mode=mode, budget=budget)
        rows.append(TrendRow(r.n, r.exponent_n, r.p_star))
    return rows
