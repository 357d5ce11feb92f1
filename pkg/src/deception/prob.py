"""Finite alphabets, probability tables, information measures and distortion.

Everything here is in nats. Probability tables are validated once on
construction and renormalized so the downstream solvers see a clean simplex.
Distortion tables hold exact rationals so that "distortion <= threshold"
tests are set membership, not float comparisons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

SUM_TOL = 1e-12
ENTROPY_SUM_TOL = 1e-9


class BudgetExceeded(OverflowError):
    """An enumeration would exceed its configured size budget."""


def parse_rational(value) -> Fraction:
    """Parse "a/b", "0.25", an int, a Fraction or a float into a Fraction.

    Floats go through their shortest repr, so ``0.1`` becomes ``1/10``.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, (float, np.floating)):
        if not math.isfinite(value):
            raise ValueError(f"non-finite value {value!r}")
        return Fraction(repr(float(value)))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"cannot parse {value!r} as a rational") from exc
    raise TypeError(f"cannot interpret {type(value).__name__} as a rational")


@dataclass(frozen=True)
class Alphabet:
    size: int
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if int(self.size) != self.size or self.size < 1:
            raise ValueError(f"alphabet size must be a positive integer, got {self.size}")
        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            if len(labels) != self.size:
                raise ValueError("label count must equal alphabet size")
            if len(set(labels)) != len(labels):
                raise ValueError("alphabet labels must be distinct")
            object.__setattr__(self, "labels", labels)

    @classmethod
    def coerce(cls, spec) -> "Alphabet":
        """Build from an Alphabet, a size, or a list of labels."""
        if isinstance(spec, Alphabet):
            return spec
        if isinstance(spec, (int, np.integer)):
            return cls(int(spec))
        labels = tuple(spec)
        return cls(len(labels), labels)

    def index(self, symbol) -> int:
        if self.labels is not None and isinstance(symbol, str):
            try:
                return self.labels.index(symbol)
            except ValueError:
                raise ValueError(f"symbol {symbol!r} not in alphabet") from None
        i = int(symbol)
        if not 0 <= i < self.size:
            raise ValueError(f"symbol {symbol!r} out of range for alphabet of size {self.size}")
        return i


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class JointPmf:
    """Joint law over X x Y, stored as an |X| x |Y| table.

    ``mass`` is the float table used by the optimizers; ``exact`` is the same
    table in Fractions, used by the finite-blocklength oracle.
    """

    mass: np.ndarray
    exact: tuple[tuple[Fraction, ...], ...]
    x_alphabet: Alphabet
    y_alphabet: Alphabet

    @classmethod
    def from_table(cls, table, x_alphabet=None, y_alphabet=None) -> "JointPmf":
        rows = [list(r) for r in (table.tolist() if isinstance(table, np.ndarray) else table)]
        if not rows or any(len(r) != len(rows[0]) for r in rows) or not rows[0]:
            raise ValueError("joint table must be a non-empty rectangular 2-D table")
        exact = [[parse_rational(v) for v in r] for r in rows]
        if any(v < 0 for r in exact for v in r):
            raise ValueError("joint table has negative entries")
        total = sum(v for r in exact for v in r)
        if abs(float(total) - 1.0) > SUM_TOL:
            raise ValueError(f"joint table sums to {float(total)!r}, not 1 (tolerance {SUM_TOL})")
        exact = tuple(tuple(v / total for v in r) for r in exact)
        xa = Alphabet.coerce(x_alphabet if x_alphabet is not None else len(exact))
        ya = Alphabet.coerce(y_alphabet if y_alphabet is not None else len(exact[0]))
        if (xa.size, ya.size) != (len(exact), len(exact[0])):
            raise ValueError("alphabet sizes do not match the table shape")
        mass = _frozen([[float(v) for v in r] for r in exact])
        return cls(mass, exact, xa, ya)

    @classmethod
    def from_array(cls, arr, x_alphabet=None, y_alphabet=None) -> "JointPmf":
        """Float fast path for optimizer iterates; exact table from float reprs."""
        arr = np.asarray(arr, dtype=float)
        if arr.ndim != 2:
            raise ValueError("joint table must be 2-D")
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise ValueError("joint table has negative or non-finite entries")
        s = arr.sum()
        if abs(s - 1.0) > SUM_TOL:
            raise ValueError(f"joint table sums to {s!r}, not 1")
        arr = arr / s
        exact = tuple(tuple(Fraction(float(v)) for v in r) for r in arr)
        xa = Alphabet.coerce(x_alphabet if x_alphabet is not None else arr.shape[0])
        ya = Alphabet.coerce(y_alphabet if y_alphabet is not None else arr.shape[1])
        return cls(_frozen(arr), exact, xa, ya)

    @property
    def shape(self) -> tuple[int, int]:
        return self.mass.shape

    @property
    def y_marginal(self) -> np.ndarray:
        return self.mass.sum(axis=0)

    @property
    def x_marginal(self) -> np.ndarray:
        return self.mass.sum(axis=1)

    def support(self) -> np.ndarray:
        return self.mass > 0

    def exact_y_marginal(self) -> tuple[Fraction, ...]:
        return tuple(sum(r[y] for r in self.exact) for y in range(self.shape[1]))

    def relabel(self, x_perm=None, y_perm=None) -> "JointPmf":
        xp = list(range(self.shape[0])) if x_perm is None else list(x_perm)
        yp = list(range(self.shape[1])) if y_perm is None else list(y_perm)
        table = [[self.exact[xp[i]][yp[j]] for j in range(len(yp))] for i in range(len(xp))]
        return JointPmf.from_table(table)


def independent_joint(px, py) -> JointPmf:
    """Product law px x py, kept exact when the marginals are exact."""
    px = [parse_rational(v) for v in px]
    py = [parse_rational(v) for v in py]
    return JointPmf.from_table([[a * b for b in py] for a in px])


def symmetric_observation(px, crossover, size: int = 2) -> JointPmf:
    """X ~ px and Y = X through a |X|-ary symmetric channel with the given crossover."""
    px = [parse_rational(v) for v in px]
    eps = parse_rational(crossover)
    m = len(px)
    off = eps / (m - 1) if m > 1 else Fraction(0)
    return JointPmf.from_table([[px[x] * ((1 - eps) if x == y else off) for y in range(m)] for x in range(m)])


@dataclass(frozen=True, eq=False)
class DistortionSpec:
    """Per-letter distortion d(x, xhat) with exact rational entries."""

    d: tuple[tuple[Fraction, ...], ...]
    x_alphabet: Alphabet
    xhat_alphabet: Alphabet
    d_max: Fraction = field(init=False)
    d_float: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        rows = tuple(tuple(parse_rational(v) for v in r) for r in self.d)
        if not rows or any(len(r) != len(rows[0]) for r in rows) or not rows[0]:
            raise ValueError("distortion table must be a non-empty rectangular 2-D table")
        if any(v < 0 for r in rows for v in r):
            raise ValueError("distortion entries must be non-negative")
        if (self.x_alphabet.size, self.xhat_alphabet.size) != (len(rows), len(rows[0])):
            raise ValueError("alphabet sizes do not match the distortion table shape")
        object.__setattr__(self, "d", rows)
        object.__setattr__(self, "d_max", max(v for r in rows for v in r))
        object.__setattr__(self, "d_float", _frozen([[float(v) for v in r] for r in rows]))

    @classmethod
    def from_table(cls, table, x_alphabet=None, xhat_alphabet=None) -> "DistortionSpec":
        rows = [list(r) for r in table]
        xa = Alphabet.coerce(x_alphabet if x_alphabet is not None else len(rows))
        xh = Alphabet.coerce(xhat_alphabet if xhat_alphabet is not None else len(rows[0]))
        return cls(tuple(tuple(r) for r in rows), xa, xh)

    @classmethod
    def hamming(cls, size: int) -> "DistortionSpec":
        return cls.from_table([[0 if i == j else 1 for j in range(size)] for i in range(size)])

    @property
    def shape(self) -> tuple[int, int]:
        return self.d_float.shape

    def integer_scaled(self) -> tuple[np.ndarray, int]:
        """Return (integer table, denominator) with d = table / denominator."""
        den = math.lcm(*(v.denominator for r in self.d for v in r))
        table = np.array([[int(v * den) for v in r] for r in self.d], dtype=np.int64)
        return table, den

    def is_zero_diagonal_identity(self) -> bool:
        """True when X-hat = X and d(x, xhat) = 0 exactly when x = xhat."""
        m, k = self.shape
        return m == k and all((self.d[i][j] == 0) == (i == j) for i in range(m) for j in range(k))


@dataclass(frozen=True, eq=False)
class TestChannel:
    """Conditional law V(xhat | x, y) as an |X| x |Y| x |Xhat| array."""

    __test__ = False  # not a pytest class

    table: np.ndarray

    def __post_init__(self):
        t = np.array(self.table, dtype=float)
        if t.ndim != 3:
            raise ValueError("test channel must be a 3-D array indexed (x, y, xhat)")
        if np.any(t < 0) or not np.all(np.isfinite(t)):
            raise ValueError("test channel has negative or non-finite entries")
        sums = t.sum(axis=2)
        if np.any(np.abs(sums - 1.0) > SUM_TOL):
            raise ValueError("each conditional V(.|x,y) must sum to 1")
        t = t / sums[:, :, None]
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @property
    def shape(self):
        return self.table.shape


@dataclass(frozen=True)
class DistortionBudget:
    delta_cap: Fraction
    slack: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "delta_cap", parse_rational(self.delta_cap))
        object.__setattr__(self, "slack", parse_rational(self.slack))
        if self.delta_cap < 0 or self.slack < 0:
            raise ValueError("distortion budget and slack must be non-negative")

    @property
    def threshold(self) -> Fraction:
        return self.delta_cap + self.slack


def _as_table(p) -> np.ndarray:
    return p.mass if isinstance(p, JointPmf) else np.asarray(p, dtype=float)


def entropy(p) -> float:
    """Shannon entropy in nats with 0 ln 0 = 0."""
    p = np.asarray(p, dtype=float).ravel()
    if np.any(p < 0) or abs(p.sum() - 1.0) > ENTROPY_SUM_TOL:
        raise ValueError("not a probability vector")
    nz = p[p > 0]
    return float(max(0.0, -np.sum(nz * np.log(nz))))


def kl_divergence(q, p) -> float:
    """D(q||p) in nats; ``math.inf`` when q is not absolutely continuous w.r.t. p."""
    q = _as_table(q)
    p = _as_table(p)
    if q.shape != p.shape:
        raise ValueError(f"shape mismatch {q.shape} vs {p.shape}")
    pos = q > 0
    if np.any(pos & (p <= 0)):
        return math.inf
    return float(max(0.0, np.sum(q[pos] * np.log(q[pos] / p[pos]))))


def conditional_entropy(q) -> float:
    """H(X|Y) for a joint table indexed (x, y)."""
    q = _as_table(q)
    qy = q.sum(axis=0)
    pos = q > 0
    ratio = np.where(pos, q / np.where(qy > 0, qy, 1.0)[None, :], 1.0)
    return float(max(0.0, -np.sum(q[pos] * np.log(ratio[pos]))))


def output_conditional(q, v) -> np.ndarray:
    """W(xhat|y) = sum_x Q(x|y) V(xhat|x,y); rows for null y are uniform."""
    q = _as_table(q)
    vt = v.table if isinstance(v, TestChannel) else np.asarray(v, dtype=float)
    joint = np.einsum("xy,xyk->yk", q, vt)
    qy = q.sum(axis=0)
    out = np.full_like(joint, 1.0 / joint.shape[1])
    live = qy > 0
    out[live] = joint[live] / qy[live, None]
    return out


def conditional_mutual_information(q, v) -> float:
    """I(X; Xhat | Y) under the joint law q(x,y) v(xhat|x,y)."""
    q = _as_table(q)
    vt = v.table if isinstance(v, TestChannel) else np.asarray(v, dtype=float)
    if vt.shape[:2] != q.shape:
        raise ValueError(f"channel shape {vt.shape} does not match joint shape {q.shape}")
    w = output_conditional(q, vt)
    full = q[:, :, None] * vt
    pos = full > 0
    ratio = np.where(pos, vt / np.where(w[None, :, :] > 0, w[None, :, :], 1.0), 1.0)
    return float(max(0.0, np.sum(full[pos] * np.log(ratio[pos]))))


def expected_distortion(q, v, spec: DistortionSpec) -> float:
    q = _as_table(q)
    vt = v.table if isinstance(v, TestChannel) else np.asarray(v, dtype=float)
    return float(np.einsum("xy,xyk,xk->", q, vt, spec.d_float))


def sequence_distortion(x_seq: Sequence, xhat_seq: Sequence, spec: DistortionSpec) -> Fraction:
    """(1/n) sum_i d(x_i, xhat_i), exactly."""
    if len(x_seq) != len(xhat_seq):
        raise ValueError(f"length mismatch: {len(x_seq)} vs {len(xhat_seq)}")
    if len(x_seq) == 0:
        raise ValueError("sequences must be non-empty")
    total = Fraction(0)
    for a, b in zip(x_seq, xhat_seq):
        total += spec.d[spec.x_alphabet.index(a)][spec.xhat_alphabet.index(b)]
    return total / len(x_seq)
