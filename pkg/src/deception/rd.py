"""Rate-distortion with side information at encoder and decoder.

R_SI(Q, D) = min I(X; Xhat | Y) over V(xhat|x,y) with E d(X, Xhat) <= D.

Both the mutual information and the expected distortion split over y, so at
a fixed Lagrange slope ``lam`` the problem is one classical alternating
minimization per side-information symbol on the source Q(x|y).  All those
problems share the slope, which is what makes the per-y distortion allocation
optimal without an explicit allocation step.  The solver below runs them as
one vectorized iteration.

Stopping rule: for the current output marginal r(.|y) the standard lower
bound  min F >= -sum_x p(x|y) ln c(x) - max_xhat ln s(xhat)  gives a gap
certificate; we stop when the Q_Y-weighted gap is below ``tol``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .prob import (
    DistortionSpec,
    JointPmf,
    TestChannel,
    conditional_entropy,
    conditional_mutual_information,
    expected_distortion,
    parse_rational,
)

DEFAULT_TOL = 1e-9
MAX_ITER = 10_000
SLOPE_GRID = np.geomspace(1e-4, 1e4, 65)
_LAM_FLOOR = 1e-10
_LAM_CEIL = 1e12


class ConvergenceError(RuntimeError):
    """Alternating minimization hit its iteration cap."""

    def __init__(self, message, gap, point=None):
        super().__init__(f"{message} (final objective gap {gap:.3e})")
        self.gap = gap
        self.point = point


class InfeasibleDistortion(ValueError):
    """The requested distortion is below the smallest attainable one."""


@dataclass(frozen=True, eq=False)
class RDPoint:
    rate: float
    distortion: float
    slope: float
    channel: TestChannel
    gap: float = 0.0
    iterations: int = 0
    history: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if self.rate < 0 or self.slope < 0:
            raise ValueError("rate and slope must be non-negative")

    @property
    def rate_bits(self) -> float:
        return self.rate / math.log(2)


@dataclass(frozen=True, eq=False)
class RDCurve:
    points: tuple[RDPoint, ...]

    def __post_init__(self):
        pts = tuple(sorted(self.points, key=lambda p: (p.distortion, -p.rate)))
        object.__setattr__(self, "points", pts)

    def is_nonincreasing(self, tol: float = 1e-7) -> bool:
        rates = [p.rate for p in self.points]
        return all(b <= a + tol for a, b in zip(rates, rates[1:]))

    def is_convex(self, tol: float = 1e-7) -> bool:
        """Pairwise chord slopes must be non-decreasing along the curve."""
        pts = [p for p in self.points]
        # points closer than this are the same envelope point up to solver noise
        merged = []
        for p in pts:
            if merged and p.distortion - merged[-1].distortion < 1e-9:
                if p.rate < merged[-1].rate:
                    merged[-1] = p
                continue
            merged.append(p)
        for a, b, c in zip(merged, merged[1:], merged[2:]):
            # (b - a) x (c - b) orientation; convex means left turns up to tol
            cross = (b.distortion - a.distortion) * (c.rate - b.rate) - (b.rate - a.rate) * (c.distortion - b.distortion)
            if cross < -tol:
                return False
        return True


@dataclass
class _Solve:
    lam: float
    v_live: np.ndarray
    r: np.ndarray
    rate: float
    distortion: float
    gap: float
    iterations: int
    history: list[float]


def _as_array(q) -> np.ndarray:
    return q.mass if isinstance(q, JointPmf) else np.asarray(q, dtype=float)


def _distortion_table(spec) -> np.ndarray:
    return spec.d_float if isinstance(spec, DistortionSpec) else np.asarray(spec, dtype=float)


class SideInfoRD:
    """Solver state for one joint law Q and one distortion table.

    Holds the per-y conditional sources and a warm start (last slope and
    output marginals), so repeated calls at nearby slopes or distortions
    are cheap.  Instances are not shared between threads.
    """

    def __init__(self, q, spec, tol: float = DEFAULT_TOL, max_iter: int = MAX_ITER,
                 accelerate: bool = True):
        q = _as_array(q)
        d = _distortion_table(spec)
        if q.shape[0] != d.shape[0]:
            raise ValueError(f"joint law has |X|={q.shape[0]} but distortion table has {d.shape[0]} rows")
        if tol <= 0:
            raise ValueError("tol must be positive")
        self.q = q
        self.d = d
        self.tol = tol
        self.max_iter = max_iter
        self.accelerate = accelerate
        qy = q.sum(axis=0)
        self.live = qy > 0
        self.weights = qy[self.live]
        self.cond = (q[:, self.live] / self.weights[None, :]).T  # (Yl, X)
        self.dmin = d.min(axis=1)
        self.d_shift = d - self.dmin[:, None]
        self.base = float(self.weights @ (self.cond @ self.dmin))  # distortion floor
        self._warm_lam: float | None = None
        self._warm_r: np.ndarray | None = None

    # -- single slope -------------------------------------------------

    def _kernel(self, lam: float) -> np.ndarray:
        if math.isinf(lam):
            return (self.d_shift == 0).astype(float)
        return np.exp(-lam * self.d_shift)

    def _evaluate(self, v_live: np.ndarray, lam: float) -> tuple[float, float]:
        p = self.cond
        r = np.einsum("yx,yxk->yk", p, v_live)
        full = p[:, :, None] * v_live
        pos = full > 0
        ratio = np.where(pos, v_live / np.where(r[:, None, :] > 0, r[:, None, :], 1.0), 1.0)
        rate_y = np.where(pos, full * np.log(ratio), 0.0).sum(axis=(1, 2))
        dist_y = np.einsum("yxk,xk->y", full, self.d)
        return float(max(0.0, self.weights @ rate_y)), float(self.weights @ dist_y)

    def zero_rate(self) -> _Solve:
        """Slope-zero endpoint: per y, the single symbol minimizing E[d | y]."""
        expected = self.cond @ self.d  # (Yl, K)
        best = expected.argmin(axis=1)
        v = np.zeros((len(self.weights), self.d.shape[0], self.d.shape[1]))
        v[np.arange(len(best)), :, best] = 1.0
        rate, dist = self._evaluate(v, 0.0)
        return _Solve(0.0, v, v[:, 0, :].copy(), rate, dist, 0.0, 0, [])

    def _channel_from(self, r: np.ndarray, kernel: np.ndarray):
        """Optimal V for output marginals r, the ratios s(xhat|y), and the gap bound."""
        p = self.cond
        c = r @ kernel.T  # (Yl, X)
        c_safe = np.where(c > 0, c, 1.0)
        v = r[:, None, :] * kernel[None, :, :] / c_safe[:, :, None]
        dead = c <= 0
        if np.any(dead):
            fallback = kernel / kernel.sum(axis=1, keepdims=True)
            v[dead] = np.broadcast_to(fallback, v.shape)[dead]
        s = (p / c_safe) @ kernel
        gap_y = np.log(np.maximum(s.max(axis=1), 1e-300))
        return v, s, max(0.0, float(self.weights @ gap_y))

    def solve(self, lam: float, r0: np.ndarray | None = None, trace: bool = False,
              tol: float | None = None, strict: bool = True, max_iter: int | None = None,
              accelerate: bool = False) -> _Solve:
        """Alternating minimization at slope ``lam`` (``inf`` = minimum-distortion face).

        With ``accelerate`` the recursion runs a short warm-up and then hands the
        output marginals to a projected Newton step on the convex dual function;
        the stopping certificate is the same.  Traces always use the plain recursion.
        """
        if lam < 0 or math.isnan(lam):
            raise ValueError(f"slope must be non-negative, got {lam}")
        if lam == 0:
            return self.zero_rate()
        tol = self.tol if tol is None else tol
        limit_arg = max_iter
        max_iter = self.max_iter if max_iter is None else max_iter
        if accelerate and not trace:
            max_iter = min(max_iter, 5)
        kernel = self._kernel(lam)
        n_y, k = len(self.weights), self.d.shape[1]
        r = np.full((n_y, k), 1.0 / k) if r0 is None else np.array(r0, dtype=float)
        r = np.maximum(r, 1e-300)
        r /= r.sum(axis=1, keepdims=True)
        p = self.cond
        history: list[float] = []
        finite = not math.isinf(lam)
        it = 0
        while True:
            it += 1
            v, s, gap = self._channel_from(r, kernel)
            if trace:
                rate, dist = self._evaluate(v, lam)
                history.append(rate + lam * dist if finite else rate)
            if gap <= tol or it >= max_iter:
                break
            r = np.einsum("yx,yxk->yk", p, v)
        if accelerate and not trace and gap > tol:
            r = np.array([_newton_marginal(p[y], kernel, r[y], tol) for y in range(n_y)])
            v, s, gap = self._channel_from(r, kernel)
            limit = self.max_iter if limit_arg is None else limit_arg
            # fall back to the plain recursion from the Newton point
            while gap > tol and it < limit:
                it += 1
                r = np.einsum("yx,yxk->yk", p, v)
                v, s, gap = self._channel_from(r, kernel)
        rate, dist = self._evaluate(v, lam)
        out = _Solve(lam, v, np.einsum("yx,yxk->yk", p, v), rate, dist, gap, it, history)
        if gap > tol and strict:
            raise ConvergenceError(f"alternating minimization did not converge at slope {lam:g} "
                                   f"within {max_iter} iterations", gap, out)
        return out

    def full_channel(self, v_live: np.ndarray) -> np.ndarray:
        n_x, n_y = self.q.shape
        k = self.d.shape[1]
        out = np.zeros((n_x, n_y, k))
        out[:, ~self.live, :] = 0.0
        best = self.d.argmin(axis=1)
        for y in np.flatnonzero(~self.live):
            out[np.arange(n_x), y, best] = 1.0
        out[:, self.live, :] = np.transpose(v_live, (1, 0, 2))
        return out

    def to_point(self, s: _Solve, slope: float | None = None) -> RDPoint:
        channel = TestChannel(self.full_channel(s.v_live))
        rate = conditional_mutual_information(self.q, channel)
        dist = expected_distortion(self.q, channel, _SpecView(self.d))
        return RDPoint(rate, dist, s.lam if slope is None else slope, channel, s.gap, s.iterations,
                       tuple(s.history))

    # -- fixed distortion ---------------------------------------------

    def _solve_warm(self, lam: float, near: list[_Solve]) -> _Solve:
        finite = [s for s in near if 0 < s.lam < math.inf]
        r0 = None
        if finite:
            r0 = min(finite, key=lambda s: abs(math.log(s.lam) - math.log(lam))).r
        return self.solve(lam, r0=r0, strict=False, max_iter=self.max_iter, accelerate=self.accelerate)

    def _polish(self, s: _Solve) -> _Solve:
        if s.gap <= self.tol or not 0 < s.lam < math.inf:
            return s
        more = self.solve(s.lam, r0=s.r, strict=False, max_iter=self.max_iter, accelerate=self.accelerate)
        more.iterations += s.iterations
        return more

    def at_distortion(self, delta: float) -> tuple[_Solve, _Solve, float]:
        """Bracket the envelope at ``delta``.

        Returns (upper, lower, theta): the channel theta*upper.v + (1-theta)*lower.v
        has expected distortion ``delta`` and rate within tol of R_SI.
        """
        if not math.isfinite(delta) or delta < 0:
            raise ValueError(f"distortion must be finite and non-negative, got {delta}")
        zero = self.zero_rate()
        if delta >= zero.distortion - 1e-15:
            return zero, zero, 1.0
        if delta < self.base - 1e-12:
            raise InfeasibleDistortion(f"distortion {delta:g} is below the attainable floor {self.base:g}")
        top = self.solve(math.inf, strict=False, accelerate=self.accelerate)
        if delta <= self.base + 1e-12:
            return top, top, 1.0
        seen = [zero, top]

        hi_d, lo_d = zero, top  # hi_d: distortion >= delta ; lo_d: distortion <= delta
        if self._warm_lam is not None and self._warm_r is not None and self._warm_r.shape == zero.r.shape:
            lam = self._warm_lam
            s = self.solve(lam, r0=self._warm_r, strict=False, max_iter=self.max_iter,
                           accelerate=self.accelerate)
            seen.append(s)
            factor = 1.25
            if s.distortion >= delta:
                hi_d = s
                while True:
                    lam2 = lam * factor
                    if lam2 > _LAM_CEIL:
                        break
                    s2 = self._solve_warm(lam2, seen)
                    seen.append(s2)
                    if s2.distortion >= delta:
                        hi_d, lam = s2, lam2
                        factor *= factor
                    else:
                        lo_d = s2
                        break
            else:
                lo_d = s
                while True:
                    lam2 = lam / factor
                    if lam2 < _LAM_FLOOR:
                        break
                    s2 = self._solve_warm(lam2, seen)
                    seen.append(s2)
                    if s2.distortion < delta:
                        lo_d, lam = s2, lam2
                        factor *= factor
                    else:
                        hi_d = s2
                        break
        else:
            # binary search over the slope grid, 0 and inf acting as virtual ends
            a, b = -1, len(SLOPE_GRID)
            while b - a > 1:
                mid = (a + b) // 2
                s = self._solve_warm(float(SLOPE_GRID[mid]), seen)
                seen.append(s)
                if s.distortion >= delta:
                    a, hi_d = mid, s
                else:
                    b, lo_d = mid, s
        hi_d, lo_d = self._refine(delta, hi_d, lo_d, seen)
        if hi_d is lo_d:
            hi_d = lo_d = self._polish(hi_d)
        else:
            # a polish that moves an endpoint across delta would break the timeshare
            ph, pl = self._polish(hi_d), self._polish(lo_d)
            hi_d = ph if ph.distortion >= delta else hi_d
            lo_d = pl if pl.distortion <= delta else lo_d
        if math.isfinite(lo_d.lam) and lo_d.lam > 0:
            self._warm_lam, self._warm_r = lo_d.lam, lo_d.r
        elif math.isfinite(hi_d.lam) and hi_d.lam > 0:
            self._warm_lam, self._warm_r = hi_d.lam, hi_d.r
        span = hi_d.distortion - lo_d.distortion
        theta = 1.0 if span <= 0 else min(1.0, max(0.0, (delta - lo_d.distortion) / span))
        return hi_d, lo_d, theta

    def _refine(self, delta: float, hi_d: _Solve, lo_d: _Solve, seen: list[_Solve]):
        """Shrink the slope bracket until timesharing is within tol of the envelope."""
        for step in range(200):
            if abs(hi_d.distortion - delta) <= 1e-13:
                return hi_d, hi_d
            if abs(lo_d.distortion - delta) <= 1e-13:
                return lo_d, lo_d
            lam_a, lam_b = hi_d.lam, lo_d.lam  # lam_a < lam_b
            if math.isfinite(lam_b) and (lam_b - lam_a) * (hi_d.distortion - lo_d.distortion) <= self.tol / 2:
                break
            if lam_a <= 0:
                if lam_b <= _LAM_FLOOR:
                    break
                mid = lam_b / 8 if math.isfinite(lam_b) else 1.0
            elif math.isinf(lam_b):
                if lam_a >= _LAM_CEIL:
                    break
                mid = lam_a * 8
            else:
                la, lb = math.log(lam_a), math.log(lam_b)
                if lb - la < 1e-13:
                    break
                fa, fb = hi_d.distortion - delta, lo_d.distortion - delta
                t = fa / (fa - fb) if fa != fb else 0.5
                t = min(0.9, max(0.1, t)) if step % 3 != 2 else 0.5
                mid = math.exp(la + t * (lb - la))
            s = self._solve_warm(mid, seen)
            seen.append(s)
            if s.distortion >= delta:
                hi_d = s
            else:
                lo_d = s
        return hi_d, lo_d

    def point_at_distortion(self, delta: float) -> RDPoint:
        hi_d, lo_d, theta = self.at_distortion(delta)
        v = theta * hi_d.v_live + (1 - theta) * lo_d.v_live
        slope = lo_d.lam if theta < 1 else hi_d.lam
        gap = max(hi_d.gap, lo_d.gap)
        blend = _Solve(slope, v, np.einsum("yx,yxk->yk", self.cond, v), 0.0, 0.0, gap,
                       hi_d.iterations + lo_d.iterations, [])
        return self.to_point(blend, slope=slope)

    def rate_at_distortion(self, delta: float) -> float:
        """R_SI(Q, delta) only, without building TestChannel objects."""
        hi_d, lo_d, theta = self.at_distortion(delta)
        if hi_d is lo_d:
            return hi_d.rate
        v = theta * hi_d.v_live + (1 - theta) * lo_d.v_live
        return self._evaluate(v, 0.0)[0]


def _newton_marginal(p: np.ndarray, kernel: np.ndarray, r: np.ndarray, tol: float,
                     max_steps: int = 60) -> np.ndarray:
    """Minimize G(r) = -sum_x p(x) ln sum_xhat r(xhat) K(x, xhat) over the simplex.

    G is convex and its minimizer is the fixed point of the alternating
    recursion; projected Newton with an active set reaches it quadratically,
    including at critical slopes where the recursion itself is sublinear.
    """
    live = p > 0
    p, kernel = p[live], kernel[live]
    r = r.copy()

    def value(rr):
        c = kernel @ rr
        return math.inf if np.any(c <= 0) else -float(p @ np.log(c))

    def certificate(rr):
        c = kernel @ rr
        return math.inf if np.any(c <= 0) else math.log(float((kernel.T @ (p / c)).max()))

    g_val = value(r)
    for _ in range(max_steps):
        c = kernel @ r
        s = kernel.T @ (p / c)
        if math.log(s.max()) <= tol:
            break
        grad = -s
        hess = (kernel * (p / c**2)[:, None]).T @ kernel
        free = (r > 1e-14) | (s > 1.0)
        while True:
            idx = np.flatnonzero(free)
            m = idx.size
            kkt = np.zeros((m + 1, m + 1))
            kkt[:m, :m] = hess[np.ix_(idx, idx)] + 1e-14 * np.eye(m)
            kkt[:m, m] = kkt[m, :m] = 1.0
            rhs = np.concatenate([-grad[idx], [0.0]])
            sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
            step = np.zeros_like(r)
            step[idx] = sol[:m]
            # a coordinate on the boundary that the step pushes outward blocks it; pin it
            blocked = free & (r <= 1e-14) & (step < 0)
            if not blocked.any() or m <= 2:
                break
            free &= ~blocked
        neg = step < 0
        alpha = 1.0
        if np.any(neg):
            alpha = min(1.0, float(np.min(-r[neg] / step[neg])))
        slope = float(grad @ step)
        accepted = False
        if slope < 0:
            while alpha > 1e-12:
                cand = np.maximum(r + alpha * step, 0.0)
                cand /= cand.sum()
                v_new = value(cand)
                if v_new <= g_val + 1e-4 * alpha * slope:
                    accepted = True
                    break
                alpha *= 0.5
        if not accepted:
            # near the optimum G changes below float resolution; judge the
            # full step by the optimality certificate instead
            alpha = 1.0 if not np.any(neg) else min(1.0, float(np.min(-r[neg] / step[neg])))
            cand = np.maximum(r + alpha * step, 0.0)
            cand /= cand.sum()
            if certificate(cand) >= certificate(r):
                break
            v_new = value(cand)
        r, g_val = cand, v_new
    return r


class _SpecView:
    """Minimal stand-in so expected_distortion can take a raw float table."""

    def __init__(self, d):
        self.d_float = d


def rd_fixed_slope(q, spec, lam: float, tol: float = DEFAULT_TOL, max_iter: int = MAX_ITER,
                   trace: bool = False) -> RDPoint:
    """Point of the R_SI envelope where the supporting line has slope -lam.

    Raises ConvergenceError (carrying the final gap and the last iterate)
    when the iteration cap is reached first.
    """
    solver = SideInfoRD(q, spec, tol=tol, max_iter=max_iter)
    s = solver.solve(float(lam), trace=trace, accelerate=not trace)
    return solver.to_point(s)


def rd_side_info(q, spec, delta, tol: float = DEFAULT_TOL) -> RDPoint:
    """R_SI(q, delta) with its achieving (possibly timeshared) test channel."""
    delta = float(parse_rational(delta)) if not isinstance(delta, float) else delta
    if not math.isfinite(delta) or delta < 0:
        raise ValueError(f"distortion must be finite and non-negative, got {delta}")
    return SideInfoRD(q, spec, tol=tol).point_at_distortion(delta)


def rd_curve(q, spec, slopes=None, tol: float = DEFAULT_TOL) -> RDCurve:
    """Envelope points over a slope grid (default: 65 points from 1e-4 to 1e4)."""
    solver = SideInfoRD(q, spec, tol=tol)
    slopes = SLOPE_GRID if slopes is None else slopes
    pts = []
    r = None
    for lam in sorted(float(x) for x in slopes):
        s = solver.solve(lam, r0=r, accelerate=True)
        if 0 < lam < math.inf:
            r = s.r
        pts.append(solver.to_point(s))
    return RDCurve(tuple(pts))


def zero_rate_distortion(q, spec) -> float:
    """Smallest distortion reachable at rate zero: sum_y Q(y) min_xhat E[d | y]."""
    return SideInfoRD(q, spec).zero_rate().distortion


def lossless_rate(q) -> float:
    """H_Q(X|Y): the zero-distortion rate when d vanishes only on the diagonal."""
    return conditional_entropy(q)
