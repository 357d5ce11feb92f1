"""Optimal deception exponent  E*(D) = min_Q { D(Q||P) + R_SI(Q, D) }.

The outer minimization is a multi-start projected descent on the simplex
restricted to support(P), with central-difference gradients because R_SI is
only available through the solver.

``exponent_dual`` is a separate route to the same number.  Writing
D(Q||P) + I(X;Xhat|Y) = min_W D(Q V || P W) and taking the I-projection dual
gives

    E*(D) = sup_{lam >= 0}  -lam D - ln sum_y max_xhat sum_x P(x,y) exp(-lam d(x,xhat)).

Any slope gives a lower bound, so the pair (descent value, dual value) is a
sandwich around E*.  The dual never calls the rate-distortion solver.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations_with_replacement

import numpy as np
from scipy.special import logsumexp

from .prob import DistortionSpec, JointPmf, kl_divergence, parse_rational
from .rd import InfeasibleDistortion, SideInfoRD, rd_side_info


@dataclass
class ExponentOptions:
    starts: int = 64
    seed: int = 0
    tol: float = 1e-6
    refine: int = 4
    grid_cells: int = 6
    grid_resolution: int = 4
    max_iter: int = 150
    fd_step: float = 1e-5
    rd_tol: float = 1e-10
    threads: int = 1
    dual_seed: bool = False


@dataclass(frozen=True, eq=False)
class ExponentResult:
    exponent: float
    argmin_q: JointPmf
    rd_component: float
    kl_component: float
    delta: Fraction
    optimizer_trace: tuple[dict, ...] = field(default=(), repr=False)
    dual_bound: float = 0.0
    dual_slope: float = 0.0
    stagnated: bool = False

    @property
    def exponent_bits(self) -> float:
        return self.exponent / math.log(2)

    @property
    def certified_gap(self) -> float:
        """Descent value minus the dual lower bound; small means both routes agree."""
        return self.exponent - self.dual_bound

    def to_dict(self) -> dict:
        return {
            "delta": str(self.delta),
            "exponent_nats": self.exponent,
            "exponent_bits": self.exponent_bits,
            "kl_nats": self.kl_component,
            "rd_nats": self.rd_component,
            "dual_bound_nats": self.dual_bound,
            "dual_slope": self.dual_slope,
            "argmin_q": self.argmin_q.mass.tolist(),
            "stagnated": self.stagnated,
            "optimizer_trace": list(self.optimizer_trace),
        }


def _delta(delta) -> Fraction:
    delta = parse_rational(delta)
    if delta < 0:
        raise ValueError(f"distortion threshold must be non-negative, got {delta}")
    return delta


def exponent_objective(q, p, spec: DistortionSpec, delta, tol: float = 1e-10) -> float:
    """D(q||p) + R_SI(q, delta); ``math.inf`` off the support of p or when infeasible."""
    kl = kl_divergence(q, p)
    if math.isinf(kl):
        return math.inf
    try:
        return kl + rd_side_info(q, spec, float(_delta(delta)), tol=tol).rate
    except InfeasibleDistortion:
        return math.inf


# -- dual route -----------------------------------------------------------

def _dual_terms(p: np.ndarray, d: np.ndarray, lam: float):
    with np.errstate(divide="ignore"):
        logp = np.log(p)  # (X, Y)
    # a[y, xhat] = ln sum_x P(x,y) exp(-lam d(x,xhat))
    a = logsumexp(logp[:, :, None] - lam * d[:, None, :], axis=0)
    best = a.argmax(axis=1)
    m = a[np.arange(a.shape[0]), best]
    return a, best, m


def _dual_value(p, d, delta, lam):
    _, _, m = _dual_terms(p, d, lam)
    return -lam * delta - float(logsumexp(m))


def _dual_slope_derivative(p, d, delta, lam):
    _, best, m = _dual_terms(p, d, lam)
    live = np.isfinite(m)
    pi = np.zeros_like(m)
    pi[live] = np.exp(m[live] - logsumexp(m[live]))
    with np.errstate(divide="ignore"):
        logp = np.log(p)
    slope = 0.0
    for y in np.flatnonzero(live):
        dcol = d[:, best[y]]
        w = logp[:, y] - lam * dcol
        w = np.exp(w - logsumexp(w))
        slope += pi[y] * float(w @ dcol)
    return slope - delta


def exponent_dual(p, spec: DistortionSpec, delta) -> tuple[float, float]:
    """(value, slope) of the Lagrangian lower bound on E*, maximized over slope."""
    pm = p.mass if isinstance(p, JointPmf) else np.asarray(p, dtype=float)
    d = spec.d_float
    dl = float(_delta(delta))
    supp = pm > 0
    floor = float(min(d[x].min() for x, _ in zip(*np.nonzero(supp))))
    if dl < floor - 1e-12:
        return math.inf, math.inf
    if dl <= floor + 1e-12:
        # supremum approached as the slope grows; evaluate the limit directly
        total = 0.0
        for y in range(pm.shape[1]):
            xs = np.flatnonzero(supp[:, y])
            if xs.size == 0:
                continue
            m_y = min(d[x].min() for x in xs)
            if m_y > floor + 1e-12:
                continue
            total += max(float(pm[xs, y][np.abs(d[xs, k] - floor) <= 1e-12].sum())
                         for k in range(d.shape[1]))
        return -math.log(total) - 0.0, math.inf
    if _dual_slope_derivative(pm, d, dl, 0.0) <= 0:
        return max(0.0, _dual_value(pm, d, dl, 0.0)), 0.0
    lo, hi = 0.0, 1.0
    while _dual_slope_derivative(pm, d, dl, hi) > 0 and hi < 1e12:
        lo, hi = hi, hi * 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _dual_slope_derivative(pm, d, dl, mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * max(1.0, hi):
            break
    lam = 0.5 * (lo + hi)
    return max(0.0, _dual_value(pm, d, dl, lam)), lam


def dual_argmin(p, spec: DistortionSpec, delta) -> np.ndarray | None:
    """Joint law Q tilted toward the dual's per-y best symbol; None when the slope is infinite."""
    value, lam = exponent_dual(p, spec, delta)
    if not math.isfinite(lam):
        return None
    pm = p.mass
    d = spec.d_float
    _, best, _ = _dual_terms(pm, d, lam)
    q = pm * np.exp(-lam * d[:, best])
    return q / q.sum()


# -- primal descent -------------------------------------------------------

def _project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    n = v.size
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    rho = np.nonzero(u * np.arange(1, n + 1) > css)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


class _Objective:
    """Objective over the support cells of P, with a warm-started R_SI solver."""

    def __init__(self, p: JointPmf, spec: DistortionSpec, delta: float, rd_tol: float):
        self.p = p.mass
        self.support = np.flatnonzero(p.mass.ravel() > 0)
        self.spec = spec
        self.delta = delta
        self.rd_tol = rd_tol
        self.calls = 0
        self._warm = None

    def table(self, x: np.ndarray) -> np.ndarray:
        full = np.zeros(self.p.size)
        full[self.support] = x / x.sum()
        return full.reshape(self.p.shape)

    def parts(self, x: np.ndarray) -> tuple[float, float]:
        self.calls += 1
        q = self.table(x)
        kl = kl_divergence(q, self.p)
        solver = SideInfoRD(q, self.spec, tol=self.rd_tol)
        if self._warm is not None:
            solver._warm_lam, solver._warm_r = self._warm
        try:
            rate = solver.rate_at_distortion(self.delta)
        except InfeasibleDistortion:
            return kl, math.inf
        if solver._warm_lam is not None:
            self._warm = (solver._warm_lam, solver._warm_r)
        return kl, rate

    def __call__(self, x: np.ndarray) -> float:
        kl, rate = self.parts(x)
        return kl + rate


def _gradient(f: _Objective, x: np.ndarray, fx: float, h: float) -> np.ndarray:
    g = np.zeros_like(x)
    for i in range(x.size):
        up = x.copy()
        up[i] += h
        f_up = f(up)
        if x[i] > h:
            dn = x.copy()
            dn[i] -= h
            f_dn = f(dn)
        else:
            f_dn = math.inf
        if math.isfinite(f_up) and math.isfinite(f_dn):
            g[i] = (f_up - f_dn) / (2 * h)
        elif math.isfinite(f_up):
            g[i] = (f_up - fx) / h
        elif math.isfinite(f_dn):
            g[i] = (fx - f_dn) / h
    return g


def _descend(f: _Objective, x0: np.ndarray, opts: ExponentOptions,
             incumbent=lambda: math.inf) -> tuple[np.ndarray, float, dict]:
    x = _project_simplex(x0)
    fx = f(x)
    info = {"initial": fx, "iterations": 0, "status": "converged"}
    if not math.isfinite(fx):
        info.update(final=fx, status="infeasible")
        return x, fx, info
    step = 1.0
    small = 0
    window = 20
    abandon_window = 10
    values = [fx]
    for it in range(1, opts.max_iter + 1):
        info["iterations"] = it
        g = _gradient(f, x, fx, opts.fd_step)
        stationary = np.max(np.abs(_project_simplex(x - g) - x)) < 1e-8
        if stationary:
            break
        t = step
        stuck = False
        while True:
            xn = _project_simplex(x - t * g)
            move = xn - x
            if np.max(np.abs(move)) < 1e-13:
                stuck = True
                break
            fn = f(xn)
            if math.isfinite(fn) and fn <= fx + 1e-4 * float(g @ move):
                break
            t *= 0.5
            if t < 1e-14:
                stuck = True
                break
        if stuck:
            # no descent along the projected gradient; only noise-level progress is left
            if np.max(np.abs(_project_simplex(x - g) - x)) > 1e-4:
                info["status"] = "stagnated"
            break
        decrease = fx - fn
        x, fx = xn, fn
        values.append(fx)
        step = min(t * 4, 1e3)
        small = small + 1 if decrease < opts.tol * 1e-3 else 0
        if small >= 3:
            break
        if len(values) > window and values[-window - 1] - fx < opts.tol * 0.1:
            # zig-zag across a kink of the rate term: progress below tolerance
            info["status"] = "stagnated"
            break
        if fx <= incumbent() + opts.tol * 0.1:
            # matched the best value found so far
            break
        if len(values) > abandon_window:
            # at the recent pace this start would need several more windows to beat the best one
            pace = values[-abandon_window - 1] - fx
            if fx - incumbent() > 3 * pace:
                info["status"] = "abandoned"
                break
    else:
        info["status"] = "max_iter"
    info["final"] = fx
    return x, fx, info


def _joint_polish(p: np.ndarray, d: np.ndarray, delta: float, w: np.ndarray,
                  max_iter: int = 2000, tol: float = 1e-14) -> tuple[np.ndarray, float] | None:
    """Alternating minimization of D(T || P W) over joint laws T(x, y, xhat)
    with E_T d <= delta, and over output conditionals W(xhat | y).

    For fixed W the best T is the exponential tilt P W exp(-lam d) / Z; for
    fixed T the best W is T(xhat | y).  Each half-step lowers the value, and
    the joint problem is convex, so the iteration drifts to the global
    minimum even where the outer objective has a kink.  Returns the x-y
    marginal of the final T and its value, or None if delta is below what a
    full-support W can reach.
    """
    mask = p > 0
    logp = np.where(mask, np.log(np.where(mask, p, 1.0)), -np.inf)[:, :, None]
    dd = d[:, None, :]
    w = np.clip(w, 1e-300, None)
    w = w / w.sum(axis=1, keepdims=True)

    def tilt(logw, lam):
        a = logp + logw[None, :, :] - lam * dd
        log_z = logsumexp(a)
        t = np.exp(a - log_z)
        return t, log_z

    def mean_d(logw, lam):
        t, _ = tilt(logw, lam)
        return float((t * dd).sum())

    prev = math.inf
    value = math.inf
    t = None
    for _ in range(max_iter):
        logw = np.log(w)
        if mean_d(logw, 0.0) <= delta:
            lam = 0.0
        else:
            hi = 1.0
            while mean_d(logw, hi) > delta:
                hi *= 4.0
                if hi > 1e8:
                    return None
            lo = 0.0
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if mean_d(logw, mid) > delta:
                    lo = mid
                else:
                    hi = mid
                if hi - lo <= 1e-15 * max(1.0, hi):
                    break
            lam = hi
        t, log_z = tilt(logw, lam)
        value = -lam * delta - float(log_z)
        ty = t.sum(axis=(0, 2))
        w_new = t.sum(axis=0) / np.where(ty > 0, ty, 1.0)[:, None]
        w = np.where(ty[:, None] > 0, w_new, w)
        w = np.clip(w, 1e-300, None)
        if prev - value < tol:
            break
        prev = value
    return t.sum(axis=2), value


def _grid_seeds(k: int, resolution: int) -> list[np.ndarray]:
    seeds = []
    for combo in combinations_with_replacement(range(k), resolution):
        v = np.bincount(combo, minlength=k).astype(float)
        seeds.append(v / resolution)
    return seeds


def deception_exponent(p: JointPmf, spec: DistortionSpec, delta, opts: ExponentOptions | None = None,
                       warm: list[np.ndarray] | None = None) -> ExponentResult:
    """Smallest D(Q||P) + R_SI(Q, delta) found by multi-start projected descent.

    Seeds: P itself, ``opts.starts`` Dirichlet draws on support(P), a coarse
    simplex grid when |X||Y| <= ``opts.grid_cells``, and the support vertices
    (always feasible when any Q is).  All seeds are scored; P, any ``warm``
    seeds and the ``opts.refine`` best of the rest are refined by descent.
    """
    opts = opts or ExponentOptions()
    delta = _delta(delta)
    if spec.shape[0] != p.shape[0]:
        raise ValueError("distortion table and joint law disagree on |X|")
    f = _Objective(p, spec, float(delta), opts.rd_tol)
    k = f.support.size
    p_vec = p.mass.ravel()[f.support]
    rng = np.random.default_rng(opts.seed)

    candidates: list[tuple[str, np.ndarray]] = [("P", p_vec.copy())]
    for i, w in enumerate(warm or []):
        candidates.append((f"warm{i}", np.asarray(w, dtype=float).ravel()[f.support]))
    if opts.dual_seed:
        q_dual = dual_argmin(p, spec, delta)
        if q_dual is not None:
            candidates.append(("dual", q_dual.ravel()[f.support]))
    pinned = len(candidates)
    for i in range(opts.starts):
        candidates.append((f"dirichlet{i}", rng.dirichlet(np.ones(k))))
    if p.mass.size <= opts.grid_cells:
        for i, g in enumerate(_grid_seeds(k, opts.grid_resolution)):
            candidates.append((f"grid{i}", g))
    for i in range(k):
        e = np.zeros(k)
        e[i] = 1.0
        candidates.append((f"vertex{i}", e))

    scores = [f(c) for _, c in candidates]
    order = sorted(range(pinned, len(candidates)), key=lambda i: (scores[i], i))
    chosen = list(range(pinned)) + [i for i in order if math.isfinite(scores[i])][: opts.refine]
    if not any(math.isfinite(scores[i]) for i in range(len(candidates))):
        raise InfeasibleDistortion(f"no joint law on support(P) meets distortion {delta}")

    dual, slope = exponent_dual(p, spec, delta)
    trace: list[dict] = []
    # the joint polish from the best seed gives an incumbent that lets weak starts stop early
    seed_best = min((i for i in range(len(candidates)) if math.isfinite(scores[i])), key=lambda i: (scores[i], i))
    q_inc, f_inc = f.table(_project_simplex(candidates[seed_best][1])), scores[seed_best]
    if f_inc - dual > 1e-12:
        polished = _polish_from(p, spec, float(delta), q_inc, f, opts)
        if polished is not None:
            polished[1]["start"] = f"polish:{candidates[seed_best][0]}"
            trace.append(polished[1])
            if polished[1]["final"] < f_inc:
                q_inc, f_inc = polished[0], polished[1]["final"]
    best_seen = [f_inc]

    def run(i):
        local = _Objective(p, spec, float(delta), opts.rd_tol)
        x, fx, info = _descend(local, candidates[i][1], opts, incumbent=lambda: best_seen[0])
        info["start"] = candidates[i][0]
        best_seen[0] = min(best_seen[0], fx)
        return x, fx, info

    if opts.threads > 1:
        with ThreadPoolExecutor(max_workers=opts.threads) as pool:
            runs = list(pool.map(run, chosen))
    else:
        runs = [run(i) for i in chosen]
    trace.extend(info for _, _, info in runs)

    best = min(range(len(runs)), key=lambda j: (runs[j][1], j))
    q_best, f_best = q_inc, f_inc
    if runs[best][1] < f_inc:
        q_best, f_best = f.table(runs[best][0]), runs[best][1]
        if f_best - dual > 1e-12:
            polished = _polish_from(p, spec, float(delta), q_best, f, opts)
            if polished is not None:
                polished[1]["start"] = f"polish:{runs[best][2]['start']}"
                trace.append(polished[1])
                if polished[1]["final"] < f_best:
                    q_best = polished[0]
    kl = kl_divergence(q_best, p.mass)
    rd = rd_side_info(q_best, spec, float(delta), tol=opts.rd_tol).rate
    exponent = kl + rd
    trace = tuple(trace)
    stalled = any(t["status"] in ("stagnated", "max_iter") for t in trace)

    upper = exponent_objective(p, p, spec, delta)
    assert exponent >= -1e-12, exponent
    assert exponent <= upper + opts.tol, (exponent, upper)
    # a stalled start only matters when the result is not pinned by the dual
    stagnated = stalled and exponent - dual > opts.tol
    return ExponentResult(max(0.0, exponent), JointPmf.from_array(q_best, p.x_alphabet, p.y_alphabet),
                          rd, kl, delta, trace, dual, slope, stagnated)


def _polish_from(p: JointPmf, spec: DistortionSpec, delta: float, q: np.ndarray,
                 f: _Objective, opts: ExponentOptions):
    """Run the joint polish from the output conditional of R_SI's channel at q."""
    try:
        v = SideInfoRD(q, spec, tol=opts.rd_tol).point_at_distortion(delta).channel.table
    except InfeasibleDistortion:
        return None
    qy = q.sum(axis=0)
    w = np.einsum("xy,xyz->yz", q, v) / np.where(qy > 0, qy, 1.0)[:, None]
    w = 0.999 * w + 0.001 / w.shape[1]
    out = _joint_polish(p.mass, spec.d_float, delta, w)
    if out is None:
        return None
    q_new, value = out
    x = q_new.ravel()[f.support]
    x = x / x.sum()
    fx = f(x)
    info = {"start": "polish", "status": "converged", "iterations": 0,
            "initial": value, "final": fx}
    return f.table(x), info


def exponent_sweep(p: JointPmf, spec: DistortionSpec, delta_list, opts: ExponentOptions | None = None):
    """E* over a list of thresholds, solved in ascending order with warm starts.

    Results come back in the order of ``delta_list``.
    """
    deltas = [_delta(d) for d in delta_list]
    order = sorted(range(len(deltas)), key=lambda i: deltas[i])
    out: dict[int, ExponentResult] = {}
    prev = None
    for i in order:
        res = deception_exponent(p, spec, deltas[i], opts, warm=None if prev is None else [prev])
        out[i] = res
        prev = res.argmin_q.mass
    return [out[i] for i in range(len(deltas))]


def delta_zero_closed_form(p: JointPmf) -> float:
    """-ln sum_y P(y) max_x P(x|y), the value of E* at zero distortion for
    Hamming-like distortions (d(x, xhat) = 0 exactly when x = xhat)."""
    return -math.log(float(p.mass.max(axis=0).sum()))
