"""Command-line driver.

    python3 -m deception <command> --model models/dsbs.json [options]

Data goes to --output (or stdout); the one-line summary goes to stderr.
JSON carries ``"schema": 1`` and sorted keys, CSV has a unit-bearing header
row, so identical arguments give byte-identical output.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import attack as atk
from . import oracle as orc
from . import typeclasses as tc
from .exponent import ExponentOptions, deception_exponent, delta_zero_closed_form, exponent_dual, exponent_sweep
from .model_io import SCHEMA, ModelError, load_model
from .prob import BudgetExceeded, parse_rational
from .rd import ConvergenceError, InfeasibleDistortion, rd_curve, rd_fixed_slope, rd_side_info

DEFAULT_SEED = 0


@dataclass
class ExperimentConfig:
    command: str
    model_path: str | None = None
    params: dict = field(default_factory=dict)
    output: str | None = None
    emit: str = "json"


class CommandFailed(Exception):
    """A check inside a command failed; the report was still written."""


def _rational_arg(text: str) -> Fraction:
    try:
        return parse_rational(text)
    except (TypeError, ValueError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _rational_list(text: str) -> list[Fraction]:
    return [_rational_arg(t) for t in text.split(",") if t.strip()]


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _clean(obj):
    """JSON-safe copy: non-finite floats become strings, numpy scalars become Python ones."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    if isinstance(obj, Fraction):
        return str(obj)
    return obj


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("inf" if v > 0 else "nan")
    return str(v)


def _emit(cfg: ExperimentConfig, doc: dict, header: list[str], rows: list[list]) -> None:
    if cfg.emit == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
        text = buf.getvalue()
    elif cfg.emit == "text":
        widths = [max(len(h), *(len(_fmt(r[i])) for r in rows)) if rows else len(h) for i, h in enumerate(header)]
        lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
        lines += ["  ".join(_fmt(v).ljust(w) for v, w in zip(r, widths)) for r in rows]
        text = "\n".join(lines) + "\n"
    else:
        full = {"schema": SCHEMA, "command": cfg.command}
        full.update(doc)
        text = json.dumps(_clean(full), indent=2, sort_keys=True) + "\n"
    if cfg.output:
        Path(cfg.output).write_text(text)
    else:
        sys.stdout.write(text)


def _summary(line: str) -> None:
    print(line, file=sys.stderr)


def _model(cfg: ExperimentConfig):
    if not cfg.model_path:
        raise ModelError("--model is required")
    return load_model(cfg.model_path)


# -- commands ---------------------------------------------------------------

def cmd_exponent(cfg: ExperimentConfig) -> int:
    m = _model(cfg)
    a = cfg.params
    opts = ExponentOptions(starts=a["starts"], seed=a["seed"], tol=a["tol"], threads=a["threads"])
    deltas = a["deltas"] or [a["delta"]]
    results = exponent_sweep(m.p, m.spec, deltas, opts) if len(deltas) > 1 else [
        deception_exponent(m.p, m.spec, deltas[0], opts)]
    header = ["delta", "exponent_nats", "exponent_bits", "kl_nats", "rd_nats", "dual_bound_nats", "stagnated"]
    rows = [[str(r.delta), r.exponent, r.exponent_bits, r.kl_component, r.rd_component, r.dual_bound,
             r.stagnated] for r in results]
    docs = [r.to_dict() for r in results]
    if not a["trace"]:
        for d in docs:
            d.pop("optimizer_trace")
    _emit(cfg, {"model": m.name, "results": docs}, header, rows)
    r = results[0]
    if len(results) == 1:
        _summary(f"E*({r.delta}) = {r.exponent:.6f} nats ({r.exponent_bits:.6f} bits); "
                 f"dual lower bound {r.dual_bound:.6f} nats")
    else:
        _summary(f"E* at {len(results)} thresholds: " + ", ".join(f"{x.delta}: {x.exponent:.6f}" for x in results)
                 + " nats")
    return 0


def cmd_rd_curve(cfg: ExperimentConfig) -> int:
    m = _model(cfg)
    a = cfg.params
    header = ["lambda_nats_per_distortion", "distortion_per_letter", "rate_nats", "rate_bits"]
    if a["delta"] is not None:
        pt = rd_side_info(m.p.mass, m.spec, a["delta"], tol=a["tol"])
        points = [pt]
    else:
        slopes = a["slopes"] if a["slopes"] else None
        points = list(rd_curve(m.p.mass, m.spec, slopes=slopes, tol=a["tol"]).points)
    rows = [[p.slope, p.distortion, max(0.0, p.rate), max(0.0, p.rate_bits)] for p in points]
    doc = {"model": m.name, "points": [dict(zip(header, r)) for r in rows]}
    _emit(cfg, doc, header, rows)
    if a["delta"] is not None:
        _summary(f"R_SI(P, {a['delta']}) = {rows[0][2]:.6f} nats ({rows[0][3]:.6f} bits)")
    else:
        _summary(f"{len(rows)} envelope points, rate {rows[0][2]:.6f} to {rows[-1][2]:.6f} nats")
    return 0


def cmd_oracle(cfg: ExperimentConfig) -> int:
    m = _model(cfg)
    a = cfg.params
    modes = ["naive", "fast"] if a["mode"] == "both" else [a["mode"]]
    header = ["n", "delta", "mode", "p_star_exact", "p_star_probability", "exponent_n_nats"]
    rows, docs = [], []
    mismatch = []
    for n in a["n"]:
        res = {md: orc.optimal_deception_prob(m.p, m.spec, a["delta"], n, mode=md, force=a["force"],
                                              threads=a["threads"]) for md in modes}
        if len(res) == 2 and res["naive"].p_star != res["fast"].p_star:
            mismatch.append(n)
        for md, r in res.items():
            rows.append([n, str(r.delta), md, str(r.p_star), float(r.p_star), r.exponent_n])
            docs.append(r.to_dict())
    doc = {"model": m.name, "results": docs, "evaluators_agree": not mismatch}
    _emit(cfg, doc, header, rows)
    last = rows[-1]
    _summary(f"P*_{last[0]} = {last[3]} ({last[4]:.6g}); exponent_n = {last[5]:.6f} nats"
             + ("" if len(modes) == 1 else f"; naive and fast {'agree' if not mismatch else 'DISAGREE'}"))
    if mismatch:
        raise CommandFailed(f"naive and fast evaluators disagree at n = {mismatch}")
    return 0


def _strategy(m, a, n):
    if a["strategy"] == "blind":
        return orc.DeceptionFunction.constant([a["blind_symbol"]] * n), None
    r = orc.optimal_deception_prob(m.p, m.spec, a["delta"], n)
    return orc.oracle_strategy(r), r


def cmd_simulate(cfg: ExperimentConfig) -> int:
    m = _model(cfg)
    a = cfg.params
    n = a["n"]
    f, r = _strategy(m, a, n)
    est, se = orc.monte_carlo_success_rate(f, m.p, m.spec, a["delta"], n, a["trials"], seed=a["seed"])
    exact = orc.success_probability(f, m.p, m.spec, a["delta"])
    z = abs(est - float(exact)) / se if se > 0 else (0.0 if est == float(exact) else math.inf)
    header = ["n", "delta", "strategy", "trials", "estimate_probability", "stderr_probability",
              "exact_probability", "z_score"]
    row = [n, str(parse_rational(a["delta"])), a["strategy"], a["trials"], est, se, float(exact), z]
    doc = dict(zip(header, row))
    doc["exact_probability_rational"] = str(exact)
    if r is not None:
        doc["p_star"] = str(r.p_star)
    _emit(cfg, doc, header, [row])
    _summary(f"{a['strategy']} strategy, n={n}: {est:.6f} +/- {se:.6f} vs exact {float(exact):.6f} "
             f"({z:.2f} standard errors)")
    return 0


def cmd_attack(cfg: ExperimentConfig) -> int:
    m = _model(cfg)
    a = cfg.params
    n, delta = a["n"], a["delta"]
    code = atk.random_rd_code(m.p, m.spec, delta, n, a["rate"], seed=a["seed"])
    masses = atk.bin_masses(code, m.p, m.spec, delta)
    f, chosen = atk.construct_attack(code, m.p, m.spec, delta, masses)
    success = atk.deception_success_probability(f, m.p, m.spec, delta)
    covered = atk.code_acceptance_mass(code, m.p, m.spec, delta)
    oracle = orc.optimal_deception_prob(m.p, m.spec, delta, n)
    pigeonhole = max(masses) * code.index_count >= covered
    header = ["n", "delta", "rate_nats", "index_count", "chosen_bin", "success_probability",
              "code_success_probability", "oracle_p_star_probability", "attack_exponent_nats",
              "oracle_exponent_nats", "pigeonhole_holds"]
    row = [n, str(parse_rational(delta)), a["rate"], code.index_count, chosen, float(success), float(covered),
           float(oracle.p_star), orc.finite_exponent(success, n), oracle.exponent_n, pigeonhole]
    doc = dict(zip(header, row))
    doc.update(success_probability_rational=str(success), oracle_p_star_rational=str(oracle.p_star),
               bin_masses=[str(x) for x in masses])
    _emit(cfg, doc, header, [row])
    _summary(f"bin {chosen} of {code.index_count}: success {float(success):.6f} vs oracle "
             f"{float(oracle.p_star):.6f} at n={n}")
    if not pigeonhole or success != max(masses):
        raise CommandFailed("attack invariants violated")
    return 0


def cmd_types(cfg: ExperimentConfig) -> int:
    a = cfg.params
    action = a["action"]
    if action == "demo-covering":
        counts = tuple(a["counts"])
        t = tc.TypeClass(sum(counts), counts)
        members = list(tc.type_class_members(t))
        size = min(len(members), max(1, a["subset_size"] or math.ceil(len(members) / 4)))
        rng = np.random.default_rng(a["seed"])
        pick = sorted(rng.choice(len(members), size=size, replace=False).tolist())
        s = [members[i] for i in pick]
        cover = tc.greedy_permutation_cover(s, t)
        bound = tc.covering_bound(len(members), len(s))
        header = ["n", "counts", "class_size", "subset_size", "cover_size", "lemma_bound", "complete"]
        row = [t.n, " ".join(map(str, counts)), len(members), len(s), len(cover), bound,
               tc.cover_is_complete(s, t, cover)]
        doc = dict(zip(header, row))
        doc["permutations"] = [list(p.index) for p in cover]
        _emit(cfg, doc, header, [row])
        _summary(f"covered a type class of {len(members)} from {len(s)} members with {len(cover)} "
                 f"permutations (bound {bound})")
        return 0
    if action == "demo-neighborhood":
        counts = tuple(a["counts"])
        t = tc.TypeClass(sum(counts), counts)
        pmf = a["pmf"] or [Fraction(1, len(counts))] * len(counts)
        prof = tc.neighborhood_mass_profile(t, pmf)
        header = ["radius", "neighborhood_probability_exact", "neighborhood_probability"]
        rows = [[l, str(v), float(v)] for l, v in prof]
        _emit(cfg, {"counts": list(counts), "profile": [dict(zip(header, r)) for r in rows]}, header, rows)
        _summary(f"P^n(type class) = {float(prof[0][1]):.6f}; reaches 1 at radius "
                 f"{next(l for l, v in prof if v == 1)}")
        return 0
    # verify-bounds
    header = ["n", "alphabet_size", "type_count", "type_count_bound", "sizes_sum", "alphabet_power",
              "ball_bound_holds"]
    rows = []
    ok = True
    for k in range(2, a["alphabet_max"] + 1):
        for n in range(1, a["n_max"] + 1):
            types = tc.enumerate_types(n, k)
            total = sum(tc.type_class_size(t) for t in types)
            balls = all(tc.hamming_ball_bound_holds(n, l, k) for l in range(0, n // 2 + 1))
            good = total == k**n and len(types) <= (n + 1) ** k and balls
            ok &= good
            rows.append([n, k, len(types), (n + 1) ** k, total, k**n, balls])
    _emit(cfg, {"rows": [dict(zip(header, r)) for r in rows], "all_hold": ok}, header, rows)
    _summary(f"type-count, partition and Hamming-ball bounds {'hold' if ok else 'FAIL'} on {len(rows)} cases")
    if not ok:
        raise CommandFailed("a types-toolkit bound failed")
    return 0


def cmd_verify(cfg: ExperimentConfig) -> int:
    m = _model(cfg)
    a = cfg.params
    delta = parse_rational(a["delta"])
    p, spec = m.p, m.spec
    checks = []

    def add(name, passed, measured, bound):
        checks.append([name, "pass" if passed else "FAIL", measured, bound])

    opts = ExponentOptions(starts=a["starts"], seed=a["seed"], threads=a["threads"])
    res = deception_exponent(p, spec, delta, opts)
    add("exponent_nonnegative_and_below_Q=P", 0 <= res.exponent <= rd_side_info(p.mass, spec, float(delta)).rate + 1e-6,
        res.exponent, "[0, R_SI(P,delta)]")
    add("descent_vs_dual_gap_nats", abs(res.certified_gap) <= 1e-5, res.certified_gap, 1e-5)
    if spec.is_zero_diagonal_identity():
        e0 = deception_exponent(p, spec, 0, opts).exponent
        cf = delta_zero_closed_form(p)
        add("zero_distortion_closed_form_nats", abs(e0 - cf) <= 1e-4, abs(e0 - cf), 1e-4)
    dual0, _ = exponent_dual(p, spec, delta)
    prev = None
    for n in range(1, a["n_max"] + 1):
        try:
            fast = orc.optimal_deception_prob(p, spec, delta, n)
        except BudgetExceeded:
            break
        slack = p.mass.size * math.log(n + 1) / n
        add(f"converse_bound_n={n}", fast.exponent_n >= res.exponent - slack - 1e-9,
            fast.exponent_n, res.exponent - slack)
        add(f"chernoff_bound_n={n}", fast.exponent_n >= dual0 - 1e-9, fast.exponent_n, dual0)
        if orc.naive_evaluations(p, spec, n) <= 10**5:
            naive = orc.optimal_deception_prob(p, spec, delta, n, mode="naive")
            add(f"naive_equals_fast_n={n}", naive.p_star == fast.p_star, str(fast.p_star), str(naive.p_star))
        if prev is not None and n == 2:
            add("superadditivity_n=1+1", fast.p_star >= prev.p_star**2, str(fast.p_star), str(prev.p_star**2))
        prev = fast
    curve = rd_curve(p.mass, spec)
    add("rd_curve_nonincreasing", curve.is_nonincreasing(), len(curve.points), "pairwise")
    add("rd_curve_convex", curve.is_convex(), len(curve.points), "pairwise")
    worst = 0.0
    for lam in (0.1, 1.0, 10.0):
        try:
            h = rd_fixed_slope(p.mass, spec, lam, trace=True).history
        except ConvergenceError:
            h = [math.inf, 0.0, math.inf]
        worst = max([worst] + [b - a_ for a_, b in zip(h, h[1:])])
    add("ba_lagrangian_monotone", worst <= 1e-12, worst, 1e-12)
    code = atk.random_table_code(2, 3, p.shape[1], spec.shape[1], spec, seed=a["seed"])
    masses = atk.bin_masses(code, p, spec, delta)
    covered = atk.code_acceptance_mass(code, p, spec, delta)
    f, i = atk.construct_attack(code, p, spec, delta, masses)
    add("pigeonhole_bin_mass", max(masses) * code.index_count >= covered, str(max(masses)), str(covered / 3))
    add("attack_success_equals_bin_mass", atk.deception_success_probability(f, p, spec, delta) == masses[i - 1],
        str(masses[i - 1]), "exact")

    header = ["check", "status", "measured", "bound"]
    failed = [c[0] for c in checks if c[1] != "pass"]
    _emit(cfg, {"model": m.name, "delta": str(delta), "checks": [dict(zip(header, c)) for c in checks],
                "all_pass": not failed}, header, checks)
    _summary(f"verify: {len(checks) - len(failed)}/{len(checks)} checks pass" + (f"; failed: {failed}" if failed else ""))
    if failed:
        raise CommandFailed(f"failed checks: {', '.join(failed)}")
    return 0


COMMANDS = {
    "exponent": cmd_exponent,
    "rd-curve": cmd_rd_curve,
    "oracle": cmd_oracle,
    "simulate": cmd_simulate,
    "attack": cmd_attack,
    "types": cmd_types,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="deception", description="Deception exponents with side information.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, emit_default="json", model=True):
        if model:
            sp.add_argument("--model", required=True, help="model JSON file (see docs/model-format.md)")
        sp.add_argument("--output", help="write the report here instead of stdout")
        sp.add_argument("--emit", choices=["json", "csv", "text"], default=emit_default)
        sp.add_argument("--threads", type=int, default=1, help="worker threads inside modules")
        sp.add_argument("--seed", type=int, default=DEFAULT_SEED)

    sp = sub.add_parser("exponent", help="optimal deception exponent E*(delta)")
    common(sp)
    sp.add_argument("--delta", type=_rational_arg, default=Fraction(0))
    sp.add_argument("--deltas", type=_rational_list, default=None, help="comma-separated sweep, e.g. 0,1/20,1/10")
    sp.add_argument("--starts", type=int, default=64)
    sp.add_argument("--tol", type=float, default=1e-6)
    sp.add_argument("--trace", action="store_true", help="include the optimizer trace in JSON")

    sp = sub.add_parser("rd-curve", help="R_SI(P, .) envelope, or one point with --delta")
    common(sp, "csv")
    sp.add_argument("--delta", type=_rational_arg, default=None)
    sp.add_argument("--slopes", type=lambda s: [float(t) for t in s.split(",") if t.strip()], default=None)
    sp.add_argument("--tol", type=float, default=1e-9)

    sp = sub.add_parser("oracle", help="exact optimal success probability at blocklength n")
    common(sp)
    sp.add_argument("--n", type=_int_list, required=True, help="blocklength or comma-separated list")
    sp.add_argument("--delta", type=_rational_arg, default=Fraction(0))
    sp.add_argument("--mode", choices=["naive", "fast", "both"], default="fast")
    sp.add_argument("--force", action="store_true", help="ignore the evaluation budget")

    sp = sub.add_parser("simulate", help="Monte Carlo success rate of a strategy")
    common(sp)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--delta", type=_rational_arg, default=Fraction(0))
    sp.add_argument("--trials", type=int, default=100_000)
    sp.add_argument("--strategy", choices=["oracle", "blind"], default="oracle")
    sp.add_argument("--blind-symbol", type=int, default=0)

    sp = sub.add_parser("attack", help="deception function from the heaviest bin of a random code")
    common(sp)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--delta", type=_rational_arg, default=Fraction(0))
    sp.add_argument("--rate", type=float, required=True, help="code rate in nats per letter")

    sp = sub.add_parser("types", help="method-of-types demonstrations")
    common(sp, "text", model=False)
    sp.add_argument("action", choices=["demo-covering", "demo-neighborhood", "verify-bounds"])
    sp.add_argument("--counts", type=_int_list, default=[3, 3], help="type as comma-separated counts")
    sp.add_argument("--subset-size", type=int, default=None)
    sp.add_argument("--pmf", type=_rational_list, default=None)
    sp.add_argument("--n-max", type=int, default=8)
    sp.add_argument("--alphabet-max", type=int, default=4)

    sp = sub.add_parser("verify", help="cross-module checks on one model")
    common(sp, "text")
    sp.add_argument("--delta", type=_rational_arg, default=Fraction(0))
    sp.add_argument("--n-max", type=int, default=6)
    sp.add_argument("--starts", type=int, default=16)
    return ap


def config_from_args(ns: argparse.Namespace) -> ExperimentConfig:
    params = {k: v for k, v in vars(ns).items() if k not in ("command", "model", "output", "emit")}
    return ExperimentConfig(ns.command, getattr(ns, "model", None), params, ns.output, ns.emit)


def run(cfg: ExperimentConfig) -> int:
    if cfg.model_path and not Path(cfg.model_path).exists():
        raise ModelError(f"{cfg.model_path}: no such file")
    return COMMANDS[cfg.command](cfg)


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    cfg = config_from_args(ns)
    try:
        return run(cfg)
    except CommandFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ModelError, BudgetExceeded, InfeasibleDistortion, ConvergenceError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
