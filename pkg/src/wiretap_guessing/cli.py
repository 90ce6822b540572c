"""Command-line front end.

Exit codes: 0 success, 2 invalid input, 1 computational failure (results are
still printed, with unconverged rows flagged).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Any, Optional, Sequence

import numpy as np

from .cipher_sim import (
    CipherSystem,
    brute_optimal_guesser,
    build_combined_strategy,
    build_key_search_strategy,
    build_type_ordered_strategy,
    simulate,
)
from .core_types import Distribution
from .instance import InstanceError, load_instance
from .rate_distortion import ConvergenceError, RdQuery, rate_distortion
from .reliability import RegionQuery, guessing_exponent, region, rrd_optimum
from .types_method import (
    EnumerationGuardError,
    TypeClass,
    build_covering,
    enumerate_types,
    type_class_log_probability,
    type_class_size,
    type_probability_bounds,
    verify_covering,
)

SIG_DIGITS = 12


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# argument parsing helpers
# ---------------------------------------------------------------------------


def _float(text: str, name: str, allow_inf: bool = False) -> float:
    try:
        val = float(text)
    except ValueError:
        raise UsageError(f"--{name}: not a number: {text!r}") from None
    if math.isnan(val) or (math.isinf(val) and not (allow_inf and val > 0)):
        raise UsageError(f"--{name}: invalid value {text!r}")
    return val


def parse_grid(text: str, name: str) -> list[float]:
    """``START:STOP:STEP`` (inclusive) or a single value."""
    parts = text.split(":")
    if len(parts) == 1:
        return [_float(parts[0], name)]
    if len(parts) != 3:
        raise UsageError(f"--{name}: expected START:STOP:STEP, got {text!r}")
    start, stop, step = (_float(p, name) for p in parts)
    if step <= 0 or stop < start:
        raise UsageError(f"--{name}: need STEP > 0 and STOP >= START")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [float(f"{start + i * step:.{SIG_DIGITS}g}") for i in range(count)]


def _check_e(e: float) -> float:
    if not e > 0:
        raise UsageError("--e: must be > 0 or 'inf'")
    return e


def _check_nonneg(v: float, name: str) -> float:
    if not v >= 0:
        raise UsageError(f"--{name}: must be >= 0")
    return v


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _clean(obj: Any) -> Any:
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        val = float(obj)
        if math.isinf(val):
            return "inf" if val > 0 else "-inf"
        if math.isnan(val):
            return "nan"
        return float(f"{val:.{SIG_DIGITS}g}")
    if isinstance(obj, Distribution):
        return _clean(obj.probs)
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _fmt(v: Any) -> str:
    v = _clean(v)
    if isinstance(v, float):
        return f"{v:.{SIG_DIGITS}g}"
    if isinstance(v, list):
        return " ".join(_fmt(x) for x in v)
    return str(v)


def write_json(obj: Any, out) -> None:
    json.dump(_clean(obj), out, indent=2, sort_keys=False)
    out.write("\n")


def write_csv(rows: list[dict], columns: Sequence[str], out) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])


def emit(rows: list[dict], columns: Sequence[str], as_csv: bool, out) -> None:
    if as_csv:
        write_csv(rows, columns, out)
    else:
        write_json(rows, out)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_rd_curve(args, inst, out) -> int:
    if args.max_iter < 1:
        raise UsageError("--max-iter: must be >= 1")
    rows, failed = [], False
    for delta in parse_grid(args.delta, "delta"):
        _check_nonneg(delta, "delta")
        try:
            sol = rate_distortion(RdQuery(inst.source, inst.distortion, delta), tol=args.tol,
                                  max_iter=args.max_iter)
        except ConvergenceError as exc:
            sol, failed = exc.solution, True
        rows.append({"delta": delta, "rate": sol.rate, "gap_bound": sol.gap_bound,
                     "achieved_distortion": sol.achieved_distortion, "converged": sol.converged})
    emit(rows, ["delta", "rate", "gap_bound", "achieved_distortion", "converged"], args.csv, out)
    return 1 if failed else 0


def cmd_rrd_curve(args, inst, out) -> int:
    delta = _check_nonneg(_float(args.delta, "delta"), "delta")
    rows = []
    for e in _e_grid(args.e):
        opt = rrd_optimum(inst.source, inst.distortion, e, delta, tol=args.tol, grid_steps=args.grid)
        rows.append({"e": e, "delta": delta, "rrd": opt.value, "attaining_p": opt.p,
                     "heuristic": opt.meta["heuristic"]})
    emit(rows, ["e", "delta", "rrd", "attaining_p", "heuristic"], args.csv, out)
    return 0


def _e_grid(text: str) -> list[float]:
    if text.strip().lower() == "inf":
        return [math.inf]
    return [_check_e(e) for e in parse_grid(text, "e")]


def _base_params(args) -> dict:
    return {
        "rk": _check_nonneg(_float(args.rk, "rk"), "rk"),
        "e": _check_e(_float(args.e, "e", allow_inf=True)),
        "delta": _check_nonneg(_float(args.delta, "delta"), "delta"),
    }


def _sweep(args) -> Optional[tuple[str, list[float]]]:
    if not args.sweep:
        return None
    var, spec = args.sweep
    if var not in ("rk", "e", "delta"):
        raise UsageError("--sweep: variable must be rk, e or delta")
    values = parse_grid(spec, "sweep")
    for v in values:
        (_check_e if var == "e" else lambda x: _check_nonneg(x, var))(v)
    return var, values


def emit_region_sweep(inst, var: str, values: Sequence[float], base: dict, tol: float,
                      grid_steps: Optional[int] = None) -> list[dict]:
    """One region per sweep value, as rows ``(sweep_var, rl_min, rl_max, r_min)``."""
    rows = []
    for v in values:
        params = {**base, var: v}
        reg = region(RegionQuery(inst.source, inst.distortion, params["rk"], params["e"], params["delta"]), tol,
                     grid_steps)
        rows.append({"sweep_var": v, "rl_min": reg.rl_min, "rl_max": reg.rl_max, "r_min": reg.r_min})
    return rows


def cmd_region(args, inst, out) -> int:
    base = _base_params(args)
    sweep = _sweep(args)
    if sweep:
        rows = emit_region_sweep(inst, sweep[0], sweep[1], base, args.tol, args.grid)
        emit(rows, ["sweep_var", "rl_min", "rl_max", "r_min"], args.csv, out)
        return 0
    reg = region(RegionQuery(inst.source, inst.distortion, base["rk"], base["e"], base["delta"]), args.tol, args.grid)
    row = {**base, "rl_min": reg.rl_min, "rl_max": reg.rl_max, "r_min": reg.r_min,
           "rrd": reg.rrd, "attaining_p": reg.attaining_p, "heuristic": reg.meta["heuristic"]}
    if args.csv:
        write_csv([row], list(row), out)
    else:
        write_json(row, out)
    return 0


def cmd_exponent(args, inst, out) -> int:
    base = _base_params(args)
    sweep = _sweep(args)
    points = [(v, {**base, sweep[0]: v}) for v in sweep[1]] if sweep else [(None, base)]
    rows = []
    for v, params in points:
        val, p = guessing_exponent(inst.source, inst.distortion, params["rk"], params["e"], params["delta"],
                                   tol=args.tol, grid_steps=args.grid)
        row = {**params, "exponent": val, "attaining_p": p}
        if sweep:
            row = {"sweep_var": v, **row}
        rows.append(row)
    if sweep or args.csv:
        emit(rows, list(rows[0]), args.csv, out)
    else:
        write_json(rows[0], out)
    return 0


def _parse_counts(text: str, size: int) -> TypeClass:
    try:
        counts = tuple(int(c) for c in text.split(","))
    except ValueError:
        raise UsageError(f"--counts: expected comma-separated integers, got {text!r}") from None
    if len(counts) != size:
        raise UsageError(f"--counts: expected {size} entries, got {len(counts)}")
    if any(c < 0 for c in counts) or sum(counts) < 1:
        raise UsageError("--counts: entries must be >= 0 with a positive total")
    return TypeClass(counts, sum(counts))


def cmd_cover(args, inst, out) -> int:
    delta = _check_nonneg(_float(args.delta, "delta"), "delta")
    t = _parse_counts(args.counts, inst.source.size)
    code = build_covering(t, inst.distortion, delta)
    ok = verify_covering(code, inst.distortion)
    rec = {"counts": list(t.counts), "n": t.n, "delta": delta, "class_size": type_class_size(t),
           "codewords": code.size, "rate": code.rate, "rd_rate": code.rd_rate, "gap": code.gap,
           "verified": ok, "construction": code.source}
    if args.list:
        rec["codebook"] = code.codewords
    if args.csv:
        cols = [c for c in rec if c != "codebook"]
        write_csv([rec], cols, out)
    else:
        write_json(rec, out)
    return 0 if ok else 1


def cmd_types(args, inst, out) -> int:
    if args.n < 1:
        raise UsageError("--n: must be >= 1")
    rows = []
    for t in enumerate_types(inst.source.size, args.n):
        lo, hi = type_probability_bounds(t, inst.source)
        rows.append({"counts": list(t.counts), "class_size": type_class_size(t),
                     "log2_prob": type_class_log_probability(t, inst.source),
                     "log2_lower": lo, "log2_upper": hi})
    emit(rows, ["counts", "class_size", "log2_prob", "log2_lower", "log2_upper"], args.csv, out)
    return 0


def cmd_simulate(args, inst, out) -> int:
    if args.n < 1 or args.k < 0 or args.trials < 1:
        raise UsageError("need --n >= 1, --k >= 0 and --trials >= 1")
    delta = _check_nonneg(_float(args.delta, "delta"), "delta")
    e = _check_e(_float(args.e, "e", allow_inf=True))
    system = CipherSystem(args.n, args.k, inst.source)
    d = inst.distortion
    if args.strategy in ("typed", "combined"):
        typed = build_type_ordered_strategy(inst.source, d, delta, e, args.n)
    if args.strategy in ("keysearch", "combined"):
        keys = build_key_search_strategy(system, d)
    if args.strategy == "typed":
        strat = typed
    elif args.strategy == "keysearch":
        strat = keys
    elif args.strategy == "combined":
        strat = build_combined_strategy(typed, keys, args.mode)
    else:
        strat = brute_optimal_guesser(system, d, delta, args.limit)
    if args.limit is not None and args.strategy != "oracle":
        strat.limit = min(strat.limit, args.limit)
    report = simulate(system, strat, d, delta, args.trials, args.seed, keep_counts=bool(args.counts_csv))
    res = report.to_dict()
    res["e"] = e
    if not args.no_theory:
        reg = region(RegionQuery(inst.source, d, system.key_rate, e, delta), args.tol)
        res["theory"] = {"r_k": system.key_rate, "guessing_exponent": reg.r_min, "rl_min": reg.rl_min,
                         "rl_max": reg.rl_max, "rrd": reg.rrd,
                         "error_bound": 2.0 ** (-args.n * e) if not math.isinf(e) else 0.0}
    if args.counts_csv:
        with open(args.counts_csv, "w", encoding="utf-8", newline="") as fh:
            write_csv([{"trial": i, "guesses": c} for i, c in enumerate(report.guess_counts.tolist())],
                      ["trial", "guesses"], fh)
    if args.csv:
        flat = {k: v for k, v in res.items() if not isinstance(v, dict)}
        write_csv([flat], list(flat), out)
    else:
        write_json(res, out)
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wiretap-guess", description="Guessing-wiretapper rate regions and simulation.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("instance", help="instance JSON file")
        p.add_argument("--csv", action="store_true", help="CSV instead of JSON")
        p.add_argument("--tol", type=float, default=1e-9, help="rate-distortion solver tolerance (bits)")

    p = sub.add_parser("rd-curve", help="R(P, delta) over a grid of delta")
    common(p)
    p.add_argument("--delta", required=True, help="START:STOP:STEP or a single value")
    p.add_argument("--max-iter", type=int, default=10_000, help="solver iteration cap")
    p.set_defaults(func=cmd_rd_curve)

    p = sub.add_parser("rrd-curve", help="rate-reliability-distortion function over a grid of e")
    common(p)
    p.add_argument("--e", required=True, help="START:STOP:STEP, a single value, or inf")
    p.add_argument("--delta", required=True)
    p.add_argument("--grid", type=int, default=None, help="simplex grid steps per coordinate")
    p.set_defaults(func=cmd_rrd_curve)

    for name, func, help_text in (("region", cmd_region, "achievable region of guessing rates"),
                                  ("exponent", cmd_exponent, "guessing exponent")):
        p = sub.add_parser(name, help=help_text)
        common(p)
        p.add_argument("--rk", required=True, help="key rate (bits per symbol)")
        p.add_argument("--e", required=True, help="reliability, or inf")
        p.add_argument("--delta", required=True)
        p.add_argument("--sweep", nargs=2, metavar=("VAR", "START:STOP:STEP"),
                       help="sweep one of rk, e, delta")
        p.add_argument("--grid", type=int, default=None, help="simplex grid steps per coordinate")
        p.set_defaults(func=func)

    p = sub.add_parser("cover", help="covering code for one type class")
    common(p)
    p.add_argument("--counts", required=True, help="type as comma-separated symbol counts")
    p.add_argument("--delta", required=True)
    p.add_argument("--list", action="store_true", help="include the codewords")
    p.set_defaults(func=cmd_cover)

    p = sub.add_parser("types", help="types of blocklength n with their probabilities")
    common(p)
    p.add_argument("--n", type=int, required=True)
    p.set_defaults(func=cmd_types)

    p = sub.add_parser("simulate", help="Monte Carlo run of the cipher system against a wiretapper")
    common(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--delta", required=True)
    p.add_argument("--e", default="inf", help="reliability for the type-ordered list, or inf")
    p.add_argument("--strategy", choices=("typed", "keysearch", "combined", "oracle"), default="combined")
    p.add_argument("--mode", choices=("budget", "interleave"), default="budget",
                   help="how the combined strategy merges its two lists")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--limit", type=int, default=None, help="cap on the number of guesses")
    p.add_argument("--counts-csv", default=None, help="write per-trial guess counts here")
    p.add_argument("--no-theory", action="store_true", help="skip the theoretical exponent")
    p.set_defaults(func=cmd_simulate)
    return parser


def run(argv: Optional[Sequence[str]] = None, out=None, err=None) -> int:
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    try:
        args = build_parser().parse_args(argv)
        inst = load_instance(args.instance)
        if not args.tol > 0:
            raise UsageError("--tol: must be > 0")
        if getattr(args, "grid", None) is not None and args.grid < 1:
            raise UsageError("--grid: must be >= 1")
        buf = io.StringIO()
        code = args.func(args, inst, buf)
    except (UsageError, InstanceError, EnumerationGuardError) as exc:
        err.write(f"error: {exc}\n")
        return 2
    except ConvergenceError as exc:
        err.write(f"computation failed: {exc}\n")
        return 1
    except ValueError as exc:
        err.write(f"error: {exc}\n")
        return 2
    out.write(buf.getvalue())
    if code == 1:
        err.write("warning: some results did not converge; see the flagged rows\n")
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
