"""Command-line front end: ``redfam <verb> MODEL [options]``.

Exit codes: 0 success, 1 usage/parse/validation error, 2 budget exhausted,
3 the two engines disagree.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import statistics
import sys
import time
from pathlib import Path

from . import __version__
from . import explicit as ex
from . import symbolic as sy
from .model import FamilyModel, ModelError, config_at, load_model, reset_value_optimization, validate
from .mtbdd import Manager, NodeBudgetExceeded
from .synthesis import (CostError, format_points, load_cost, make_points, pareto_front)

logger = logging.getLogger("redfam")

EXIT_USAGE = 1
EXIT_BUDGET = 2
EXIT_MISMATCH = 3
MISMATCH_TOL = 1e-9


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return text == "on"


def _nonneg(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _prob(text: str) -> float:
    v = float(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError("must lie strictly between 0 and 1")
    return v


def _sample(text: str) -> str:
    try:
        ex.parse_sample(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return text


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("model", help="model file (.fam)")
    common.add_argument("--rounds", type=_nonneg, help="number of rounds n for pfail")
    common.add_argument("--theta", type=_prob, help="failure-probability threshold for qround")
    common.add_argument("--nmax", type=_positive, default=1000, help="round cap for qround (default 1000)")
    common.add_argument("--engine", choices=("symbolic", "explicit", "both"), default="symbolic")
    common.add_argument("--cost", help="cost CSV for pareto")
    common.add_argument("--sample", type=_sample, help="all, K@SEED or P%%@SEED")
    common.add_argument("--reset-values", type=_on_off, default=False, metavar="on|off")
    common.add_argument("--reorder", choices=("none", "final", "iterative"), default="none")
    common.add_argument("--config-vars", choices=("top", "bottom"), default="top",
                        help="placement of the configuration bits in the variable order")
    common.add_argument("--compose", type=_on_off, default=True, metavar="on|off",
                        help="multiply the element steps into one round matrix (default on)")
    common.add_argument("--count-halt", action="store_true", help="count HALT as failure")
    common.add_argument("--jobs", type=_positive, default=1, help="worker processes for the explicit engine")
    common.add_argument("--out", help="output file (default stdout)")
    common.add_argument("--scatter", help="pareto: file for the all-configuration scatter")
    common.add_argument("--timings", action="store_true", help="add wall-time columns to explicit rows")
    common.add_argument("--cache-size", type=_positive, default=1 << 20)
    common.add_argument("--node-budget", type=_positive)
    common.add_argument("--state-budget", type=_positive, default=ex.DEFAULT_STATE_BUDGET)
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = _Parser(prog="redfam", description="All-in-one reliability analysis of protection families.")
    p.add_argument("--version", action="version", version=f"redfam {__version__}")
    sub = p.add_subparsers(dest="verb", required=True, metavar="VERB")
    sub.add_parser("check", parents=[common], help="pfail within --rounds rounds per configuration")
    sub.add_parser("quantile", parents=[common], help="qround for --theta per configuration")
    sub.add_parser("pareto", parents=[common], help="Pareto front of round time vs pfail")
    sub.add_parser("stats", parents=[common], help="engine statistics and one-by-one extrapolation")
    sub.add_parser("validate", parents=[common], help="parse and validate the model (and --cost)")
    return p


# ---------------------------------------------------------------------------
# shared plumbing


def _header(args) -> str:
    skip = {"verb", "model", "verbose"}
    flags = " ".join(f"--{k.replace('_', '-')}={v}" for k, v in sorted(vars(args).items())
                     if k not in skip and v is not None)
    return f"# redfam {__version__} {args.verb} {args.model} {flags}"


def _model_error(path: str, exc: ModelError) -> str:
    if exc.line is not None:
        return f"{path}:{exc.line}:{exc.col}: {exc.message}"
    return f"{path}: {exc.message}"


def _load(args) -> FamilyModel:
    try:
        family = load_model(args.model)
    except OSError as exc:
        raise CliError(f"cannot read {args.model}: {exc.strerror or exc}") from None
    except ModelError as exc:
        raise CliError(_model_error(args.model, exc)) from None
    if args.reset_values:
        family = family.with_depm(reset_value_optimization(family.depm))
    return family


def _indices(family: FamilyModel, args, default: str = "all") -> list[int]:
    return ex.sample_indices(family.size, args.sample or default)


def _symbolic_model(family: FamilyModel, args) -> sy.SymbolicDtmc:
    manager = Manager(cache_size=args.cache_size, node_budget=args.node_budget)
    return sy.build_round_matrix(family, manager=manager, config_position=args.config_vars,
                                 reorder=args.reorder, compose_round=args.compose)


def _emit(args, text: str) -> None:
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _csv(rows: list[list]) -> str:
    out = io.StringIO()
    csv.writer(out, lineterminator="\n").writerows(rows)
    return out.getvalue()


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _explicit_rows(family, args, indices, prop) -> list[ex.ConfigRow]:
    rows, _ = ex.one_by_one(family, prop, jobs=args.jobs, state_budget=args.state_budget,
                            indices=indices)
    return rows


def _audit(label: str, value, bad: bool, lines: list[str]) -> int:
    """Record the cross-engine audit line; returns the exit code it implies."""
    lines.append(f"# audit {label} {value}")
    print(f"audit {label} {value}", file=sys.stderr)
    if bad:
        print(f"redfam: engines disagree ({label} {value})", file=sys.stderr)
        return EXIT_MISMATCH
    return 0


def _pfail_audit(sym, exp, lines: list[str]) -> int:
    if sym is None or exp is None:
        return 0
    worst = max((abs(s[0] - e.pfail) for s, e in zip(sym, exp) if e.pfail is not None), default=0.0)
    return _audit("max_abs_diff_pfail", repr(worst), worst > MISMATCH_TOL, lines)


# ---------------------------------------------------------------------------
# verbs


def _pfail_table(family, args, indices):
    """Per-configuration ``(pfail, phalt)`` for ``indices`` plus explicit rows."""
    sym = exp = None
    if args.engine in ("symbolic", "both"):
        dtmc = _symbolic_model(family, args)
        pf, ph = sy.pfail_and_phalt(dtmc, args.rounds, args.count_halt)
        configs = [config_at(family, i) for i in indices]
        sym = list(zip(sy.per_config(dtmc, pf, configs), sy.per_config(dtmc, ph, configs)))
    if args.engine in ("explicit", "both"):
        exp = _explicit_rows(family, args, indices, ex.PropertySpec(rounds=args.rounds,
                                                                    count_halt=args.count_halt))
    return sym, exp


def cmd_check(args) -> int:
    if args.rounds is None:
        raise CliError("check needs --rounds")
    family = _load(args)
    indices = _indices(family, args)
    sym, exp = _pfail_table(family, args, indices)
    head = ["index", "combination", "pfail", "phalt"]
    if exp is not None:
        head += ["states"] + (["build_seconds", "analysis_seconds"] if args.timings else [])
    rows = [head]
    for k, i in enumerate(indices):
        cfg = config_at(family, i)
        if sym is not None:
            pf, ph = sym[k]
        else:
            pf, ph = exp[k].pfail, exp[k].phalt
        row = [i, cfg.abbrev, _fmt(pf), _fmt(ph)]
        if exp is not None:
            row.append(_fmt(exp[k].states))
            if args.timings:
                row += [f"{exp[k].build_seconds:.6f}", f"{exp[k].analysis_seconds:.6f}"]
        rows.append(row)
    lines = [_header(args)]
    code = _pfail_audit(sym, exp, lines)
    _emit(args, lines[0] + "\n" + _csv(rows) + "".join(l + "\n" for l in lines[1:]))
    return code or _budget_code(exp)


def _budget_code(exp) -> int:
    if exp and any(r.error for r in exp):
        n = sum(1 for r in exp if r.error)
        print(f"redfam: state budget exhausted for {n} configuration(s)", file=sys.stderr)
        return EXIT_BUDGET
    return 0


def cmd_quantile(args) -> int:
    if args.theta is None:
        raise CliError("quantile needs --theta")
    family = _load(args)
    indices = _indices(family, args)
    configs = [config_at(family, i) for i in indices]
    sym = exp = None
    if args.engine in ("symbolic", "both"):
        dtmc = _symbolic_model(family, args)
        res = sy.qround(dtmc, args.theta, args.nmax, args.count_halt)
        q = sy.per_config(dtmc, res.rounds, configs)
        c = sy.per_config(dtmc, res.censored, configs)
        sym = [(int(round(a)), b > 0.5) for a, b in zip(q, c)]
    if args.engine in ("explicit", "both"):
        exp = _explicit_rows(family, args, indices, ex.PropertySpec(
            theta=args.theta, n_max=args.nmax, count_halt=args.count_halt))
    head = ["index", "combination", "qround", "censored"]
    if exp is not None:
        head += ["states"] + (["build_seconds", "analysis_seconds"] if args.timings else [])
    rows = [head]
    for k, i in enumerate(indices):
        qv, cen = sym[k] if sym is not None else (exp[k].qround, exp[k].censored)
        row = [i, configs[k].abbrev, _fmt(qv), _fmt(bool(cen)) if qv is not None else ""]
        if exp is not None:
            row.append(_fmt(exp[k].states))
            if args.timings:
                row += [f"{exp[k].build_seconds:.6f}", f"{exp[k].analysis_seconds:.6f}"]
        rows.append(row)
    lines = [_header(args)]
    code = 0
    if sym is not None and exp is not None:
        mism = sum(1 for s, e in zip(sym, exp)
                   if e.qround is not None and (s[0] != e.qround or s[1] != e.censored))
        code = _audit("qround_mismatches", mism, mism > 0, lines)
    _emit(args, lines[0] + "\n" + _csv(rows) + "".join(l + "\n" for l in lines[1:]))
    return code or _budget_code(exp)


def cmd_pareto(args) -> int:
    if args.rounds is None:
        raise CliError("pareto needs --rounds")
    if not args.cost:
        raise CliError("pareto needs --cost")
    family = _load(args)
    try:
        cost = load_cost(args.cost, family)
    except OSError as exc:
        raise CliError(f"cannot read {args.cost}: {exc.strerror or exc}") from None
    except CostError as exc:
        raise CliError(f"{args.cost}: {exc}") from None
    indices = _indices(family, args)
    sym, exp = _pfail_table(family, args, indices)
    lines = [_header(args)]
    code = _pfail_audit(sym, exp, lines)
    probs = [s[0] for s in sym] if sym is not None else [e.pfail for e in exp]
    keep = [(i, p) for i, p in zip(indices, probs) if p is not None]
    points = make_points([config_at(family, i) for i, _ in keep], [p for _, p in keep], cost)
    front = pareto_front(points)
    _emit(args, lines[0] + "\n" + format_points(front) + "".join(l + "\n" for l in lines[1:]))
    scatter = args.scatter
    if scatter is None and args.out:
        out = Path(args.out)
        scatter = str(out.with_name(out.stem + "_scatter" + (out.suffix or ".csv")))
    if scatter:
        Path(scatter).write_text(lines[0] + "\n" + format_points(points))
    return code or _budget_code(exp)


def cmd_stats(args) -> int:
    family = _load(args)
    n = 2 if args.rounds is None else args.rounds
    out = [f"model: {args.model}", f"family_size: {family.size}",
           f"annotated_blocks: {len(family.annotations)}"]
    t0 = time.perf_counter()
    dtmc = _symbolic_model(family, args)
    t1 = time.perf_counter()
    pf = sy.pfail(dtmc, n, args.count_halt)
    t2 = time.perf_counter()
    enc = dtmc.encoding
    out += [
        f"state_bits: {len(enc.state_bits)}",
        f"config_bits: {len(enc.config_vars)}",
        f"symbolic_round_composed: {dtmc.composed}",
        f"symbolic_nodes: {dtmc.nodes()}",
        f"symbolic_peak_live_nodes: {dtmc.manager.peak_nodes}",
        f"symbolic_result_nodes: {pf.node_count()}",
        f"all_in_one_build_seconds: {t1 - t0:.3f}",
        f"all_in_one_pfail_seconds: {t2 - t1:.3f}",
        f"all_in_one_seconds: {t2 - t0:.3f}",
    ]
    for k, pre, post in dtmc.reorder_trace:
        out.append(f"reorder_after_{k}_blocks: {pre} -> {post}")
    indices = _indices(family, args, default="1%@1")
    if indices:
        rows = _explicit_rows(family, args, indices, ex.PropertySpec(rounds=n, count_halt=args.count_halt))
        secs = [r.seconds for r in rows]
        states = [r.states for r in rows if r.states is not None]
        mean = statistics.fmean(secs)
        extrap = mean * family.size
        out += [
            f"one_by_one_sampled: {len(rows)}",
            f"one_by_one_censored: {sum(1 for r in rows if r.error)}",
            f"one_by_one_mean_seconds: {mean:.6f}",
            f"one_by_one_stdev_seconds: {statistics.stdev(secs) if len(secs) > 1 else 0.0:.6f}",
            f"explicit_states_mean: {statistics.fmean(states) if states else 0.0:.1f}",
            f"explicit_states_max: {max(states, default=0)}",
            f"one_by_one_extrapolated_seconds: {extrap:.3f}",
            f"speedup: {extrap / (t2 - t0):.2f}",
        ]
    _emit(args, "\n".join(out) + "\n")
    return 0


def cmd_validate(args) -> int:
    try:
        family = load_model(args.model, check=False)
    except OSError as exc:
        raise CliError(f"cannot read {args.model}: {exc.strerror or exc}") from None
    except ModelError as exc:
        raise CliError(_model_error(args.model, exc)) from None
    diags = validate(family)
    if args.cost and not diags:
        try:
            load_cost(args.cost, family)
        except (OSError, CostError) as exc:
            diags.append(f"{args.cost}: {exc}")
    for d in diags:
        print(f"{args.model}: {d}", file=sys.stderr)
    if diags:
        return EXIT_USAGE
    _emit(args, f"ok: {len(family.depm.data)} data, {len(family.depm.round_body)} blocks, "
                f"{family.size} configurations\n")
    return 0


VERBS = {"check": cmd_check, "quantile": cmd_quantile, "pareto": cmd_pareto,
         "stats": cmd_stats, "validate": cmd_validate}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return VERBS[args.verb](args)
    except CliError as exc:
        print(f"redfam: {exc}", file=sys.stderr)
        return exc.code
    except (NodeBudgetExceeded, ex.StateBudgetExceeded) as exc:
        print(f"redfam: {exc}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
