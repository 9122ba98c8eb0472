"""Command-line front end emitting deterministic CSV experiment tables.

Subcommands::

    pmplab classify  --scenario market.txt --out results/
    pmplab sweep     --scenario market.txt --objective profit --out results/
    pmplab partition --scenario market.txt --out results/
    pmplab probe     --scenario market.txt --out results/
    pmplab duopoly   --scenario duo.txt    --out results/

Every command reads one scenario file, writes one CSV named after the
command into the output directory, and prints a short summary.  All
numeric output carries 9 significant digits; rows appear in grid order
regardless of the thread count, so repeated runs are byte-identical.

Exit codes: 0 success, 2 input error, 3 computation error.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from . import congestion as cg
from . import duopoly as duop
from .duopoly import DuopolyScenario
from .equilibrium import MarketScenario, identical_price_equilibrium
from .errors import PmplabError, ScenarioError
from .monopoly import local_improvement_probe, partition_comparison, ratio_sweep
from .scenario import ScenarioFile, parse_scenario

__all__ = ["main"]

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_COMPUTE = 3


def _fmt(x) -> str:
    """Nine significant digits, decimal point guaranteed."""
    if x != x:
        return "nan"
    s = f"{float(x):.9g}"
    if s.startswith("-") and float(s) == 0.0:
        s = s[1:]
    if "." not in s and "e" not in s and "inf" not in s and "nan" not in s:
        s += ".0"
    return s


def _write_csv(path, header, rows):
    with open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if not isinstance(v, str) else v for v in row) + "\n")


def _parallel_map(fn, items, threads):
    if threads == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    workers = threads if threads > 0 else (os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _need(sf: ScenarioFile, attr, what, command):
    value = getattr(sf, attr)
    if value is None:
        raise ScenarioError(f"{command} needs {what!r} in the scenario file")
    return value


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_classify(sf: ScenarioFile, args) -> int:
    caps = sf.capacities or (0.3, 0.7)
    scaling = cg.classify_scaling(sf.model, tol=sf.tol)
    unrestricted = cg.global_monotone(sf.model, caps)
    restricted = cg.global_monotone(
        sf.model, caps,
        cg.c2_profile_filter(sf.model, caps, cg._default_profiles(sf.model, list(caps))),
    )
    # the restricted verdict only stands in for the unrestricted one when
    # usage profiles realized at identical-pricing equilibria actually
    # exhibit that slope ordering (not mere ties)
    eq_cases = set()
    split_sc = MarketScenario(sf.v, caps, sf.model, sf.dist)
    for k in range(1, 8):
        try:
            eq = identical_price_equilibrium(split_sc, sf.v * k / 8)
        except PmplabError:
            continue
        if all(q > 1e-9 for q in eq.usages):
            eq_cases.add(cg.monotone_case(sf.model, caps, eq.usages))
    strict_cases = eq_cases - {"Both"}
    restricted_case = restricted.verdict.replace("Consistent", "")
    restricted_applies = (
        restricted.verdict != "Violated" and strict_cases == {restricted_case}
    )
    if unrestricted.verdict != "Violated":
        mono_text = f"{unrestricted.verdict}"
        mono_csv = unrestricted.verdict
        witnesses = unrestricted.witnesses
    elif restricted_applies:
        mono_text = f"{restricted.verdict} (c.2-restricted sampler)"
        mono_csv = restricted.verdict + "/c2-restricted"
        witnesses = restricted.witnesses
    else:
        witnesses = unrestricted.witnesses
        wit_str = "; ".join(f"{tuple(round(q, 6) for q in prof)} -> {case}"
                            for prof, case in witnesses)
        mono_text = f"Violated (witnesses {wit_str})"
        mono_csv = "Violated"

    print(f"{sf.model.describe()}: {scaling.verdict}; monotone: {mono_text}")
    def _profile_key(prof):
        return "|".join(_fmt(q) for q in prof)

    rows = [
        ("scaling", scaling.verdict, _fmt(scaling.max_gap), _fmt(scaling.min_gap)),
        ("monotone", mono_csv,
         ";".join(f"{_profile_key(prof)}->{case}" for prof, case in witnesses),
         ""),
    ]
    path = os.path.join(args.out, "classify.csv")
    with open(path, "w", newline="\n") as fh:
        fh.write("check,verdict,detail1,detail2\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_sweep(sf: ScenarioFile, args) -> int:
    caps = _need(sf, "capacities", "capacities", "sweep")
    if len(caps) != 2:
        raise ScenarioError("sweep needs exactly two capacities")
    scenario = MarketScenario(sf.v, caps, sf.model, sf.dist)
    grid = args.grid or 512
    curve = ratio_sweep(scenario, sf.a_grid, args.objective, grid=grid)
    skipped = sum(pt.skipped for pt in curve.points)
    total = len(curve.points) * (grid + 1)
    if skipped > 0.1 * total:
        print(f"solver failures at {skipped}/{total} grid points", file=sys.stderr)
        return EXIT_COMPUTE
    rows = [
        (pt.ratio, pt.best_value, pt.argmax_p1, curve.baseline_single)
        for pt in curve.points
    ]
    path = os.path.join(args.out, "sweep.csv")
    _write_csv(path, "a,best_value,argmax_p1,baseline_single", rows)
    best = curve.best()
    print(f"{args.objective} sweep over {len(rows)} ratios: "
          f"best {best.best_value:.9g} at a={best.ratio:.9g}, "
          f"single-class baseline {curve.baseline_single:.9g}")
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_partition(sf: ScenarioFile, args) -> int:
    split = sf.split or sf.capacities
    if split is None:
        raise ScenarioError("partition needs 'split' or 'capacities'")
    total = sum(split)
    scenario = MarketScenario(sf.v, (total,), sf.model, sf.dist)
    n = args.grid or sf.p_grid
    prices = [sf.v * k / n for k in range(n + 1)]

    def work(p):
        try:
            return partition_comparison(scenario, p, split)
        except PmplabError as exc:
            return exc

    results = _parallel_map(work, prices, args.threads)
    rows, failures = [], 0
    for p, res in zip(prices, results):
        if isinstance(res, Exception):
            failures += 1
            print(f"p={p:.9g}: {res}", file=sys.stderr)
            continue
        rows.append((res.price, res.single_welfare, res.single_profit,
                     res.split_welfare, res.split_profit))
    if failures > 0.1 * len(prices):
        return EXIT_COMPUTE
    path = os.path.join(args.out, "partition.csv")
    _write_csv(path, "p,S_single,pi_single,S_split,pi_split", rows)
    print(f"partition comparison on {len(rows)} prices, split {split}")
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_probe(sf: ScenarioFile, args) -> int:
    caps = _need(sf, "capacities", "capacities", "probe")
    if len(caps) != 2:
        raise ScenarioError("probe needs exactly two capacities")
    scenario = MarketScenario(sf.v, caps, sf.model, sf.dist)
    n = args.grid or 20
    prices = [sf.v * k / n for k in range(1, n)]

    def work(p):
        try:
            return local_improvement_probe(scenario, p, sf.delta)
        except PmplabError as exc:
            return exc

    results = _parallel_map(work, prices, args.threads)
    rows, failures = [], 0
    for p, res in zip(prices, results):
        if isinstance(res, Exception):
            failures += 1
            print(f"p={p:.9g}: {res}", file=sys.stderr)
            continue
        rows.append((p, res.direction * res.delta, res.d_welfare, res.d_profit, res.case))
    if failures > 0.1 * len(prices):
        return EXIT_COMPUTE
    path = os.path.join(args.out, "probe.csv")
    _write_csv(path, "p,delta,dS,dpi,case", rows)
    improving = sum(1 for r in rows if r[2] > 0 and r[3] > 0)
    print(f"probe at {len(rows)} prices: {improving} strict improvements")
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_duopoly(sf: ScenarioFile, args) -> int:
    cap_i = _need(sf, "duopoly_cap_i", "duopoly_cap_i", "duopoly")
    cap_ii = _need(sf, "duopoly_cap_ii", "duopoly_cap_ii", "duopoly")
    duo = DuopolyScenario(sf.v, cap_i, cap_ii, sf.model, sf.dist)
    n = args.grid or sf.pi_grid
    grid = [sf.v * k / n for k in range(n + 1)]
    points = duop.duopoly_curve(duo, grid)
    failures = sum(1 for pt in points if pt.error is not None)
    for pt in points:
        if pt.error:
            print(f"pI={pt.p_i:.9g}: {pt.error}", file=sys.stderr)
    if failures > 0.1 * len(points):
        return EXIT_COMPUTE
    rows = [
        (pt.p_i, pt.pi_i, pt.pi_ii_one, pt.pi_ii_two)
        for pt in points if pt.error is None
    ]
    path = os.path.join(args.out, "duopoly.csv")
    _write_csv(path, "pI,piI,piII_1class,piII_2class", rows)
    dominated = sum(1 for r in rows if r[3] >= r[2] - 1e-9)
    print(f"duopoly curve on {len(rows)} prices: split dominates at {dominated}")
    print(f"wrote {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _build_parser():
    parser = argparse.ArgumentParser(
        prog="pmplab",
        description="Multi-class congestion pricing experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("classify", "scale-down and monotone-preference classification"),
        ("sweep", "best objective per price ratio vs the merged class"),
        ("partition", "identical-price split vs merged class over a price grid"),
        ("probe", "differentiated-pricing improvement probe over a price grid"),
        ("duopoly", "provider II best-response profit curves"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--scenario", required=True, help="scenario file path")
        p.add_argument("--out", default=".", help="output directory for CSV files")
        p.add_argument("--objective", choices=("welfare", "profit"), default="profit")
        p.add_argument("--grid", type=int, default=None, help="grid resolution override")
        p.add_argument("--tol", type=float, default=None, help="tolerance override")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for grid evaluation (0 = auto)")
    return parser


_COMMANDS = {
    "classify": _cmd_classify,
    "sweep": _cmd_sweep,
    "partition": _cmd_partition,
    "probe": _cmd_probe,
    "duopoly": _cmd_duopoly,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        sf = parse_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"cannot read scenario: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if args.tol is not None:
        if args.tol <= 0:
            print("tolerance must be positive", file=sys.stderr)
            return EXIT_INPUT
        sf.tol = args.tol
    os.makedirs(args.out, exist_ok=True)
    try:
        return _COMMANDS[args.command](sf, args)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except PmplabError as exc:
        print(f"computation error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
