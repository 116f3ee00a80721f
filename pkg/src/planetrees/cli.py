"""Command-line front end: enumerate, verify, sample and stats.

Every output starts with a config echo line from which the run can be
replayed, followed by a versioned schema line.  CSV output uses ``#``
comment lines for both; JSON output is one JSON object per line (config
first, then one object per row).

Exit codes: 0 success, 1 failed check or exhausted budget, 2 usage or
configuration error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from collections import Counter
from fractions import Fraction

from .diameter_sampler import (
    edge_uniformity_check,
    marginal_plane_law_check,
    pair_law_check,
    sample_diameter_batch,
)
from .gw_sampler import (
    BudgetExceeded,
    RngStream,
    chi_square_gof,
    exact_conditional_law,
    sample_gw,
    sample_height_eq_batch,
    sample_height_geq,
)
from .limits import convergence_report, split_counts
from .offspring import OffspringDistribution, OffspringError, nu_ge2_prob, parse_mu_spec, require_valid
from .ordered_tree import (
    contour,
    enumerate_ordered_trees_upto,
    nu,
    parse_tree,
    tree_from_contour,
)
from .plane_tree import (
    MAX_ENUMERATION,
    PlaneGraph,
    canonicalize,
    compose,
    decompose,
    diameter,
    marked_edge_index,
    partition_function,
    plane_tree_codes,
    rotation_codes,
    sym,
    sym_from_pair,
    walkup_count,
)

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2

COLUMNS = {
    "enumerate": ["n_vertices", "enumerated", "walkup", "match", "n_symmetric", "max_central",
                  "symmetry_hist"],
    "verify": ["suite", "check", "passed", "value"],
    "sample-tree": ["index", "stream", "size", "height", "nu", "code"],
    "sample-diameter": ["index", "stream", "size", "n_central", "sym", "attempts", "code",
                        "marked_edge"],
    "stats": ["p", "k", "n", "b_p", "mean_lifetime", "ks_vs_prev_p", "ks_threshold",
              "half_height_ok", "max_ok", "frac_symmetric"],
    "stats-dump": ["p", "index", "lifetime"],
}


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------- output

class Emitter:
    """Writes config echo, schema line and rows as csv, json lines or plain lines."""

    def __init__(self, fmt: str, config: dict, schema: str, out, note: str = None):
        self.fmt = fmt
        self.out = out
        self.columns = COLUMNS[schema]
        echo = json.dumps(config, sort_keys=True)
        tag = f"planetrees-{schema}-v{SCHEMA_VERSION}"
        if fmt == "json":
            header = {"config": config, "schema": tag, "columns": self.columns}
            if note:
                header["note"] = note
            out.write(json.dumps(header, sort_keys=True) + "\n")
        else:
            out.write(f"# config: {echo}\n")
            out.write(f"# schema: {tag}\n")
            if note:
                out.write(f"# note: {note}\n")
            if fmt == "csv":
                self.writer = csv.writer(out, lineterminator="\n")
                self.writer.writerow(self.columns)

    def row(self, values: dict, line: str = None):
        if self.fmt == "json":
            self.out.write(json.dumps({c: values[c] for c in self.columns}) + "\n")
        elif self.fmt == "csv":
            self.writer.writerow([_cell(values[c]) for c in self.columns])
        else:
            self.out.write((line if line is not None else " ".join(
                _cell(values[c]) for c in self.columns)) + "\n")


def _cell(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


# ---------------------------------------------------------------- enumerate

def cmd_enumerate(args, emit_factory) -> int:
    if args.n > MAX_ENUMERATION:
        raise BudgetExceeded(f"n = {args.n} above the enumeration budget {MAX_ENUMERATION}")
    if args.n < 2:
        raise UsageError("--n must be at least 2")
    em = emit_factory("enumerate")
    status = EXIT_OK
    for n in range(2, args.n + 1):
        codes = plane_tree_codes(n)
        expected = walkup_count(n - 1)
        hist: Counter = Counter()
        max_central = 0
        for code in codes:
            t = parse_tree(code)
            # order of the rotation group: contour shifts fixing the code
            rots = rotation_codes(t)
            hist[len(rots) // len(set(rots))] += 1
            max_central = max(max_central, len(PlaneGraph(t).central_edges()))
        symmetric = sum(c for order, c in hist.items() if order > 1)
        ok = len(codes) == expected
        if not ok:
            status = EXIT_CHECK
        em.row({"n_vertices": n, "enumerated": len(codes), "walkup": expected, "match": ok,
                "n_symmetric": symmetric, "max_central": max_central,
                "symmetry_hist": ";".join(f"{o}:{c}" for o, c in sorted(hist.items()))})
    return status


# ---------------------------------------------------------------- verify suites

def suite_core(max_vertices: int = 8) -> list:
    """Round trips and center structure, exhaustively over small trees."""
    results = []
    bad_roundtrip = 0
    for t in enumerate_ordered_trees_upto(max_vertices):
        if parse_tree(t.code) != t or tree_from_contour(contour(t)) != t:
            bad_roundtrip += 1
    results.append(("ordered_roundtrip", bad_roundtrip == 0, bad_roundtrip))
    counts = Counter()
    for n in range(2, max_vertices + 1):
        for code in plane_tree_codes(n):
            t = parse_tree(code)
            g = PlaneGraph(t)
            d, centers = g.diameter_and_centers()
            if len(centers) != (1 if d % 2 == 0 else 2):
                counts["center_parity"] += 1
            central = g.central_edges()
            for a, b in central:
                rooted = g.root_at(a, b)
                t_minus, t_plus = decompose(rooted)
                if compose(t_minus, t_plus).code != rooted:
                    counts["roundtrip"] += 1
                k_size = 2 if d % 2 else 1 + nu(t_plus)
                if len(central) != k_size:
                    counts["central_count"] += 1
                if sym(rooted) != sym_from_pair(t_minus, t_plus):
                    counts["sym_formula"] += 1
            if canonicalize(t).canonical != t:
                counts["canonical_fixed_point"] += 1
    for name in ("center_parity", "central_count", "roundtrip", "sym_formula",
                 "canonical_fixed_point"):
        results.append((name, counts[name] == 0, counts[name]))
    return results


LEMMA_LAWS = (
    '{"kind": "geometric"}',
    '{"0": "1/2", "2": "1/2"}',
    '{"0": "2/3", "3": "1/3"}',
)


def suite_lemmas(n_draws: int, seed: int) -> list:
    results = []
    for i, spec in enumerate(LEMMA_LAWS):
        mu = parse_mu_spec(spec)
        cap = None if mu.max_offspring is not None else 9
        for p in (1, 2, 3):
            law = exact_conditional_law(mu, p, "eq", size_cap=cap)
            trees = sample_height_eq_batch(mu, p, n_draws, RngStream(seed, 10 * i + p))
            res = chi_square_gof(Counter(trees), law.probs)
            results.append((f"height_eq_law[{spec},p={p}]", res.passed(), res.pvalue))
    geo = OffspringDistribution.geometric()
    worst = max(abs(float(nu_ge2_prob(geo, n).value) - 1 / (n + 1) ** 2) for n in range(1, 50))
    results.append(("nu_tail_geometric", worst <= 1e-12, worst))
    for spec in LEMMA_LAWS[1:]:
        mu = parse_mu_spec(spec)
        for k in range(1, 6):
            direct = partition_function(k, mu, "direct")
            paired = partition_function(k, mu, "pair")
            results.append((f"partition[{spec},k={k}]", direct == paired, str(direct)))
    return results


SAMPLING_LAW = '{"0": "1/4", "1": "1/2", "2": "1/4"}'


def suite_sampling(n_draws: int, seed: int) -> list:
    results = []
    # a law with unary vertices: under {0, 2} the k = 3 tree is unique
    mu = parse_mu_spec(SAMPLING_LAW)
    for k in (3, 4):
        samples = sample_diameter_batch(mu, k, n_draws, RngStream(seed, k))
        res = pair_law_check(samples, mu, k)
        results.append((f"pair_law[k={k}]", res.passed(), res.pvalue))
        res = marginal_plane_law_check(samples, mu, k)
        results.append((f"plane_law[k={k}]", res.passed(), res.pvalue))
        uni = edge_uniformity_check(samples)
        results.append((f"edge_uniform[k={k}]", uni.passed(), uni.pvalue))
        wrong = sum(1 for s in samples if diameter(s.rooted) != k)
        results.append((f"diameter[k={k}]", wrong == 0, wrong))
    return results


def cmd_verify(args, emit_factory) -> int:
    if args.suite == "core":
        results = suite_core()
    elif args.suite == "lemmas":
        results = suite_lemmas(args.n, args.seed)
    else:
        results = suite_sampling(args.n, args.seed)
    em = emit_factory("verify")
    for name, passed, value in results:
        em.row({"suite": args.suite, "check": name, "passed": bool(passed),
                "value": float(value) if isinstance(value, (float, Fraction)) else value})
    return EXIT_OK if all(p for _, p, _ in results) else EXIT_CHECK


# ---------------------------------------------------------------- sample

def cmd_sample(args, emit_factory) -> int:
    mu = parse_mu_spec(args.mu)
    require_valid(mu)
    counts = split_counts(args.n, args.streams)
    if args.kind == "diameter":
        if args.k is None:
            raise UsageError("sample diameter needs --k")
        em = emit_factory("sample-diameter")
        index = 0
        for s, count in enumerate(counts):
            if not count:
                continue
            for ds in sample_diameter_batch(mu, args.k, count, RngStream(args.seed, s)):
                pc = ds.plane
                code = pc.canonical.code
                edge = marked_edge_index(pc, ds.rooted.code)
                em.row({"index": index, "stream": s, "size": ds.size, "n_central": ds.n_central,
                        "sym": ds.sym, "attempts": ds.accepted_after, "code": code,
                        "marked_edge": edge}, line=f"{code} {edge}")
                index += 1
        return EXIT_OK
    if args.kind in ("height-eq", "height-geq") and args.p is None:
        raise UsageError(f"sample {args.kind} needs --p")
    em = emit_factory("sample-tree")
    index = 0
    for s, count in enumerate(counts):
        if not count:
            continue
        rng = RngStream(args.seed, s)
        if args.kind == "height-eq":
            trees = sample_height_eq_batch(mu, args.p, count, rng)
        elif args.kind == "height-geq":
            trees = [sample_height_geq(mu, args.p, rng) for _ in range(count)]
        else:
            trees = [sample_gw(mu, rng) for _ in range(count)]
        for t in trees:
            em.row({"index": index, "stream": s, "size": t.size, "height": t.height,
                    "nu": nu(t), "code": t.code}, line=t.code)
            index += 1
    return EXIT_OK


# ---------------------------------------------------------------- stats

def _int_list(text: str) -> list:
    try:
        values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError("values must be positive")
    return values


KS_NOTE = ("ks_threshold is a calibration choice (asymptotic 1% two-sample critical value), "
           "not an exact finite-p law")


def cmd_stats(args, emit_factory) -> int:
    mu = parse_mu_spec(args.mu)
    require_valid(mu)
    r = Fraction(args.r)
    rows = convergence_report(mu, r, args.p, args.n, seed=args.seed, streams=args.streams,
                              keep_samples=args.dump is not None)
    em = emit_factory("stats", note=KS_NOTE)
    ok = True
    for row in rows:
        em.row({c: getattr(row, c) for c in COLUMNS["stats"]})
        ok = ok and row.half_height_ok and row.max_ok
    if args.dump is not None:
        with open(args.dump, "w") as fh:
            dump = Emitter(args.format if args.format != "lines" else "csv",
                           _config(args), "stats-dump", fh)
            for row in rows:
                for i, x in enumerate(row.lifetimes):
                    dump.row({"p": row.p, "index": i, "lifetime": x})
    return EXIT_OK if ok else EXIT_CHECK


# ---------------------------------------------------------------- wiring

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="planetrees",
                                     description="Plane trees with a prescribed diameter.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--format", choices=("csv", "json", "lines"), default="csv")
    common.add_argument("--out", default=None, help="output file (default: stdout)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_enum = sub.add_parser("enumerate", parents=[common],
                            help="count plane trees and compare with the closed formula")
    p_enum.add_argument("--n", type=int, default=MAX_ENUMERATION, help="largest vertex count")

    p_ver = sub.add_parser("verify", parents=[common], help="run a check suite")
    p_ver.add_argument("--suite", choices=("core", "lemmas", "sampling"), required=True)
    p_ver.add_argument("--n", type=int, default=20000, help="draws per statistical check")

    p_samp = sub.add_parser("sample", parents=[common], help="draw random trees")
    p_samp.add_argument("kind", choices=("gw", "height-eq", "height-geq", "diameter"))
    p_samp.add_argument("--mu", default="geometric", help="offspring law: JSON, name or @file")
    p_samp.add_argument("--p", type=int, default=None)
    p_samp.add_argument("--k", type=int, default=None)
    p_samp.add_argument("--n", type=int, default=1)
    p_samp.add_argument("--streams", type=int, default=1)

    p_stats = sub.add_parser("stats", parents=[common], help="scaling self-consistency report")
    p_stats.add_argument("--mu", default="geometric")
    p_stats.add_argument("--r", default="1")
    p_stats.add_argument("--p", type=_int_list, default=[10, 20, 40])
    p_stats.add_argument("--n", type=int, default=1000)
    p_stats.add_argument("--streams", type=int, default=1)
    p_stats.add_argument("--dump", default=None, help="write per-sample lifetimes here")
    return parser


def _config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("out",)}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "n", 1) is not None and args.n < 1:
        parser.error("--n must be positive")
    if getattr(args, "streams", 1) < 1:
        parser.error("--streams must be positive")
    buffer = io.StringIO()
    config = _config(args)

    def emit_factory(schema: str, note: str = None) -> Emitter:
        return Emitter(args.format, config, schema, buffer, note)

    handlers = {"enumerate": cmd_enumerate, "verify": cmd_verify,
                "sample": cmd_sample, "stats": cmd_stats}
    try:
        status = handlers[args.command](args, emit_factory)
    except (UsageError, OffspringError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_CHECK
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(buffer.getvalue())
    else:
        sys.stdout.write(buffer.getvalue())
    return status


if __name__ == "__main__":
    sys.exit(main())
