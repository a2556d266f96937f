"""Command-line surface: solve, exact, check, bench, gen, eval, checkmnat.

Instance files are JSON::

    {"num_items": 3,
     "agents": [
       {"weight": "3/2",
        "valuation": {"type": "additive", "values": ["4", "0", "1/2"]}},
       {"weight": 1,
        "valuation": {"type": "rado", "right_size": 2,
                      "edges": [[0, 0, "5"], [2, 1, "3"]],
                      "matroid": {"type": "uniform", "rank": 1}}}]}

Matroid documents: {"type":"free"} | {"type":"uniform","rank":r} |
{"type":"partition","blocks":[[...],...],"capacities":[...]} |
{"type":"graphic","num_vertices":k,"edges":[[u,v],...]} |
{"type":"explicit","ground_size":g,"rank_table":[...]} (bitmask-indexed).
Explicit rank tables are axiom-checked on load (ground size is bounded by
the table length anyway); the structured kinds are matroids by construction.

Standalone valuation files (for ``eval``/``checkmnat``) carry
{"num_items": m, "valuation": {...}} and additionally accept
{"type":"explicit","table":[...]} with one value per subset bitmask.

Reports, bench tables and generated instances are byte-stable: canonical
key order, rationals as reduced "p/q" strings, no wall-clock content.
Decimal numbers on input are converted through their exact base-10 value.

Exit codes: 0 success, 1 schema/usage problem, 2 infeasible instance,
3 convex phase did not converge, 4 enumeration cap exceeded, 5 check found
a mismatch.
"""

import argparse
import json
import math
import sys
from typing import Dict, List, Optional, Sequence, Tuple

from ._rat import (geometric_mean_float, is_rational, qq, qq_from_decimal_str,
                   rat_str)
from .errors import (DomainError, InfeasibleInstance, NotConverged, NswError,
                     SchemaError, TooLarge, TooManyItems)
from .matroid import (ExplicitMatroid, FreeMatroid, GraphicMatroid, Matroid,
                      PartitionMatroid, UniformMatroid, check_rank_axioms)
from .oracle import DEFAULT_CAP, approximation_report, exact_nsw, gen_instance
from .pipeline import (DEFAULT_EPSILON, DEFAULT_SLACK, Instance,
                       guaranteed_factor, solve_nsw)
from .valuation import (AdditiveValuation, ExplicitValuation, RadoValuation,
                        Valuation, check_m_natural_concave)

EXIT_OK = 0
EXIT_SCHEMA = 1
EXIT_INFEASIBLE = 2
EXIT_NOT_CONVERGED = 3
EXIT_TOO_LARGE = 4
EXIT_MISMATCH = 5

REPORT_FORMAT = "nswalloc-report-v1"
EXACT_FORMAT = "nswalloc-exact-v1"


# ---------------------------------------------------------------- loading

def _load_json(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh, parse_float=qq_from_decimal_str)


def _expect(cond: bool, where: str, msg: str) -> None:
    if not cond:
        raise SchemaError(where, msg)


def _as_dict(doc, where: str, allowed: Sequence[str], required: Sequence[str]) -> dict:
    _expect(isinstance(doc, dict), where, f"expected an object, got {type(doc).__name__}")
    for key in doc:
        _expect(key in allowed, f"{where}.{key}", "unknown field")
    for key in required:
        _expect(key in doc, where, f"missing required field {key!r}")
    return doc


def _as_int(x, where: str) -> int:
    _expect(isinstance(x, int) and not isinstance(x, bool), where,
            f"expected an integer, got {x!r}")
    return x


def _as_rational(x, where: str):
    if isinstance(x, bool):
        raise SchemaError(where, f"expected a rational, got {x!r}")
    if isinstance(x, int):
        return qq(x)
    if isinstance(x, str):
        try:
            return qq(x)
        except (ValueError, ZeroDivisionError):
            raise SchemaError(where, f"not a rational: {x!r}")
    if is_rational(x):
        return x  # already exact, courtesy of parse_float
    raise SchemaError(where, f"expected a rational, got {type(x).__name__}")


def parse_matroid(doc, right_size: int, where: str) -> Matroid:
    md = _as_dict(doc, where, allowed=("type", "rank", "blocks", "capacities",
                                       "num_vertices", "edges", "ground_size",
                                       "rank_table"), required=("type",))
    kind = md["type"]
    try:
        if kind == "free":
            _as_dict(doc, where, allowed=("type",), required=("type",))
            return FreeMatroid(right_size)
        if kind == "uniform":
            _as_dict(doc, where, allowed=("type", "rank"), required=("type", "rank"))
            return UniformMatroid(right_size, _as_int(md["rank"], f"{where}.rank"))
        if kind == "partition":
            _as_dict(doc, where, allowed=("type", "blocks", "capacities"),
                     required=("type", "blocks", "capacities"))
            blocks = md["blocks"]
            caps = md["capacities"]
            _expect(isinstance(blocks, list), f"{where}.blocks", "expected a list")
            _expect(isinstance(caps, list), f"{where}.capacities", "expected a list")
            blocks = [[_as_int(e, f"{where}.blocks[{bi}][{ei}]")
                       for ei, e in enumerate(b)] for bi, b in enumerate(blocks)]
            caps = [_as_int(c, f"{where}.capacities[{ci}]") for ci, c in enumerate(caps)]
            m = PartitionMatroid(blocks, caps)
            _expect(m.ground_size == right_size, f"{where}.blocks",
                    f"blocks cover {m.ground_size} elements, expected {right_size}")
            return m
        if kind == "graphic":
            _as_dict(doc, where, allowed=("type", "num_vertices", "edges"),
                     required=("type", "num_vertices", "edges"))
            edges = md["edges"]
            _expect(isinstance(edges, list), f"{where}.edges", "expected a list")
            parsed = []
            for ei, e in enumerate(edges):
                _expect(isinstance(e, list) and len(e) == 2, f"{where}.edges[{ei}]",
                        "expected [u, v]")
                parsed.append((_as_int(e[0], f"{where}.edges[{ei}][0]"),
                               _as_int(e[1], f"{where}.edges[{ei}][1]")))
            _expect(len(parsed) == right_size, f"{where}.edges",
                    f"{len(parsed)} edges, expected right_size={right_size}")
            return GraphicMatroid(_as_int(md["num_vertices"], f"{where}.num_vertices"),
                                  parsed)
        if kind == "explicit":
            _as_dict(doc, where, allowed=("type", "ground_size", "rank_table"),
                     required=("type", "ground_size", "rank_table"))
            g = _as_int(md["ground_size"], f"{where}.ground_size")
            _expect(g == right_size, f"{where}.ground_size",
                    f"ground_size {g} must equal right_size {right_size}")
            table = md["rank_table"]
            _expect(isinstance(table, list), f"{where}.rank_table", "expected a list")
            table = [_as_int(r, f"{where}.rank_table[{ri}]") for ri, r in enumerate(table)]
            m = ExplicitMatroid(g, table)
            _expect(check_rank_axioms(m), f"{where}.rank_table",
                    "table violates the matroid rank axioms")
            return m
    except SchemaError:
        raise
    except (ValueError, NswError) as exc:
        raise SchemaError(where, str(exc))
    raise SchemaError(f"{where}.type", f"unknown matroid type {kind!r}")


def parse_valuation(doc, num_items: int, where: str) -> Valuation:
    vd = _as_dict(doc, where, allowed=("type", "values", "right_size", "edges",
                                       "matroid", "table"), required=("type",))
    kind = vd["type"]
    try:
        if kind == "additive":
            _as_dict(doc, where, allowed=("type", "values"), required=("type", "values"))
            vals = vd["values"]
            _expect(isinstance(vals, list), f"{where}.values", "expected a list")
            _expect(len(vals) == num_items, f"{where}.values",
                    f"{len(vals)} values, expected num_items={num_items}")
            return AdditiveValuation([_as_rational(v, f"{where}.values[{vi}]")
                                      for vi, v in enumerate(vals)])
        if kind == "rado":
            _as_dict(doc, where, allowed=("type", "right_size", "edges", "matroid"),
                     required=("type", "right_size", "edges", "matroid"))
            t = _as_int(vd["right_size"], f"{where}.right_size")
            _expect(t >= 1, f"{where}.right_size", "must be >= 1")
            raw = vd["edges"]
            _expect(isinstance(raw, list), f"{where}.edges", "expected a list")
            edges = {}
            for ei, e in enumerate(raw):
                ew = f"{where}.edges[{ei}]"
                _expect(isinstance(e, list) and len(e) == 3, ew,
                        "expected [item, right_node, cost]")
                j = _as_int(e[0], f"{ew}[0]")
                k = _as_int(e[1], f"{ew}[1]")
                _expect((j, k) not in edges, ew, f"duplicate edge ({j},{k})")
                edges[(j, k)] = _as_rational(e[2], f"{ew}[2]")
            matroid = parse_matroid(vd["matroid"], t, f"{where}.matroid")
            return RadoValuation(num_items, t, edges, matroid)
        if kind == "explicit":
            _as_dict(doc, where, allowed=("type", "table"), required=("type", "table"))
            table = vd["table"]
            _expect(isinstance(table, list), f"{where}.table", "expected a list")
            _expect(len(table) == (1 << num_items), f"{where}.table",
                    f"{len(table)} entries, expected 2^num_items={1 << num_items}")
            return ExplicitValuation([_as_rational(v, f"{where}.table[{vi}]")
                                      for vi, v in enumerate(table)])
    except SchemaError:
        raise
    except (ValueError, NswError) as exc:
        raise SchemaError(where, str(exc))
    raise SchemaError(f"{where}.type", f"unknown valuation type {kind!r}")


def parse_instance(doc, where: str = "$") -> Instance:
    top = _as_dict(doc, where, allowed=("num_items", "agents"),
                   required=("num_items", "agents"))
    m = _as_int(top["num_items"], f"{where}.num_items")
    _expect(m >= 1, f"{where}.num_items", "need at least one item")
    agents = top["agents"]
    _expect(isinstance(agents, list) and agents, f"{where}.agents",
            "need a non-empty list of agents")
    weights, valuations = [], []
    for ai, ad in enumerate(agents):
        aw = f"{where}.agents[{ai}]"
        ad = _as_dict(ad, aw, allowed=("weight", "valuation"),
                      required=("weight", "valuation"))
        w = _as_rational(ad["weight"], f"{aw}.weight")
        _expect(w > 0, f"{aw}.weight", "weights must be positive")
        weights.append(w)
        valuations.append(parse_valuation(ad["valuation"], m, f"{aw}.valuation"))
    try:
        return Instance(weights, valuations)
    except (ValueError, NswError) as exc:
        raise SchemaError(where, str(exc))


def load_instance(path: str) -> Instance:
    return parse_instance(_load_json(path), where=path)


def load_valuation(path: str, agent: int = 0) -> Valuation:
    """Accept either a standalone valuation file or an instance file plus
    an agent index."""
    doc = _load_json(path)
    _expect(isinstance(doc, dict), path, "expected an object")
    if "agents" in doc:
        inst = parse_instance(doc, where=path)
        _expect(0 <= agent < inst.n, f"{path} --agent",
                f"agent {agent} out of range (instance has {inst.n})")
        return inst.valuations[agent]
    top = _as_dict(doc, path, allowed=("num_items", "valuation"),
                   required=("num_items", "valuation"))
    m = _as_int(top["num_items"], f"{path}.num_items")
    _expect(m >= 1, f"{path}.num_items", "need at least one item")
    return parse_valuation(top["valuation"], m, f"{path}.valuation")


# ---------------------------------------------------------------- writing

def matroid_doc(m: Matroid) -> dict:
    if isinstance(m, FreeMatroid):
        return {"type": "free"}
    if isinstance(m, UniformMatroid):
        return {"type": "uniform", "rank": m.uniform_rank}
    if isinstance(m, PartitionMatroid):
        return {"type": "partition", "blocks": [list(b) for b in m.blocks],
                "capacities": list(m.capacities)}
    if isinstance(m, GraphicMatroid):
        return {"type": "graphic", "num_vertices": m.num_vertices,
                "edges": [list(e) for e in m.edges]}
    g = m.ground_size
    return {"type": "explicit", "ground_size": g,
            "rank_table": [m.rank_mask(s) for s in range(1 << g)]}


def valuation_doc(v: Valuation) -> dict:
    if isinstance(v, AdditiveValuation):
        return {"type": "additive", "values": [rat_str(x) for x in v.values]}
    if isinstance(v, RadoValuation):
        return {"type": "rado", "right_size": v.right_size,
                "edges": [[j, k, rat_str(c)] for (j, k), c in sorted(v.edges.items())],
                "matroid": matroid_doc(v.matroid)}
    if isinstance(v, ExplicitValuation):
        return {"type": "explicit", "table": [rat_str(x) for x in v.table]}
    raise TypeError(f"cannot serialize valuation {type(v).__name__}")


def instance_doc(inst: Instance) -> dict:
    return {"num_items": inst.m,
            "agents": [{"weight": rat_str(w), "valuation": valuation_doc(v)}
                       for w, v in zip(inst.weights, inst.valuations)]}


def _jsonable(x):
    if is_rational(x):
        return rat_str(x)
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, frozenset):
        return sorted(x)
    return x


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def report_doc(report, epsilon: float, slack: float,
               trace: Optional[list] = None) -> dict:
    allocation = {str(j): i for i, bundle in enumerate(report.bundles)
                  for j in bundle}
    doc = {
        "format": REPORT_FORMAT,
        "allocation": allocation,
        "nsw": {"decimal": repr(report.nsw),
                "values": [rat_str(v) for v in report.values],
                "exponents": list(report.exponents)},
        "factor": report.factor,
        "factor_with_tolerance": report.factor_with_tolerance,
        "kind": report.kind,
        "guarantee": report.guarantee,
        "symmetric": report.symmetric,
        "gamma": report.gamma,
        "phases": [[name, val] for name, val in report.phases],
        "stats": _jsonable(report.stats),
        "converged": report.converged,
        "config": {"epsilon": epsilon, "slack": slack},
    }
    if trace is not None:
        doc["trace"] = _jsonable(trace)
    return doc


# ---------------------------------------------------------------- commands

def cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    trace: Optional[list] = [] if args.trace else None
    code = EXIT_OK
    try:
        report = solve_nsw(inst, epsilon=args.epsilon, slack=args.slack,
                           trace=trace)
    except NotConverged as exc:
        if exc.best is None:
            raise
        report = exc.best
        print(f"warning: {exc}; reporting the best iterate", file=sys.stderr)
        code = EXIT_NOT_CONVERGED
    _emit(canonical_json(report_doc(report, args.epsilon, args.slack, trace)),
          args.out)
    return code


def cmd_exact(args) -> int:
    inst = load_instance(args.instance)
    result = exact_nsw(inst, cap=args.cap)
    doc = {"format": EXACT_FORMAT,
           "allocation": {str(j): i for j, i in enumerate(result.assignment)},
           "nsw": {"decimal": repr(result.opt),
                   "values": [rat_str(v) for v in result.values],
                   "exponents": list(result.exponents)},
           "leaves": result.leaves,
           "search_space": result.search_space}
    _emit(canonical_json(doc), args.out)
    return EXIT_OK


def _check_report(inst: Instance, doc, where: str) -> List[str]:
    """Re-derive every checkable field; return human-readable mismatches."""
    diffs: List[str] = []
    if not isinstance(doc, dict):
        return [f"{where}: report must be an object"]

    def need(key):
        if key not in doc:
            diffs.append(f"missing field {key!r}")
            return None
        return doc[key]

    if doc.get("format") not in (REPORT_FORMAT, EXACT_FORMAT):
        diffs.append(f"unrecognized format tag {doc.get('format')!r}")
    allocation = need("allocation")
    nsw = need("nsw")
    if diffs:
        return diffs

    bundles: List[List[int]] = [[] for _ in range(inst.n)]
    seen = set()
    for jk, i in sorted(allocation.items(), key=lambda kv: int(kv[0])):
        j = int(jk)
        if not (0 <= j < inst.m):
            diffs.append(f"allocation: item {j} out of range")
            continue
        if not (isinstance(i, int) and 0 <= i < inst.n):
            diffs.append(f"allocation: item {j} assigned to invalid agent {i!r}")
            continue
        if j in seen:
            diffs.append(f"allocation: item {j} assigned twice")
            continue
        seen.add(j)
        bundles[i].append(j)
    if diffs:
        return diffs

    values = [inst.valuations[i].eval_discrete(bundles[i]) for i in range(inst.n)]
    stored_vals = nsw.get("values")
    stored_exps = nsw.get("exponents")
    if stored_exps != list(inst.exponents):
        diffs.append(f"exponents: stored {stored_exps}, instance says {list(inst.exponents)}")
    if (not isinstance(stored_vals, list)) or len(stored_vals) != inst.n:
        diffs.append(f"nsw.values: expected {inst.n} entries")
    else:
        for i, (have, want) in enumerate(zip(stored_vals, values)):
            try:
                have_q = qq(have)
            except (ValueError, TypeError, ZeroDivisionError):
                diffs.append(f"nsw.values[{i}]: unparseable {have!r}")
                continue
            if have_q != want:
                diffs.append(f"nsw.values[{i}]: stored {have}, recomputed {rat_str(want)}")
    recomputed = geometric_mean_float(zip(values, inst.exponents),
                                      sum(inst.exponents))
    stored_decimal = nsw.get("decimal")
    if stored_decimal != repr(recomputed):
        diffs.append(f"nsw.decimal: stored {stored_decimal!r}, recomputed {repr(recomputed)!r}")

    if doc.get("format") == EXACT_FORMAT:
        return diffs  # exact reports carry no factor claim

    want_factor = guaranteed_factor(inst.guarantee_kind(), inst.gamma, inst.n)
    if doc.get("factor") != want_factor:
        diffs.append(f"factor: stored {doc.get('factor')!r}, recomputed {want_factor!r}")
    stats = doc.get("stats") or {}
    config = doc.get("config") or {}
    eps = float(config.get("epsilon", DEFAULT_EPSILON))
    slk = float(config.get("slack", DEFAULT_SLACK))
    if stats.get("route") == "forest" or stats.get("agents_in_relaxation") == 0:
        want_tol = want_factor
    else:
        want_tol = want_factor * math.exp(eps) / (1.0 - slk)
    if doc.get("factor_with_tolerance") != want_tol:
        diffs.append(f"factor_with_tolerance: stored {doc.get('factor_with_tolerance')!r}, "
                     f"recomputed {want_tol!r}")
    if doc.get("kind") != inst.kind:
        diffs.append(f"kind: stored {doc.get('kind')!r}, instance says {inst.kind!r}")
    if doc.get("guarantee") != inst.guarantee_kind():
        diffs.append(f"guarantee: stored {doc.get('guarantee')!r}, "
                     f"instance says {inst.guarantee_kind()!r}")
    if doc.get("symmetric") != inst.symmetric:
        diffs.append(f"symmetric: stored {doc.get('symmetric')!r}, "
                     f"instance says {inst.symmetric!r}")
    if doc.get("gamma") != float(inst.gamma):
        diffs.append(f"gamma: stored {doc.get('gamma')!r}, instance says {float(inst.gamma)!r}")
    return diffs


def cmd_check(args) -> int:
    inst = load_instance(args.instance)
    with open(args.report, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    diffs = _check_report(inst, doc, args.report)
    if diffs:
        for d in diffs:
            print(f"mismatch: {d}", file=sys.stderr)
        return EXIT_MISMATCH
    print("check: ok")
    return EXIT_OK


_BENCH_COLUMNS = ["trial", "seed", "kind", "n", "m", "gamma", "status",
                  "opt", "alg", "ratio", "factor", "passed", "route",
                  "r_sparse", "r_round", "r_final"]


def _bench_row(trial: int, seed: int, args) -> Dict[str, object]:
    inst = gen_instance(seed, args.n, args.m, args.kind,
                        symmetric=args.symmetric)
    row: Dict[str, object] = {
        "trial": trial, "seed": seed, "kind": args.kind,
        "n": args.n, "m": args.m, "gamma": float(inst.gamma),
    }
    status = "ok"
    report = None
    try:
        report = solve_nsw(inst)
    except InfeasibleInstance:
        status = "infeasible"
    except NotConverged as exc:
        status = "notconverged"
        report = exc.best
    row["status"] = status
    if report is None:
        oracle = exact_nsw(inst, cap=args.cap)
        row.update(opt=oracle.opt, alg="", ratio="", factor="",
                   passed=oracle.is_zero, route="", r_sparse="",
                   r_round="", r_final="")
        return row
    cert = approximation_report(inst, report, cap=args.cap)
    phases = dict(report.phases)
    def _ratio(a, b):
        return (phases[a] / phases[b]) if phases.get(b) else ""
    row.update(opt=cert["opt"], alg=cert["alg"], ratio=cert["ratio"],
               factor=report.factor_with_tolerance, passed=cert["passed"],
               route=report.stats.get("route", ""),
               r_sparse=_ratio("sparse", "relaxation"),
               r_round=_ratio("rounded", "sparse"),
               r_final=_ratio("final", "rounded"))
    return row


def cmd_bench(args) -> int:
    rows = [_bench_row(t, args.seed * 10_000 + t, args)
            for t in range(args.trials)]
    solved = [r for r in rows if r["status"] in ("ok", "notconverged")]
    summary: Optional[Dict[str, object]] = None
    if rows:
        summary = {c: "" for c in _BENCH_COLUMNS}
        summary.update(trial="summary", kind=args.kind, n=args.n, m=args.m,
                       status=f"{len(solved)}/{len(rows)} solved",
                       ratio=max((r["ratio"] for r in solved), default=""),
                       factor=min((r["factor"] for r in solved), default=""),
                       passed=all(r["passed"] for r in rows))

    if args.format == "json":
        payload = {"columns": _BENCH_COLUMNS, "rows": rows}
        if summary is not None:
            payload["summary"] = summary
        text = canonical_json(payload)
    else:
        import csv
        import io as _io
        buf = _io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=_BENCH_COLUMNS,
                                lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow(r)
        if summary is not None:
            writer.writerow(summary)
        text = buf.getvalue()
    _emit(text, args.out)

    if summary is not None:
        verdict = "OK" if summary["passed"] else "FAIL"
        print(f"bench: {summary['status']}, max ratio {summary['ratio']} "
              f"vs factor {summary['factor']}: {verdict}", file=sys.stderr)
    if args.plot:
        _render_plot(rows, args.plot)
    return EXIT_OK


def _render_plot(rows: List[dict], path: str) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    pts = [(r["trial"], r["ratio"], r["factor"]) for r in rows
           if isinstance(r["ratio"], float)]
    fig, ax = plt.subplots(figsize=(7, 4))
    if pts:
        xs, ratios, factors = zip(*pts)
        ax.scatter(xs, ratios, s=18, label="OPT/ALG")
        ax.axhline(min(factors), linestyle="--", color="tab:red",
                   label="guaranteed factor")
        ax.set_yscale("log")
    ax.set_xlabel("trial")
    ax.set_ylabel("ratio")
    ax.set_title("optimum over allocation, per trial")
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_gen(args) -> int:
    inst = gen_instance(args.seed, args.n, args.m, args.kind,
                        weight_range=(args.weight_lo, args.weight_hi),
                        symmetric=args.symmetric)
    _emit(canonical_json(instance_doc(inst)), args.out)
    return EXIT_OK


def _parse_index_list(text: str, m: int, flag: str) -> List[int]:
    if text.strip() == "":
        return []
    items = []
    for part in text.split(","):
        try:
            j = int(part)
        except ValueError:
            raise SchemaError(flag, f"not an item index: {part!r}")
        _expect(0 <= j < m, flag, f"item {j} out of range [0,{m})")
        items.append(j)
    return items


def cmd_eval(args) -> int:
    v = load_valuation(args.path, agent=args.agent)
    if (args.items is None) == (args.x is None):
        raise SchemaError("eval", "need exactly one of --items or --x")
    if args.items is not None:
        subset = _parse_index_list(args.items, v.num_items, "--items")
        print(rat_str(v.eval_discrete(subset)))
        return EXIT_OK
    parts = args.x.split(",")
    _expect(len(parts) == v.num_items, "--x",
            f"{len(parts)} coordinates, expected {v.num_items}")
    x = [_as_rational(p.strip(), f"--x[{pi}]") for pi, p in enumerate(parts)]
    print(rat_str(v.eval_extension(x).value))
    return EXIT_OK


def cmd_checkmnat(args) -> int:
    v = load_valuation(args.path, agent=args.agent)
    witness = check_m_natural_concave(v)
    if witness is None:
        print("pass: valuation is M-natural concave")
        return EXIT_OK
    xset, yset, x = witness
    print(f"fail: exchange violated at X={sorted(xset)}, Y={sorted(yset)}, "
          f"x={x}", file=sys.stderr)
    return EXIT_MISMATCH


# ---------------------------------------------------------------- plumbing

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="nswalloc",
        description="Approximate and exact Nash-social-welfare allocation.")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="run the approximation pipeline")
    sp.add_argument("instance")
    sp.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    sp.add_argument("--slack", type=float, default=DEFAULT_SLACK)
    sp.add_argument("--trace", action="store_true",
                    help="embed per-phase trace events in the report")
    sp.add_argument("--out", help="write the report here instead of stdout")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("exact", help="brute-force the true optimum")
    sp.add_argument("instance")
    sp.add_argument("--cap", type=int, default=DEFAULT_CAP,
                    help="refuse when n^m exceeds this")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_exact)

    sp = sub.add_parser("check", help="re-verify a report against its instance")
    sp.add_argument("instance")
    sp.add_argument("report")
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("bench", help="solve random instances and certify each")
    sp.add_argument("--kind", choices=("additive", "rado"), default="additive")
    sp.add_argument("--trials", type=int, default=20)
    sp.add_argument("--n", type=int, default=3)
    sp.add_argument("--m", type=int, default=6)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--symmetric", action="store_true",
                    help="equal weights (tighter symmetric guarantee)")
    sp.add_argument("--cap", type=int, default=DEFAULT_CAP)
    sp.add_argument("--format", choices=("csv", "json"), default="csv")
    sp.add_argument("--out")
    sp.add_argument("--plot", help="also render a PNG of ratios to this path")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("gen", help="emit a deterministic random instance")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--m", type=int, required=True)
    sp.add_argument("--kind", choices=("additive", "rado"), default="additive")
    sp.add_argument("--weight-lo", type=int, default=1)
    sp.add_argument("--weight-hi", type=int, default=3)
    sp.add_argument("--symmetric", action="store_true")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("eval", help="evaluate one valuation")
    sp.add_argument("path", help="instance or standalone valuation file")
    sp.add_argument("--agent", type=int, default=0)
    sp.add_argument("--items", help="comma-separated item indices (discrete)")
    sp.add_argument("--x", help="comma-separated rationals in [0,1] (extension)")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("checkmnat", help="exhaustive M-natural concavity check")
    sp.add_argument("path", help="instance or standalone valuation file")
    sp.add_argument("--agent", type=int, default=0)
    sp.set_defaults(func=cmd_checkmnat)

    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except json.JSONDecodeError as exc:
        print(f"malformed JSON: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except DomainError as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except InfeasibleInstance as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NotConverged as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (TooLarge, TooManyItems) as exc:
        print(f"too large: {exc}", file=sys.stderr)
        return EXIT_TOO_LARGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
