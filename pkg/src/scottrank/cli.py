from typing import List, Dict, Optional, Tuple, Any, Callable
import argparse
import json
import logging
import os
import sys

from scottrank.backforth import bf_level, find_finite_base, scott_rank
from scottrank.base import FiniteStructure
from scottrank.checks import CHECKS, run_checks
from scottrank.configs import Caps, RunConfig, _load_caps
from scottrank.constants import REPORT_SCHEMA
from scottrank.cosetsystems import (
    CoherentSet,
    FinCosetSystem,
    base_system,
    limit,
    rnk_coset,
    successor,
)
from scottrank.invsystems import (
    CbarSystem,
    InvSystem,
    build_tree_system,
    materialize,
    rank_table,
    strongness,
    subtree_name,
    system_rank,
    zk_stability,
)
from scottrank.posets import (
    PosetPresentation,
    benchmark_witness,
    is_nearly_binary_crosscutting,
    validate,
)
from scottrank.products import ProductSpec, borel_verdict, construct_base, istar
from scottrank.reductions import (
    ColoredModel,
    exhaustive_pairs,
    iso_harness,
    reduce_delta,
    reduce_subposet,
)
from scottrank.utils import InvariantViolation, dump_json

log = logging.getLogger(__name__)

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT = 0, 1, 2

Outcome = Tuple[Dict[str, Any], str, int]
COMMANDS: Dict[str, Callable[[RunConfig], Outcome]] = {}


def command(name: str):
    def decorator(func):
        COMMANDS[name] = func
        return func

    return decorator


def load_json(path: str) -> Dict:
    with open(path, "r", encoding="utf-8") as fp:
        return json.load(fp)


def write_json(path: str, data: Dict):
    with open(path, "w", encoding="utf-8") as fp:
        fp.write(dump_json(data) + "\n")


def _single_input(config: RunConfig) -> str:
    if len(config.inputs) != 1:
        raise ValueError(f"{config.command} takes exactly one input file")
    return config.inputs[0]


@command("classify-product")
def classify_product(config: RunConfig) -> Outcome:
    spec = ProductSpec.from_raw(load_json(_single_input(config)))
    star = istar(spec, caps=config.caps)
    verdict = borel_verdict(spec, caps=config.caps)
    if star.tail_free:
        text = f"{verdict.value}, I_* finite ({star.prefix})"
    else:
        text = f"{verdict.value}, I_* infinite (tail non-free)"
    report = {"verdict": verdict.value, "istar": star.prefix, "tail_nonfree": star.tail_nonfree}
    return report, text, EXIT_OK


@command("classify-poset")
def classify_poset(config: RunConfig) -> Outcome:
    P = PosetPresentation.from_raw(load_json(_single_input(config)))
    errors = validate(P)
    if errors:
        raise ValueError(f"Invalid poset presentation: {errors[0]}")
    nbc = is_nearly_binary_crosscutting(P)
    if nbc:
        return {"nbc": True, "witness": nbc.witness}, f"nearly binary crosscutting; Q = {nbc.witness}", EXIT_OK
    witness = benchmark_witness(P, errors="ignore")
    report = {"nbc": False, "counter": nbc.counter, "reason": nbc.reason, "benchmark": witness.index}
    return report, f"not nearly binary crosscutting; benchmark i={witness.index}", EXIT_OK


def _load_structure(path: str) -> FiniteStructure:
    return FiniteStructure.from_raw(load_json(path))


@command("scott-rank")
def scott_rank_command(config: RunConfig) -> Outcome:
    M = _load_structure(_single_input(config))
    sr = scott_rank(M, caps=config.caps)
    return {"scott_rank": str(sr)}, f"sr = {sr}", EXIT_OK


@command("bf")
def bf_command(config: RunConfig) -> Outcome:
    if len(config.inputs) not in (1, 2):
        raise ValueError("bf takes one or two structure files")
    M = _load_structure(config.inputs[0])
    N = _load_structure(config.inputs[-1])
    left, right = config.options["left"], config.options["right"]
    level = bf_level(M, left, N, right, caps=config.caps)
    shown = "none (quantifier-free types differ)" if level is None else str(level)
    return {"left": left, "right": right, "level": None if level is None else str(level)}, f"level = {shown}", EXIT_OK


@command("base")
def base_command(config: RunConfig) -> Outcome:
    data = load_json(_single_input(config))
    if "tail" in data:
        base = construct_base(ProductSpec.from_raw(data), config.truncate, caps=config.caps)
        return {"base": list(base), "truncate": config.truncate}, f"base = {list(base)}", EXIT_OK
    M = FiniteStructure.from_raw(data)
    max_size = config.options.get("max_size") or M.universe
    base = find_finite_base(M, max_size, caps=config.caps)
    if base is None:
        return {"base": None}, f"no base of size at most {max_size}", EXIT_OK
    return {"base": list(base)}, f"base = {list(base)}", EXIT_OK


def _load_inv_system(data: Dict) -> InvSystem:
    if "components" in data:
        return CbarSystem(**data)
    return InvSystem(**data)


@command("invsys rank")
def invsys_rank(config: RunConfig) -> Outcome:
    sys_ = _load_inv_system(load_json(_single_input(config)))
    table = rank_table(sys_, caps=config.caps)
    unstable = zk_stability(sys_, caps=config.caps)
    report = {
        "ranks": {p: [[list(a), str(r)] for a, r in sorted(t.items())] for p, t in table.items()},
        "system_rank": str(system_rank(sys_, caps=config.caps)),
        "zk_unstable": unstable,
    }
    lines = [f"rnk = {report['system_rank']}"]
    lines += [f"{p}: {a} -> {r}" for p, rows in report["ranks"].items() for a, r in rows]
    if unstable:
        raise InvariantViolation(f"Ranks move when the Z stand-in doubles: {unstable[0]}")
    return report, "\n".join(lines), EXIT_OK


@command("invsys tree")
def invsys_tree(config: RunConfig) -> Outcome:
    data = load_json(_single_input(config))
    ts = build_tree_system(data["parents"], data.get("order", 2))
    sys_ = materialize(ts, caps=config.caps)
    table = rank_table(sys_, caps=config.caps)
    rows, violations = [], 0
    for u in ts.subtrees(config.caps.build):
        for f in ts.elements(u, config.caps.zk, config.caps.build):
            r, s = table[subtree_name(u)][f.vector()], strongness(ts, f)
            violations += int(not r <= s)
            rows.append({"u": list(u), "sigma": f.sigma, "rank": str(r), "strongness": str(s)})
    report = {"elements": rows, "violations": violations, "system_rank": str(system_rank(sys_, caps=config.caps))}
    text = f"{len(rows)} elements, rnk = {report['system_rank']}, rank above strongness: {violations}"
    return report, text, EXIT_VIOLATION if violations else EXIT_OK


def _load_cosets(path: str) -> FinCosetSystem:
    data = load_json(path)
    return FinCosetSystem.from_raw(data.get("system", data))


def _builder_output(config: RunConfig) -> str:
    return config.options.get("output") or "out.json"


@command("cosets build")
def cosets_build(config: RunConfig) -> Outcome:
    C = base_system(config.options["n"], config.options["m"])
    path = _builder_output(config)
    write_json(path, C.query_dict())
    return {"output": path, "n": C.n, "m": C.m}, f"wrote base system ({C.n}, {C.m}) to {path}", EXIT_OK


@command("cosets rank")
def cosets_rank(config: RunConfig) -> Outcome:
    C = _load_cosets(_single_input(config))
    A = CoherentSet.parse(C.n, C.m, config.options.get("pairs") or [])
    r = rnk_coset(C, sorted(A.pairs), caps=config.caps)
    name = "∅" if not A.pairs else "A"
    return {"rank": str(r), "pairs": len(A.pairs)}, f"rnk({name})={r}", EXIT_OK


@command("cosets successor")
def cosets_successor(config: RunConfig) -> Outcome:
    C = _load_cosets(_single_input(config))
    for _ in range(config.options.get("times", 1)):
        C = successor(C)
    path = _builder_output(config)
    write_json(path, C.query_dict())
    return {"output": path, "n": C.n, "m": C.m}, f"wrote ({C.n}, {C.m}) system to {path}", EXIT_OK


@command("cosets limit")
def cosets_limit(config: RunConfig) -> Outcome:
    if not config.inputs:
        raise ValueError("cosets limit needs at least one component file")
    L = limit([_load_cosets(path) for path in config.inputs], caps=config.caps)
    path = _builder_output(config)
    write_json(path, L.query_dict())
    return {"output": path, "n": L.system.n}, f"wrote limit system of dimension {L.system.n} to {path}", EXIT_OK


def _reduce(config: RunConfig, reduction: Callable[[ColoredModel], ColoredModel]) -> Outcome:
    if not config.inputs:
        raise ValueError("No colored models given")
    models = [ColoredModel.from_raw(load_json(path)) for path in config.inputs]
    outdir = config.options.get("output") or "."
    written = []
    for path, M in zip(config.inputs, models):
        stem = os.path.splitext(os.path.basename(path))[0]
        target = os.path.join(outdir, f"{stem}.reduced.json")
        write_json(target, reduction(M).query_dict())
        written.append(target)
    report = iso_harness(reduction, exhaustive_pairs(models), caps=config.caps)
    out = {**report.query_dict(), "outputs": written}
    text = (
        f"{report.pairs} pairs, preserved {report.preserved}, reflected {report.reflected}, "
        f"counterexamples {len(report.counterexamples)}"
    )
    return out, text, EXIT_OK if report.ok else EXIT_VIOLATION


@command("reduce subposet")
def reduce_subposet_command(config: RunConfig) -> Outcome:
    P = PosetPresentation.from_raw(load_json(config.options["poset"]))
    return _reduce(config, lambda M: reduce_subposet(M, P, caps=config.caps))


def _parse_delta(items: List[str]) -> Dict[str, int]:
    delta = {}
    for item in items:
        name, _, value = item.partition("=")
        if not value:
            raise ValueError(f"Invalid delta entry {item}; expected p=k")
        delta[name] = int(value)
    return delta


@command("reduce delta")
def reduce_delta_command(config: RunConfig) -> Outcome:
    delta = _parse_delta(config.options["delta"])
    return _reduce(config, lambda M: reduce_delta(M, delta, caps=config.caps))


@command("verify")
def verify_command(config: RunConfig) -> Outcome:
    results = run_checks(
        config.options.get("checks"), quick=config.options.get("quick", False), seed=config.seed, caps=config.caps
    )
    failed = [r for r in results if not r.ok]
    lines = [f"{'ok  ' if r.ok else 'FAIL'} {r.name} ({r.instances} instances)" for r in results]
    for r in failed:
        lines += [f"  {msg}" for msg in r.failures[:5]]
    report = {"checks": [r.query_dict() for r in results]}
    return report, "\n".join(lines), EXIT_VIOLATION if failed else EXIT_OK


def run(config: RunConfig) -> Tuple[int, Dict[str, Any], str]:
    """Run one command and return its exit status, JSON report and text.

    Input errors (unreadable or malformed files, cap breaches) give status
    2 and property violations give status 1; both are reported rather
    than raised.
    """
    report: Dict[str, Any] = {"schema": REPORT_SCHEMA, "command": config.command, "seed": config.seed}
    if config.command not in COMMANDS:
        report["error"] = f"Unknown command {config.command}"
        return EXIT_INPUT, report, report["error"]
    try:
        body, text, status = COMMANDS[config.command](config)
    except InvariantViolation as exc:
        report["error"] = str(exc)
        return EXIT_VIOLATION, report, f"invariant violation: {exc}"
    except (ValueError, TypeError, OSError, LookupError) as exc:
        report["error"] = str(exc)
        return EXIT_INPUT, report, f"error: {exc}"
    report.update(body)
    return status, report, text


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--cap-universe", type=int, dest="universe")
    common.add_argument("--cap-tuple", type=int, dest="tuple_space")
    common.add_argument("--cap-build", type=int, dest="build")
    common.add_argument("--zk", type=int)
    common.add_argument("--margin", type=int)
    common.add_argument("--truncate", type=int, default=2)
    common.add_argument("--format", choices=["text", "json"], default="text")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--output", help="output file for builders, output directory for reductions")
    common.add_argument("--verbose", "-v", action="store_true")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(prog="scottrank", description="Scott ranks and Borel complexity of finite approximations")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("classify-product", "classify-poset", "scott-rank"):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("inputs", nargs=1)

    p = sub.add_parser("bf", parents=[common])
    p.add_argument("inputs", nargs="+")
    p.add_argument("--left", type=int, nargs="*", default=[])
    p.add_argument("--right", type=int, nargs="*", default=[])

    p = sub.add_parser("base", parents=[common])
    p.add_argument("inputs", nargs=1)
    p.add_argument("--max-size", type=int, dest="max_size")

    invsys = sub.add_parser("invsys").add_subparsers(dest="action", required=True)
    for name in ("rank", "tree"):
        p = invsys.add_parser(name, parents=[common])
        p.add_argument("inputs", nargs=1)

    cosets = sub.add_parser("cosets").add_subparsers(dest="action", required=True)
    p = cosets.add_parser("build", parents=[common])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p = cosets.add_parser("rank", parents=[common])
    p.add_argument("inputs", nargs=1)
    p.add_argument("--pair", action="append", dest="pairs", help="a pair f,g of bit strings such as 01(1),1")
    p = cosets.add_parser("successor", parents=[common])
    p.add_argument("inputs", nargs=1)
    p.add_argument("--times", type=int, default=1)
    p = cosets.add_parser("limit", parents=[common])
    p.add_argument("inputs", nargs="+")

    reduce = sub.add_parser("reduce").add_subparsers(dest="action", required=True)
    p = reduce.add_parser("subposet", parents=[common])
    p.add_argument("inputs", nargs="+")
    p.add_argument("--poset", required=True)
    p = reduce.add_parser("delta", parents=[common])
    p.add_argument("inputs", nargs="+")
    p.add_argument("--delta", nargs="+", required=True, help="entries p=k")

    p = sub.add_parser("verify", parents=[common])
    p.add_argument("--quick", action="store_true")
    p.add_argument("--check", action="append", dest="checks", choices=sorted(CHECKS))
    return parser


CAP_FLAGS = ("universe", "tuple_space", "build", "zk", "margin")
GLOBAL_FLAGS = CAP_FLAGS + ("truncate", "format", "seed", "verbose", "command", "action", "inputs")


def config_from_args(args: argparse.Namespace) -> RunConfig:
    values = vars(args)
    overrides = {k: values[k] for k in CAP_FLAGS if values.get(k) is not None}
    caps = Caps(**{**_load_caps().model_dump(), **overrides})
    name = args.command if getattr(args, "action", None) is None else f"{args.command} {args.action}"
    return RunConfig(
        command=name,
        inputs=list(getattr(args, "inputs", None) or []),
        caps=caps,
        truncate=args.truncate,
        format=args.format,
        seed=args.seed,
        options={k: v for k, v in values.items() if k not in GLOBAL_FLAGS},
    )


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = config_from_args(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    status, report, text = run(config)
    if config.format == "json":
        print(dump_json(report))
    else:
        print(text, file=sys.stderr if status == EXIT_INPUT else sys.stdout)
    return status


if __name__ == "__main__":
    sys.exit(main())
