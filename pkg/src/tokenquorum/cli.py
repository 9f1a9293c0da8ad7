"""Command-line front end: ``run``, ``quorums`` and ``check``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional, Sequence

from . import lincheck
from .metrics import summarize, write_ops_csv
from .reconfig import PRESETS, audit_trace, build_config
from .scenario import ScenarioError, load_scenario
from .sim import run
from .tokens import (ENUMERATION_LIMIT, minimal_read_quorums, minimal_write_quorums,
                     process_name, verify_intersection)

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


def fmt_set(members) -> str:
    return "{" + ",".join(process_name(p) for p in sorted(members)) + "}"


def fmt_family(family) -> list[str]:
    return [fmt_set(q) for q in sorted(family, key=lambda q: (len(q), sorted(q)))]


def cmd_run(args) -> int:
    try:
        sf = load_scenario(args.scenario, seed=args.seed, fanout=args.fanout)
    except (ScenarioError, OSError) as exc:
        print(f"{args.scenario}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    result = run(sf.scenario)
    history = result.history
    verdicts: dict = {"complete": result.complete}
    failed = not result.complete
    if sf.checks.linearizability:
        try:
            v = lincheck.check_linearizable(history, sf.checks.lincheck_bound)
            verdicts["linearizable"] = v.ok
            if not v.ok:
                verdicts["counterexample"] = v.describe()
            failed |= not v.ok
        except lincheck.HistoryTooLarge as exc:
            verdicts["linearizable"] = None
            verdicts["linearizable_error"] = str(exc)
            failed = True
    if sf.checks.oracle:
        o = lincheck.check_read_index_oracle(history)
        verdicts["read_index_oracle"] = o.ok
        verdicts["oracle_violations"] = [[w.op_id, r.op_id] for w, r in o.violations]
        failed |= not o.ok
    audit = audit_trace(result.notices)
    verdicts["reconfiguration_safe"] = audit.ok
    failed |= not audit.ok

    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "ops.csv"), "w", newline="") as fp:
        write_ops_csv(result, fp)
    with open(os.path.join(args.out, "history.jsonl"), "w") as fp:
        lincheck.dump_history(history, fp)
    with open(os.path.join(args.out, "summary.json"), "w") as fp:
        json.dump(summarize(result), fp, indent=2)
        fp.write("\n")
    with open(os.path.join(args.out, "verdicts.json"), "w") as fp:
        json.dump(verdicts, fp, indent=2)
        fp.write("\n")
    if args.trace:
        with open(os.path.join(args.out, "trace.csv"), "w") as fp:
            fp.write("seq,time,src,dst,kind,index,fate\n")
            fp.write("\n".join(result.trace_lines()) + "\n")

    status = "FAILED" if failed else "ok"
    print(f"{status}: {len(history)} ops, end time {result.end_time}, "
          f"complete={result.complete}, artifacts in {args.out}")
    if "counterexample" in verdicts:
        print(verdicts["counterexample"])
    return EXIT_FAILED if failed else EXIT_OK


def _config_from_args(args):
    if args.scenario:
        sf = load_scenario(args.scenario)
        return sf.scenario.initial_config
    if args.n is None:
        raise ValueError("give -n (or --scenario)")
    spec = {"preset": args.preset}
    if args.leader is not None:
        spec["leader"] = args.leader
    if args.transfer:
        if args.preset != "flexible":
            raise ValueError("--transfer only applies to the flexible preset")
        spec["transfers"] = args.transfer
    if args.owned is not None:
        spec["owned"] = args.owned
    return build_config(spec, args.n)


def cmd_quorums(args) -> int:
    try:
        config = _config_from_args(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if config.n > ENUMERATION_LIMIT:
        print(f"error: enumeration is limited to n <= {ENUMERATION_LIMIT}", file=sys.stderr)
        return EXIT_USAGE
    print(f"holders: {config.describe()}")
    print("read quorums: " + " ".join(fmt_family(minimal_read_quorums(config))))
    print("write quorums: " + " ".join(fmt_family(minimal_write_quorums(config))))
    ok = verify_intersection(config)
    print(f"intersection: {'ok' if ok else 'VIOLATED'}")
    return EXIT_OK if ok else EXIT_FAILED


def cmd_check(args) -> int:
    try:
        with open(args.history) as fp:
            history = lincheck.load_history(fp)
    except (lincheck.MalformedHistory, OSError) as exc:
        print(f"{args.history}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    failed = False
    try:
        v = lincheck.check_linearizable(history, args.bound)
    except lincheck.HistoryTooLarge as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(v.describe())
    failed |= not v.ok
    if any(ev.assigned_index is not None for ev in history):
        try:
            o = lincheck.check_read_index_oracle(history)
        except lincheck.MissingInstrumentation as exc:
            print(f"read-index oracle: {exc}", file=sys.stderr)
            return EXIT_USAGE
        print(f"read-index oracle: {'ok' if o.ok else 'VIOLATED'} ({o.reads_checked} reads)")
        for w, r in o.violations:
            print(f"  write op {w.op_id} at index {w.assigned_index} acked before read op "
                  f"{r.op_id} began, but the read was assigned index {r.assigned_index}")
        failed |= not o.ok
    return EXIT_FAILED if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tokenquorum",
        description="Token quorum replication under a deterministic simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate a scenario and check the result")
    p.add_argument("scenario", help="YAML scenario file")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--out", default="out", help="artifact directory (default: out)")
    p.add_argument("--fanout", choices=("closest", "broadcast"), default=None)
    p.add_argument("--trace", action="store_true", help="also write trace.csv")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("quorums", help="list minimal quorums of a configuration")
    p.add_argument("--preset", choices=PRESETS, default="majority")
    p.add_argument("-n", type=int, default=None)
    p.add_argument("--leader", default=None)
    p.add_argument("--transfer", action="append", metavar="B->D",
                   help="flexible preset: move a token (repeatable)")
    p.add_argument("--owned", type=int, default=None, help="tokens owned per process")
    p.add_argument("--scenario", default=None, help="use a scenario's initial_config")
    p.set_defaults(func=cmd_quorums)

    p = sub.add_parser("check", help="re-check a history.jsonl offline")
    p.add_argument("history")
    p.add_argument("--bound", type=int, default=lincheck.DEFAULT_MAX_OPS_PER_KEY,
                   help="max ops per key for the exact check")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
