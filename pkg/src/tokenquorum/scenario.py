"""YAML scenario files.

A scenario has these top-level sections (all but ``cluster`` optional)::

    seed: 7
    fanout: closest            # or broadcast
    time_budget: 200000
    cluster:
      n: 5
      leader: A
      rtt: 10                  # uniform, or a full n x n matrix
    faults:
      drop_rate: 0.1
      duplicate_rate: 0.05
      reorder_jitter: 3
      retransmit_timeout: 60   # omit to disable retransmission
    initial_config:
      preset: flexible         # leader | majority | flexible | local
      transfers: ["B->D"]
    schedule:
      - time: 800
        config: {preset: leader, leader: A}
    workload:
      ops: 500
      read_ratio: 0.9
      key_space: 8
      clients: {A: 1, B: 1}
      mean_interarrival: 4
      explicit:
        - {time: 10, origin: B, op: put, key: x, value: "1"}
    checks:
      linearizability: true
      oracle: true
      lincheck_bound: 5000

Errors carry the line of the offending entry.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any, Optional

import yaml

from .lincheck import DEFAULT_MAX_OPS_PER_KEY
from .reconfig import build_config
from .sim import ClientOp, FaultProfile, Scenario, Workload
from .tokens import LatencyMatrix, parse_process


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Checks:
    linearizability: bool = True
    oracle: bool = True
    lincheck_bound: int = DEFAULT_MAX_OPS_PER_KEY


@dataclass(frozen=True)
class ScenarioFile:
    scenario: Scenario
    checks: Checks


def _line_map(node, path=(), out=None) -> dict:
    out = {} if out is None else out
    out.setdefault(path, node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            out[path + (k.value,)] = k.start_mark.line + 1
            _line_map(v, path + (k.value,), out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_map(v, path + (i,), out)
    return out


class _Reader:
    def __init__(self, lines: dict) -> None:
        self.lines = lines

    def fail(self, path, message: str):
        while path and path not in self.lines:
            path = path[:-1]
        line = self.lines.get(path)
        where = ".".join(str(p) for p in path) or "<root>"
        prefix = f"line {line}: " if line else ""
        raise ScenarioError(f"{prefix}{where}: {message}")

    def section(self, data: dict, name: str, required: bool = False) -> dict:
        value = data.get(name)
        if value is None:
            if required:
                self.fail((), f"missing required section '{name}'")
            return {}
        if not isinstance(value, dict):
            self.fail((name,), "expected a mapping")
        return value

    def check_keys(self, mapping: dict, path, allowed) -> None:
        for key in mapping:
            if key not in allowed:
                self.fail(path + (key,), f"unknown key (expected one of: {', '.join(allowed)})")

    def num(self, mapping: dict, path, key, default, kind=int, lo=None, hi=None):
        if key not in mapping or mapping[key] is None:
            return default
        v = mapping[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or (kind is int and not isinstance(v, int)):
            self.fail(path + (key,), f"expected {'an integer' if kind is int else 'a number'}")
        if (lo is not None and v < lo) or (hi is not None and v > hi):
            self.fail(path + (key,), f"value {v} out of range [{lo}, {hi if hi is not None else 'inf'}]")
        return kind(v)

    def guard(self, path, fn, *args):
        try:
            return fn(*args)
        except (ValueError, TypeError) as exc:
            self.fail(path, str(exc))


def parse_scenario(text: str) -> ScenarioFile:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}: " if mark else ""
        raise ScenarioError(f"{where}{getattr(exc, 'problem', None) or exc}") from None
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a mapping of sections")
    rd = _Reader(_line_map(node))
    rd.check_keys(data, (), ("seed", "fanout", "time_budget", "cluster", "faults",
                             "initial_config", "schedule", "workload", "checks"))

    cluster = rd.section(data, "cluster", required=True)
    rd.check_keys(cluster, ("cluster",), ("n", "leader", "rtt"))
    n = rd.num(cluster, ("cluster",), "n", None, lo=1)
    if n is None:
        rd.fail(("cluster",), "missing 'n'")
    leader = rd.guard(("cluster", "leader"), parse_process, cluster.get("leader", 0), n)
    rtt = cluster.get("rtt", 10)
    if isinstance(rtt, list):
        latency = rd.guard(("cluster", "rtt"), LatencyMatrix.from_rows, rtt)
        if latency.n != n:
            rd.fail(("cluster", "rtt"), f"matrix is {latency.n}x{latency.n}, cluster has n={n}")
    else:
        latency = LatencyMatrix.uniform(n, rd.num(cluster, ("cluster",), "rtt", 10, lo=0))

    faults = rd.section(data, "faults")
    fp = ("faults",)
    rd.check_keys(faults, fp, ("drop_rate", "duplicate_rate", "reorder_jitter", "retransmit_timeout"))
    fault_profile = FaultProfile(
        drop_rate=rd.num(faults, fp, "drop_rate", 0.0, float, 0, 1),
        duplicate_rate=rd.num(faults, fp, "duplicate_rate", 0.0, float, 0, 1),
        reorder_jitter=rd.num(faults, fp, "reorder_jitter", 0, int, 0),
        retransmit_timeout=rd.num(faults, fp, "retransmit_timeout", None, int, 1),
    )

    init_spec = data.get("initial_config") or {"preset": "majority"}
    if not isinstance(init_spec, dict):
        rd.fail(("initial_config",), "expected a mapping")
    initial = rd.guard(("initial_config",), build_config, init_spec, n, leader)

    schedule = []
    sched = data.get("schedule") or []
    if not isinstance(sched, list):
        rd.fail(("schedule",), "expected a list")
    for i, entry in enumerate(sched):
        p = ("schedule", i)
        if not isinstance(entry, dict) or "time" not in entry or "config" not in entry:
            rd.fail(p, "each entry needs 'time' and 'config'")
        rd.check_keys(entry, p, ("time", "config"))
        t = rd.num(entry, p, "time", 0, int, 0)
        if not isinstance(entry["config"], dict):
            rd.fail(p + ("config",), "expected a mapping")
        schedule.append((t, rd.guard(p + ("config",), build_config, entry["config"], n, leader)))

    wl = rd.section(data, "workload")
    wp = ("workload",)
    rd.check_keys(wl, wp, ("ops", "read_ratio", "key_space", "clients",
                           "mean_interarrival", "start_time", "explicit"))
    clients = None
    if wl.get("clients") is not None:
        if not isinstance(wl["clients"], dict):
            rd.fail(wp + ("clients",), "expected a mapping of process -> share")
        clients = {}
        for ref, share in wl["clients"].items():
            pid = rd.guard(wp + ("clients", ref), parse_process, ref, n)
            clients[pid] = rd.num(wl["clients"], wp + ("clients",), ref, 1, float, 0)
    explicit = []
    for i, op in enumerate(wl.get("explicit") or []):
        p = wp + ("explicit", i)
        if not isinstance(op, dict):
            rd.fail(p, "expected a mapping")
        rd.check_keys(op, p, ("time", "origin", "op", "key", "value"))
        kind = op.get("op")
        if kind not in ("put", "get"):
            rd.fail(p + ("op",), "op must be put or get")
        explicit.append(ClientOp(
            op_id=-1, time=rd.num(op, p, "time", 0, int, 0),
            origin=rd.guard(p + ("origin",), parse_process, op.get("origin", 0), n),
            kind=kind, key=str(op.get("key", "k0")),
            value=None if op.get("value") is None else str(op["value"])))
    workload = Workload(
        total_ops=rd.num(wl, wp, "ops", 0, int, 0),
        read_ratio=rd.num(wl, wp, "read_ratio", 0.5, float, 0, 1),
        key_space=rd.num(wl, wp, "key_space", 4, int, 1),
        clients=clients,
        mean_interarrival=rd.num(wl, wp, "mean_interarrival", 5.0, float, 0),
        start_time=rd.num(wl, wp, "start_time", 0, int, 0),
        explicit=tuple(explicit),
    )

    ck = rd.section(data, "checks")
    rd.check_keys(ck, ("checks",), ("linearizability", "oracle", "lincheck_bound"))
    for flag in ("linearizability", "oracle"):
        if flag in ck and not isinstance(ck[flag], bool):
            rd.fail(("checks", flag), "expected true or false")
    checks = Checks(
        linearizability=ck.get("linearizability", True),
        oracle=ck.get("oracle", True),
        lincheck_bound=rd.num(ck, ("checks",), "lincheck_bound", DEFAULT_MAX_OPS_PER_KEY, int, 1),
    )

    fanout = data.get("fanout", "closest")
    if fanout not in ("closest", "broadcast"):
        rd.fail(("fanout",), "expected closest or broadcast")
    scenario = Scenario(
        n=n, latency=latency, initial_config=initial, leader=leader,
        faults=fault_profile, workload=workload, schedule=tuple(schedule),
        fanout=fanout, seed=rd.num(data, (), "seed", 0, int),
        time_budget=rd.num(data, (), "time_budget", None, int, 0))
    rd.guard((), scenario.validate)
    return ScenarioFile(scenario, checks)


def load_scenario(path, seed: Optional[int] = None, fanout: Optional[str] = None) -> ScenarioFile:
    with open(path, encoding="utf-8") as fp:
        sf = parse_scenario(fp.read())
    overrides: dict[str, Any] = {}
    if seed is not None:
        overrides["seed"] = seed
    if fanout is not None:
        overrides["fanout"] = fanout
    if overrides:
        sf = ScenarioFile(replace(sf.scenario, **overrides), sf.checks)
    return sf
