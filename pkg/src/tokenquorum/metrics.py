"""Per-op CSV rows and run summaries."""

from __future__ import annotations

import csv
from typing import IO, Optional

import numpy as np

from .sim import RunResult
from .tokens import process_name

CSV_FIELDS = ("op_id", "kind", "origin", "invoke_time", "response_time",
              "latency", "assigned_index", "messages_sent")


def _blank(v) -> str:
    return "" if v is None else str(v)


def write_ops_csv(result: RunResult, fp: IO[str]) -> None:
    w = csv.writer(fp, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for op in result.ops:
        w.writerow([op.op_id, op.kind, process_name(op.origin), op.invoke_time,
                    _blank(op.response_time), _blank(op.latency),
                    _blank(op.assigned_index), op.messages_sent])


def latency_stats(values) -> dict:
    if len(values) == 0:
        return {"count": 0, "mean": None, "median": None, "p99": None}
    a = np.asarray(values, dtype=float)
    return {
        "count": int(a.size),
        "mean": round(float(a.mean()), 4),
        "median": float(np.median(a)),
        "p99": float(np.percentile(a, 99)),
    }


def epochs(result: RunResult) -> list[tuple[int, Optional[int], int]]:
    """``(start, end, version)`` spans delimited by completed reconfigurations."""
    bounds = [(0, result.scenario.initial_config.version)] + list(result.config_times)
    out = []
    for k, (start, version) in enumerate(bounds):
        end = bounds[k + 1][0] if k + 1 < len(bounds) else None
        out.append((start, end, version))
    return out


def summarize(result: RunResult) -> dict:
    reads = [op for op in result.ops if op.kind == "get"]
    writes = [op for op in result.ops if op.kind == "put"]
    summary = {
        "seed": result.scenario.seed,
        "complete": result.complete,
        "end_time": result.end_time,
        "ops": len(result.ops),
        "read_latency": latency_stats([op.latency for op in reads if op.latency is not None]),
        "write_latency": latency_stats([op.latency for op in writes if op.latency is not None]),
        "messages": {
            "get": result.message_counts["get"],
            "put": result.message_counts["put"],
            "config": result.message_counts["config"],
            "per_get": round(result.message_counts["get"] / len(reads), 4) if reads else None,
            "per_put": round(result.message_counts["put"] / len(writes), 4) if writes else None,
        },
        "read_targets": {process_name(p): c for p, c in result.read_targets.items()},
        "epochs": [],
    }
    for start, end, version in epochs(result):
        ops = [op for op in result.ops
               if op.invoke_time >= start and (end is None or op.invoke_time < end)]
        summary["epochs"].append({
            "version": version,
            "start": start,
            "end": end,
            "read_latency": latency_stats(
                [op.latency for op in ops if op.kind == "get" and op.latency is not None]),
            "write_latency": latency_stats(
                [op.latency for op in ops if op.kind == "put" and op.latency is not None]),
        })
    return summary
