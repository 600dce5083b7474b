#!/usr/bin/env python3
"""Run a program with tracing and check the reported safe-point spans.

For every collection the span is recomputed from the trace: the largest
difference between a worker's instruction counter at its gc-ack and at the
gc-request. The result must match the metrics output and stay within K+1.
"""

import argparse
import json
import os
import subprocess
import sys
import tempfile


def spans_from_trace(path):
    spans = []
    request = None
    span = 0
    with open(path) as f:
        for line in f:
            e = json.loads(line)
            kind = e["kind"]
            if kind == "gc-request":
                request = e["instr"]
                span = 0
            elif kind == "gc-ack" and not e.get("idle", False):
                span = max(span, e["instr"] - request[e["worker"]])
            elif kind == "gc-start":
                spans.append(span)
    return spans


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--greenrt", required=True, help="path to the greenrt binary")
    ap.add_argument("--program", required=True)
    ap.add_argument("--workers", type=int, default=4)
    ap.add_argument("--heap-words", type=int, default=4096)
    ap.add_argument("--runs", type=int, default=5)
    args = ap.parse_args()

    failures = 0
    with tempfile.TemporaryDirectory() as tmp:
        cfg = os.path.join(tmp, "small.cfg")
        with open(cfg, "w") as f:
            f.write(f"heapWords={args.heap_words}\n")
            f.write(f"maxStackWords={min(1024, args.heap_words // 4)}\n")
            f.write("initialStackWords=64\n")
            f.write("labWords=64\n")
        for run in range(args.runs):
            trace = os.path.join(tmp, f"trace{run}.jsonl")
            metrics_path = os.path.join(tmp, f"metrics{run}.json")
            cmd = [args.greenrt, "run", args.program, "--config", cfg, "--workers", str(args.workers),
                   "--trace", trace, "--metrics", metrics_path]
            proc = subprocess.run(cmd, capture_output=True, text=True)
            if proc.returncode != 0:
                print(f"run {run}: exit {proc.returncode}: {proc.stderr.strip()}")
                failures += 1
                continue
            with open(metrics_path) as f:
                metrics = json.load(f)
            reported = [row["span"] for row in metrics["collectionRows"]]
            recomputed = spans_from_trace(trace)
            k = metrics["k"]
            pause = metrics["pause"]
            print(f"run {run}: {len(reported)} collections, spans {reported}, K={k}, "
                  f"pause max {pause['maxMicros']} us mean {pause['meanMicros']:.1f} us")
            if reported != recomputed:
                print(f"  mismatch: trace gives {recomputed}")
                failures += 1
            if not reported:
                print("  no collections; heap too large for this check")
                failures += 1
            if k is not None and any(s > k + 1 for s in reported):
                print(f"  span above K+1={k + 1}")
                failures += 1
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
