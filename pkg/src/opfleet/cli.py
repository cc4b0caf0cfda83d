"""Headless entry point: run scenarios, validate traces, replay for
determinism, and sweep parameters across seeds."""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from . import metrics
from .checker import check_text
from .engine import Sim
from .scenario import ScenarioError, load_scenario, parse_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3
EXIT_INCOMPLETE = 4


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="opfleet", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True)

    run = sub.add_parser("run", help="execute a scenario and write trace + reports")
    run.add_argument("--scenario", required=True)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--out", default="out")
    run.add_argument("--ticks-max", type=int, default=None)
    run.add_argument("--headless-svg", action="store_true",
                     help="emit the static data-flow projection")
    run.add_argument("--serve", action="store_true",
                     help="expose the live console bridge while running")
    run.add_argument("--host", default="127.0.0.1")
    run.add_argument("--port", type=int, default=8571)
    run.add_argument("--ticks-per-second", type=float, default=10.0)

    chk = sub.add_parser("check", help="replay-validate a trace against the protocol invariants")
    chk.add_argument("trace")

    rpl = sub.add_parser("replay", help="re-run the embedded scenario and compare trace hashes")
    rpl.add_argument("trace")
    rpl.add_argument("--out", default=None)

    swp = sub.add_parser("sweep", help="vary one scenario parameter across values and seeds")
    swp.add_argument("--scenario", required=True)
    swp.add_argument("--param", required=True, help="e.g. T_c")
    swp.add_argument("values", nargs="+", type=float)
    swp.add_argument("--seeds", type=int, nargs="*", default=[0])
    swp.add_argument("--out", default="out")
    return p


def _load(path: str, seed: int | None, ticks_max: int | None):
    try:
        sc = load_scenario(path)
        raw = dict(sc.raw)
        if seed is not None:
            raw["seed"] = seed
        if ticks_max is not None:
            raw["tick_limit"] = ticks_max
        if seed is not None or ticks_max is not None:
            sc = parse_scenario(raw, Path(path).parent)
        return sc
    except (ScenarioError, FileNotFoundError, json.JSONDecodeError) as e:
        print(f"scenario error: {e}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def cmd_run(args) -> int:
    sc = _load(args.scenario, args.seed, args.ticks_max)
    if args.serve:
        from .service.app import serve_live

        return serve_live(sc, args.host, args.port, args.ticks_per_second, Path(args.out))
    sim = Sim(sc)
    trace = sim.run()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace_path = out / "trace.jsonl"
    trace_path.write_text(trace.dump())
    records = metrics.parse_trace(trace.dump())
    metrics.write_outputs(records, out, svg=args.headless_svg)
    summary = trace.records[-1]
    print(f"outcome={summary['outcome']} ticks={summary['t']} trace={trace_path} "
          f"sha256={trace.sha256()}")
    if summary["outcome"].startswith("violation"):
        return EXIT_INVARIANT
    if not summary.get("complete"):
        return EXIT_INCOMPLETE
    return EXIT_OK


def cmd_check(args) -> int:
    try:
        text = Path(args.trace).read_text()
    except FileNotFoundError as e:
        print(f"trace error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = check_text(text)
    except metrics.TraceError as e:
        print(f"trace error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    for f in result.findings:
        print(str(f))
    print(f"checked {result.stats['records']} records: "
          f"{'OK' if result.ok else f'{len(result.findings)} violation(s)'}")
    return EXIT_OK if result.ok else EXIT_INVARIANT


def cmd_replay(args) -> int:
    try:
        text = Path(args.trace).read_text()
        records = metrics.parse_trace(text)
    except (FileNotFoundError, metrics.TraceError) as e:
        print(f"trace error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    raw = records[0]["scenario"]
    try:
        sc = parse_scenario(raw, Path(args.trace).parent)
    except ScenarioError as e:
        print(f"scenario error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    sim = Sim(sc)
    trace = sim.run()
    old_hash = hashlib.sha256(text.encode()).hexdigest()
    new_hash = trace.sha256()
    if args.out:
        Path(args.out).write_text(trace.dump())
    if old_hash == new_hash:
        print(f"replay identical: {new_hash}")
        return EXIT_OK
    print(f"replay DIVERGED: recorded {old_hash} != replayed {new_hash}")
    return EXIT_INVARIANT


def cmd_sweep(args) -> int:
    rows = []
    worst = EXIT_OK
    for value in args.values:
        for seed in args.seeds:
            sc = _load(args.scenario, None, None)
            raw = dict(sc.raw)
            raw[args.param] = value if value != int(value) else int(value)
            raw["seed"] = seed
            try:
                sc = parse_scenario(raw, Path(args.scenario).parent)
            except ScenarioError as e:
                print(f"scenario error for {args.param}={value}: {e}", file=sys.stderr)
                return EXIT_CONFIG
            sim = Sim(sc)
            trace = sim.run()
            records = metrics.parse_trace(trace.dump())
            rep = metrics.report(records)
            row = {
                "param": args.param,
                "value": value,
                "seed": seed,
                "outcome": rep["outcome"],
                "duration": rep["duration"],
                "max_stamp_latency": rep["max_stamp_latency"],
                "max_external_gap": rep["max_external_gap"],
                "overlap_pct": rep["overlap_pct"],
                "returns": rep["returns"],
            }
            rows.append(row)
            print(json.dumps(row, sort_keys=True))
            if not rep.get("complete") and rep["outcome"] != "complete":
                worst = max(worst, EXIT_INCOMPLETE)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.json").write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")
    return worst


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"run": cmd_run, "check": cmd_check, "replay": cmd_replay, "sweep": cmd_sweep}
    return handlers[args.cmd](args)


if __name__ == "__main__":
    sys.exit(main())
