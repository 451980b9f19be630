"""Command line entry points.

Exit codes: 0 success, 1 validation/parse error, 2 anomaly detected,
3 livelock (time horizon reached with undecided requests).
"""

from __future__ import annotations

import argparse
import sys

from .eventlog import read_log, write_log
from .harness import replay_verdicts, run
from .scenario import ScenarioError, load_scenario

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_ANOMALY = 2
EXIT_LIVELOCK = 3


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="paxsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario and print its report")
    p_run.add_argument("--scenario", required=True)
    p_run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p_run.add_argument("--log", default=None, help="write the event log to this path")
    p_run.add_argument("--format", choices=("json", "text"), default="text")

    p_validate = sub.add_parser("validate", help="check a scenario file")
    p_validate.add_argument("--scenario", required=True)

    p_replay = sub.add_parser("replay", help="recompute verdicts from an event log and diff")
    p_replay.add_argument("--log", required=True)

    args = parser.parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "validate":
        return _cmd_validate(args)
    return _cmd_replay(args)


def _cmd_run(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    result = run(scenario, seed=args.seed)
    if args.log:
        write_log(result.records, args.log)
    report = result.report
    print(report.to_json() if args.format == "json" else report.to_text())
    if report.counts["anomaly"] > 0:
        return EXIT_ANOMALY
    if report.livelock:
        return EXIT_LIVELOCK
    return EXIT_OK


def _cmd_validate(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(f"ok: {scenario.name} ({scenario.acceptors} acceptors, "
          f"{len(scenario.requests)} requests, {len(scenario.faults)} faults)")
    return EXIT_OK


def _cmd_replay(args) -> int:
    try:
        records = read_log(args.log)
    except OSError as exc:
        print(f"cannot read log: {exc}", file=sys.stderr)
        return EXIT_INVALID
    checked, diffs = replay_verdicts(records)
    if diffs:
        for diff in diffs:
            print(f"mismatch: {diff}")
        print(f"{checked} verdicts checked, {len(diffs)} mismatches")
        return EXIT_INVALID
    print(f"{checked} verdicts checked, all reproduced")
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
