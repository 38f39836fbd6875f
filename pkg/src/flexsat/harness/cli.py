"""Command-line front end: solve one CNF, run a scenario, or crunch metrics."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from ..formula import DimacsError, parse_dimacs
from ..runtime import ClusterConfig, mono_mode, run_cluster
from .metrics import hos_baseline
from .report import RunReport, report_from_trace
from .scenario import ScenarioError, load_scenario

EXIT_SAT = 10
EXIT_UNSAT = 20
EXIT_OK = 0
EXIT_ERROR = 1


class CliError(Exception):
    """Raised for anything that should end the process with exit 1."""


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags; the convention here is 1 for any error
    def error(self, message: str) -> None:
        raise CliError(message)


def _add_config_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--pes", type=int, help="total PE count including the client")
    sub.add_argument("--threads", type=int, help="solver threads per active node")
    sub.add_argument("--alpha", type=float, help="export budget decay per doubling")
    sub.add_argument("--beta", type=int, help="export budget base (literals)")
    sub.add_argument("--share-period", type=float, metavar="S",
                     help="seconds between clause-sharing epochs")
    sub.add_argument("--balance-period", type=float, metavar="S",
                     help="seconds between balancing epochs")
    sub.add_argument("--filter-halflife", type=float, metavar="S",
                     help="seconds between random forgetting of half the filter")
    sub.add_argument("--epsilon", type=float, help="idle-PE reserve ratio")
    sub.add_argument("--max-jobs", type=int, help="jobs admitted concurrently")
    sub.add_argument("--seed", type=int, help="run seed")
    mode = sub.add_mutually_exclusive_group()
    mode.add_argument("--sim", action="store_true", help="simulated time (default)")
    mode.add_argument("--real", action="store_true", help="wallclock threads")
    sub.add_argument("--timeout", type=float, metavar="S", help="global limit")
    sub.add_argument("--out", metavar="PATH", help="write the run report as JSON")
    sub.add_argument("--trace", metavar="PATH", help="write the raw trace log")


def _config_from_args(args: argparse.Namespace) -> ClusterConfig:
    cfg = ClusterConfig()
    updates = {}
    for attr, key in (("pes", "num_pes"), ("threads", "threads"),
                      ("alpha", "alpha"), ("beta", "beta"),
                      ("share_period", "share_period_s"),
                      ("balance_period", "balance_period_s"),
                      ("filter_halflife", "filter_halflife_s"),
                      ("epsilon", "epsilon"), ("max_jobs", "max_jobs"),
                      ("seed", "seed"), ("timeout", "timeout_s")):
        value = getattr(args, attr)
        if value is not None:
            updates[key] = value
    if args.real:
        updates["sim"] = False
    cfg = replace(cfg, **updates)
    cfg.validate()
    return cfg


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _write_outputs(report: RunReport, args: argparse.Namespace) -> None:
    if args.out:
        Path(args.out).write_text(report.to_json(include_trace=True) + "\n")
    if args.trace:
        Path(args.trace).write_text("\n".join(report.trace) + "\n")


def _print_model(model: dict) -> None:
    lits = [(var if model[var] else -var) for var in sorted(model)]
    lits.append(0)
    for i in range(0, len(lits), 20):
        print("v " + " ".join(str(l) for l in lits[i:i + 20]))


def cmd_solve(args: argparse.Namespace) -> int:
    try:
        cnf = parse_dimacs(_read_text(args.cnf))
    except DimacsError as exc:
        raise CliError(f"{args.cnf}: {exc}") from exc
    cfg = _config_from_args(args)
    report = mono_mode(cnf, cfg)
    _write_outputs(report, args)
    job = min(report.jobs)
    verdict = report.jobs[job]["verdict"]
    if verdict == "SAT":
        print("s SATISFIABLE")
        model = report.models.get(job)
        if model:
            _print_model(model)
        return EXIT_SAT
    if verdict == "UNSAT":
        print("s UNSATISFIABLE")
        return EXIT_UNSAT
    print("s UNKNOWN")
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except (ScenarioError, DimacsError) as exc:
        raise CliError(f"{args.scenario}: {exc}") from exc
    except OSError as exc:
        raise CliError(f"cannot read {args.scenario}: {exc.strerror or exc}") from exc
    cfg = _config_from_args(args)
    report = run_cluster(cfg, scenario)
    _write_outputs(report, args)
    for line in report.summary_lines():
        print(line)
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    text = _read_text(args.trace_file)
    stripped = text.lstrip()
    if stripped.startswith("{"):
        saved = RunReport.from_json(text)
        if not saved.trace:
            raise CliError(f"{args.trace_file}: report has no embedded trace")
        lines = saved.trace
    else:
        lines = [ln for ln in text.splitlines() if ln.strip()]
    report = report_from_trace(lines)
    if args.out:
        Path(args.out).write_text(report.to_json(include_trace=False) + "\n")
    for line in report.summary_lines():
        print(line)
    return EXIT_OK


def cmd_hos(args: argparse.Namespace) -> int:
    try:
        body = json.loads(_read_text(args.times))
    except json.JSONDecodeError as exc:
        raise CliError(f"{args.times}: {exc}") from exc
    if not isinstance(body, list):
        raise CliError(f"{args.times}: expected a JSON list of job entries")
    entries = []
    for rec in body:
        try:
            entries.append((rec["job"], rec.get("runtime"),
                            float(rec.get("arrival", 0.0))))
        except (TypeError, KeyError) as exc:
            raise CliError(f"{args.times}: bad entry {rec!r}") from exc
    limit = args.timeout if args.timeout is not None else 300.0
    responses = hos_baseline(entries, limit)
    mean = sum(responses.values()) / len(responses) if responses else 0.0
    if args.out:
        body = {"responses": responses, "mean_response": mean}
        Path(args.out).write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
    for job, resp in sorted(responses.items(), key=lambda kv: (kv[1], kv[0])):
        print("job %s: response=%.3f" % (job, resp))
    print("mean_response: %.3f" % mean)
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="flexsat",
                     description="Malleable SAT scheduling and solving, desk scale.")
    subs = parser.add_subparsers(dest="command", required=True)

    solve = subs.add_parser("solve", parents=[], help="solve one CNF in mono mode")
    solve.add_argument("cnf", help="DIMACS file")
    _add_config_flags(solve)
    solve.set_defaults(func=cmd_solve)

    run = subs.add_parser("run", help="run a scheduling scenario")
    run.add_argument("scenario", help="scenario file (JSON lines)")
    _add_config_flags(run)
    run.set_defaults(func=cmd_run)

    rep = subs.add_parser("report", help="recompute metrics from trace or report")
    rep.add_argument("trace_file", help="trace log or report JSON")
    rep.add_argument("--out", metavar="PATH", help="write recomputed report JSON")
    rep.set_defaults(func=cmd_report)

    hos = subs.add_parser("hos", help="shortest-first baseline from known runtimes")
    hos.add_argument("times", help="JSON list of {job, runtime, arrival}")
    hos.add_argument("--timeout", type=float, metavar="S", help="penalty limit")
    hos.add_argument("--out", metavar="PATH", help="write schedule JSON")
    hos.set_defaults(func=cmd_hos)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except CliError as exc:
        print(f"flexsat: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except ValueError as exc:
        print(f"flexsat: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def entry() -> None:
    sys.exit(main())
