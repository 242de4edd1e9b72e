"""Command-line front end: verify programs, run them, dump and monitor traces.

Exit codes: 0 everything passed; 1 verification failed, the monitor saw a
violation, or the program faulted at runtime; 2 usage, IO, parse, or static
errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from . import interp, refine, smt
from .checks import BaseTypeError, CausalityError, ScopeError
from .parser import ParseError, parse
from .syntax import BoolLit, FloatLit, IntLit, TupleV, is_synthetic, pretty_state
from .temporal import Inconclusive, Pass, Violation

CORPUS_DIR = Path(__file__).resolve().parent / "corpus"

_STATIC_ERRORS = (ParseError, ScopeError, BaseTypeError, CausalityError)


@dataclass(frozen=True)
class RunConfig:
    """Everything a command needs beyond its input file."""

    mode: str = "verify"  # verify | run | monitor
    steps: int = 0
    robot_mode: bool = False
    device_path: Path | None = None
    output_format: str = "csv"  # csv | jsonl
    solver_path: str | None = None
    smt_dump_dir: Path | None = None
    timeout: float = 10.0

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be nonnegative")
        if self.robot_mode and self.device_path is None:
            raise ValueError("--robot-mode requires --devices")

    def solver(self) -> smt.SolverConfig:
        return smt.SolverConfig(
            command=smt.discover_solver(self.solver_path),
            timeout=self.timeout,
            dump_dir=self.smt_dump_dir,
        )


def corpus() -> list[str]:
    """Names of the bundled programs."""
    return sorted(p.name for p in CORPUS_DIR.glob("*.mrv"))


def _load(path: Path):
    return parse(path.read_text(encoding="utf-8"))


def _plain(v):
    match v:
        case IntLit(value=x) | FloatLit(value=x) | BoolLit(value=x):
            return x
        case TupleV(items=items):
            return [_plain(i) for i in items]
    raise TypeError(f"not a value: {v!r}")


def _cell(v) -> str:
    p = _plain(v)
    if isinstance(p, bool):
        return "true" if p else "false"
    if isinstance(p, float):
        return f"{p:.17g}"
    if isinstance(p, list):
        return json.dumps(p)
    return str(p)


def _write_csv(trace: interp.Trace, out) -> None:
    cols = [c for c in trace.columns
            if c != "main" and not is_synthetic(c)] + ["main"]
    w = csv.writer(out)
    w.writerow(["instant", *cols])
    for row in trace.rows:
        w.writerow([row["instant"]] +
                   [_cell(row[c]) if c in row else "" for c in cols])


def _write_jsonl(trace: interp.Trace, out) -> None:
    by_instant: dict[int, list] = {}
    for wr in trace.writes:
        by_instant.setdefault(wr.instant, []).append(
            {"key": wr.key, "value": _plain(wr.value)})
    for row in trace.rows:
        i = row["instant"]
        rec = {
            "instant": i,
            "values": {k: _plain(v) for k, v in row.items()
                       if k != "instant" and not is_synthetic(k)},
            "writes": by_instant.get(i, []),
        }
        out.write(json.dumps(rec) + "\n")


def _report_monitor(results: list[interp.MonitorResult], steps: int) -> bool:
    """Print one line per annotation; True iff no violation."""
    ok = True
    for r in results:
        match r.verdict:
            case Violation(instant=i, pred=p):
                ok = False
                print(f"monitor {r.location}: VIOLATION at instant {i}: "
                      f"{pretty_state(p)}", file=sys.stderr)
            case Pass():
                print(f"monitor {r.location}: pass", file=sys.stderr)
            case Inconclusive():
                print(f"monitor {r.location}: no violation in {steps} instants "
                      "(an always obligation stays open on a finite trace)",
                      file=sys.stderr)
    if not results:
        print("monitor: no annotated bindings to check", file=sys.stderr)
    return ok


def cmd_verify(path: Path, cfg: RunConfig, json_path: Path | None = None) -> int:
    program = _load(path)
    report = refine.verify_program(program, cfg.solver())
    print(report.render())
    if json_path is not None:
        payload = {"file": str(path), "passed": report.passed,
                   "obligations": report.to_rows()}
        json_path.write_text(json.dumps(payload, indent=2) + "\n",
                             encoding="utf-8")
    return 0 if report.passed else 1


def cmd_run(path: Path, cfg: RunConfig, output: Path | None = None,
            unchecked: bool = False) -> int:
    program = _load(path)
    if not unchecked:
        report = refine.verify_program(program, cfg.solver())
        if not report.passed:
            print(report.render(), file=sys.stderr)
            print(f"{path.name}: verification failed; "
                  "pass --unchecked to run anyway", file=sys.stderr)
            return 1
    devices = (interp.DeviceTable.load(cfg.device_path)
               if cfg.device_path is not None else None)
    try:
        trace = interp.run(program, cfg.steps, robot_mode=cfg.robot_mode,
                           devices=devices)
    except interp.InterpError as exc:
        instant = getattr(exc, "instant", None)
        where = f" at instant {instant}" if instant is not None else ""
        print(f"runtime error{where}: {exc}", file=sys.stderr)
        return 1
    writer = _write_csv if cfg.output_format == "csv" else _write_jsonl
    if output is not None:
        with open(output, "w", encoding="utf-8", newline="") as out:
            writer(trace, out)
    else:
        writer(trace, sys.stdout)
    if cfg.mode == "monitor":
        if not _report_monitor(interp.monitor(program, trace), cfg.steps):
            return 1
    return 0


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="rill",
        description="Verify and run synchronous stream programs.")
    ap.add_argument("--solver", metavar="PATH", default=None,
                    help="SMT solver command (default: discover)")
    ap.add_argument("--smt-dump", metavar="DIR", type=Path, default=None,
                    help="dump every solver script into DIR")
    ap.add_argument("--timeout", metavar="S", type=float, default=10.0,
                    help="per-obligation solver timeout in seconds")
    sub = ap.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="discharge every proof obligation")
    v.add_argument("file", type=Path)
    v.add_argument("--json", metavar="FILE", type=Path, default=None,
                   help="also write the report as JSON")

    r = sub.add_parser("run", help="verify then execute, dumping the trace")
    r.add_argument("file", type=Path)
    r.add_argument("--steps", type=int, required=True, metavar="N")
    r.add_argument("--robot-mode", action="store_true",
                   help="feed models/robot_str from a device table")
    r.add_argument("--devices", metavar="d.json", type=Path, default=None)
    r.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    r.add_argument("--output", metavar="FILE", type=Path, default=None,
                   help="trace file (default: stdout)")
    r.add_argument("--monitor", action="store_true",
                   help="replay annotations against the trace")
    r.add_argument("--unchecked", action="store_true",
                   help="skip verification before running")

    c = sub.add_parser("corpus", help="list bundled programs")
    c.add_argument("name", nargs="?", default=None,
                   help="print the path of one bundled program")
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = _build_parser()
    args = ap.parse_args(argv)
    try:
        if args.command == "corpus":
            if args.name is None:
                for name in corpus():
                    print(name)
                return 0
            hit = CORPUS_DIR / args.name
            if not hit.exists():
                hit = CORPUS_DIR / (args.name + ".mrv")
            if not hit.exists():
                print(f"no bundled program named {args.name}", file=sys.stderr)
                return 2
            print(hit)
            return 0
        cfg = RunConfig(
            mode=("monitor" if getattr(args, "monitor", False) else args.command),
            steps=getattr(args, "steps", 0),
            robot_mode=getattr(args, "robot_mode", False),
            device_path=getattr(args, "devices", None),
            output_format=getattr(args, "format", "csv"),
            solver_path=args.solver,
            smt_dump_dir=args.smt_dump,
            timeout=args.timeout,
        )
        if args.command == "verify":
            return cmd_verify(args.file, cfg, json_path=args.json)
        return cmd_run(args.file, cfg, output=args.output,
                       unchecked=args.unchecked)
    except _STATIC_ERRORS as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError, ValueError,
            smt.SolverUnavailable) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
