"""Command-line interface.

Subcommands: speed, fd, eval, record, serve.  All commands exit 0 on
success and nonzero on error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bench
from .scenarios import available_scenarios


def _add_common(p):
    p.add_argument("--format", choices=("text", "csv", "json"), default="text")
    p.add_argument("--out", help="write the report to this path instead of stdout")


def _emit(text: str, out):
    if out:
        Path(out).write_text(text if text.endswith("\n") else text + "\n",
                             encoding="utf-8")
    else:
        print(text)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ctmsim",
        description="Macroscopic traffic-signal simulator benchmarks and tools")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("speed", help="engine throughput benchmark")
    sp.add_argument("--scenario", action="append",
                    help="scenario name (repeatable); default: the built-in table")
    sp.add_argument("--steps", type=int, default=10_000)
    _add_common(sp)

    fd = sub.add_parser("fd", help="fundamental-diagram validation")
    fd.add_argument("--levels", type=int, default=120)
    fd.add_argument("--points-out", help="CSV of (density, flow, branch) samples")
    _add_common(fd)

    ev = sub.add_parser("eval", help="controller evaluation")
    ev.add_argument("--scenario", required=True)
    ev.add_argument("--controller", action="append", required=True,
                    help="controller name (repeatable)")
    ev.add_argument("--seconds", type=int, default=3600)
    ev.add_argument("--seeds", type=int, default=1,
                    help="number of seeds (seed, seed+1, ...)")
    ev.add_argument("--seed", type=int, default=0, help="first seed")
    ev.add_argument("--mesoscopic", action="store_true",
                    help="stochastic demand and 2 s start-up lost time")
    ev.add_argument("--lost-time", type=float, default=None)
    ev.add_argument("--min-green", type=float, default=None)
    _add_common(ev)

    rc = sub.add_parser("record", help="record a replay trace")
    rc.add_argument("--scenario", required=True)
    rc.add_argument("--controller", default="fixed")
    rc.add_argument("--seconds", type=int, default=600)
    rc.add_argument("--seed", type=int, default=0)
    rc.add_argument("--mesoscopic", action="store_true")
    rc.add_argument("--lost-time", type=float, default=None)
    rc.add_argument("--out", required=True)

    sv = sub.add_parser("serve", help="launch the dashboard server")
    sv.add_argument("--scenario", default="single-intersection-v0")
    sv.add_argument("--controller", default="fixed")
    sv.add_argument("--port", type=int, default=8000)
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--replay", help="stream a recorded file instead of simulating")
    sv.add_argument("--mesoscopic", action="store_true")
    sv.add_argument("--lost-time", type=float, default=None)
    sv.add_argument("--seed", type=int, default=0)
    sv.add_argument("--speed", type=float, default=1.0)

    ls = sub.add_parser("scenarios", help="list registered scenarios")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "speed":
            rows = bench.cmd_speed(args.scenario, steps=args.steps)
            _emit(bench.format_rows(rows, bench.SPEED_COLUMNS, args.format),
                  args.out)
        elif args.command == "fd":
            res = bench.cmd_fd(levels=args.levels)
            report = {
                "levels": len(res.points),
                "r2_free": round(res.r2_free, 6),
                "r2_congested": round(res.r2_congested, 6),
                "slope_free": round(res.slope_free, 4),
                "slope_congested": round(res.slope_congested, 4),
                "critical_density": round(res.critical_density, 5),
                "critical_flow": round(res.critical_flow, 5),
                "wall_s": round(res.wall_s, 2),
            }
            if args.points_out:
                lines = ["density,flow,branch"]
                lines += [f"{k},{q},{b}" for k, q, b in res.points]
                Path(args.points_out).write_text("\n".join(lines) + "\n",
                                                 encoding="utf-8")
            if args.format == "json":
                _emit(json.dumps(report, indent=2), args.out)
            else:
                _emit("\n".join(f"{k}: {v}" for k, v in report.items()),
                      args.out)
        elif args.command == "eval":
            seeds = range(args.seed, args.seed + args.seeds)
            overrides = {}
            if args.min_green is not None:
                overrides["min_green"] = args.min_green
            rows = []
            for controller in args.controller:
                rows += bench.evaluate(
                    args.scenario, controller, seconds=args.seconds,
                    seeds=seeds, mesoscopic=args.mesoscopic,
                    lost_time=args.lost_time, **overrides)
            text = bench.format_rows(rows, bench.EVAL_COLUMNS, args.format)
            if args.format == "text":
                for controller in args.controller:
                    sub_rows = [r for r in rows if r["controller"] == controller]
                    s = bench.summarize(sub_rows)
                    text += (f"\n{controller}: throughput "
                             f"{s['throughput']['mean']:.1f} ± {s['throughput']['std']:.1f}, "
                             f"delay {s['delay']['mean']:.2f} ± {s['delay']['std']:.2f}, "
                             f"queue {s['queue']['mean']:.1f} ± {s['queue']['std']:.1f}")
            _emit(text, args.out)
        elif args.command == "record":
            info = bench.cmd_record(
                args.scenario, args.controller, args.seconds, args.out,
                mesoscopic=args.mesoscopic, seed=args.seed,
                lost_time=args.lost_time)
            print(f"wrote {info['frames']} frames to {info['path']}")
        elif args.command == "serve":
            from .server import ServeConfig, serve
            serve(ServeConfig(scenario=args.scenario,
                              controller=args.controller,
                              replay=args.replay,
                              mesoscopic=args.mesoscopic,
                              lost_time=args.lost_time,
                              seed=args.seed, speed=args.speed),
                  host=args.host, port=args.port)
        elif args.command == "scenarios":
            print("\n".join(available_scenarios()))
    except (ValueError, KeyError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
