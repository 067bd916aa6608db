"""Command-line entry point.

Subcommands: optics-report, simulate, wear, eval, inspect.
Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, CorruptionError, DomainError, FramingError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fingersim",
        description="Software twin of a multi-modal tactile robot finger",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_optics = sub.add_parser("optics-report", help="trace a geometry config and report the design metrics")
    p_optics.add_argument("--config", default="default", help="geometry config file (or 'default')")
    p_optics.add_argument("--density", type=float, default=2.0, help="coverage occupancy samples per mm")
    p_optics.add_argument("--out", default=None, help="also write the report to this file")

    p_sim = sub.add_parser("simulate", help="run a scenario, stream and/or record it")
    p_sim.add_argument("--scenario", required=True, help="scenario config file")
    p_sim.add_argument("--listen", default=None, help="addr:port to serve the A/V stream on")
    p_sim.add_argument("--record", default=None, help="episode container output path")
    p_sim.add_argument("--settle", type=float, default=0.0, help="seconds to wait for clients before starting")

    p_wear = sub.add_parser("wear", help="run the durability benchmark for one material profile")
    p_wear.add_argument("--profile", required=True, help="material profile name")
    p_wear.add_argument("--seeds", type=int, default=20, help="number of independent runs")
    p_wear.add_argument("--out", default=None, help="write the report to this file")

    p_eval = sub.add_parser("eval", help="progress/success table from recorded run logs")
    p_eval.add_argument("--runs", required=True, help="run log file, one JSON record per line")
    p_eval.add_argument("--task", required=True, help="task spec, e.g. serve_egg:6")

    p_inspect = sub.add_parser("inspect", help="summarize an episode container")
    p_inspect.add_argument("episode", help="episode container path")
    return parser


def cmd_optics_report(args) -> int:
    from .optics import default_optics, load_optics_config, optics_report

    optics = default_optics() if args.config == "default" else load_optics_config(args.config)
    report = optics_report(optics, grid_density=args.density)
    lines = [
        "optical design metrics",
        f"  coverage of plate:        {report['coverage']:.4f}",
        f"  mean incidence angle:     {np.degrees(report['mean_incidence_rad']):.2f} deg",
        f"  max incidence angle:      {np.degrees(report['max_incidence_rad']):.2f} deg",
        f"  magnification distortion: {report['distortion_cv']:.4f} (CV)",
        f"  mirror-free baseline:     {np.degrees(report['mirror_free_mean_incidence_rad']):.2f} deg mean incidence",
        f"  pixels: plate={report['plate_pixels']} window={report['window_pixels']} miss={report['miss_pixels']}",
        "",
        "machine-readable:",
    ]
    for key, value in sorted(report.items()):
        lines.append(f"{key} = {value}")
    text = "\n".join(lines)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .scenario import parse_scenario
    from .simloop import run_scenario

    scenario = parse_scenario(args.scenario)
    listen = None
    if args.listen:
        host, _, port = args.listen.rpartition(":")
        listen = (host or "127.0.0.1", int(port))
    report = run_scenario(scenario, listen=listen, record_path=args.record, settle_s=args.settle)
    print(f"frames rendered:    {report.frames_rendered}")
    print(f"audio chunks:       {report.chunks_emitted}")
    print(f"proprio messages:   {report.proprio_messages}")
    print(f"impacts / slips:    {report.impacts} / {report.slip_events}")
    print(f"saturated steps:    {report.saturated_steps}")
    print(f"clients served:     {report.clients_served}")
    print(f"backlog drops:      {report.backlog_disconnects}")
    print(f"real-time factor:   {report.real_time_factor:.2f}")
    if report.episode_path:
        print(f"episode recorded:   {report.episode_path}")
    return EXIT_OK


def cmd_wear(args) -> int:
    from .wearbench import wear_report

    report = wear_report(args.profile, args.seeds)
    lines = [
        f"profile: {report['profile']} (target {report['target_hours']} h)",
        "per-seed lifetimes (h): " + ", ".join(f"{h:.3f}" for h in report["lifetimes_hours"]),
        f"mean lifetime: {report['mean_hours']:.3f} h",
        f"coefficient of variation: {report['cv']:.4f}",
        f"relative error vs target: {report['relative_error']:.4f}",
        f"closure within 5%: {'PASS' if report['passed'] else 'FAIL'}",
    ]
    text = "\n".join(lines)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    return EXIT_OK if report["passed"] else EXIT_RUNTIME


def cmd_eval(args) -> int:
    from .evalkit import format_percent, load_run_logs, parse_task_spec, task_progress, task_success

    spec = parse_task_spec(args.task)
    runs = load_run_logs(args.runs)
    progress = task_progress(runs, spec)
    success = task_success(runs)
    print(f"task: {spec.name} ({spec.stage_count} stages, {len(runs)} runs)")
    print(f"avg task progress: {format_percent(progress)}")
    print(f"avg task success:  {format_percent(success)}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    from .streamproto import (
        MSG_AUDIO,
        MSG_HEARTBEAT,
        MSG_METADATA,
        MSG_PROPRIO,
        MSG_VIDEO,
        read_episode,
        sync_check,
    )

    names = {
        MSG_VIDEO: "video",
        MSG_AUDIO: "audio",
        MSG_PROPRIO: "proprio",
        MSG_METADATA: "metadata",
        MSG_HEARTBEAT: "heartbeat",
    }
    with read_episode(args.episode) as reader:
        print(f"episode: {args.episode}")
        print(f"session id:   {reader.header['session_id']}")
        print(f"config hash:  {reader.header['config_hash']}")
        print(f"recovered:    {reader.recovered} (skipped corrupt: {reader.skipped_corrupt})")
        total = 0
        first = last = None
        for msg_type, name in names.items():
            n = reader.count(msg_type)
            total += n
            print(f"  {name:10s} {n}")
            ts = reader.timestamps(msg_type)
            if ts:
                first = min(first, ts[0]) if first is not None else ts[0]
                last = max(last, ts[-1]) if last is not None else ts[-1]
        print(f"  total      {total}")
        if first is not None:
            print(f"time span: {first} .. {last} us ({(last - first) / 1e6:.3f} s)")
        try:
            drift = sync_check(reader.iter_arrival())
            print(f"max A/V drift: {drift} us")
        except DomainError:
            print("max A/V drift: n/a (missing stream type)")
        print(f"seq gaps: {reader.seq_gap_count()}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    handlers = {
        "optics-report": cmd_optics_report,
        "simulate": cmd_simulate,
        "wear": cmd_wear,
        "eval": cmd_eval,
        "inspect": cmd_inspect,
    }
    try:
        return handlers[args.command](args)
    except (ConfigurationError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, FramingError, CorruptionError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
