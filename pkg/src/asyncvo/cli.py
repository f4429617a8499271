"""Command-line entry point: ``asyncvo simulate | run | eval``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import formats
from .config import RunConfig, load_config
from .errors import (DegenerateConfiguration, FilterDivergence, InvalidConfig, NegativeDt, NoOverlap,
                     TrackFormatError)
from .evaluation import ape_sim3
from .odometry import AsyncOdometry
from .simulator import generate

logger = logging.getLogger("asyncvo")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        sim = cfg.simulator.model_copy(update={"seed": args.seed})
        cfg = cfg.model_copy(update={"simulator": sim})
    return cfg


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = _outdir(args.out)
    t0 = time.perf_counter()
    sim = generate(cfg.simulator)
    formats.write_tracks(sim.messages, out / "tracks.txt")
    formats.write_trajectory(sim.ground_truth, out / "groundtruth.txt")
    formats.write_landmarks(sim.tracks, out / "landmarks.txt")
    logger.info("simulated %d messages (%d tracks) in %.2fs -> %s",
                len(sim.messages), len(sim.tracks), time.perf_counter() - t0, out)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _config(args)
    out = _outdir(args.out)
    odo = AsyncOdometry(cfg)
    t0 = time.perf_counter()
    n = 0
    try:
        for msg in formats.iter_tracks(args.tracks):
            odo.process(msg)
            n += 1
    finally:
        # whatever was estimated before an abort is still written out
        formats.write_trajectory(odo.trajectory(), out / "trajectory.txt")
        formats.write_jsonl(odo.events, out / "events.jsonl")
        with (out / "state_dim.txt").open("w") as fh:
            fh.write("# t landmarks clones dim\n")
            for t, m, k in odo.timeline:
                fh.write(f"{t:.6f} {m} {k} {9 + 3 * m + 6 * k}\n")
    if not odo.initialized:
        logger.warning("stream ended after %d messages before initialization; no trajectory samples", n)
    else:
        logger.info("processed %d messages in %.2fs; %s", n, time.perf_counter() - t0, odo.stats)
    return EXIT_OK


def cmd_eval(args) -> int:
    out = _outdir(args.out)
    est = formats.read_trajectory(args.est)
    ref = formats.read_trajectory(args.ref)
    init_time = None
    if args.events:
        inits = [e for e in formats.read_jsonl(args.events) if e.get("type") == "initialization"]
        init_time = inits[0]["t"] if inits else None
    rep = ape_sim3(est, ref, args.max_dt)
    metrics = rep.to_dict()
    metrics["initialization_t"] = init_time
    formats.write_json(metrics, out / "metrics.json")
    formats.write_table(["t", "ape_m", "est_x", "est_y", "est_z", "ref_x", "ref_y", "ref_z"],
                        _residual_rows(rep), out / "residuals.txt")
    if not args.no_plots:
        from .plotting import plot_ape, plot_trajectory
        plot_trajectory(rep, out / "trajectory.png", init_time)
        plot_ape(rep, out / "ape.png", init_time)
    print(f"mean_ape_m={rep.mean:.6f} rmse_ape_m={rep.rmse:.6f} samples={rep.count} scale={rep.alignment.scale:.6f}")
    return EXIT_OK


def _residual_rows(rep):
    est, ref = rep.aligned.p[rep.est_index], rep.reference.p[rep.ref_index]
    for t, r, e, g in zip(rep.times, rep.residuals, est, ref):
        yield (float(t), float(r), *map(float, e), *map(float, g))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration (defaults if omitted)")
    common.add_argument("--seed", type=int, help="override simulator.seed")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="asyncvo", description="Asynchronous monocular visual odometry.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    s = sub.add_parser("simulate", parents=[common], help="generate a synthetic track stream")
    s.set_defaults(func=cmd_simulate)
    r = sub.add_parser("run", parents=[common], help="run the filter over a track stream")
    r.add_argument("--tracks", required=True)
    r.set_defaults(func=cmd_run)
    e = sub.add_parser("eval", parents=[common], help="Sim(3)-aligned APE against a reference")
    e.add_argument("--est", required=True)
    e.add_argument("--ref", required=True)
    e.add_argument("--events", help="events.jsonl from `run`, used to mark initialization")
    e.add_argument("--max-dt", type=float, default=0.01, help="association tolerance in seconds")
    e.add_argument("--no-plots", action="store_true")
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InvalidConfig as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except FilterDivergence as err:
        print(f"filter diverged: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    except (TrackFormatError, NoOverlap, DegenerateConfiguration, NegativeDt, OSError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
