"""``roomnav`` command line. Exit codes: 0 ok, 1 validation failure, 2 I/O failure."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import render
from .belief import extract_crop
from .episodes import read_dataset, read_dataset_meta, sample_episode, write_dataset
from .errors import RoomNavError, ValidationError
from .harness import EvalTable, score_episode
from .nav import VARIANTS, AgentConfig, TrajectoryLog, run_agent
from .priors import align_and_accumulate, load_model, save_model, train_prior
from .sim import Pose, step
from .world import ROOM_TYPES, GenParams, generate_house, layout_hash, load_layout, save_layout

EXIT_OK, EXIT_VALIDATION, EXIT_IO = 0, 1, 2
log = logging.getLogger("roomnav")


def load_houses(directory) -> dict:
    """House id (file stem) -> grid for every ``*.json`` layout in ``directory``."""
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"no such directory: {d}")
    return {p.stem: load_layout(p.read_bytes()) for p in sorted(d.glob("*.json"))}


def cmd_gen_houses(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.n):
        params = GenParams(rng_seed=args.seed + i, house_extent=tuple(args.extent))
        (out / f"house_{args.seed + i:06d}.json").write_bytes(save_layout(generate_house(params)))
    return EXIT_OK


def cmd_gen_episodes(args) -> int:
    houses = load_houses(args.houses)
    if not houses:
        raise ValidationError(f"no layouts in {args.houses}")
    ids = sorted(houses)
    rngs = {hid: np.random.default_rng([args.seed, k]) for k, hid in enumerate(ids)}
    episodes = []
    for i in range(args.n):
        hid = ids[i % len(ids)]
        episodes.append(sample_episode(houses[hid], rngs[hid], house_id=hid))
    Path(args.out).write_bytes(write_dataset(episodes, {"houses": Path(args.houses).as_posix(), "seed": args.seed}))
    return EXIT_OK


def cmd_train_priors(args) -> int:
    corpus = list(load_houses(args.corpus).values())
    model = train_prior(corpus, alpha=args.alpha, window_m=args.window)
    if model.skipped:
        log.warning("%d corpus houses had no kitchen and were left out of the aligned fields", model.skipped)
    Path(args.out).write_bytes(save_model(model))
    return EXIT_OK


def _dataset(args):
    data = Path(args.dataset).read_bytes()
    houses_dir = args.houses or read_dataset_meta(data).get("houses")
    if not houses_dir:
        raise ValidationError("dataset names no house directory; pass --houses")
    houses = load_houses(houses_dir)
    return read_dataset(data, houses), houses


def cmd_run(args) -> int:
    episodes, houses = _dataset(args)
    prior = load_model(Path(args.prior).read_bytes()) if args.prior else None
    config = AgentConfig()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, ep in enumerate(episodes):
        grid = houses[ep.house_id]
        traj = run_agent(grid, ep, prior, config, args.variant)
        traj.episode_index = i
        stem = f"ep{i:05d}_{args.variant}"
        (out / f"{stem}.log").write_text(traj.to_text())
        if args.render:
            points = [(s.x, s.y) for s in traj.steps]
            (out / f"{stem}_world.ppm").write_bytes(render.ppm_bytes(render.upscale(render.world_image(grid, points), 4)))
            final = traj.steps[-1]
            end, _ = step(grid, Pose(final.x, final.y, final.heading), final.action)
            crop = extract_crop(grid, end, ep.target_type)
            (out / f"{stem}_crop.ppm").write_bytes(render.ppm_bytes(render.upscale(render.crop_image(crop.labels), 3)))
    return EXIT_OK


def cmd_eval(args) -> int:
    episodes, houses = _dataset(args)
    paths = sorted(Path(args.logs).glob("*.log"))
    if not paths:
        raise ValidationError(f"no trajectory logs in {args.logs}")
    rows, logs = [], {}
    for p in paths:
        traj = TrajectoryLog.from_text(p.read_text())
        i = traj.episode_index
        if not 0 <= i < len(episodes):
            raise ValidationError(f"{p.name}: episode index {i} not in the dataset")
        ep = episodes[i]
        rows.append(score_episode(traj, ep, houses[ep.house_id], i))
        logs[(i, traj.variant)] = traj
    table = EvalTable(rows, logs)
    sys.stdout.write(table.to_text())
    if args.csv:
        Path(args.csv).write_text(table.to_csv())
    return EXIT_OK


def cmd_fig2(args) -> int:
    corpus = list(load_houses(args.corpus).values())
    fields, used, skipped = align_and_accumulate(corpus)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for t, name in enumerate(ROOM_TYPES):
        img = render.upscale(render.heatmap_image(fields[t], vmax=1.0), 4)
        (out / f"aligned_{name}.ppm").write_bytes(render.ppm_bytes(img))
    sys.stdout.write(f"aligned {used} houses, skipped {skipped} without a kitchen\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="roomnav", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-houses", help="generate house layouts")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--extent", type=float, nargs=2, default=list(GenParams().house_extent), metavar=("W", "H"))
    g.set_defaults(func=cmd_gen_houses)

    e = sub.add_parser("gen-episodes", help="sample an episode dataset")
    e.add_argument("--houses", required=True)
    e.add_argument("--n", type=int, required=True)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_gen_episodes)

    t = sub.add_parser("train-priors", help="learn a prior model from a corpus")
    t.add_argument("--corpus", required=True)
    t.add_argument("--alpha", type=float, default=1.0)
    t.add_argument("--window", type=float, default=13.0, help="offset window half-width in meters")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train_priors)

    r = sub.add_parser("run", help="run one agent variant over a dataset")
    r.add_argument("--dataset", required=True)
    r.add_argument("--variant", choices=VARIANTS, required=True)
    r.add_argument("--prior")
    r.add_argument("--houses")
    r.add_argument("--out", required=True)
    r.add_argument("--no-render", dest="render", action="store_false")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("eval", help="score trajectory logs and print the ladder table")
    v.add_argument("--logs", required=True)
    v.add_argument("--dataset", required=True)
    v.add_argument("--houses")
    v.add_argument("--csv")
    v.set_defaults(func=cmd_eval)

    f = sub.add_parser("fig2", help="kitchen-aligned room heatmaps")
    f.add_argument("--corpus", required=True)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fig2)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "n", 0) is not None and getattr(args, "n", 0) < 0:
            raise ValidationError("--n must be non-negative")
        return args.func(args)
    except (RoomNavError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())


__all__ = ["build_parser", "layout_hash", "load_houses", "main"]
