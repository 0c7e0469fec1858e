#!/usr/bin/env python3
"""Render a first- and third-person sample frame for every scene category.

    python scripts/render_gallery.py --out /tmp/gallery --seed 7
"""

import argparse
from pathlib import Path

from worldloop.actions import Pose
from worldloop.render import render, render_third_person
from worldloop.worldgen import CATEGORIES, WorldSpec, build_world


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="/tmp/worldloop_gallery")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--resolution", default="512x384")
    args = ap.parse_args()

    w, h = (int(v) for v in args.resolution.split("x"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    for category in CATEGORIES:
        world = build_world(WorldSpec(seed=args.seed, category=category))
        pose = Pose(0.0, 0.0, world.eye_level(0.0, 0.0), yaw=35.0, pitch=-4.0)
        render(world, pose, (w, h)).save_png(out / f"{category}_first.png")
        render_third_person(world, pose, (w, h)).save_png(out / f"{category}_third.png")
        print(f"{category}: {len(world.landmarks)} landmarks")
    print(f"wrote {2 * len(CATEGORIES)} frames to {out}")


if __name__ == "__main__":
    main()
