#!/usr/bin/env python3
"""Generate the desk-scale dataset and evaluate the oracle, timing both.

This is the oracle-zero acceptance run as a standalone experiment:
every core metric must come back exactly 0.0.

    python scripts/run_oracle_benchmark.py --out /tmp/desk_bench
"""

import argparse
import json
import shutil
import time
from pathlib import Path

from worldloop.adapters import StreamingAdapter
from worldloop.dataset import GenConfig, gen_dataset
from worldloop.evaluate import evaluate
from worldloop.refmodels import OracleModel


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="/tmp/worldloop_desk", help="dataset directory")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--fresh", action="store_true", help="delete --out first")
    args = ap.parse_args()

    root = Path(args.out)
    if args.fresh and root.exists():
        shutil.rmtree(root)

    t0 = time.monotonic()
    manifest = gen_dataset(GenConfig(out_dir=str(root), seed=args.seed))
    t_gen = time.monotonic() - t0
    print(f"generated {len(manifest.episodes)} episodes in {t_gen:.1f}s")

    t0 = time.monotonic()
    report = evaluate(root, StreamingAdapter(OracleModel()))
    t_eval = time.monotonic() - t0
    print(f"evaluated oracle in {t_eval:.1f}s\n")
    print(report.format_text())

    zeros = all(
        v == 0.0
        for rep in report.reports.values()
        for v in rep.scores.values()
    )
    print(f"all core metrics exactly zero: {zeros}")
    print(f"total wall time: {t_gen + t_eval:.1f}s")
    with open(root.parent / (root.name + "_oracle_report.json"), "w") as f:
        f.write(report.to_json())


if __name__ == "__main__":
    main()
