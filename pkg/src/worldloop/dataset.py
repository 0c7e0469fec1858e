"""Benchmark dataset generation: episodes + manifest, reproducible from one seed.

The desk-scale default layout is 16 shared-action test episodes (8 scene
categories x 2 perspectives), 10 generalization episodes (5 step-size
presets x 2 perspectives), and 10 mirror probes (one per symmetric path,
perspectives alternating). Every per-episode seed derives from the dataset
seed by hashing the episode name, so regeneration is byte-identical and
independent of worker scheduling.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .actions import PRESET_NAMES, Pose, apply_sequence, preset
from .episodes import (
    SEGMENT_FRAMES,
    gen_mirror_paths,
    gen_revisit_loop,
    record_episode,
    simulate_poses,
    write_episode,
)
from .errors import DatasetError, RevisitGenerationError
from .render import Perspective
from .worldgen import CATEGORIES, WorldSpec, build_world

TOOLKIT_VERSION = "0.1.0"
SUITES = ("shared-action", "generalization", "mirror")
SPLITS = ("train", "test")
_MIRROR_RETRIES = 40


@dataclass(frozen=True)
class GenConfig:
    out_dir: str
    seed: int = 7
    resolution: tuple = (256, 192)
    memory_len: int = 48
    predict_len: int = 96
    fps: int = 24
    extent: float = 12000.0
    shared_preset: str = "mid"
    shared_test_per_cell: int = 1
    shared_train_per_cell: int = 0
    categories: tuple = CATEGORIES
    perspectives: tuple = ("first", "third")
    generalization_presets: tuple = PRESET_NAMES
    mirror_path_ids: tuple = tuple(range(1, 11))
    workers: int = 0  # 0 = up to 4 processes


@dataclass(frozen=True)
class EpisodeEntry:
    name: str
    path: str
    suite: str
    split: str
    category: str
    perspective: str
    preset: str
    seed: int
    memory_len: int
    predict_len: int
    path_id: int | None = None


@dataclass(frozen=True)
class DatasetManifest:
    generation_seed: int
    toolkit_version: str
    resolution: tuple
    fps: int
    shared_preset: str
    episodes: tuple = field(default_factory=tuple)

    def entries(self, suite: str | None = None, split: str | None = None,
                perspective: str | None = None):
        out = self.episodes
        if suite is not None:
            out = [e for e in out if e.suite == suite]
        if split is not None:
            out = [e for e in out if e.split == split]
        if perspective is not None:
            out = [e for e in out if e.perspective == perspective]
        return list(out)

    def validate(self) -> None:
        shared_presets = {e.preset for e in self.entries(suite="shared-action")}
        if len(shared_presets) > 1:
            raise DatasetError(
                f"shared-action suite must use one preset, found {sorted(shared_presets)}"
            )
        gen_presets = {e.preset for e in self.entries(suite="generalization")}
        if gen_presets and gen_presets != set(PRESET_NAMES):
            raise DatasetError(
                f"generalization suite must cover all presets {PRESET_NAMES}, "
                f"found {sorted(gen_presets)}"
            )
        universe = sorted({e.category for e in self.episodes})
        for suite in SUITES:
            for split in SPLITS:
                for persp in ("first", "third"):
                    cell = self.entries(suite=suite, split=split, perspective=persp)
                    if not cell:
                        continue
                    counts = {c: 0 for c in universe}
                    for e in cell:
                        counts[e.category] += 1
                    if max(counts.values()) - min(counts.values()) > 1:
                        raise DatasetError(
                            f"category imbalance in ({suite}, {split}, {persp}): {counts}"
                        )

    def to_json_dict(self) -> dict:
        return {
            "generation_seed": self.generation_seed,
            "toolkit_version": self.toolkit_version,
            "resolution": list(self.resolution),
            "fps": self.fps,
            "shared_preset": self.shared_preset,
            "episodes": [
                {k: v for k, v in asdict(e).items() if v is not None}
                for e in self.episodes
            ],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "DatasetManifest":
        return cls(
            generation_seed=d["generation_seed"],
            toolkit_version=d["toolkit_version"],
            resolution=tuple(d["resolution"]),
            fps=d["fps"],
            shared_preset=d["shared_preset"],
            episodes=tuple(
                EpisodeEntry(**{**{"path_id": None}, **e}) for e in d["episodes"]
            ),
        )


def write_manifest(manifest: DatasetManifest, root) -> Path:
    path = Path(root) / "manifest.json"
    with open(path, "w") as f:
        json.dump(manifest.to_json_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def read_manifest(root) -> DatasetManifest:
    path = Path(root)
    if path.is_dir():
        path = path / "manifest.json"
    if not path.is_file():
        raise DatasetError(f"no manifest.json at {path}")
    manifest = DatasetManifest.from_json_dict(json.loads(path.read_text()))
    manifest.validate()
    return manifest


def _derive_seed(root_seed: int, name: str) -> int:
    digest = hashlib.sha256(f"{root_seed}|{name}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1  # keep it positive


@dataclass(frozen=True)
class _Job:
    entry: EpisodeEntry
    extent: float
    resolution: tuple
    fps: int


def _loop_segments(n_actions: int) -> int:
    return max(1, math.ceil(n_actions / (2 * SEGMENT_FRAMES)))


def _start_pose(world, ep_seed: int) -> Pose:
    rng = random.Random(ep_seed ^ 0x5EED)
    return Pose(0.0, 0.0, world.eye_level(0.0, 0.0), yaw=rng.uniform(0.0, 360.0))


def _clear_of_landmarks(world, pose: Pose, margin: float = 60.0) -> bool:
    for b in world.boxes:
        if (b[0] - margin < pose.x < b[3] + margin
                and b[1] - margin < pose.y < b[4] + margin
                and b[2] < pose.z < b[5]):
            return False
    return True


def _mirror_actions(world, cfg, memory_len: int, path, ep_seed: int):
    """Memory-walk prefix + mirror legs, validated to retrace under collision.

    Long legs (24 frames x delta_p, twice for composites) may not fit from
    the spawn point, so each attempt picks a yaw, simulates the whole action
    list in free space, and shifts the start so the path's bounding box is
    centered in the world; landmark collisions are handled by re-drawing.
    Returns (actions, start).
    """
    fwd = list(path.forward_actions)
    rev = list(path.reverse_actions)
    leg = len(fwd)
    t = memory_len
    for attempt in range(_MIRROR_RETRIES):
        rng = random.Random(ep_seed * 1000003 + attempt)
        yaw = rng.uniform(0.0, 360.0)
        try:
            walk = gen_revisit_loop(
                seed=ep_seed + 7919 * (attempt + 1),
                segments=_loop_segments(t - 1), cfg=cfg,
            )
        except RevisitGenerationError:
            continue
        actions = walk[: t - 1] + fwd + rev

        free = apply_sequence(Pose(yaw=yaw), actions, cfg)
        xs = [0.0] + [p.x for p in free]
        ys = [0.0] + [p.y for p in free]
        half = max(max(xs) - min(xs), max(ys) - min(ys)) / 2.0
        if half > world.extent - 250.0:
            continue  # this path cannot fit in the world at this step size
        sx = -(max(xs) + min(xs)) / 2.0
        sy = -(max(ys) + min(ys)) / 2.0
        start = Pose(sx, sy, world.eye_level(sx, sy), yaw=yaw)
        if not _clear_of_landmarks(world, start):
            continue

        poses = simulate_poses(world, start, actions, cfg)
        q = poses[t - 1:]
        if all(q[leg + j] == q[leg - j] for j in range(1, leg + 1)):
            return actions, start
    raise DatasetError(
        f"mirror path {path.path_id} would not retrace collision-free in world "
        f"{world.spec} after {_MIRROR_RETRIES} attempts"
    )


def _generate_one(job: _Job, out_root: str) -> str:
    entry = job.entry
    spec = WorldSpec(seed=entry.seed, category=entry.category, extent=job.extent)
    world = build_world(spec)
    cfg = preset(entry.preset)
    start = _start_pose(world, entry.seed)
    perspective = Perspective(entry.perspective)

    if entry.suite == "mirror":
        path = gen_mirror_paths()[entry.path_id - 1]
        actions, start = _mirror_actions(world, cfg, entry.memory_len, path, entry.seed)
    else:
        need = entry.memory_len + entry.predict_len - 1
        actions = gen_revisit_loop(
            seed=entry.seed, segments=_loop_segments(need), cfg=cfg,
            world=world, start=start,
        )
    episode = record_episode(
        world, cfg, perspective, actions,
        memory_len=entry.memory_len, predict_len=entry.predict_len,
        start=start, resolution=job.resolution, fps=job.fps,
    )
    write_episode(episode, Path(out_root) / entry.path)
    return entry.name


def _build_jobs(config: GenConfig) -> list:
    jobs = []

    def add(suite, split, category, perspective, preset_name, name, memory_len,
            predict_len, path_id=None):
        entry = EpisodeEntry(
            name=name, path=f"episodes/{name}", suite=suite, split=split,
            category=category, perspective=perspective, preset=preset_name,
            seed=_derive_seed(config.seed, name), memory_len=memory_len,
            predict_len=predict_len, path_id=path_id,
        )
        jobs.append(_Job(entry=entry, extent=config.extent,
                         resolution=tuple(config.resolution), fps=config.fps))

    for split, per_cell in (("test", config.shared_test_per_cell),
                            ("train", config.shared_train_per_cell)):
        for category in config.categories:
            for persp in config.perspectives:
                for i in range(per_cell):
                    add(
                        "shared-action", split, category, persp, config.shared_preset,
                        f"shared_{split}_{category}_{persp}_{i:02d}",
                        config.memory_len, config.predict_len,
                    )

    for pi, preset_name in enumerate(config.generalization_presets):
        for persp in config.perspectives:
            category = config.categories[(pi + 3) % len(config.categories)]
            add(
                "generalization", "test", category, persp, preset_name,
                f"gen_{preset_name}_{category}_{persp}",
                config.memory_len, config.predict_len,
            )

    cell_counter = {p: 0 for p in config.perspectives}
    paths = {p.path_id: p for p in gen_mirror_paths()}
    for i, path_id in enumerate(config.mirror_path_ids):
        persp = config.perspectives[i % len(config.perspectives)]
        category = config.categories[cell_counter[persp] % len(config.categories)]
        cell_counter[persp] += 1
        leg = paths[path_id].leg_frames
        add(
            "mirror", "test", category, persp, config.shared_preset,
            f"mirror_p{path_id:02d}_{category}_{persp}",
            config.memory_len, 2 * leg, path_id=path_id,
        )
    return jobs


def gen_dataset(config: GenConfig) -> DatasetManifest:
    """Generate all episodes and the manifest under config.out_dir."""
    root = Path(config.out_dir)
    if root.exists() and any(root.iterdir()):
        raise DatasetError(f"output directory {root} is not empty")
    (root / "episodes").mkdir(parents=True, exist_ok=True)

    jobs = _build_jobs(config)
    names = [j.entry.name for j in jobs]
    if len(set(names)) != len(names):
        raise DatasetError("internal: duplicate episode names")

    workers = config.workers or min(4, __import__("os").cpu_count() or 1)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            list(pool.map(_generate_one, jobs, [str(root)] * len(jobs), chunksize=1))
    else:
        for job in jobs:
            _generate_one(job, str(root))

    manifest = DatasetManifest(
        generation_seed=config.seed,
        toolkit_version=TOOLKIT_VERSION,
        resolution=tuple(config.resolution),
        fps=config.fps,
        shared_preset=config.shared_preset,
        episodes=tuple(sorted((j.entry for j in jobs), key=lambda e: e.name)),
    )
    manifest.validate()
    write_manifest(manifest, root)
    return manifest
