"""Frame-aligned episodes: construction, revisit/mirror trajectories, disk format.

Episode directory layout (all text files UTF-8, floats via repr, lossless):

    meta.json        world spec, action-space config, perspective, splits,
                     start pose, per-frame PNG sha256 digests
    actions.jsonl    one JSON-encoded ActionVector text form per line
    poses.tum        camera ground truth (TUM format)
    char_poses.tum   character ground truth (third person only)
    frames/%06d.png  rendered frames

``actions[i]`` maps frame i to frame i+1. Reading replays the action log
through the kinematics and collision rules and demands bit-equality with the
stored pose files, so both disk corruption and kinematics drift surface as
integrity errors.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .actions import (
    ActionPrimitive,
    ActionSpaceConfig,
    ActionVector,
    Pose,
    apply_sequence,
    snap_angle,
    step_pose,
)
from .errors import EpisodeIntegrityError, EpisodeStructureError, RevisitGenerationError
from .poses import PoseTrajectory, quat_from_yaw_pitch, read_tum, write_tum
from .render import Frame, Perspective, render, third_person_camera
from .worldgen import World, WorldSpec, build_world, resolve_collision

SEGMENT_FRAMES = 24
FORMAT_VERSION = 1
DEFAULT_MEMORY_LEN = 48
DEFAULT_PREDICT_LEN = 96


@dataclass(frozen=True)
class MirrorPath:
    """Forward action leg plus its exact reversed-inverse leg.

    Forward legs are runs of one primitive held for 24 frames each; the
    reverse leg is the element-wise inverse in reversed order, so an ideal
    generator revisits every forward pose.
    """

    path_id: int
    forward_actions: tuple
    reverse_actions: tuple

    def __post_init__(self):
        fwd, rev = self.forward_actions, self.reverse_actions
        if len(fwd) != len(rev):
            raise ValueError("forward and reverse legs must have equal length")
        if len(fwd) == 0 or len(fwd) % SEGMENT_FRAMES != 0:
            raise ValueError(f"leg length must be a positive multiple of {SEGMENT_FRAMES}")
        for i in range(0, len(fwd), SEGMENT_FRAMES):
            seg = fwd[i:i + SEGMENT_FRAMES]
            if any(a != seg[0] for a in seg):
                raise ValueError("each action segment must hold one vector for 24 frames")
        expected = tuple(a.inverse() for a in reversed(fwd))
        if rev != expected:
            raise ValueError("reverse leg is not the reversed element-wise inverse")

    @property
    def leg_frames(self) -> int:
        return len(self.forward_actions)


def _leg(*prims: ActionPrimitive) -> tuple:
    out = []
    for p in prims:
        out.extend([ActionVector.of(p)] * SEGMENT_FRAMES)
    return tuple(out)


def _mirror(path_id: int, *prims: ActionPrimitive) -> MirrorPath:
    fwd = _leg(*prims)
    return MirrorPath(path_id, fwd, tuple(a.inverse() for a in reversed(fwd)))


def gen_mirror_paths() -> list:
    """The fixed 10-path probe set: 4 pure translations, 4 pure rotations,
    2 composite L-shaped move/turn/move paths. Path 5 is the left-then-right
    translation."""
    P = ActionPrimitive
    return [
        _mirror(1, P.W),
        _mirror(2, P.S),
        _mirror(3, P.YAW_LEFT),
        _mirror(4, P.YAW_RIGHT),
        _mirror(5, P.A),
        _mirror(6, P.D),
        _mirror(7, P.PITCH_UP),
        _mirror(8, P.PITCH_DOWN),
        _mirror(9, P.W, P.YAW_LEFT, P.W),
        _mirror(10, P.W, P.YAW_RIGHT, P.W),
    ]


def simulate_poses(world: World, start: Pose, actions, cfg: ActionSpaceConfig) -> list:
    """Kinematics + stop-on-contact collision; returns len(actions)+1 poses."""
    poses = [start]
    cur = start
    for a in actions:
        nxt = step_pose(cur, a, cfg)
        pos = resolve_collision(world, cur.position, nxt.position)
        cur = Pose(pos[0], pos[1], pos[2], nxt.yaw, nxt.pitch) if pos != nxt.position else nxt
        poses.append(cur)
    return poses


_ALL_PRIMS = list(ActionPrimitive)


def gen_revisit_loop(seed: int, segments: int, cfg: ActionSpaceConfig,
                     world: World | None = None, start: Pose | None = None,
                     max_retries: int = 64) -> list:
    """Random single-primitive walk (24-frame runs) plus its reversed inverse.

    In free space the loop closes bit-exactly by construction (pitch segments
    are chosen so the clamp never engages). With a world, the loop is
    simulated under collision and re-drawn until closure holds.
    """
    if segments < 1:
        raise ValueError(f"segments must be >= 1, got {segments}")
    rng = random.Random(seed)
    if start is None:
        start = Pose(0.0, 0.0, world.eye_level(0.0, 0.0) if world else 0.0)
    dr = snap_angle(cfg.delta_r)

    for _ in range(max_retries):
        prims = []
        pitch_acc = start.pitch
        for _ in range(segments):
            while True:
                p = rng.choice(_ALL_PRIMS)
                if p is ActionPrimitive.PITCH_UP or p is ActionPrimitive.PITCH_DOWN:
                    step = SEGMENT_FRAMES * dr * (1 if p is ActionPrimitive.PITCH_UP else -1)
                    if abs(pitch_acc + step) > 85.0:
                        continue  # would saturate the clamp and break closure
                    pitch_acc += step
                prims.append(p)
                break
        forward = _leg(*prims)
        actions = list(forward) + [a.inverse() for a in reversed(forward)]
        if world is None:
            end = apply_sequence(start, actions, cfg)[-1]
        else:
            end = simulate_poses(world, start, actions, cfg)[-1]
        if end == start:
            return actions
    raise RevisitGenerationError(
        f"no closed revisit loop after {max_retries} attempts"
        + (f" in world {world.spec}" if world else "")
    )


@dataclass(frozen=True)
class Episode:
    """Frame-aligned record with a declared memory/prediction split.

    frames[i] is observed at camera_poses[i]; actions[i] maps frame i to
    frame i+1; the first memory_len frames are context, and the predict_len
    frames starting at index memory_len are the prediction targets.
    """

    world_spec: WorldSpec
    cfg: ActionSpaceConfig
    perspective: Perspective
    actions: tuple
    camera_poses: tuple
    character_poses: tuple | None
    frames: tuple
    memory_len: int
    predict_len: int
    fps: int = 24
    resolution: tuple = (256, 192)

    def __post_init__(self):
        n = len(self.actions)
        if len(self.camera_poses) != n + 1:
            raise ValueError(f"{n} actions need {n + 1} camera poses")
        if len(self.frames) != n + 1:
            raise ValueError(f"{n} actions need {n + 1} frames")
        if self.memory_len < 1 or self.predict_len < 1:
            raise ValueError("memory_len and predict_len must be >= 1")
        if self.memory_len + self.predict_len > n + 1:
            raise ValueError(
                f"memory_len + predict_len = {self.memory_len + self.predict_len} "
                f"exceeds frame count {n + 1}"
            )
        if (self.character_poses is not None) != (self.perspective is Perspective.THIRD):
            raise ValueError("character_poses present iff third person")
        w, h = self.resolution
        for f in self.frames:
            if (f.width, f.height) != (w, h):
                raise ValueError("frame resolution disagrees with episode resolution")

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    @property
    def memory_frames(self) -> tuple:
        return self.frames[: self.memory_len]

    @property
    def gt_prediction_frames(self) -> tuple:
        return self.frames[self.memory_len: self.memory_len + self.predict_len]

    @property
    def prediction_actions(self) -> tuple:
        """The predict_len actions that drive frames T .. T+k-1."""
        t = self.memory_len
        return self.actions[t - 1: t - 1 + self.predict_len]

    @property
    def prediction_poses(self) -> tuple:
        return self.camera_poses[self.memory_len: self.memory_len + self.predict_len]


def record_episode(world: World, cfg: ActionSpaceConfig, perspective: Perspective,
                   actions, memory_len: int = DEFAULT_MEMORY_LEN,
                   predict_len: int = DEFAULT_PREDICT_LEN, start: Pose | None = None,
                   resolution: tuple = (256, 192), fps: int = 24) -> Episode:
    """Simulate, render, and split a full episode. Pure given its arguments."""
    actions = tuple(actions)
    if len(actions) < memory_len + predict_len - 1:
        raise ValueError(
            f"need at least memory_len+predict_len-1 = {memory_len + predict_len - 1} "
            f"actions, got {len(actions)}"
        )
    if start is None:
        start = Pose(0.0, 0.0, world.eye_level(0.0, 0.0))
    if not world.contains(start.x, start.y):
        raise ValueError(f"start pose outside world bounds at frame 0: {start}")

    agent_poses = simulate_poses(world, start, actions, cfg)
    if perspective is Perspective.THIRD:
        camera_poses = tuple(third_person_camera(p, world) for p in agent_poses)
        frames = tuple(
            render(world, cam, resolution, i, _avatar=agent)
            for i, (cam, agent) in enumerate(zip(camera_poses, agent_poses))
        )
        character_poses = tuple(agent_poses)
    else:
        camera_poses = tuple(agent_poses)
        frames = tuple(render(world, p, resolution, i) for i, p in enumerate(agent_poses))
        character_poses = None

    return Episode(
        world_spec=world.spec, cfg=cfg, perspective=perspective, actions=actions,
        camera_poses=camera_poses, character_poses=character_poses, frames=frames,
        memory_len=memory_len, predict_len=predict_len, fps=fps, resolution=tuple(resolution),
    )


def pose_trajectory(poses, fps: int, start_index: int = 0) -> PoseTrajectory:
    """Pose list -> timestamped trajectory (t = frame_index / fps)."""
    times = np.array([(start_index + i) / fps for i in range(len(poses))])
    trans = np.array([[p.x, p.y, p.z] for p in poses], dtype=np.float64).reshape(-1, 3)
    quats = np.array([quat_from_yaw_pitch(p.yaw, p.pitch) for p in poses]).reshape(-1, 4)
    return PoseTrajectory(times=times, translations=trans, quaternions=quats)


def _pose_dict(p: Pose) -> dict:
    return {"x": p.x, "y": p.y, "z": p.z, "yaw": p.yaw, "pitch": p.pitch}


def write_episode(episode: Episode, directory) -> Path:
    directory = Path(directory)
    if directory.exists() and any(directory.iterdir()):
        raise EpisodeStructureError(f"refusing to write into non-empty {directory}")
    (directory / "frames").mkdir(parents=True, exist_ok=True)

    digests = []
    for i, frame in enumerate(episode.frames):
        path = directory / "frames" / f"{i:06d}.png"
        frame.save_png(path)
        digests.append(hashlib.sha256(path.read_bytes()).hexdigest())

    with open(directory / "actions.jsonl", "w") as f:
        for a in episode.actions:
            f.write(json.dumps(a.text) + "\n")

    write_tum(pose_trajectory(episode.camera_poses, episode.fps), directory / "poses.tum")
    if episode.character_poses is not None:
        write_tum(
            pose_trajectory(episode.character_poses, episode.fps),
            directory / "char_poses.tum",
        )

    start = episode.character_poses[0] if episode.character_poses else episode.camera_poses[0]
    meta = {
        "format_version": FORMAT_VERSION,
        "world": {
            "seed": episode.world_spec.seed,
            "category": episode.world_spec.category,
            "extent": episode.world_spec.extent,
        },
        "action_space": {
            "name": episode.cfg.name,
            "delta_p": episode.cfg.delta_p,
            "delta_r": episode.cfg.delta_r,
        },
        "perspective": episode.perspective.value,
        "memory_len": episode.memory_len,
        "predict_len": episode.predict_len,
        "fps": episode.fps,
        "resolution": list(episode.resolution),
        "start_pose": _pose_dict(start),
        "frame_sha256": digests,
    }
    with open(directory / "meta.json", "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    return directory


def _compare_trajectories(stored: PoseTrajectory, derived: PoseTrajectory, label: str):
    n = min(len(stored), len(derived))
    for i in range(n):
        same = (
            stored.times[i] == derived.times[i]
            and np.array_equal(stored.translations[i], derived.translations[i])
            and np.array_equal(stored.quaternions[i], derived.quaternions[i])
        )
        if not same:
            raise EpisodeIntegrityError(
                f"replay mismatch at frame {i}: stored {label} pose differs from "
                f"the action-log replay"
            )
    if len(stored) != len(derived):
        raise EpisodeIntegrityError(
            f"{label} trajectory has {len(stored)} samples, replay produced {len(derived)}"
        )


def read_episode(directory, verify_frames: bool = False) -> Episode:
    """Load and validate an episode directory.

    Always replays the action log and requires bit-equality with the stored
    pose files; frame files are checked against their recorded digests. With
    verify_frames=True every frame is additionally re-rendered and compared
    byte-for-byte.
    """
    directory = Path(directory)
    meta_path = directory / "meta.json"
    if not meta_path.is_file():
        raise EpisodeStructureError(f"missing meta.json in {directory}")
    try:
        meta = json.loads(meta_path.read_text())
        spec = WorldSpec(
            seed=meta["world"]["seed"],
            category=meta["world"]["category"],
            extent=meta["world"]["extent"],
        )
        cfg = ActionSpaceConfig(
            delta_p=meta["action_space"]["delta_p"],
            delta_r=meta["action_space"]["delta_r"],
            name=meta["action_space"]["name"],
        )
        perspective = Perspective(meta["perspective"])
        memory_len = int(meta["memory_len"])
        predict_len = int(meta["predict_len"])
        fps = int(meta["fps"])
        resolution = tuple(meta["resolution"])
        sp = meta["start_pose"]
        start = Pose(sp["x"], sp["y"], sp["z"], sp["yaw"], sp["pitch"])
        digests = meta["frame_sha256"]
    except (KeyError, ValueError, TypeError) as e:
        raise EpisodeStructureError(f"malformed meta.json in {directory}: {e}") from e

    actions_path = directory / "actions.jsonl"
    if not actions_path.is_file():
        raise EpisodeStructureError(f"missing actions.jsonl in {directory}")
    actions = []
    with open(actions_path) as f:
        for ln, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                actions.append(ActionVector.from_text(json.loads(line)))
            except (json.JSONDecodeError, ValueError) as e:
                raise EpisodeStructureError(f"actions.jsonl line {ln}: {e}") from e
    n = len(actions)

    if len(digests) != n + 1:
        raise EpisodeStructureError(
            f"meta lists {len(digests)} frame digests for {n + 1} frames"
        )

    world = build_world(spec)
    agent_poses = simulate_poses(world, start, actions, cfg)
    if perspective is Perspective.THIRD:
        camera_poses = tuple(third_person_camera(p, world) for p in agent_poses)
        character_poses = tuple(agent_poses)
    else:
        camera_poses = tuple(agent_poses)
        character_poses = None

    stored_cam = read_tum(directory / "poses.tum")
    _compare_trajectories(stored_cam, pose_trajectory(camera_poses, fps), "camera")
    if perspective is Perspective.THIRD:
        char_path = directory / "char_poses.tum"
        if not char_path.is_file():
            raise EpisodeStructureError(f"missing char_poses.tum in {directory}")
        _compare_trajectories(
            read_tum(char_path), pose_trajectory(character_poses, fps), "character"
        )

    frames = []
    for i in range(n + 1):
        fpath = directory / "frames" / f"{i:06d}.png"
        if not fpath.is_file():
            raise EpisodeStructureError(f"missing frame file {fpath.name}")
        blob = fpath.read_bytes()
        if hashlib.sha256(blob).hexdigest() != digests[i]:
            raise EpisodeIntegrityError(f"frame {fpath.name} fails its checksum")
        frame = Frame.load_png(fpath, frame_index=i)
        if (frame.width, frame.height) != resolution:
            raise EpisodeStructureError(
                f"frame {fpath.name} is {frame.width}x{frame.height}, "
                f"meta says {resolution[0]}x{resolution[1]}"
            )
        frames.append(frame)

    if verify_frames:
        for i, frame in enumerate(frames):
            if perspective is Perspective.THIRD:
                expect = render(world, camera_poses[i], resolution, i, _avatar=character_poses[i])
            else:
                expect = render(world, camera_poses[i], resolution, i)
            if expect.data != frame.data:
                raise EpisodeIntegrityError(
                    f"frame {i:06d} pixels differ from the oracle re-render"
                )

    return Episode(
        world_spec=spec, cfg=cfg, perspective=perspective, actions=tuple(actions),
        camera_poses=camera_poses, character_poses=character_poses, frames=tuple(frames),
        memory_len=memory_len, predict_len=predict_len, fps=fps, resolution=resolution,
    )
