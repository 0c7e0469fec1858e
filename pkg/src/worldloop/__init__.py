"""Closed-loop benchmark toolkit for action-conditioned world models.

A deterministic procedural simulator acts as ground-truth oracle; episodes
are frame-aligned records of actions, poses, and rendered frames; the
metric suite scores memory consistency, generated-scene consistency, action
accuracy (Sim(3)-aligned RPE), and action-space generalization.
"""

from .actions import (
    ActionPrimitive,
    ActionSpaceConfig,
    ActionVector,
    Pose,
    apply_sequence,
    inverse,
    preset,
    step_pose,
)
from .dataset import DatasetManifest, GenConfig, gen_dataset, read_manifest
from .episodes import (
    Episode,
    MirrorPath,
    gen_mirror_paths,
    gen_revisit_loop,
    read_episode,
    record_episode,
    write_episode,
)
from .evaluate import EvaluationReport, MetricConfig, evaluate
from .metrics import (
    MetricReport,
    aggregate_report,
    generated_scene_consistency,
    long_context_memory,
    mse_frames,
)
from .poses import (
    PoseTrajectory,
    RpeResult,
    Sim3Transform,
    apply_alignment,
    read_tum,
    rpe,
    umeyama_align,
    write_tum,
)
from .render import Frame, Perspective, render, render_third_person, third_person_camera
from .worldgen import World, WorldSpec, build_world, resolve_collision

__version__ = "0.1.0"
