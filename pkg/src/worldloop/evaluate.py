"""End-to-end evaluation: run a candidate over a dataset, aggregate a report.

Per suite: long-context memory on shared-action test episodes, generated
scene consistency on mirror probes (the model generates both legs; the
reverse leg is conditioned on the model's own forward output), action-space
generalization on the preset suite, and RPE from the model's believed
camera trajectory (reference models) or externally recovered TUM files
(pixel-only candidates). Per-episode failures are recorded and skipped, not
fatal; only a run with zero completed episodes errors out.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .adapters import WITH_MEMORY, build_request, run_request
from .dataset import TOOLKIT_VERSION, read_manifest
from .episodes import pose_trajectory, read_episode
from .errors import DatasetError, WorldLoopError
from .metrics import (
    MetricReport,
    aggregate_report,
    average_preset_scores,
    format_report_table,
    generated_scene_consistency,
    long_context_memory,
)
from .poses import apply_alignment, associate, read_tum, rpe, umeyama_align


@dataclass(frozen=True)
class MetricConfig:
    rpe_delta: int = 1
    rpe_align: str = "auto"  # auto: align only externally-supplied trajectories
    rpe_max_dt: float | None = None
    external_poses_dir: str | None = None
    external_scores: str | None = None
    per_frame_timeout: float | None = None

    def __post_init__(self):
        if self.rpe_align not in ("auto", "on", "off"):
            raise ValueError(f"rpe_align must be auto/on/off, got {self.rpe_align!r}")


@dataclass(frozen=True)
class EpisodeFailure:
    episode: str
    stage: str
    error: str


@dataclass(frozen=True)
class EvaluationReport:
    model: str
    reports: dict = field(default_factory=dict)        # perspective -> MetricReport
    asg_per_preset: dict = field(default_factory=dict)  # perspective -> {preset: mean}
    episode_scores: dict = field(default_factory=dict)  # episode name -> {dim: value}
    failures: tuple = ()

    def to_json_dict(self) -> dict:
        return {
            "model": self.model,
            "toolkit_version": TOOLKIT_VERSION,
            "reports": {p: r.to_json_dict() for p, r in sorted(self.reports.items())},
            "asg_per_preset": {
                p: dict(sorted(v.items())) for p, v in sorted(self.asg_per_preset.items())
            },
            "episode_scores": {
                k: dict(sorted(v.items())) for k, v in sorted(self.episode_scores.items())
            },
            "failures": [
                {"episode": f.episode, "stage": f.stage, "error": f.error}
                for f in self.failures
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n"

    def format_text(self) -> str:
        out = format_report_table([self.reports[p] for p in sorted(self.reports)])
        for persp in sorted(self.asg_per_preset):
            per = self.asg_per_preset[persp]
            if per:
                out += f"\n[{persp}] generalization by preset: " + ", ".join(
                    f"{k}={v:.6f}" for k, v in sorted(per.items())
                )
        if self.failures:
            out += "\n\nfailures:\n" + "\n".join(
                f"  {f.episode} [{f.stage}]: {f.error}" for f in self.failures
            )
        return out + "\n"


def _gsc_score(adapter, episode, timeout) -> float:
    leg = episode.predict_len // 2
    acts = episode.prediction_actions
    fwd_req = build_request(episode, adapter.context_policy,
                            actions=acts[:leg], tag="gsc-fwd")
    fwd = run_request(adapter, fwd_req, timeout)
    rev_req = build_request(
        episode, adapter.context_policy, actions=acts[leg:],
        memory_frames=tuple(episode.memory_frames) + tuple(fwd),
        start_index=episode.memory_len + leg, tag="gsc-rev",
    )
    rev = run_request(adapter, rev_req, timeout)
    # interior pose-matched windows: fwd[i] and rev[leg-2-i] sit at the same
    # ground-truth pose; the turning-point and return-to-start frames have no
    # generated partner and are excluded
    return generated_scene_consistency(fwd[: leg - 1], rev[: leg - 1])


def _rpe_scores(adapter, episode, entry_name: str, config: MetricConfig) -> dict | None:
    ref = pose_trajectory(
        episode.prediction_poses, episode.fps, start_index=episode.memory_len
    )
    external = config.external_poses_dir is not None
    if external:
        est = read_tum(Path(config.external_poses_dir) / f"{entry_name}.tum")
    else:
        model = getattr(adapter, "model", None)
        if model is None or not hasattr(model, "predicted_camera_poses"):
            return None  # pixel-only candidate without supplied trajectories
        poses = model.predicted_camera_poses(episode)
        est = pose_trajectory(poses, episode.fps, start_index=episode.memory_len)

    align = config.rpe_align == "on" or (config.rpe_align == "auto" and external)
    if align:
        sel = associate(est, ref, max_dt=config.rpe_max_dt)
        xf = umeyama_align(est.translations[sel], ref.translations)
        est = apply_alignment(xf, est)
    result = rpe(est, ref, delta=config.rpe_delta, max_dt=config.rpe_max_dt)
    return {"rpe_trans": result.trans_rmse, "rpe_rot": result.rot_rmse_deg}


def evaluate(dataset_root, adapter, config: MetricConfig = MetricConfig()) -> EvaluationReport:
    root = Path(dataset_root)
    manifest = read_manifest(root)

    ext_scores = {}
    if config.external_scores:
        ext_scores = json.loads(Path(config.external_scores).read_text())

    rows: dict = {}       # perspective -> {dim_group: [(name, {dim: v}), ...]}
    asg_rows: dict = {}   # perspective -> {preset: [values]}
    episode_scores: dict = {}
    failures: list = []
    completed = 0

    def note(persp, group, name, scores):
        rows.setdefault(persp, {}).setdefault(group, []).append((name, scores))
        episode_scores.setdefault(name, {}).update(scores)

    for entry in manifest.entries(split="test"):
        try:
            episode = read_episode(root / entry.path)
        except WorldLoopError as e:
            failures.append(EpisodeFailure(entry.name, "load", str(e)))
            continue
        persp = entry.perspective
        ok = False
        if entry.suite == "shared-action":
            try:
                pred = run_request(
                    adapter,
                    build_request(episode, adapter.context_policy, tag="lcm"),
                    config.per_frame_timeout,
                )
                note(persp, "lcm", entry.name,
                     {"lcm": long_context_memory(pred, episode.gt_prediction_frames)})
                ok = True
            except WorldLoopError as e:
                failures.append(EpisodeFailure(entry.name, "lcm", str(e)))
            try:
                scores = _rpe_scores(adapter, episode, entry.name, config)
                if scores is not None:
                    note(persp, "rpe", entry.name, scores)
                    ok = True
            except WorldLoopError as e:
                failures.append(EpisodeFailure(entry.name, "rpe", str(e)))
        elif entry.suite == "generalization":
            try:
                pred = run_request(
                    adapter,
                    build_request(episode, adapter.context_policy, tag="asg"),
                    config.per_frame_timeout,
                )
                value = long_context_memory(pred, episode.gt_prediction_frames)
                asg_rows.setdefault(persp, {}).setdefault(entry.preset, []).append(value)
                episode_scores.setdefault(entry.name, {})["asg"] = value
                ok = True
            except WorldLoopError as e:
                failures.append(EpisodeFailure(entry.name, "asg", str(e)))
        elif entry.suite == "mirror":
            try:
                note(persp, "gsc", entry.name,
                     {"gsc": _gsc_score(adapter, episode, config.per_frame_timeout)})
                ok = True
            except WorldLoopError as e:
                failures.append(EpisodeFailure(entry.name, "gsc", str(e)))
        if entry.name in ext_scores:
            note(persp, "external", entry.name, dict(ext_scores[entry.name]))
        if ok:
            completed += 1

    if completed == 0:
        raise DatasetError(
            f"zero completed episodes for model {adapter.label!r}; "
            f"{len(failures)} failure(s) recorded"
        )

    reports = {}
    asg_per_preset = {}
    perspectives = set(rows) | set(asg_rows)
    for persp in sorted(perspectives):
        scores: dict = {}
        contributing: set = set()
        for group, group_rows in rows.get(persp, {}).items():
            agg = aggregate_report(group_rows, model=adapter.label, perspective=persp)
            scores.update(agg.scores)
            contributing |= {name for name, _ in group_rows}
        per_preset = {
            p: float(sum(v) / len(v)) for p, v in asg_rows.get(persp, {}).items()
        }
        if per_preset:
            scores["asg"] = average_preset_scores(per_preset)
            asg_per_preset[persp] = per_preset
            contributing |= {
                e.name for e in manifest.entries(suite="generalization", perspective=persp)
            }
        reports[persp] = MetricReport(
            model=adapter.label, perspective=persp,
            episode_count=len(contributing), scores=scores,
        )

    return EvaluationReport(
        model=adapter.label, reports=reports, asg_per_preset=asg_per_preset,
        episode_scores=episode_scores, failures=tuple(failures),
    )
