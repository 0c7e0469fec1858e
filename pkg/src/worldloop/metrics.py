"""Frame-space evaluation losses and report aggregation.

All losses are mean squared error on pixel intensities normalized to [0, 1],
so a score is 0 exactly when the compared frames are byte-identical under
the metric's pairing. Per-frame terms are averaged with numpy's pairwise
summation, giving a fixed, reproducible summation order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MetricInputError
from .render import Frame

# Report column order mirrors the benchmark tables.
COLUMN_ORDER = ("lcm", "gsc", "asg", "aesthetic", "image_quality", "rpe_trans", "rpe_rot")
COLUMN_TITLES = {
    "lcm": "LongCtxMem",
    "gsc": "SceneConsis",
    "asg": "ActSpaceGen",
    "aesthetic": "Aesthetic",
    "image_quality": "ImageQual",
    "rpe_trans": "RPE-Trans",
    "rpe_rot": "RPE-Rot",
}


def _as_unit(frame: Frame) -> np.ndarray:
    return frame.to_array().astype(np.float64) / 255.0


def _check_same_resolution(a: Frame, b: Frame) -> None:
    if (a.width, a.height) != (b.width, b.height):
        raise MetricInputError(
            f"resolution mismatch: {a.width}x{a.height} vs {b.width}x{b.height}"
        )


def mse_frames(a: Frame, b: Frame) -> float:
    """Mean over pixels and channels of squared intensity difference."""
    _check_same_resolution(a, b)
    if a.data == b.data:
        return 0.0
    return float(np.mean((_as_unit(a) - _as_unit(b)) ** 2))


def long_context_memory(pred, gt) -> float:
    """Mean per-frame MSE of the predicted continuation against ground truth."""
    if len(pred) != len(gt):
        raise MetricInputError(f"length mismatch: {len(pred)} predicted vs {len(gt)} gt frames")
    if len(pred) == 0:
        raise MetricInputError("need at least one frame pair")
    return float(np.mean([mse_frames(p, g) for p, g in zip(pred, gt)]))


def generated_scene_consistency(fwd, rev) -> float:
    """Mean MSE over pose-matched forward/reverse pairs: fwd[i] vs rev[k-1-i].

    The reverse leg retraces the forward poses in reverse order, so the
    reversed pairing compares frames observed at identical ground-truth
    poses.
    """
    if len(fwd) != len(rev):
        raise MetricInputError(f"length mismatch: {len(fwd)} forward vs {len(rev)} reverse")
    if len(fwd) == 0:
        raise MetricInputError("need at least one frame pair")
    k = len(fwd)
    return float(np.mean([mse_frames(fwd[i], rev[k - 1 - i]) for i in range(k)]))


def action_space_generalization(pred, gt) -> float:
    """Per-episode generalization score: same computation as long_context_memory,
    reported per step-size preset and averaged over the preset suite."""
    return long_context_memory(pred, gt)


def average_preset_scores(per_preset: dict) -> float:
    """Aggregate per-preset generalization scores over the suite."""
    if not per_preset:
        raise MetricInputError("empty preset suite")
    return float(np.mean(list(per_preset.values())))


@dataclass(frozen=True)
class MetricReport:
    """Per-dimension means over a set of episodes, one perspective per report."""

    model: str
    perspective: str
    episode_count: int
    scores: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.episode_count < 1:
            raise MetricInputError("a report needs at least one episode")
        for dim, v in self.scores.items():
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
                raise MetricInputError(f"score {dim}={v!r} must be finite and >= 0")

    def to_json_dict(self) -> dict:
        return {
            "model": self.model,
            "perspective": self.perspective,
            "episode_count": self.episode_count,
            "scores": {k: self.scores[k] for k in sorted(self.scores)},
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "MetricReport":
        return cls(
            model=d["model"],
            perspective=d["perspective"],
            episode_count=d["episode_count"],
            scores=dict(d["scores"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)


def aggregate_report(results, model: str = "", perspective: str = "all") -> MetricReport:
    """Unweighted per-dimension mean across episode results.

    `results` is a list of (episode_id, {dimension: value}). Every episode
    must carry every dimension present anywhere in the set; partial rows are
    an error naming the offending episode.
    """
    results = list(results)
    if not results:
        raise MetricInputError("no episode results to aggregate")
    dims = set()
    for _, scores in results:
        dims |= set(scores)
    for ep_id, scores in results:
        missing = dims - set(scores)
        if missing:
            raise MetricInputError(
                f"episode {ep_id} is missing dimension(s): {', '.join(sorted(missing))}"
            )
    means = {
        dim: float(np.mean([scores[dim] for _, scores in results])) for dim in sorted(dims)
    }
    return MetricReport(
        model=model, perspective=perspective, episode_count=len(results), scores=means
    )


def format_report_table(reports) -> str:
    """Aligned plain-text table, one row per report, benchmark column order."""
    reports = list(reports)
    cols = [c for c in COLUMN_ORDER if any(c in r.scores for r in reports)]
    headers = ["Model", "Perspective", "Episodes"] + [COLUMN_TITLES[c] for c in cols]
    rows = []
    for r in reports:
        row = [r.model, r.perspective, str(r.episode_count)]
        for c in cols:
            row.append(f"{r.scores[c]:.6f}" if c in r.scores else "-")
        rows.append(row)
    widths = [max(len(h), *(len(row[i]) for row in rows)) for i, h in enumerate(headers)]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip(),
        "  ".join("-" * w for w in widths),
    ]
    for row in rows:
        lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"
