"""Acceptance suite: every criterion at its stated tolerance.

Run with `pytest tests/test_acceptance.py -v -s` to see one PASS/FAIL line
per criterion. The oracle-zero and determinism criteria drive the real CLI
at the desk-scale default configuration (256x192, memory 48, prediction 96),
so this module takes a few minutes.
"""

import hashlib
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from worldloop.actions import PRESET_NAMES, ActionVector, Pose, apply_sequence, preset
from worldloop.adapters import StreamingAdapter, build_request, run_request
from worldloop.cli import main
from worldloop.episodes import gen_mirror_paths, gen_revisit_loop, record_episode
from worldloop.metrics import long_context_memory
from worldloop.poses import (
    PoseTrajectory,
    Sim3Transform,
    apply_alignment,
    quat_normalize,
    quat_rotate,
    quat_to_matrix,
    rpe,
    umeyama_align,
)
from worldloop.refmodels import NoisyModel, OracleModel, PresetMismatchModel
from worldloop.render import Perspective
from worldloop.worldgen import WorldSpec, build_world

SEED = 7


def check(name: str, ok: bool, detail: str = ""):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}"
    if detail:
        line += f"  ({detail})"
    print(line)
    assert ok, f"{name}: {detail}"


def tree_digest(root: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def run_cli(args):
    result = CliRunner().invoke(main, args, catch_exceptions=False)
    assert result.exit_code == 0, result.output
    return result


def gen_and_eval(root: Path) -> tuple:
    """Desk-scale gen + oracle eval through the CLI; returns (report, seconds)."""
    t0 = time.monotonic()
    run_cli(["gen", "--out", str(root), "--seed", str(SEED),
             "--resolution", "256x192", "--memory-len", "48", "--predict-len", "96"])
    report_path = root.parent / (root.name + "_report.json")
    run_cli(["eval", "--dataset", str(root), "--model", "oracle",
             "--out", str(report_path)])
    return json.loads(report_path.read_text()), time.monotonic() - t0


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance") / "desk_a"
    report, seconds = gen_and_eval(root)
    return root, report, seconds


class TestAcceptance:
    def test_oracle_zero_suite(self, desk_run):
        root, report, seconds = desk_run
        zeros = []
        for persp in ("first", "third"):
            scores = report["reports"][persp]["scores"]
            zeros += [scores[k] for k in ("lcm", "gsc", "asg", "rpe_trans", "rpe_rot")]
        exact = all(v == 0.0 for v in zeros) and not report["failures"]
        check(
            "oracle zero suite (lcm=gsc=asg=rpe=0 exactly)",
            exact and seconds < 300.0,
            f"scores={sorted(set(zeros))}, failures={len(report['failures'])}, "
            f"runtime={seconds:.0f}s < 300s",
        )

    def test_kinematics_closure(self):
        rng = np.random.default_rng(SEED)
        t0 = time.monotonic()
        worst_ok = True
        for i in range(1000):
            cfg = preset(PRESET_NAMES[i % len(PRESET_NAMES)])
            segments = int(rng.integers(1, 6))
            start = Pose(yaw=float(rng.uniform(0, 360)))
            actions = gen_revisit_loop(seed=int(rng.integers(2**31)),
                                       segments=segments, cfg=cfg)
            end = apply_sequence(start, actions, cfg)[-1]
            if end != start:  # bit-exact closure, well inside 1e-9
                worst_ok = False
                break
        elapsed = time.monotonic() - t0
        check(
            "kinematics closure (1000 loops, all presets, 1e-9)",
            worst_ok and elapsed < 10.0,
            f"bit-exact closure, runtime={elapsed:.2f}s < 10s",
        )

    def test_umeyama_recovery(self):
        rng = np.random.default_rng(SEED)
        max_err = 0.0
        dets_ok = True
        for _ in range(100):
            src = rng.normal(size=(100, 3))
            s = float(rng.uniform(0.1, 10.0))
            q = quat_normalize(rng.normal(size=4))
            t = rng.normal(size=3) * 10
            dst = s * quat_rotate(q, src) + t
            xf = umeyama_align(src, dst)
            err = max(
                abs(xf.scale - s),
                float(np.abs(quat_to_matrix(xf.rotation) - quat_to_matrix(q)).max()),
                float(np.abs(xf.translation - t).max()),
            )
            max_err = max(max_err, err)
            if abs(np.linalg.det(quat_to_matrix(xf.rotation)) - 1.0) > 1e-9:
                dets_ok = False
        check(
            "umeyama recovery (100 random Sim(3), error < 1e-9, det=+1)",
            max_err < 1e-9 and dets_ok,
            f"max componentwise error {max_err:.3e}",
        )

    def test_rpe_analytics(self):
        rng = np.random.default_rng(3)
        n = 50
        quats = quat_normalize(rng.normal(size=(n, 4)))
        ref = PoseTrajectory(np.arange(n) / 24.0, rng.normal(size=(n, 3)) * 5, quats)

        identical = rpe(ref, ref, delta=1)
        g = Sim3Transform(1.0, quat_normalize(rng.normal(size=4)), rng.normal(size=3) * 50)
        offset = rpe(apply_alignment(g, ref), ref, delta=1)

        eps = 0.01
        static = PoseTrajectory(np.arange(n) / 24.0, np.zeros((n, 3)),
                                np.tile([0.0, 0.0, 0.0, 1.0], (n, 1)))
        drifting = PoseTrajectory(static.times, np.outer(np.arange(n), [eps, 0, 0]),
                                  static.quaternions)
        drift = rpe(drifting, static, delta=1)

        ok = (
            identical.trans_rmse == 0.0 and identical.rot_rmse_deg == 0.0
            and offset.trans_rmse <= 1e-12 and offset.rot_rmse_deg <= 1e-12
            and abs(drift.trans_rmse - eps) <= 1e-12
        )
        check(
            "rpe analytics (identity, SE(3) offset, drift=0.01 within 1e-12)",
            ok,
            f"identity=({identical.trans_rmse}, {identical.rot_rmse_deg}), "
            f"offset=({offset.trans_rmse:.2e}, {offset.rot_rmse_deg:.2e}), "
            f"drift err={abs(drift.trans_rmse - eps):.2e}",
        )

    def test_metric_monotonicity_noise(self):
        world = build_world(WorldSpec(seed=11, category="stylized"))
        actions = gen_revisit_loop(seed=2, segments=1, cfg=preset("mid"), world=world)
        episode = record_episode(world, preset("mid"), Perspective.FIRST, actions,
                                 memory_len=8, predict_len=24, resolution=(128, 96))
        sigmas = (0.02, 0.05, 0.10)
        all_ok = True
        detail = []
        for seed in range(10):
            lcms = []
            for sigma in sigmas:
                adapter = StreamingAdapter(NoisyModel(sigma=sigma, seed=seed))
                pred = run_request(adapter, build_request(episode, "with-memory"))
                lcms.append(long_context_memory(pred, episode.gt_prediction_frames))
            increasing = lcms[0] < lcms[1] < lcms[2]
            within = all(abs(l - s**2) / s**2 < 0.05 for l, s in zip(lcms, sigmas))
            if not (increasing and within):
                all_ok = False
                detail.append(f"seed {seed}: {lcms}")
        check(
            "metric monotonicity (noisy 0.02/0.05/0.10, 10 seeds, 5% of sigma^2)",
            all_ok,
            "; ".join(detail) if detail else "strictly increasing, all within 5%",
        )

    def test_mismatch_detection(self):
        model = StreamingAdapter(PresetMismatchModel(assumed="mid"))
        all_ok = True
        details = []
        for seed in range(5):
            scores = {}
            for preset_name in ("mid", "large"):
                cfg = preset(preset_name)
                world = build_world(WorldSpec(seed=100 + seed, category="ancient"))
                actions = gen_revisit_loop(seed=seed, segments=1, cfg=cfg, world=world)
                episode = record_episode(world, cfg, Perspective.FIRST, actions,
                                         memory_len=8, predict_len=24,
                                         resolution=(96, 72))
                pred = run_request(model, build_request(episode, "with-memory"))
                scores[preset_name] = long_context_memory(
                    pred, episode.gt_prediction_frames
                )
            if not scores["large"] > scores["mid"]:
                all_ok = False
            details.append(f"seed {seed}: mid={scores['mid']:.4g} large={scores['large']:.4g}")
        check(
            "mismatch detection (asg large > mid in all seeded runs)",
            all_ok,
            details[-1],
        )

    def test_end_to_end_determinism(self, desk_run, tmp_path_factory):
        root_a, report_a, _ = desk_run
        root_b = tmp_path_factory.mktemp("acceptance") / "desk_b"
        report_b, _ = gen_and_eval(root_b)
        trees_equal = tree_digest(root_a) == tree_digest(root_b)
        reports_equal = json.dumps(report_a, sort_keys=True) == json.dumps(
            report_b, sort_keys=True
        )
        check(
            "end-to-end determinism (byte-identical trees and reports)",
            trees_equal and reports_equal,
            f"trees_equal={trees_equal}, reports_equal={reports_equal}",
        )

    def test_mirror_path_conformance(self):
        paths = gen_mirror_paths()
        ok = len(paths) == 10
        for p in paths:
            segs = len(p.forward_actions) // 24
            ok &= len(p.forward_actions) == segs * 24
            for s in range(segs):
                chunk = p.forward_actions[s * 24:(s + 1) * 24]
                ok &= all(a == chunk[0] for a in chunk)
            start = Pose(x=5.0, y=-3.0, z=160.0, yaw=211.0)
            fwd = apply_sequence(start, list(p.forward_actions), preset("mid"))
            full = apply_sequence(
                start, list(p.forward_actions) + list(p.reverse_actions), preset("mid")
            )
            rev = full[len(p.forward_actions):]
            ok &= rev == list(reversed([start] + fwd[:-1]))  # bit-exact mirror
            ok &= full[-1] == start
        check(
            "mirror-path conformance (10 paths, 24-frame segments, mirrored poses)",
            ok,
            "bit-exact forward/reverse pose mirror",
        )
