import numpy as np
import pytest

from worldloop.errors import (
    AssociationError,
    DegenerateGeometryError,
    MetricInputError,
    TrajectoryFormatError,
)
from worldloop.poses import (
    PoseTrajectory,
    Sim3Transform,
    apply_alignment,
    quat_angle_deg,
    quat_from_matrix,
    quat_mul,
    quat_normalize,
    quat_rotate,
    quat_to_matrix,
    read_tum,
    rpe,
    umeyama_align,
    write_tum,
)

IDENTITY_Q = np.array([0.0, 0.0, 0.0, 1.0])


def random_rotation(rng) -> np.ndarray:
    return quat_normalize(rng.normal(size=4))


def make_traj(translations, quaternions=None, t0=0.0, dt=1.0 / 24):
    n = len(translations)
    if quaternions is None:
        quaternions = np.tile(IDENTITY_Q, (n, 1))
    return PoseTrajectory(
        times=t0 + dt * np.arange(n),
        translations=np.asarray(translations, dtype=np.float64),
        quaternions=np.asarray(quaternions, dtype=np.float64),
    )


def residual(xf, src, dst) -> float:
    return float(((dst - xf.apply_points(src)) ** 2).sum())


class TestUmeyama:
    def test_identity(self):
        src = np.array([[0, 0, 0], [1, 0, 0], [0, 2, 0], [0, 0, 3.0]])
        xf = umeyama_align(src, src)
        assert xf.scale == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(quat_to_matrix(xf.rotation), np.eye(3), atol=1e-12)
        assert np.allclose(xf.translation, 0.0, atol=1e-12)

    def test_recovers_random_similarity(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            src = rng.normal(size=(100, 3))
            s = float(rng.uniform(0.1, 10.0))
            q = random_rotation(rng)
            t = rng.normal(size=3) * 5
            dst = s * quat_rotate(q, src) + t
            xf = umeyama_align(src, dst)
            assert abs(xf.scale - s) < 1e-9
            assert np.abs(quat_to_matrix(xf.rotation) - quat_to_matrix(q)).max() < 1e-9
            assert np.abs(xf.translation - t).max() < 1e-9

    def test_mirror_input_still_returns_proper_rotation(self):
        rng = np.random.default_rng(3)
        src = rng.normal(size=(50, 3))
        dst = src.copy()
        dst[:, 0] *= -1  # reflection, not achievable by a proper rotation
        xf = umeyama_align(src, dst)
        assert np.linalg.det(quat_to_matrix(xf.rotation)) == pytest.approx(1.0, abs=1e-9)
        assert residual(xf, src, dst) > 1.0

    def test_collinear_is_degenerate(self):
        src = np.outer(np.arange(10.0), [1.0, 2.0, 3.0])
        with pytest.raises(DegenerateGeometryError):
            umeyama_align(src, src)

    def test_length_mismatch(self):
        with pytest.raises(MetricInputError):
            umeyama_align(np.zeros((4, 3)), np.zeros((5, 3)))

    def test_too_few_points(self):
        with pytest.raises(DegenerateGeometryError):
            umeyama_align(np.zeros((2, 3)), np.zeros((2, 3)))

    def test_scale_positive(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            src = rng.normal(size=(30, 3))
            dst = rng.normal(size=(30, 3))
            assert umeyama_align(src, dst).scale > 0

    def test_optimality_against_random_perturbations(self):
        rng = np.random.default_rng(7)
        src = rng.normal(size=(60, 3))
        q = random_rotation(rng)
        dst = 1.7 * quat_rotate(q, src) + [3.0, -1.0, 2.0] + rng.normal(size=(60, 3)) * 0.05
        xf = umeyama_align(src, dst)
        best = residual(xf, src, dst)
        for _ in range(1000):
            eps = rng.uniform(1e-4, 1e-1)
            pert = Sim3Transform(
                scale=xf.scale * (1 + rng.normal() * eps),
                rotation=quat_normalize(xf.rotation + rng.normal(size=4) * eps),
                translation=xf.translation + rng.normal(size=3) * eps,
            )
            assert residual(pert, src, dst) >= best - 1e-9


class TestApplyAlignment:
    def test_identity_is_noop(self):
        traj = make_traj(np.random.default_rng(0).normal(size=(8, 3)))
        out = apply_alignment(Sim3Transform.identity(), traj)
        assert np.array_equal(out.translations, traj.translations)
        assert np.allclose(out.quaternions, traj.quaternions)
        assert np.array_equal(out.times, traj.times)

    def test_pure_translation(self):
        traj = make_traj([[0, 0, 0], [1, 1, 1], [2, 0, 1.0]])
        xf = Sim3Transform(1.0, IDENTITY_Q, np.array([5.0, -1.0, 2.0]))
        out = apply_alignment(xf, traj)
        assert np.allclose(out.translations - traj.translations, [5.0, -1.0, 2.0])
        assert np.allclose(out.quaternions, traj.quaternions)

    def test_roundtrip_through_inverse(self):
        rng = np.random.default_rng(9)
        traj = make_traj(rng.normal(size=(10, 3)),
                         quat_normalize(rng.normal(size=(10, 4))))
        xf = Sim3Transform(2.5, random_rotation(rng), rng.normal(size=3))
        back = apply_alignment(xf.inverse(), apply_alignment(xf, traj))
        assert np.abs(back.translations - traj.translations).max() < 1e-12
        # quaternions match up to sign
        dots = np.abs(np.sum(back.quaternions * traj.quaternions, axis=-1))
        assert np.abs(dots - 1.0).max() < 1e-12

    def test_alignment_idempotent_on_aligned_data(self):
        rng = np.random.default_rng(13)
        src = rng.normal(size=(40, 3))
        xf = Sim3Transform(0.3, random_rotation(rng), rng.normal(size=3))
        dst = xf.apply_points(src)
        est = umeyama_align(src, dst)
        aligned = est.apply_points(src)
        re_est = umeyama_align(aligned, dst)
        assert abs(re_est.scale - 1.0) < 1e-9
        assert np.abs(quat_to_matrix(re_est.rotation) - np.eye(3)).max() < 1e-9
        assert np.abs(re_est.translation).max() < 1e-9


class TestRpe:
    def test_zero_for_equal_trajectories(self):
        rng = np.random.default_rng(1)
        traj = make_traj(rng.normal(size=(20, 3)),
                         quat_normalize(rng.normal(size=(20, 4))))
        res = rpe(traj, traj, delta=1)
        assert res.trans_rmse == 0.0
        assert res.rot_rmse_deg == 0.0
        assert res.pairs == 19

    def test_invariant_to_global_rigid_offset(self):
        rng = np.random.default_rng(2)
        ref = make_traj(rng.normal(size=(30, 3)) * 10,
                        quat_normalize(rng.normal(size=(30, 4))))
        g = Sim3Transform(1.0, random_rotation(rng), rng.normal(size=3) * 100)
        est = apply_alignment(g, ref)
        res = rpe(est, ref, delta=1)
        assert res.trans_rmse < 1e-9
        assert res.rot_rmse_deg < 1e-9

    def test_same_rigid_offset_on_both_sides_cancels(self):
        rng = np.random.default_rng(8)
        ref = make_traj(rng.normal(size=(25, 3)),
                        quat_normalize(rng.normal(size=(25, 4))))
        est = make_traj(ref.translations + rng.normal(size=(25, 3)) * 0.1,
                        ref.quaternions)
        g = Sim3Transform(1.0, random_rotation(rng), rng.normal(size=3))
        base = rpe(est, ref, delta=2)
        moved = rpe(apply_alignment(g, est), apply_alignment(g, ref), delta=2)
        assert moved.trans_rmse == pytest.approx(base.trans_rmse, abs=1e-9)
        assert moved.rot_rmse_deg == pytest.approx(base.rot_rmse_deg, abs=1e-9)

    def test_scale_offset_scales_translation_error(self):
        # similarity (vs rigid) offsets are NOT absorbed: translation error
        # scales linearly with the common scale factor
        rng = np.random.default_rng(4)
        ref = make_traj(rng.normal(size=(25, 3)))
        est = make_traj(ref.translations + rng.normal(size=(25, 3)) * 0.1)
        g = Sim3Transform(2.0, IDENTITY_Q, np.zeros(3))
        base = rpe(est, ref, delta=1)
        scaled = rpe(apply_alignment(g, est), apply_alignment(g, ref), delta=1)
        assert scaled.trans_rmse == pytest.approx(2.0 * base.trans_rmse, rel=1e-9)

    def test_constant_drift_equals_step_size(self):
        n = 50
        eps = 0.01
        ref = make_traj(np.zeros((n, 3)))
        est = make_traj(np.outer(np.arange(n), [eps, 0.0, 0.0]))
        res = rpe(est, ref, delta=1)
        assert abs(res.trans_rmse - eps) < 1e-12
        assert res.rot_rmse_deg == 0.0

    def test_too_short(self):
        traj = make_traj(np.zeros((3, 3)))
        with pytest.raises(MetricInputError):
            rpe(traj, traj, delta=5)

    def test_association_failure(self):
        ref = make_traj(np.zeros((10, 3)))
        est = make_traj(np.zeros((10, 3)), t0=100.0)
        with pytest.raises(AssociationError):
            rpe(est, ref, delta=1)

    def test_association_tolerance_flag(self):
        ref = make_traj(np.zeros((10, 3)))
        est = make_traj(np.zeros((10, 3)), t0=0.01)  # under half the 1/24 period
        assert rpe(est, ref, delta=1).trans_rmse == 0.0
        with pytest.raises(AssociationError):
            rpe(est, ref, delta=1, max_dt=0.001)


class TestTumIO:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(6)
        traj = make_traj(rng.normal(size=(12, 3)) * 1e4,
                         quat_normalize(rng.normal(size=(12, 4))))
        p = tmp_path / "t.tum"
        write_tum(traj, p)
        back = read_tum(p)
        assert np.array_equal(back.times, traj.times)
        assert np.array_equal(back.translations, traj.translations)
        assert np.array_equal(back.quaternions, traj.quaternions)

    def test_comments_ignored(self, tmp_path):
        p = tmp_path / "t.tum"
        p.write_text("# header\n0.0 1 2 3 0 0 0 1\n# mid\n1.0 4 5 6 0 0 0 1\n")
        assert len(read_tum(p)) == 2

    def test_wrong_field_count_names_line(self, tmp_path):
        p = tmp_path / "t.tum"
        p.write_text("0.0 1 2 3 0 0 0 1\n1.0 1 2 3 0 0 0\n")
        with pytest.raises(TrajectoryFormatError, match="line 2"):
            read_tum(p)

    def test_non_numeric_names_line(self, tmp_path):
        p = tmp_path / "t.tum"
        p.write_text("0.0 1 2 x 0 0 0 1\n")
        with pytest.raises(TrajectoryFormatError, match="line 1"):
            read_tum(p)

    def test_non_monotone_timestamps(self, tmp_path):
        p = tmp_path / "t.tum"
        p.write_text("1.0 1 2 3 0 0 0 1\n0.5 1 2 3 0 0 0 1\n")
        with pytest.raises(TrajectoryFormatError, match="non-monotone"):
            read_tum(p)

    def test_quaternion_norm_tolerance(self, tmp_path):
        near = tmp_path / "near.tum"
        near.write_text("0.0 0 0 0 0 0 0 1.0005\n")
        traj = read_tum(near)
        assert np.linalg.norm(traj.quaternions[0]) == pytest.approx(1.0, abs=1e-12)
        far = tmp_path / "far.tum"
        far.write_text("0.0 0 0 0 0 0 0 0.9\n")
        with pytest.raises(TrajectoryFormatError, match="norm"):
            read_tum(far)


class TestQuaternionHelpers:
    def test_mul_matches_matrix_product(self):
        rng = np.random.default_rng(21)
        for _ in range(10):
            a, b = random_rotation(rng), random_rotation(rng)
            m = quat_to_matrix(quat_mul(a, b))
            assert np.allclose(m, quat_to_matrix(a) @ quat_to_matrix(b), atol=1e-12)

    def test_from_matrix_roundtrip(self):
        rng = np.random.default_rng(22)
        for _ in range(20):
            q = random_rotation(rng)
            q2 = quat_from_matrix(quat_to_matrix(q))
            assert min(np.abs(q2 - q).max(), np.abs(q2 + q).max()) < 1e-12

    def test_angle(self):
        assert quat_angle_deg(IDENTITY_Q) == 0.0
        half = np.array([np.sin(np.radians(45)), 0, 0, np.cos(np.radians(45))])
        assert quat_angle_deg(half) == pytest.approx(90.0, abs=1e-9)
