import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from worldloop.actions import (
    ANGLE_GRID,
    POSITION_GRID,
    ActionPrimitive,
    ActionSpaceConfig,
    ActionVector,
    Pose,
    apply_sequence,
    inverse,
    preset,
    step_pose,
)
from worldloop.errors import UnknownPresetError

W, A, S, D = ActionPrimitive.W, ActionPrimitive.A, ActionPrimitive.S, ActionPrimitive.D
PU, PD = ActionPrimitive.PITCH_UP, ActionPrimitive.PITCH_DOWN
YL, YR = ActionPrimitive.YAW_LEFT, ActionPrimitive.YAW_RIGHT

MID = preset("mid")

primitives = st.sampled_from(list(ActionPrimitive))
action_vectors = st.frozensets(primitives, max_size=4).map(ActionVector)
configs = st.sampled_from([preset(n) for n in ("small", "mid", "broad", "large", "huge")])
grid_yaw = st.integers(min_value=0, max_value=int(360 * ANGLE_GRID) - 1).map(
    lambda n: n / ANGLE_GRID
)


def dist(p: Pose, q: Pose) -> float:
    return math.sqrt((p.x - q.x) ** 2 + (p.y - q.y) ** 2 + (p.z - q.z) ** 2)


class TestStepPose:
    def test_idle_is_identity(self):
        p = Pose(0, 0, 0, 0, 0)
        assert step_pose(p, ActionVector.idle(), MID) == p

    def test_forward_from_yaw_zero_moves_exactly_delta_p_along_x(self):
        # v_W is local forward; at yaw 0 that is +X in the world frame.
        p = step_pose(Pose(), ActionVector.of(W), ActionSpaceConfig(150.0, 0.7))
        assert (p.x, p.y, p.z) == (150.0, 0.0, 0.0)

    def test_yaw_right_subtracts_delta_r(self):
        p = step_pose(Pose(), ActionVector.of(YR), ActionSpaceConfig(150.0, 0.7))
        # 0.7 deg snapped to the angle grid; sign convention: right turn wraps below 360
        assert abs(p.yaw - 359.3) <= 1.0 / ANGLE_GRID
        assert (p.x, p.y, p.z) == (0.0, 0.0, 0.0)

    def test_opposed_keys_cancel(self):
        p = Pose(12.5, -3.25, 7.0, 123.0, -5.0)
        assert step_pose(p, ActionVector.of(W, S), MID) == step_pose(p, ActionVector.idle(), MID)

    def test_24_forward_steps_sum_to_3600(self):
        poses = apply_sequence(Pose(), [ActionVector.of(W)] * 24, ActionSpaceConfig(150.0, 0.7))
        assert len(poses) == 24
        assert poses[-1].x == 24 * 150.0
        assert poses[-1].y == 0.0

    def test_rotation_applied_before_translation(self):
        cfg = ActionSpaceConfig(100.0, 45.0)  # large angle makes the order visible
        p = step_pose(Pose(), ActionVector.of(W, YL), cfg)
        assert p.yaw == 45.0
        # moved along the NEW heading (45 deg), not the old (+X)
        assert p.x == pytest.approx(100 * math.cos(math.radians(45)), abs=1e-2)
        assert p.y == pytest.approx(100 * math.sin(math.radians(45)), abs=1e-2)

    def test_pitch_does_not_translate(self):
        p = step_pose(Pose(), ActionVector.of(PU), MID)
        assert (p.x, p.y, p.z) == (0.0, 0.0, 0.0)
        assert p.pitch > 0

    def test_pitch_clamps(self):
        p = Pose(pitch=88.9)
        for _ in range(10):
            p = step_pose(p, ActionVector.of(PU), preset("huge"))
        assert p.pitch == 89.0

    def test_yaw_wraps(self):
        p = Pose(yaw=359.5)
        p = step_pose(p, ActionVector.of(YL), ActionSpaceConfig(100.0, 1.0))
        assert 0.0 <= p.yaw < 1.0

    @given(yaw=grid_yaw, cfg=configs, key=st.sampled_from([W, A, S, D]))
    def test_single_movement_magnitude_is_delta_p_up_to_grid(self, yaw, cfg, key):
        p0 = Pose(yaw=yaw)
        p1 = step_pose(p0, ActionVector.of(key), cfg)
        assert dist(p0, p1) == pytest.approx(cfg.delta_p, abs=2.0 / POSITION_GRID)
        assert p1.z == p0.z

    @given(
        pose=st.builds(Pose, x=st.floats(-1000, 1000), y=st.floats(-1000, 1000), yaw=grid_yaw),
        rest=st.frozensets(primitives, max_size=3),
        prim=primitives,
        cfg=configs,
    )
    def test_cancellation(self, pose, rest, prim, cfg):
        rest = rest - {prim, prim.inverse}  # the pair must not overlap rest
        with_pair = ActionVector(rest | {prim, prim.inverse})
        without = ActionVector(rest)
        assert step_pose(pose, with_pair, cfg) == step_pose(pose, without, cfg)


class TestInverse:
    def test_idle(self):
        assert inverse(ActionVector.idle()) == ActionVector.idle()

    def test_pairing(self):
        assert inverse(ActionVector.of(W, YL)) == ActionVector.of(S, YR)

    @given(v=action_vectors)
    def test_involution(self, v):
        assert inverse(inverse(v)) == v


class TestApplySequence:
    def test_empty(self):
        assert apply_sequence(Pose(), [], MID) == []

    def test_yaw_revolution_returns_within_delta_r(self):
        cfg = preset("large")  # 1.4 deg
        n = math.ceil(360 / cfg.delta_r)
        poses = apply_sequence(Pose(yaw=90.0), [ActionVector.of(YR)] * n, cfg)
        final = poses[-1].yaw
        diff = min(abs(final - 90.0), 360 - abs(final - 90.0))
        assert diff <= cfg.delta_r

    # Chords mixing a rotation key with a movement key in the SAME frame
    # cannot retrace under rotate-then-translate ordering (the inverse frame
    # un-rotates before un-translating), so closure is only claimed for
    # vectors that keep the two families separate. All toolkit generators
    # emit single-primitive runs, which are covered.
    _move_chords = st.frozensets(st.sampled_from([W, A, S, D]), max_size=3)
    _rot_chords = st.frozensets(st.sampled_from([PU, PD, YL, YR]), max_size=2)

    @given(
        actions=st.lists(st.one_of(_move_chords, _rot_chords).map(ActionVector), max_size=40),
        yaw=grid_yaw,
        cfg=configs,
    )
    @settings(max_examples=200, deadline=None)
    def test_loop_closure_is_exact(self, actions, yaw, cfg):
        # pitch starts at 0 and |sequence| <= 40 with delta_r <= 2, so the
        # +/-89 clamp can never engage and closure is bit-exact.
        start = Pose(x=10.0, y=-20.0, z=5.0, yaw=yaw, pitch=0.0)
        back = [a.inverse() for a in reversed(actions)]
        poses = apply_sequence(start, actions + back, cfg)
        if poses:
            assert poses[-1] == start

    def test_determinism(self):
        actions = [ActionVector.of(W, YL), ActionVector.of(PU), ActionVector.idle()] * 10
        a = apply_sequence(Pose(yaw=17.5), actions, MID)
        b = apply_sequence(Pose(yaw=17.5), actions, MID)
        assert a == b


class TestPresets:
    @pytest.mark.parametrize(
        "name,delta_r,delta_p",
        [("mid", 0.7, 150.0), ("large", 1.4, 280.0), ("small", 0.4, 100.0)],
    )
    def test_published_values(self, name, delta_r, delta_p):
        cfg = preset(name)
        assert cfg.delta_r == delta_r
        assert cfg.delta_p == delta_p

    def test_five_presets_exist(self):
        from worldloop.actions import PRESET_NAMES

        assert len(PRESET_NAMES) == 5

    def test_unknown_name_lists_valid_labels(self):
        with pytest.raises(UnknownPresetError, match="mid"):
            preset("gigantic")

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ActionSpaceConfig(delta_p=-1.0, delta_r=0.7)
        with pytest.raises(ValueError):
            ActionSpaceConfig(delta_p=100.0, delta_r=90.0)


class TestActionVectorCodec:
    def test_bit_order(self):
        assert ActionVector.of(W).mask == 1
        assert ActionVector.of(A).mask == 2
        assert ActionVector.of(S).mask == 4
        assert ActionVector.of(D).mask == 8
        assert ActionVector.of(PU).mask == 16
        assert ActionVector.of(PD).mask == 32
        assert ActionVector.of(YL).mask == 64
        assert ActionVector.of(YR).mask == 128

    def test_mask_roundtrip_all_256(self):
        for m in range(256):
            assert ActionVector.from_mask(m).mask == m

    def test_mask_range(self):
        with pytest.raises(ValueError):
            ActionVector.from_mask(256)

    def test_text_forms(self):
        assert ActionVector.idle().text == "-"
        assert ActionVector.from_text("-") == ActionVector.idle()
        assert ActionVector.of(YL, W).text == "W+YawLeft"
        assert ActionVector.from_text("W+YawLeft") == ActionVector.of(W, YL)

    def test_text_rejects_unknown(self):
        with pytest.raises(ValueError, match="Q"):
            ActionVector.from_text("W+Q")

    @given(v=action_vectors)
    def test_text_roundtrip(self, v):
        assert ActionVector.from_text(v.text) == v


class TestPoseInvariants:
    def test_yaw_wrapped(self):
        assert Pose(yaw=725.0).yaw == 5.0
        assert Pose(yaw=-10.0).yaw == 350.0

    def test_pitch_clamped(self):
        assert Pose(pitch=115.0).pitch == 89.0
        assert Pose(pitch=-115.0).pitch == -89.0

    def test_grid_quantization_is_idempotent(self):
        p = Pose(1.23456789, -9.87654321, 0.5, 12.3456789, -4.56789)
        q = Pose(p.x, p.y, p.z, p.yaw, p.pitch)
        assert p == q
