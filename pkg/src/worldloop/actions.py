"""Keyboard-style action vocabulary and pose kinematics.

Conventions (normative for the whole toolkit):

* World frame is z-up. Yaw 0 looks along +X and increases counter-clockwise
  seen from above, so ``YawLeft`` adds ``delta_r`` and ``YawRight`` subtracts
  it. Pitch is positive upward. A ``YawRight`` step from yaw 0 therefore
  lands just below 360.
* Within one frame, rotation is applied first and translation second, so a
  turn-and-move chord moves along the new heading.
* An :class:`ActionVector` is a *set* of held primitives (keyboard chords).
  Each held movement key contributes ``delta_p`` along its local direction;
  held inverse pairs cancel exactly. Pitch never affects translation and
  movement never changes z (ground-style locomotion).
* Poses are quantized to fixed grids: positions to 1/1024 world unit,
  angles to 1/4096 degree. Per-step increments are snapped to the same
  grids, which turns pose updates into exact integer arithmetic on doubles:
  retracing a path with inverted actions restores the starting pose
  *bit-exactly*, on every platform. The price is that a step of nominal
  size ``delta_p`` is exact only up to half a grid cell per component.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from .dettrig import sincos_deg
from .errors import UnknownPresetError

POSITION_GRID = 1024.0  # grid cells per world unit (2**10)
ANGLE_GRID = 4096.0     # grid cells per degree (2**12)

PITCH_LIMIT = 89.0


def snap_position(v: float) -> float:
    """Round to the position grid, half away from zero (odd: snap(-v) == -snap(v))."""
    if v >= 0.0:
        return math.floor(v * POSITION_GRID + 0.5) / POSITION_GRID
    return -math.floor(-v * POSITION_GRID + 0.5) / POSITION_GRID


def snap_angle(v: float) -> float:
    if v >= 0.0:
        return math.floor(v * ANGLE_GRID + 0.5) / ANGLE_GRID
    return -math.floor(-v * ANGLE_GRID + 0.5) / ANGLE_GRID


class ActionPrimitive(enum.Enum):
    """The eight control primitives. Wire bit order is the definition order."""

    W = "W"
    A = "A"
    S = "S"
    D = "D"
    PITCH_UP = "PitchUp"
    PITCH_DOWN = "PitchDown"
    YAW_LEFT = "YawLeft"
    YAW_RIGHT = "YawRight"

    @property
    def bit(self) -> int:
        return _BIT_ORDER.index(self)

    @property
    def inverse(self) -> "ActionPrimitive":
        return _INVERSE[self]

    def __repr__(self) -> str:  # terse in test output
        return self.value


_BIT_ORDER = (
    ActionPrimitive.W,
    ActionPrimitive.A,
    ActionPrimitive.S,
    ActionPrimitive.D,
    ActionPrimitive.PITCH_UP,
    ActionPrimitive.PITCH_DOWN,
    ActionPrimitive.YAW_LEFT,
    ActionPrimitive.YAW_RIGHT,
)

_INVERSE = {
    ActionPrimitive.W: ActionPrimitive.S,
    ActionPrimitive.S: ActionPrimitive.W,
    ActionPrimitive.A: ActionPrimitive.D,
    ActionPrimitive.D: ActionPrimitive.A,
    ActionPrimitive.PITCH_UP: ActionPrimitive.PITCH_DOWN,
    ActionPrimitive.PITCH_DOWN: ActionPrimitive.PITCH_UP,
    ActionPrimitive.YAW_LEFT: ActionPrimitive.YAW_RIGHT,
    ActionPrimitive.YAW_RIGHT: ActionPrimitive.YAW_LEFT,
}

_BY_NAME = {p.value: p for p in ActionPrimitive}


@dataclass(frozen=True)
class ActionVector:
    """Set of simultaneously held primitives; empty means idle.

    Wire form is a single byte: bit 0..7 = W, A, S, D, PitchUp, PitchDown,
    YawLeft, YawRight. Text form is the alphabetically sorted primitive
    names joined by "+", or "-" when idle.
    """

    held: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if not isinstance(self.held, frozenset):
            object.__setattr__(self, "held", frozenset(self.held))
        for p in self.held:
            if not isinstance(p, ActionPrimitive):
                raise TypeError(f"not an ActionPrimitive: {p!r}")

    @classmethod
    def of(cls, *prims: ActionPrimitive) -> "ActionVector":
        return cls(frozenset(prims))

    @classmethod
    def idle(cls) -> "ActionVector":
        return cls(frozenset())

    @classmethod
    def from_mask(cls, mask: int) -> "ActionVector":
        if not 0 <= mask <= 0xFF:
            raise ValueError(f"action mask out of range: {mask}")
        return cls(frozenset(p for i, p in enumerate(_BIT_ORDER) if mask >> i & 1))

    @classmethod
    def from_text(cls, text: str) -> "ActionVector":
        text = text.strip()
        if text == "-" or text == "":
            return cls.idle()
        try:
            return cls(frozenset(_BY_NAME[name] for name in text.split("+")))
        except KeyError as e:
            raise ValueError(f"unknown action primitive {e.args[0]!r} in {text!r}") from None

    @property
    def mask(self) -> int:
        m = 0
        for p in self.held:
            m |= 1 << p.bit
        return m

    @property
    def text(self) -> str:
        if not self.held:
            return "-"
        return "+".join(sorted(p.value for p in self.held))

    def inverse(self) -> "ActionVector":
        return ActionVector(frozenset(p.inverse for p in self.held))

    def __contains__(self, p: ActionPrimitive) -> bool:
        return p in self.held

    def __iter__(self):
        return iter(sorted(self.held, key=lambda p: p.bit))

    def __len__(self) -> int:
        return len(self.held)

    def __repr__(self) -> str:
        return f"ActionVector({self.text})"


def inverse(action: ActionVector) -> ActionVector:
    """Replace every held primitive by its partner; involutive."""
    return action.inverse()


@dataclass(frozen=True)
class ActionSpaceConfig:
    """Step sizes of the action space: delta_p world units and delta_r degrees per frame."""

    delta_p: float
    delta_r: float
    name: str = "custom"

    def __post_init__(self):
        if not self.delta_p > 0:
            raise ValueError(f"delta_p must be > 0, got {self.delta_p}")
        if not 0 < self.delta_r < 90:
            raise ValueError(f"delta_r must be in (0, 90), got {self.delta_r}")


# Step-size presets, ordered small to large. The middle three are the
# published combinations; "broad" and "huge" extend the monotone sequence to
# five.
PRESETS = {
    "small": ActionSpaceConfig(delta_p=100.0, delta_r=0.4, name="small"),
    "mid": ActionSpaceConfig(delta_p=150.0, delta_r=0.7, name="mid"),
    "broad": ActionSpaceConfig(delta_p=200.0, delta_r=1.0, name="broad"),
    "large": ActionSpaceConfig(delta_p=280.0, delta_r=1.4, name="large"),
    "huge": ActionSpaceConfig(delta_p=400.0, delta_r=2.0, name="huge"),
}

PRESET_NAMES = tuple(PRESETS)


def preset(name: str) -> ActionSpaceConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise UnknownPresetError(
            f"unknown action-space preset {name!r}; valid presets: {', '.join(PRESET_NAMES)}"
        ) from None


@dataclass(frozen=True)
class Pose:
    """Agent/camera state: grid-quantized position plus yaw/pitch.

    Yaw is stored wrapped into [0, 360); pitch is clamped to [-89, 89].
    """

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    yaw: float = 0.0
    pitch: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", snap_position(self.x))
        object.__setattr__(self, "y", snap_position(self.y))
        object.__setattr__(self, "z", snap_position(self.z))
        object.__setattr__(self, "yaw", _wrap_yaw(snap_angle(self.yaw)))
        object.__setattr__(self, "pitch", _clamp_pitch(snap_angle(self.pitch)))

    @property
    def position(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)


def _wrap_yaw(y: float) -> float:
    y = math.fmod(y, 360.0)
    return y + 360.0 if y < 0.0 else y


def _clamp_pitch(p: float) -> float:
    return min(PITCH_LIMIT, max(-PITCH_LIMIT, p))


def step_pose(pose: Pose, action: ActionVector, cfg: ActionSpaceConfig) -> Pose:
    """Advance a pose by one frame of held actions.

    Rotation first (yaw wraps, pitch clamps), then translation along the new
    heading. Integer-weighted direction sums make inverse pairs cancel
    bit-exactly, and grid snapping makes a step followed by its inverse
    restore the pose bit-exactly (away from the pitch clamp).
    """
    held = action.held
    turn = (ActionPrimitive.YAW_LEFT in held) - (ActionPrimitive.YAW_RIGHT in held)
    tilt = (ActionPrimitive.PITCH_UP in held) - (ActionPrimitive.PITCH_DOWN in held)
    dr = snap_angle(cfg.delta_r)
    yaw = _wrap_yaw(pose.yaw + dr * turn) if turn else pose.yaw
    pitch = _clamp_pitch(pose.pitch + dr * tilt) if tilt else pose.pitch

    fwd = (ActionPrimitive.W in held) - (ActionPrimitive.S in held)
    left = (ActionPrimitive.A in held) - (ActionPrimitive.D in held)
    if fwd or left:
        s, c = sincos_deg(yaw)
        # local forward = (c, s), local left = (-s, c)
        dx = snap_position(cfg.delta_p * (fwd * c - left * s))
        dy = snap_position(cfg.delta_p * (fwd * s + left * c))
        x, y = pose.x + dx, pose.y + dy
    else:
        x, y = pose.x, pose.y

    return Pose(x, y, pose.z, yaw, pitch)


def apply_sequence(start: Pose, actions: list, cfg: ActionSpaceConfig) -> list:
    """Iterate step_pose; returns one pose per action (start excluded)."""
    poses = []
    p = start
    for a in actions:
        p = step_pose(p, a, cfg)
        poses.append(p)
    return poses
