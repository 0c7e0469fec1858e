"""Deterministic software raycaster.

Perspective projection by per-pixel raycast against the terrain heightfield
(adaptive march + bisection refine) and the landmark boxes (analytic slab
test); third person adds a two-tone capsule avatar with correct depth. All
per-pixel math is IEEE double add/mul/div/sqrt in a fixed order inside a
numba kernel (no fastmath, no transcendentals), so identical inputs give
byte-identical frames. The camera basis comes from the fixed-polynomial
trig in dettrig for the same reason.

Rendering is a pure function of (world, pose, resolution); frame_index is
carried as metadata only.
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass

import numba
import numpy as np
from numba import njit, prange
from PIL import Image

# take the portable threading layer unconditionally; avoids the noisy probe
# for incompatible TBB builds and keeps scheduling behavior uniform
numba.config.THREADING_LAYER = "workqueue"

from .actions import Pose
from .dettrig import sincos_deg, tan_deg, view_direction
from .errors import RenderError
from .worldgen import CHECKER_SIZE, World

FOV_X_DEG = 70.0
DEFAULT_RESOLUTION = (256, 192)

BOOM_LENGTH = 320.0
BOOM_ELEVATION_DEG = 16.0
BOOM_MARGIN = 8.0
BOOM_MIN = 40.0
_HEAD_OFFSET = 10.0

AVATAR_RADIUS = 26.0
AVATAR_BODY_COLOR = (235.0, 60.0, 190.0)
AVATAR_HEAD_COLOR = (250.0, 246.0, 240.0)
_AVATAR_BELOW_EYE = 140.0
_AVATAR_ABOVE_EYE = 15.0
_AVATAR_HEAD_LEN = 45.0


class Perspective(enum.Enum):
    FIRST = "first"
    THIRD = "third"


@dataclass(frozen=True)
class Frame:
    """Row-major 8-bit RGB image; exactly width*height*3 bytes."""

    width: int
    height: int
    data: bytes
    frame_index: int = 0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise RenderError(f"resolution must be positive, got {self.width}x{self.height}")
        if len(self.data) != self.width * self.height * 3:
            raise RenderError(
                f"frame data is {len(self.data)} bytes, expected "
                f"{self.width * self.height * 3} for {self.width}x{self.height}"
            )

    def to_array(self) -> np.ndarray:
        return np.frombuffer(self.data, dtype=np.uint8).reshape(self.height, self.width, 3)

    @classmethod
    def from_array(cls, arr: np.ndarray, frame_index: int = 0) -> "Frame":
        h, w, c = arr.shape
        assert c == 3
        return cls(width=w, height=h, data=arr.astype(np.uint8).tobytes(), frame_index=frame_index)

    def save_png(self, path) -> None:
        Image.frombytes("RGB", (self.width, self.height), self.data).save(path, format="PNG")

    @classmethod
    def load_png(cls, path, frame_index: int = 0) -> "Frame":
        img = Image.open(path).convert("RGB")
        return cls(width=img.width, height=img.height, data=img.tobytes(), frame_index=frame_index)

    def to_png_bytes(self) -> bytes:
        buf = io.BytesIO()
        Image.frombytes("RGB", (self.width, self.height), self.data).save(buf, format="PNG")
        return buf.getvalue()

    @classmethod
    def load_png_bytes(cls, blob: bytes, frame_index: int = 0) -> "Frame":
        img = Image.open(io.BytesIO(blob)).convert("RGB")
        return cls(width=img.width, height=img.height, data=img.tobytes(), frame_index=frame_index)

    def save_raw(self, path) -> None:
        """Raw .rgb blob plus a sidecar .hdr holding 'width height'."""
        path = str(path)
        with open(path, "wb") as f:
            f.write(self.data)
        with open(path + ".hdr", "w") as f:
            f.write(f"{self.width} {self.height}\n")

    @classmethod
    def load_raw(cls, path, frame_index: int = 0) -> "Frame":
        path = str(path)
        with open(path + ".hdr") as f:
            w, h = (int(v) for v in f.read().split())
        with open(path, "rb") as f:
            return cls(width=w, height=h, data=f.read(), frame_index=frame_index)


@njit(cache=True, inline="always")
def _height_sample(heights, origin, inv_cell, x, y):
    n = heights.shape[0] - 1
    gx = (x - origin) * inv_cell
    gy = (y - origin) * inv_cell
    lim = n - 1e-9
    if gx < 0.0:
        gx = 0.0
    elif gx > lim:
        gx = lim
    if gy < 0.0:
        gy = 0.0
    elif gy > lim:
        gy = lim
    i = int(gx)
    j = int(gy)
    fx = gx - i
    fy = gy - j
    h00 = heights[j, i]
    h10 = heights[j, i + 1]
    h01 = heights[j + 1, i]
    h11 = heights[j + 1, i + 1]
    return (h00 * (1.0 - fx) + h10 * fx) * (1.0 - fy) + (h01 * (1.0 - fx) + h11 * fx) * fy


@njit(cache=True, inline="always")
def _box_hit(boxes, k, px, py, pz, dx, dy, dz, t_max):
    """Slab test; returns (t_entry, entry_axis) or (1e30, -1)."""
    t0 = 0.0
    t1 = t_max
    axis = -1
    # x
    if dx == 0.0:
        if px <= boxes[k, 0] or px >= boxes[k, 3]:
            return 1e30, -1
    else:
        ta = (boxes[k, 0] - px) / dx
        tb = (boxes[k, 3] - px) / dx
        if ta > tb:
            ta, tb = tb, ta
        if ta > t0:
            t0 = ta
            axis = 0
        if tb < t1:
            t1 = tb
        if t0 > t1:
            return 1e30, -1
    # y
    if dy == 0.0:
        if py <= boxes[k, 1] or py >= boxes[k, 4]:
            return 1e30, -1
    else:
        ta = (boxes[k, 1] - py) / dy
        tb = (boxes[k, 4] - py) / dy
        if ta > tb:
            ta, tb = tb, ta
        if ta > t0:
            t0 = ta
            axis = 1
        if tb < t1:
            t1 = tb
        if t0 > t1:
            return 1e30, -1
    # z
    if dz == 0.0:
        if pz <= boxes[k, 2] or pz >= boxes[k, 5]:
            return 1e30, -1
    else:
        ta = (boxes[k, 2] - pz) / dz
        tb = (boxes[k, 5] - pz) / dz
        if ta > tb:
            ta, tb = tb, ta
        if ta > t0:
            t0 = ta
            axis = 2
        if tb < t1:
            t1 = tb
        if t0 > t1:
            return 1e30, -1
    if t0 <= 0.0 or t0 >= t_max:
        return 1e30, -1
    return t0, axis


@njit(cache=True, inline="always")
def _terrain_hit(heights, origin, inv_cell, max_h, px, py, pz, dx, dy, dz, t_lim):
    if dz >= 0.0 and pz > max_h:
        return 1e30
    t = 0.0
    while t < t_lim:
        dt = 6.0 + 0.035 * t
        tn = t + dt
        if tn > t_lim:
            tn = t_lim
        x = px + tn * dx
        y = py + tn * dy
        z = pz + tn * dz
        if dz > 0.0 and z > max_h:
            return 1e30
        if z < _height_sample(heights, origin, inv_cell, x, y):
            lo = t
            hi = tn
            for _ in range(12):
                mid = 0.5 * (lo + hi)
                mz = pz + mid * dz
                mh = _height_sample(heights, origin, inv_cell, px + mid * dx, py + mid * dy)
                if mz < mh:
                    hi = mid
                else:
                    lo = mid
            return hi
        if tn >= t_lim:
            break
        t = tn
    return 1e30


@njit(cache=True, parallel=True)
def _trace_frame(out, px, py, pz, fx, fy, fz, rx, ry, rz, ux, uy, uz, tanx, tany,
                 heights, origin, inv_cell, max_h, extent,
                 boxes, box_colors, bands, band_limits, sky_top, sky_hor,
                 cap_on, cax, cay, cz0, cz1, cap_r):
    H = out.shape[0]
    W = out.shape[1]
    nb = boxes.shape[0]
    t_far = 4.0 * extent
    for row in prange(H):
        ndc_y = (row + 0.5) / H * 2.0 - 1.0
        for col in range(W):
            ndc_x = (col + 0.5) / W * 2.0 - 1.0
            dx = fx + ndc_x * tanx * rx - ndc_y * tany * ux
            dy = fy + ndc_x * tanx * ry - ndc_y * tany * uy
            dz = fz + ndc_x * tanx * rz - ndc_y * tany * uz
            inv_len = 1.0 / math.sqrt(dx * dx + dy * dy + dz * dz)
            dx *= inv_len
            dy *= inv_len
            dz *= inv_len

            t_box = 1e30
            box_id = -1
            box_axis = -1
            for k in range(nb):
                tk, ax = _box_hit(boxes, k, px, py, pz, dx, dy, dz, t_box)
                if tk < t_box:
                    t_box = tk
                    box_id = k
                    box_axis = ax

            t_cap = 1e30
            if cap_on:
                ox = px - cax
                oy = py - cay
                a2 = dx * dx + dy * dy
                if a2 > 1e-12:
                    b2 = ox * dx + oy * dy
                    c2 = ox * ox + oy * oy - cap_r * cap_r
                    disc = b2 * b2 - a2 * c2
                    if disc > 0.0:
                        tc = (-b2 - math.sqrt(disc)) / a2
                        if tc > 0.0:
                            zc = pz + tc * dz
                            if cz0 <= zc <= cz1:
                                t_cap = tc
                # sphere caps
                oz0 = pz - cz1
                b3 = ox * dx + oy * dy + oz0 * dz
                c3 = ox * ox + oy * oy + oz0 * oz0 - cap_r * cap_r
                disc = b3 * b3 - c3
                if disc > 0.0:
                    tc = -b3 - math.sqrt(disc)
                    if 0.0 < tc < t_cap:
                        t_cap = tc
                oz0 = pz - cz0
                b3 = ox * dx + oy * dy + oz0 * dz
                c3 = ox * ox + oy * oy + oz0 * oz0 - cap_r * cap_r
                disc = b3 * b3 - c3
                if disc > 0.0:
                    tc = -b3 - math.sqrt(disc)
                    if 0.0 < tc < t_cap:
                        t_cap = tc

            t_lim = t_box if t_box < t_cap else t_cap
            if t_lim > t_far:
                t_lim = t_far
            t_terr = _terrain_hit(heights, origin, inv_cell, max_h, px, py, pz, dx, dy, dz, t_lim)

            r = 0.0
            g = 0.0
            b = 0.0
            if t_cap < t_terr and t_cap < t_box:
                zc = pz + t_cap * dz
                if zc > cz1 - _AVATAR_HEAD_LEN_K:
                    r, g, b = _HEAD_R, _HEAD_G, _HEAD_B
                else:
                    r, g, b = _BODY_R, _BODY_G, _BODY_B
            elif t_terr < t_box:
                x = px + t_terr * dx
                y = py + t_terr * dy
                h = _height_sample(heights, origin, inv_cell, x, y)
                if h < band_limits[0]:
                    bi = 0
                elif h < band_limits[1]:
                    bi = 1
                elif h < band_limits[2]:
                    bi = 2
                else:
                    bi = 3
                f = 1.0
                if (math.floor(x / _CHECKER) + math.floor(y / _CHECKER)) % 2.0 == 1.0:
                    f = 0.859375
                r = bands[bi, 0] * f
                g = bands[bi, 1] * f
                b = bands[bi, 2] * f
            elif box_id >= 0:
                f = 1.0
                if box_axis == 2:
                    f = 1.18 if dz < 0.0 else 0.55
                # world-anchored grout lines keep faces pose-discriminable
                # while leaving the exact palette color dominant
                hx = px + t_box * dx
                hy = py + t_box * dy
                hz = pz + t_box * dz
                if box_axis == 0:
                    tu, tv = hy, hz
                elif box_axis == 1:
                    tu, tv = hx, hz
                else:
                    tu, tv = hx, hy
                gu = tu - 28.0 * math.floor(tu / 28.0)
                gv = tv - 28.0 * math.floor(tv / 28.0)
                if gu < 2.5 or gv < 2.5:
                    f *= 0.82
                r = box_colors[box_id, 0] * f
                g = box_colors[box_id, 1] * f
                b = box_colors[box_id, 2] * f
            else:
                grad = math.sqrt(dz) if dz > 0.0 else 0.0
                r = sky_hor[0] + (sky_top[0] - sky_hor[0]) * grad
                g = sky_hor[1] + (sky_top[1] - sky_hor[1]) * grad
                b = sky_hor[2] + (sky_top[2] - sky_hor[2]) * grad
                # faint elevation banding makes pure-sky views sensitive to
                # small pitch changes
                if math.floor(dz * 64.0) % 2.0 == 1.0:
                    r -= 2.0
                    g -= 2.0
                    b -= 2.0

            vr = math.floor(r + 0.5)
            vg = math.floor(g + 0.5)
            vb = math.floor(b + 0.5)
            out[row, col, 0] = np.uint8(255.0 if vr > 255.0 else (0.0 if vr < 0.0 else vr))
            out[row, col, 1] = np.uint8(255.0 if vg > 255.0 else (0.0 if vg < 0.0 else vg))
            out[row, col, 2] = np.uint8(255.0 if vb > 255.0 else (0.0 if vb < 0.0 else vb))


# module-level constants the kernel closes over (numba freezes them at compile)
_CHECKER = CHECKER_SIZE
_AVATAR_HEAD_LEN_K = _AVATAR_HEAD_LEN
_BODY_R, _BODY_G, _BODY_B = AVATAR_BODY_COLOR
_HEAD_R, _HEAD_G, _HEAD_B = AVATAR_HEAD_COLOR


@njit(cache=True)
def _ray_distance(px, py, pz, dx, dy, dz, heights, origin, inv_cell, max_h, boxes, t_max):
    """Nearest terrain/box hit along a single ray, or 1e30."""
    t_best = 1e30
    for k in range(boxes.shape[0]):
        tk, _ = _box_hit(boxes, k, px, py, pz, dx, dy, dz, t_max)
        if tk < t_best:
            t_best = tk
    lim = t_best if t_best < t_max else t_max
    tt = _terrain_hit(heights, origin, inv_cell, max_h, px, py, pz, dx, dy, dz, lim)
    if tt < t_best:
        t_best = tt
    return t_best


def _camera_basis(pose: Pose):
    f = view_direction(pose.yaw, pose.pitch)
    sy, cy = sincos_deg(pose.yaw)
    r = (sy, -cy, 0.0)
    u = (
        r[1] * f[2] - r[2] * f[1],
        r[2] * f[0] - r[0] * f[2],
        r[0] * f[1] - r[1] * f[0],
    )
    return f, r, u


def render(world: World, camera: Pose, resolution: tuple = DEFAULT_RESOLUTION,
           frame_index: int = 0, _avatar: Pose | None = None) -> Frame:
    """Render one frame from a camera pose. Pure and bit-deterministic."""
    w, h = resolution
    if w <= 0 or h <= 0:
        raise RenderError(f"resolution must be positive, got {w}x{h}")
    if not world.contains(camera.x, camera.y):
        raise RenderError(
            f"camera ({camera.x:.1f}, {camera.y:.1f}) outside world extent {world.extent}"
        )
    f, r, u = _camera_basis(camera)
    tanx = tan_deg(FOV_X_DEG / 2.0)
    tany = tanx * h / w
    out = np.empty((h, w, 3), dtype=np.uint8)
    if _avatar is None:
        cap_on, cax, cay, cz0, cz1 = False, 0.0, 0.0, 0.0, 0.0
    else:
        cap_on = True
        cax, cay = _avatar.x, _avatar.y
        cz0 = _avatar.z - _AVATAR_BELOW_EYE
        cz1 = _avatar.z + _AVATAR_ABOVE_EYE
    _trace_frame(
        out, camera.x, camera.y, camera.z, f[0], f[1], f[2], r[0], r[1], r[2],
        u[0], u[1], u[2], tanx, tany,
        world.heights, -world.extent, 1.0 / world.cell, world.max_height, world.extent,
        world.boxes, world.box_colors, world.band_colors, world.band_limits,
        world.sky_top, world.sky_horizon,
        cap_on, cax, cay, cz0, cz1, AVATAR_RADIUS,
    )
    return Frame(width=w, height=h, data=out.tobytes(), frame_index=frame_index)


def third_person_camera(character: Pose, world: World) -> Pose:
    """Boom camera behind/above the character, shortened on occlusion.

    The boom runs opposite the character's horizontal heading; its elevation
    is the fixed base angle plus the character's pitch (clamped, so pitch
    input tilts the rig and stays visible in third person). The camera looks
    exactly at the head point by construction (pitch = -elevation).
    """
    hx, hy, hz = character.x, character.y, character.z + _HEAD_OFFSET
    # negative elevation is allowed (camera below the head looking up); the
    # occlusion ray keeps the boom out of terrain either way
    elevation = min(80.0, max(-35.0, BOOM_ELEVATION_DEG + character.pitch))
    sy, cy = sincos_deg(character.yaw)
    se, ce = sincos_deg(elevation)
    bx, by, bz = -ce * cy, -ce * sy, se  # unit boom direction

    length = BOOM_LENGTH
    hit = _ray_distance(
        hx, hy, hz, bx, by, bz,
        world.heights, -world.extent, 1.0 / world.cell, world.max_height,
        world.boxes, BOOM_LENGTH + BOOM_MARGIN,
    )
    if hit < 1e29:
        length = min(length, hit - BOOM_MARGIN)
    bound = world.extent - 2.0
    for p, d in ((hx, bx), (hy, by)):
        if d > 0.0:
            length = min(length, (bound - p) / d)
        elif d < 0.0:
            length = min(length, (-bound - p) / d)
    length = max(length, BOOM_MIN)

    return Pose(
        x=hx + length * bx,
        y=hy + length * by,
        z=hz + length * bz,
        yaw=character.yaw,
        pitch=-elevation,
    )


def render_third_person(world: World, character: Pose, resolution: tuple = DEFAULT_RESOLUTION,
                        frame_index: int = 0) -> Frame:
    """Boom-camera render with the character drawn as a two-tone capsule."""
    cam = third_person_camera(character, world)
    return render(world, cam, resolution, frame_index, _avatar=character)
