"""Seeded procedural worlds: slope-bounded terrain plus colored box landmarks.

A world is fully determined by (seed, category, extent). Terrain is a sum of
compactly supported polynomial bumps — no transcendentals, so the heightfield
is bit-reproducible — clipped to [-70, 80] so the agent's eye level (>= 90)
can never sink below ground. Landmarks are mutually non-overlapping
axis-aligned boxes with pairwise-distinct colors, which is what makes
revisits visually discriminable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .actions import POSITION_GRID, snap_position
from .errors import WorldGenError

CATEGORIES = (
    "landscape",
    "scifi",
    "stylized",
    "ancient",
    "urban",
    "industrial",
    "interior",
    "aquatic",
)

GRID_CELLS = 128
TERRAIN_MIN = -70.0
TERRAIN_MAX = 80.0
EYE_HEIGHT = 160.0
SPAWN_CLEAR_RADIUS = 420.0
BOUNDS_MARGIN = 2.0
MIN_LANDMARKS = 12
_LANDMARK_GAP = 60.0
_COLLISION_BACKOFF = 0.5

# 24 visually distinct landmark colors (avatar tones are reserved separately).
DISTINCT_COLORS = (
    (228, 26, 28), (55, 126, 184), (77, 175, 74), (152, 78, 163),
    (255, 127, 0), (255, 255, 51), (166, 86, 40), (247, 129, 191),
    (0, 153, 153), (204, 0, 102), (102, 102, 255), (0, 102, 0),
    (153, 0, 0), (0, 51, 153), (255, 204, 0), (102, 0, 102),
    (0, 204, 102), (204, 102, 0), (51, 153, 255), (153, 153, 0),
    (255, 80, 80), (80, 255, 160), (160, 80, 255), (200, 200, 200),
)

# terrain height bands, sky gradient, per category
_PALETTES = {
    "landscape": ((58, 92, 48), (86, 124, 62), (128, 144, 84), (172, 164, 126),
                  (96, 148, 210), (200, 222, 240)),
    "scifi": ((44, 40, 58), (66, 60, 88), (96, 88, 128), (140, 130, 176),
              (20, 12, 40), (90, 60, 130)),
    "stylized": ((96, 160, 96), (140, 196, 110), (196, 220, 130), (240, 236, 170),
                 (140, 190, 250), (235, 245, 255)),
    "ancient": ((110, 96, 70), (140, 122, 88), (172, 152, 110), (204, 186, 140),
                (170, 150, 110), (235, 220, 180)),
    "urban": ((70, 70, 74), (96, 96, 100), (128, 128, 132), (164, 164, 168),
              (120, 150, 190), (210, 220, 230)),
    "industrial": ((62, 58, 52), (88, 82, 72), (118, 110, 96), (150, 142, 124),
                   (140, 130, 120), (200, 190, 170)),
    "interior": ((120, 100, 80), (146, 124, 98), (176, 152, 120), (206, 182, 146),
                 (60, 56, 52), (120, 116, 110)),
    "aquatic": ((24, 70, 110), (34, 96, 140), (52, 128, 168), (90, 168, 196),
                (60, 130, 190), (180, 225, 240)),
}

_BAND_LIMITS = (-25.0, 10.0, 45.0)
CHECKER_SIZE = 48.0


@dataclass(frozen=True)
class WorldSpec:
    seed: int
    category: str
    extent: float = 12000.0

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise WorldGenError(
                f"unknown category {self.category!r}; valid: {', '.join(CATEGORIES)}"
            )
        if not self.extent > 0:
            raise WorldGenError(f"extent must be > 0, got {self.extent}")


@dataclass(frozen=True)
class Landmark:
    """Axis-aligned box with a unique dominant color."""

    box: tuple  # (xmin, ymin, zmin, xmax, ymax, zmax)
    color: tuple  # (r, g, b)


@dataclass(frozen=True)
class World:
    spec: WorldSpec
    heights: np.ndarray        # (GRID_CELLS+1, GRID_CELLS+1) float64 node heights
    cell: float                # node spacing in world units
    landmarks: tuple
    palette: dict = field(repr=False)
    # kernel-ready packed arrays (derived from landmarks/palette)
    boxes: np.ndarray = field(repr=False)        # (K, 6) float64
    box_colors: np.ndarray = field(repr=False)   # (K, 3) float64
    band_colors: np.ndarray = field(repr=False)  # (4, 3) float64
    band_limits: np.ndarray = field(repr=False)  # (3,) float64
    sky_top: np.ndarray = field(repr=False)      # (3,) float64
    sky_horizon: np.ndarray = field(repr=False)  # (3,) float64
    max_height: float = 0.0

    @property
    def extent(self) -> float:
        return self.spec.extent

    def height_at(self, x: float, y: float) -> float:
        """Bilinear terrain height; coordinates clamped to the grid."""
        n = GRID_CELLS
        gx = min(max((x + self.extent) / self.cell, 0.0), float(n) - 1e-9)
        gy = min(max((y + self.extent) / self.cell, 0.0), float(n) - 1e-9)
        i, j = int(gx), int(gy)
        fx, fy = gx - i, gy - j
        h = self.heights
        h00, h10 = h[j, i], h[j, i + 1]
        h01, h11 = h[j + 1, i], h[j + 1, i + 1]
        return (h00 * (1 - fx) + h10 * fx) * (1 - fy) + (h01 * (1 - fx) + h11 * fx) * fy

    def eye_level(self, x: float, y: float) -> float:
        return snap_position(self.height_at(x, y) + EYE_HEIGHT)

    def contains(self, x: float, y: float) -> bool:
        b = self.extent
        return -b <= x <= b and -b <= y <= b


def _terrain(rng: np.random.Generator, extent: float, amp_scale: float) -> np.ndarray:
    n = GRID_CELLS + 1
    ax = np.linspace(-extent, extent, n)
    xs, ys = np.meshgrid(ax, ax)
    h = np.zeros((n, n))
    for _ in range(42):
        cx, cy = rng.uniform(-0.9 * extent, 0.9 * extent, size=2)
        r = rng.uniform(0.12, 0.35) * extent
        # |amp| <= 0.227*r keeps each bump's max slope under ~0.35
        amp = rng.uniform(-1.0, 1.0) * min(0.227 * r, 90.0) * amp_scale
        d2 = ((xs - cx) ** 2 + (ys - cy) ** 2) / (r * r)
        mask = d2 < 1.0
        h += np.where(mask, amp * (1.0 - np.minimum(d2, 1.0)) ** 2, 0.0)
    return np.clip(h, TERRAIN_MIN, TERRAIN_MAX)


_AMP_SCALE = {
    "landscape": 1.0, "scifi": 0.6, "stylized": 0.8, "ancient": 0.7,
    "urban": 0.3, "industrial": 0.35, "interior": 0.05, "aquatic": 0.4,
}


def build_world(spec: WorldSpec) -> World:
    """Deterministically generate the world for a spec.

    Raises WorldGenError when the extent cannot host the required landmark
    count around the protected spawn disc.
    """
    if spec.extent < 900.0:
        raise WorldGenError(
            f"extent {spec.extent} too small: need >= 900 units to place "
            f"{MIN_LANDMARKS} landmarks around the spawn clearing"
        )
    cat_idx = CATEGORIES.index(spec.category)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([spec.seed, cat_idx])))

    heights = _terrain(rng, spec.extent, _AMP_SCALE[spec.category])

    target = MIN_LANDMARKS + int(rng.integers(0, 9))
    placed: list[tuple] = []
    tries = 0
    while len(placed) < target and tries < 4000:
        tries += 1
        hx = rng.uniform(60.0, 220.0)
        hy = rng.uniform(60.0, 220.0)
        lim_x = 0.82 * spec.extent - hx
        lim_y = 0.82 * spec.extent - hy
        if lim_x <= 0 or lim_y <= 0:
            continue
        cx = rng.uniform(-lim_x, lim_x)
        cy = rng.uniform(-lim_y, lim_y)
        if math.hypot(cx, cy) < SPAWN_CLEAR_RADIUS + math.hypot(hx, hy):
            continue
        top = rng.uniform(200.0, 700.0)
        box = (cx - hx, cy - hy, -80.0, cx + hx, cy + hy, top)
        if any(
            box[0] - _LANDMARK_GAP < o[3] and box[3] + _LANDMARK_GAP > o[0]
            and box[1] - _LANDMARK_GAP < o[4] and box[4] + _LANDMARK_GAP > o[1]
            for o in placed
        ):
            continue
        placed.append(box)
    if len(placed) < MIN_LANDMARKS:
        raise WorldGenError(
            f"could only place {len(placed)}/{MIN_LANDMARKS} landmarks in extent "
            f"{spec.extent} for {spec.category!r} seed {spec.seed}; increase extent"
        )

    landmarks = tuple(
        Landmark(box=b, color=DISTINCT_COLORS[(3 * cat_idx + i) % len(DISTINCT_COLORS)])
        for i, b in enumerate(placed)
    )
    pal = _PALETTES[spec.category]
    palette = {
        "bands": pal[:4],
        "band_limits": _BAND_LIMITS,
        "sky_top": pal[4],
        "sky_horizon": pal[5],
        "landmarks": tuple(lm.color for lm in landmarks),
    }
    return World(
        spec=spec,
        heights=heights,
        cell=2.0 * spec.extent / GRID_CELLS,
        landmarks=landmarks,
        palette=palette,
        boxes=np.array([lm.box for lm in landmarks], dtype=np.float64),
        box_colors=np.array([lm.color for lm in landmarks], dtype=np.float64),
        band_colors=np.array(pal[:4], dtype=np.float64),
        band_limits=np.array(_BAND_LIMITS, dtype=np.float64),
        sky_top=np.array(pal[4], dtype=np.float64),
        sky_horizon=np.array(pal[5], dtype=np.float64),
        max_height=float(heights.max()),
    )


def _inside_box(p: tuple, box: np.ndarray) -> bool:
    return (
        box[0] < p[0] < box[3]
        and box[1] < p[1] < box[4]
        and box[2] < p[2] < box[5]
    )


def resolve_collision(world: World, frm: tuple, to: tuple) -> tuple:
    """Stop-on-contact collision: the last non-penetrating point on frm->to.

    Returns `to` exactly when the segment is free and stays in bounds; no
    sliding is applied. Deterministic, and never returns a point strictly
    inside a landmark box.
    """
    if frm == to:
        return frm
    dx, dy, dz = to[0] - frm[0], to[1] - frm[1], to[2] - frm[2]
    t_stop = 1.0

    bound = world.extent - BOUNDS_MARGIN
    for f, d in ((frm[0], dx), (frm[1], dy)):
        if d > 0 and f + d > bound:
            t_stop = min(t_stop, (bound - f) / d)
        elif d < 0 and f + d < -bound:
            t_stop = min(t_stop, (-bound - f) / d)

    hit_obstacle = t_stop < 1.0
    for box in world.boxes:
        t0, t1 = 0.0, t_stop
        ok = True
        for axis, (f, d) in enumerate(((frm[0], dx), (frm[1], dy), (frm[2], dz))):
            lo, hi = box[axis], box[axis + 3]
            if d == 0.0:
                if not lo < f < hi:
                    ok = False
                    break
            else:
                ta, tb = (lo - f) / d, (hi - f) / d
                if ta > tb:
                    ta, tb = tb, ta
                t0, t1 = max(t0, ta), min(t1, tb)
                if t0 > t1:
                    ok = False
                    break
        if ok and t1 >= t0:
            t_stop = min(t_stop, t0)
            hit_obstacle = True

    if not hit_obstacle:
        return to

    seg_len = math.sqrt(dx * dx + dy * dy + dz * dz)
    t_back = max(0.0, t_stop - _COLLISION_BACKOFF / seg_len)
    point = (
        snap_position(frm[0] + t_back * dx),
        snap_position(frm[1] + t_back * dy),
        snap_position(frm[2] + t_back * dz),
    )
    # Grid snapping can push the point at most half a cell; retreat until clean.
    step = 1.0 / POSITION_GRID / seg_len
    while t_back > 0.0 and any(_inside_box(point, b) for b in world.boxes):
        t_back = max(0.0, t_back - step)
        point = (
            snap_position(frm[0] + t_back * dx),
            snap_position(frm[1] + t_back * dy),
            snap_position(frm[2] + t_back * dz),
        )
        step *= 2.0
    if any(_inside_box(point, b) for b in world.boxes):
        return frm
    return point
