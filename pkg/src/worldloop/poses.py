"""Trajectory I/O, Sim(3) Umeyama alignment, and relative pose error.

Trajectories interchange in TUM format: one `timestamp tx ty tz qx qy qz qw`
line per sample, '#' comments ignored, floats written with repr (shortest
round-trip, lossless). Quaternions are stored xyzw to match the file order.
Rotation errors are geodesic angles reported in degrees; translations are in
world units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dettrig import sincos_deg
from .errors import (
    AssociationError,
    DegenerateGeometryError,
    MetricInputError,
    TrajectoryFormatError,
)

_QUAT_NORM_TOL = 1e-3  # normalize within this of unit, reject beyond


# -- quaternion helpers (xyzw) ------------------------------------------------

def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product; broadcasts over leading axes.

    Terms are grouped so that conj(q) * q cancels to the exact identity in
    floating point (the zero-error case of RPE must be exactly zero).
    """
    ax, ay, az, aw = np.moveaxis(np.asarray(a, dtype=np.float64), -1, 0)
    bx, by, bz, bw = np.moveaxis(np.asarray(b, dtype=np.float64), -1, 0)
    return np.stack(
        [
            (aw * bx + ax * bw) + (ay * bz - az * by),
            (aw * by + ay * bw) + (az * bx - ax * bz),
            (aw * bz + az * bw) + (ax * by - ay * bx),
            aw * bw - ax * bx - ay * by - az * bz,
        ],
        axis=-1,
    )


def quat_conj(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return q * np.array([-1.0, -1.0, -1.0, 1.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vectors by unit quaternions (broadcasting)."""
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    u, w = q[..., :3], q[..., 3:4]
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def quat_angle_deg(q: np.ndarray) -> np.ndarray:
    """Geodesic rotation angle of unit quaternions, in degrees."""
    q = np.asarray(q, dtype=np.float64)
    vec = np.linalg.norm(q[..., :3], axis=-1)
    return np.degrees(2.0 * np.arctan2(vec, np.abs(q[..., 3])))


def quat_from_matrix(m: np.ndarray) -> np.ndarray:
    """Rotation matrix -> unit quaternion (xyzw), Shepperd's branch method."""
    m = np.asarray(m, dtype=np.float64)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0:
        s = math.sqrt(tr + 1.0) * 2.0
        w = 0.25 * s
        x = (m[2, 1] - m[1, 2]) / s
        y = (m[0, 2] - m[2, 0]) / s
        z = (m[1, 0] - m[0, 1]) / s
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        w = (m[2, 1] - m[1, 2]) / s
        x = 0.25 * s
        y = (m[0, 1] + m[1, 0]) / s
        z = (m[0, 2] + m[2, 0]) / s
    elif m[1, 1] > m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        w = (m[0, 2] - m[2, 0]) / s
        x = (m[0, 1] + m[1, 0]) / s
        y = 0.25 * s
        z = (m[1, 2] + m[2, 1]) / s
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        w = (m[1, 0] - m[0, 1]) / s
        x = (m[0, 2] + m[2, 0]) / s
        y = (m[1, 2] + m[2, 1]) / s
        z = 0.25 * s
    return quat_normalize(np.array([x, y, z, w]))


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    x, y, z, w = np.asarray(q, dtype=np.float64)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_yaw_pitch(yaw_deg: float, pitch_deg: float) -> np.ndarray:
    """Camera orientation quaternion for the toolkit pose convention.

    Body frame is x-forward/z-up; R = Rz(yaw) . Ry(-pitch). Uses the
    deterministic polynomial trig so episode files are bit-reproducible.
    """
    sy, cy = sincos_deg(yaw_deg * 0.5)
    sp, cp = sincos_deg(pitch_deg * 0.5)
    qz = np.array([0.0, 0.0, sy, cy])
    qy = np.array([0.0, -sp, 0.0, cp])
    return quat_mul(qz, qy)


# -- trajectories --------------------------------------------------------------

@dataclass(frozen=True)
class PoseTrajectory:
    """Timestamped SE(3) samples; times strictly increasing, quats unit."""

    times: np.ndarray         # (n,)
    translations: np.ndarray  # (n, 3)
    quaternions: np.ndarray   # (n, 4) xyzw

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        p = np.asarray(self.translations, dtype=np.float64).reshape(-1, 3)
        q = np.asarray(self.quaternions, dtype=np.float64).reshape(-1, 4)
        if not (len(t) == len(p) == len(q)):
            raise MetricInputError("trajectory arrays disagree in length")
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise TrajectoryFormatError("timestamps must be strictly increasing")
        norms = np.linalg.norm(q, axis=-1)
        if len(q) and np.abs(norms - 1.0).max() > 1e-9:
            raise MetricInputError("quaternions must be unit norm (within 1e-9)")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "translations", p)
        object.__setattr__(self, "quaternions", q)

    def __len__(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class Sim3Transform:
    """Similarity transform x -> scale * R x + t."""

    scale: float
    rotation: np.ndarray     # unit quaternion, xyzw
    translation: np.ndarray  # (3,)

    def __post_init__(self):
        if not self.scale > 0:
            raise MetricInputError(f"similarity scale must be > 0, got {self.scale}")
        object.__setattr__(self, "rotation", quat_normalize(np.asarray(self.rotation, float)))
        object.__setattr__(
            self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3)
        )

    @classmethod
    def identity(cls) -> "Sim3Transform":
        return cls(1.0, np.array([0.0, 0.0, 0.0, 1.0]), np.zeros(3))

    def apply_points(self, pts: np.ndarray) -> np.ndarray:
        return self.scale * quat_rotate(self.rotation, np.asarray(pts, float)) + self.translation

    def compose(self, other: "Sim3Transform") -> "Sim3Transform":
        """self after other: (self.compose(other)).apply == self.apply(other.apply(x))."""
        return Sim3Transform(
            scale=self.scale * other.scale,
            rotation=quat_mul(self.rotation, other.rotation),
            translation=self.scale * quat_rotate(self.rotation, other.translation)
            + self.translation,
        )

    def inverse(self) -> "Sim3Transform":
        rinv = quat_conj(self.rotation)
        return Sim3Transform(
            scale=1.0 / self.scale,
            rotation=rinv,
            translation=-quat_rotate(rinv, self.translation) / self.scale,
        )


@dataclass(frozen=True)
class RpeResult:
    trans_rmse: float
    rot_rmse_deg: float
    delta: int
    pairs: int

    def __post_init__(self):
        if self.trans_rmse < 0 or self.rot_rmse_deg < 0:
            raise MetricInputError("RPE values must be >= 0")


# -- alignment -----------------------------------------------------------------

def umeyama_align(src: np.ndarray, dst: np.ndarray) -> Sim3Transform:
    """Least-squares similarity (s, R, t) minimizing ||dst - (s R src + t)||^2.

    Centroid subtraction, cross-covariance SVD with determinant-sign
    correction (never returns a reflection), scale from the trace ratio
    against source variance.
    """
    src = np.asarray(src, dtype=np.float64).reshape(-1, 3)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 3)
    if len(src) != len(dst):
        raise MetricInputError(f"point counts differ: {len(src)} vs {len(dst)}")
    n = len(src)
    if n < 3:
        raise DegenerateGeometryError(f"need at least 3 point pairs, got {n}")

    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    cs = src - mu_s
    cd = dst - mu_d
    cov = cd.T @ cs / n
    u, d, vt = np.linalg.svd(cov)
    spread = math.sqrt((cs ** 2).sum() / n) * math.sqrt((cd ** 2).sum() / n)
    if d[1] <= 1e-9 * max(d[0], spread, 1e-300):
        raise DegenerateGeometryError(
            "point configuration is rank-deficient (collinear or coincident); "
            "cannot estimate a similarity transform"
        )
    sign = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        sign[2] = -1.0
    rot = u @ np.diag(sign) @ vt
    var_src = (cs ** 2).sum() / n
    scale = float((d * sign).sum() / var_src)
    trans = mu_d - scale * rot @ mu_s
    return Sim3Transform(scale=scale, rotation=quat_from_matrix(rot), translation=trans)


def apply_alignment(xf: Sim3Transform, traj: PoseTrajectory) -> PoseTrajectory:
    """Map translations by s R x + t and left-compose rotations with R."""
    return PoseTrajectory(
        times=traj.times,
        translations=xf.apply_points(traj.translations),
        quaternions=quat_normalize(quat_mul(xf.rotation, traj.quaternions)),
    )


# -- relative pose error --------------------------------------------------------

def associate(est: PoseTrajectory, ref: PoseTrajectory, max_dt: float | None = None) -> np.ndarray:
    """Index into est of the nearest-timestamp match for every ref sample.

    max_dt defaults to half the median ref frame period.
    """
    if len(ref) < 2 or len(est) < 1:
        raise MetricInputError("trajectories too short to associate")
    if max_dt is None:
        max_dt = 0.5 * float(np.median(np.diff(ref.times)))
    idx = np.searchsorted(est.times, ref.times)
    idx = np.clip(idx, 1, len(est) - 1) if len(est) > 1 else np.zeros(len(ref), dtype=int)
    left = est.times[np.maximum(idx - 1, 0)]
    right = est.times[idx] if len(est) > 1 else est.times[idx]
    pick = np.where(np.abs(ref.times - left) <= np.abs(right - ref.times), idx - 1, idx)
    pick = np.clip(pick, 0, len(est) - 1)
    offsets = np.abs(est.times[pick] - ref.times)
    worst = int(np.argmax(offsets))
    if offsets[worst] > max_dt:
        raise AssociationError(
            f"no est sample within {max_dt:.6g}s of ref t={ref.times[worst]:.6g} "
            f"(nearest offset {offsets[worst]:.6g}s)"
        )
    return pick


def _relative(traj_t: np.ndarray, traj_q: np.ndarray, delta: int):
    """Per-step relative motions T_i^-1 T_{i+delta} as (trans, quat) arrays."""
    qi = traj_q[:-delta]
    qj = traj_q[delta:]
    dt = traj_t[delta:] - traj_t[:-delta]
    rel_t = quat_rotate(quat_conj(qi), dt)
    rel_q = quat_mul(quat_conj(qi), qj)
    return rel_t, rel_q


def rpe(est: PoseTrajectory, ref: PoseTrajectory, delta: int = 1,
        max_dt: float | None = None) -> RpeResult:
    """Relative pose error over a fixed index interval.

    The error motion E_i = (ref_i^-1 ref_{i+d})^-1 (est_i^-1 est_{i+d}) is
    invariant to any global rigid offset of either trajectory. Reported as
    translation RMSE (world units) and rotation-angle RMSE (degrees).
    """
    if delta < 1:
        raise MetricInputError(f"delta must be >= 1, got {delta}")
    if len(ref) < delta + 1:
        raise MetricInputError(
            f"trajectory too short for delta={delta}: {len(ref)} samples"
        )
    sel = associate(est, ref, max_dt=max_dt)
    est_t = est.translations[sel]
    est_q = est.quaternions[sel]

    ref_rel_t, ref_rel_q = _relative(ref.translations, ref.quaternions, delta)
    est_rel_t, est_rel_q = _relative(est_t, est_q, delta)

    # translation of E_i has the same norm as the raw relative difference
    trans_err = np.linalg.norm(est_rel_t - ref_rel_t, axis=-1)
    rot_err = quat_angle_deg(quat_mul(quat_conj(ref_rel_q), est_rel_q))
    return RpeResult(
        trans_rmse=float(np.sqrt(np.mean(trans_err ** 2))),
        rot_rmse_deg=float(np.sqrt(np.mean(rot_err ** 2))),
        delta=delta,
        pairs=len(trans_err),
    )


def ate_rmse(est: PoseTrajectory, ref: PoseTrajectory) -> float:
    """Absolute trajectory error after association; diagnostic only."""
    sel = associate(est, ref)
    return float(np.sqrt(np.mean(np.sum((est.translations[sel] - ref.translations) ** 2, axis=-1))))


# -- TUM file I/O ----------------------------------------------------------------

def write_tum(traj: PoseTrajectory, path) -> None:
    with open(path, "w") as f:
        f.write("# timestamp tx ty tz qx qy qz qw\n")
        for t, p, q in zip(traj.times, traj.translations, traj.quaternions):
            fields = [t, p[0], p[1], p[2], q[0], q[1], q[2], q[3]]
            f.write(" ".join(repr(float(v)) for v in fields) + "\n")


def read_tum(path) -> PoseTrajectory:
    times: list[float] = []
    trans: list[list[float]] = []
    quats: list[np.ndarray] = []
    with open(path) as f:
        for ln, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 8:
                raise TrajectoryFormatError(
                    f"{path}: line {ln}: expected 8 fields, got {len(parts)}"
                )
            try:
                vals = [float(v) for v in parts]
            except ValueError:
                raise TrajectoryFormatError(f"{path}: line {ln}: non-numeric field") from None
            t, tx, ty, tz, qx, qy, qz, qw = vals
            if times and t <= times[-1]:
                raise TrajectoryFormatError(
                    f"{path}: line {ln}: non-monotone timestamp {t!r}"
                )
            q = np.array([qx, qy, qz, qw])
            norm = float(np.linalg.norm(q))
            if abs(norm - 1.0) > _QUAT_NORM_TOL:
                raise TrajectoryFormatError(
                    f"{path}: line {ln}: quaternion norm {norm:.6g} deviates from 1 "
                    f"by more than {_QUAT_NORM_TOL}"
                )
            if abs(norm - 1.0) > 1e-9:
                q = q / norm  # keep bits when already unit within tolerance
            times.append(t)
            trans.append([tx, ty, tz])
            quats.append(q)
    return PoseTrajectory(
        times=np.array(times, dtype=np.float64),
        translations=np.array(trans, dtype=np.float64).reshape(-1, 3),
        quaternions=np.array(quats, dtype=np.float64).reshape(-1, 4),
    )
