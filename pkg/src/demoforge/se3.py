"""SE(3) rigid transforms as translation + unit quaternion, plus the small
algebra the pipeline needs: composition, inversion, interpolation, and
timestamp resampling of pose streams.

Conventions (fixed for reproducibility of serialized artifacts):
  * quaternions are (w, x, y, z), stored normalized with w >= 0 so each
    rotation has a single canonical representation;
  * a pose maps body-frame points into the world frame (world-from-body);
  * compose(a, b) is "a then b expressed in a's frame":
    rotation a.quat * b.quat, translation a.trans + a.quat . b.trans;
  * timestamps are integer nanoseconds everywhere, never floats.
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ExtrapolationRefused, InvalidPose, OutOfRange

_QUAT_NORM_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform: translation in meters, rotation as a unit quaternion.

    The constructor normalizes the quaternion and flips its sign so w >= 0;
    inputs whose norm is zero or non-finite raise InvalidPose. Arrays are
    frozen after construction, so poses are safe to share between workers.
    """

    trans: np.ndarray
    quat: np.ndarray

    def __post_init__(self):
        t = np.array(self.trans, dtype=np.float64).reshape(3)
        q = np.array(self.quat, dtype=np.float64).reshape(4)
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(q))):
            raise InvalidPose("pose has non-finite components")
        norm = float(np.sqrt(np.dot(q, q)))
        if norm < _QUAT_NORM_EPS:
            raise InvalidPose("quaternion norm is zero")
        q = q / norm
        if q[0] < 0.0:
            q = -q
        t.flags.writeable = False
        q.flags.writeable = False
        object.__setattr__(self, "trans", t)
        object.__setattr__(self, "quat", q)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]))

    @staticmethod
    def from_parts(trans: Sequence[float], quat_wxyz: Sequence[float]) -> "Pose":
        return Pose(np.asarray(trans, dtype=np.float64),
                    np.asarray(quat_wxyz, dtype=np.float64))

    def approx_equal(self, other: "Pose", tol: float = 1e-9) -> bool:
        """Componentwise closeness; quaternion compared up to canonical sign."""
        if np.max(np.abs(self.trans - other.trans)) > tol:
            return False
        return float(np.max(np.abs(self.quat - other.quat))) <= tol


def _quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def _quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def _quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    # v' = v + w*t + qv x t  with  t = 2 (qv x v); exact for v = 0.
    qv = q[1:]
    t = 2.0 * np.cross(qv, v)
    return v + q[0] * t + np.cross(qv, t)


def compose(a: Pose, b: Pose) -> Pose:
    """Rigid composition: apply b in a's frame, then a."""
    return Pose(a.trans + _quat_rotate(a.quat, b.trans), _quat_mul(a.quat, b.quat))


def inverse(p: Pose) -> Pose:
    """Transform such that compose(p, inverse(p)) is the identity."""
    qc = _quat_conj(p.quat)
    return Pose(-_quat_rotate(qc, p.trans), qc)


def interpolate(a: Pose, b: Pose, alpha: float) -> Pose:
    """Linear translation blend + shortest-arc slerp; alpha in [0, 1]."""
    if not np.isfinite(alpha) or alpha < 0.0 or alpha > 1.0:
        raise OutOfRange(f"interpolation parameter {alpha!r} outside [0, 1]")
    trans = (1.0 - alpha) * a.trans + alpha * b.trans
    qa, qb = a.quat, b.quat
    dot = float(np.dot(qa, qb))
    if dot < 0.0:
        qb = -qb
        dot = -dot
    if dot > 1.0 - 1e-12:
        # nearly parallel: normalized lerp avoids sin(theta) ~ 0
        q = (1.0 - alpha) * qa + alpha * qb
    else:
        theta = float(np.arccos(min(dot, 1.0)))
        s = np.sin(theta)
        q = (np.sin((1.0 - alpha) * theta) * qa + np.sin(alpha * theta) * qb) / s
    return Pose(trans, q)


def resample_poses(stream: Sequence[tuple[int, Pose]],
                   targets: Iterable[int]) -> list[Pose]:
    """Interpolate a timestamped pose stream at the target timestamps.

    Targets equal to a stream timestamp return that sample bit-identically.
    Targets outside [first, last] raise ExtrapolationRefused rather than
    clamping: clamped actions would silently corrupt downstream datasets.
    """
    if len(stream) == 0:
        raise ExtrapolationRefused("empty pose stream")
    times = [int(t) for t, _ in stream]
    for k in range(1, len(times)):
        if times[k] <= times[k - 1]:
            raise InvalidPose("pose stream timestamps must be strictly increasing")
    poses = [p for _, p in stream]
    out: list[Pose] = []
    for target in targets:
        target = int(target)
        if target < times[0] or target > times[-1]:
            raise ExtrapolationRefused(
                f"target {target} ns outside pose stream [{times[0]}, {times[-1]}]")
        k = bisect.bisect_left(times, target)
        if times[k] == target:
            out.append(poses[k])
            continue
        t0, t1 = times[k - 1], times[k]
        alpha = (target - t0) / (t1 - t0)
        out.append(interpolate(poses[k - 1], poses[k], alpha))
    return out
