"""Episode data model and its on-disk layout.

An episode directory looks like:

    episode_dir/
      manifest.json              episode_id, role, task, obj_name, frame_count,
                                 image_width, image_height
      frames/%06d.png            RGB8 frames, zero-padded index
      masks/<role>/%06d.png      8-bit masks, 0 = background, 255 = mask
      poses.jsonl                {"t_ns": int, "trans": [x,y,z],
                                  "quat_wxyz": [w,x,y,z]} per line
      rig.json                   optional camera rig (fixed camera-to-TCP
                                 transform + stored fisheye intrinsics)

Everything round-trips bit-exactly: PNG is lossless, timestamps are integers,
and floats are serialized with repr-exact JSON.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

import numpy as np
from PIL import Image

from .errors import DimMismatch
from .se3 import Pose


class Role(str, Enum):
    HAND = "hand"
    GRIPPER = "gripper"
    GENERATED = "generated"
    COMPOSITED = "composited"


@dataclass(frozen=True, eq=False)
class Frame:
    """One RGB frame with integer-nanosecond timestamp and named binary masks."""

    timestamp_ns: int
    image: np.ndarray
    masks: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        img = np.asarray(self.image)
        if img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] != 3:
            raise DimMismatch(f"frame image must be HxWx3 uint8, got "
                              f"{img.dtype} {img.shape}")
        img = np.ascontiguousarray(img)
        img.flags.writeable = False
        frozen = {}
        for name, mask in dict(self.masks).items():
            m = np.ascontiguousarray(np.asarray(mask, dtype=bool))
            if m.shape != img.shape[:2]:
                raise DimMismatch(
                    f"mask '{name}' shape {m.shape} != image {img.shape[:2]}")
            m.flags.writeable = False
            frozen[name] = m
        object.__setattr__(self, "timestamp_ns", int(self.timestamp_ns))
        object.__setattr__(self, "image", img)
        object.__setattr__(self, "masks", MappingProxyType(frozen))

    @property
    def height(self) -> int:
        return self.image.shape[0]

    @property
    def width(self) -> int:
        return self.image.shape[1]

    def with_timestamp(self, timestamp_ns: int) -> "Frame":
        return Frame(timestamp_ns, self.image, dict(self.masks))

    def mask(self, name: str) -> np.ndarray | None:
        return self.masks.get(name)


@dataclass(frozen=True, eq=False)
class Episode:
    """A timestamped frame sequence plus its camera pose stream.

    Frame timestamps and pose timestamps must each be strictly increasing;
    the two streams may run at different rates. The role is fixed for the
    lifetime of the episode.
    """

    episode_id: str
    role: Role
    task: str
    obj_name: str
    frames: tuple[Frame, ...]
    camera_poses: tuple[tuple[int, Pose], ...] = ()

    def __post_init__(self):
        frames = tuple(self.frames)
        poses = tuple((int(t), p) for t, p in self.camera_poses)
        for k in range(1, len(frames)):
            if frames[k].timestamp_ns <= frames[k - 1].timestamp_ns:
                raise DimMismatch(
                    f"frame timestamps not strictly increasing at index {k}")
        for k in range(1, len(poses)):
            if poses[k][0] <= poses[k - 1][0]:
                raise DimMismatch(
                    f"camera pose timestamps not strictly increasing at index {k}")
        if frames:
            h, w = frames[0].image.shape[:2]
            for k, f in enumerate(frames):
                if f.image.shape[:2] != (h, w):
                    raise DimMismatch(f"frame {k} size differs from frame 0")
        object.__setattr__(self, "role", Role(self.role))
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "camera_poses", poses)

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def image_size(self) -> tuple[int, int]:
        """(width, height) of the frames; (0, 0) when empty."""
        if not self.frames:
            return (0, 0)
        h, w = self.frames[0].image.shape[:2]
        return (w, h)


@dataclass(frozen=True, eq=False)
class CameraRig:
    """Fixed camera-to-TCP transform plus stored (unused) fisheye intrinsics."""

    t_cam_tcp: Pose
    intrinsics: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "intrinsics",
                           MappingProxyType(dict(self.intrinsics)))


# --------------------------------------------------------------------------
# serialization helpers
# --------------------------------------------------------------------------

def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def pose_to_json(p: Pose) -> dict:
    return {"trans": [float(v) for v in p.trans],
            "quat_wxyz": [float(v) for v in p.quat]}


def pose_from_json(d: dict) -> Pose:
    return Pose.from_parts(d["trans"], d["quat_wxyz"])


def save_rig(rig: CameraRig, path: Path) -> None:
    _dump_json({"t_cam_tcp": pose_to_json(rig.t_cam_tcp),
                "intrinsics": dict(rig.intrinsics)}, Path(path))


def load_rig(path: Path) -> CameraRig:
    d = json.loads(Path(path).read_text())
    return CameraRig(pose_from_json(d["t_cam_tcp"]), d.get("intrinsics", {}))


def _write_png(arr: np.ndarray, path: Path) -> None:
    Image.fromarray(arr).save(path, format="PNG")


def save_episode(episode: Episode, episode_dir: Path,
                 rig: CameraRig | None = None) -> None:
    """Write the episode layout; overwrites files already present."""
    root = Path(episode_dir)
    (root / "frames").mkdir(parents=True, exist_ok=True)
    width, height = episode.image_size
    _dump_json({
        "episode_id": episode.episode_id,
        "role": episode.role.value,
        "task": episode.task,
        "obj_name": episode.obj_name,
        "frame_count": len(episode.frames),
        "image_width": width,
        "image_height": height,
    }, root / "manifest.json")

    for idx, frame in enumerate(episode.frames):
        _write_png(frame.image, root / "frames" / f"{idx:06d}.png")
        for name, mask in frame.masks.items():
            mask_dir = root / "masks" / name
            mask_dir.mkdir(parents=True, exist_ok=True)
            _write_png(mask.astype(np.uint8) * 255, mask_dir / f"{idx:06d}.png")

    with open(root / "poses.jsonl", "w") as fh:
        for t_ns, pose in episode.camera_poses:
            rec = {"t_ns": int(t_ns)}
            rec.update(pose_to_json(pose))
            fh.write(json.dumps(rec, sort_keys=True) + "\n")

    # Frame timestamps have no slot in the base layout but must survive a
    # round trip exactly, so they get a sidecar file.
    _dump_json([f.timestamp_ns for f in episode.frames], root / "timestamps.json")

    if rig is not None:
        save_rig(rig, root / "rig.json")


def load_episode(episode_dir: Path,
                 timestamps_ns: list[int] | None = None) -> Episode:
    """Read an episode directory written by save_episode.

    Timestamps come from the timestamps.json sidecar when present; for
    episode directories produced elsewhere a uniform spacing is inferred
    from the pose stream (or plain indices when there is none). Pass
    explicit ``timestamps_ns`` to override either.
    """
    root = Path(episode_dir)
    manifest = json.loads((root / "manifest.json").read_text())

    camera_poses: list[tuple[int, Pose]] = []
    poses_path = root / "poses.jsonl"
    if poses_path.exists():
        for line in poses_path.read_text().splitlines():
            if not line.strip():
                continue
            d = json.loads(line)
            camera_poses.append((int(d["t_ns"]), pose_from_json(d)))

    count = int(manifest["frame_count"])
    ts_path = root / "timestamps.json"
    if timestamps_ns is None and ts_path.exists():
        timestamps_ns = [int(t) for t in json.loads(ts_path.read_text())]
    if timestamps_ns is None:
        timestamps_ns = _default_frame_timestamps(count, camera_poses)
    if len(timestamps_ns) != count:
        raise DimMismatch(f"{len(timestamps_ns)} timestamps for {count} frames")

    mask_roles = []
    masks_root = root / "masks"
    if masks_root.is_dir():
        mask_roles = sorted(p.name for p in masks_root.iterdir() if p.is_dir())

    frames = []
    for idx in range(count):
        img = np.asarray(Image.open(root / "frames" / f"{idx:06d}.png").convert("RGB"))
        masks = {}
        for name in mask_roles:
            mpath = masks_root / name / f"{idx:06d}.png"
            if mpath.exists():
                masks[name] = np.asarray(Image.open(mpath).convert("L")) > 127
        frames.append(Frame(timestamps_ns[idx], img, masks))

    return Episode(
        episode_id=manifest["episode_id"],
        role=Role(manifest["role"]),
        task=manifest.get("task", ""),
        obj_name=manifest.get("obj_name", ""),
        frames=tuple(frames),
        camera_poses=tuple(camera_poses),
    )


def _default_frame_timestamps(count: int,
                              camera_poses: list[tuple[int, Pose]]) -> list[int]:
    if count == 0:
        return []
    if len(camera_poses) >= 2 and count >= 2:
        start = camera_poses[0][0]
        span = camera_poses[-1][0] - start
        step = span // (count - 1) if count > 1 else 1
        if step > 0:
            return [start + step * k for k in range(count)]
    if camera_poses:
        start = camera_poses[0][0]
        return [start + k for k in range(count)]
    return list(range(count))


def frame_timestamps(episode: Episode) -> list[int]:
    return [f.timestamp_ns for f in episode.frames]
