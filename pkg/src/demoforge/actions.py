"""TCP action trajectories from camera pose streams.

The camera rides a fixed transform away from the fingertip / gripper tip, so
every TCP pose is the camera pose right-composed with the rig constant.
Gripper open/closed comes from the stage track, never from a width sensor.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .episode import CameraRig, Episode, pose_from_json, pose_to_json
from .errors import InsufficientLength, TrackMismatch
from .se3 import Pose, compose, inverse, resample_poses
from .stages import GripperState, StageTrack, gripper_status


@dataclass(frozen=True, eq=False)
class ActionRecord:
    timestamp_ns: int
    tcp_pose: Pose
    gripper: GripperState

    def __post_init__(self):
        object.__setattr__(self, "timestamp_ns", int(self.timestamp_ns))
        object.__setattr__(self, "gripper", GripperState(self.gripper))


def camera_to_tcp(camera_pose: Pose, rig: CameraRig) -> Pose:
    """Fingertip pose from camera pose via the rig's fixed transform."""
    return compose(camera_pose, rig.t_cam_tcp)


def extract_actions(episode: Episode, track: StageTrack,
                    rig: CameraRig) -> list[ActionRecord]:
    """One action per frame: camera pose resampled to the frame timestamp,
    pushed through the rig transform, tagged with the gripper status.

    The pose stream must cover every frame timestamp; resampling refuses to
    extrapolate.
    """
    if len(track) != len(episode.frames):
        raise TrackMismatch(
            f"track length {len(track)} != frame count {len(episode.frames)}")
    timestamps = [f.timestamp_ns for f in episode.frames]
    cams = resample_poses(episode.camera_poses, timestamps)
    status = gripper_status(track)
    return [ActionRecord(t, camera_to_tcp(cam, rig), st)
            for t, cam, st in zip(timestamps, cams, status)]


def relative_actions(actions: Sequence[ActionRecord],
                     horizon: int = 1) -> list[Pose]:
    """Pose of the TCP ``horizon`` steps ahead, expressed in the current TCP
    frame: element i is inverse(tcp_i) composed with tcp_{i+horizon}.
    """
    if horizon < 1:
        raise InsufficientLength("horizon must be >= 1")
    if len(actions) <= horizon:
        raise InsufficientLength(
            f"{len(actions)} actions cannot support horizon {horizon}")
    return [compose(inverse(actions[i].tcp_pose), actions[i + horizon].tcp_pose)
            for i in range(len(actions) - horizon)]


def save_actions(actions: Sequence[ActionRecord], path: Path) -> None:
    with open(Path(path), "w") as fh:
        for rec in actions:
            doc = {"t_ns": rec.timestamp_ns, "gripper": rec.gripper.value}
            doc.update(pose_to_json(rec.tcp_pose))
            fh.write(json.dumps(doc, sort_keys=True) + "\n")


def load_actions(path: Path) -> list[ActionRecord]:
    out = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        d = json.loads(line)
        out.append(ActionRecord(int(d["t_ns"]), pose_from_json(d),
                                GripperState(d["gripper"])))
    return out
