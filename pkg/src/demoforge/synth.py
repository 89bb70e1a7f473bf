"""Deterministic synthetic scene renderer.

Produces paired hand/gripper episodes with complete ground truth: the
time-warp between them, per-frame masks, scripted camera poses with derived
TCP poses, contact-driven stage labels, and the ideal composited gripper
frame for every hand frame. Pixel generation is integer-only, so the same
script renders bit-identically on every platform.

Scene model: a flat-shaded effector sprite (hand blob or two-finger gripper
glyph) moves along a straight pixel path over a gradient background; a
square object sits at its rest position except during contact windows, when
it rides the effector. The gripper episode is the hand episode re-timed by a
strictly monotone warp with the effector sprite swapped.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .actions import ActionRecord, save_actions
from .episode import CameraRig, Episode, Frame, Role, pose_from_json, save_episode
from .errors import InvalidScript
from .se3 import Pose, compose
from .stages import GripperState, StageLabel, StageTrack, save_stages, track_from_labels

HAND_COLOR = (204, 166, 133)
GRIPPER_COLOR = (58, 62, 70)
GRADIENT_SPAN = 80          # max gray-level rise of the background gradient
METERS_PER_PX = 0.002
YAW_SPAN_RAD = 0.2
EFFECTOR_REACH_PX = 20      # conservative sprite footprint radius around the tip
CLEARANCE_PX = 8            # must exceed the default stage dilation of 5
MIN_EVENT_FRAMES = 3        # matches the default stage hysteresis
MIN_EVENT_GAP = 3


@dataclass(frozen=True, eq=False)
class SceneScript:
    seed: int
    duration_frames: int
    image_size: tuple[int, int]  # (width, height)
    effector_start: tuple[int, int]
    effector_end: tuple[int, int]
    depth_start_m: float
    depth_end_m: float
    object_color: tuple[int, int, int]
    object_size_px: int
    object_rest: tuple[int, int]
    warp: tuple[int, ...]  # gripper index -> hand index, strictly increasing
    contact_windows: tuple[tuple[int, int], ...]  # inclusive (start, end)
    rig: CameraRig
    fps: int = 30
    obj_name: str = "block"
    task: str = "synthetic-demo"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        t1 = self.duration_frames
        w, h = self.image_size
        if t1 < 1:
            raise InvalidScript("duration_frames must be >= 1")
        if w < 32 or h < 32:
            raise InvalidScript("image must be at least 32x32")
        if self.fps < 1:
            raise InvalidScript("fps must be >= 1")
        if self.object_size_px < 10:
            raise InvalidScript("object_size_px must be >= 10 so contact "
                                "overlaps the gripper fingers")
        if not self.warp:
            raise InvalidScript("warp must be non-empty")
        for k, v in enumerate(self.warp):
            if not 0 <= v < t1:
                raise InvalidScript(f"warp[{k}] = {v} outside [0, {t1})")
            if k and v <= self.warp[k - 1]:
                raise InvalidScript("warp must be strictly monotone increasing")
        prev_end = None
        for start, end in self.contact_windows:
            if not (0 <= start <= end < t1):
                raise InvalidScript(f"contact window ({start}, {end}) outside "
                                    f"[0, {t1})")
            if end - start + 1 < MIN_EVENT_FRAMES:
                raise InvalidScript("contact windows must span at least "
                                    f"{MIN_EVENT_FRAMES} frames")
            if prev_end is not None and start - prev_end - 1 < MIN_EVENT_GAP:
                raise InvalidScript("contact windows must be separated by at "
                                    f"least {MIN_EVENT_GAP} frames")
            prev_end = end
        # Outside contact the effector must stay clear of the resting object,
        # otherwise stage classification could not reproduce the windows.
        margin = self.object_size_px // 2 + EFFECTOR_REACH_PX + CLEARANCE_PX
        rx, ry = self.object_rest
        for t in range(t1):
            if self.is_contact(t):
                continue
            x, y = self.tip_xy(t)
            if max(abs(x - rx), abs(y - ry)) < margin:
                raise InvalidScript(
                    f"frame {t}: effector at ({x}, {y}) is within {margin} px "
                    f"of the resting object at ({rx}, {ry}) outside a contact "
                    "window")

    # ---- scripted quantities -------------------------------------------

    def is_contact(self, t: int) -> bool:
        return any(start <= t <= end for start, end in self.contact_windows)

    def tip_xy(self, t: int) -> tuple[int, int]:
        """Integer effector tip position at hand-frame t."""
        sx, sy = self.effector_start
        ex, ey = self.effector_end
        den = max(self.duration_frames - 1, 1)
        return (sx + (ex - sx) * t // den, sy + (ey - sy) * t // den)

    def camera_pose(self, tau: float) -> Pose:
        """Scripted camera pose at (possibly fractional) hand-frame time."""
        den = max(self.duration_frames - 1, 1)
        a = tau / den
        sx, sy = self.effector_start
        ex, ey = self.effector_end
        x = (sx + (ex - sx) * a) * METERS_PER_PX
        y = (sy + (ey - sy) * a) * METERS_PER_PX
        z = self.depth_start_m + (self.depth_end_m - self.depth_start_m) * a
        yaw = YAW_SPAN_RAD * a
        return Pose(np.array([x, y, z]),
                    np.array([math.cos(yaw / 2), 0.0, 0.0, math.sin(yaw / 2)]))

    @property
    def frame_interval_ns(self) -> int:
        return 1_000_000_000 // self.fps


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Everything the pipeline should reproduce for a rendered pair."""

    alignment_pairs: tuple[tuple[int, int], ...]  # (hand_idx, gripper_idx)
    track: StageTrack
    tcp: tuple[ActionRecord, ...]
    composites: tuple[np.ndarray, ...]  # ideal r-hat per hand frame


# --------------------------------------------------------------------------
# rasterization (integer only)
# --------------------------------------------------------------------------

_BG, _OBJ, _EFF = 0, 1, 2


def _mix(seed: int, k: int) -> int:
    h = (seed * 1103515245 + k * 12345 + 20260810) & 0x7FFFFFFF
    h = (h ^ (h >> 13)) * 1274126177 & 0x7FFFFFFF
    return h


def _background(script: SceneScript) -> np.ndarray:
    w, h = script.image_size
    xs = np.arange(w, dtype=np.int64)[None, :]
    ys = np.arange(h, dtype=np.int64)[:, None]
    channels = []
    for c in range(3):
        base = 50 + _mix(script.seed, c) % 100
        gx = 1 + _mix(script.seed, 10 + c) % 4
        gy = 1 + _mix(script.seed, 20 + c) % 4
        den = gx * (w - 1) + gy * (h - 1) + 1
        ramp = (gx * xs + gy * ys) * GRADIENT_SPAN // den
        channels.append(np.clip(base + ramp, 0, 255))
    return np.stack(channels, axis=-1).astype(np.uint8)


def _draw_rect(owner: np.ndarray, x0: int, y0: int, x1: int, y1: int,
               code: int) -> None:
    h, w = owner.shape
    x0, x1 = max(x0, 0), min(x1, w - 1)
    y0, y1 = max(y0, 0), min(y1, h - 1)
    if x0 <= x1 and y0 <= y1:
        owner[y0:y1 + 1, x0:x1 + 1] = code


def _draw_disc(owner: np.ndarray, cx: int, cy: int, r: int, code: int) -> None:
    h, w = owner.shape
    x0, x1 = max(cx - r, 0), min(cx + r, w - 1)
    y0, y1 = max(cy - r, 0), min(cy + r, h - 1)
    if x0 > x1 or y0 > y1:
        return
    xs = np.arange(x0, x1 + 1, dtype=np.int64)[None, :] - cx
    ys = np.arange(y0, y1 + 1, dtype=np.int64)[:, None] - cy
    owner[y0:y1 + 1, x0:x1 + 1][xs * xs + ys * ys <= r * r] = code


def _draw_hand(owner: np.ndarray, tip: tuple[int, int]) -> None:
    x, y = tip
    _draw_disc(owner, x, y, 8, _EFF)
    _draw_rect(owner, x - 3, y + 4, x + 3, y + 14, _EFF)


def _draw_gripper(owner: np.ndarray, tip: tuple[int, int]) -> None:
    x, y = tip
    _draw_rect(owner, x - 8, y - 8, x - 5, y + 8, _EFF)   # left finger
    _draw_rect(owner, x + 5, y - 8, x + 8, y + 8, _EFF)   # right finger
    _draw_rect(owner, x - 8, y + 9, x + 8, y + 13, _EFF)  # palm bar


def render_content_frame(script: SceneScript, t: int,
                         effector: str) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Render scene content at hand-frame time t with the chosen effector
    sprite ('hand' or 'gripper'). Returns (image, masks); masks cover exactly
    the pixels each sprite owns in the final image (effector over object).
    """
    w, h = script.image_size
    owner = np.zeros((h, w), dtype=np.uint8)
    if script.is_contact(t):
        ox, oy = script.tip_xy(t)
    else:
        ox, oy = script.object_rest
    half = script.object_size_px // 2
    _draw_rect(owner, ox - half, oy - half, ox + half, oy + half, _OBJ)
    tip = script.tip_xy(t)
    if effector == "hand":
        _draw_hand(owner, tip)
    elif effector == "gripper":
        _draw_gripper(owner, tip)
    else:
        raise InvalidScript(f"unknown effector sprite {effector!r}")

    image = _background(script).copy()
    image[owner == _OBJ] = script.object_color
    image[owner == _EFF] = HAND_COLOR if effector == "hand" else GRIPPER_COLOR
    masks = {"object": owner == _OBJ, effector: owner == _EFF}
    return image, masks


# --------------------------------------------------------------------------
# episode + truth assembly
# --------------------------------------------------------------------------

def _camera_stream(script: SceneScript, times: list[tuple[int, float]]
                   ) -> tuple[tuple[int, Pose], ...]:
    return tuple((t_ns, script.camera_pose(tau)) for t_ns, tau in times)


def render_pair(script: SceneScript) -> tuple[Episode, Episode, GroundTruth]:
    """Render the hand episode, the warped gripper episode, and ground truth."""
    t1 = script.duration_frames
    dt = script.frame_interval_ns

    hand_frames = []
    composites = []
    for t in range(t1):
        img, masks = render_content_frame(script, t, "hand")
        hand_frames.append(Frame(t * dt, img, masks))
        ideal, _ = render_content_frame(script, t, "gripper")
        composites.append(ideal)

    # Hand pose stream runs at twice the frame rate (frame times are exact
    # samples) to exercise resampling between rates.
    hand_times: list[tuple[int, float]] = []
    for t in range(t1):
        hand_times.append((t * dt, float(t)))
        if t + 1 < t1:
            hand_times.append((t * dt + dt // 2, t + 0.5))

    hand = Episode(
        episode_id=f"synth-{script.seed:04d}-hand",
        role=Role.HAND, task=script.task, obj_name=script.obj_name,
        frames=tuple(hand_frames),
        camera_poses=_camera_stream(script, hand_times))

    grip_frames = []
    for u, t in enumerate(script.warp):
        img, masks = render_content_frame(script, t, "gripper")
        grip_frames.append(Frame(u * dt, img, masks))
    grip_times = [(u * dt, float(t)) for u, t in enumerate(script.warp)]
    gripper = Episode(
        episode_id=f"synth-{script.seed:04d}-gripper",
        role=Role.GRIPPER, task=script.task, obj_name=script.obj_name,
        frames=tuple(grip_frames),
        camera_poses=_camera_stream(script, grip_times))

    labels = [StageLabel.INTERACTIVE if script.is_contact(t)
              else StageLabel.NON_INTERACTIVE for t in range(t1)]
    track = track_from_labels(labels)
    tcp = tuple(
        ActionRecord(t * dt,
                     compose(script.camera_pose(float(t)), script.rig.t_cam_tcp),
                     GripperState.CLOSED if script.is_contact(t)
                     else GripperState.OPEN)
        for t in range(t1))

    truth = GroundTruth(
        alignment_pairs=tuple((t, u) for u, t in enumerate(script.warp)),
        track=track, tcp=tcp, composites=tuple(composites))
    return hand, gripper, truth


def write_synth_outputs(script: SceneScript, out_dir: Path) -> dict[str, Path]:
    """Render and write hand/, gripper/ episode layouts plus the truth/ tree."""
    from PIL import Image

    out = Path(out_dir)
    hand, gripper, truth = render_pair(script)
    save_episode(hand, out / "hand", rig=script.rig)
    save_episode(gripper, out / "gripper", rig=script.rig)

    truth_dir = out / "truth"
    (truth_dir / "composites").mkdir(parents=True, exist_ok=True)
    (truth_dir / "warp.json").write_text(json.dumps({
        "gripper_to_hand": list(script.warp),
        "pairs": [[int(i), int(j)] for i, j in truth.alignment_pairs],
    }, indent=2, sort_keys=True) + "\n")
    save_stages(truth.track, truth_dir / "stages.jsonl")
    save_actions(truth.tcp, truth_dir / "tcp.jsonl")
    for idx, img in enumerate(truth.composites):
        Image.fromarray(img).save(truth_dir / "composites" / f"{idx:06d}.png",
                                  format="PNG")
    return {"hand": out / "hand", "gripper": out / "gripper",
            "truth": truth_dir}


# --------------------------------------------------------------------------
# script (de)serialization
# --------------------------------------------------------------------------

def _resolve_warp(spec, duration: int) -> tuple[int, ...]:
    if isinstance(spec, dict):
        kind = spec.get("kind", "identity")
        if kind == "identity":
            return tuple(range(duration))
        if kind == "shift":
            offset = int(spec.get("offset", 0))
            if offset < 0 or offset >= duration:
                raise InvalidScript(f"shift offset {offset} outside [0, "
                                    f"{duration})")
            return tuple(range(offset, duration))
        if kind == "explicit":
            return tuple(int(v) for v in spec["gripper_to_hand"])
        raise InvalidScript(f"unknown warp kind {kind!r}")
    return tuple(int(v) for v in spec)


def script_from_json(doc: dict) -> SceneScript:
    try:
        duration = int(doc["duration_frames"])
        effector = doc["effector"]
        obj = doc["object"]
        depth = doc.get("depth_m", {"start": 0.3, "end": 0.2})
        return SceneScript(
            seed=int(doc["seed"]),
            duration_frames=duration,
            image_size=(int(doc["image_size"][0]), int(doc["image_size"][1])),
            effector_start=tuple(int(v) for v in effector["start_xy"]),
            effector_end=tuple(int(v) for v in effector["end_xy"]),
            depth_start_m=float(depth["start"]),
            depth_end_m=float(depth["end"]),
            object_color=tuple(int(v) for v in obj["color_rgb"]),
            object_size_px=int(obj["size_px"]),
            object_rest=tuple(int(v) for v in obj["rest_xy"]),
            warp=_resolve_warp(doc.get("warp", {"kind": "identity"}), duration),
            contact_windows=tuple((int(a), int(b))
                                  for a, b in doc.get("contact_windows", [])),
            rig=CameraRig(pose_from_json(doc["rig"]["t_cam_tcp"]),
                          doc["rig"].get("intrinsics", {})),
            fps=int(doc.get("fps", 30)),
            obj_name=str(doc.get("obj_name", "block")),
            task=str(doc.get("task", "synthetic-demo")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidScript(f"malformed scene script: {exc}") from exc


def load_script(path: Path) -> SceneScript:
    return script_from_json(json.loads(Path(path).read_text()))


def default_script(seed: int = 7) -> SceneScript:
    """Bundled desk-scale script: straight sweep with one contact window."""
    return script_from_json({
        "seed": seed,
        "duration_frames": 36,
        "image_size": [128, 96],
        "fps": 30,
        "effector": {"start_xy": [18, 34], "end_xy": [108, 38]},
        "depth_m": {"start": 0.30, "end": 0.22},
        "object": {"color_rgb": [205, 92, 42], "size_px": 14,
                   "rest_xy": [100, 80]},
        "warp": {"kind": "identity"},
        "contact_windows": [[14, 24]],
        "obj_name": "block",
        "rig": {
            "t_cam_tcp": {"trans": [0.0, 0.02, 0.15],
                          "quat_wxyz": [1.0, 0.0, 0.0, 0.0]},
            "intrinsics": {"model": "fisheye", "focal": 280.0,
                           "center": [64.0, 48.0],
                           "distortion": [0.1, -0.02, 0.0, 0.0]},
        },
    })
