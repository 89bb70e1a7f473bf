"""Interactive / non-interactive stage labeling from mask geometry.

A frame is interactive when the dilated effector mask overlaps the object
mask; runs shorter than the hysteresis are flicker and get merged away.
Gripper open/closed status is defined directly off the stage: closed during
interaction, open otherwise.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from .errors import DimMismatch, EmptyInput, MissingEffector


class StageLabel(Enum):
    INTERACTIVE = "interactive"
    NON_INTERACTIVE = "non_interactive"


class GripperState(Enum):
    OPEN = "open"
    CLOSED = "closed"


@dataclass(frozen=True, eq=False)
class StageTrack:
    """Per-frame stage labels plus the contact events they imply.

    contact_events are inclusive (start, end) index ranges that exactly
    reconstruct the interactive runs in labels; this is validated on
    construction.
    """

    labels: tuple[StageLabel, ...]
    contact_events: tuple[tuple[int, int], ...]

    def __post_init__(self):
        labels = tuple(StageLabel(v) for v in self.labels)
        events = tuple((int(a), int(b)) for a, b in self.contact_events)
        if events != _events_from_labels(labels):
            raise DimMismatch("contact_events do not reconstruct the "
                              "interactive runs in labels")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "contact_events", events)

    def __len__(self) -> int:
        return len(self.labels)


def _events_from_labels(labels: Sequence[StageLabel]) -> tuple[tuple[int, int], ...]:
    events = []
    start = None
    for k, lab in enumerate(labels):
        if lab is StageLabel.INTERACTIVE and start is None:
            start = k
        elif lab is not StageLabel.INTERACTIVE and start is not None:
            events.append((start, k - 1))
            start = None
    if start is not None:
        events.append((start, len(labels) - 1))
    return tuple(events)


def track_from_labels(labels: Iterable[StageLabel]) -> StageTrack:
    labels = tuple(labels)
    return StageTrack(labels, _events_from_labels(labels))


def classify_frame(effector_mask: np.ndarray, object_mask: np.ndarray,
                   dilation_px: int = 5, min_overlap_px: int = 1) -> StageLabel:
    """Interactive iff the effector mask, dilated by ``dilation_px`` pixels
    (square structuring element, Chebyshev radius), overlaps the object mask
    in at least ``min_overlap_px`` pixels. dilation_px = 0 means no dilation.
    """
    eff = np.asarray(effector_mask, dtype=bool)
    obj = np.asarray(object_mask, dtype=bool)
    if eff.shape != obj.shape:
        raise DimMismatch(f"mask shapes differ: {eff.shape} vs {obj.shape}")
    if dilation_px < 0:
        raise DimMismatch("dilation_px must be >= 0")
    if not eff.any():
        raise MissingEffector("effector mask is empty")
    if dilation_px > 0:
        side = 2 * dilation_px + 1
        eff = ndimage.binary_dilation(eff, structure=np.ones((side, side), bool))
    overlap = int(np.count_nonzero(eff & obj))
    if overlap >= min_overlap_px:
        return StageLabel.INTERACTIVE
    return StageLabel.NON_INTERACTIVE


def _smooth_runs(labels: list[StageLabel], hysteresis: int) -> list[StageLabel]:
    """Merge interior runs shorter than the hysteresis into their surroundings.

    Only runs with neighbors on both sides count as flicker; runs touching
    either end of the track are kept, since nothing fully surrounds them.
    The shortest offending run (leftmost on ties) is flipped first, so the
    result is deterministic and a fixed point of this pass.
    """
    runs: list[list] = []
    for lab in labels:
        if runs and runs[-1][0] is lab:
            runs[-1][1] += 1
        else:
            runs.append([lab, 1])
    while True:
        interior = [k for k in range(1, len(runs) - 1)
                    if runs[k][1] < hysteresis]
        if not interior:
            break
        k = min(interior, key=lambda r: (runs[r][1], r))
        runs[k][0] = (StageLabel.NON_INTERACTIVE
                      if runs[k][0] is StageLabel.INTERACTIVE
                      else StageLabel.INTERACTIVE)
        merged: list[list] = []
        for lab, n in runs:
            if merged and merged[-1][0] is lab:
                merged[-1][1] += n
            else:
                merged.append([lab, n])
        runs = merged
    out: list[StageLabel] = []
    for lab, n in runs:
        out.extend([lab] * n)
    return out


def classify_track(frames: Sequence[tuple[np.ndarray, np.ndarray]],
                   hysteresis: int = 3, dilation_px: int = 5,
                   min_overlap_px: int = 1) -> StageTrack:
    """Per-frame classification followed by run-length flicker suppression."""
    if len(frames) == 0:
        raise EmptyInput("classify_track needs at least one frame")
    if hysteresis < 0:
        raise DimMismatch("hysteresis must be >= 0")
    labels = []
    for idx, (eff, obj) in enumerate(frames):
        try:
            labels.append(classify_frame(eff, obj, dilation_px, min_overlap_px))
        except (DimMismatch, MissingEffector) as exc:
            raise type(exc)(f"frame {idx}: {exc}") from exc
    smoothed = _smooth_runs(labels, hysteresis)
    return track_from_labels(smoothed)


def gripper_status(track: StageTrack) -> tuple[GripperState, ...]:
    """Closed exactly where the stage is interactive, open elsewhere."""
    return tuple(GripperState.CLOSED if lab is StageLabel.INTERACTIVE
                 else GripperState.OPEN for lab in track.labels)


def save_stages(track: StageTrack, path: Path) -> None:
    status = gripper_status(track)
    with open(Path(path), "w") as fh:
        for idx, lab in enumerate(track.labels):
            fh.write(json.dumps({"idx": idx, "stage": lab.value,
                                 "gripper": status[idx].value},
                                sort_keys=True) + "\n")


def load_stages(path: Path) -> StageTrack:
    labels = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        d = json.loads(line)
        labels.append((int(d["idx"]), StageLabel(d["stage"])))
    labels.sort(key=lambda r: r[0])
    return track_from_labels(lab for _, lab in labels)
