"""Composited ground-truth gripper frames.

The background comes from the hand frame, the foreground is pasted from the
aligned gripper frame, and hand pixels not covered by the new foreground are
filled with classical neighbor-mean inpainting. The defining contract: every
pixel outside fg_mask + inpaint_mask is bit-identical to the hand frame.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .episode import Frame
from .errors import DimMismatch, MissingMask, NothingToAnchor
from .stages import StageLabel

DEFAULT_INPAINT_ITERS = 10_000


@dataclass(frozen=True, eq=False)
class CompositeFrame:
    """Synthesized gripper frame with provenance masks.

    fg_mask marks pixels copied from the gripper frame; inpaint_mask marks
    synthesized pixels. The two never overlap, and everything outside their
    union is untouched hand-frame background.
    """

    image: np.ndarray
    fg_mask: np.ndarray
    inpaint_mask: np.ndarray
    source_hand_idx: int = -1
    source_gripper_idx: int = -1

    def __post_init__(self):
        image = np.ascontiguousarray(np.asarray(self.image, dtype=np.uint8))
        fg = np.ascontiguousarray(np.asarray(self.fg_mask, dtype=bool))
        inp = np.ascontiguousarray(np.asarray(self.inpaint_mask, dtype=bool))
        if fg.shape != image.shape[:2] or inp.shape != image.shape[:2]:
            raise DimMismatch("composite masks must match the image size")
        if bool(np.any(fg & inp)):
            raise DimMismatch("fg_mask and inpaint_mask overlap")
        for name, arr in (("image", image), ("fg_mask", fg),
                          ("inpaint_mask", inp)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


def foreground_mask(frame: Frame, stage: StageLabel) -> np.ndarray:
    """Foreground definition is stage-dependent: during interaction both the
    gripper and the object transform, otherwise the object stays background.
    """
    gripper = frame.mask("gripper")
    if gripper is None:
        raise MissingMask("frame has no 'gripper' mask")
    if stage is StageLabel.INTERACTIVE:
        obj = frame.mask("object")
        if obj is None:
            raise MissingMask("interactive frame has no 'object' mask")
        return gripper | obj
    return gripper.copy()


def inpaint(image: np.ndarray, hole: np.ndarray,
            max_iters: int = DEFAULT_INPAINT_ITERS) -> np.ndarray:
    """Fill ``hole`` by iterative neighbor-mean diffusion.

    Each pass fills every hole pixel that has at least one known 4-neighbor
    with the mean of those neighbors, then marks it known; this peels the
    hole inward until it is empty or ``max_iters`` passes ran. Pixels outside
    the hole are never altered.
    """
    img = np.asarray(image)
    hole = np.asarray(hole, dtype=bool)
    if hole.shape != img.shape[:2]:
        raise DimMismatch(f"hole shape {hole.shape} != image {img.shape[:2]}")
    out = img.copy()
    if not hole.any():
        return out
    if hole.all():
        raise NothingToAnchor("hole covers the entire image")

    work = img.astype(np.float64)
    remaining = hole.copy()
    for _ in range(max_iters):
        if not remaining.any():
            break
        known = ~remaining
        kf = known.astype(np.float64)
        kv = work * kf[:, :, None]
        cnt = np.zeros(hole.shape)
        acc = np.zeros(work.shape)
        cnt[1:, :] += kf[:-1, :]
        acc[1:, :] += kv[:-1, :]
        cnt[:-1, :] += kf[1:, :]
        acc[:-1, :] += kv[1:, :]
        cnt[:, 1:] += kf[:, :-1]
        acc[:, 1:] += kv[:, :-1]
        cnt[:, :-1] += kf[:, 1:]
        acc[:, :-1] += kv[:, 1:]
        fill = remaining & (cnt > 0)
        if not fill.any():
            break  # isolated region; cannot happen unless hole is everything
        work[fill] = acc[fill] / cnt[fill][:, None]
        remaining[fill] = False

    filled = hole & ~remaining
    out[filled] = np.clip(np.rint(work[filled]), 0, 255).astype(np.uint8)
    return out


def composite(hand_frame: Frame, gripper_frame: Frame, stage: StageLabel,
              source_hand_idx: int = -1, source_gripper_idx: int = -1,
              max_inpaint_iters: int = DEFAULT_INPAINT_ITERS) -> CompositeFrame:
    """Build the refined gripper frame from an aligned hand/gripper pair.

    The hand-frame hole is the hand region (plus the hand-frame object
    region when interactive, since the object is re-pasted from the gripper
    frame); the hole minus the new foreground is inpainted, then the
    gripper-frame foreground pixels are pasted on top.
    """
    if hand_frame.image.shape != gripper_frame.image.shape:
        raise DimMismatch(
            f"frame sizes differ: {hand_frame.image.shape} vs "
            f"{gripper_frame.image.shape}")

    hand_mask = hand_frame.mask("hand")
    if hand_mask is None:
        raise MissingMask("hand frame has no 'hand' mask")
    hole = hand_mask.copy()
    if stage is StageLabel.INTERACTIVE:
        obj = hand_frame.mask("object")
        if obj is None:
            raise MissingMask("interactive hand frame has no 'object' mask")
        hole |= obj

    fg = foreground_mask(gripper_frame, stage)
    inpaint_mask = hole & ~fg

    image = inpaint(hand_frame.image, inpaint_mask, max_inpaint_iters)
    image[fg] = gripper_frame.image[fg]

    return CompositeFrame(image=image, fg_mask=fg, inpaint_mask=inpaint_mask,
                          source_hand_idx=source_hand_idx,
                          source_gripper_idx=source_gripper_idx)
