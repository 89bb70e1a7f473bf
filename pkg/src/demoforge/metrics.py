"""PSNR and SSIM between predicted/composited frames and ground truth.

Conventions (also recorded in every report for comparability):
  * PSNR over all three channels jointly, MAX = 255; zero MSE is reported as
    an infinite sentinel and excluded from means with an explicit count.
  * SSIM on the luma channel, single scale, 8x8 sliding window with stride 1
    and uniform weights, C1 = (0.01*255)^2, C2 = (0.03*255)^2, population
    statistics per window, mean over all windows.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .episode import Episode
from .errors import DimMismatch, LengthMismatch, TooSmall

SSIM_WINDOW = 8
SSIM_C1 = (0.01 * 255.0) ** 2
SSIM_C2 = (0.03 * 255.0) ** 2

METRIC_CONFIG = {
    "psnr_max": 255.0,
    "psnr_channels": "rgb_joint",
    "ssim_window": SSIM_WINDOW,
    "ssim_stride": 1,
    "ssim_weights": "uniform",
    "ssim_channel": "luma_bt601",
    "ssim_c1": SSIM_C1,
    "ssim_c2": SSIM_C2,
}


@dataclass(frozen=True)
class FrameMetrics:
    idx: int
    psnr_db: float  # math.inf when the frames are identical
    ssim: float


@dataclass(frozen=True)
class MetricReport:
    per_frame: tuple[FrameMetrics, ...]
    mean_psnr_db: float  # over finite frames only; inf when none are finite
    infinite_psnr_frames: int
    mean_ssim: float


def _check_dims(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimMismatch(f"image shapes differ: {a.shape} vs {b.shape}")


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB; inf when the images are identical."""
    a = np.asarray(a)
    b = np.asarray(b)
    _check_dims(a, b)
    diff = a.astype(np.float64) - b.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)


def _luma(img: np.ndarray) -> np.ndarray:
    f = img.astype(np.float64)
    if f.ndim == 2:
        return f
    return 0.299 * f[:, :, 0] + 0.587 * f[:, :, 1] + 0.114 * f[:, :, 2]


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean structural similarity over all 8x8 windows of the luma channel."""
    a = np.asarray(a)
    b = np.asarray(b)
    _check_dims(a, b)
    h, w = a.shape[:2]
    if min(h, w) < SSIM_WINDOW:
        raise TooSmall(f"image {w}x{h} smaller than the "
                       f"{SSIM_WINDOW}x{SSIM_WINDOW} window")
    la, lb = _luma(a), _luma(b)

    total = 0.0
    count = 0
    # Process window rows in chunks to bound the sliding-view memory.
    chunk = max(1, 4_000_000 // (max(w, SSIM_WINDOW) * SSIM_WINDOW ** 2))
    for r0 in range(0, h - SSIM_WINDOW + 1, chunk):
        r1 = min(r0 + chunk, h - SSIM_WINDOW + 1)
        wa = sliding_window_view(la[r0:r1 + SSIM_WINDOW - 1],
                                 (SSIM_WINDOW, SSIM_WINDOW))
        wb = sliding_window_view(lb[r0:r1 + SSIM_WINDOW - 1],
                                 (SSIM_WINDOW, SSIM_WINDOW))
        mu_a = wa.mean(axis=(-2, -1))
        mu_b = wb.mean(axis=(-2, -1))
        da = wa - mu_a[..., None, None]
        db = wb - mu_b[..., None, None]
        var_a = np.mean(da * da, axis=(-2, -1))
        var_b = np.mean(db * db, axis=(-2, -1))
        cov = np.mean(da * db, axis=(-2, -1))
        num = (2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2)
        den = (mu_a ** 2 + mu_b ** 2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
        smap = num / den
        total += float(smap.sum())
        count += smap.size
    return total / count


def evaluate_episode(pred: Episode, truth: Episode) -> MetricReport:
    """Per-frame PSNR/SSIM plus means, ordered by frame index."""
    if len(pred.frames) != len(truth.frames):
        raise LengthMismatch(f"episode lengths differ: {len(pred.frames)} vs "
                             f"{len(truth.frames)}")
    per_frame = []
    for idx, (pf, tf) in enumerate(zip(pred.frames, truth.frames)):
        per_frame.append(FrameMetrics(idx, psnr(pf.image, tf.image),
                                      ssim(pf.image, tf.image)))
    finite = [m.psnr_db for m in per_frame if math.isfinite(m.psnr_db)]
    mean_psnr = float(np.mean(finite)) if finite else math.inf
    mean_ssim = float(np.mean([m.ssim for m in per_frame])) if per_frame else 0.0
    return MetricReport(tuple(per_frame), mean_psnr,
                        len(per_frame) - len(finite), mean_ssim)


def _json_psnr(value: float):
    # JSON has no Infinity literal; infinite PSNR serializes as null and is
    # counted separately in the report.
    return None if math.isinf(value) else value


def save_report(report: MetricReport, path: Path,
                config: dict | None = None) -> None:
    doc = {
        "config": dict(METRIC_CONFIG, **(config or {})),
        "mean_psnr_db": _json_psnr(report.mean_psnr_db),
        "infinite_psnr_frames": report.infinite_psnr_frames,
        "mean_ssim": report.mean_ssim,
        "per_frame": [
            {"idx": m.idx, "psnr_db": _json_psnr(m.psnr_db), "ssim": m.ssim}
            for m in report.per_frame
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_report(path: Path) -> dict:
    return json.loads(Path(path).read_text())
