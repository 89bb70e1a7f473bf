"""Temporal alignment of a hand episode against a gripper episode.

Frames are embedded (either by the built-in deterministic pixel embedder or
from an external emb.jsonl file), matched by nearest-neighbor retrieval with
cycle-consistency filtering, and finally forced monotone. A classic DTW
aligner is provided as a verification oracle for the NN retrieval path.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .episode import Episode, Frame
from .errors import DimMismatch, EmptyAlignment, EmptyInput, InvalidMap

EMBED_SIDE = 32  # built-in embedder output is EMBED_SIDE x EMBED_SIDE


@dataclass(frozen=True, eq=False)
class EmbeddingSequence:
    """One fixed-dimension real vector per frame of a source episode."""

    vectors: np.ndarray
    source_episode_id: str

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.ndim != 2:
            raise DimMismatch(f"embedding array must be 2-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DimMismatch("embedding vectors contain non-finite values")
        v = np.ascontiguousarray(v)
        v.flags.writeable = False
        object.__setattr__(self, "vectors", v)

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True, eq=False)
class AlignmentMap:
    """(hand_index, gripper_index) pairs on a common logical timeline.

    Hand indices are strictly increasing; the map length T never exceeds
    either source length (checked against the episodes when applied).
    """

    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        pairs = tuple((int(i), int(j)) for i, j in self.pairs)
        for k in range(len(pairs)):
            if pairs[k][0] < 0 or pairs[k][1] < 0:
                raise InvalidMap(f"negative index in pair {pairs[k]}")
            if k and pairs[k][0] <= pairs[k - 1][0]:
                raise InvalidMap("hand indices must be strictly increasing")
        object.__setattr__(self, "pairs", pairs)

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def t(self) -> int:
        return len(self.pairs)


# --------------------------------------------------------------------------
# built-in embedder
# --------------------------------------------------------------------------

def _area_overlap_weights(n_in: int, n_out: int) -> np.ndarray:
    """Integer area-overlap matrix (n_out, n_in) in units of 1/n_out pixel.

    Row o covers input span [o*n_in/n_out, (o+1)*n_in/n_out); entry (o, p)
    is the overlap of that span with pixel p, scaled by n_out so everything
    stays integral (exact across platforms).
    """
    w = np.zeros((n_out, n_in), dtype=np.int64)
    for o in range(n_out):
        lo, hi = o * n_in, (o + 1) * n_in  # in units of 1/n_out pixel
        p0, p1 = lo // n_out, (hi + n_out - 1) // n_out
        for p in range(p0, min(p1, n_in)):
            overlap = min(hi, (p + 1) * n_out) - max(lo, p * n_out)
            if overlap > 0:
                w[o, p] = overlap
    return w


def embed_frame(frame: Frame) -> np.ndarray:
    """Deterministic pixel embedding of a single frame.

    Grayscale (0.299 R + 0.587 G + 0.114 B), exact area-average downsample to
    32x32, flatten, then z-normalize. All accumulation is integer until the
    final division, so identical inputs embed bit-for-bit identically
    regardless of platform or thread count. Zero-variance frames map to the
    zero vector.
    """
    img = frame.image.astype(np.int64)
    # gray scaled by 1000 to stay integral
    gray = 299 * img[:, :, 0] + 587 * img[:, :, 1] + 114 * img[:, :, 2]
    h, w = gray.shape
    wr = _area_overlap_weights(h, EMBED_SIDE)
    wc = _area_overlap_weights(w, EMBED_SIDE)
    sums = wr @ gray @ wc.T  # exact int64
    cells = sums.astype(np.float64) / (1000.0 * h * w)
    flat = cells.reshape(-1)
    mean = flat.mean()
    centered = flat - mean
    var = np.mean(centered * centered)
    if var == 0.0:
        return np.zeros_like(flat)
    return centered / np.sqrt(var)


def embed_builtin(episode: Episode) -> EmbeddingSequence:
    """Embed every frame of an episode with the built-in pixel embedder."""
    if len(episode.frames) == 0:
        raise EmptyInput(f"episode '{episode.episode_id}' has no frames")
    vectors = np.stack([embed_frame(f) for f in episode.frames])
    return EmbeddingSequence(vectors, episode.episode_id)


# --------------------------------------------------------------------------
# nearest-neighbor retrieval with cycle filtering
# --------------------------------------------------------------------------

def _sq_dist_row(vectors: np.ndarray, query: np.ndarray) -> np.ndarray:
    diff = vectors - query
    return np.einsum("ij,ij->i", diff, diff)


def _check_pair(hand: EmbeddingSequence, gripper: EmbeddingSequence) -> None:
    if len(hand) == 0 or len(gripper) == 0:
        raise EmptyInput("embedding sequences must be non-empty")
    if hand.dim != gripper.dim:
        raise DimMismatch(f"embedding dims differ: {hand.dim} vs {gripper.dim}")


def _lis_indices(values: list[int]) -> list[int]:
    """Positions of the canonical longest strictly increasing subsequence.

    Canonical = the earliest-position chain among all maximum-length ones:
    scan left to right and keep a position whenever a maximal chain through
    it is still achievable. Deterministic for every input.
    """
    n = len(values)
    if n == 0:
        return []
    # suffix[p] = length of the longest strictly increasing run starting at p
    suffix = [1] * n
    for p in range(n - 2, -1, -1):
        best = 0
        for q in range(p + 1, n):
            if values[q] > values[p] and suffix[q] > best:
                best = suffix[q]
        suffix[p] = best + 1
    need = max(suffix)
    out: list[int] = []
    last = None
    for p in range(n):
        if suffix[p] == need and (last is None or values[p] > last):
            out.append(p)
            last = values[p]
            need -= 1
            if need == 0:
                break
    return out


def nn_align(hand: EmbeddingSequence, gripper: EmbeddingSequence,
             cycle_tolerance: int = 2) -> AlignmentMap:
    """Nearest-neighbor retrieval with cycle-consistency filtering.

    For each hand frame i the closest gripper frame j*(i) is retrieved under
    squared Euclidean distance (ties to the lowest index). The pair survives
    only if the reverse lookup lands within ``cycle_tolerance`` frames of i.
    Surviving pairs are made strictly monotone by a longest increasing
    subsequence pass on the gripper indices: non-monotone maps would produce
    causally impossible action sequences downstream.
    """
    _check_pair(hand, gripper)
    hv, gv = hand.vectors, gripper.vectors

    fwd = np.empty(len(hand), dtype=np.int64)
    for i in range(len(hand)):
        fwd[i] = int(np.argmin(_sq_dist_row(gv, hv[i])))
    rev = np.empty(len(gripper), dtype=np.int64)
    for j in range(len(gripper)):
        rev[j] = int(np.argmin(_sq_dist_row(hv, gv[j])))

    kept = [(i, int(fwd[i])) for i in range(len(hand))
            if abs(int(rev[fwd[i]]) - i) <= cycle_tolerance]
    if not kept:
        return AlignmentMap(())
    keep_pos = _lis_indices([j for _, j in kept])
    return AlignmentMap(tuple(kept[p] for p in keep_pos))


# --------------------------------------------------------------------------
# DTW oracle
# --------------------------------------------------------------------------

def _cost_matrix(hand: EmbeddingSequence, gripper: EmbeddingSequence) -> np.ndarray:
    cost = np.empty((len(hand), len(gripper)))
    for i in range(len(hand)):
        cost[i] = _sq_dist_row(gripper.vectors, hand.vectors[i])
    return cost


def _dtw_table(cost: np.ndarray) -> np.ndarray:
    n, m = cost.shape
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            acc[i, j] = cost[i - 1, j - 1] + min(
                acc[i - 1, j - 1], acc[i - 1, j], acc[i, j - 1])
    return acc


def dtw_total_cost(hand: EmbeddingSequence, gripper: EmbeddingSequence) -> float:
    """Minimal accumulated cost of any monotone path (both endpoints pinned)."""
    _check_pair(hand, gripper)
    return float(_dtw_table(_cost_matrix(hand, gripper))[-1, -1])


def dtw_align(hand: EmbeddingSequence, gripper: EmbeddingSequence) -> AlignmentMap:
    """Dynamic-programming minimal-cost monotone alignment.

    The optimal path is traced back with a fixed tie preference (diagonal,
    then hand-step, then gripper-step) and deduplicated to one gripper index
    per hand index, keeping the lowest-cost cell (ties to the lowest index).
    """
    _check_pair(hand, gripper)
    cost = _cost_matrix(hand, gripper)
    acc = _dtw_table(cost)

    path = []
    i, j = cost.shape[0], cost.shape[1]
    while i > 0 and j > 0:
        path.append((i - 1, j - 1))
        moves = (acc[i - 1, j - 1], acc[i - 1, j], acc[i, j - 1])
        k = int(np.argmin(moves))  # ties resolve to the diagonal first
        if k == 0:
            i, j = i - 1, j - 1
        elif k == 1:
            i -= 1
        else:
            j -= 1
    path.reverse()

    best: dict[int, tuple[float, int]] = {}
    for i, j in path:
        c = float(cost[i, j])
        if i not in best or (c, j) < best[i]:
            best[i] = (c, j)
    pairs = tuple((i, best[i][1]) for i in sorted(best))
    return AlignmentMap(pairs)


# --------------------------------------------------------------------------
# applying a map
# --------------------------------------------------------------------------

def apply_alignment(hand: Episode, gripper: Episode,
                    amap: AlignmentMap) -> tuple[Episode, Episode]:
    """Select frames by the map, re-stamping gripper frames onto the hand
    episode's timeline. Returns two equal-length episodes with their roles
    preserved. The gripper output carries no camera poses: its original pose
    timeline no longer corresponds to the re-stamped frames.
    """
    if len(amap) == 0:
        raise EmptyAlignment("cannot apply an empty alignment map")
    for i, j in amap.pairs:
        if i >= len(hand.frames) or j >= len(gripper.frames):
            raise InvalidMap(
                f"pair ({i}, {j}) out of bounds for episodes of length "
                f"{len(hand.frames)} and {len(gripper.frames)}")

    hand_frames = tuple(hand.frames[i] for i, _ in amap.pairs)
    grip_frames = tuple(
        gripper.frames[j].with_timestamp(hand.frames[i].timestamp_ns)
        for i, j in amap.pairs)

    aligned_hand = Episode(hand.episode_id, hand.role, hand.task,
                           hand.obj_name, hand_frames, hand.camera_poses)
    aligned_grip = Episode(gripper.episode_id, gripper.role, gripper.task,
                           gripper.obj_name, grip_frames, ())
    return aligned_hand, aligned_grip


# --------------------------------------------------------------------------
# file formats
# --------------------------------------------------------------------------

def save_alignment(amap: AlignmentMap, hand_episode_id: str,
                   gripper_episode_id: str, cycle_tolerance: int,
                   path: Path) -> None:
    doc = {
        "hand_episode": hand_episode_id,
        "gripper_episode": gripper_episode_id,
        "cycle_tolerance": int(cycle_tolerance),
        "pairs": [[int(i), int(j)] for i, j in amap.pairs],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_alignment(path: Path) -> tuple[AlignmentMap, dict]:
    doc = json.loads(Path(path).read_text())
    return AlignmentMap(tuple((p[0], p[1]) for p in doc["pairs"])), doc


def load_embeddings(path: Path, source_episode_id: str = "") -> EmbeddingSequence:
    """Read an emb.jsonl file: one {"idx": int, "vec": [floats]} per line."""
    rows = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        d = json.loads(line)
        rows.append((int(d["idx"]), np.asarray(d["vec"], dtype=np.float64)))
    if not rows:
        raise EmptyInput(f"no embeddings in {path}")
    rows.sort(key=lambda r: r[0])
    if [r[0] for r in rows] != list(range(len(rows))):
        raise InvalidMap(f"embedding indices in {path} are not 0..N-1")
    return EmbeddingSequence(np.stack([r[1] for r in rows]), source_episode_id)
