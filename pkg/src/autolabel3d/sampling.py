"""Sparse annotation sampling and mining-pair enumeration.

Sampling keeps at most `max_per_track` annotations per track, drawn at
uniform temporal spacing from the eligible (not heavily occluded) frames.
Mining enumerates four pair strategies: self, support, cycle, and
step-support; the latter two route through an unlabeled waypoint frame
within a window of the labeled source.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .core import Annotation, InvalidArgument, Sequence

STRATEGIES = ("self", "support", "cycle", "step_support")

DEFAULT_MAX_PER_TRACK = 4
DEFAULT_WINDOW = 8


def is_eligible(ann: Annotation) -> bool:
    """Annotation can seed or waypoint: not heavily occluded.

    KITTI occlusion levels 0 and 1 qualify; level 3 ("unknown") does not.
    When a nuScenes-style visibility value is present it must be 2, 3 or 4.
    """
    if ann.occlusion_level not in (0, 1):
        return False
    if ann.visibility is not None and ann.visibility not in (2, 3, 4):
        return False
    return True


@dataclass(frozen=True)
class SparseLabelSet:
    sequence_id: str
    selected: dict[int, tuple[int, ...]]  # track_id -> selected frame indices
    omitted: tuple[tuple[int, str], ...]  # (track_id, reason) diagnostics
    max_per_track: int
    seed: int
    reduction_ratio: float

    def __post_init__(self):
        for tid, frames in self.selected.items():
            if any(b <= a for a, b in zip(frames, frames[1:])):
                raise InvalidArgument(f"track {tid}: frames not increasing")
            if len(frames) > self.max_per_track:
                raise InvalidArgument(f"track {tid}: over budget")

    def labeled_frames(self, track_id: int) -> tuple[int, ...]:
        return self.selected.get(track_id, ())

    def __eq__(self, other):
        if not isinstance(other, SparseLabelSet):
            return NotImplemented
        return (self.sequence_id == other.sequence_id
                and self.selected == other.selected
                and self.omitted == other.omitted
                and self.max_per_track == other.max_per_track
                and self.seed == other.seed
                and self.reduction_ratio == other.reduction_ratio)


def _round_half_down(x: float) -> int:
    return math.ceil(x - 0.5)


def uniform_positions(n: int, k: int) -> list[int]:
    """k index positions spread uniformly over [0, n); ties toward earlier."""
    if k >= n:
        return list(range(n))
    if k == 1:
        return [_round_half_down((n - 1) / 2.0)]
    return [_round_half_down(i * (n - 1) / (k - 1)) for i in range(k)]


def sample_sparse(seq: Sequence, max_per_track: int = DEFAULT_MAX_PER_TRACK,
                  seed: int = 0) -> SparseLabelSet:
    """Select the sparse label subset from dense ground truth.

    The uniform-spacing rule is fully deterministic; `seed` is recorded so
    downstream artifacts echo the run configuration.
    """
    if max_per_track < 1:
        raise InvalidArgument("max_per_track must be >= 1")
    selected: dict[int, tuple[int, ...]] = {}
    omitted: list[tuple[int, str]] = []
    total = 0
    kept = 0
    per_track_anns: dict[int, list[Annotation]] = {}
    for f in seq.frames:
        for a in f.annotations:
            per_track_anns.setdefault(a.track_id, []).append(a)
            total += 1
    for tid in sorted(per_track_anns):
        eligible = [a.frame_index for a in per_track_anns[tid] if is_eligible(a)]
        if not eligible:
            omitted.append((tid, "no-eligible-frames"))
            continue
        k = min(max_per_track, len(eligible))
        frames = tuple(eligible[p] for p in uniform_positions(len(eligible), k))
        selected[tid] = frames
        kept += len(frames)
    ratio = 1.0 - kept / total if total else 0.0
    return SparseLabelSet(sequence_id=seq.id, selected=selected,
                          omitted=tuple(omitted), max_per_track=max_per_track,
                          seed=seed, reduction_ratio=ratio)


@dataclass(frozen=True)
class MiningPair:
    track_id: int
    strategy: str
    source_frame: int
    waypoint_frame: Optional[int]
    target_frame: int

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise InvalidArgument(f"unknown strategy {self.strategy!r}")
        s, w, t = self.source_frame, self.waypoint_frame, self.target_frame
        ok = {
            "self": s == t and w is None,
            "support": s != t and w is None,
            "cycle": w is not None and t == s,
            "step_support": w is not None and t != s,
        }[self.strategy]
        if not ok:
            raise InvalidArgument(
                f"{self.strategy} pair violates its frame constraints: "
                f"source={s} waypoint={w} target={t}")


def mine_pairs(seq: Sequence, sparse: SparseLabelSet,
               window: int = DEFAULT_WINDOW) -> list[MiningPair]:
    """Enumerate all mining pairs; deterministic order by
    (track, strategy, source, waypoint, target)."""
    if window < 0:
        raise InvalidArgument("window must be >= 0")
    pairs: list[MiningPair] = []
    for tid in sorted(sparse.selected):
        labeled = list(sparse.selected[tid])
        labeled_set = set(labeled)
        unlabeled = [f.frame_index for f in seq.frames
                     for a in f.annotations
                     if a.track_id == tid and is_eligible(a)
                     and a.frame_index not in labeled_set]
        for s in labeled:
            pairs.append(MiningPair(tid, "self", s, None, s))
        for s in labeled:
            for t in labeled:
                if s != t:
                    pairs.append(MiningPair(tid, "support", s, None, t))
        for s in labeled:
            for u in unlabeled:
                if abs(u - s) <= window:
                    pairs.append(MiningPair(tid, "cycle", s, u, s))
        for s in labeled:
            for u in unlabeled:
                if abs(u - s) > window:
                    continue
                for t in labeled:
                    if t != s:
                        pairs.append(MiningPair(tid, "step_support", s, u, t))
    key = {s: i for i, s in enumerate(STRATEGIES)}
    pairs.sort(key=lambda p: (p.track_id, key[p.strategy], p.source_frame,
                              -1 if p.waypoint_frame is None else p.waypoint_frame,
                              p.target_frame))
    return pairs
