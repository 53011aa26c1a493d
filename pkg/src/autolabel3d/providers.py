"""Pluggable providers standing in for the learned networks.

The oracle implementations answer queries from simulator ground truth plus
parameterized noise, so the propagation pipeline and ablations can run at
desk scale. Randomness is drawn from streams keyed by
(seed, track, frame, purpose), which makes outputs independent of call
order and parallel schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (AWAY, TOWARDS, Box2D, Box3D, Heatmap, InvalidArgument,
                   Mask2D, Sequence)
from .geometry import PixelKeypoints, project_keypoints
from .simulator import occlusion_fraction

BACKGROUND_DEPTH = 1e4  # meters, beyond any simulated object

_TAG_DROPOUT = 1
_TAG_CENTER = 2
_TAG_DEPTH = 3
_TAG_DIMS = 4
_TAG_DIRECTION = 5
_TAG_DEPTH_AT = 6


@dataclass(frozen=True)
class NoiseConfig:
    match_dropout_base: float = 0.0
    dropout_occlusion_gain: float = 0.0
    center_px_sigma: float = 0.0
    depth_rel_sigma: float = 0.0
    dims_rel_sigma: float = 0.0
    direction_flip_prob: float = 0.0
    confidence_c0: float = 0.98
    confidence_d0: float = 120.0   # meters; math.inf disables distance decay
    confidence_k_occ: float = 0.6
    seed: int = 0

    def __post_init__(self):
        for name in ("match_dropout_base", "direction_flip_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidArgument(f"{name} must be a probability, got {v}")
        for name in ("center_px_sigma", "depth_rel_sigma", "dims_rel_sigma",
                     "dropout_occlusion_gain"):
            if getattr(self, name) < 0:
                raise InvalidArgument(f"{name} must be >= 0")

    @classmethod
    def noiseless(cls, seed: int = 0) -> "NoiseConfig":
        """Exact ground-truth oracle: no dropout, no noise, confidence 1."""
        return cls(confidence_c0=1.0, confidence_d0=math.inf,
                   confidence_k_occ=0.0, seed=seed)


@dataclass(frozen=True)
class MatchResult:
    box2d: Box2D
    confidence: float
    mask: Optional[Mask2D] = None
    similarity: Optional[Heatmap] = None

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise InvalidArgument(f"confidence out of range: {self.confidence}")


@dataclass(frozen=True)
class GeomResult:
    keypoints_px: PixelKeypoints
    dims: tuple[float, float, float]

    def __post_init__(self):
        if any(d <= 0 for d in self.dims):
            raise InvalidArgument(f"dims must be positive: {self.dims}")

    @property
    def direction(self) -> str:
        return self.keypoints_px.direction


def gaussian_radius(height: float, width: float, min_overlap: float = 0.7) -> float:
    """CornerNet-style radius so any center within it keeps IoU >= min_overlap."""
    a1, b1 = 1.0, height + width
    c1 = width * height * (1 - min_overlap) / (1 + min_overlap)
    r1 = (b1 + math.sqrt(b1 * b1 - 4 * a1 * c1)) / 2

    a2, b2 = 4.0, 2 * (height + width)
    c2 = (1 - min_overlap) * width * height
    r2 = (b2 + math.sqrt(b2 * b2 - 4 * a2 * c2)) / 2

    a3, b3 = 4.0 * min_overlap, -2 * min_overlap * (height + width)
    c3 = (min_overlap - 1) * width * height
    r3 = (b3 + math.sqrt(b3 * b3 - 4 * a3 * c3)) / (2 * a3)
    return min(r1, r2, r3)


def heatmap_shape(width: int, height: int, stride: int) -> tuple[int, int]:
    return (math.ceil(height / stride), math.ceil(width / stride))


def splat_boxes(boxes: list[Box2D], width: int, height: int,
                stride: int) -> Heatmap:
    """Max-composed Gaussian splats at box centers; peak cell value is 1."""
    rows, cols = heatmap_shape(width, height, stride)
    grid = np.zeros((rows, cols))
    ys, xs = np.mgrid[0:rows, 0:cols]
    for b in boxes:
        ccol = int(b.cx / stride)
        crow = int(b.cy / stride)
        if not (0 <= crow < rows and 0 <= ccol < cols):
            continue
        radius = gaussian_radius(b.h / stride, b.w / stride)
        sigma = max(radius / 3.0, 1e-6)
        splat = np.exp(-((xs - ccol) ** 2 + (ys - crow) ** 2) / (2 * sigma ** 2))
        np.maximum(grid, splat, out=grid)
    return Heatmap(values=grid, stride=stride)


class OracleProviderSet:
    """Matcher, geometry, depth, and objectness providers over one sequence."""

    def __init__(self, seq: Sequence, noise: Optional[NoiseConfig] = None,
                 heatmap_stride: int = 4):
        self.seq = seq
        self.noise = noise if noise is not None else NoiseConfig.noiseless()
        self.heatmap_stride = heatmap_stride

    def _rng(self, tag: int, *key: int) -> np.random.Generator:
        return np.random.default_rng([self.noise.seed, tag, *key])

    # -- 2D query matching ----------------------------------------------

    def match(self, source_frame: int, track_id: int,
              target_frame: int) -> Optional[MatchResult]:
        """Locate the track in the target frame; None when lost or dropped."""
        self.seq.frame(source_frame)
        frame = self.seq.frame(target_frame)
        ann = self.seq.annotation(target_frame, track_id)
        if ann is None:
            return None
        occ = occlusion_fraction(frame, track_id)

        n = self.noise
        p_drop = min(max(n.match_dropout_base + n.dropout_occlusion_gain * occ,
                         0.0), 1.0)
        if p_drop > 0:
            rng = self._rng(_TAG_DROPOUT, track_id, target_frame, source_frame)
            if rng.random() < p_drop:
                return None

        box = ann.box2d
        if n.center_px_sigma > 0:
            rng = self._rng(_TAG_CENTER, track_id, target_frame, source_frame)
            du, dv = rng.normal(0.0, n.center_px_sigma, size=2)
            box = Box2D(cx=box.cx + du, cy=box.cy + dv, w=box.w, h=box.h)

        z = ann.box3d.center[2]
        decay = math.exp(-z / n.confidence_d0) if math.isfinite(n.confidence_d0) else 1.0
        conf = n.confidence_c0 * decay * (1.0 - n.confidence_k_occ * occ)
        conf = min(max(conf, 0.0), 1.0)
        return MatchResult(box2d=box, confidence=conf, mask=ann.mask)

    # -- 3D geometry estimation -----------------------------------------

    def estimate(self, target_frame: int, track_id: int,
                 box2d: Optional[Box2D] = None) -> GeomResult:
        """Keypoint/dims/direction estimate for a matched object."""
        ann = self.seq.annotation(target_frame, track_id)
        if ann is None:
            raise KeyError(f"track {track_id} not in frame {target_frame}")
        pk = project_keypoints(ann.box3d, self.seq.intrinsics)

        n = self.noise
        depths = list(pk.depths)
        if n.depth_rel_sigma > 0:
            rng = self._rng(_TAG_DEPTH, track_id, target_frame)
            depths = [d * math.exp(n.depth_rel_sigma * g)
                      for d, g in zip(depths, rng.normal(size=3))]
        dims = ann.box3d.dims
        if n.dims_rel_sigma > 0:
            rng = self._rng(_TAG_DIMS, track_id, target_frame)
            dims = tuple(max(d * (1.0 + n.dims_rel_sigma * g), 1e-3)
                         for d, g in zip(dims, rng.normal(size=3)))
        direction = pk.direction
        if n.direction_flip_prob > 0:
            rng = self._rng(_TAG_DIRECTION, track_id, target_frame)
            if rng.random() < n.direction_flip_prob:
                direction = AWAY if direction == TOWARDS else TOWARDS

        pk = PixelKeypoints(front=pk.front, center=pk.center, back=pk.back,
                            depths=tuple(depths), direction=direction)
        return GeomResult(keypoints_px=pk, dims=dims)

    # -- depth network ----------------------------------------------------

    def depth_at(self, frame_index: int, u: float, v: float) -> float:
        """Depth of the nearest object covering the pixel, else a sentinel."""
        K = self.seq.intrinsics
        if not (0 <= u < K.width and 0 <= v < K.height):
            raise InvalidArgument(f"pixel ({u}, {v}) outside the image")
        frame = self.seq.frame(frame_index)
        best = None
        for a in frame.annotations:
            b = a.box2d
            if b.left <= u <= b.right and b.top <= v <= b.bottom:
                z = a.box3d.center[2]
                if best is None or z < best:
                    best = z
        if best is None:
            return BACKGROUND_DEPTH
        if self.noise.depth_rel_sigma > 0:
            rng = self._rng(_TAG_DEPTH_AT, frame_index,
                            int(u * 1000), int(v * 1000))
            best *= math.exp(self.noise.depth_rel_sigma * rng.normal())
        return best

    # -- false-negative objectness ----------------------------------------

    def objectness(self, frame_index: int) -> Heatmap:
        """Max-composed Gaussian splats over every visible GT object."""
        frame = self.seq.frame(frame_index)
        K = self.seq.intrinsics
        return splat_boxes([a.box2d for a in frame.annotations],
                           K.width, K.height, self.heatmap_stride)
