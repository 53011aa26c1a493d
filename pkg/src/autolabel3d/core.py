"""Shared domain types for the 3D track auto-labeling engine.

All types are immutable value objects: construction validates invariants and
instances are safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

TOWARDS = "towards"
AWAY = "away"
FORWARD = "forward"
BACKWARD = "backward"


class InvalidArgument(ValueError):
    """Raised when a value violates a documented precondition."""


class DecodeError(ValueError):
    """Raised when a serialized payload cannot be decoded."""


def _require_finite(name, *values):
    for v in values:
        if not math.isfinite(v):
            raise InvalidArgument(f"{name} must be finite, got {v!r}")


def normalize_yaw(theta: float) -> float:
    """Map an angle to the canonical range (-pi, pi], keeping pi (not -pi)."""
    if not math.isfinite(theta):
        raise InvalidArgument(f"yaw must be finite, got {theta!r}")
    r = theta % (2.0 * math.pi)
    if r > math.pi:
        r -= 2.0 * math.pi
    # float rounding in the modulo can land exactly on -pi
    if r <= -math.pi:
        r = math.pi
    return r


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        _require_finite("intrinsics", self.fx, self.fy, self.cx, self.cy)
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidArgument("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise InvalidArgument("principal point must lie inside the image")


@dataclass(frozen=True)
class Box2D:
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        _require_finite("box2d", self.cx, self.cy, self.w, self.h)
        if self.w <= 0 or self.h <= 0:
            raise InvalidArgument("box2d sides must be positive")

    @property
    def left(self):
        return self.cx - self.w / 2.0

    @property
    def right(self):
        return self.cx + self.w / 2.0

    @property
    def top(self):
        return self.cy - self.h / 2.0

    @property
    def bottom(self):
        return self.cy + self.h / 2.0

    @classmethod
    def from_corners(cls, left, top, right, bottom) -> "Box2D":
        return cls(cx=(left + right) / 2.0, cy=(top + bottom) / 2.0,
                   w=right - left, h=bottom - top)


def iou_2d(a: Box2D, b: Box2D) -> float:
    """Intersection over union of two axis-aligned boxes, in [0, 1]."""
    iw = min(a.right, b.right) - max(a.left, b.left)
    ih = min(a.bottom, b.bottom) - max(a.top, b.top)
    if iw <= 0 or ih <= 0:
        return 0.0
    # corner reconstruction can round the overlap above the box areas
    inter = min(iw * ih, a.w * a.h, b.w * b.h)
    union = a.w * a.h + b.w * b.h - inter
    return inter / union


def rle_encode(bitmap: np.ndarray) -> list[int]:
    """Row-major alternating (skip, run) counts; always starts with a skip."""
    flat = np.asarray(bitmap, dtype=bool).ravel()
    if flat.size == 0:
        return [0]
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    counts = np.diff(bounds).tolist()
    if flat[0]:
        counts.insert(0, 0)  # encoding starts by counting zeros
    return counts


def rle_decode(counts: list[int], shape: tuple[int, int]) -> np.ndarray:
    total = int(shape[0]) * int(shape[1])
    if any(c < 0 for c in counts):
        raise DecodeError("rle counts must be nonnegative")
    if sum(counts) != total:
        raise DecodeError(
            f"rle counts sum to {sum(counts)}, expected {total} for shape {shape}")
    flat = np.zeros(total, dtype=bool)
    pos = 0
    value = False
    for c in counts:
        if value:
            flat[pos:pos + c] = True
        pos += c
        value = not value
    return flat.reshape(shape)


@dataclass(frozen=True)
class Mask2D:
    """Binary mask stored as a bitmap anchored at an integer pixel origin."""

    origin: tuple[int, int]  # (x0, y0) pixel offset of bitmap[0, 0]
    bitmap: np.ndarray       # bool array of shape (h, w)

    def __post_init__(self):
        bm = np.asarray(self.bitmap, dtype=bool)
        if bm.ndim != 2:
            raise InvalidArgument("mask bitmap must be 2D")
        object.__setattr__(self, "bitmap", bm)
        bm.setflags(write=False)
        if self.origin[0] < 0 or self.origin[1] < 0:
            raise InvalidArgument("mask origin must be nonnegative")

    @property
    def rle(self) -> list[int]:
        return rle_encode(self.bitmap)

    @classmethod
    def from_rle(cls, origin, counts, shape) -> "Mask2D":
        return cls(origin=tuple(origin), bitmap=rle_decode(counts, shape))

    def __eq__(self, other):
        if not isinstance(other, Mask2D):
            return NotImplemented
        return (self.origin == other.origin
                and self.bitmap.shape == other.bitmap.shape
                and bool(np.array_equal(self.bitmap, other.bitmap)))

    def __hash__(self):
        return hash((self.origin, self.bitmap.shape, self.bitmap.tobytes()))


def mask_roundtrip(m: Mask2D) -> Mask2D:
    """RLE-encode then decode; result is pixel-identical to the input."""
    return Mask2D.from_rle(m.origin, m.rle, m.bitmap.shape)


@dataclass(frozen=True)
class Box3D:
    """3D box in the camera frame: x right, y down, z forward.

    yaw is the rotation about the camera y-axis in (-pi, pi], with yaw 0
    meaning heading along +x and heading vector (cos yaw, 0, -sin yaw).
    """

    center: tuple[float, float, float]
    dims: tuple[float, float, float]  # (length, width, height) meters
    yaw: float
    direction: str  # TOWARDS or AWAY

    def __post_init__(self):
        _require_finite("box3d.center", *self.center)
        _require_finite("box3d.dims", *self.dims)
        _require_finite("box3d.yaw", self.yaw)
        if any(d <= 0 for d in self.dims):
            raise InvalidArgument(f"box3d dims must be positive, got {self.dims}")
        if self.direction not in (TOWARDS, AWAY):
            raise InvalidArgument(f"unknown direction {self.direction!r}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "dims", tuple(float(d) for d in self.dims))
        object.__setattr__(self, "yaw", normalize_yaw(self.yaw))


@dataclass(frozen=True)
class Keypoints3D:
    """Front, center, and back points of a box, each (x, y, z) meters."""

    front: tuple[float, float, float]
    center: tuple[float, float, float]
    back: tuple[float, float, float]

    def __post_init__(self):
        for name, p in (("front", self.front), ("center", self.center),
                        ("back", self.back)):
            _require_finite(f"keypoints.{name}", *p)


@dataclass(frozen=True)
class Annotation:
    frame_index: int
    track_id: int
    box2d: Box2D
    box3d: Box3D
    occlusion_level: int  # KITTI convention, {0,1,2,3}
    mask: Optional[Mask2D] = None
    visibility: Optional[int] = None  # nuScenes convention, {1,2,3,4}

    def __post_init__(self):
        if self.occlusion_level not in (0, 1, 2, 3):
            raise InvalidArgument(
                f"occlusion_level must be in {{0,1,2,3}}, got {self.occlusion_level}")
        if self.visibility is not None and self.visibility not in (1, 2, 3, 4):
            raise InvalidArgument(
                f"visibility must be in {{1,2,3,4}}, got {self.visibility}")


@dataclass(frozen=True)
class Frame:
    frame_index: int
    ego_pose: np.ndarray  # 3x4 world->camera rigid transform [R | t]
    annotations: tuple[Annotation, ...]

    def __post_init__(self):
        pose = np.asarray(self.ego_pose, dtype=float)
        if pose.shape != (3, 4):
            raise InvalidArgument(f"ego pose must be 3x4, got {pose.shape}")
        object.__setattr__(self, "ego_pose", pose)
        pose.setflags(write=False)
        object.__setattr__(self, "annotations", tuple(self.annotations))

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return (self.frame_index == other.frame_index
                and bool(np.array_equal(self.ego_pose, other.ego_pose))
                and self.annotations == other.annotations)

    def __hash__(self):
        return hash((self.frame_index, self.ego_pose.tobytes(), self.annotations))


@dataclass(frozen=True)
class Sequence:
    id: str
    intrinsics: CameraIntrinsics
    frames: tuple[Frame, ...]
    frame_rate: float

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        indices = [f.frame_index for f in self.frames]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise InvalidArgument("frame_index must be strictly increasing")
        if self.frame_rate <= 0:
            raise InvalidArgument("frame_rate must be positive")

    def frame(self, frame_index: int) -> Frame:
        f = self.frame_map().get(frame_index)
        if f is None:
            raise KeyError(f"no frame {frame_index} in sequence {self.id!r}")
        return f

    def frame_map(self) -> dict[int, Frame]:
        cached = getattr(self, "_frame_map", None)
        if cached is None:
            cached = {f.frame_index: f for f in self.frames}
            object.__setattr__(self, "_frame_map", cached)
        return cached

    def annotation(self, frame_index: int, track_id: int) -> Optional[Annotation]:
        f = self.frame_map().get(frame_index)
        if f is None:
            return None
        for a in f.annotations:
            if a.track_id == track_id:
                return a
        return None

    def track_ids(self) -> list[int]:
        seen: dict[int, None] = {}
        for f in self.frames:
            for a in f.annotations:
                seen.setdefault(a.track_id, None)
        return list(seen)

    def track_frames(self, track_id: int) -> list[int]:
        return [f.frame_index for f in self.frames
                if any(a.track_id == track_id for a in f.annotations)]


@dataclass(frozen=True)
class Provenance:
    direction: str  # FORWARD or BACKWARD
    source_frame_index: int

    def __post_init__(self):
        if self.direction not in (FORWARD, BACKWARD):
            raise InvalidArgument(f"unknown direction {self.direction!r}")


@dataclass(frozen=True)
class Pseudolabel:
    frame_index: int
    track_id: int
    box2d: Box2D
    box3d: Box3D
    confidence: float
    provenance: Provenance
    mask: Optional[Mask2D] = None

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise InvalidArgument(
                f"confidence must be in [0,1], got {self.confidence}")


@dataclass(frozen=True)
class Heatmap:
    """Grid of values in [0, 1] at a stated stride relative to the image.

    Grid shape is (ceil(height/stride), ceil(width/stride)); the image is
    conceptually padded on the right/bottom to the next stride multiple.
    """

    values: np.ndarray
    stride: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise InvalidArgument("heatmap must be 2D")
        if v.size and (v.min() < 0.0 or v.max() > 1.0):
            raise InvalidArgument("heatmap values must lie in [0,1]")
        if self.stride < 1:
            raise InvalidArgument("stride must be >= 1")
        object.__setattr__(self, "values", v)
        v.setflags(write=False)

    def __eq__(self, other):
        if not isinstance(other, Heatmap):
            return NotImplemented
        return (self.stride == other.stride
                and self.values.shape == other.values.shape
                and bool(np.array_equal(self.values, other.values)))

    def __hash__(self):
        return hash((self.stride, self.values.shape, self.values.tobytes()))
