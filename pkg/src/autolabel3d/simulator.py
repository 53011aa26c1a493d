"""Deterministic synthetic driving-world generator.

Produces camera sequences with full 3D ground truth (tracks, projected 2D
boxes, coarse masks, occlusion levels) so the propagation pipeline and the
metrics can be verified end to end at desk scale.

World frame: X right, Y down (gravity), Z forward, with the camera at
Y = 0 and the ground plane at Y = camera_height. Planar headings are given
by an angle phi with direction vector (sin phi, 0, cos phi), so phi = 0
means driving along +Z.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (Annotation, Box2D, Box3D, CameraIntrinsics, Frame,
                   InvalidArgument, Mask2D, Sequence)
from .geometry import project

DEFAULT_INTRINSICS = dict(fx=721.54, fy=721.54, cx=609.56, cy=172.85,
                          width=1242, height=375)

MOTION_CV = "constant-velocity"
MOTION_CTRV = "constant-turn-rate-velocity"


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    duration: int = 60                 # frames
    frame_rate: float = 10.0
    ego_motion: str = "straight"       # "straight" | "arc"
    ego_arc_radius: float = 200.0      # meters; used when ego_motion == "arc"
    ego_speed: float = 8.0             # m/s
    object_count: int = 6
    layout: str = "random"             # "random" | "grid" (static convoy)
    motion_model: str = "mixed"        # "mixed" | MOTION_CV | MOTION_CTRV
    object_speed: tuple[float, float] = (4.0, 12.0)
    turn_rate: tuple[float, float] = (-0.15, 0.15)  # rad/s, CTRV objects
    length_range: tuple[float, float] = (3.5, 5.5)
    width_range: tuple[float, float] = (1.6, 2.0)
    height_range: tuple[float, float] = (1.4, 1.8)
    spawn_x: tuple[float, float] = (-8.0, 8.0)
    spawn_z: tuple[float, float] = (8.0, 45.0)
    camera_height: float = 1.65
    intrinsics: dict = field(default_factory=lambda: dict(DEFAULT_INTRINSICS))
    with_masks: bool = True
    min_depth: float = 0.5
    sequence_id: str = "sim"

    def __post_init__(self):
        if self.duration < 2:
            raise InvalidArgument("duration must be >= 2 frames")
        if self.ego_speed < 0 or self.object_speed[0] < 0:
            raise InvalidArgument("speeds must be >= 0")
        for lo, hi in (self.object_speed, self.length_range, self.width_range,
                       self.height_range, self.spawn_x, self.spawn_z):
            if hi < lo:
                raise InvalidArgument(f"empty range ({lo}, {hi})")
        if self.ego_motion not in ("straight", "arc"):
            raise InvalidArgument(f"unknown ego motion {self.ego_motion!r}")
        if self.layout not in ("random", "grid"):
            raise InvalidArgument(f"unknown layout {self.layout!r}")
        if self.motion_model not in ("mixed", MOTION_CV, MOTION_CTRV):
            raise InvalidArgument(f"unknown motion model {self.motion_model!r}")


@dataclass
class _ObjectState:
    track_id: int
    x: float
    z: float
    phi: float        # world heading angle
    speed: float
    omega: float      # turn rate (0 for CV)
    dims: tuple[float, float, float]  # (l, w, h)


def _convex_hull(points: np.ndarray) -> np.ndarray:
    """Monotone-chain hull of 2D points, counterclockwise."""
    pts = np.unique(points, axis=0)
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def _hull_mask(corners_uv: np.ndarray, left: int, top: int,
               w: int, h: int) -> Optional[Mask2D]:
    hull = _convex_hull(corners_uv)
    if len(hull) < 3:
        return None
    us = left + 0.5 + np.arange(w)
    vs = top + 0.5 + np.arange(h)
    uu, vv = np.meshgrid(us, vs)
    inside = np.ones((h, w), dtype=bool)
    n = len(hull)
    for i in range(n):
        ax, ay = hull[i]
        bx, by = hull[(i + 1) % n]
        inside &= (bx - ax) * (vv - ay) - (by - ay) * (uu - ax) >= 0
    if not inside.any():
        return None
    return Mask2D(origin=(left, top), bitmap=inside)


def _spawn_objects(cfg: SimConfig, rng: np.random.Generator) -> list[_ObjectState]:
    objects = []
    for i in range(cfg.object_count):
        dims = (float(rng.uniform(*cfg.length_range)),
                float(rng.uniform(*cfg.width_range)),
                float(rng.uniform(*cfg.height_range)))
        if cfg.layout == "grid":
            # diagonal formation moving with the ego: unique lateral offset
            # per object, so everything stays in view and unoccluded
            f = i / max(cfg.object_count - 1, 1)
            x = cfg.spawn_x[0] + f * (cfg.spawn_x[1] - cfg.spawn_x[0])
            z = cfg.spawn_z[0] + f * (cfg.spawn_z[1] - cfg.spawn_z[0])
            objects.append(_ObjectState(i, x, z, phi=0.0, speed=cfg.ego_speed,
                                        omega=0.0, dims=dims))
            continue
        x = float(rng.uniform(*cfg.spawn_x))
        z = float(rng.uniform(*cfg.spawn_z))
        phi = float(rng.uniform(-0.25, 0.25))  # roughly along the road
        if rng.random() < 0.3:
            phi += math.pi  # oncoming traffic
        speed = float(rng.uniform(*cfg.object_speed))
        if cfg.motion_model == MOTION_CV:
            ctrv = False
        elif cfg.motion_model == MOTION_CTRV:
            ctrv = True
        else:
            ctrv = bool(rng.random() < 0.5)
        omega = float(rng.uniform(*cfg.turn_rate)) if ctrv else 0.0
        objects.append(_ObjectState(i, x, z, phi, speed, omega, dims))
    return objects


def simulate(cfg: SimConfig) -> Sequence:
    rng = np.random.default_rng(cfg.seed)
    K = CameraIntrinsics(**cfg.intrinsics)
    dt = 1.0 / cfg.frame_rate
    objects = _spawn_objects(cfg, rng)

    ego_x, ego_z, ego_phi = 0.0, 0.0, 0.0
    ego_omega = (cfg.ego_speed / cfg.ego_arc_radius
                 if cfg.ego_motion == "arc" else 0.0)

    frames = []
    for t in range(cfg.duration):
        cos_e, sin_e = math.cos(ego_phi), math.sin(ego_phi)
        # camera axes in world coordinates
        x_axis = np.array([cos_e, 0.0, -sin_e])
        y_axis = np.array([0.0, 1.0, 0.0])
        z_axis = np.array([sin_e, 0.0, cos_e])
        rot = np.stack([x_axis, y_axis, z_axis])  # world->camera rotation
        ego_t = np.array([ego_x, 0.0, ego_z])
        pose = np.hstack([rot, (-rot @ ego_t).reshape(3, 1)])

        anns: list[Annotation] = []
        for obj in objects:
            l, w, h = obj.dims
            center_w = np.array([obj.x, cfg.camera_height - h / 2.0, obj.z])
            center_c = rot @ (center_w - ego_t)
            if center_c[2] <= cfg.min_depth:
                continue
            head_w = np.array([math.sin(obj.phi), 0.0, math.cos(obj.phi)])
            hc = rot @ head_w
            yaw = math.atan2(-hc[2], hc[0])
            heading = np.array([math.cos(yaw), 0.0, -math.sin(yaw)])
            lateral = np.array([math.sin(yaw), 0.0, math.cos(yaw)])
            up = np.array([0.0, 1.0, 0.0])
            corners = np.array([
                center_c + sx * (l / 2) * heading + sy * (w / 2) * lateral
                + sz * (h / 2) * up
                for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)])
            if corners[:, 2].min() <= 0.1:
                continue
            uv = np.array([project(c, K) for c in corners])
            left = max(uv[:, 0].min(), 0.0)
            right = min(uv[:, 0].max(), float(K.width))
            top = max(uv[:, 1].min(), 0.0)
            bottom = min(uv[:, 1].max(), float(K.height))
            if right - left <= 1.0 or bottom - top <= 1.0:
                continue
            box2d = Box2D.from_corners(left, top, right, bottom)

            box3d = Box3D(center=tuple(center_c), dims=(l, w, h), yaw=yaw,
                          direction="towards")
            from .geometry import direction_of
            box3d = Box3D(center=box3d.center, dims=box3d.dims, yaw=box3d.yaw,
                          direction=direction_of(box3d))

            mask = None
            if cfg.with_masks:
                il, it = int(math.floor(left)), int(math.floor(top))
                iw = max(int(math.ceil(right)) - il, 1)
                ih = max(int(math.ceil(bottom)) - it, 1)
                mask = _hull_mask(uv, il, it, iw, ih)
            anns.append(Annotation(frame_index=t, track_id=obj.track_id,
                                   box2d=box2d, box3d=box3d,
                                   occlusion_level=0, mask=mask))

        # occlusion needs every annotation in the frame
        final = []
        for a in anns:
            frac = _occlusion_fraction(a, anns)
            final.append(Annotation(
                frame_index=a.frame_index, track_id=a.track_id, box2d=a.box2d,
                box3d=a.box3d, occlusion_level=occlusion_level(frac),
                mask=a.mask, visibility=visibility_from_fraction(frac)))
        frames.append(Frame(frame_index=t, ego_pose=pose,
                            annotations=tuple(final)))

        # step kinematics
        ego_x += cfg.ego_speed * math.sin(ego_phi) * dt
        ego_z += cfg.ego_speed * math.cos(ego_phi) * dt
        ego_phi += ego_omega * dt
        for obj in objects:
            obj.x += obj.speed * math.sin(obj.phi) * dt
            obj.z += obj.speed * math.cos(obj.phi) * dt
            obj.phi += obj.omega * dt

    return Sequence(id=cfg.sequence_id, intrinsics=K, frames=tuple(frames),
                    frame_rate=cfg.frame_rate)


def _rect_union_area(rects: list[tuple[float, float, float, float]]) -> float:
    """Exact union area of axis-aligned rectangles via coordinate compression."""
    if not rects:
        return 0.0
    xs = sorted({r[0] for r in rects} | {r[2] for r in rects})
    ys = sorted({r[1] for r in rects} | {r[3] for r in rects})
    area = 0.0
    for i in range(len(xs) - 1):
        cx = (xs[i] + xs[i + 1]) / 2.0
        for j in range(len(ys) - 1):
            cy = (ys[j] + ys[j + 1]) / 2.0
            if any(r[0] <= cx <= r[2] and r[1] <= cy <= r[3] for r in rects):
                area += (xs[i + 1] - xs[i]) * (ys[j + 1] - ys[j])
    return area


def _occlusion_fraction(target: Annotation, anns: list[Annotation]) -> float:
    tb = target.box2d
    covers = []
    for other in anns:
        if other.track_id == target.track_id:
            continue
        if other.box3d.center[2] >= target.box3d.center[2]:
            continue
        ob = other.box2d
        left = max(tb.left, ob.left)
        top = max(tb.top, ob.top)
        right = min(tb.right, ob.right)
        bottom = min(tb.bottom, ob.bottom)
        if right > left and bottom > top:
            covers.append((left, top, right, bottom))
    if not covers:
        return 0.0
    return min(_rect_union_area(covers) / (tb.w * tb.h), 1.0)


def occlusion_fraction(frame: Frame, track_id: int) -> float:
    """Fraction of the object's 2D box covered by strictly nearer objects."""
    for a in frame.annotations:
        if a.track_id == track_id:
            return _occlusion_fraction(a, list(frame.annotations))
    raise KeyError(f"track {track_id} not annotated in frame {frame.frame_index}")


def occlusion_level(fraction: float) -> int:
    if fraction < 0.1:
        return 0
    if fraction < 0.5:
        return 1
    return 2


def visibility_from_fraction(fraction: float) -> int:
    # simulator convention for nuScenes-style visibility buckets
    if fraction < 0.2:
        return 4
    if fraction < 0.4:
        return 3
    if fraction < 0.6:
        return 2
    return 1
