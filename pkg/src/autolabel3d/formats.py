"""KITTI label/calib parsing and the canonical internal text formats.

Internal documents are line-delimited whitespace-separated text with a
versioned header line, so golden files diff cleanly and round-trip
bit-exactly. Floats are written with 17 significant digits (lossless for
doubles).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (Annotation, Box2D, Box3D, CameraIntrinsics, Frame,
                   Heatmap, InvalidArgument, Mask2D, Provenance, Pseudolabel,
                   Sequence, normalize_yaw)

SCHEMA_VERSION = 1
DEFAULT_VEHICLE_CATEGORIES = frozenset({"Car", "Van"})


class ParseError(ValueError):
    """Raised on malformed input text; message names the offending line."""


class SchemaVersionError(ParseError):
    """Raised when a document declares an unsupported schema version."""


def fmt_float(x: float) -> str:
    return format(float(x), ".17g")


def _floats(*xs) -> str:
    return " ".join(fmt_float(x) for x in xs)


# ---------------------------------------------------------------------------
# KITTI tracking labels

@dataclass(frozen=True)
class KittiLabelRow:
    frame: int
    track_id: int
    type: str
    truncated: float
    occluded: int
    alpha: float
    bbox: tuple[float, float, float, float]  # left, top, right, bottom
    dims: tuple[float, float, float]         # h, w, l (KITTI order)
    location: tuple[float, float, float]     # x, y, z (bottom center)
    rotation_y: float
    score: Optional[float] = None

    def __post_init__(self):
        left, top, right, bottom = self.bbox
        if self.type != "DontCare" and (right <= left or bottom <= top):
            raise InvalidArgument(
                f"degenerate bbox {self.bbox} for type {self.type!r}")


_KITTI_FIELDS = ("frame", "track_id", "type", "truncated", "occluded", "alpha",
                 "bbox_left", "bbox_top", "bbox_right", "bbox_bottom",
                 "dim_h", "dim_w", "dim_l", "loc_x", "loc_y", "loc_z",
                 "rotation_y", "score")


def parse_kitti_labels(text: str) -> list[KittiLabelRow]:
    """Parse a KITTI tracking label file (17 or 18 tokens per line)."""
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) not in (17, 18):
            raise ParseError(
                f"line {lineno}: expected 17 or 18 tokens, got {len(tokens)}")

        def num(idx, cast=float):
            try:
                return cast(tokens[idx])
            except ValueError:
                raise ParseError(
                    f"line {lineno}: non-numeric value {tokens[idx]!r} "
                    f"for field {_KITTI_FIELDS[idx]!r}") from None

        rows.append(KittiLabelRow(
            frame=num(0, int),
            track_id=num(1, int),
            type=tokens[2],
            truncated=num(3),
            occluded=num(4, lambda s: int(float(s))),
            alpha=num(5),
            bbox=(num(6), num(7), num(8), num(9)),
            dims=(num(10), num(11), num(12)),
            location=(num(13), num(14), num(15)),
            rotation_y=num(16),
            score=num(17) if len(tokens) == 18 else None,
        ))
    return rows


def serialize_kitti_labels(rows: list[KittiLabelRow]) -> str:
    lines = []
    for r in rows:
        parts = [str(r.frame), str(r.track_id), r.type, fmt_float(r.truncated),
                 str(r.occluded), fmt_float(r.alpha),
                 _floats(*r.bbox), _floats(*r.dims), _floats(*r.location),
                 fmt_float(r.rotation_y)]
        if r.score is not None:
            parts.append(fmt_float(r.score))
        lines.append(" ".join(parts))
    return "\n".join(lines) + ("\n" if lines else "")


@dataclass(frozen=True)
class CalibResult:
    intrinsics: CameraIntrinsics
    translation_ignored: bool  # fourth projection column was nonzero


def parse_kitti_calib(text: str, width: int = 1242, height: int = 375) -> CalibResult:
    """Extract pinhole intrinsics from the P2 projection matrix."""
    for line in text.splitlines():
        if not line.strip().startswith("P2:"):
            continue
        values = line.split(":", 1)[1].split()
        if len(values) != 12:
            raise ParseError(f"P2 line must carry 12 values, got {len(values)}")
        try:
            p = np.array([float(v) for v in values]).reshape(3, 4)
        except ValueError:
            raise ParseError("non-numeric value in P2 line") from None
        intr = CameraIntrinsics(fx=p[0, 0], fy=p[1, 1], cx=p[0, 2], cy=p[1, 2],
                                width=width, height=height)
        return CalibResult(intr, translation_ignored=bool(np.any(p[:, 3] != 0)))
    raise ParseError("calibration file has no P2 line")


@dataclass
class ConversionStats:
    dropped_dontcare: int = 0
    dropped_category: int = 0
    kept: int = 0


def kitti_rows_to_sequence(rows, intrinsics: CameraIntrinsics, seq_id: str = "kitti",
                           frame_rate: float = 10.0,
                           vehicle_categories=DEFAULT_VEHICLE_CATEGORIES,
                           ) -> tuple[Sequence, ConversionStats]:
    """Build a Sequence from KITTI rows.

    KITTI locations are bottom-center; Box3D uses the geometric center, so y
    is shifted up by h/2 (camera y points down). KITTI dims come as (h, w, l)
    and are reordered to (l, w, h).
    """
    from .geometry import direction_of

    stats = ConversionStats()
    per_frame: dict[int, list[Annotation]] = {}
    seen: set[tuple[int, int]] = set()
    for r in rows:
        if r.type == "DontCare":
            stats.dropped_dontcare += 1
            continue
        if r.type not in vehicle_categories:
            stats.dropped_category += 1
            continue
        key = (r.frame, r.track_id)
        if key in seen:
            raise InvalidArgument(f"duplicate (frame, track_id) {key}")
        seen.add(key)
        h, w, l = r.dims
        x, y, z = r.location
        yaw = normalize_yaw(r.rotation_y)
        box3d = Box3D(center=(x, y - h / 2.0, z), dims=(l, w, h), yaw=yaw,
                      direction="towards")
        box3d = Box3D(center=box3d.center, dims=box3d.dims, yaw=box3d.yaw,
                      direction=direction_of(box3d))
        ann = Annotation(
            frame_index=r.frame,
            track_id=r.track_id,
            box2d=Box2D.from_corners(*r.bbox),
            box3d=box3d,
            occlusion_level=r.occluded,
        )
        per_frame.setdefault(r.frame, []).append(ann)
        stats.kept += 1

    eye = np.hstack([np.eye(3), np.zeros((3, 1))])
    frames = tuple(Frame(frame_index=i, ego_pose=eye,
                         annotations=tuple(per_frame[i]))
                   for i in sorted(per_frame))
    return Sequence(id=seq_id, intrinsics=intrinsics, frames=frames,
                    frame_rate=frame_rate), stats


# ---------------------------------------------------------------------------
# Internal documents

def _header(kind: str) -> str:
    return f"# autolabel3d {kind} v{SCHEMA_VERSION}"


def _check_header(text: str, kind: str) -> list[str]:
    lines = text.splitlines()
    if not lines:
        raise ParseError(f"empty document, expected a {kind} header")
    parts = lines[0].split()
    if len(parts) != 4 or parts[:2] != ["#", "autolabel3d"]:
        raise ParseError(f"line 1: malformed header {lines[0]!r}")
    if parts[2] != kind:
        raise ParseError(f"line 1: expected kind {kind!r}, got {parts[2]!r}")
    if parts[3] != f"v{SCHEMA_VERSION}":
        raise SchemaVersionError(
            f"unsupported {kind} schema {parts[3]}; supported: v{SCHEMA_VERSION}")
    return lines[1:]


def _mask_line(tag: str, track_id: int, m: Mask2D) -> str:
    rows, cols = m.bitmap.shape
    counts = " ".join(str(c) for c in m.rle)
    return f"{tag} {track_id} {m.origin[0]} {m.origin[1]} {rows} {cols} {counts}"


def _parse_mask_line(tokens: list[str]) -> tuple[int, Mask2D]:
    track_id = int(tokens[0])
    x0, y0, rows, cols = (int(t) for t in tokens[1:5])
    counts = [int(t) for t in tokens[5:]]
    return track_id, Mask2D.from_rle((x0, y0), counts, (rows, cols))


def serialize_sequence(seq: Sequence) -> str:
    out = [_header("sequence")]
    out.append(f"sequence {seq.id} {fmt_float(seq.frame_rate)}")
    K = seq.intrinsics
    out.append(f"intrinsics {_floats(K.fx, K.fy, K.cx, K.cy)} {K.width} {K.height}")
    for f in seq.frames:
        out.append(f"frame {f.frame_index} {_floats(*f.ego_pose.ravel())}")
        for a in f.annotations:
            vis = str(a.visibility) if a.visibility is not None else "-"
            out.append(
                f"ann {a.track_id} "
                f"{_floats(a.box2d.cx, a.box2d.cy, a.box2d.w, a.box2d.h)} "
                f"{_floats(*a.box3d.center)} {_floats(*a.box3d.dims)} "
                f"{fmt_float(a.box3d.yaw)} {a.box3d.direction} "
                f"{a.occlusion_level} {vis}")
            if a.mask is not None:
                out.append(_mask_line("mask", a.track_id, a.mask))
    return "\n".join(out) + "\n"


def parse_sequence(text: str) -> Sequence:
    lines = _check_header(text, "sequence")
    seq_id = None
    frame_rate = None
    intrinsics = None
    frames: list[Frame] = []
    cur_index = None
    cur_pose = None
    cur_anns: list[Annotation] = []

    def flush():
        if cur_index is not None:
            frames.append(Frame(frame_index=cur_index, ego_pose=cur_pose,
                                annotations=tuple(cur_anns)))

    for lineno, line in enumerate(lines, start=2):
        tokens = line.split()
        if not tokens:
            continue
        tag, rest = tokens[0], tokens[1:]
        try:
            if tag == "sequence":
                seq_id, frame_rate = rest[0], float(rest[1])
            elif tag == "intrinsics":
                intrinsics = CameraIntrinsics(
                    fx=float(rest[0]), fy=float(rest[1]),
                    cx=float(rest[2]), cy=float(rest[3]),
                    width=int(rest[4]), height=int(rest[5]))
            elif tag == "frame":
                flush()
                cur_index = int(rest[0])
                cur_pose = np.array([float(v) for v in rest[1:13]]).reshape(3, 4)
                cur_anns = []
            elif tag == "ann":
                vis = None if rest[14] == "-" else int(rest[14])
                cur_anns.append(Annotation(
                    frame_index=cur_index,
                    track_id=int(rest[0]),
                    box2d=Box2D(*(float(v) for v in rest[1:5])),
                    box3d=Box3D(center=tuple(float(v) for v in rest[5:8]),
                                dims=tuple(float(v) for v in rest[8:11]),
                                yaw=float(rest[11]), direction=rest[12]),
                    occlusion_level=int(rest[13]),
                    visibility=vis))
            elif tag == "mask":
                track_id, mask = _parse_mask_line(rest)
                last = cur_anns[-1]
                if last.track_id != track_id:
                    raise ParseError(f"line {lineno}: mask track mismatch")
                cur_anns[-1] = Annotation(
                    frame_index=last.frame_index, track_id=last.track_id,
                    box2d=last.box2d, box3d=last.box3d,
                    occlusion_level=last.occlusion_level, mask=mask,
                    visibility=last.visibility)
            else:
                raise ParseError(f"line {lineno}: unknown record {tag!r}")
        except (IndexError, ValueError) as e:
            if isinstance(e, ParseError):
                raise
            raise ParseError(f"line {lineno}: malformed {tag!r} record: {e}") from None
    flush()
    if seq_id is None or intrinsics is None:
        raise ParseError("sequence document missing header records")
    return Sequence(id=seq_id, intrinsics=intrinsics, frames=tuple(frames),
                    frame_rate=frame_rate)


def serialize_sparse_labels(sparse) -> str:
    out = [_header("sparselabels")]
    out.append(f"sequence {sparse.sequence_id}")
    out.append(f"max_per_track {sparse.max_per_track}")
    out.append(f"seed {sparse.seed}")
    out.append(f"reduction_ratio {fmt_float(sparse.reduction_ratio)}")
    for tid in sorted(sparse.selected):
        idx = " ".join(str(i) for i in sparse.selected[tid])
        out.append(f"track {tid} {idx}")
    for tid, reason in sparse.omitted:
        out.append(f"omitted {tid} {reason}")
    return "\n".join(out) + "\n"


def parse_sparse_labels(text: str):
    from .sampling import SparseLabelSet

    lines = _check_header(text, "sparselabels")
    seq_id = None
    max_per_track = None
    seed = None
    ratio = None
    selected: dict[int, tuple[int, ...]] = {}
    omitted: list[tuple[int, str]] = []
    for lineno, line in enumerate(lines, start=2):
        tokens = line.split()
        if not tokens:
            continue
        tag, rest = tokens[0], tokens[1:]
        if tag == "sequence":
            seq_id = rest[0]
        elif tag == "max_per_track":
            max_per_track = int(rest[0])
        elif tag == "seed":
            seed = int(rest[0])
        elif tag == "reduction_ratio":
            ratio = float(rest[0])
        elif tag == "track":
            selected[int(rest[0])] = tuple(int(v) for v in rest[1:])
        elif tag == "omitted":
            omitted.append((int(rest[0]), rest[1]))
        else:
            raise ParseError(f"line {lineno}: unknown record {tag!r}")
    return SparseLabelSet(sequence_id=seq_id, selected=selected,
                          omitted=tuple(omitted), max_per_track=max_per_track,
                          seed=seed, reduction_ratio=ratio)


def serialize_mining_pairs(pairs) -> str:
    out = [_header("miningpairs")]
    for p in pairs:
        wp = str(p.waypoint_frame) if p.waypoint_frame is not None else "-"
        out.append(f"pair {p.track_id} {p.strategy} {p.source_frame} {wp} "
                   f"{p.target_frame}")
    return "\n".join(out) + "\n"


def parse_mining_pairs(text: str):
    from .sampling import MiningPair

    lines = _check_header(text, "miningpairs")
    pairs = []
    for lineno, line in enumerate(lines, start=2):
        tokens = line.split()
        if not tokens:
            continue
        if tokens[0] != "pair" or len(tokens) != 6:
            raise ParseError(f"line {lineno}: malformed pair record")
        wp = None if tokens[4] == "-" else int(tokens[4])
        pairs.append(MiningPair(track_id=int(tokens[1]), strategy=tokens[2],
                                source_frame=int(tokens[3]), waypoint_frame=wp,
                                target_frame=int(tokens[5])))
    return pairs


def serialize_pseudolabels(labels) -> str:
    out = [_header("pseudolabels")]
    for p in labels:
        out.append(
            f"pl {p.frame_index} {p.track_id} "
            f"{_floats(p.box2d.cx, p.box2d.cy, p.box2d.w, p.box2d.h)} "
            f"{_floats(*p.box3d.center)} {_floats(*p.box3d.dims)} "
            f"{fmt_float(p.box3d.yaw)} {p.box3d.direction} "
            f"{fmt_float(p.confidence)} {p.provenance.direction} "
            f"{p.provenance.source_frame_index}")
        if p.mask is not None:
            out.append(_mask_line("plmask", p.track_id, p.mask))
    return "\n".join(out) + "\n"


def parse_pseudolabels(text: str) -> list[Pseudolabel]:
    lines = _check_header(text, "pseudolabels")
    labels: list[Pseudolabel] = []
    for lineno, line in enumerate(lines, start=2):
        tokens = line.split()
        if not tokens:
            continue
        tag, rest = tokens[0], tokens[1:]
        if tag == "pl":
            try:
                labels.append(Pseudolabel(
                    frame_index=int(rest[0]), track_id=int(rest[1]),
                    box2d=Box2D(*(float(v) for v in rest[2:6])),
                    box3d=Box3D(center=tuple(float(v) for v in rest[6:9]),
                                dims=tuple(float(v) for v in rest[9:12]),
                                yaw=float(rest[12]), direction=rest[13]),
                    confidence=float(rest[14]),
                    provenance=Provenance(direction=rest[15],
                                          source_frame_index=int(rest[16]))))
            except (IndexError, ValueError) as e:
                raise ParseError(f"line {lineno}: malformed pl record: {e}") from None
        elif tag == "plmask":
            track_id, mask = _parse_mask_line(rest)
            last = labels[-1]
            if last.track_id != track_id:
                raise ParseError(f"line {lineno}: mask track mismatch")
            labels[-1] = Pseudolabel(
                frame_index=last.frame_index, track_id=last.track_id,
                box2d=last.box2d, box3d=last.box3d, confidence=last.confidence,
                provenance=last.provenance, mask=mask)
        else:
            raise ParseError(f"line {lineno}: unknown record {tag!r}")
    return labels


def serialize_weight_maps(weights: dict[int, Heatmap]) -> str:
    out = [_header("weightmaps")]
    for frame_index in sorted(weights):
        h = weights[frame_index]
        rows, cols = h.values.shape
        out.append(f"frame {frame_index} {rows} {cols} {h.stride}")
        for row in h.values:
            out.append(_floats(*row))
    return "\n".join(out) + "\n"


def parse_weight_maps(text: str) -> dict[int, Heatmap]:
    lines = _check_header(text, "weightmaps")
    weights: dict[int, Heatmap] = {}
    i = 0
    while i < len(lines):
        tokens = lines[i].split()
        i += 1
        if not tokens:
            continue
        if tokens[0] != "frame":
            raise ParseError(f"unexpected record {tokens[0]!r} in weight maps")
        frame_index, rows, cols, stride = (int(t) for t in tokens[1:5])
        grid = np.empty((rows, cols))
        for r in range(rows):
            grid[r] = [float(v) for v in lines[i].split()]
            i += 1
        weights[frame_index] = Heatmap(values=grid, stride=stride)
    return weights


def serialize_metric_report(report) -> str:
    out = [_header("metricreport")]
    out.append(f"mota {fmt_float(report.mota)}")
    out.append(f"motp {fmt_float(report.motp)}")
    out.append(f"idf1 {fmt_float(report.idf1)}")
    out.append(f"amota {fmt_float(report.amota)}")
    out.append(f"amotp {fmt_float(report.amotp)}")
    c = report.counts
    out.append(f"counts {c.tp} {c.fp} {c.fn} {c.idsw} {c.gt_total}")
    out.append(f"config {fmt_float(report.dist_threshold)} "
               + " ".join(fmt_float(r) for r in report.recall_grid))
    for row in report.per_recall:
        motp = fmt_float(row.motp) if row.motp is not None else "-"
        out.append(f"recall {fmt_float(row.recall)} {fmt_float(row.motar)} {motp} "
                   f"{row.tp} {row.fp} {row.fn} {row.idsw} "
                   f"{1 if row.achievable else 0}")
    return "\n".join(out) + "\n"


def parse_metric_report(text: str):
    from .metrics import Counts, MetricReport, RecallPoint

    lines = _check_header(text, "metricreport")
    fields: dict = {}
    per_recall: list = []
    for line in lines:
        tokens = line.split()
        if not tokens:
            continue
        tag, rest = tokens[0], tokens[1:]
        if tag in ("mota", "motp", "idf1", "amota", "amotp"):
            fields[tag] = float(rest[0])
        elif tag == "counts":
            fields["counts"] = Counts(*(int(v) for v in rest))
        elif tag == "config":
            fields["dist_threshold"] = float(rest[0])
            fields["recall_grid"] = tuple(float(v) for v in rest[1:])
        elif tag == "recall":
            per_recall.append(RecallPoint(
                recall=float(rest[0]), motar=float(rest[1]),
                motp=None if rest[2] == "-" else float(rest[2]),
                tp=int(rest[3]), fp=int(rest[4]), fn=int(rest[5]),
                idsw=int(rest[6]), achievable=rest[7] == "1"))
        else:
            raise ParseError(f"unknown record {tag!r} in metric report")
    return MetricReport(per_recall=tuple(per_recall), **fields)
