"""MOT text rows, the JDEB embedding sidecar and key=value config files.

MOT rows are ``frame,id,bb_left,bb_top,bb_width,bb_height,conf,x,y,z``.
Numbers are written in their shortest round-tripping form with a trailing
``.0`` dropped, so ``12.5`` stays ``12.5`` and ``912.0`` becomes ``912``.

JDEB layout (little-endian)::

    4 bytes   magic b"JDEB"
    u32       version (1)
    u64       count
    u32       dim
    count*dim float32, row-major, same row order as the detection file
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import FormatError
from .geometry import Box
from .sequence import SequenceResult
from .tracker import Detection

MAGIC = b"JDEB"
VERSION = 1
_HEADER = struct.Struct("<4sIQI")
UNIT_NORM_TOL = 1e-4


@dataclass(frozen=True)
class MotRow:
    frame: int
    id: int
    bb_left: float
    bb_top: float
    bb_width: float
    bb_height: float
    conf: float = 1.0
    x: float = -1.0
    y: float = -1.0
    z: float = -1.0

    @property
    def box(self) -> Box:
        return Box(self.bb_left, self.bb_top, self.bb_width, self.bb_height)


def format_number(v: float) -> str:
    v = float(v)
    if v.is_integer():
        return str(int(v))
    return repr(v)


def format_row(row: MotRow) -> str:
    return ",".join(
        [str(row.frame), str(row.id)]
        + [format_number(v) for v in (row.bb_left, row.bb_top, row.bb_width, row.bb_height, row.conf, row.x, row.y, row.z)]
    )


def parse_row(line: str, lineno: int | None = None) -> MotRow:
    parts = [p.strip() for p in line.strip().split(",")]
    if len(parts) != 10:
        raise FormatError(f"expected 10 comma-separated fields, got {len(parts)}", lineno)
    try:
        frame, tid = int(parts[0]), int(parts[1])
        vals = [float(p) for p in parts[2:]]
    except ValueError as exc:
        raise FormatError(f"unparsable number ({exc})", lineno) from None
    if frame < 1:
        raise FormatError(f"frame must be >= 1, got {frame}", lineno)
    if vals[2] <= 0 or vals[3] <= 0:
        raise FormatError("box width and height must be positive", lineno)
    return MotRow(frame, tid, *vals)


def parse_mot(text: str) -> list[MotRow]:
    rows = []
    prev_frame = 0
    for k, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        row = parse_row(line, k)
        if row.frame < prev_frame:
            raise FormatError(f"frame {row.frame} after frame {prev_frame}; frames must be grouped ascending", k)
        prev_frame = row.frame
        rows.append(row)
    return rows


def serialize_mot(rows: Iterable[MotRow]) -> str:
    return "".join(format_row(r) + "\n" for r in rows)


def read_mot(path) -> list[MotRow]:
    return parse_mot(Path(path).read_text())


def write_mot(path, rows: Iterable[MotRow]) -> None:
    Path(path).write_text(serialize_mot(rows))


def rows_to_sequence(rows: Sequence[MotRow]) -> SequenceResult:
    return SequenceResult((r.frame, r.id, r.box) for r in rows)


def sequence_to_rows(seq: SequenceResult) -> list[MotRow]:
    return [MotRow(f, i, b.x, b.y, b.w, b.h) for f, i, b in seq]


def detections_to_rows(frames: Sequence[Sequence[Detection]], frame_indices=None) -> list[MotRow]:
    if frame_indices is None:
        frame_indices = range(1, len(frames) + 1)
    return [
        MotRow(f, -1, d.box.x, d.box.y, d.box.w, d.box.h, d.confidence)
        for f, dets in zip(frame_indices, frames)
        for d in dets
    ]


def rows_to_detections(rows: Sequence[MotRow], embeddings: np.ndarray | None = None):
    """Group detection rows into per-frame lists.

    Returns ``(frame_indices, frames)`` covering every frame from 1 to the
    last frame present, so empty frames still advance the tracker.
    """
    if embeddings is not None and len(embeddings) != len(rows):
        raise FormatError(f"{len(rows)} detection rows but {len(embeddings)} embeddings")
    last = max((r.frame for r in rows), default=0)
    frames: list[list[Detection]] = [[] for _ in range(last)]
    for k, r in enumerate(rows):
        emb = None if embeddings is None else embeddings[k]
        frames[r.frame - 1].append(Detection(r.box, min(max(r.conf, 0.0), 1.0), emb))
    return list(range(1, last + 1)), frames


def write_embeddings(path, embeddings) -> None:
    emb = np.ascontiguousarray(np.asarray(embeddings, dtype="<f4"))
    if emb.ndim != 2:
        raise FormatError("embeddings must be a 2-D array")
    count, dim = emb.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, count, dim))
        fh.write(emb.tobytes())


def read_embeddings(path, expected_count: int | None = None) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError("embedding file shorter than its header")
    magic, version, count, dim = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported embedding file version {version}")
    if dim == 0:
        raise FormatError("embedding dimension is zero")
    if expected_count is not None and count != expected_count:
        raise FormatError(f"embedding count {count} does not match {expected_count} detection rows")
    body = data[_HEADER.size:]
    if len(body) != count * dim * 4:
        raise FormatError(f"payload is {len(body)} bytes, header implies {count * dim * 4}")
    emb = np.frombuffer(body, dtype="<f4").reshape(count, dim).astype(float)
    norms = np.linalg.norm(emb, axis=1)
    bad = np.nonzero(np.abs(norms - 1.0) > UNIT_NORM_TOL)[0]
    if len(bad):
        raise FormatError(f"embedding row {int(bad[0])} has norm {norms[bad[0]]:.6f}, expected 1")
    return emb


def read_config(path) -> dict[str, str]:
    """Plain ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for k, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError("expected key=value", k)
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("_", "-")] = value
    return out
