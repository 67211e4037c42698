"""Per-sequence collection of (frame, id, box) rows."""

from __future__ import annotations

from collections import defaultdict
from typing import Iterable

import numpy as np

from .errors import FormatError
from .geometry import Box


class SequenceResult:
    """Ground truth or hypothesis rows for one sequence.

    Rows are kept sorted by (frame, id); a (frame, id) pair may occur once.
    """

    def __init__(self, rows: Iterable[tuple[int, int, Box]] = ()):
        rows = sorted(((int(f), int(i), b) for f, i, b in rows), key=lambda r: (r[0], r[1]))
        seen = set()
        for f, i, _ in rows:
            if f < 0:
                raise FormatError(f"negative frame index {f}")
            if (f, i) in seen:
                raise FormatError(f"duplicate (frame, id) = ({f}, {i})")
            seen.add((f, i))
        self.rows = rows

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def __eq__(self, other):
        return isinstance(other, SequenceResult) and self.rows == other.rows

    def __repr__(self):
        return f"SequenceResult({len(self.rows)} rows, {len(self.ids())} ids)"

    def frames(self) -> list[int]:
        return sorted({f for f, _, _ in self.rows})

    def ids(self) -> list[int]:
        return sorted({i for _, i, _ in self.rows})

    def by_frame(self) -> dict[int, tuple[np.ndarray, np.ndarray]]:
        """frame -> (ids array, (K, 4) tlwh array)."""
        grouped: dict[int, list] = defaultdict(list)
        for f, i, b in self.rows:
            grouped[f].append((i, b))
        out = {}
        for f, items in grouped.items():
            ids = np.array([i for i, _ in items], dtype=int)
            boxes = np.array([[b.x, b.y, b.w, b.h] for _, b in items], dtype=float).reshape(-1, 4)
            out[f] = (ids, boxes)
        return out

    def restrict(self, frames: Iterable[int]) -> "SequenceResult":
        keep = set(frames)
        return SequenceResult(r for r in self.rows if r[0] in keep)

    def relabel(self, mapping) -> "SequenceResult":
        return SequenceResult((f, mapping[i], b) for f, i, b in self.rows)
