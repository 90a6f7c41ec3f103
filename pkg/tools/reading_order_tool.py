"""Reading Order Tool - Paragraph Reconstruction

Groups recognized words into paragraphs and orders the words inside each one:
expand every box, connect boxes whose expanded IoU reaches a threshold, take
connected components, raster-scan each component and enclose it in a
minimum-area rectangle.

Adjacency never materializes an n x n matrix for `reconstruct`: candidate pairs
come from a sweep over axis-aligned hulls and only those pairs get exact IoU.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

import config
from tools.errors import StrkitError
from tools.geometry import (
    AxisRect,
    Point,
    RotatedBox,
    aabb,
    axis_extents,
    expand,
    iou,
    is_axis_aligned,
    min_area_rect_of_coords,
)

logger = logging.getLogger(__name__)


class IouMode(Enum):
    ROTATED = "rotated"
    AXIS_ALIGNED = "axis-aligned"


@dataclass(frozen=True)
class Word:
    text: str
    box: RotatedBox
    confidence: float = 1.0
    of_interest: bool = True

    def __post_init__(self):
        if not self.text or self.text != self.text.strip():
            raise StrkitError(f"Word text must be non-empty without surrounding whitespace: {self.text!r}")
        if not 0.0 <= self.confidence <= 1.0:
            raise StrkitError(f"Word confidence must be in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class GroupingParams:
    r_v: float = 0.5
    r_h: float = 1.0
    t: float = 0.01
    iou_mode: IouMode = IouMode.ROTATED
    line_tolerance: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.t <= 1.0:
            raise StrkitError(f"IoU threshold must be in [0, 1], got {self.t}")
        if self.r_v < 0 or self.r_h < 0:
            raise StrkitError(f"Expansion ratios must be non-negative, got r_v={self.r_v}, r_h={self.r_h}")
        if self.line_tolerance < 0:
            raise StrkitError(f"Line tolerance must be non-negative, got {self.line_tolerance}")
        if not isinstance(self.iou_mode, IouMode):
            object.__setattr__(self, "iou_mode", IouMode(self.iou_mode))

    @classmethod
    def from_config(cls, **overrides) -> "GroupingParams":
        values = dict(config.GROUPING_PARAMETERS)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass(frozen=True)
class Paragraph:
    words: Tuple[Word, ...]
    rect: AxisRect
    rbox: RotatedBox

    def __post_init__(self):
        if not self.words:
            raise StrkitError("Paragraph must contain at least one word")

    @property
    def text(self) -> str:
        return " ".join(w.text for w in self.words)

    @property
    def center(self) -> Point:
        return self.rbox.center


class DisjointSet:
    """Array-backed union-find with path compression and union by size."""

    def __init__(self, n: int):
        self._parent = list(range(n))
        self._size = [1] * n

    def find(self, a: int) -> int:
        root = a
        while self._parent[root] != root:
            root = self._parent[root]
        while self._parent[a] != root:
            self._parent[a], a = root, self._parent[a]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self._size[ra] < self._size[rb]:
            ra, rb = rb, ra
        self._parent[rb] = ra
        self._size[ra] += self._size[rb]

    def groups(self) -> List[List[int]]:
        """Members per set, each ascending, sets ordered by smallest member."""
        by_root = {}
        for k in range(len(self._parent)):
            by_root.setdefault(self.find(k), []).append(k)
        return sorted(by_root.values(), key=lambda g: g[0])


def _extents(boxes: Sequence[RotatedBox]) -> np.ndarray:
    """(n, 4) array of axis-aligned hull extents x0, y0, x1, y1."""
    out = np.empty((len(boxes), 4), dtype=np.float64)
    for k, b in enumerate(boxes):
        r = aabb(b)
        out[k] = (r.left, r.top, r.right, r.bottom)
    return out


def candidate_pairs(boxes: Sequence[RotatedBox], chunk: int = 1 << 21) -> Tuple[np.ndarray, np.ndarray]:
    """Index pairs (i < j) whose axis-aligned hulls overlap, closed intervals.

    Sweeps along the axis where boxes cover the smaller share of the layout, so
    text lines (wide, short) are swept top to bottom.
    """
    n = len(boxes)
    if n < 2:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)

    ext = _extents(boxes)
    span_x = ext[:, 2].max() - ext[:, 0].min()
    span_y = ext[:, 3].max() - ext[:, 1].min()
    rel_x = (ext[:, 2] - ext[:, 0]).mean() / span_x if span_x > 0 else np.inf
    rel_y = (ext[:, 3] - ext[:, 1]).mean() / span_y if span_y > 0 else np.inf
    if rel_y <= rel_x:
        lo, hi, olo, ohi = ext[:, 1], ext[:, 3], ext[:, 0], ext[:, 2]
    else:
        lo, hi, olo, ohi = ext[:, 0], ext[:, 2], ext[:, 1], ext[:, 3]

    order = np.argsort(lo, kind="stable")
    lo_s, hi_s, olo_s, ohi_s = lo[order], hi[order], olo[order], ohi[order]
    end = np.searchsorted(lo_s, hi_s, side="right")
    counts = np.maximum(end - np.arange(n) - 1, 0)
    cum = np.cumsum(counts)

    first, second = [], []
    start = 0
    while start < n:
        base = cum[start - 1] if start else 0
        stop = max(int(np.searchsorted(cum, base + chunk, side="right")), start + 1)
        c = counts[start:stop]
        total = int(c.sum())
        if total:
            p = np.repeat(np.arange(start, stop), c)
            q = p + 1 + (np.arange(total) - np.repeat(np.cumsum(c) - c, c))
            keep = (olo_s[q] <= ohi_s[p]) & (olo_s[p] <= ohi_s[q])
            first.append(order[p[keep]])
            second.append(order[q[keep]])
        start = stop

    if not first:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    a, b = np.concatenate(first), np.concatenate(second)
    i, j = np.minimum(a, b), np.maximum(a, b)
    idx = np.lexsort((j, i))
    logger.debug("Sweep kept %d candidate pairs out of %d boxes", len(idx), n)
    return i[idx].astype(np.int64), j[idx].astype(np.int64)


def _axis_box(b: RotatedBox) -> RotatedBox:
    r = aabb(b)
    return RotatedBox(r.left + r.width / 2, r.top + r.height / 2, r.width, r.height, 0.0)


def pair_ious(boxes: Sequence[RotatedBox], i: np.ndarray, j: np.ndarray) -> np.ndarray:
    """IoU of each (i[k], j[k]) pair, equal to `geometry.iou` value for value.

    Pairs of axis-aligned boxes use the closed form vectorized with the same
    arithmetic as the scalar path; other pairs are clipped one by one.
    """
    result = np.zeros(len(i), dtype=np.float64)
    if len(i) == 0:
        return result

    aligned = np.array([is_axis_aligned(b) for b in boxes], dtype=bool)
    ext = np.array(
        [axis_extents(b) if is_axis_aligned(b) else (0.0, 0.0, 0.0, 0.0) for b in boxes], dtype=np.float64
    )
    fields = np.array([(b.cx, b.cy, b.w, b.h, b.angle) for b in boxes], dtype=np.float64)
    areas = fields[:, 2] * fields[:, 3]

    fast = aligned[i] & aligned[j]
    fi, fj = i[fast], j[fast]
    ix = np.minimum(ext[fi, 2], ext[fj, 2]) - np.maximum(ext[fi, 0], ext[fj, 0])
    iy = np.minimum(ext[fi, 3], ext[fj, 3]) - np.maximum(ext[fi, 1], ext[fj, 1])
    inter = np.where((ix > 0) & (iy > 0), ix * iy, 0.0)
    union = areas[fi] + areas[fj] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        values = np.clip(np.where(union > 0, inter / union, 0.0), 0.0, 1.0)
    degenerate = (areas[fi] <= 0) | (areas[fj] <= 0)
    values[degenerate] = 0.0
    same = np.all(fields[fi] == fields[fj], axis=1)
    values[same & ~degenerate] = 1.0
    result[fast] = values

    for k in np.flatnonzero(~fast):
        result[k] = iou(boxes[i[k]], boxes[j[k]])
    return result


class ReadingOrderTool:
    """Paragraph reconstruction over detector word boxes."""

    def __init__(self, params: Optional[GroupingParams] = None):
        self.params = params or GroupingParams.from_config()

    def _expanded(self, words: Sequence[Word]) -> List[RotatedBox]:
        boxes = [expand(w.box, self.params.r_v, self.params.r_h) for w in words]
        if self.params.iou_mode is IouMode.AXIS_ALIGNED:
            boxes = [_axis_box(b) for b in boxes]
        return boxes

    def edges(self, words: Sequence[Word]) -> Tuple[np.ndarray, np.ndarray]:
        """Adjacent pairs (i < j) under the current parameters."""
        n = len(words)
        if self.params.t <= 0:
            # every IoU, including 0, reaches a zero threshold
            i, j = np.triu_indices(n, k=1)
            return i.astype(np.int64), j.astype(np.int64)

        boxes = self._expanded(words)
        i, j = candidate_pairs(boxes)
        keep = pair_ious(boxes, i, j) >= self.params.t
        return i[keep], j[keep]

    def adjacency(self, words: Sequence[Word]) -> np.ndarray:
        """Symmetric boolean adjacency matrix with a true diagonal."""
        n = len(words)
        adj = np.eye(n, dtype=bool)
        i, j = self.edges(words)
        adj[i, j] = True
        adj[j, i] = True
        return adj

    @staticmethod
    def connected_components(adj) -> List[List[int]]:
        matrix = np.asarray(adj, dtype=bool)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise StrkitError(f"Adjacency matrix must be square, got shape {matrix.shape}")
        if not np.array_equal(matrix, matrix.T):
            raise StrkitError("Adjacency matrix must be symmetric")

        forest = DisjointSet(matrix.shape[0])
        for a, b in zip(*np.nonzero(np.triu(matrix, k=1))):
            forest.union(int(a), int(b))
        return forest.groups()

    def _raster_indices(self, words: Sequence[Word]) -> List[int]:
        n = len(words)
        threshold = self.params.line_tolerance * float(np.median([w.box.h for w in words]))

        line_of = [0] * n
        line, anchor = -1, None
        for k in sorted(range(n), key=lambda k: (words[k].box.cy, k)):
            cy = words[k].box.cy
            if anchor is None or not (cy - anchor < threshold or cy == anchor):
                line += 1
                anchor = cy
            line_of[k] = line
        return sorted(range(n), key=lambda k: (line_of[k], words[k].box.cx, k))

    def raster_order(self, words: Sequence[Word]) -> List[Word]:
        """Lines top to bottom, words left to right, input order on ties."""
        if not words:
            raise StrkitError("Raster scan needs a non-empty component")
        return [words[k] for k in self._raster_indices(words)]

    def reconstruct(self, words: Sequence[Word]) -> List[Paragraph]:
        n = len(words)
        if n == 0:
            return []

        i, j = self.edges(words)
        forest = DisjointSet(n)
        for a, b in zip(i.tolist(), j.tolist()):
            forest.union(a, b)

        paragraphs = []
        for component in forest.groups():
            members = [words[k] for k in component]
            ordered = self.raster_order(members)
            rbox = min_area_rect_of_coords([c for w in members for c in w.box.polygon()])
            paragraphs.append(Paragraph(words=tuple(ordered), rect=aabb(rbox), rbox=rbox))

        paragraphs.sort(key=lambda p: (p.rect.top, p.rect.left))
        logger.info("Grouped %d words into %d paragraphs", n, len(paragraphs))
        return paragraphs
