"""ROI Tool - Crops, Recall and Pointing

The parts of region-of-interest handling that need no trained detector: the
center-crop baseline, word containment and recall accounting for a crop, and
word/paragraph selection along a finger pointing vector.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Mapping, Optional, Sequence, Tuple

import pandas as pd

import config
from tools.errors import StrkitError
from tools.geometry import AxisRect, Point, axis_extents, intersection_area, is_axis_aligned
from tools.reading_order_tool import Paragraph, Word

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PointingGesture:
    last_joint: Point
    tip: Point

    def __post_init__(self):
        if self.last_joint == self.tip:
            raise StrkitError("Pointing gesture needs distinct joint and tip")

    @property
    def direction(self) -> Tuple[float, float]:
        return self.tip.x - self.last_joint.x, self.tip.y - self.last_joint.y


@dataclass(frozen=True)
class RoiCrop:
    rect: AxisRect
    source_size: Tuple[float, float]

    def __post_init__(self):
        width, height = self.source_size
        if width <= 0 or height <= 0:
            raise StrkitError(f"Source image size must be positive, got {width}x{height}")
        if not AxisRect(0.0, 0.0, height, width).contains_rect(self.rect):
            raise StrkitError(f"Crop {self.rect} is outside the {width}x{height} image")

    @property
    def source_area(self) -> float:
        return self.source_size[0] * self.source_size[1]


@dataclass(frozen=True)
class PointedTargets:
    words: Tuple[Word, ...]
    word_distances: Tuple[float, ...]
    paragraphs: Tuple[Paragraph, ...]
    paragraph_distances: Tuple[float, ...]

    @property
    def empty(self) -> bool:
        return not self.words and not self.paragraphs


def center_crop(image_size: Tuple[float, float], crop_size: Tuple[float, float]) -> RoiCrop:
    """Crop of the requested size centered in the image, clamped to the image."""
    img_w, img_h = image_size
    crop_w, crop_h = min(crop_size[0], img_w), min(crop_size[1], img_h)
    rect = AxisRect(top=(img_h - crop_h) / 2, left=(img_w - crop_w) / 2, height=crop_h, width=crop_w)
    return RoiCrop(rect=rect, source_size=(img_w, img_h))


def crop_area_reduction(crop: RoiCrop) -> float:
    return 1.0 - crop.rect.area / crop.source_area


def inside_fraction(word: Word, crop: RoiCrop) -> float:
    """Share of the word box area that falls inside the crop rectangle."""
    area = word.box.area
    if area <= 0:
        return 0.0
    r = crop.rect
    if is_axis_aligned(word.box):
        x0, y0, x1, y1 = axis_extents(word.box)
        ix = min(x1, r.right) - max(x0, r.left)
        iy = min(y1, r.bottom) - max(y0, r.top)
        inter = ix * iy if ix > 0 and iy > 0 else 0.0
    else:
        inter = intersection_area(word.box.polygon(), r.polygon())
    return inter / area


def word_in_crop(word: Word, crop: RoiCrop, min_area_frac: Optional[float] = None) -> bool:
    if min_area_frac is None:
        min_area_frac = config.ROI_PARAMETERS["min_area_frac"]
    if word.box.area <= 0:
        return False
    return inside_fraction(word, crop) >= min_area_frac


def roi_recall(ground_truth: Sequence[Word], crop: RoiCrop, min_area_frac: Optional[float] = None) -> float:
    """Fraction of words of interest the crop keeps."""
    included, total = _recall_counts(ground_truth, crop, min_area_frac)
    return included / total


def _recall_counts(ground_truth: Sequence[Word], crop: RoiCrop, min_area_frac: Optional[float]) -> Tuple[int, int]:
    of_interest = [w for w in ground_truth if w.of_interest]
    if not of_interest:
        raise StrkitError("undefined recall")
    included = sum(1 for w in of_interest if word_in_crop(w, crop, min_area_frac))
    return included, len(of_interest)


def recall_report(
    methods: Mapping[str, Sequence[Tuple[Sequence[Word], RoiCrop]]],
    min_area_frac: Optional[float] = None,
) -> pd.DataFrame:
    """Per-method recall over a dataset, one row per method in input order.

    Recall is micro-averaged over images; `improvement` is against the row
    above, `area_reduction` is the mean over images.
    """
    rows = []
    previous = None
    for method, images in methods.items():
        if not images:
            raise StrkitError(f"Method '{method}' has no images")
        included = total = 0
        reductions = []
        for words, crop in images:
            inc, tot = _recall_counts(words, crop, min_area_frac)
            included += inc
            total += tot
            reductions.append(crop_area_reduction(crop))
        recall = included / total
        rows.append(
            {
                "method": method,
                "images": len(images),
                "words": total,
                "recall": recall,
                "improvement": None if previous is None else recall - previous,
                "area_reduction": sum(reductions) / len(reductions),
            }
        )
        previous = recall
        logger.info("ROI recall for %s: %.4f over %d words", method, recall, total)
    return pd.DataFrame(rows, columns=["method", "images", "words", "recall", "improvement", "area_reduction"])


def _ahead_of(gesture: PointingGesture, target: Point, cos_limit: float) -> Optional[float]:
    """Distance from the tip when the target lies inside the pointing cone."""
    dx, dy = gesture.direction
    tx, ty = target.x - gesture.tip.x, target.y - gesture.tip.y
    dot = dx * tx + dy * ty
    if dot <= 0:
        return None
    dist = math.hypot(tx, ty)
    if dot / (math.hypot(dx, dy) * dist) < cos_limit:
        return None
    return dist


def _nearest(gesture: PointingGesture, centers: Sequence[Point], cone_deg: float, k: int) -> List[Tuple[int, float]]:
    cos_limit = math.cos(math.radians(cone_deg))
    hits = []
    for idx, center in enumerate(centers):
        dist = _ahead_of(gesture, center, cos_limit)
        if dist is not None:
            hits.append((idx, dist))
    hits.sort(key=lambda h: (h[1], h[0]))
    return hits[:k]


def pointed_targets(
    gesture: PointingGesture,
    words: Sequence[Word],
    paragraphs: Sequence[Paragraph],
    cone_deg: Optional[float] = None,
    k: Optional[int] = None,
    k_paragraphs: Optional[int] = None,
) -> PointedTargets:
    """Nearest words and paragraphs ahead of the fingertip within the cone.

    `k` bounds the words; paragraphs use `k_paragraphs`, or `k` when only that
    is given.
    """
    cone_deg = config.ROI_PARAMETERS["cone_deg"] if cone_deg is None else cone_deg
    if not 0 < cone_deg <= 90:
        raise StrkitError(f"Cone half-angle must be in (0, 90] degrees, got {cone_deg}")
    if k_paragraphs is None:
        k_paragraphs = k if k is not None else config.ROI_PARAMETERS["k_paragraphs"]
    if k is None:
        k = config.ROI_PARAMETERS["k_words"]
    if k < 0 or k_paragraphs < 0:
        raise StrkitError("Target counts must be non-negative")

    word_hits = _nearest(gesture, [w.box.center for w in words], cone_deg, k)
    para_hits = _nearest(gesture, [p.center for p in paragraphs], cone_deg, k_paragraphs)
    logger.debug("Pointing selected %d words and %d paragraphs", len(word_hits), len(para_hits))
    return PointedTargets(
        words=tuple(words[i] for i, _ in word_hits),
        word_distances=tuple(d for _, d in word_hits),
        paragraphs=tuple(paragraphs[i] for i, _ in para_hits),
        paragraph_distances=tuple(d for _, d in para_hits),
    )
