"""Evaluation Tool - Word Error Rate Harness

Box-matched word error rate with deletion/insertion/substitution breakdown,
benchmark normalization (punctuation, tiny words, case) and report tables for
system comparisons, component ablations and text-height buckets.

Counts are summed over images before dividing (micro-average).
"""

import logging
import math
import unicodedata
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.optimize import linear_sum_assignment

import config
from tools.errors import StrkitError
from tools.reading_order_tool import Word, candidate_pairs, pair_ious

logger = logging.getLogger(__name__)

Corpus = Sequence[Tuple[Sequence[Word], Sequence[Word]]]


class MatchKind(Enum):
    CORRECT = "correct"
    SUBSTITUTION = "substitution"
    DELETION = "deletion"
    INSERTION = "insertion"


class MatchMode(Enum):
    GREEDY = "greedy"
    OPTIMAL = "optimal"


@dataclass(frozen=True)
class Match:
    gt_index: Optional[int]
    pred_index: Optional[int]
    iou: float
    kind: MatchKind

    def __post_init__(self):
        if (self.kind is MatchKind.DELETION) != (self.pred_index is None):
            raise StrkitError(f"Deletion must have no prediction: {self}")
        if (self.kind is MatchKind.INSERTION) != (self.gt_index is None):
            raise StrkitError(f"Insertion must have no ground truth: {self}")


@dataclass(frozen=True)
class WerBreakdown:
    n_gt: int
    deletions: int
    insertions: int
    substitutions: int
    correct: int = 0
    n_pred: int = 0

    @classmethod
    def from_counts(
        cls,
        n_gt: int,
        deletions: int,
        insertions: int,
        substitutions: int,
        correct: Optional[int] = None,
        n_pred: Optional[int] = None,
    ) -> "WerBreakdown":
        if correct is None:
            correct = n_gt - deletions - substitutions
        if n_pred is None:
            n_pred = correct + substitutions + insertions
        return cls(n_gt, deletions, insertions, substitutions, correct, n_pred)

    @classmethod
    def zero(cls) -> "WerBreakdown":
        return cls(0, 0, 0, 0, 0, 0)

    def __add__(self, other: "WerBreakdown") -> "WerBreakdown":
        if not isinstance(other, WerBreakdown):
            return NotImplemented
        return WerBreakdown(
            self.n_gt + other.n_gt,
            self.deletions + other.deletions,
            self.insertions + other.insertions,
            self.substitutions + other.substitutions,
            self.correct + other.correct,
            self.n_pred + other.n_pred,
        )

    def _rate(self, count: int) -> float:
        if self.n_gt <= 0:
            raise StrkitError("undefined WER")
        return count / self.n_gt

    @property
    def errors(self) -> int:
        return self.deletions + self.insertions + self.substitutions

    @property
    def wer(self) -> float:
        return self._rate(self.errors)

    @property
    def del_rate(self) -> float:
        return self._rate(self.deletions)

    @property
    def ins_rate(self) -> float:
        return self._rate(self.insertions)

    @property
    def sub_rate(self) -> float:
        return self._rate(self.substitutions)

    def as_dict(self) -> Dict[str, Union[int, float, None]]:
        defined = self.n_gt > 0
        return {
            "n_gt": self.n_gt,
            "n_pred": self.n_pred,
            "correct": self.correct,
            "deletions": self.deletions,
            "insertions": self.insertions,
            "substitutions": self.substitutions,
            "wer": self.wer if defined else None,
            "del_rate": self.del_rate if defined else None,
            "ins_rate": self.ins_rate if defined else None,
            "sub_rate": self.sub_rate if defined else None,
        }


@dataclass(frozen=True)
class NormalizationPolicy:
    strip_punctuation: bool = False
    min_height_px: float = 8.0
    case_insensitive: bool = False

    def __post_init__(self):
        if not self.min_height_px >= 0:
            raise StrkitError(f"Minimum word height must be non-negative, got {self.min_height_px}")

    @classmethod
    def from_config(cls, **overrides) -> "NormalizationPolicy":
        values = {
            "strip_punctuation": config.EVALUATION_PARAMETERS["strip_punctuation"],
            "min_height_px": config.EVALUATION_PARAMETERS["min_height_px"],
            "case_insensitive": config.EVALUATION_PARAMETERS["case_insensitive"],
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


def _strip_punctuation(text: str) -> str:
    return "".join(ch for ch in text if not unicodedata.category(ch).startswith("P"))


def normalize(words: Sequence[Word], policy: NormalizationPolicy) -> List[Word]:
    """Benchmark normalization; order is preserved and emptied words are dropped."""
    out = []
    for w in words:
        if w.box.h < policy.min_height_px:
            continue
        text = w.text
        if policy.strip_punctuation:
            text = _strip_punctuation(text).strip()
        if policy.case_insensitive:
            text = text.casefold()
        if not text:
            continue
        out.append(w if text == w.text else replace(w, text=text))
    return out


def _iou_table(gt: Sequence[Word], pred: Sequence[Word]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(gt index, pred index, iou) for every pair with overlapping hulls."""
    n_gt = len(gt)
    boxes = [w.box for w in gt] + [w.box for w in pred]
    i, j = candidate_pairs(boxes)
    cross = (i < n_gt) & (j >= n_gt)
    i, j = i[cross], j[cross]
    return i, j - n_gt, pair_ious(boxes, i, j)


def _greedy(gi: np.ndarray, pj: np.ndarray, ious: np.ndarray, threshold: float) -> Dict[int, Tuple[int, float]]:
    order = sorted(range(len(ious)), key=lambda k: (-ious[k], gi[k], pj[k]))
    taken_pred = set()
    pairs = {}
    for k in order:
        if ious[k] < threshold:
            break
        g, p = int(gi[k]), int(pj[k])
        if g in pairs or p in taken_pred:
            continue
        pairs[g] = (p, float(ious[k]))
        taken_pred.add(p)
    return pairs


def _optimal(
    gi: np.ndarray, pj: np.ndarray, ious: np.ndarray, threshold: float, n_gt: int, n_pred: int
) -> Dict[int, Tuple[int, float]]:
    """Maximum number of pairs, then maximum total IoU."""
    if n_gt == 0 or n_pred == 0:
        return {}
    big = min(n_gt, n_pred) + 1.0
    weights = np.zeros((n_gt, n_pred), dtype=np.float64)
    iou_matrix = np.zeros((n_gt, n_pred), dtype=np.float64)
    ok = ious >= threshold
    weights[gi[ok], pj[ok]] = big + ious[ok]
    iou_matrix[gi, pj] = ious
    rows, cols = linear_sum_assignment(weights, maximize=True)
    return {int(r): (int(c), float(iou_matrix[r, c])) for r, c in zip(rows, cols) if weights[r, c] > 0}


def match_words(
    gt: Sequence[Word],
    pred: Sequence[Word],
    iou_threshold: Optional[float] = None,
    mode: Union[MatchMode, str, None] = None,
) -> List[Match]:
    """One-to-one partial matching of predictions to ground truth by box IoU.

    Matches come in ground-truth order (matched pairs and deletions), followed
    by insertions in prediction order.
    """
    threshold = config.EVALUATION_PARAMETERS["iou_threshold"] if iou_threshold is None else iou_threshold
    if not 0 < threshold <= 1:
        raise StrkitError(f"IoU threshold must be in (0, 1], got {threshold}")
    mode = MatchMode(mode or config.EVALUATION_PARAMETERS["matching"])

    gi, pj, ious = _iou_table(gt, pred)
    if mode is MatchMode.GREEDY:
        pairs = _greedy(gi, pj, ious, threshold)
    else:
        pairs = _optimal(gi, pj, ious, threshold, len(gt), len(pred))

    matches = []
    for g, word in enumerate(gt):
        if g in pairs:
            p, value = pairs[g]
            kind = MatchKind.CORRECT if word.text == pred[p].text else MatchKind.SUBSTITUTION
            matches.append(Match(g, p, value, kind))
        else:
            matches.append(Match(g, None, 0.0, MatchKind.DELETION))
    matched_pred = {p for p, _ in pairs.values()}
    matches.extend(Match(None, p, 0.0, MatchKind.INSERTION) for p in range(len(pred)) if p not in matched_pred)
    return matches


def count_matches(matches: Iterable[Match]) -> WerBreakdown:
    counts = {kind: 0 for kind in MatchKind}
    for m in matches:
        counts[m.kind] += 1
    correct, sub = counts[MatchKind.CORRECT], counts[MatchKind.SUBSTITUTION]
    return WerBreakdown(
        n_gt=correct + sub + counts[MatchKind.DELETION],
        deletions=counts[MatchKind.DELETION],
        insertions=counts[MatchKind.INSERTION],
        substitutions=sub,
        correct=correct,
        n_pred=correct + sub + counts[MatchKind.INSERTION],
    )


def _image_breakdown(gt, pred, policy, iou_threshold, mode) -> WerBreakdown:
    return count_matches(match_words(normalize(gt, policy), normalize(pred, policy), iou_threshold, mode))


def wer(
    gt: Sequence[Word],
    pred: Sequence[Word],
    policy: Optional[NormalizationPolicy] = None,
    iou_threshold: Optional[float] = None,
    mode: Union[MatchMode, str, None] = None,
) -> WerBreakdown:
    policy = policy or NormalizationPolicy.from_config()
    breakdown = _image_breakdown(gt, pred, policy, iou_threshold, mode)
    if breakdown.n_gt == 0:
        raise StrkitError("undefined WER")
    return breakdown


def evaluate_corpus(
    corpus: Corpus,
    policy: Optional[NormalizationPolicy] = None,
    iou_threshold: Optional[float] = None,
    mode: Union[MatchMode, str, None] = None,
) -> Tuple[WerBreakdown, List[WerBreakdown]]:
    """Micro-averaged breakdown over images plus the per-image breakdowns.

    Images left without ground truth after normalization still contribute
    their insertions.
    """
    policy = policy or NormalizationPolicy.from_config()
    per_image = [_image_breakdown(gt, pred, policy, iou_threshold, mode) for gt, pred in corpus]
    total = sum(per_image, WerBreakdown.zero())
    if total.n_gt == 0:
        raise StrkitError("undefined WER")
    logger.info(
        "WER %.4f over %d images (%d gt words, %d predictions)", total.wer, len(per_image), total.n_gt, total.n_pred
    )
    return total, per_image


def _height_bucket(height: float, small: float, large: float) -> str:
    if height < small:
        return "small"
    if height > large:
        return "large"
    return "medium"


def wer_by_height(
    corpus: Corpus,
    policy: Optional[NormalizationPolicy] = None,
    iou_threshold: Optional[float] = None,
    buckets: Optional[Sequence[float]] = None,
    mode: Union[MatchMode, str, None] = None,
) -> pd.DataFrame:
    """Breakdown per text-height bucket.

    Ground-truth words carry deletions, substitutions and correct matches;
    unmatched predictions are bucketed by their own height.
    """
    policy = policy or NormalizationPolicy.from_config()
    small, large = buckets or config.EVALUATION_PARAMETERS["height_buckets"]
    names = ("small", "medium", "large")
    counts = {name: {kind: 0 for kind in MatchKind} for name in names}

    for gt, pred in corpus:
        gt_n, pred_n = normalize(gt, policy), normalize(pred, policy)
        for m in match_words(gt_n, pred_n, iou_threshold, mode):
            word = pred_n[m.pred_index] if m.kind is MatchKind.INSERTION else gt_n[m.gt_index]
            counts[_height_bucket(word.box.h, small, large)][m.kind] += 1

    rows = []
    for name in names:
        c = counts[name]
        bd = WerBreakdown(
            n_gt=c[MatchKind.CORRECT] + c[MatchKind.SUBSTITUTION] + c[MatchKind.DELETION],
            deletions=c[MatchKind.DELETION],
            insertions=c[MatchKind.INSERTION],
            substitutions=c[MatchKind.SUBSTITUTION],
            correct=c[MatchKind.CORRECT],
        )
        rows.append({"bucket": name, **bd.as_dict()})
    return pd.DataFrame(rows).drop(columns=["n_pred"])


def comparison_report(systems: Mapping[str, Union[WerBreakdown, Corpus]], **kwargs) -> pd.DataFrame:
    """System comparison table: WER with its deletion/insertion/substitution split."""
    rows = []
    for name, value in systems.items():
        bd = value if isinstance(value, WerBreakdown) else evaluate_corpus(value, **kwargs)[0]
        rows.append(
            {
                "system": name,
                "wer": bd.wer,
                "deletion": bd.del_rate,
                "insertion": bd.ins_rate,
                "substitution": bd.sub_rate,
                "n_gt": bd.n_gt,
            }
        )
    return pd.DataFrame(rows, columns=["system", "wer", "deletion", "insertion", "substitution", "n_gt"])


def ablation_table(runs: Mapping[str, Union[WerBreakdown, float]]) -> pd.DataFrame:
    """Component ablation rows in order, each adding one change to the row above.

    `delta` is against the baseline (first) row and `delta_vs_previous`
    against the row above; both are empty on the first row.
    """
    if not runs:
        raise StrkitError("Ablation needs at least one run")
    rows = []
    first = previous = None
    for name, value in runs.items():
        value_wer = value.wer if isinstance(value, WerBreakdown) else float(value)
        row = {
            "component": name,
            "wer": value_wer,
            "delta": None if first is None else value_wer - first,
            "delta_vs_previous": None if previous is None else value_wer - previous,
        }
        if isinstance(value, WerBreakdown):
            row.update(deletion=value.del_rate, insertion=value.ins_rate, substitution=value.sub_rate)
        rows.append(row)
        first = value_wer if first is None else first
        previous = value_wer
    return pd.DataFrame(rows)


def ablation_report(runs: Mapping[str, Corpus], **kwargs) -> pd.DataFrame:
    return ablation_table({name: evaluate_corpus(corpus, **kwargs)[0] for name, corpus in runs.items()})


def additivity_audit(rows: Iterable[Mapping[str, object]], tolerance: float = 0.05) -> pd.DataFrame:
    """Check published WER rows against the sum of their error rates.

    Rows hold percentages under `wer`, `deletion`, `insertion`, `substitution`;
    `tolerance` is in percentage points and absorbs one-decimal rounding.
    """
    out = []
    for row in rows:
        parts = [float(row["deletion"]), float(row["insertion"]), float(row["substitution"])]
        reproduced = round(math.fsum(parts), 6)
        residual = float(row["wer"]) - reproduced
        out.append(
            {
                "system": row.get("system"),
                "benchmark": row.get("benchmark"),
                "wer": float(row["wer"]),
                "reproduced": reproduced,
                "residual": residual,
                "consistent": abs(residual) <= tolerance,
            }
        )
    table = pd.DataFrame(out, columns=["system", "benchmark", "wer", "reproduced", "residual", "consistent"])
    if len(table) and not table["consistent"].all():
        logger.warning("%d published rows do not add up", int((~table["consistent"]).sum()))
    return table
