"""Recognition Tool - Crop Geometry, Alphabet and CTC Decoding

Deterministic parts around the word recognizer: the affine map from a word box
onto the fixed-size recognizer crop, the frequency-ranked alphabet, and
decoding of the per-frame posterior (greedy and prefix beam search).

The posterior has one column per alphabet symbol plus a trailing CTC blank.
"""

import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Optional, Tuple, Union

import numpy as np

import config
from tools.errors import ErrorCode, SchemaError, StrkitError
from tools.geometry import RotatedBox

logger = logging.getLogger(__name__)

ROW_SUM_TOLERANCE = 1e-5


@dataclass(frozen=True)
class CropSpec:
    height: int = 48
    width: int = 320
    char_width: int = 8

    def __post_init__(self):
        if min(self.height, self.width, self.char_width) <= 0:
            raise StrkitError(f"Crop dimensions must be positive: {self}")
        if self.width % self.char_width:
            raise StrkitError(f"Crop width {self.width} is not a multiple of char width {self.char_width}")

    @property
    def max_chars(self) -> int:
        return self.width // self.char_width

    @classmethod
    def from_config(cls) -> "CropSpec":
        return cls(
            height=config.CROP_PARAMETERS["height"],
            width=config.CROP_PARAMETERS["width"],
            char_width=config.CROP_PARAMETERS["char_width"],
        )


@dataclass(frozen=True)
class Alphabet:
    """Recognizer symbols; the blank is the index right after the last symbol."""

    MAX_SYMBOLS = 150

    symbols: Tuple[str, ...]
    _index: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        symbols = tuple(self.symbols)
        object.__setattr__(self, "symbols", symbols)
        if not symbols:
            raise StrkitError("Alphabet needs at least one symbol")
        if len(symbols) > self.MAX_SYMBOLS:
            raise StrkitError(f"Alphabet has {len(symbols)} symbols, limit is {self.MAX_SYMBOLS}")
        for s in symbols:
            if len(s) != 1:
                raise StrkitError(f"Alphabet symbols must be single characters, got {s!r}")
        if len(set(symbols)) != len(symbols):
            raise StrkitError("Alphabet contains duplicate symbols")
        object.__setattr__(self, "_index", {s: k for k, s in enumerate(symbols)})

    @property
    def blank_index(self) -> int:
        return len(self.symbols)

    @property
    def columns(self) -> int:
        return len(self.symbols) + 1

    def lookup(self, symbol: str) -> int:
        if symbol not in self._index:
            raise StrkitError(f"Symbol {symbol!r} is not in the alphabet")
        return self._index[symbol]

    def symbol(self, index: int) -> str:
        if not 0 <= index < len(self.symbols):
            raise StrkitError(f"Index {index} is not a symbol index (blank is {self.blank_index})")
        return self.symbols[index]

    def encode(self, text: str) -> Tuple[int, ...]:
        return tuple(self.lookup(ch) for ch in text)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Alphabet":
        """One symbol per line, UTF-8; a trailing newline is optional."""
        try:
            content = Path(path).read_bytes().decode("utf-8")
        except UnicodeDecodeError as exc:
            message = f"alphabet file is not UTF-8: {exc.reason} at byte {exc.start}"
            raise SchemaError(ErrorCode.SCHEMA_VIOLATION, message) from exc
        lines = content.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        symbols = [line[:-1] if line.endswith("\r") else line for line in lines]
        return cls(tuple(symbols))

    def dump(self, path: Union[str, Path]) -> None:
        Path(path).write_text("".join(f"{s}\n" for s in self.symbols), encoding="utf-8")


@dataclass(frozen=True, eq=False)
class Posterior:
    """Per-frame probabilities, one row per frame."""

    frames: np.ndarray

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        object.__setattr__(self, "frames", frames)
        if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] < 2:
            raise StrkitError(f"Posterior must be a non-empty 2-D array, got shape {frames.shape}")
        if frames.shape[0] > CropSpec().max_chars:
            raise StrkitError(f"Posterior has {frames.shape[0]} frames, limit is {CropSpec().max_chars}")
        if not np.all(np.isfinite(frames)) or frames.min() < 0 or frames.max() > 1:
            raise StrkitError("Posterior entries must be probabilities in [0, 1]")
        sums = frames.sum(axis=1)
        worst = int(np.argmax(np.abs(sums - 1.0)))
        if abs(sums[worst] - 1.0) > ROW_SUM_TOLERANCE:
            raise StrkitError(f"Posterior row {worst} sums to {sums[worst]:.8f}, expected 1")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    def check_alphabet(self, alphabet: Alphabet) -> None:
        if self.frames.shape[1] != alphabet.columns:
            raise StrkitError(
                f"Posterior has {self.frames.shape[1]} columns, alphabet needs {alphabet.columns} "
                f"({len(alphabet.symbols)} symbols + blank)"
            )


@dataclass(frozen=True)
class DecodeResult:
    text: str
    score: float


@dataclass(frozen=True, eq=False)
class CropTransform:
    """2x3 affine map from the image frame to the crop frame."""

    matrix: np.ndarray

    def apply(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return pts @ self.matrix[:, :2].T + self.matrix[:, 2]

    def inverse(self) -> "CropTransform":
        linear = self.matrix[:, :2]
        if abs(np.linalg.det(linear)) < 1e-300:
            raise StrkitError("Crop transform is singular")
        inv = np.linalg.inv(linear)
        return CropTransform(np.hstack([inv, (-inv @ self.matrix[:, 2])[:, None]]))


def build_alphabet(corpus: Iterable[str], k: int) -> Alphabet:
    """The k most frequent non-whitespace characters; ties by codepoint."""
    if k < 1:
        raise StrkitError(f"Alphabet size must be at least 1, got {k}")
    counts = Counter(ch for text in corpus for ch in text if not ch.isspace())
    if not counts:
        raise StrkitError("empty corpus")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], ord(kv[0])))
    return Alphabet(tuple(symbol for symbol, _ in ranked[:k]))


def crop_transform(box: RotatedBox, spec: Optional[CropSpec] = None) -> CropTransform:
    """Affine map removing the box rotation and scaling it onto the crop.

    Corners go, in order, to (0, 0), (width, 0), (width, height), (0, height).
    """
    spec = spec or CropSpec.from_config()
    if box.is_degenerate:
        raise StrkitError(f"Cannot build a crop for degenerate box {box}")

    c, s = math.cos(box.angle), math.sin(box.angle)
    sx, sy = spec.width / box.w, spec.height / box.h
    a, b = sx * c, sx * s
    d, e = -sy * s, sy * c
    tx = spec.width / 2 - (a * box.cx + b * box.cy)
    ty = spec.height / 2 - (d * box.cx + e * box.cy)
    return CropTransform(np.array([[a, b, tx], [d, e, ty]], dtype=np.float64))


def ctc_greedy_decode(p: Posterior, a: Alphabet) -> str:
    """Argmax per frame (lowest index on ties), collapse repeats, drop blanks."""
    p.check_alphabet(a)
    best = np.argmax(p.frames, axis=1)
    out = []
    previous = None
    for label in best.tolist():
        if label != previous and label != a.blank_index:
            out.append(a.symbols[label])
        previous = label
    return "".join(out)


def best_path_score(p: Posterior) -> float:
    """Probability of the single most likely frame path."""
    return float(np.prod(p.frames.max(axis=1)))


def _rank_key(item):
    prefix, (pb, pnb) = item
    return (-(pb + pnb), len(prefix), prefix)


def ctc_beam_decode(p: Posterior, a: Alphabet, beam: int) -> DecodeResult:
    """Prefix beam search over labelings; score is the summed path probability.

    With a beam at least as wide as the number of distinct prefixes this is
    exact. Ties go to the shorter, then lexicographically smaller, labeling.
    """
    p.check_alphabet(a)
    if beam < 1:
        raise StrkitError(f"Beam width must be at least 1, got {beam}")

    blank = a.blank_index
    n_symbols = len(a.symbols)
    beams: Dict[Tuple[int, ...], Tuple[float, float]] = {(): (1.0, 0.0)}

    for row in p.frames.tolist():
        scores = defaultdict(lambda: [0.0, 0.0])
        p_blank = row[blank]
        for prefix, (pb, pnb) in beams.items():
            total = pb + pnb
            scores[prefix][0] += total * p_blank
            last = prefix[-1] if prefix else None
            for label in range(n_symbols):
                pc = row[label]
                if pc == 0.0:
                    continue
                extended = prefix + (label,)
                if label == last:
                    scores[prefix][1] += pnb * pc
                    scores[extended][1] += pb * pc
                else:
                    scores[extended][1] += total * pc

        ranked = sorted(scores.items(), key=_rank_key)
        if len(ranked) > beam:
            logger.debug("Beam pruned %d of %d prefixes", len(ranked) - beam, len(ranked))
        beams = {prefix: (pb, pnb) for prefix, (pb, pnb) in ranked[:beam]}

    prefix, (pb, pnb) = min(beams.items(), key=_rank_key)
    return DecodeResult(text="".join(a.symbols[k] for k in prefix), score=pb + pnb)
