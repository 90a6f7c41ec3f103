"""File formats

Pydantic models for every JSON file the CLI reads or writes, their conversion
to and from the domain types, canonical serialization and the CTC posterior
file (JSON or packed binary).

Validation failures become SchemaError with one of three codes: malformed JSON,
schema violation (shape, types, unknown or missing fields) and invariant
violation (values out of range, non-finite numbers, broken cross-field rules).
"""

import json
import logging
import math
import struct
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from scipy import stats

from tools.errors import ErrorCode, SchemaError, StrkitError
from tools.geometry import AxisRect, Point, RotatedBox, aabb
from tools.reading_order_tool import Paragraph, Word
from tools.recognition_tool import CropSpec, Posterior
from tools.roi_tool import PointingGesture, RoiCrop
from tools.simulation_tool import (
    DistributionLatency,
    ExecutionMode,
    FixedLatency,
    PerWordLatency,
    SimScenario,
    StageCost,
    TransferLatency,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
POSTERIOR_MAGIC = b"CTCP"
_POSTERIOR_HEADER = struct.Struct("<4sHH")
PARAGRAPH_TOLERANCE_PX = 1e-4

_INVARIANT_TYPES = {"value_error", "assertion_error", "finite_number", "too_short", "multiple_of"}


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", allow_inf_nan=False)


class ImageInfo(StrictModel):
    id: str
    width: int = Field(gt=0)
    height: int = Field(gt=0)


class BoxModel(StrictModel):
    cx: float
    cy: float
    w: float = Field(gt=0)
    h: float = Field(gt=0)
    angle_deg: float = 0.0

    def to_box(self) -> RotatedBox:
        return RotatedBox.from_degrees(self.cx, self.cy, self.w, self.h, self.angle_deg)

    @classmethod
    def from_box(cls, box: RotatedBox) -> "BoxModel":
        return cls(cx=box.cx, cy=box.cy, w=box.w, h=box.h, angle_deg=box.angle_deg)


class RectModel(StrictModel):
    top: float
    left: float
    height: float = Field(ge=0)
    width: float = Field(ge=0)

    def to_rect(self) -> AxisRect:
        return AxisRect(top=self.top, left=self.left, height=self.height, width=self.width)

    @classmethod
    def from_rect(cls, rect: AxisRect) -> "RectModel":
        return cls(top=rect.top, left=rect.left, height=rect.height, width=rect.width)


class WordEntry(StrictModel):
    text: str
    box: BoxModel
    confidence: Optional[float] = Field(default=None, ge=0, le=1)
    of_interest: Optional[bool] = None

    @field_validator("text")
    @classmethod
    def _text_is_trimmed(cls, value: str) -> str:
        if not value or value != value.strip():
            raise ValueError("word text must be non-empty without surrounding whitespace")
        return value

    def to_word(self) -> Word:
        return Word(
            text=self.text,
            box=self.box.to_box(),
            confidence=1.0 if self.confidence is None else self.confidence,
            of_interest=True if self.of_interest is None else self.of_interest,
        )

    @classmethod
    def from_word(cls, word: Word) -> "WordEntry":
        fields = {"text": word.text, "box": BoxModel.from_box(word.box), "confidence": word.confidence}
        if not word.of_interest:
            fields["of_interest"] = False
        return cls(**fields)


class WordsFile(StrictModel):
    schema_version: Literal[1]
    image: ImageInfo
    words: List[WordEntry]

    def to_words(self) -> List[Word]:
        return [w.to_word() for w in self.words]


class ParagraphEntry(StrictModel):
    words: List[WordEntry] = Field(min_length=1)
    rect: RectModel
    rbox: BoxModel

    @model_validator(mode="after")
    def _bounds_agree(self) -> "ParagraphEntry":
        rbox = self.rbox.to_box()
        # Slack for the six decimals of written files.
        tol = PARAGRAPH_TOLERANCE_PX + 1e-8 * (rbox.w + rbox.h)
        b, r = aabb(rbox), self.rect
        pairs = zip((r.top, r.left, r.height, r.width), (b.top, b.left, b.height, b.width))
        if any(abs(got - want) > tol for got, want in pairs):
            raise ValueError("rect must be the axis-aligned bound of rbox")
        (ux, uy), (vx, vy) = rbox.axes()
        for w in self.words:
            for x, y in w.box.to_box().polygon():
                dx, dy = x - rbox.cx, y - rbox.cy
                if abs(dx * ux + dy * uy) > rbox.w / 2 + tol or abs(dx * vx + dy * vy) > rbox.h / 2 + tol:
                    raise ValueError(f"rbox does not enclose word '{w.text}'")
        return self

    def to_paragraph(self) -> Paragraph:
        return Paragraph(
            words=tuple(w.to_word() for w in self.words), rect=self.rect.to_rect(), rbox=self.rbox.to_box()
        )


class ParagraphsFile(StrictModel):
    schema_version: Literal[1]
    image: ImageInfo
    paragraphs: List[ParagraphEntry]

    def to_paragraphs(self) -> List[Paragraph]:
        return [p.to_paragraph() for p in self.paragraphs]


class PointModel(StrictModel):
    x: float
    y: float


class GestureFile(StrictModel):
    schema_version: Literal[1] = 1
    last_joint: PointModel
    tip: PointModel

    @model_validator(mode="after")
    def _distinct_points(self) -> "GestureFile":
        if self.last_joint == self.tip:
            raise ValueError("tip and last_joint must differ")
        return self

    def to_gesture(self) -> PointingGesture:
        return PointingGesture(
            last_joint=Point(self.last_joint.x, self.last_joint.y), tip=Point(self.tip.x, self.tip.y)
        )


class CropEntry(StrictModel):
    image: ImageInfo
    rect: RectModel

    @model_validator(mode="after")
    def _inside_image(self) -> "CropEntry":
        r = self.rect
        if r.left < 0 or r.top < 0 or r.left + r.width > self.image.width or r.top + r.height > self.image.height:
            raise ValueError("crop rect must lie within the image")
        return self

    def to_crop(self) -> RoiCrop:
        return RoiCrop(rect=self.rect.to_rect(), source_size=(self.image.width, self.image.height))


class CropsFile(StrictModel):
    schema_version: Literal[1]
    method: str = "roi"
    crops: List[CropEntry]

    def to_crops(self) -> Dict[str, RoiCrop]:
        return {c.image.id: c.to_crop() for c in self.crops}


class PerWordEntry(StrictModel):
    ms_per_word: float = Field(ge=0)
    base_ms: float = Field(default=0.0, ge=0)


class TransferEntry(StrictModel):
    payload: Union[Literal["full", "thumb"], int]
    bandwidth_bytes_per_ms: float = Field(gt=0)
    rtt_ms: float = Field(default=0.0, ge=0)

    @field_validator("payload")
    @classmethod
    def _payload_size(cls, value):
        if isinstance(value, int) and value < 0:
            raise ValueError("payload size must be non-negative")
        return value


class DistributionEntry(StrictModel):
    kind: str
    params: Dict[str, float] = Field(default_factory=dict)
    quantile: float = Field(default=0.5, gt=0, lt=1)

    @field_validator("kind")
    @classmethod
    def _known_distribution(cls, value: str) -> str:
        if not isinstance(getattr(stats, value, None), (stats.rv_continuous, stats.rv_discrete)):
            raise ValueError(f"unknown scipy.stats distribution '{value}'")
        return value


_KINDS = ("fixed", "per_word", "transfer", "distribution")
_MODES = ("cpu", "ha")


class LatencyEntry(StrictModel):
    """Exactly one cost model, or one nested entry per execution mode."""

    fixed: Optional[float] = Field(default=None, ge=0)
    per_word: Optional[PerWordEntry] = None
    transfer: Optional[TransferEntry] = None
    distribution: Optional[DistributionEntry] = None
    cpu: Optional["LatencyEntry"] = None
    ha: Optional["LatencyEntry"] = None

    @model_validator(mode="after")
    def _one_model(self) -> "LatencyEntry":
        kinds = [k for k in _KINDS if getattr(self, k) is not None]
        modes = [m for m in _MODES if getattr(self, m) is not None]
        if modes and kinds:
            raise ValueError("latency mixes per-mode entries with a cost model")
        if not modes and len(kinds) != 1:
            raise ValueError("latency needs exactly one of fixed, per_word, transfer, distribution")
        for m in modes:
            if getattr(self, m).cpu is not None or getattr(self, m).ha is not None:
                raise ValueError("per-mode latency entries cannot nest modes")
        return self

    def to_model(self):
        if self.cpu is not None or self.ha is not None:
            return {ExecutionMode(m): getattr(self, m).to_model() for m in _MODES if getattr(self, m) is not None}
        if self.fixed is not None:
            return FixedLatency(self.fixed)
        if self.per_word is not None:
            return PerWordLatency(self.per_word.ms_per_word, self.per_word.base_ms)
        if self.transfer is not None:
            t = self.transfer
            return TransferLatency(t.payload, t.bandwidth_bytes_per_ms, t.rtt_ms)
        d = self.distribution
        return DistributionLatency(d.kind, dict(d.params), d.quantile)


class StageEntry(StrictModel):
    name: str = Field(min_length=1)
    latency: LatencyEntry
    energy_mwh: Union[float, Dict[Literal["cpu", "ha"], float]] = 0.0
    depends_on: List[str] = Field(default_factory=list)
    branch: Optional[str] = None

    @field_validator("energy_mwh")
    @classmethod
    def _energy_non_negative(cls, value):
        values = value.values() if isinstance(value, dict) else [value]
        if any(v < 0 for v in values):
            raise ValueError("energy must be non-negative")
        return value

    def to_stage(self) -> StageCost:
        energy = self.energy_mwh
        if isinstance(energy, dict):
            energy = {ExecutionMode(k): v for k, v in energy.items()}
        return StageCost(
            name=self.name,
            latency=self.latency.to_model(),
            energy_mwh=energy,
            depends_on=tuple(self.depends_on),
            branch=self.branch,
        )


class ScenarioFile(StrictModel):
    schema_version: Literal[1]
    name: str = "scenario"
    mode: Literal["cpu", "ha", "hardware_accelerated"] = "ha"
    word_count: Optional[int] = Field(default=None, ge=0)
    image_bytes_full: Optional[int] = Field(default=None, ge=0)
    image_bytes_thumb: Optional[int] = Field(default=None, ge=0)
    join_stage: Optional[str] = None
    stages: List[StageEntry] = Field(min_length=1)

    @model_validator(mode="after")
    def _known_dependencies(self) -> "ScenarioFile":
        names = [s.name for s in self.stages]
        if len(set(names)) != len(names):
            raise ValueError("stage names must be unique")
        for s in self.stages:
            missing = [d for d in s.depends_on if d not in names]
            if missing:
                raise ValueError(f"stage '{s.name}' depends on unknown stage(s) {', '.join(missing)}")
        return self

    def to_scenario(self, mode: Optional[str] = None, word_count: Optional[int] = None) -> SimScenario:
        return SimScenario.from_config(
            [s.to_stage() for s in self.stages],
            name=self.name,
            mode=ExecutionMode(mode or self.mode),
            word_count=self.word_count if word_count is None else word_count,
            image_bytes_full=self.image_bytes_full,
            image_bytes_thumb=self.image_bytes_thumb,
            join_stage=self.join_stage,
        )


LatencyEntry.model_rebuild()


class PosteriorFile(StrictModel):
    schema_version: Literal[1]
    frames: List[List[float]] = Field(min_length=1)


def format_path(loc: Sequence[Union[str, int]]) -> str:
    """('words', 0, 'text') -> 'words[0].text'."""
    out = ""
    for part in loc:
        if isinstance(part, int):
            out += f"[{part}]"
        else:
            out += f".{part}" if out else str(part)
    return out


def _classify(error_type: str) -> ErrorCode:
    if error_type in _INVARIANT_TYPES or error_type.startswith(("greater_than", "less_than")):
        return ErrorCode.INVARIANT_VIOLATION
    return ErrorCode.SCHEMA_VIOLATION


def schema_error(exc: ValidationError) -> SchemaError:
    errors = exc.errors()
    first = errors[0]
    message = first["msg"]
    if len(errors) > 1:
        message += f" (and {len(errors) - 1} more)"
    return SchemaError(_classify(first["type"]), message, format_path(first["loc"]) or None)


def parse_model(model: type, data: Union[bytes, str]):
    try:
        raw = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise SchemaError(ErrorCode.MALFORMED_JSON, str(exc)) from exc
    try:
        return model.model_validate(raw)
    except ValidationError as exc:
        raise schema_error(exc) from exc


def parse_words(data: Union[bytes, str]) -> WordsFile:
    return parse_model(WordsFile, data)


def parse_paragraphs(data: Union[bytes, str]) -> ParagraphsFile:
    return parse_model(ParagraphsFile, data)


def parse_gesture(data: Union[bytes, str]) -> GestureFile:
    return parse_model(GestureFile, data)


def parse_crops(data: Union[bytes, str]) -> CropsFile:
    return parse_model(CropsFile, data)


def parse_scenario(data: Union[bytes, str]) -> ScenarioFile:
    return parse_model(ScenarioFile, data)


def load_scenario(path: Union[str, Path], mode: Optional[str] = None, word_count: Optional[int] = None) -> SimScenario:
    return parse_scenario(Path(path).read_bytes()).to_scenario(mode=mode, word_count=word_count)


def serialize(model: BaseModel) -> Dict[str, Any]:
    """Plain JSON data of a parsed file; fields absent from the input stay absent."""
    return model.model_dump(mode="json", exclude_unset=True)


def _format_float(value: float) -> str:
    if not math.isfinite(value):
        raise StrkitError(f"Cannot serialize non-finite number {value!r}")
    text = f"{value:.6f}"
    return "0.000000" if text == "-0.000000" else text


def _emit(value: Any, indent: int) -> str:
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(value, BaseModel):
        value = serialize(value)
    if value is None or isinstance(value, bool):
        return json.dumps(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return _format_float(float(value))
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{inner}{json.dumps(str(k), ensure_ascii=False)}: {_emit(value[k], indent + 1)}" for k in sorted(value)]
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        return "[\n" + ",\n".join(f"{inner}{_emit(v, indent + 1)}" for v in value) + f"\n{pad}]"
    raise StrkitError(f"Cannot serialize {type(value).__name__}")


def dumps_canonical(obj: Any) -> str:
    """Sorted keys, two-space indent, floats with six decimals, trailing newline."""
    return _emit(obj, 0) + "\n"


def words_file(image: ImageInfo, words: Sequence[Word]) -> WordsFile:
    return WordsFile(schema_version=SCHEMA_VERSION, image=image, words=[WordEntry.from_word(w) for w in words])


def paragraphs_file(image: ImageInfo, paragraphs: Sequence[Paragraph]) -> ParagraphsFile:
    entries = [
        ParagraphEntry(
            words=[WordEntry.from_word(w) for w in p.words],
            rect=RectModel.from_rect(p.rect),
            rbox=BoxModel.from_box(p.rbox),
        )
        for p in paragraphs
    ]
    return ParagraphsFile(schema_version=SCHEMA_VERSION, image=image, paragraphs=entries)


def _posterior(frames, strict: bool) -> Posterior:
    expected = CropSpec.from_config().max_chars
    if strict and len(frames) != expected:
        raise SchemaError(ErrorCode.INVARIANT_VIOLATION, f"expected {expected} frames, got {len(frames)}", "frames")
    for i, row in enumerate(frames):
        if len(row) != len(frames[0]):
            message = f"row has {len(row)} values, frame 0 has {len(frames[0])}"
            raise SchemaError(ErrorCode.SCHEMA_VIOLATION, message, f"frames[{i}]")
    try:
        return Posterior(np.asarray(frames, dtype=np.float64))
    except StrkitError as exc:
        raise SchemaError(ErrorCode.INVARIANT_VIOLATION, str(exc), "frames") from exc


def parse_posterior(data: bytes, strict: bool = True) -> Posterior:
    """Posterior from JSON or the packed binary layout, told apart by the magic."""
    if data[:4] == POSTERIOR_MAGIC:
        if len(data) < _POSTERIOR_HEADER.size:
            raise SchemaError(ErrorCode.SCHEMA_VIOLATION, "truncated posterior header")
        _, rows, cols = _POSTERIOR_HEADER.unpack_from(data)
        body = len(data) - _POSTERIOR_HEADER.size
        if body != rows * cols * 4:
            raise SchemaError(
                ErrorCode.SCHEMA_VIOLATION, f"posterior body has {body} bytes, header promises {rows}x{cols} float32"
            )
        frames = np.frombuffer(data, dtype="<f4", offset=_POSTERIOR_HEADER.size).reshape(rows, cols)
        if not np.all(np.isfinite(frames)):
            raise SchemaError(ErrorCode.INVARIANT_VIOLATION, "posterior contains non-finite values", "frames")
        return _posterior(frames.astype(np.float64), strict)
    return _posterior(parse_model(PosteriorFile, data).frames, strict)


def read_posterior(path: Union[str, Path], strict: bool = True) -> Posterior:
    return parse_posterior(Path(path).read_bytes(), strict)


def posterior_bytes(posterior: Posterior, binary: bool = False) -> bytes:
    frames = posterior.frames
    if binary:
        rows, cols = frames.shape
        return _POSTERIOR_HEADER.pack(POSTERIOR_MAGIC, rows, cols) + frames.astype("<f4").tobytes()
    return dumps_canonical({"schema_version": SCHEMA_VERSION, "frames": frames.tolist()}).encode("utf-8")


def write_posterior(posterior: Posterior, path: Union[str, Path], binary: bool = False) -> None:
    Path(path).write_bytes(posterior_bytes(posterior, binary))


def image_info(model: Union[WordsFile, ParagraphsFile]) -> Tuple[int, int]:
    return model.image.width, model.image.height
