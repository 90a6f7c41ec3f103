"""Prompt Tool - Multimodal Model Inputs

Builds the text sent to the cloud multimodal model next to the thumbnail: the
bare user query, the query with the recognized transcript, or the query with
the transcript and paragraph positions. A pointing gesture adds a sentence
naming what the user points at.
"""

import logging
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from typing import Optional, Sequence, Tuple

from tools.errors import StrkitError
from tools.reading_order_tool import Paragraph
from tools.roi_tool import PointedTargets

logger = logging.getLogger(__name__)

TRANSCRIPT_PREAMBLE = (
    "Here is a transcription of the recognized text in the image, which may contain misspelled words. "
)
POSITIONS_PREAMBLE = (
    "I have included the coordinates of the text within the image. "
    "The coordinates (0,0) is indicative of the top-left corner of the image and "
    "({width}, {height}) is indicative of the bottom right corner of the image. "
    "For example, the tuple (zzzz, 10, 20) means the paragraph zzzz is centered at the point (10, 20) "
    "within the image. Here is a transcription of the recognized text in the image according to this "
    "coordinate system. It may contain misspelled words. "
)
QUESTION = "My question is {query}"
POINTING = " The user is pointing at: {words}. Nearest paragraph: {paragraph}."


class PromptKind(Enum):
    MMLLM_ONLY = "mmllm_only"
    WITH_STR = "with_str"
    WITH_STR_POSITIONS = "with_str_positions"

    @classmethod
    def from_cli(cls, name: str) -> "PromptKind":
        aliases = {"plain": cls.MMLLM_ONLY, "str": cls.WITH_STR, "str-pos": cls.WITH_STR_POSITIONS}
        if name in aliases:
            return aliases[name]
        return cls(name)


@dataclass(frozen=True)
class PromptVariant:
    kind: PromptKind
    image_size: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", PromptKind(self.kind))
        if self.image_size is not None:
            width, height = self.image_size
            if width <= 0 or height <= 0:
                raise StrkitError(f"Image size must be positive, got {width}x{height}")
        elif self.kind is PromptKind.WITH_STR_POSITIONS:
            raise StrkitError("The positions prompt needs the image size")


@dataclass(frozen=True)
class PromptPayload:
    text: str
    paragraphs_used: int

    def __post_init__(self):
        if not self.text:
            raise StrkitError("Prompt text must be non-empty")


def paragraph_transcript(paragraphs: Sequence[Paragraph]) -> str:
    """Paragraph texts joined by single spaces, in the given order."""
    return " ".join(p.text for p in paragraphs)


def _pixel(value: float, limit: int) -> int:
    rounded = int(Decimal(repr(value)).quantize(Decimal(1), rounding=ROUND_HALF_UP))
    return min(max(rounded, 0), limit)


def _position_tuples(paragraphs: Sequence[Paragraph], width: int, height: int) -> str:
    return " ".join(
        f"({p.text}, {_pixel(p.center.x, width)}, {_pixel(p.center.y, height)})" for p in paragraphs
    )


def _pointing_sentence(targets: PointedTargets) -> str:
    if targets.empty:
        return ""
    words = ", ".join(w.text for w in targets.words) or "none"
    paragraph = targets.paragraphs[0].text if targets.paragraphs else "none"
    return POINTING.format(words=words, paragraph=paragraph)


def build_prompt(
    variant: PromptVariant,
    paragraphs: Sequence[Paragraph],
    user_query: str,
    gesture_targets: Optional[PointedTargets] = None,
) -> PromptPayload:
    if not user_query:
        raise StrkitError("User query must be non-empty")

    if variant.kind is PromptKind.MMLLM_ONLY:
        text, used = user_query, 0
    elif variant.kind is PromptKind.WITH_STR:
        text = f"{TRANSCRIPT_PREAMBLE}[{paragraph_transcript(paragraphs)}]. {QUESTION.format(query=user_query)}"
        used = len(paragraphs)
    else:
        width, height = variant.image_size
        preamble = POSITIONS_PREAMBLE.format(width=width, height=height)
        text = f"{preamble}[{_position_tuples(paragraphs, width, height)}]. {QUESTION.format(query=user_query)}"
        used = len(paragraphs)

    if gesture_targets is not None:
        text += _pointing_sentence(gesture_targets)

    logger.debug("Built %s prompt with %d paragraphs", variant.kind.value, used)
    return PromptPayload(text=text, paragraphs_used=used)
