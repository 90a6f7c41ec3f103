"""
strkit configuration

Default parameters for every tool, environment loading and logging setup.
Values can be overridden from a YAML file named by STRKIT_CONFIG (or the
--config flag of the CLI).
"""

import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from dotenv import load_dotenv

load_dotenv()

LOG_LEVEL = os.getenv("STRKIT_LOG", "warn")
CONFIG_PATH = os.getenv("STRKIT_CONFIG")

LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}

# Grouping defaults are not published; chosen so that words one space apart
# on a line and adjacent lines of a paragraph merge on synthetic layouts.
GROUPING_PARAMETERS = {
    "r_v": 0.5,
    "r_h": 1.0,
    "t": 0.01,
    "iou_mode": "rotated",
    "line_tolerance": 0.5,
}

CROP_PARAMETERS = {
    "height": 48,
    "width": 320,
    "char_width": 8,
    "alphabet_size": 150,
}

ROI_PARAMETERS = {
    "min_area_frac": 0.5,
    "cone_deg": 30.0,
    "k_words": 3,
    "k_paragraphs": 1,
    "center_crop": [1500, 2000],
}

EVALUATION_PARAMETERS = {
    "iou_threshold": 0.5,
    "min_height_px": 8.0,
    "strip_punctuation": False,
    "case_insensitive": False,
    "matching": "greedy",
    "height_buckets": [15.0, 120.0],
}

# Scenario defaults used when a scenario file leaves them out.
SIMULATION_PARAMETERS = {
    "word_count": 100,
    "image_bytes_full": 3_000_000,
    "image_bytes_thumb": 150_000,
    "e2e_budget_ms": 5000.0,
    "join_stage": "mmllm",
}

_SECTIONS = {
    "grouping": GROUPING_PARAMETERS,
    "crop": CROP_PARAMETERS,
    "roi": ROI_PARAMETERS,
    "evaluation": EVALUATION_PARAMETERS,
    "simulation": SIMULATION_PARAMETERS,
}


def _checked(section: str, key: str, value: Any, default: Any) -> Any:
    """Override value in the type of its default; ints are accepted for floats."""
    name = f"{section}.{key}"
    if isinstance(default, bool) or isinstance(value, bool):
        if not (isinstance(default, bool) and isinstance(value, bool)):
            raise ValueError(f"Config key '{name}' expects {type(default).__name__}, got {value!r}")
        return value
    if isinstance(default, float):
        if not isinstance(value, (int, float)):
            raise ValueError(f"Config key '{name}' expects a number, got {value!r}")
        return float(value)
    if not isinstance(value, type(default)):
        raise ValueError(f"Config key '{name}' expects {type(default).__name__}, got {value!r}")
    return value


def apply_overrides(path: Optional[str] = None) -> Dict[str, Any]:
    """Merge a YAML overrides file into the parameter dictionaries.

    Returns the parsed overrides. Unknown sections or keys and values of the
    wrong type raise ValueError; nothing is merged then.
    """
    path = path or CONFIG_PATH
    if not path:
        return {}

    with open(Path(path), "r", encoding="utf-8") as f:
        overrides = yaml.safe_load(f) or {}

    if not isinstance(overrides, dict):
        raise ValueError(f"Config file {path} must contain a mapping")

    updates = []
    for section, values in overrides.items():
        if section not in _SECTIONS:
            raise ValueError(f"Unknown config section '{section}'")
        if values is None:
            continue
        if not isinstance(values, dict):
            raise ValueError(f"Config section '{section}' must be a mapping, got {values!r}")
        target = _SECTIONS[section]
        for key, value in values.items():
            if key not in target:
                raise ValueError(f"Unknown config key '{section}.{key}'")
            updates.append((target, key, _checked(section, key, value, target[key])))

    for target, key, value in updates:
        target[key] = value
    return overrides


def configure_logging(level: Optional[str] = None) -> int:
    """Install a stderr handler at the STRKIT_LOG level and return it."""
    name = (level or LOG_LEVEL or "warn").lower()
    resolved = LOG_LEVELS.get(name)

    root = logging.getLogger()
    if not any(getattr(h, "_strkit", False) for h in root.handlers):
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        handler._strkit = True
        root.addHandler(handler)

    root.setLevel(resolved if resolved is not None else logging.WARNING)
    if resolved is None:
        logging.getLogger(__name__).warning("Unknown STRKIT_LOG level '%s', using warn", name)
        resolved = logging.WARNING
    return resolved
