import logging
import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT))

import config  # noqa: E402
from tools.geometry import RotatedBox  # noqa: E402
from tools.reading_order_tool import Word  # noqa: E402

GOLDENS = Path(__file__).parent / "goldens"
SAMPLES = ROOT / "data" / "samples"
PRESETS = ROOT / "data" / "presets"
REFERENCE = ROOT / "data" / "reference"


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: large synthetic layouts, deselect with -m 'not slow'")


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)


@pytest.fixture
def sign_words_path():
    return SAMPLES / "sign_words.json"


@pytest.fixture
def ha_preset():
    return PRESETS / "table6_ha.json"


@pytest.fixture
def cpu_preset():
    return PRESETS / "table6_cpu.json"


@pytest.fixture
def golden():
    def read(name: str) -> str:
        return (GOLDENS / name).read_text(encoding="utf-8")

    return read


@pytest.fixture(autouse=True)
def restore_parameters():
    """Tests may tweak the config dictionaries; put them back afterwards."""
    sections = [
        config.GROUPING_PARAMETERS,
        config.CROP_PARAMETERS,
        config.ROI_PARAMETERS,
        config.EVALUATION_PARAMETERS,
        config.SIMULATION_PARAMETERS,
    ]
    saved = [dict(s) for s in sections]
    yield
    for section, values in zip(sections, saved):
        section.clear()
        section.update(values)


def word(text, cx, cy, w, h, angle=0.0, **kwargs):
    return Word(text=text, box=RotatedBox(cx, cy, w, h, angle), **kwargs)


@pytest.fixture(autouse=True)
def drop_log_handlers():
    """The CLI installs a stderr handler; drop it so it never outlives a captured stream."""
    yield
    root = logging.getLogger()
    for handler in [h for h in root.handlers if getattr(h, "_strkit", False)]:
        root.removeHandler(handler)
