import logging

import pytest

import config
from tools.reading_order_tool import GroupingParams


def write_yaml(tmp_path, text):
    path = tmp_path / "overrides.yaml"
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestOverrides:
    def test_values_merged(self, tmp_path):
        path = write_yaml(tmp_path, "grouping:\n  r_v: 0.25\nroi:\n  cone_deg: 15\n")
        overrides = config.apply_overrides(path)
        assert overrides == {"grouping": {"r_v": 0.25}, "roi": {"cone_deg": 15}}
        assert config.GROUPING_PARAMETERS["r_v"] == 0.25
        assert config.GROUPING_PARAMETERS["r_h"] == 1.0
        assert GroupingParams.from_config().r_v == 0.25

    def test_no_path(self, monkeypatch):
        monkeypatch.setattr(config, "CONFIG_PATH", None)
        assert config.apply_overrides() == {}

    def test_path_from_environment_setting(self, tmp_path, monkeypatch):
        monkeypatch.setattr(config, "CONFIG_PATH", write_yaml(tmp_path, "evaluation:\n  iou_threshold: 0.7\n"))
        config.apply_overrides()
        assert config.EVALUATION_PARAMETERS["iou_threshold"] == 0.7

    def test_empty_file(self, tmp_path):
        assert config.apply_overrides(write_yaml(tmp_path, "")) == {}

    @pytest.mark.parametrize(
        "text,message",
        [
            ("colours:\n  red: 1\n", "Unknown config section 'colours'"),
            ("grouping:\n  radius: 2\n", "Unknown config key 'grouping.radius'"),
            ("- 1\n- 2\n", "must contain a mapping"),
            ("grouping: 5\n", "Config section 'grouping' must be a mapping"),
            ("grouping:\n  t: abc\n", "Config key 'grouping.t' expects a number"),
            ("evaluation:\n  strip_punctuation: 1\n", "Config key 'evaluation.strip_punctuation' expects bool"),
            ("crop:\n  height: 48.5\n", "Config key 'crop.height' expects int"),
            ("roi:\n  k_words: true\n", "Config key 'roi.k_words' expects int"),
            ("grouping:\n  iou_mode: 3\n", "Config key 'grouping.iou_mode' expects str"),
        ],
    )
    def test_rejected(self, tmp_path, text, message):
        with pytest.raises(ValueError, match=message):
            config.apply_overrides(write_yaml(tmp_path, text))

    def test_ints_accepted_for_floats(self, tmp_path):
        config.apply_overrides(write_yaml(tmp_path, "grouping:\n  r_v: 1\nevaluation:\n  min_height_px: 12\n"))
        assert config.GROUPING_PARAMETERS["r_v"] == 1.0
        assert isinstance(config.GROUPING_PARAMETERS["r_v"], float)
        assert isinstance(config.EVALUATION_PARAMETERS["min_height_px"], float)

    def test_nothing_merged_on_error(self, tmp_path):
        with pytest.raises(ValueError):
            config.apply_overrides(write_yaml(tmp_path, "grouping:\n  r_v: 0.25\n  t: abc\n"))
        assert config.GROUPING_PARAMETERS["r_v"] == 0.5

    def test_empty_section(self, tmp_path):
        assert config.apply_overrides(write_yaml(tmp_path, "grouping:\n")) == {"grouping": None}
        assert config.GROUPING_PARAMETERS["r_v"] == 0.5


class TestLogging:
    @pytest.fixture(autouse=True)
    def keep_root_level(self):
        root = logging.getLogger()
        level = root.level
        yield
        root.setLevel(level)

    @pytest.mark.parametrize(
        "name,level",
        [("error", logging.ERROR), ("warn", logging.WARNING), ("INFO", logging.INFO), ("debug", logging.DEBUG)],
    )
    def test_levels(self, name, level):
        assert config.configure_logging(name) == level
        assert logging.getLogger().level == level

    def test_unknown_level_falls_back(self):
        assert config.configure_logging("chatty") == logging.WARNING
        assert logging.getLogger().level == logging.WARNING

    def test_single_handler(self):
        config.configure_logging("warn")
        config.configure_logging("debug")
        handlers = [h for h in logging.getLogger().handlers if getattr(h, "_strkit", False)]
        assert len(handlers) == 1
