import json
import math

import numpy as np
import pytest

from conftest import word
from tools.errors import ErrorCode, SchemaError
from tools.geometry import AxisRect, RotatedBox
from tools.reading_order_tool import Paragraph, ReadingOrderTool
from tools.recognition_tool import Posterior
from tools.schemas import (
    ImageInfo,
    dumps_canonical,
    format_path,
    paragraphs_file,
    parse_crops,
    parse_gesture,
    parse_paragraphs,
    parse_posterior,
    parse_scenario,
    parse_words,
    posterior_bytes,
    read_posterior,
    serialize,
    words_file,
    write_posterior,
)

MINIMAL = {
    "schema_version": 1,
    "image": {"id": "img", "width": 640, "height": 480},
    "words": [{"text": "EXIT", "box": {"cx": 100.0, "cy": 50.0, "w": 80.0, "h": 20.0, "angle_deg": 0.0}}],
}


def edited(**changes):
    doc = json.loads(json.dumps(MINIMAL))
    for path, value in changes.items():
        target = doc
        keys = path.split("__")
        for key in keys[:-1]:
            target = target[int(key)] if key.isdigit() else target[key]
        target[keys[-1]] = value
    return json.dumps(doc)


def rejected(parse, data):
    with pytest.raises(SchemaError) as info:
        parse(data)
    return info.value


class TestParseWords:
    def test_minimal_file(self):
        parsed = parse_words(json.dumps(MINIMAL).encode("utf-8"))
        (w,) = parsed.to_words()
        assert (w.text, w.box.cx, w.box.w, w.confidence, w.of_interest) == ("EXIT", 100.0, 80.0, 1.0, True)

    def test_degrees_become_radians(self):
        w = parse_words(edited(words__0__box__angle_deg=90.0)).to_words()[0]
        assert w.box.angle == pytest.approx(math.pi / 2)

    def test_missing_text(self):
        doc = json.loads(json.dumps(MINIMAL))
        del doc["words"][0]["text"]
        err = rejected(parse_words, json.dumps(doc))
        assert err.code is ErrorCode.SCHEMA_VIOLATION
        assert err.path == "words[0].text"
        assert str(err).startswith("schema_violation at words[0].text:")

    def test_unknown_field(self):
        err = rejected(parse_words, edited(words__0__colour="red"))
        assert err.code is ErrorCode.SCHEMA_VIOLATION
        assert err.path == "words[0].colour"

    def test_wrong_version(self):
        assert rejected(parse_words, edited(schema_version=2)).code is ErrorCode.SCHEMA_VIOLATION

    def test_negative_width(self):
        err = rejected(parse_words, edited(words__0__box__w=-1.0))
        assert err.code is ErrorCode.INVARIANT_VIOLATION
        assert err.path == "words[0].box.w"

    @pytest.mark.parametrize("field", ["w", "h"])
    def test_zero_size_box(self, field):
        err = rejected(parse_words, edited(**{f"words__0__box__{field}": 0.0}))
        assert err.code is ErrorCode.INVARIANT_VIOLATION
        assert err.path == f"words[0].box.{field}"

    def test_not_a_number(self):
        data = edited().replace('"cx": 100.0', '"cx": NaN')
        assert rejected(parse_words, data).code is ErrorCode.INVARIANT_VIOLATION

    def test_padded_text(self):
        assert rejected(parse_words, edited(words__0__text=" EXIT")).code is ErrorCode.INVARIANT_VIOLATION

    def test_image_size(self):
        assert rejected(parse_words, edited(image__width=0)).code is ErrorCode.INVARIANT_VIOLATION

    def test_malformed_json(self):
        assert rejected(parse_words, b'{"schema_version": 1,').code is ErrorCode.MALFORMED_JSON
        assert rejected(parse_words, b"\xff\xfe").code is ErrorCode.MALFORMED_JSON

    def test_round_trip_is_canonical(self):
        parsed = parse_words(edited(words__0__confidence=0.5))
        assert dumps_canonical(parse_words(dumps_canonical(parsed))) == dumps_canonical(parsed)
        assert serialize(parsed)["words"][0]["confidence"] == 0.5

    def test_sample_file(self, sign_words_path):
        assert len(parse_words(sign_words_path.read_bytes()).words) == 8


class TestCanonicalJson:
    def test_layout(self):
        assert dumps_canonical({"b": 1.5, "a": [1, "x", None, True]}) == (
            '{\n  "a": [\n    1,\n    "x",\n    null,\n    true\n  ],\n  "b": 1.500000\n}\n'
        )

    def test_negative_zero_and_empty(self):
        assert dumps_canonical({"z": -0.0, "e": [], "d": {}}) == '{\n  "d": {},\n  "e": [],\n  "z": 0.000000\n}\n'

    def test_non_ascii_kept(self):
        assert dumps_canonical("tienda ñ") == '"tienda ñ"\n'

    def test_rejects_infinity(self):
        with pytest.raises(ValueError):
            dumps_canonical({"x": float("inf")})


class TestParagraphs:
    def test_written_file_reads_back(self, sign_words_path):
        parsed = parse_words(sign_words_path.read_bytes())
        paragraphs = ReadingOrderTool().reconstruct(parsed.to_words())
        text = dumps_canonical(paragraphs_file(parsed.image, paragraphs))
        back = parse_paragraphs(text).to_paragraphs()
        assert [p.text for p in back] == [p.text for p in paragraphs]
        r, s = back[0].rect, paragraphs[0].rect
        assert (r.top, r.left, r.height, r.width) == pytest.approx((s.top, s.left, s.height, s.width), abs=1e-6)
        assert back[0].center.x == pytest.approx(1260.0)

    def test_empty_paragraph(self):
        doc = {
            "schema_version": 1,
            "image": {"id": "i", "width": 10, "height": 10},
            "paragraphs": [
                {
                    "words": [],
                    "rect": {"top": 0, "left": 0, "height": 1, "width": 1},
                    "rbox": {"cx": 0, "cy": 0, "w": 1, "h": 1},
                }
            ],
        }
        err = rejected(parse_paragraphs, json.dumps(doc))
        assert err.path == "paragraphs[0].words"

    def test_of_interest_only_written_when_false(self):
        image = ImageInfo(id="i", width=10, height=10)
        data = serialize(words_file(image, [word("a", 1, 1, 1, 1), word("b", 2, 2, 1, 1, of_interest=False)]))
        assert "of_interest" not in data["words"][0]
        assert data["words"][1]["of_interest"] is False

    def test_paragraph_words_keep_order(self):
        words = (word("second", 50, 5, 10, 10), word("first", 5, 5, 10, 10))
        p = Paragraph(words=words, rect=AxisRect(0, 0, 10, 55), rbox=RotatedBox(27.5, 5, 55, 10))
        image = ImageInfo(id="i", width=100, height=100)
        back = parse_paragraphs(dumps_canonical(paragraphs_file(image, [p]))).to_paragraphs()
        assert back[0].text == "second first"

    def test_rotated_paragraphs_read_back(self):
        c, s = math.cos(math.pi / 6), math.sin(math.pi / 6)
        words = [
            word(f"w{k}", 3000.123457 + 45 * k * c, 811.987654 + 45 * k * s, 40, 20, math.pi / 6) for k in range(5)
        ]
        paragraphs = ReadingOrderTool().reconstruct(words)
        image = ImageInfo(id="i", width=4000, height=3000)
        back = parse_paragraphs(dumps_canonical(paragraphs_file(image, paragraphs))).to_paragraphs()
        assert [p.text for p in back] == [p.text for p in paragraphs]

    @staticmethod
    def single_word(rect, rbox):
        return json.dumps(
            {
                "schema_version": 1,
                "image": {"id": "i", "width": 100, "height": 100},
                "paragraphs": [
                    {
                        "words": [{"text": "a", "box": {"cx": 5, "cy": 5, "w": 10, "h": 10}}],
                        "rect": dict(zip(("top", "left", "height", "width"), rect)),
                        "rbox": dict(zip(("cx", "cy", "w", "h"), rbox)),
                    }
                ],
            }
        )

    def test_consistent_bounds_accepted(self):
        assert len(parse_paragraphs(self.single_word((0, 0, 10, 10), (5, 5, 10, 10))).paragraphs) == 1

    def test_rect_must_bound_rbox(self):
        err = rejected(parse_paragraphs, self.single_word((0, 0, 10, 12), (5, 5, 10, 10)))
        assert err.code is ErrorCode.INVARIANT_VIOLATION
        assert err.path == "paragraphs[0]"
        assert "axis-aligned bound" in err.message

    def test_rbox_must_enclose_words(self):
        err = rejected(parse_paragraphs, self.single_word((0, 1, 10, 10), (6, 5, 10, 10)))
        assert err.code is ErrorCode.INVARIANT_VIOLATION
        assert err.path == "paragraphs[0]"
        assert "does not enclose word 'a'" in err.message


class TestGestureAndCrops:
    def test_gesture(self):
        g = parse_gesture('{"last_joint": {"x": 1, "y": 2}, "tip": {"x": 3, "y": 2}}').to_gesture()
        assert g.direction == (2.0, 0.0)

    def test_gesture_points_must_differ(self):
        err = rejected(parse_gesture, '{"last_joint": {"x": 1, "y": 2}, "tip": {"x": 1, "y": 2}}')
        assert err.code is ErrorCode.INVARIANT_VIOLATION

    def test_crop_outside_image(self):
        doc = {
            "schema_version": 1,
            "crops": [
                {"image": {"id": "a", "width": 100, "height": 100}, "rect": {"top": 50, "left": 0, "height": 60, "width": 10}}
            ],
        }
        err = rejected(parse_crops, json.dumps(doc))
        assert err.code is ErrorCode.INVARIANT_VIOLATION
        assert err.path == "crops[0]"

    def test_crops_by_image(self):
        doc = {
            "schema_version": 1,
            "method": "center",
            "crops": [
                {"image": {"id": "a", "width": 100, "height": 100}, "rect": {"top": 25, "left": 25, "height": 50, "width": 50}}
            ],
        }
        crops = parse_crops(json.dumps(doc))
        assert crops.method == "center"
        assert crops.to_crops()["a"].rect == AxisRect(25, 25, 50, 50)


class TestScenario:
    def scenario(self, *stages):
        return json.dumps({"schema_version": 1, "stages": list(stages)})

    def test_unknown_dependency(self):
        data = self.scenario({"name": "mmllm", "latency": {"fixed": 1}, "depends_on": ["ghost"]})
        err = rejected(parse_scenario, data)
        assert err.code is ErrorCode.INVARIANT_VIOLATION
        assert "ghost" in err.message

    def test_latency_needs_one_model(self):
        data = self.scenario({"name": "mmllm", "latency": {"fixed": 1, "per_word": {"ms_per_word": 1}}})
        assert rejected(parse_scenario, data).code is ErrorCode.INVARIANT_VIOLATION
        assert rejected(parse_scenario, self.scenario({"name": "mmllm", "latency": {}})).path == "stages[0].latency"

    def test_unknown_distribution(self):
        data = self.scenario({"name": "mmllm", "latency": {"distribution": {"kind": "nope"}}})
        assert rejected(parse_scenario, data).path == "stages[0].latency.distribution.kind"

    def test_per_mode_entries(self):
        data = self.scenario(
            {"name": "mmllm", "latency": {"cpu": {"fixed": 80}, "ha": {"fixed": 10}}, "energy_mwh": {"cpu": 2, "ha": 1}}
        )
        s = parse_scenario(data).to_scenario(mode="cpu")
        assert s.stage("mmllm").latency_ms(s) == 80.0
        assert s.word_count == 100

    def test_nested_modes_rejected(self):
        data = self.scenario({"name": "mmllm", "latency": {"cpu": {"ha": {"fixed": 1}}}})
        assert rejected(parse_scenario, data).code is ErrorCode.INVARIANT_VIOLATION

    def test_presets_parse(self, ha_preset, cpu_preset):
        assert parse_scenario(ha_preset.read_bytes()).mode == "ha"
        assert len(parse_scenario(cpu_preset.read_bytes()).stages) == 8


def posterior(frames=40, cols=3):
    p = np.full((frames, cols), 0.1 / (cols - 1))
    p[:, -1] = 0.9
    return Posterior(p)


class TestPosterior:
    def test_json_round_trip(self, tmp_path):
        path = tmp_path / "p.json"
        write_posterior(posterior(), path)
        assert np.allclose(read_posterior(path).frames, posterior().frames, atol=1e-6)

    def test_binary_round_trip(self, tmp_path):
        path = tmp_path / "p.bin"
        write_posterior(posterior(), path, binary=True)
        assert path.read_bytes()[:4] == b"CTCP"
        assert np.allclose(read_posterior(path).frames, posterior().frames, atol=1e-6)

    def test_strict_frame_count(self):
        data = posterior_bytes(posterior(frames=12))
        err = rejected(parse_posterior, data)
        assert err.code is ErrorCode.INVARIANT_VIOLATION
        assert "expected 40 frames" in err.message
        assert parse_posterior(data, strict=False).frames.shape == (12, 3)

    def test_truncated_binary(self):
        data = posterior_bytes(posterior(), binary=True)
        assert rejected(parse_posterior, data[:6]).code is ErrorCode.SCHEMA_VIOLATION
        assert "header promises" in rejected(parse_posterior, data[:-4]).message

    def test_ragged_rows(self):
        frames = [[0.1, 0.1, 0.8]] * 39 + [[0.5, 0.5]]
        err = rejected(parse_posterior, json.dumps({"schema_version": 1, "frames": frames}))
        assert err.code is ErrorCode.SCHEMA_VIOLATION
        assert err.path == "frames[39]"

    def test_rows_must_sum_to_one(self):
        data = json.dumps({"schema_version": 1, "frames": [[0.5, 0.1, 0.1]]})
        assert rejected(lambda d: parse_posterior(d, strict=False), data).code is ErrorCode.INVARIANT_VIOLATION


def test_format_path():
    assert format_path(("words", 0, "box", "w")) == "words[0].box.w"
    assert format_path(()) == ""
