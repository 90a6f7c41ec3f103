"""
strkit
Command-line entry point for the scene-text pipeline tools
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import pandas as pd
import yaml

# Add the project root to the Python path
sys.path.insert(0, str(Path(__file__).parent))

import config
from tools.errors import ErrorCode, SchemaError, StrkitError
from tools.evaluation_tool import MatchMode, NormalizationPolicy, evaluate_corpus, wer_by_height
from tools.prompt_tool import PromptKind, PromptVariant, build_prompt
from tools.reading_order_tool import GroupingParams, IouMode, ReadingOrderTool
from tools.recognition_tool import Alphabet, best_path_score, ctc_beam_decode, ctc_greedy_decode
from tools.roi_tool import center_crop, pointed_targets, recall_report
from tools.schemas import (
    dumps_canonical,
    image_info,
    load_scenario,
    paragraphs_file,
    parse_crops,
    parse_gesture,
    parse_paragraphs,
    parse_words,
    read_posterior,
)
from tools.simulation_tool import (
    STR_BRANCH,
    TRANSFER_BRANCH,
    energy_ratio,
    format_ratio,
    simulate,
    speedup,
    str_latency_hidden,
)

logger = logging.getLogger("strkit")

DESCRIPTIONS_FILE = Path(__file__).parent / "data/descriptions/command_descriptions.json"
FORMATS = ("table", "json", "csv")


def _load_descriptions() -> Dict[str, Any]:
    """Load subcommand help from JSON file"""
    with open(DESCRIPTIONS_FILE, "r", encoding="utf-8") as f:
        return json.load(f)


def _write(text: str, output: Optional[str]) -> None:
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _render(frame: pd.DataFrame, fmt: str) -> str:
    if fmt == "csv":
        return frame.to_csv(index=False)
    if fmt == "json":
        return dumps_canonical(json.loads(frame.to_json(orient="records", double_precision=15)))
    return frame.to_string(index=False) + "\n"


def _read_words_files(paths: Sequence[str]) -> Dict[str, Any]:
    files = {}
    for path in paths:
        model = parse_words(Path(path).read_bytes())
        if model.image.id in files:
            message = f"image id '{model.image.id}' appears in more than one file"
            raise SchemaError(ErrorCode.INVARIANT_VIOLATION, message, "image.id")
        files[model.image.id] = model
    return files


def _image_size(text: str) -> Tuple[int, int]:
    try:
        width, height = (int(part) for part in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got '{text}'")
    if width <= 0 or height <= 0:
        raise argparse.ArgumentTypeError(f"image size must be positive, got '{text}'")
    return width, height


def _baseline(text: str) -> Tuple[int, int]:
    kind, _, size = text.partition(":")
    if kind != "center" or not size:
        raise argparse.ArgumentTypeError(f"expected center:WxH, got '{text}'")
    return _image_size(size)


def _cmd_group(args: argparse.Namespace) -> int:
    model = parse_words(Path(args.words).read_bytes())
    params = GroupingParams.from_config(
        r_v=args.r_v, r_h=args.r_h, t=args.t, iou_mode=args.iou_mode, line_tolerance=args.line_tolerance
    )
    paragraphs = ReadingOrderTool(params).reconstruct(model.to_words())
    _write(dumps_canonical(paragraphs_file(model.image, paragraphs)), args.output)
    return 0


def _decode_one(path: str, alphabet: Alphabet, args: argparse.Namespace) -> Dict[str, Any]:
    posterior = read_posterior(path, strict=not args.any_frames)
    if args.beam:
        result = ctc_beam_decode(posterior, alphabet, args.beam)
        return {"text": result.text, "score": result.score}
    return {"text": ctc_greedy_decode(posterior, alphabet), "score": best_path_score(posterior)}


def _cmd_decode(args: argparse.Namespace) -> int:
    if args.beam < 0:
        raise StrkitError(f"Beam width must be non-negative, got {args.beam}")
    alphabet = Alphabet.load(args.alphabet)
    if len(args.posterior) == 1:
        report = _decode_one(args.posterior[0], alphabet, args)
    else:
        report = [{"posterior": path, **_decode_one(path, alphabet, args)} for path in args.posterior]
    _write(dumps_canonical(report), args.output)
    return 0


def _cmd_eval_wer(args: argparse.Namespace) -> int:
    gt_files = _read_words_files(args.gt)
    pred_files = _read_words_files(args.pred)
    unknown = sorted(set(pred_files) - set(gt_files))
    if unknown:
        raise StrkitError(f"Predictions for unknown image id(s): {', '.join(unknown)}")

    policy = NormalizationPolicy.from_config(
        strip_punctuation=args.strip_punct or None,
        min_height_px=args.min_height,
        case_insensitive=args.ignore_case or None,
    )
    ids = list(gt_files)
    corpus = [(gt_files[i].to_words(), pred_files[i].to_words() if i in pred_files else []) for i in ids]
    options = {"policy": policy, "iou_threshold": args.iou, "mode": args.matching}

    if args.by_height:
        frame = wer_by_height(corpus, **options)
    else:
        total, per_image = evaluate_corpus(corpus, **options)
        rows = [{"image": i, **bd.as_dict()} for i, bd in zip(ids, per_image)] if args.per_image else []
        rows.append({"image": "ALL", **total.as_dict()})
        frame = pd.DataFrame(rows)
    _write(_render(frame, args.format), args.output)
    return 0


def _cmd_eval_roi(args: argparse.Namespace) -> int:
    gt_files = _read_words_files(args.gt)
    methods: Dict[str, List] = {}

    baseline = args.baseline or tuple(config.ROI_PARAMETERS["center_crop"])
    width, height = baseline
    methods[f"center:{width}x{height}"] = [
        (model.to_words(), center_crop(image_info(model), baseline)) for model in gt_files.values()
    ]
    for path in args.crops or []:
        crops_model = parse_crops(Path(path).read_bytes())
        crops = crops_model.to_crops()
        missing = [i for i in gt_files if i not in crops]
        if missing:
            raise StrkitError(f"Method '{crops_model.method}' has no crop for image(s) {', '.join(missing)}")
        methods[crops_model.method] = [(model.to_words(), crops[i]) for i, model in gt_files.items()]

    frame = recall_report(methods, args.min_area_frac)
    _write(_render(frame, args.format), args.output)
    return 0


def _summary(scenario, result) -> Dict[str, Any]:
    summary = {
        "scenario": scenario.name,
        "mode": result.mode.value,
        "e2e_ms": result.e2e_ms,
        "critical_path": list(result.critical_path),
        "energy_mwh": result.energy_mwh,
        "within_budget": result.within_budget(),
        "branch_finish_ms": result.branch_finish,
    }
    branches = scenario.branches()
    if STR_BRANCH in branches and TRANSFER_BRANCH in branches:
        hiding = str_latency_hidden(scenario)
        summary["str_hidden"] = hiding.hidden
        summary["slack_ms"] = hiding.slack_ms
    return summary


def _cmd_simulate(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario, mode=args.mode, word_count=args.words)
    result = simulate(scenario)
    report = _summary(scenario, result)

    if args.compare:
        other = load_scenario(args.compare, mode=None, word_count=args.words)
        other_result = simulate(other)
        branch = STR_BRANCH if STR_BRANCH in scenario.branches() and STR_BRANCH in other.branches() else None
        report["compare"] = {"scenario": other.name}
        try:
            ratio = speedup(other_result, result, branch)
        except StrkitError as exc:
            logger.warning("No speedup for %s: %s", scenario.name, exc)
        else:
            report["compare"].update(speedup=ratio, speedup_label=format_ratio(ratio))
        if result.energy_mwh > 0:
            e_ratio = energy_ratio(other_result, result)
            report["compare"].update(energy_ratio=e_ratio, energy_label=format_ratio(e_ratio))

    if args.trace:
        events = [
            {"stage": ev.stage, "branch": ev.branch, "start_ms": ev.start_ms, "end_ms": ev.end_ms}
            for ev in result.trace
        ]
        Path(args.trace).write_text(dumps_canonical({"schema_version": 1, "events": events}), encoding="utf-8")

    _write(dumps_canonical(report), args.output)
    return 0


def _cmd_prompt(args: argparse.Namespace) -> int:
    model = parse_paragraphs(Path(args.paragraphs).read_bytes())
    paragraphs = model.to_paragraphs()
    kind = PromptKind.from_cli(args.variant)
    size = args.image_size or (image_info(model) if kind is PromptKind.WITH_STR_POSITIONS else None)

    targets = None
    if args.gesture:
        gesture = parse_gesture(Path(args.gesture).read_bytes()).to_gesture()
        words = [w for p in paragraphs for w in p.words]
        targets = pointed_targets(gesture, words, paragraphs)

    payload = build_prompt(PromptVariant(kind, size), paragraphs, args.query, targets)
    _write(payload.text + "\n", args.output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    descriptions = _load_descriptions()
    parser = argparse.ArgumentParser(prog="strkit", description="Scene-text pipeline tools")
    parser.add_argument("--config", help="YAML file overriding config.py parameters (or STRKIT_CONFIG)")
    parser.add_argument("--log-level", choices=sorted(config.LOG_LEVELS), help="Overrides STRKIT_LOG")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    def command(name: str, handler) -> Tuple[argparse.ArgumentParser, Dict[str, str]]:
        info = descriptions[name]
        p = sub.add_parser(name, help=info["description"], description=info["description"])
        p.set_defaults(handler=handler)
        return p, info["parameters"]

    p, h = command("group", _cmd_group)
    p.add_argument("words", help=h["words"])
    p.add_argument("--rv", dest="r_v", type=float, help=h["r_v"])
    p.add_argument("--rh", dest="r_h", type=float, help=h["r_h"])
    p.add_argument("--iou-threshold", dest="t", type=float, help=h["t"])
    p.add_argument("--iou-mode", choices=[m.value for m in IouMode], help=h["iou_mode"])
    p.add_argument("--line-tolerance", type=float, help=h["line_tolerance"])
    p.add_argument("--output", "-o")

    p, h = command("decode", _cmd_decode)
    p.add_argument("posterior", nargs="+", help=h["posterior"])
    p.add_argument("--alphabet", required=True, help=h["alphabet"])
    p.add_argument("--beam", type=int, default=0, help=h["beam"])
    p.add_argument("--any-frames", action="store_true", help=h["any_frames"])
    p.add_argument("--output", "-o")

    p, h = command("eval-wer", _cmd_eval_wer)
    p.add_argument("--gt", nargs="+", required=True, help=h["gt"])
    p.add_argument("--pred", nargs="+", required=True, help=h["pred"])
    p.add_argument("--iou", type=float, help=h["iou"])
    p.add_argument("--min-height", type=float, help=h["min_height"])
    p.add_argument("--strip-punct", action="store_true", help=h["strip_punct"])
    p.add_argument("--ignore-case", action="store_true", help=h["ignore_case"])
    p.add_argument("--matching", choices=[m.value for m in MatchMode], help=h["matching"])
    p.add_argument("--per-image", action="store_true", help=h["per_image"])
    p.add_argument("--by-height", action="store_true", help=h["by_height"])
    p.add_argument("--format", choices=FORMATS, default="table", help=h["format"])
    p.add_argument("--output", "-o")

    p, h = command("eval-roi", _cmd_eval_roi)
    p.add_argument("--gt", nargs="+", required=True, help=h["gt"])
    p.add_argument("--crops", nargs="*", help=h["crops"])
    p.add_argument("--min-area-frac", type=float, help=h["min_area_frac"])
    p.add_argument("--baseline", type=_baseline, help=h["baseline"])
    p.add_argument("--format", choices=FORMATS, default="table", help=h["format"])
    p.add_argument("--output", "-o")

    p, h = command("simulate", _cmd_simulate)
    p.add_argument("--scenario", required=True, help=h["scenario"])
    p.add_argument("--mode", choices=["cpu", "ha"], help=h["mode"])
    p.add_argument("--words", type=int, help=h["words"])
    p.add_argument("--trace", help=h["trace"])
    p.add_argument("--compare", help=h["compare"])
    p.add_argument("--output", "-o")

    p, h = command("prompt", _cmd_prompt)
    p.add_argument("--variant", choices=["plain", "str", "str-pos"], required=True, help=h["variant"])
    p.add_argument("--paragraphs", required=True, help=h["paragraphs"])
    p.add_argument("--query", required=True, help=h["query"])
    p.add_argument("--image-size", type=_image_size, help=h["image_size"])
    p.add_argument("--gesture", help=h["gesture"])
    p.add_argument("--output", "-o")
    return parser


def _report(code: str, message: str, path: Optional[str] = None) -> None:
    where = f" at {path}" if path else ""
    sys.stderr.write(f"strkit: error: {code}{where}: {message}\n")


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand; 0 on success, 1 on runtime errors, 2 on usage or schema errors."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2

    config.configure_logging(args.log_level)
    try:
        config.apply_overrides(args.config)
    except (ValueError, OSError, yaml.YAMLError) as exc:
        _report("config_error", str(exc))
        return 2

    try:
        return args.handler(args)
    except SchemaError as exc:
        _report(exc.code.value, exc.message, exc.path)
        return 2
    except (StrkitError, OSError) as exc:
        logger.debug("Command %s failed", args.command, exc_info=True)
        _report("runtime_error", str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(cli_main())
