"""Single command-line entry point for generation, corpus work, judging,
statistics, and the annotation service."""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterator, Optional, TextIO

from . import prompts
from .annotation import Campaign, ValidationError
from .backend import (
    AuthError,
    Backend,
    BackendConfig,
    FormatError,
    HttpBackend,
    RateLimiter,
    TransportError,
    UnmatchedPromptError,
    scripted_backend,
)
from .config import PipelineConfig
from .dataset import (
    FilterResult,
    JsonlSink,
    PlotRecord,
    batch_generate,
    content_id,
    corpus_stats,
    export_sft,
    filter_plots,
    format_stats_table,
    make_pairs,
    read_jsonl,
)
from .judge import (
    Aspect,
    ComparisonRecord,
    aggregate_winrates,
    format_winrate_table,
    run_comparison,
)
from .model import ParseError, render_plot
from .planner import PipelineFailed, generate_plot
from .dataset import PreferencePair

EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_TRANSPORT = 4
EXIT_INTERNAL = 5

ENV_PREFIX = "PLOTGEN_"

CONFIG_DEFAULTS: dict[str, Any] = {
    "backend": "http",
    "rules": "",
    "base_url": "http://localhost:8000/v1",
    "model": "default-model",
    "api_key_env": "PLOTGEN_API_KEY",
    "requests_per_minute": 60,
    "max_retries": 3,
    "retry_backoff": 1.0,
    "char_min": 3,
    "char_max": 6,
    "max_top_points": 4,
    "sub_min": 3,
    "sub_max": 4,
    "candidates_per_step": 4,
    "max_step_retries": 2,
    "annotate_scenes": True,
    "sequential_candidates": False,
    "seed": 0,
}

_BOOL_KEYS = {"annotate_scenes", "sequential_candidates"}
_INT_KEYS = {
    "requests_per_minute", "max_retries", "char_min", "char_max", "max_top_points",
    "sub_min", "sub_max", "candidates_per_step", "max_step_retries", "seed",
}
_FLOAT_KEYS = {"retry_backoff"}


def _coerce(key: str, value: Any) -> Any:
    if key in _BOOL_KEYS:
        if isinstance(value, bool):
            return value
        return str(value).strip().lower() in ("1", "true", "yes", "on")
    if key in _INT_KEYS:
        return int(value)
    if key in _FLOAT_KEYS:
        return float(value)
    return value


def effective_config(args: argparse.Namespace) -> dict[str, Any]:
    """Merge flags > environment > config file > defaults (flat key set)."""
    merged = dict(CONFIG_DEFAULTS)
    config_path = getattr(args, "config", None)
    if config_path:
        with open(config_path, "r", encoding="utf-8") as fp:
            data = json.load(fp)
        if not isinstance(data, dict):
            raise ValueError("config file must hold a flat JSON object")
        for key, value in data.items():
            if key not in CONFIG_DEFAULTS:
                raise ValueError(f"unknown config key {key!r}")
            merged[key] = _coerce(key, value)
    for key in CONFIG_DEFAULTS:
        env_value = os.environ.get(ENV_PREFIX + key.upper())
        if env_value is not None:
            merged[key] = _coerce(key, env_value)
    for key in CONFIG_DEFAULTS:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            merged[key] = _coerce(key, flag_value)
    if getattr(args, "strict_replication", False):
        merged["annotate_scenes"] = False
    return merged


def pipeline_config(cfg: dict[str, Any]) -> PipelineConfig:
    return PipelineConfig(
        char_range=(cfg["char_min"], cfg["char_max"]),
        max_top_points=cfg["max_top_points"],
        sub_range=(cfg["sub_min"], cfg["sub_max"]),
        candidates_per_step=cfg["candidates_per_step"],
        max_step_retries=cfg["max_step_retries"],
        annotate_scenes=cfg["annotate_scenes"],
        seed=cfg["seed"],
        sequential_candidates=cfg["sequential_candidates"],
    )


def load_rules(path: str) -> list[dict[str, Any]]:
    with open(path, "r", encoding="utf-8") as fp:
        rules = json.load(fp)
    if not isinstance(rules, list):
        raise ValueError("rules file must hold a JSON list of rule objects")
    return rules


def build_backend(cfg: dict[str, Any]):
    """Backend or backend factory per the merged config."""
    if cfg["backend"] == "scripted":
        if not cfg["rules"]:
            raise ValueError("scripted backend requires --rules")
        rules = load_rules(cfg["rules"])
        return lambda: scripted_backend(rules)
    if cfg["backend"] == "http":
        return HttpBackend(BackendConfig(
            base_url=cfg["base_url"],
            model_name=cfg["model"],
            api_key_env=cfg["api_key_env"],
            requests_per_minute=cfg["requests_per_minute"],
            max_retries=cfg["max_retries"],
            retry_backoff=cfg["retry_backoff"],
        ))
    raise ValueError(f"unknown backend {cfg['backend']!r} (expected scripted or http)")


def _single_backend(source) -> Backend:
    return source() if callable(source) else source


def _print_dry_run(cfg: dict[str, Any]) -> None:
    shown = dict(cfg)
    if os.environ.get(cfg["api_key_env"]):
        shown["api_key"] = "<redacted>"
    else:
        shown["api_key"] = ""
    print(json.dumps(shown, indent=2, sort_keys=True))


@contextmanager
def open_input(path: str) -> Iterator[TextIO]:
    if path == "-":
        yield sys.stdin
    else:
        with open(path, "r", encoding="utf-8") as fp:
            yield fp


@contextmanager
def open_output(path: str) -> Iterator[TextIO]:
    if path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8") as fp:
            yield fp


# ---------------------------------------------------------------------------
# Subcommands


def cmd_generate(args: argparse.Namespace) -> int:
    cfg = effective_config(args)
    if args.dry_run:
        _print_dry_run(cfg)
        return 0
    backend = _single_backend(build_backend(cfg))
    doc, meta = generate_plot(backend, pipeline_config(cfg), premise=args.premise)
    print(render_plot(doc))
    print(json.dumps(meta.to_dict(), ensure_ascii=False), file=sys.stderr)
    return 0


def cmd_batch(args: argparse.Namespace) -> int:
    cfg = effective_config(args)
    if args.dry_run:
        _print_dry_run(cfg)
        return 0
    backend = build_backend(cfg)
    with open_output(args.out) as fp:
        sink = JsonlSink(fp)
        summary = batch_generate(
            backend, pipeline_config(cfg), args.n, args.workers, sink,
            source_tag=cfg["model"] if cfg["backend"] == "http" else "scripted",
        )
    print(json.dumps(summary.to_dict()))
    return 0


def _load_records(fp: TextIO) -> list[PlotRecord]:
    records = []
    for data in read_jsonl(fp):
        if "error" in data:
            continue
        records.append(PlotRecord.from_json_dict(data))
    return records


def cmd_filter(args: argparse.Namespace) -> int:
    cfg = effective_config(args)
    with open_input(args.infile) as fp:
        records = _load_records(fp)
    result: FilterResult = filter_plots(records, pipeline_config(cfg))
    with open_output(args.out_kept) as fp:
        kept_sink = JsonlSink(fp)
        for record in result.kept:
            kept_sink.write(record.to_json_dict())
    with open_output(args.out_dropped) as fp:
        dropped_sink = JsonlSink(fp)
        for record in result.dropped:
            dropped_sink.write(record.to_json_dict())
    print(json.dumps(result.to_dict()))
    return 0


def cmd_export_sft(args: argparse.Namespace) -> int:
    with open_input(args.infile) as fp:
        records = _load_records(fp)
    with open_output(args.out) as fp:
        report = export_sft(records, JsonlSink(fp))
    print(json.dumps(report), file=sys.stderr if args.out == "-" else sys.stdout)
    return 0


def cmd_make_pairs(args: argparse.Namespace) -> int:
    cfg = effective_config(args)
    if args.dry_run:
        _print_dry_run(cfg)
        return 0
    with open_input(args.premises) as fp:
        premises = [line.strip() for line in fp if line.strip()]

    def side(spec: str, seed: int):
        kind, _, value = spec.partition(":")
        if kind == "scripted":
            rules = load_rules(value)
            backend = lambda: scripted_backend(rules)  # noqa: E731
            tag = Path(value).stem
        elif kind == "http":
            backend = HttpBackend(BackendConfig(
                base_url=cfg["base_url"], model_name=value or cfg["model"],
                api_key_env=cfg["api_key_env"],
                requests_per_minute=cfg["requests_per_minute"],
                max_retries=cfg["max_retries"], retry_backoff=cfg["retry_backoff"],
            ))
            tag = value or cfg["model"]
        else:
            raise ValueError(f"generator spec must be scripted:PATH or http:MODEL, got {spec!r}")
        base = pipeline_config(cfg)
        side_cfg = PipelineConfig(
            char_range=base.char_range, max_top_points=base.max_top_points,
            sub_range=base.sub_range, candidates_per_step=base.candidates_per_step,
            max_step_retries=base.max_step_retries, annotate_scenes=base.annotate_scenes,
            seed=seed, sequential_candidates=base.sequential_candidates,
        )
        return backend, side_cfg, tag

    gen_a = side(args.gen_a, cfg["seed"])
    gen_b = side(args.gen_b, cfg["seed"] + 1)
    if args.tag_a:
        gen_a = (gen_a[0], gen_a[1], args.tag_a)
    if args.tag_b:
        gen_b = (gen_b[0], gen_b[1], args.tag_b)
    with open_output(args.out) as fp:
        pairs = make_pairs(premises, gen_a, gen_b, JsonlSink(fp))
    print(json.dumps({"pairs": len(pairs)}), file=sys.stderr)
    return 0


def cmd_judge(args: argparse.Namespace) -> int:
    cfg = effective_config(args)
    if args.dry_run:
        _print_dry_run(cfg)
        return 0
    backend = _single_backend(build_backend(cfg))
    aspect = Aspect(args.aspect)
    with open_input(args.pairs) as fp:
        pairs = [PreferencePair.from_json_dict(d) for d in read_jsonl(fp)]
    master = random.Random(cfg["seed"])
    with open_output(args.out) as fp:
        sink = JsonlSink(fp)
        for pair in pairs:
            seed = master.randrange(2**31)
            record = run_comparison(backend, pair, aspect, seed, temperature=args.temperature)
            sink.write(record.to_json_dict())
    return 0


def cmd_aggregate(args: argparse.Namespace) -> int:
    with open_input(args.infile) as fp:
        records = [ComparisonRecord.from_json_dict(d) for d in read_jsonl(fp)]
    rows = aggregate_winrates(records)
    print(format_winrate_table(rows))
    print(json.dumps({"rows": rows}))
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    with open_input(args.annotations) as fp:
        choices = [d.get("choices", {}) for d in read_jsonl(fp)]
    table = corpus_stats(choices)
    print(format_stats_table(table))
    print(json.dumps({"total_responses": len(choices), "questions": table}))
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    from .service import serve

    campaign = Campaign.from_files(args.pairs, args.store)
    serve(campaign, args.port, static_dir=args.static)
    return 0


_FIXTURE_PREMISE = (
    "A lighthouse keeper finds a sealed door at the base of the tower that "
    "was never on any blueprint. Each time it opens, the sea outside changes."
)
_FIXTURE_SETTING = (
    "The story is set in a remote lighthouse on a cold northern coast, "
    "in the present day."
)
_FIXTURE_CHARACTERS = [
    ("Mara Voss", "Mara Voss is the lighthouse keeper, a former cartographer who took the post to disappear."),
    ("Ilya Brandt", "Ilya Brandt is a coast-guard radio operator who checks on Mara weekly and distrusts the sea."),
]
_FIXTURE_POINTS = (
    "Mara finds the sealed door and maps the first impossible coastline.",
    "Ilya notices the charts no longer match any known sea.",
    "The door begins opening on its own at each high tide.",
    "Mara seals the door for good and burns the false charts.",
)


def _fixture_ctx(points: int = 4, current: int = 0, subs: int = 0) -> prompts.OutlineContext:
    return prompts.OutlineContext(
        premise=_FIXTURE_PREMISE,
        setting=_FIXTURE_SETTING,
        characters_block=prompts.characters_block(_FIXTURE_CHARACTERS),
        existing_top_points=_FIXTURE_POINTS[:points],
        current_top_index=current,
        existing_sub_points_under_current=tuple(
            f"Placeholder sub-point {chr(ord('a') + i)} already written." for i in range(subs)
        ),
    )


def _judge_fixture(aspect: str) -> str:
    from .judge import Aspect, build_judge_prompt

    return build_judge_prompt(
        "Premise: Fixture premise A.\n\nSettings: Fixture settings A.",
        "Premise: Fixture premise A.\n\nSettings: Fixture settings B.",
        Aspect(aspect),
    )


def dump_named_prompt(name: str) -> str:
    """Render a named template on the documented fixture inputs."""
    builders = {
        "premise": lambda: prompts.premise_prompt(),
        "setting": lambda: prompts.setting_prompt(_FIXTURE_PREMISE),
        "character-name-first": lambda: prompts.character_name_prompt(
            _FIXTURE_PREMISE, _FIXTURE_SETTING, []
        ),
        "character-name-later": lambda: prompts.character_name_prompt(
            _FIXTURE_PREMISE, _FIXTURE_SETTING, _FIXTURE_CHARACTERS[:1]
        ),
        "character-portrait": lambda: prompts.character_portrait_prompt(
            _FIXTURE_PREMISE, _FIXTURE_SETTING, [], _FIXTURE_CHARACTERS[0][0]
        ),
        "top-outline-first": lambda: prompts.top_outline_prompt(_fixture_ctx(points=0)),
        "top-outline-continue": lambda: prompts.top_outline_prompt(_fixture_ctx(points=2)),
        "sub-outline-prefix-first": lambda: prompts.sub_outline_prefix(_fixture_ctx(current=1)),
        "sub-outline-prefix-continue": lambda: prompts.sub_outline_prefix(
            _fixture_ctx(current=2, subs=1)
        ),
        "sub-outline-suffix": lambda: prompts.sub_outline_suffix(_fixture_ctx(current=1)),
        "completion-wrapper": lambda: prompts.completion_wrapper(
            prompts.sub_outline_prefix(_fixture_ctx(current=1)),
            prompts.sub_outline_suffix(_fixture_ctx(current=1)),
        ),
        "scene-annotation": lambda: prompts.scene_annotation_prompt(
            _fixture_ctx(), _FIXTURE_POINTS[0]
        ),
        "judge-overall": lambda: _judge_fixture("OVERALL"),
        "judge-q4": lambda: _judge_fixture("Q4"),
    }
    if name not in builders:
        raise ValueError(f"unknown template {name!r}; choose from {', '.join(sorted(builders))}")
    return builders[name]()


def cmd_dump_prompt(args: argparse.Namespace) -> int:
    print(dump_named_prompt(args.name))
    return 0


# ---------------------------------------------------------------------------
# Parser


def _add_config_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="flat JSON config file")
    sub.add_argument("--dry-run", action="store_true", help="print effective config and exit")
    sub.add_argument("--strict-replication", action="store_true",
                     help="disable the invented scene-annotation pass")
    sub.add_argument("--backend", choices=["scripted", "http"])
    sub.add_argument("--rules", help="scripted backend rules JSON file")
    sub.add_argument("--base-url", dest="base_url")
    sub.add_argument("--model")
    sub.add_argument("--api-key-env", dest="api_key_env")
    sub.add_argument("--rpm", dest="requests_per_minute", type=int)
    sub.add_argument("--max-retries", dest="max_retries", type=int)
    sub.add_argument("--retry-backoff", dest="retry_backoff", type=float)
    sub.add_argument("--char-min", dest="char_min", type=int)
    sub.add_argument("--char-max", dest="char_max", type=int)
    sub.add_argument("--max-top-points", dest="max_top_points", type=int)
    sub.add_argument("--sub-min", dest="sub_min", type=int)
    sub.add_argument("--sub-max", dest="sub_max", type=int)
    sub.add_argument("--candidates", dest="candidates_per_step", type=int)
    sub.add_argument("--max-step-retries", dest="max_step_retries", type=int)
    sub.add_argument("--annotate-scenes", dest="annotate_scenes", action="store_const", const=True)
    sub.add_argument("--no-annotate-scenes", dest="annotate_scenes", action="store_const", const=False)
    sub.add_argument("--sequential-candidates", dest="sequential_candidates",
                     action="store_const", const=True)
    sub.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plotgen", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("generate", help="generate one plot")
    _add_config_flags(p)
    p.add_argument("--premise", help="inject a fixed premise instead of generating one")
    p.set_defaults(func=cmd_generate)

    p = subs.add_parser("batch", help="generate a plot corpus")
    _add_config_flags(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_batch)

    p = subs.add_parser("filter", help="partition records by structural validity")
    _add_config_flags(p)
    p.add_argument("--in", dest="infile", default="-")
    p.add_argument("--out-kept", default="-")
    p.add_argument("--out-dropped", required=True)
    p.set_defaults(func=cmd_filter)

    p = subs.add_parser("export-sft", help="export valid records as SFT examples")
    p.add_argument("--in", dest="infile", default="-")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_export_sft)

    p = subs.add_parser("make-pairs", help="build same-premise plot pairs")
    _add_config_flags(p)
    p.add_argument("--premises", required=True, help="file of premises, one per line")
    p.add_argument("--gen-a", required=True, help="scripted:PATH or http:MODEL")
    p.add_argument("--gen-b", required=True, help="scripted:PATH or http:MODEL")
    p.add_argument("--tag-a", help="source tag for side A")
    p.add_argument("--tag-b", help="source tag for side B")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_make_pairs)

    p = subs.add_parser("judge", help="run pairwise judge comparisons")
    _add_config_flags(p)
    p.add_argument("--pairs", required=True)
    p.add_argument("--aspect", default="OVERALL",
                   choices=[a.value for a in Aspect])
    p.add_argument("--temperature", type=float, default=0.0,
                   help="judge sampling temperature")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_judge)

    p = subs.add_parser("aggregate", help="aggregate comparison records into win rates")
    p.add_argument("--in", dest="infile", default="-")
    p.set_defaults(func=cmd_aggregate)

    p = subs.add_parser("stats", help="label distribution over annotation responses")
    p.add_argument("--annotations", default="-")
    p.set_defaults(func=cmd_stats)

    p = subs.add_parser("serve", help="serve the annotation campaign")
    p.add_argument("--pairs", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--static", help="directory with the built UI bundle")
    p.set_defaults(func=cmd_serve)

    p = subs.add_parser("dump-prompt", help="print a named prompt template")
    p.add_argument("--name", required=True)
    p.set_defaults(func=cmd_dump_prompt)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (TransportError, AuthError, FormatError) as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except UnmatchedPromptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except PipelineFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except KeyboardInterrupt:
        return 130
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
