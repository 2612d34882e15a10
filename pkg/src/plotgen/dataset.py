"""Corpus tooling: batch generation, structural filtering, SFT export,
same-premise pair construction, and label statistics."""

from __future__ import annotations

import hashlib
import json
import logging
import random
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal, ROUND_HALF_UP
from typing import Any, Callable, IO, Iterable, Optional, Sequence, Union

from .backend import Backend, CallLedger
from .config import PipelineConfig
from .model import (
    ParseError,
    PlotDocument,
    SFT_SEPARATOR,
    parse_plot,
    render_plot,
    split_sft,
    validate_structure,
)
from .planner import PipelineFailed, RunMeta, generate_plot
from .questions import CHOICE_QUESTION_IDS

logger = logging.getLogger(__name__)

CHOICE_LABELS = ("PLOT_A", "PLOT_B", "BOTH", "NEITHER")


def content_id(*parts: object) -> str:
    """Stable short id from content, so parallel runs merge safely."""
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode("utf-8"))
    return digest.hexdigest()[:16]


@dataclass
class PlotRecord:
    id: str
    premise: str
    document: PlotDocument
    raw_text: str
    valid: bool
    violations: list[str]
    meta: dict[str, Any]

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "premise": self.premise,
            "text": self.raw_text,
            "valid": self.valid,
            "violations": self.violations,
            "meta": self.meta,
        }

    @classmethod
    def from_json_dict(cls, data: dict[str, Any]) -> "PlotRecord":
        return cls(
            id=data["id"],
            premise=data["premise"],
            document=parse_plot(data["text"]),
            raw_text=data["text"],
            valid=bool(data["valid"]),
            violations=list(data.get("violations") or []),
            meta=dict(data.get("meta") or {}),
        )


@dataclass(frozen=True)
class PreferencePair:
    pair_id: str
    premise: str
    plot_a: dict[str, str]  # {"source": tag, "text": body}
    plot_b: dict[str, str]

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "pair_id": self.pair_id,
            "premise": self.premise,
            "plot_a": dict(self.plot_a),
            "plot_b": dict(self.plot_b),
        }

    @classmethod
    def from_json_dict(cls, data: dict[str, Any]) -> "PreferencePair":
        return cls(data["pair_id"], data["premise"], dict(data["plot_a"]), dict(data["plot_b"]))


@dataclass(frozen=True)
class SftExample:
    prompt: str
    response: str


class SinkError(Exception):
    """Writing an output record failed; the batch aborts."""


class JsonlSink:
    """Append-only JSONL writer; the one shared mutable resource of a batch."""

    def __init__(self, fp: IO[str]) -> None:
        self._fp = fp
        self._lock = threading.Lock()
        self.lines = 0

    def write(self, obj: dict[str, Any]) -> None:
        line = json.dumps(obj, ensure_ascii=False)
        with self._lock:
            try:
                self._fp.write(line + "\n")
            except OSError as exc:
                raise SinkError(str(exc)) from exc
            self.lines += 1


def read_jsonl(fp: IO[str]) -> Iterable[dict[str, Any]]:
    for line in fp:
        line = line.strip()
        if line:
            yield json.loads(line)


BackendSource = Union[Backend, Callable[[], Backend]]


def _make_backend(source: BackendSource) -> Backend:
    return source() if callable(source) else source


@dataclass
class BatchSummary:
    attempted: int = 0
    succeeded: int = 0
    failed: int = 0
    valid: int = 0
    total_calls: int = 0

    def to_dict(self) -> dict[str, int]:
        return {
            "attempted": self.attempted,
            "succeeded": self.succeeded,
            "failed": self.failed,
            "valid": self.valid,
            "total_calls": self.total_calls,
        }


def make_record(
    doc: PlotDocument, meta: RunMeta, source_tag: str, model_name: str = ""
) -> PlotRecord:
    raw = render_plot(doc)
    return PlotRecord(
        id=content_id(doc.premise, meta.seed, source_tag),
        premise=doc.premise,
        document=doc,
        raw_text=raw,
        valid=meta.valid,
        violations=list(meta.violations),
        meta={
            "model": model_name or source_tag,
            "seed": meta.seed,
            "total_calls": meta.total_calls,
            "started_at": meta.started_at,
            "finished_at": meta.finished_at,
        },
    )


def batch_generate(
    backend: BackendSource,
    cfg: PipelineConfig,
    n: int,
    workers: int,
    out: JsonlSink,
    source_tag: str = "pipeline",
) -> BatchSummary:
    """Schedule exactly n generation attempts across workers.

    Every outcome lands in the sink: successful runs as plot records,
    failures as error entries.  Record ids and contents depend only on the
    per-index seed, so reruns and different worker counts agree.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    summary = BatchSummary()
    lock = threading.Lock()

    def one(index: int) -> None:
        run_cfg = PipelineConfig(
            char_range=cfg.char_range,
            max_top_points=cfg.max_top_points,
            sub_range=cfg.sub_range,
            candidates_per_step=cfg.candidates_per_step,
            max_step_retries=cfg.max_step_retries,
            annotate_scenes=cfg.annotate_scenes,
            seed=cfg.seed + index,
            sequential_candidates=cfg.sequential_candidates,
        )
        try:
            doc, meta = generate_plot(_make_backend(backend), run_cfg)
        except PipelineFailed as exc:
            out.write({
                "id": content_id("error", run_cfg.seed, source_tag),
                "error": {"stage": exc.stage, "message": str(exc)},
                "seed": run_cfg.seed,
            })
            with lock:
                summary.failed += 1
            return
        record = make_record(doc, meta, source_tag)
        out.write(record.to_json_dict())
        with lock:
            summary.succeeded += 1
            summary.valid += int(record.valid)
            summary.total_calls += meta.total_calls

    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(one, i) for i in range(n)]
        for fut in futures:
            fut.result()
    summary.attempted = n
    assert summary.attempted == summary.succeeded + summary.failed
    return summary


@dataclass
class FilterResult:
    kept: list[PlotRecord]
    dropped: list[PlotRecord]
    report: dict[str, int]

    def to_dict(self) -> dict[str, Any]:
        return {
            "kept": len(self.kept),
            "dropped": len(self.dropped),
            "report": dict(self.report),
        }


def filter_plots(records: Iterable[PlotRecord], cfg: PipelineConfig) -> FilterResult:
    """Partition records by revalidation; the partition is exact and the
    report counts each violation code across dropped records."""
    kept: list[PlotRecord] = []
    dropped: list[PlotRecord] = []
    report: dict[str, int] = {}
    for record in records:
        result = validate_structure(record.document, cfg)
        if result.valid:
            kept.append(record)
        else:
            dropped.append(record)
            for code in sorted({v.code.value for v in result.violations}):
                report[code] = report.get(code, 0) + 1
    return FilterResult(kept, dropped, report)


def export_sft(records: Iterable[PlotRecord], out: JsonlSink) -> dict[str, int]:
    """One SFT line per structurally valid record; invalid ones are skipped
    and reported, never exported."""
    written = 0
    skipped = 0
    for record in records:
        if not record.valid:
            skipped += 1
            logger.warning("skipping invalid record %s", record.id)
            continue
        prompt, response = split_sft(record.document)
        out.write({"prompt": prompt, "response": response})
        written += 1
    return {"written": written, "skipped": skipped}


def make_pairs(
    premises: Sequence[str],
    gen_a: tuple[BackendSource, PipelineConfig, str],
    gen_b: tuple[BackendSource, PipelineConfig, str],
    out: Optional[JsonlSink] = None,
) -> list[PreferencePair]:
    """One plot from each generator per premise, premise injected directly.

    Pair texts are the premise-less plot bodies; the shared premise is the
    pair's own field.  Duplicate premises are dropped with a warning, and
    per-pair generation failures are logged and skipped.
    """
    if not premises:
        raise ValueError("premises must be non-empty")
    backend_a, cfg_a, tag_a = gen_a
    backend_b, cfg_b, tag_b = gen_b
    seen: set[str] = set()
    pairs: list[PreferencePair] = []
    for premise in premises:
        premise = premise.strip()
        if not premise:
            continue
        if premise in seen:
            logger.warning("duplicate premise skipped: %.60s", premise)
            continue
        seen.add(premise)
        try:
            doc_a, _ = generate_plot(_make_backend(backend_a), cfg_a, premise=premise)
            doc_b, _ = generate_plot(_make_backend(backend_b), cfg_b, premise=premise)
        except PipelineFailed as exc:
            logger.warning("pair generation failed for premise %.60s: %s", premise, exc)
            continue
        _, body_a = split_sft(doc_a)
        _, body_b = split_sft(doc_b)
        pair = PreferencePair(
            pair_id=content_id(premise, tag_a, tag_b),
            premise=premise,
            plot_a={"source": tag_a, "text": body_a},
            plot_b={"source": tag_b, "text": body_b},
        )
        pairs.append(pair)
        if out is not None:
            out.write(pair.to_json_dict())
    return pairs


def pair_full_text(premise: str, body: str) -> str:
    """Reattach the shared premise to a pair body, giving the normal form."""
    return f"Premise: {premise}{SFT_SEPARATOR}{body}"


def round_half_up(value: float, digits: int = 0) -> float:
    q = Decimal(1).scaleb(-digits)
    return float(Decimal(repr(value)).quantize(q, rounding=ROUND_HALF_UP))


def corpus_stats(choices_per_response: Iterable[dict[str, str]]) -> dict[str, Any]:
    """Per-question counts and integer percentages of A/B/Both/Neither.

    Input items map question ids to one of PLOT_A/PLOT_B/BOTH/NEITHER;
    missing questions simply do not count toward that row.
    """
    counts: dict[str, dict[str, int]] = {
        q: {label: 0 for label in CHOICE_LABELS} for q in CHOICE_QUESTION_IDS
    }
    for choices in choices_per_response:
        for q in CHOICE_QUESTION_IDS:
            label = choices.get(q)
            if label in counts[q]:
                counts[q][label] += 1
    table: dict[str, Any] = {}
    for q in CHOICE_QUESTION_IDS:
        total = sum(counts[q].values())
        percentages = {
            label: int(round_half_up(100.0 * c / total)) if total else 0
            for label, c in counts[q].items()
        }
        table[q] = {"counts": counts[q], "percentages": percentages, "total": total}
    return table


def format_stats_table(table: dict[str, Any]) -> str:
    """Plain-text rendering of the label-distribution table."""
    header = f"{'Aspects':<8}{'Plot A':>8}{'Plot B':>8}{'Both':>8}{'Neither':>8}"
    lines = [header]
    for q in CHOICE_QUESTION_IDS:
        row = table[q]["percentages"]
        lines.append(
            f"{q:<8}{row['PLOT_A']:>7}%{row['PLOT_B']:>7}%{row['BOTH']:>7}%{row['NEITHER']:>7}%"
        )
    return "\n".join(lines)


def split_records(
    records: Sequence[PlotRecord], fraction: float, seed: int
) -> tuple[list[PlotRecord], list[PlotRecord]]:
    """Seeded shuffle-and-cut: first portion has round(fraction * n) records."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must be in [0, 1]")
    shuffled = list(records)
    random.Random(seed).shuffle(shuffled)
    cut = int(round_half_up(fraction * len(shuffled)))
    return shuffled[:cut], shuffled[cut:]
