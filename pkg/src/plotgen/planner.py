"""Stage-by-stage plot generation: premise, setting, characters one by one,
then a breadth-first two-level outline with multi-candidate selection at
every step."""

from __future__ import annotations

import datetime as _dt
import random
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Optional, Sequence

from . import prompts
from .backend import (
    Backend,
    BackendError,
    CallLedger,
    GenerationRequest,
    RateLimiter,
    chat_generate,
)
from .config import PipelineConfig
from .model import Character, OutlineSection, PlotDocument, split_item_tail, validate_structure
from .text import is_near_duplicate, sentence_count

CREATIVE_TEMPERATURE = 0.9
STRUCTURAL_TEMPERATURE = 0.3

STAGE_MAX_TOKENS = {
    "premise": 192,
    "setting": 192,
    "character_name": 24,
    "character_portrait": 128,
    "top_outline": 256,
    "sub_outline": 256,
    "annotation": 96,
}

_SENTENCE_BOUNDS = {
    "premise": (1, 3),
    "setting": (1, 3),
    "character_portrait": (1, 1),
}


class StepFailed(Exception):
    def __init__(self, stage: str, message: str) -> None:
        super().__init__(f"{stage}: {message}")
        self.stage = stage


class PipelineFailed(Exception):
    def __init__(self, stage: str, message: str) -> None:
        super().__init__(f"pipeline failed at {stage}: {message}")
        self.stage = stage


class SelectionReason(str, Enum):
    VALID_PARSE = "VALID_PARSE"
    LENGTH_HEURISTIC = "LENGTH_HEURISTIC"
    ONLY_CANDIDATE = "ONLY_CANDIDATE"


@dataclass(frozen=True)
class StepOutcome:
    stage: str
    chosen: str
    candidates: tuple[str, ...]
    selection_reason: SelectionReason
    retries_used: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "stage": self.stage,
            "chosen": self.chosen,
            "candidates": list(self.candidates),
            "selection_reason": self.selection_reason.value,
            "retries_used": self.retries_used,
        }


@dataclass
class RunMeta:
    """Everything about one generation run besides the document itself."""

    seed: int
    valid: bool
    violations: list[str]
    ledger: dict[str, Any]
    outcomes: list[dict[str, Any]]
    counts: dict[str, Any]
    premise_injected: bool
    started_at: str
    finished_at: str

    @property
    def total_calls(self) -> int:
        return int(self.ledger["total_calls"])

    def expected_calls(self) -> int:
        """Closed-form call count for the realized run shape.

        k sampling calls per step over (premise + setting + two calls per
        character + one per top point + one per sub point + retry rounds),
        plus one single-candidate call per outline item when annotating.
        """
        c = self.counts
        k = c["fallback_factor"]
        sub_total = sum(c["sub_points"])
        base = c["premise_steps"] + 1 + 2 * c["characters"] + c["top_points"] + sub_total
        return k * (base + c["retries"]) + c["annotation_calls"]

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "valid": self.valid,
            "violations": self.violations,
            "ledger": self.ledger,
            "outcomes": self.outcomes,
            "counts": self.counts,
            "premise_injected": self.premise_injected,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }


Scorer = Callable[[str], float]


def select_candidate(
    candidates: Sequence[str],
    *,
    existing: Sequence[str] = (),
    sentence_bounds: Optional[tuple[int, int]] = None,
    scorer: Optional[Scorer] = None,
) -> Optional[tuple[int, SelectionReason]]:
    """Pick one candidate: non-empty, not duplicating existing lines, with
    sentence count in bounds when possible, longest otherwise.

    Returns (index, reason) or None when nothing survives the filters.
    ``scorer`` replaces the length tie-break for a learned reranker.
    """
    trimmed = [c.strip() for c in candidates]
    viable = [
        i
        for i, c in enumerate(trimmed)
        if c and not any(is_near_duplicate(c, e) for e in existing)
    ]
    if not viable:
        return None
    rank: Scorer = scorer if scorer is not None else lambda t: float(len(t))
    if len(candidates) == 1:
        return viable[0], SelectionReason.ONLY_CANDIDATE
    if sentence_bounds is not None:
        lo, hi = sentence_bounds
        in_bounds = [i for i in viable if lo <= sentence_count(trimmed[i]) <= hi]
        if in_bounds:
            return max(in_bounds, key=lambda i: rank(trimmed[i])), SelectionReason.VALID_PARSE
        return max(viable, key=lambda i: rank(trimmed[i])), SelectionReason.LENGTH_HEURISTIC
    return max(viable, key=lambda i: rank(trimmed[i])), SelectionReason.VALID_PARSE


def _collapse(text: str) -> str:
    return " ".join(text.split())


def _strip_label(text: str, pattern: str) -> str:
    return re.sub(pattern, "", text.strip(), count=1).strip()


def _is_end_marker(text: str) -> bool:
    collapsed = _collapse(text)
    if not collapsed:
        return True
    if re.match(r"End\b", collapsed):
        return True
    return collapsed.strip(".!?\"' ").casefold() == "the end"


class _Run:
    """Machinery shared by all stages of one generation run."""

    def __init__(
        self,
        backend: Backend,
        cfg: PipelineConfig,
        ledger: CallLedger,
        limiter: Optional[RateLimiter] = None,
        scorer: Optional[Scorer] = None,
    ) -> None:
        self.backend = backend
        self.cfg = cfg
        self.ledger = ledger
        self.limiter = limiter
        self.scorer = scorer
        self.rng = random.Random(cfg.seed)
        self.outcomes: list[StepOutcome] = []
        self.retries = 0

    def sample(self, prompt: str, stage: str, temperature: float) -> list[str]:
        n = self.cfg.candidates_per_step
        req = dict(
            user=prompt, temperature=temperature, max_tokens=STAGE_MAX_TOKENS[stage]
        )
        if self.cfg.sequential_candidates:
            out = []
            for _ in range(n):
                result = chat_generate(
                    self.backend,
                    GenerationRequest(n_candidates=1, **req),
                    stage,
                    self.ledger,
                    limiter=self.limiter,
                )
                out.append(result.candidates[0])
            return out
        result = chat_generate(
            self.backend,
            GenerationRequest(n_candidates=n, **req),
            stage,
            self.ledger,
            limiter=self.limiter,
        )
        return list(result.candidates)

    def step(
        self,
        stage: str,
        prompt: str,
        *,
        temperature: float,
        clean: Callable[[str], str],
        existing: Sequence[str] = (),
        accept: Optional[Callable[[str], bool]] = None,
        allow_fail: bool = False,
    ) -> Optional[tuple[str, StepOutcome]]:
        """Sample-and-select with the configured retry budget.

        ``clean`` maps the raw winning candidate to the stored value;
        ``accept`` can veto a cleaned value (forcing a retry round).  When
        every round fails, raises StepFailed unless ``allow_fail``.

        ``self.retries`` counts every sampling round that produced no
        accepted value, which is exactly the r term of the call-count
        formula.
        """
        bounds = _SENTENCE_BOUNDS.get(stage)
        for attempt in range(self.cfg.max_step_retries + 1):
            candidates = self.sample(prompt, stage, temperature)
            cleaned = [clean(c) for c in candidates]
            pick = select_candidate(
                cleaned, existing=existing, sentence_bounds=bounds, scorer=self.scorer
            )
            if pick is not None:
                idx, reason = pick
                value = cleaned[idx].strip()
                if accept is None or accept(value):
                    outcome = StepOutcome(
                        stage, candidates[idx], tuple(candidates), reason, attempt
                    )
                    self.outcomes.append(outcome)
                    return value, outcome
            self.retries += 1
        if allow_fail:
            return None
        raise StepFailed(stage, f"no usable candidate after {self.cfg.max_step_retries + 1} rounds")


# ---------------------------------------------------------------------------
# Stage operations


def _clean_premise(raw: str) -> str:
    return _collapse(_strip_label(raw, r"^Premise:\s*"))


def _clean_setting(raw: str) -> str:
    text = _strip_label(raw, r"^Settings?:\s*")
    text = _strip_label(text, rf"^{prompts.SETTING_STEM}\s*")
    return _collapse(text)


def _clean_name(raw: str) -> str:
    first_line = raw.strip().split("\n")[0]
    return _collapse(_strip_label(first_line, r"^Full Name:\s*"))


def _clean_point(raw: str) -> str:
    text = raw.strip()
    embedded = re.search(r"\n\s*\d+\.\s", text)
    if embedded:
        text = text[: embedded.start()]
    return _collapse(_strip_label(text, r"^\d+\.\s*"))


def _split_sub_candidate(raw: str) -> list[str]:
    text = _strip_label(raw.strip(), r"^(?:\d+)?[a-z]\.\s*")
    parts = re.split(r"\n\s*(?:\d+)?[a-z]\.\s+", text)
    return [_collapse(p) for p in parts if p.strip()]


def generate_premise(
    backend: Backend,
    cfg: PipelineConfig,
    ledger: Optional[CallLedger] = None,
    limiter: Optional[RateLimiter] = None,
) -> tuple[str, StepOutcome]:
    run = _Run(backend, cfg, ledger or CallLedger(), limiter)
    return _premise_step(run)


def _premise_step(run: _Run) -> tuple[str, StepOutcome]:
    value, outcome = run.step(
        "premise",
        prompts.premise_prompt(),
        temperature=CREATIVE_TEMPERATURE,
        clean=_clean_premise,
    )
    return value, outcome


def generate_setting(
    backend: Backend,
    premise: str,
    cfg: PipelineConfig,
    ledger: Optional[CallLedger] = None,
    limiter: Optional[RateLimiter] = None,
) -> str:
    if not premise.strip():
        raise ValueError("premise must be non-empty")
    run = _Run(backend, cfg, ledger or CallLedger(), limiter)
    return _setting_step(run, premise)


def _setting_step(run: _Run, premise: str) -> str:
    completion, _ = run.step(
        "setting",
        prompts.setting_prompt(premise),
        temperature=CREATIVE_TEMPERATURE,
        clean=_clean_setting,
    )
    return f"{prompts.SETTING_STEM} {completion}"


def generate_characters(
    backend: Backend,
    premise: str,
    setting: str,
    cfg: PipelineConfig,
    ledger: Optional[CallLedger] = None,
    limiter: Optional[RateLimiter] = None,
    rng: Optional[random.Random] = None,
) -> list[Character]:
    run = _Run(backend, cfg, ledger or CallLedger(), limiter)
    if rng is not None:
        run.rng = rng
    return _characters_step(run, premise, setting)


def _characters_step(run: _Run, premise: str, setting: str) -> list[Character]:
    count = run.rng.randint(*run.cfg.char_range)
    characters: list[Character] = []
    for _ in range(count):
        previous = [(c.full_name, c.portrait) for c in characters]
        names = [c.full_name for c in characters]
        name, _ = run.step(
            "character_name",
            prompts.character_name_prompt(premise, setting, previous),
            temperature=STRUCTURAL_TEMPERATURE,
            clean=_clean_name,
            existing=names,
        )

        def clean_portrait(raw: str, name: str = name) -> str:
            text = _strip_label(raw, r"^Character Portrait:\s*")
            text = _strip_label(text, rf"^{re.escape(name)}\s+is\s*")
            return _collapse(text)

        completion, _ = run.step(
            "character_portrait",
            prompts.character_portrait_prompt(premise, setting, previous, name),
            temperature=CREATIVE_TEMPERATURE,
            clean=clean_portrait,
        )
        characters.append(Character(name, f"{name} is {completion}"))
    return characters


def generate_top_outline(
    backend: Backend,
    ctx: prompts.OutlineContext,
    cfg: PipelineConfig,
    ledger: Optional[CallLedger] = None,
    limiter: Optional[RateLimiter] = None,
) -> list[str]:
    run = _Run(backend, cfg, ledger or CallLedger(), limiter)
    return _top_outline_step(run, ctx)


def _top_outline_step(run: _Run, ctx: prompts.OutlineContext) -> list[str]:
    points: list[str] = []
    while len(points) < run.cfg.max_top_points:
        step_ctx = replace(ctx, existing_top_points=tuple(points), current_top_index=0)
        result = run.step(
            "top_outline",
            prompts.top_outline_prompt(step_ctx),
            temperature=CREATIVE_TEMPERATURE,
            clean=_clean_point,
            existing=points,
            allow_fail=bool(points),
        )
        if result is None:
            break  # nothing usable but the outline already has substance
        value, _ = result
        if _is_end_marker(value):
            run.retries += 1  # the stop round produced no outline point
            break
        points.append(value)
    if not points:
        raise StepFailed("top_outline", "no outline points generated")
    return points


def expand_point(
    backend: Backend,
    ctx: prompts.OutlineContext,
    cfg: PipelineConfig,
    ledger: Optional[CallLedger] = None,
    limiter: Optional[RateLimiter] = None,
    rng: Optional[random.Random] = None,
    extra_forbidden: Sequence[str] = (),
) -> list[str]:
    run = _Run(backend, cfg, ledger or CallLedger(), limiter)
    if rng is not None:
        run.rng = rng
    return _expand_point_step(run, ctx, extra_forbidden)


def _expand_point_step(
    run: _Run, ctx: prompts.OutlineContext, extra_forbidden: Sequence[str] = ()
) -> list[str]:
    """Generate the sub-points under ctx.current_top_index.

    Non-final points go through the completion wrapper carrying the demoted
    subsequent points; a sub-point must not echo any of those suffix lines.
    An end-marker reply after at least one sub-point stops the expansion
    early (the short count is the validator's business, not ours).
    """
    target = run.rng.randint(*run.cfg.sub_range)
    subs: list[str] = []
    forbidden_base = list(ctx.existing_top_points) + list(extra_forbidden)
    while len(subs) < target:
        step_ctx = replace(ctx, existing_sub_points_under_current=tuple(subs))
        prefix = prompts.sub_outline_prefix(step_ctx)
        suffix = prompts.sub_outline_suffix(step_ctx)
        prompt = prompts.completion_wrapper(prefix, suffix) if suffix else prefix

        def clean_sub(raw: str) -> str:
            parts = _split_sub_candidate(raw)
            return parts[0] if parts else ""

        value, outcome = run.step(
            "sub_outline",
            prompt,
            temperature=CREATIVE_TEMPERATURE,
            clean=clean_sub,
            existing=forbidden_base + subs,
        )
        if _is_end_marker(value):
            run.retries += 1  # the stop round produced no sub-point
            if subs:
                break
            raise StepFailed("sub_outline", "expansion ended before any sub-point")
        subs.append(value)
        # A candidate carrying a second labeled point contributes it too,
        # as long as the target leaves room and it is not an echo.
        extra_parts = _split_sub_candidate(outcome.chosen)[1:]
        for part in extra_parts:
            if len(subs) >= target:
                break
            if part and not any(
                is_near_duplicate(part, e) for e in forbidden_base + subs
            ):
                subs.append(part)
    return subs


def annotate_items(
    backend: Backend,
    ctx: prompts.OutlineContext,
    item_texts: Sequence[str],
    character_names: Sequence[str],
    cfg: PipelineConfig,
    ledger: Optional[CallLedger] = None,
    limiter: Optional[RateLimiter] = None,
) -> list[tuple[Optional[str], tuple[str, ...]]]:
    """One (scene, mentioned characters) pair per item text, in order.

    Failures degrade to absent annotations; unknown character names are
    dropped.  Makes zero calls when cfg.annotate_scenes is off.
    """
    if not cfg.annotate_scenes:
        return [(None, ()) for _ in item_texts]
    ledger = ledger if ledger is not None else CallLedger()
    known = set(character_names)
    annotations: list[tuple[Optional[str], tuple[str, ...]]] = []
    for text in item_texts:
        try:
            result = chat_generate(
                backend,
                GenerationRequest(
                    user=prompts.scene_annotation_prompt(ctx, text),
                    temperature=STRUCTURAL_TEMPERATURE,
                    max_tokens=STAGE_MAX_TOKENS["annotation"],
                    n_candidates=1,
                ),
                "annotation",
                ledger,
                limiter=limiter,
            )
            raw = result.candidates[0].strip().split("\n")[0]
            _, scene, mentioned = split_item_tail(raw)
            kept = tuple(m for m in mentioned if m in known)
            annotations.append((scene, kept))
        except BackendError:
            annotations.append((None, ()))
    return annotations


def generate_plot(
    backend: Backend,
    cfg: PipelineConfig,
    *,
    premise: Optional[str] = None,
    ledger: Optional[CallLedger] = None,
    limiter: Optional[RateLimiter] = None,
    scorer: Optional[Scorer] = None,
) -> tuple[PlotDocument, RunMeta]:
    """Run the full pipeline and return the document plus run metadata.

    A structurally bad document is returned with ``meta.valid == False``
    rather than discarded; corpus filtering happens downstream.  With
    ``premise`` given, the premise stage is bypassed and the text injected.
    """
    ledger = ledger if ledger is not None else CallLedger()
    run = _Run(backend, cfg, ledger, limiter, scorer)
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    try:
        if premise is None:
            premise_text, _ = _premise_step(run)
            premise_steps = 1
        else:
            premise_text = _collapse(premise)
            if not premise_text:
                raise StepFailed("premise", "injected premise is empty")
            premise_steps = 0
        setting = _setting_step(run, premise_text)
        characters = _characters_step(run, premise_text, setting)
        block = prompts.characters_block([(c.full_name, c.portrait) for c in characters])
        base_ctx = prompts.OutlineContext(premise_text, setting, block)
        tops = _top_outline_step(run, base_ctx)

        subs_per_top: list[list[str]] = []
        prior_subs: list[str] = []
        for i in range(1, len(tops) + 1):
            ctx = replace(base_ctx, existing_top_points=tuple(tops), current_top_index=i)
            subs = _expand_point_step(run, ctx, extra_forbidden=prior_subs)
            subs_per_top.append(subs)
            prior_subs.extend(subs)
    except StepFailed as exc:
        raise PipelineFailed(exc.stage, str(exc)) from exc

    item_texts = []
    for i, top in enumerate(tops):
        item_texts.append(top)
        item_texts.extend(subs_per_top[i])
    outline_ctx = replace(base_ctx, existing_top_points=tuple(tops))
    names = [c.full_name for c in characters]
    annotation_calls_before = ledger.per_stage_calls.get("annotation", 0)
    annos = annotate_items(backend, outline_ctx, item_texts, names, cfg, ledger, limiter)
    annotation_calls = ledger.per_stage_calls.get("annotation", 0) - annotation_calls_before

    outline: list[OutlineSection] = []
    cursor = 0
    for i, top in enumerate(tops, start=1):
        scene, mentioned = annos[cursor]
        cursor += 1
        children = []
        for j, sub in enumerate(subs_per_top[i - 1]):
            s_scene, s_mentioned = annos[cursor]
            cursor += 1
            children.append(
                OutlineSection(f"{i}{chr(ord('a') + j)}", sub, s_scene, s_mentioned)
            )
        outline.append(OutlineSection(str(i), top, scene, mentioned, tuple(children)))

    doc = PlotDocument(premise_text, setting, tuple(characters), tuple(outline))
    report = validate_structure(doc, cfg)
    finished = _dt.datetime.now(_dt.timezone.utc).isoformat()
    meta = RunMeta(
        seed=cfg.seed,
        valid=report.valid,
        violations=[v.code.value for v in report.violations],
        ledger=ledger.snapshot(),
        outcomes=[o.to_dict() for o in run.outcomes],
        counts={
            "premise_steps": premise_steps,
            "characters": len(characters),
            "top_points": len(tops),
            "sub_points": [len(s) for s in subs_per_top],
            "retries": run.retries,
            "fallback_factor": cfg.candidates_per_step if cfg.sequential_candidates else 1,
            "annotation_calls": annotation_calls,
        },
        premise_injected=premise is not None,
        started_at=started,
        finished_at=finished,
    )
    return doc, meta
