"""Human preference-labeling campaign: task assignment, validated and
durable submissions, A/B-only preference export, and label statistics."""

from __future__ import annotations

import datetime as _dt
import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional

from .dataset import CHOICE_LABELS, PreferencePair, corpus_stats, read_jsonl
from .questions import CHOICE_QUESTION_IDS, MIN_EXPLANATION_WORDS, Q2_PROMPT, QUESTION_TEXTS
from .text import word_count

QUESTION_ORDER = ("Q1", "Q2", "Q3", "Q4", "Q5", "Q6")


class ValidationError(ValueError):
    def __init__(self, code: str, field_name: str, message: str) -> None:
        super().__init__(message)
        self.code = code
        self.field = field_name

    def to_dict(self) -> dict[str, str]:
        return {"field": self.field, "code": self.code, "message": str(self)}


class DuplicateError(ValueError):
    """The (pair, annotator) combination was already submitted."""


@dataclass(frozen=True)
class AnnotationTask:
    pair_id: str
    premise: str
    plot_a_text: str
    plot_b_text: str
    questions: tuple[dict[str, str], ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "pair_id": self.pair_id,
            "premise": self.premise,
            "plot_a_text": self.plot_a_text,
            "plot_b_text": self.plot_b_text,
            "questions": [dict(q) for q in self.questions],
        }


@dataclass(frozen=True)
class AnnotationResponse:
    pair_id: str
    annotator_id: str
    choices: dict[str, str]
    q2_explanation: str
    submitted_at: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "pair_id": self.pair_id,
            "annotator_id": self.annotator_id,
            "choices": dict(self.choices),
            "q2_explanation": self.q2_explanation,
            "submitted_at": self.submitted_at,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "AnnotationResponse":
        return cls(
            pair_id=data["pair_id"],
            annotator_id=data["annotator_id"],
            choices=dict(data["choices"]),
            q2_explanation=data.get("q2_explanation", ""),
            submitted_at=data.get("submitted_at", ""),
        )


def task_questions() -> tuple[dict[str, str], ...]:
    """The six questions in presentation order; Q2 is the explanation box."""
    questions = []
    for qid in QUESTION_ORDER:
        text = Q2_PROMPT if qid == "Q2" else QUESTION_TEXTS[qid]
        kind = "explanation" if qid == "Q2" else "choice"
        questions.append({"id": qid, "text": text, "kind": kind})
    return tuple(questions)


def validate_response(resp: AnnotationResponse) -> list[ValidationError]:
    """All validation problems with a submission (empty list means valid)."""
    errors: list[ValidationError] = []
    if not resp.annotator_id.strip():
        errors.append(ValidationError("MISSING_ANNOTATOR", "annotator_id", "annotator_id is required"))
    for qid in CHOICE_QUESTION_IDS:
        choice = resp.choices.get(qid)
        if choice is None:
            errors.append(ValidationError(
                "MISSING_CHOICE", f"choices.{qid}", f"{qid} must be answered"
            ))
        elif choice not in CHOICE_LABELS:
            errors.append(ValidationError(
                "BAD_CHOICE", f"choices.{qid}",
                f"{qid} must be one of {', '.join(CHOICE_LABELS)}",
            ))
    words = word_count(resp.q2_explanation)
    if words < MIN_EXPLANATION_WORDS:
        errors.append(ValidationError(
            "WORD_COUNT", "q2_explanation",
            f"explanation has {words} words, minimum is {MIN_EXPLANATION_WORDS}",
        ))
    return errors


class AnnotationStore:
    """Append-only response log backed by a JSONL file.

    Submissions are flushed and fsynced before acknowledgment, so they
    survive a service restart; prior entries are never rewritten.
    """

    def __init__(self, path: Path | str) -> None:
        self.path = Path(path)
        self._lock = threading.Lock()
        self._responses: list[AnnotationResponse] = []
        self._index: set[tuple[str, str]] = set()
        if self.path.exists():
            with self.path.open("r", encoding="utf-8") as fp:
                for data in read_jsonl(fp):
                    resp = AnnotationResponse.from_dict(data)
                    self._responses.append(resp)
                    self._index.add((resp.pair_id, resp.annotator_id))

    def __len__(self) -> int:
        with self._lock:
            return len(self._responses)

    def responses(self) -> list[AnnotationResponse]:
        with self._lock:
            return list(self._responses)

    def has(self, pair_id: str, annotator_id: str) -> bool:
        with self._lock:
            return (pair_id, annotator_id) in self._index

    def labels_per_pair(self) -> dict[str, int]:
        with self._lock:
            counts: dict[str, int] = {}
            for resp in self._responses:
                counts[resp.pair_id] = counts.get(resp.pair_id, 0) + 1
            return counts

    def append(self, resp: AnnotationResponse) -> None:
        with self._lock:
            if (resp.pair_id, resp.annotator_id) in self._index:
                raise DuplicateError(
                    f"annotator {resp.annotator_id!r} already labeled pair {resp.pair_id!r}"
                )
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fp:
                fp.write(json.dumps(resp.to_dict(), ensure_ascii=False) + "\n")
                fp.flush()
                os.fsync(fp.fileno())
            self._responses.append(resp)
            self._index.add((resp.pair_id, resp.annotator_id))


class Campaign:
    """One labeling campaign: a pair corpus plus its response store."""

    def __init__(self, pairs: Iterable[PreferencePair], store: AnnotationStore) -> None:
        self.pairs: dict[str, PreferencePair] = {}
        for pair in pairs:
            self.pairs[pair.pair_id] = pair
        self.store = store

    @classmethod
    def from_files(cls, pairs_path: Path | str, store_path: Path | str) -> "Campaign":
        with Path(pairs_path).open("r", encoding="utf-8") as fp:
            pairs = [PreferencePair.from_json_dict(d) for d in read_jsonl(fp)]
        return cls(pairs, AnnotationStore(store_path))

    def next_task(self, annotator_id: str) -> Optional[AnnotationTask]:
        """The unlabeled-by-this-annotator pair with the fewest labels
        overall, ties broken by pair_id; None when the annotator is done."""
        counts = self.store.labels_per_pair()
        candidates = [
            pid for pid in self.pairs if not self.store.has(pid, annotator_id)
        ]
        if not candidates:
            return None
        pid = min(candidates, key=lambda p: (counts.get(p, 0), p))
        pair = self.pairs[pid]
        return AnnotationTask(
            pair_id=pair.pair_id,
            premise=pair.premise,
            plot_a_text=pair.plot_a["text"],
            plot_b_text=pair.plot_b["text"],
            questions=task_questions(),
        )

    def submit(self, resp: AnnotationResponse) -> AnnotationResponse:
        """Validate and durably append; raises ValidationError (first
        problem), DuplicateError, or KeyError for an unknown pair."""
        if resp.pair_id not in self.pairs:
            raise ValidationError("UNKNOWN_PAIR", "pair_id", f"unknown pair {resp.pair_id!r}")
        errors = validate_response(resp)
        if errors:
            raise errors[0]
        stamped = AnnotationResponse(
            pair_id=resp.pair_id,
            annotator_id=resp.annotator_id,
            choices=dict(resp.choices),
            q2_explanation=resp.q2_explanation,
            submitted_at=resp.submitted_at
            or _dt.datetime.now(_dt.timezone.utc).isoformat(),
        )
        self.store.append(stamped)
        return stamped

    def export_preferences(
        self, question: str, include_explanations: bool = False
    ) -> list[dict[str, Any]]:
        """Chosen/rejected rows for one question, keeping only responses
        that picked a single plot (Both/Neither are excluded)."""
        if question not in CHOICE_QUESTION_IDS:
            raise ValueError(f"question must be one of {CHOICE_QUESTION_IDS}")
        rows: list[dict[str, Any]] = []
        for resp in self.store.responses():
            choice = resp.choices.get(question)
            if choice not in ("PLOT_A", "PLOT_B"):
                continue
            pair = self.pairs.get(resp.pair_id)
            if pair is None:
                continue
            chosen, rejected = (
                (pair.plot_a["text"], pair.plot_b["text"])
                if choice == "PLOT_A"
                else (pair.plot_b["text"], pair.plot_a["text"])
            )
            row: dict[str, Any] = {
                "pair_id": pair.pair_id,
                "premise": pair.premise,
                "chosen_text": chosen,
                "rejected_text": rejected,
            }
            if include_explanations:
                row["q2_explanation"] = resp.q2_explanation
            rows.append(row)
        return rows

    def label_stats(self) -> dict[str, Any]:
        return corpus_stats(r.choices for r in self.store.responses())
