"""Small text utilities shared across the pipeline, validation, and services."""

from __future__ import annotations

import re
import string

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)
_SENTENCE_END = re.compile(r"[.!?]+(?=\s|$)")


def word_count(text: str) -> int:
    """Count words by splitting on whitespace runs.

    This is the one word-count definition used everywhere (explanation
    validation on the server, the UI mirrors it); leading/trailing
    whitespace contributes nothing.
    """
    return len(text.split())


def sentence_count(text: str) -> int:
    """Rough sentence count: runs of terminal punctuation followed by a boundary."""
    n = len(_SENTENCE_END.findall(text))
    # Unterminated trailing text still reads as a sentence.
    if n == 0 and text.strip():
        return 1
    tail = _SENTENCE_END.split(text)[-1]
    if tail.strip():
        n += 1
    return n


def normalized_words(text: str) -> list[str]:
    """Case-folded, punctuation-stripped word list for fuzzy comparisons."""
    return [w for w in text.casefold().translate(_PUNCT_TABLE).split() if w]


def jaccard_overlap(a: str, b: str) -> float:
    """Jaccard similarity of the two texts' normalized word sets."""
    wa, wb = set(normalized_words(a)), set(normalized_words(b))
    if not wa and not wb:
        return 1.0
    if not wa or not wb:
        return 0.0
    return len(wa & wb) / len(wa | wb)


def is_near_duplicate(candidate: str, existing: str, threshold: float = 0.8) -> bool:
    """True when two lines are the same after normalization or overlap >= threshold."""
    na, nb = normalized_words(candidate), normalized_words(existing)
    if na == nb:
        return True
    return jaccard_overlap(candidate, existing) >= threshold
