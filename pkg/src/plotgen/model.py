"""Story-plot document model: parsing, canonical rendering, and structural validation.

A plot document has four sections in fixed order — Premise, Settings,
Characters, Outline — with a two-level outline whose items may carry
trailing ``Scene:`` / ``Characters:`` annotations.  ``parse_plot`` and
``render_plot`` round-trip: parsing canonical text and re-rendering it is
byte-identity, and rendering any valid document and re-parsing recovers an
equal document.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Optional

from .config import PipelineConfig

SUB_INDENT = "    "
SFT_SEPARATOR = "\n\n"

_TOP_LABEL = re.compile(r"^(\d+)\.(?:\s+|$)")
_SUB_LABEL = re.compile(r"^(\d+)([a-z])\.(?:\s+|$)")
_SUB_LABEL_NAME = re.compile(r"\d+[a-z]")


class ParseError(ValueError):
    """Raised on the first structural violation of the plot grammar."""

    def __init__(self, line: int, expected: str) -> None:
        super().__init__(f"line {line}: expected {expected}")
        self.line = line
        self.expected = expected


@dataclass(frozen=True)
class Character:
    full_name: str
    portrait: str


@dataclass(frozen=True)
class OutlineSection:
    """One outline item; ``children`` is non-empty only for top-level items."""

    label: str
    text: str
    scene: Optional[str] = None
    mentioned_characters: tuple[str, ...] = ()
    children: tuple["OutlineSection", ...] = ()

    @property
    def is_sub(self) -> bool:
        return bool(_SUB_LABEL_NAME.fullmatch(self.label))


@dataclass(frozen=True)
class PlotDocument:
    premise: str
    setting: str
    characters: tuple[Character, ...]
    outline: tuple[OutlineSection, ...]

    def to_dict(self) -> dict[str, Any]:
        def section(s: OutlineSection) -> dict[str, Any]:
            return {
                "label": s.label,
                "text": s.text,
                "scene": s.scene,
                "mentioned_characters": list(s.mentioned_characters),
                "children": [section(c) for c in s.children],
            }

        return {
            "premise": self.premise,
            "setting": self.setting,
            "characters": [
                {"full_name": c.full_name, "portrait": c.portrait} for c in self.characters
            ],
            "outline": [section(s) for s in self.outline],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PlotDocument":
        def section(d: dict[str, Any]) -> OutlineSection:
            return OutlineSection(
                label=d["label"],
                text=d["text"],
                scene=d.get("scene"),
                mentioned_characters=tuple(d.get("mentioned_characters") or ()),
                children=tuple(section(c) for c in d.get("children") or ()),
            )

        return cls(
            premise=data["premise"],
            setting=data["setting"],
            characters=tuple(
                Character(c["full_name"], c["portrait"]) for c in data["characters"]
            ),
            outline=tuple(section(s) for s in data["outline"]),
        )


class ViolationCode(str, Enum):
    CHAR_COUNT = "CHAR_COUNT"
    TOP_COUNT = "TOP_COUNT"
    MISSING_TOP = "MISSING_TOP"
    SUB_COUNT = "SUB_COUNT"
    LABEL_GAP = "LABEL_GAP"
    EMPTY_TEXT = "EMPTY_TEXT"
    DUP_CHARACTER = "DUP_CHARACTER"


@dataclass(frozen=True)
class Violation:
    code: ViolationCode
    location: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def valid(self) -> bool:
        return not self.violations

    def codes(self) -> set[ViolationCode]:
        return {v.code for v in self.violations}


# ---------------------------------------------------------------------------
# Parsing


def split_item_tail(body: str) -> tuple[str, Optional[str], tuple[str, ...]]:
    """Split an outline item body into (text, scene, mentioned characters).

    ``Scene:`` / ``Characters:`` are tail annotations; the last occurrence
    wins so item prose containing the tokens earlier is preserved.  An empty
    scene after ``Scene:`` parses as absent.
    """
    mentioned: tuple[str, ...] = ()
    rest = body
    c = rest.rfind("Characters:")
    if c != -1:
        names = rest[c + len("Characters:"):]
        mentioned = tuple(n.strip() for n in names.split(",") if n.strip())
        rest = rest[:c]
    scene: Optional[str] = None
    s = rest.rfind("Scene:")
    if s != -1:
        scene_text = rest[s + len("Scene:"):].strip()
        scene = scene_text or None
        rest = rest[:s]
    return rest.strip(), scene, mentioned


def parse_plot(raw: str) -> PlotDocument:
    """Parse plot text into a ``PlotDocument``.

    The leading ``Premise:`` label is optional (SFT responses are parsed with
    the premise re-attached by the caller); ``Settings:``, ``Characters:``
    and ``Outline:`` headers are required, in that order.  Structural
    problems that are still grammatical (label gaps, orphan sub-points) parse
    fine and are left to ``validate_structure``.
    """
    lines = raw.split("\n")
    n = len(lines)
    i = 0

    def err(line_idx: int, expected: str) -> ParseError:
        return ParseError(line_idx + 1, expected)

    # Premise: everything up to the Settings header.
    premise_lines: list[str] = []
    while i < n and not lines[i].startswith("Settings:"):
        premise_lines.append(lines[i])
        i += 1
    if i >= n:
        raise err(n - 1 if n else 0, "a 'Settings:' section header")
    premise = "\n".join(premise_lines).strip()
    if premise.startswith("Premise:"):
        premise = premise[len("Premise:"):].strip()
    if not premise:
        raise err(0, "non-empty premise text before 'Settings:'")

    # Settings: header line content plus following lines up to Characters.
    setting_lines = [lines[i][len("Settings:"):]]
    i += 1
    while i < n and lines[i].strip() != "Characters:":
        if lines[i].startswith("Characters:"):
            raise err(i, "a bare 'Characters:' header line")
        setting_lines.append(lines[i])
        i += 1
    if i >= n:
        raise err(n - 1, "a 'Characters:' section header")
    setting = "\n".join(setting_lines).strip()
    if not setting:
        raise err(i, "non-empty setting text before 'Characters:'")
    i += 1

    # Characters: one "Full Name: portrait" line each, up to the Outline header.
    characters: list[Character] = []
    while i < n and lines[i].strip() != "Outline:":
        line = lines[i]
        if not line.strip():
            i += 1
            continue
        if line.startswith("Outline:"):
            raise err(i, "a bare 'Outline:' header line")
        name, sep, portrait = line.partition(":")
        if not sep or not name.strip():
            raise err(i, "a 'Full Name: portrait' character line")
        characters.append(Character(name.strip(), portrait.strip()))
        i += 1
    if i >= n:
        raise err(n - 1, "an 'Outline:' section header")
    i += 1

    # Outline: labeled items; sub items attach to the preceding matching top.
    outline: list[OutlineSection] = []
    current_top: Optional[int] = None  # index into outline of the last numeric top
    for j in range(i, n):
        line = lines[j]
        stripped = line.strip()
        if not stripped:
            continue
        m = _SUB_LABEL.match(stripped)
        if m:
            number, letter = m.group(1), m.group(2)
            body = stripped[m.end():]
            text, scene, mentioned = split_item_tail(body)
            item = OutlineSection(f"{number}{letter}", text, scene, mentioned)
            if current_top is not None and outline[current_top].label == number:
                parent = outline[current_top]
                outline[current_top] = OutlineSection(
                    parent.label, parent.text, parent.scene,
                    parent.mentioned_characters, parent.children + (item,),
                )
            else:
                outline.append(item)
            continue
        m = _TOP_LABEL.match(stripped)
        if m:
            body = stripped[m.end():]
            text, scene, mentioned = split_item_tail(body)
            outline.append(OutlineSection(m.group(1), text, scene, mentioned))
            current_top = len(outline) - 1
            continue
        raise err(j, "an outline item starting with a label like '1.' or '1a.'")

    return PlotDocument(premise, setting, tuple(characters), tuple(outline))


# ---------------------------------------------------------------------------
# Rendering


def _render_item(item: OutlineSection) -> str:
    parts = []
    if item.text:
        parts.append(item.text)
    if item.scene is not None:
        parts.append(f"Scene: {item.scene}")
    if item.mentioned_characters:
        parts.append(f"Characters: {', '.join(item.mentioned_characters)}")
    return f"{item.label}. " + " ".join(parts) if parts else f"{item.label}."


def render_plot(doc: PlotDocument) -> str:
    """Render the canonical normal form: one blank line between sections,
    single space after labels, sub items indented under their top point."""
    out: list[str] = [f"Premise: {doc.premise}", ""]
    out += [f"Settings: {doc.setting}", ""]
    out.append("Characters:")
    out.append("")
    for ch in doc.characters:
        out.append(f"{ch.full_name}: {ch.portrait}")
    out += ["", "Outline:", ""]
    for item in doc.outline:
        indent = SUB_INDENT if item.is_sub else ""
        out.append(indent + _render_item(item))
        for child in item.children:
            out.append(SUB_INDENT + _render_item(child))
    return "\n".join(out)


def split_sft(doc: PlotDocument) -> tuple[str, str]:
    """Split a plot into the SFT (prompt, response) pair.

    The prompt is the rendered premise section; the response is everything
    after it, so ``prompt + SFT_SEPARATOR + response == render_plot(doc)``.
    """
    rendered = render_plot(doc)
    prompt = f"Premise: {doc.premise}"
    assert rendered.startswith(prompt + SFT_SEPARATOR)
    return prompt, rendered[len(prompt) + len(SFT_SEPARATOR):]


# ---------------------------------------------------------------------------
# Structural validation


def validate_structure(doc: PlotDocument, cfg: PipelineConfig) -> ValidationReport:
    """Report every structural problem; never raises.

    The checks realize the corpus filter: character count in range, top
    points within 1..max, orphan sub-points (a missing top), sub counts in
    range, contiguous labels, and non-blank item text.
    """
    violations: list[Violation] = []

    lo, hi = cfg.char_range
    if not lo <= len(doc.characters) <= hi:
        violations.append(Violation(
            ViolationCode.CHAR_COUNT, "characters",
            f"{len(doc.characters)} characters, expected {lo}-{hi}",
        ))
    seen: set[str] = set()
    for ch in doc.characters:
        if ch.full_name in seen:
            violations.append(Violation(
                ViolationCode.DUP_CHARACTER, f"characters[{ch.full_name}]",
                f"duplicate character name {ch.full_name!r}",
            ))
        seen.add(ch.full_name)

    tops = [s for s in doc.outline if not s.is_sub]
    orphans = [s for s in doc.outline if s.is_sub]
    top_numbers = {s.label for s in tops}

    for orphan in orphans:
        number = orphan.label.rstrip("abcdefghijklmnopqrstuvwxyz")
        if number not in top_numbers:
            violations.append(Violation(
                ViolationCode.MISSING_TOP, f"outline[{orphan.label}]",
                f"sub-point {orphan.label} has no top-level point {number}",
            ))
        else:
            violations.append(Violation(
                ViolationCode.LABEL_GAP, f"outline[{orphan.label}]",
                f"sub-point {orphan.label} is detached from top-level point {number}",
            ))

    if not 1 <= len(tops) <= cfg.max_top_points:
        violations.append(Violation(
            ViolationCode.TOP_COUNT, "outline",
            f"{len(tops)} top-level points, expected 1-{cfg.max_top_points}",
        ))
    for idx, top in enumerate(tops, start=1):
        if top.label != str(idx):
            violations.append(Violation(
                ViolationCode.LABEL_GAP, f"outline[{top.label}]",
                f"top-level label {top.label!r} at position {idx}",
            ))
    slo, shi = cfg.sub_range
    for top in tops:
        if not slo <= len(top.children) <= shi:
            violations.append(Violation(
                ViolationCode.SUB_COUNT, f"outline[{top.label}]",
                f"{len(top.children)} sub-points under {top.label}, expected {slo}-{shi}",
            ))
        for cidx, child in enumerate(top.children):
            want = f"{top.label}{chr(ord('a') + cidx)}"
            if child.label != want:
                violations.append(Violation(
                    ViolationCode.LABEL_GAP, f"outline[{child.label}]",
                    f"sub-level label {child.label!r}, expected {want!r}",
                ))

    def walk(items: Iterable[OutlineSection]) -> Iterable[OutlineSection]:
        for it in items:
            yield it
            yield from walk(it.children)

    for item in walk(doc.outline):
        if not item.text.strip():
            violations.append(Violation(
                ViolationCode.EMPTY_TEXT, f"outline[{item.label}]",
                f"item {item.label} has blank text",
            ))

    return ValidationReport(tuple(violations))
