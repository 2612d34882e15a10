"""Shared fixtures: random valid documents and scripted full-run rule sets."""

from __future__ import annotations

import random
from pathlib import Path

import pytest

from plotgen.model import Character, OutlineSection, PlotDocument

FIXTURES = Path(__file__).parent / "fixtures"

_WORDS = (
    "harbor lantern tide cliff signal night keeper chart stranger storm "
    "door letter engine compass island voice garden winter crowd market "
    "bridge tower shadow promise debt rumor train valley ember stone"
).split()

_FIRST_NAMES = (
    "Mara Ilya Jonas Tessa Rowan Petra Silas Noor Felix Iris "
    "Dario Lena Omar Vera Hugo Anya Cole Rhea Ezra Salma"
).split()
_LAST_NAMES = (
    "Voss Brandt Pell Quinn Alder Kane Marsh Devi Strand Bloom "
    "Faro Ostrov Lark Senna Vale Kovac Ibarra Nash Holt Reyes"
).split()


def _sentence(rng: random.Random, lo: int = 4, hi: int = 9) -> str:
    words = [rng.choice(_WORDS) for _ in range(rng.randint(lo, hi))]
    return " ".join(words).capitalize() + "."


def random_document(rng: random.Random) -> PlotDocument:
    """A structurally valid document: contiguous labels, unique names,
    optional scenes, mention lists drawn from the character roster."""
    n_chars = rng.randint(1, 6)
    pairs = rng.sample([(f, l) for f in _FIRST_NAMES for l in _LAST_NAMES], n_chars)
    characters = tuple(
        Character(f"{f} {l}", f"{f} {l} is {_sentence(rng, 3, 7)[:-1].lower()}.")
        for f, l in pairs
    )
    names = [c.full_name for c in characters]

    def annotations() -> tuple[str | None, tuple[str, ...]]:
        scene = _sentence(rng, 2, 4)[:-1].lower() if rng.random() < 0.6 else None
        k = rng.randint(0, min(2, len(names)))
        mentioned = tuple(rng.sample(names, k)) if k else ()
        return scene, mentioned

    outline = []
    for i in range(1, rng.randint(1, 5) + 1):
        children = []
        for j in range(rng.randint(0, 5)):
            scene, mentioned = annotations()
            children.append(
                OutlineSection(f"{i}{chr(ord('a') + j)}", _sentence(rng), scene, mentioned)
            )
        scene, mentioned = annotations()
        outline.append(
            OutlineSection(str(i), _sentence(rng), scene, mentioned, tuple(children))
        )

    premise = _sentence(rng, 6, 14)
    if rng.random() < 0.2:
        premise += "\n" + _sentence(rng, 4, 8)
    return PlotDocument(
        premise=premise,
        setting=f"The story is set in {_sentence(rng, 3, 8)[:-1].lower()}.",
        characters=characters,
        outline=tuple(outline),
    )


# ---------------------------------------------------------------------------
# Scripted full-run rule sets

RUN_PREMISE = (
    "A young mapmaker inherits an atlas whose borders redraw themselves at night."
)
RUN_SETTING_COMPLETION = "a port city built on canals, in an age of sail."
RUN_NAMES = ("Mara Voss", "Ilya Brandt", "Jonas Pell", "Tessa Quinn", "Rowan Alder", "Petra Kane")
RUN_PORTRAITS = (
    "a mapmaker who trusts ink more than people.",
    "a canal pilot who owes the harbor guild a debt.",
    "an archivist hoarding forbidden survey notes.",
    "a smuggler who sells routes that do not exist.",
    "a customs clerk collecting impossible stamps.",
    "a retired captain who refuses to sail west.",
)
RUN_TOP_POINTS = (
    "The atlas arrives with a warning pasted over its index.",
    "New canals appear overnight and swallow a warehouse district.",
    "Rivals race to copy pages before the borders settle.",
    "Burning the index fixes the city and frees the mapmaker.",
)
RUN_SUB_POINTS = (
    "Unwrapping the parcel reveals margins crowded with corrections.",
    "A pasted warning slip names three previous owners.",
    "Every owner listed died on a street missing from records.",
    "Dawn exposes waterways where carts rolled the evening before.",
    "Dockworkers refuse wages printed on yesterday's currency.",
    "The guild blames surveyors and seals the harbor gates.",
    "An auction erupts over a single stolen page.",
    "Copyists find their tracings shifting under the lamplight.",
    "A forged duplicate sends buyers into a flooded cul-de-sac.",
    "The index glows when held against the tide tables.",
    "Cutting one thread of the binding calms a whole district.",
    "Ash from the burned page settles into a final honest map.",
    "Neighbors redraw property lines by handshake instead of deed.",
    "The freed mapmaker signs the last chart with a true name.",
    "The harbor opens and ordinary water returns to the canals.",
    "A blank notebook replaces the atlas on the shop shelf.",
)
RUN_ANNOTATION = "Scene: the chartless harbor Characters: Mara Voss"


def _block(responses: tuple[str, ...] | list[str], k: int) -> list[str]:
    """Repeat each response k times so one k-wide sampling round sees one
    distinct value, in both single-call and sequential-candidate modes."""
    return [r for r in responses for _ in range(k)]


def full_run_rules(
    k: int = 1,
    chars: int = 4,
    tops: int = 4,
    subs_per_top: int = 3,
    annotate: bool = True,
) -> list[dict]:
    """Exhaustive scripted rules for one deterministic end-to-end run."""
    rules = [
        {"match": "Write a premise for a short story",
         "responses": _block([RUN_PREMISE], k)},
        {"match": "Describe the setting of the story.",
         "responses": _block([RUN_SETTING_COMPLETION], k)},
        {"match_re": r"Full Name:\Z", "responses": _block(RUN_NAMES[:chars], k)},
        {"match_re": r"Character Portrait: .+ is\Z",
         "responses": _block(RUN_PORTRAITS[:chars], k)},
        {"match": "Outline the main plot points",
         "responses": _block(RUN_TOP_POINTS[:tops], k)},
        {"match": "List the main events",
         "responses": _block(RUN_SUB_POINTS[: tops * subs_per_top], k)},
    ]
    if annotate:
        rules.append({
            "match": "Name the scene where this outline point",
            "responses": [RUN_ANNOTATION],
        })
    return rules


@pytest.fixture
def sample_plot_text() -> str:
    return (FIXTURES / "sample_plot.txt").read_text(encoding="utf-8")
