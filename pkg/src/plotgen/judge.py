"""Pairwise plot comparison with a judge model: randomized presentation
order, bracketed verdict parsing, de-shuffled tallies, and win-rate tables."""

from __future__ import annotations

import random
import re
from dataclasses import dataclass
from enum import Enum
from typing import Any, Iterable, Optional

from .backend import Backend, CallLedger, GenerationRequest, RateLimiter, chat_generate
from .dataset import PreferencePair, pair_full_text, round_half_up
from .questions import QUESTION_TEXTS

JUDGE_TEMPERATURE = 0.0
JUDGE_MAX_TOKENS = 1024

_OVERALL_SENTENCE = "Your evaluation should focus on the overall qualities."

_JUDGE_SCAFFOLD = (
    "Please act as an impartial judge and evaluate the quality of the story plots "
    "generated by two AI models. The two story plots have the same premise.\n"
    "You should choose the story plots that have better qualities. "
    + _OVERALL_SENTENCE
    + "\n"
    "Begin your evaluation by comparing the two story plots and provide a short "
    "explanation. Avoid any position biases and ensure that the order in which "
    "the story plots were presented does not influence your decision.\n"
    "Do not allow the length of the story plots to influence your evaluation. "
    "Be as objective as possible. After providing your explanation, output your "
    'final verdict by strictly following this format: "[[A]]" if story plot A is '
    'better, "[[B]]" if story plot B is better, and "[[C]]" for a tie.\n'
    "\n"
    "[The Start of story plot A]\n"
    "\n"
    "{plot_a}\n"
    "\n"
    "[The End of story plot A]\n"
    "\n"
    "[The Start of story plot B]\n"
    "\n"
    "{plot_b}\n"
    "\n"
    "[The End of story plot B]"
)

_VERDICT_MARKER = re.compile(r"\[\[(A|B|C)\]\]")


class Aspect(str, Enum):
    OVERALL = "OVERALL"
    Q1 = "Q1"
    Q3 = "Q3"
    Q4 = "Q4"
    Q5 = "Q5"
    Q6 = "Q6"

    @property
    def focus_sentence(self) -> str:
        if self is Aspect.OVERALL:
            return _OVERALL_SENTENCE
        return f"Your evaluation should focus on the Aspect: {QUESTION_TEXTS[self.value]}"


class Verdict(str, Enum):
    A_WINS = "A_WINS"
    B_WINS = "B_WINS"
    TIE = "TIE"


class NoVerdict(ValueError):
    """The judgment text contains no bracketed verdict marker."""


class MixedPairError(ValueError):
    """A win-rate group does not consist of exactly two source tags."""


@dataclass(frozen=True)
class ComparisonRecord:
    pair_id: str
    aspect: Aspect
    presented_first: str
    presented_second: str
    raw_judgment: str
    presented_verdict: Verdict
    winner_source: str  # source tag, or "TIE"
    rng_seed: int
    unparsed: bool = False

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "pair_id": self.pair_id,
            "aspect": self.aspect.value,
            "presented_first": self.presented_first,
            "presented_second": self.presented_second,
            "raw": self.raw_judgment,
            "verdict": self.presented_verdict.value,
            "winner": self.winner_source,
            "seed": self.rng_seed,
            "unparsed": self.unparsed,
        }

    @classmethod
    def from_json_dict(cls, data: dict[str, Any]) -> "ComparisonRecord":
        return cls(
            pair_id=data["pair_id"],
            aspect=Aspect(data["aspect"]),
            presented_first=data["presented_first"],
            presented_second=data["presented_second"],
            raw_judgment=data["raw"],
            presented_verdict=Verdict(data["verdict"]),
            winner_source=data["winner"],
            rng_seed=int(data["seed"]),
            unparsed=bool(data.get("unparsed", False)),
        )


def build_judge_prompt(plot_a_text: str, plot_b_text: str, aspect: Aspect) -> str:
    """The judge scaffold with the focus sentence swapped for the aspect's
    and the two plot texts between their markers."""
    if not plot_a_text.strip() or not plot_b_text.strip():
        raise ValueError("both plot texts must be non-empty")
    scaffold = _JUDGE_SCAFFOLD
    if aspect is not Aspect.OVERALL:
        scaffold = scaffold.replace(_OVERALL_SENTENCE, aspect.focus_sentence)
    return scaffold.format(plot_a=plot_a_text, plot_b=plot_b_text)


@dataclass(frozen=True)
class PresentedPair:
    """A pair in presentation order: ``first`` is shown as story plot A."""

    first_source: str
    first_text: str
    second_source: str
    second_text: str
    swapped: bool


def shuffle_positions(pair: PreferencePair, rng: random.Random) -> PresentedPair:
    """Swap the pair's presentation order with probability 1/2."""
    swapped = rng.random() < 0.5
    a, b = (pair.plot_b, pair.plot_a) if swapped else (pair.plot_a, pair.plot_b)
    return PresentedPair(
        first_source=a["source"],
        first_text=pair_full_text(pair.premise, a["text"]),
        second_source=b["source"],
        second_text=pair_full_text(pair.premise, b["text"]),
        swapped=swapped,
    )


def parse_verdict(raw: str) -> Verdict:
    """Verdict of the LAST well-formed marker; judgments end with their
    verdict, so earlier bracketed mentions in the explanation are ignored."""
    last: Optional[str] = None
    for match in _VERDICT_MARKER.finditer(raw):
        last = match.group(1)
    if last is None:
        raise NoVerdict("no [[A]]/[[B]]/[[C]] marker in judgment")
    return {"A": Verdict.A_WINS, "B": Verdict.B_WINS, "C": Verdict.TIE}[last]


def deshuffle(verdict: Verdict, presented: PresentedPair) -> str:
    if verdict is Verdict.A_WINS:
        return presented.first_source
    if verdict is Verdict.B_WINS:
        return presented.second_source
    return "TIE"


def run_comparison(
    backend: Backend,
    pair: PreferencePair,
    aspect: Aspect,
    seed: int,
    ledger: Optional[CallLedger] = None,
    limiter: Optional[RateLimiter] = None,
    temperature: float = JUDGE_TEMPERATURE,
) -> ComparisonRecord:
    """One judged comparison: shuffle, prompt, parse, de-shuffle.

    An unparseable judgment is retried once; a second failure records a TIE
    with the unparsed flag set, keeping group denominators intact.
    """
    ledger = ledger if ledger is not None else CallLedger()
    rng = random.Random(seed)
    presented = shuffle_positions(pair, rng)
    prompt = build_judge_prompt(presented.first_text, presented.second_text, aspect)
    raw = ""
    verdict: Optional[Verdict] = None
    for _ in range(2):
        result = chat_generate(
            backend,
            GenerationRequest(
                user=prompt,
                temperature=temperature,
                max_tokens=JUDGE_MAX_TOKENS,
                n_candidates=1,
            ),
            "judge",
            ledger,
            limiter=limiter,
        )
        raw = result.candidates[0]
        try:
            verdict = parse_verdict(raw)
            break
        except NoVerdict:
            continue
    unparsed = verdict is None
    if verdict is None:
        verdict = Verdict.TIE
    return ComparisonRecord(
        pair_id=pair.pair_id,
        aspect=aspect,
        presented_first=presented.first_source,
        presented_second=presented.second_source,
        raw_judgment=raw,
        presented_verdict=verdict,
        winner_source=deshuffle(verdict, presented),
        rng_seed=seed,
        unparsed=unparsed,
    )


def aggregate_winrates(records: Iterable[ComparisonRecord]) -> list[dict[str, Any]]:
    """Win/tie tallies per aspect with one-decimal percentages.

    Each aspect group must involve exactly two source tags; ties keep their
    place in the denominator so percentages sum to 100.
    """
    groups: dict[Aspect, list[ComparisonRecord]] = {}
    for record in records:
        groups.setdefault(record.aspect, []).append(record)
    if not groups:
        raise ValueError("no comparison records to aggregate")
    rows: list[dict[str, Any]] = []
    for aspect in sorted(groups, key=lambda a: a.value):
        group = groups[aspect]
        tags = sorted({r.presented_first for r in group} | {r.presented_second for r in group})
        if len(tags) != 2:
            raise MixedPairError(f"{aspect.value}: expected two source tags, got {tags}")
        x, y = tags
        wins = {x: 0, y: 0, "TIE": 0}
        for record in group:
            if record.winner_source not in wins:
                raise MixedPairError(
                    f"{aspect.value}: winner {record.winner_source!r} not in {tags}"
                )
            wins[record.winner_source] += 1
        total = len(group)
        rows.append({
            "aspect": aspect.value,
            "source_x": x,
            "source_y": y,
            "wins_x": wins[x],
            "wins_y": wins[y],
            "ties": wins["TIE"],
            "total": total,
            "pct_x": round_half_up(100.0 * wins[x] / total, 1),
            "pct_y": round_half_up(100.0 * wins[y] / total, 1),
            "pct_ties": round_half_up(100.0 * wins["TIE"] / total, 1),
        })
    return rows


def format_winrate_table(rows: list[dict[str, Any]]) -> str:
    """Plain-text table: one aspect per row, wins/wins/ties percentages."""
    if not rows:
        return "(no records)"
    x, y = rows[0]["source_x"], rows[0]["source_y"]
    header = f"{'Aspect':<10}{x + ' Wins':>16}{y + ' Wins':>16}{'Ties':>10}{'N':>8}"
    lines = [header]
    for row in rows:
        lines.append(
            f"{row['aspect']:<10}{row['pct_x']:>15}%{row['pct_y']:>15}%"
            f"{row['pct_ties']:>9}%{row['total']:>8}"
        )
    return "\n".join(lines)
