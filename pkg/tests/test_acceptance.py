"""Acceptance suite: one test per criterion, each printing a PASS line with
its runtime (run with ``pytest tests/test_acceptance.py -v -s``)."""

from __future__ import annotations

import io
import json
import random
import time
from pathlib import Path

import pytest

from plotgen.annotation import AnnotationResponse, AnnotationStore, Campaign
from plotgen.backend import scripted_backend
from plotgen.cli import dump_named_prompt
from plotgen.config import PipelineConfig
from plotgen.dataset import (
    JsonlSink,
    PreferencePair,
    batch_generate,
    corpus_stats,
    export_sft,
    filter_plots,
    read_jsonl,
)
from plotgen.judge import (
    Aspect,
    Verdict,
    aggregate_winrates,
    deshuffle,
    parse_verdict,
    run_comparison,
    shuffle_positions,
)
from plotgen.model import SFT_SEPARATOR, parse_plot, render_plot
from plotgen.planner import generate_plot

import conftest
from conftest import FIXTURES, full_run_rules, random_document
from test_dataset import _bad_doc, _clean_doc, _record_from_doc
from test_judge import SAMPLE_JUDGMENT, _pair, _records, _rng_forcing

GOLDEN = Path(__file__).parent.parent / "src" / "plotgen" / "golden"


def _report(criterion: int, description: str, started: float, budget: float) -> None:
    elapsed = time.perf_counter() - started
    assert elapsed < budget, f"criterion {criterion} took {elapsed:.2f}s (budget {budget}s)"
    print(f"PASS criterion {criterion}: {description} ({elapsed:.2f}s < {budget:.0f}s)")


def test_criterion_1_prompt_fidelity():
    """Every prompt builder matches its golden file byte-for-byte."""
    started = time.perf_counter()
    names = [
        "premise", "setting", "character-name-first", "character-name-later",
        "character-portrait", "top-outline-first", "top-outline-continue",
        "sub-outline-prefix-first", "sub-outline-prefix-continue",
        "sub-outline-suffix", "completion-wrapper",
    ]
    for name in names:
        expected = (GOLDEN / f"{name}.txt").read_text(encoding="utf-8")
        assert dump_named_prompt(name) == expected, f"golden drift in {name}"

    # Anchor fragments that the golden files must carry verbatim, so a
    # builder and its golden cannot drift in lockstep unnoticed.
    anchors = {
        "premise": ["Write a premise for a short story in one paragraph with two to three sentences.", "Premise:"],
        "setting": ["Describe the setting of the story.", "The story is set in"],
        "character-name-first": ["List the names and details of all major characters.", "Full Name:"],
        "character-portrait": [
            "Use ONLY one short sentence for the following description relevant to "
            "the story, focusing on relationship between characters, occupation and "
            "experience instead of appearance. Only ONE sentence is allowed!",
        ],
        "top-outline-first": [
            "Outline the main plot points of the story using no more than 4 points, "
            "generating one point at a time. IMPORTANT: Please make sure that the "
            "story has a clear end at or before Point 4.",
        ],
        "sub-outline-prefix-first": [
            "List the main events that occur under this heading using no more than 4 "
            "points, starting from the beginning, generating one or two points "
            "without repeating the content of the suffix and stop.",
        ],
        "completion-wrapper": [
            "Imagine you are a text completion robot.",
            "Your output should not contain the content of the suffix. Only use the "
            "suffix as complementary information. The output should mainly be based "
            "on the prompt. Now the suffix begins.",
            "End of Suffix",
            "Now the prompt begins.",
        ],
    }
    for name, fragments in anchors.items():
        text = (GOLDEN / f"{name}.txt").read_text(encoding="utf-8")
        for fragment in fragments:
            assert fragment in text, f"{name} golden lost anchor {fragment[:40]!r}"
    _report(1, "prompt builders byte-match their golden files", started, 1.0)


def test_criterion_2_parser_round_trip():
    """1000 random valid documents round-trip; the sample transcript parses."""
    started = time.perf_counter()
    for seed in range(1000):
        doc = random_document(random.Random(seed))
        canonical = render_plot(doc)
        assert parse_plot(canonical) == doc, f"parse-render identity failed at seed {seed}"
        assert render_plot(parse_plot(canonical)) == canonical, f"fixpoint failed at seed {seed}"

    transcript = (FIXTURES / "sample_plot.txt").read_text(encoding="utf-8")
    doc = parse_plot(transcript)
    assert [s.label for s in doc.outline] == ["1", "2", "3", "4"]
    assert "Ava Rose" in [c.full_name for c in doc.characters]
    assert doc.outline[3].children[3].scene == "the town where Ava lives."
    _report(2, "1000-document round trip and sample transcript", started, 5.0)


def test_criterion_3_call_accounting():
    """Sequential-fallback run: 120 calls, closed-form formula, BFS order."""
    started = time.perf_counter()
    cfg = PipelineConfig(
        char_range=(4, 4), sub_range=(3, 3), candidates_per_step=4,
        sequential_candidates=True, annotate_scenes=True, seed=7,
    )
    backend = scripted_backend(full_run_rules(k=4))
    doc, meta = generate_plot(backend, cfg)

    counts = meta.counts
    assert counts["characters"] == 4
    assert counts["top_points"] == 4
    assert counts["sub_points"] == [3, 3, 3, 3]
    assert counts["retries"] == 0
    assert meta.total_calls == 120
    assert meta.total_calls > 100
    assert meta.total_calls == meta.expected_calls()

    sequence = meta.ledger["sequence"]
    last_top = max(i for i, s in enumerate(sequence) if s == "top_outline")
    first_sub = min(i for i, s in enumerate(sequence) if s == "sub_outline")
    assert last_top < first_sub, "breadth-first ordering violated"
    _report(3, "120-call accounting with breadth-first ordering", started, 2.0)


def test_criterion_4_filtering():
    """200-record corpus with 39 constructed-bad plots partitions exactly."""
    started = time.perf_counter()
    rng = random.Random(4)
    good = [_record_from_doc(_clean_doc(rng), seed=i) for i in range(161)]
    bad = (
        [_record_from_doc(_bad_doc(rng, "MISSING_TOP"), seed=1000 + i) for i in range(20)]
        + [_record_from_doc(_bad_doc(rng, "CHAR_COUNT"), seed=2000 + i) for i in range(10)]
        + [_record_from_doc(_bad_doc(rng, "SUB_COUNT"), seed=3000 + i) for i in range(9)]
    )
    corpus = good + bad
    random.Random(5).shuffle(corpus)

    result = filter_plots(corpus, PipelineConfig())
    assert len(result.kept) == 161
    assert len(result.dropped) == 39
    assert len(result.kept) + len(result.dropped) == 200
    assert result.report == {"MISSING_TOP": 20, "CHAR_COUNT": 10, "SUB_COUNT": 9}
    assert {r.id for r in result.kept} | {r.id for r in result.dropped} == {r.id for r in corpus}
    assert len(result.kept) / 200 == pytest.approx(0.805)
    _report(4, "exact 161/39 partition with per-code counts", started, 2.0)


def test_criterion_5_judge_protocol():
    """Truth table, sample judgment, and the two back-derived table rows."""
    started = time.perf_counter()
    pair = _pair()
    for swapped in (False, True):
        presented = shuffle_positions(pair, _rng_forcing(swapped))
        first = "gen-b" if swapped else "gen-a"
        second = "gen-a" if swapped else "gen-b"
        assert deshuffle(Verdict.A_WINS, presented) == first
        assert deshuffle(Verdict.B_WINS, presented) == second
        assert deshuffle(Verdict.TIE, presented) == "TIE"

    assert parse_verdict(SAMPLE_JUDGMENT) is Verdict.B_WINS

    row = aggregate_winrates(_records(229, 234, 37))[0]
    assert (row["pct_x"], row["pct_y"], row["pct_ties"]) == (45.8, 46.8, 7.4)
    row = aggregate_winrates(_records(118, 180, 2, aspect=Aspect.Q4))[0]
    assert (row["pct_x"], row["pct_y"], row["pct_ties"]) == (39.3, 60.0, 0.7)
    _report(5, "de-shuffle truth table and win-rate rows", started, 1.0)


def test_criterion_6_shuffle_debiasing():
    """A first-position-biased judge de-shuffles to 50% +/- 2% per source."""
    started = time.perf_counter()
    backend = scripted_backend([{"match": "impartial judge", "responses": ["[[A]]"]}])
    pair = _pair()
    n = 10000
    wins = {"gen-a": 0, "gen-b": 0}
    for seed in range(n):
        record = run_comparison(backend, pair, Aspect.OVERALL, seed)
        assert record.presented_verdict is Verdict.A_WINS  # raw bias is total
        wins[record.winner_source] += 1
    assert wins["gen-a"] + wins["gen-b"] == n
    for source in ("gen-a", "gen-b"):
        assert 0.48 <= wins[source] / n <= 0.52, f"{source} at {wins[source] / n:.3f}"
    _report(6, "position bias removed by randomized ordering", started, 10.0)


def test_criterion_7_dataset_conservation():
    """batch(100) -> filter -> export-sft conserves counts and reconstructs."""
    started = time.perf_counter()
    cfg = PipelineConfig(
        char_range=(4, 4), sub_range=(3, 3), candidates_per_step=1,
        annotate_scenes=False, seed=100,
    )
    factory = lambda: scripted_backend(full_run_rules(annotate=False))  # noqa: E731
    buf = io.StringIO()
    summary = batch_generate(factory, cfg, 100, 8, JsonlSink(buf))
    assert summary.attempted == 100
    assert summary.succeeded + summary.failed == 100

    from plotgen.dataset import PlotRecord

    records = [
        PlotRecord.from_json_dict(d)
        for d in read_jsonl(io.StringIO(buf.getvalue()))
        if "error" not in d
    ]
    assert len(records) == 100

    result = filter_plots(records, cfg)
    assert len(result.kept) + len(result.dropped) == 100

    out = io.StringIO()
    report = export_sft(result.kept, JsonlSink(out))
    lines = list(read_jsonl(io.StringIO(out.getvalue())))
    assert report["written"] == len(lines) == len(result.kept)

    by_id = {r.id: r for r in result.kept}
    for record, line in zip(result.kept, lines):
        rebuilt = line["prompt"] + SFT_SEPARATOR + line["response"]
        assert rebuilt == record.raw_text == render_plot(by_id[record.id].document)
    _report(7, "batch/filter/export counts conserved with reconstruction", started, 10.0)


def test_criterion_8_annotation_service(tmp_path):
    """Boundary word counts, duplicates, durability, export equality, stats."""
    started = time.perf_counter()
    from test_annotation import _campaign, _pairs, _response

    # word-count boundary: 24 rejected, 25 accepted
    campaign = _campaign(tmp_path)
    from plotgen.annotation import DuplicateError, ValidationError

    with pytest.raises(ValidationError):
        campaign.submit(_response(words=24))
    campaign.submit(_response(words=25))
    assert len(campaign.store) == 1

    # duplicate rejection
    with pytest.raises(DuplicateError):
        campaign.submit(_response(words=30))
    assert len(campaign.store) == 1

    # durability across restart
    reopened = Campaign(_pairs(3), AnnotationStore(tmp_path / "store.jsonl"))
    assert len(reopened.store) == 1
    with pytest.raises(DuplicateError):
        reopened.submit(_response(words=30))

    # export equality against a brute-force A/B filter over 1000 responses
    rng = random.Random(8)
    pairs = _pairs(200)
    big = Campaign(pairs, AnnotationStore(tmp_path / "big_store.jsonl"))
    submitted = []
    for i in range(1000):
        pair = pairs[i % len(pairs)]
        resp = _response(
            pair_id=pair.pair_id,
            annotator=f"ann-{i // len(pairs)}",
            Q4=rng.choice(["PLOT_A", "PLOT_B", "BOTH", "NEITHER"]),
        )
        big.submit(resp)
        submitted.append(resp)
    rows = big.export_preferences("Q4")
    brute = [r for r in submitted if r.choices["Q4"] in ("PLOT_A", "PLOT_B")]
    assert len(rows) == len(brute)
    assert [r["pair_id"] for r in rows] == [r.pair_id for r in brute]

    # label stats reproduce the Q4 and Q6 distribution rows
    q4_labels = ["PLOT_A"] * 29 + ["PLOT_B"] * 38 + ["BOTH"] * 13 + ["NEITHER"] * 20
    q6_labels = ["PLOT_A"] * 30 + ["PLOT_B"] * 37 + ["BOTH"] * 9 + ["NEITHER"] * 24
    table = corpus_stats(
        {"Q4": q4, "Q6": q6} for q4, q6 in zip(q4_labels, q6_labels)
    )
    assert table["Q4"]["percentages"] == {"PLOT_A": 29, "PLOT_B": 38, "BOTH": 13, "NEITHER": 20}
    assert table["Q6"]["percentages"] == {"PLOT_A": 30, "PLOT_B": 37, "BOTH": 9, "NEITHER": 24}
    _report(8, "annotation boundaries, durability, export equality, stats", started, 10.0)
