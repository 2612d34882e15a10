"""Corpus operations: batch conservation, filtering partitions, SFT export,
pair construction, and label statistics."""

from __future__ import annotations

import io
import json
import logging
import random

import pytest

from plotgen.backend import scripted_backend
from plotgen.config import PipelineConfig
from plotgen.dataset import (
    JsonlSink,
    PlotRecord,
    batch_generate,
    content_id,
    corpus_stats,
    export_sft,
    filter_plots,
    make_pairs,
    pair_full_text,
    read_jsonl,
    round_half_up,
    split_records,
)
from plotgen.model import (
    Character,
    OutlineSection,
    PlotDocument,
    SFT_SEPARATOR,
    parse_plot,
    render_plot,
    validate_structure,
)

from conftest import full_run_rules, random_document

CFG = PipelineConfig()


def _record_from_doc(doc: PlotDocument, seed: int = 0, tag: str = "fixture") -> PlotRecord:
    report = validate_structure(doc, CFG)
    return PlotRecord(
        id=content_id(doc.premise, seed, tag),
        premise=doc.premise,
        document=doc,
        raw_text=render_plot(doc),
        valid=report.valid,
        violations=[v.code.value for v in report.violations],
        meta={"model": tag, "seed": seed, "total_calls": 0,
              "started_at": "", "finished_at": ""},
    )


def _clean_doc(rng: random.Random) -> PlotDocument:
    """A random document that passes the default validator."""
    chars = tuple(
        Character(f"Person{i} Clean{rng.randrange(10**6)}", f"Person{i} is around.")
        for i in range(rng.randint(3, 6))
    )
    outline = []
    for i in range(1, 5):
        children = tuple(
            OutlineSection(f"{i}{chr(ord('a') + j)}", f"Sub event {i}-{j} with seed {rng.randrange(10**6)}.")
            for j in range(rng.randint(3, 4))
        )
        outline.append(OutlineSection(str(i), f"Top event {i} number {rng.randrange(10**6)}.", None, (), children))
    return PlotDocument(
        premise=f"Premise number {rng.randrange(10**9)} about a door.",
        setting="The story is set in a test harness.",
        characters=chars,
        outline=tuple(outline),
    )


def _bad_doc(rng: random.Random, code: str) -> PlotDocument:
    """A document carrying exactly one violation of the given code."""
    doc = _clean_doc(rng)
    if code == "CHAR_COUNT":
        chars = tuple(
            Character(f"Extra{i} Crowd{rng.randrange(10**6)}", f"Extra{i} is here.")
            for i in range(7)
        )
        return PlotDocument(doc.premise, doc.setting, chars, doc.outline)
    if code == "SUB_COUNT":
        top = doc.outline[0]
        trimmed = OutlineSection(top.label, top.text, None, (), top.children[:2])
        return PlotDocument(doc.premise, doc.setting, doc.characters, (trimmed,) + doc.outline[1:])
    if code == "MISSING_TOP":
        orphan = OutlineSection("5a", "An orphan sub-point without its parent.")
        return PlotDocument(doc.premise, doc.setting, doc.characters, doc.outline + (orphan,))
    raise ValueError(code)


class TestBatchGenerate:
    def _run(self, n, workers, seed=3):
        cfg = PipelineConfig(char_range=(4, 4), sub_range=(3, 3), seed=seed,
                             candidates_per_step=1, annotate_scenes=False)
        factory = lambda: scripted_backend(full_run_rules(annotate=False))  # noqa: E731
        buf = io.StringIO()
        summary = batch_generate(factory, cfg, n, workers, JsonlSink(buf))
        return summary, list(read_jsonl(io.StringIO(buf.getvalue())))

    @staticmethod
    def _stable(entry: dict) -> dict:
        data = {k: v for k, v in entry.items() if k != "meta"}
        meta = entry.get("meta", {})
        data["meta"] = {k: meta[k] for k in ("model", "seed", "total_calls") if k in meta}
        return data

    def test_parallel_matches_sequential_by_id(self):
        summary_p, lines_p = self._run(10, workers=4)
        summary_s, lines_s = self._run(10, workers=1)
        assert summary_p.to_dict() == summary_s.to_dict()
        by_id_p = {e["id"]: self._stable(e) for e in lines_p}
        by_id_s = {e["id"]: self._stable(e) for e in lines_s}
        assert by_id_p == by_id_s
        assert len(by_id_p) == 10

    def test_rerun_same_id_set(self):
        _, first = self._run(8, workers=3)
        _, second = self._run(8, workers=3)
        assert {e["id"] for e in first} == {e["id"] for e in second}

    def test_zero_records_rejected(self):
        with pytest.raises(ValueError):
            self._run(0, workers=1)

    def test_one_failure_among_ten(self):
        cfg = PipelineConfig(char_range=(4, 4), sub_range=(3, 3), seed=3,
                             candidates_per_step=1, annotate_scenes=False,
                             max_step_retries=0)
        made = {"n": 0}

        def factory():
            made["n"] += 1
            if made["n"] == 4:
                return scripted_backend([{"match": "Premise:", "responses": ["   "]}])
            return scripted_backend(full_run_rules(annotate=False))

        buf = io.StringIO()
        summary = batch_generate(factory, cfg, 10, 2, JsonlSink(buf))
        assert summary.attempted == 10
        assert summary.succeeded == 9
        assert summary.failed == 1
        lines = list(read_jsonl(io.StringIO(buf.getvalue())))
        errors = [e for e in lines if "error" in e]
        assert len(errors) == 1
        assert errors[0]["error"]["stage"] == "premise"
        assert len(lines) == 10


class TestFilterPlots:
    def test_partition_exact_with_report(self):
        rng = random.Random(5)
        records = [_record_from_doc(_clean_doc(rng), seed=i) for i in range(80)]
        bad = [_record_from_doc(_bad_doc(rng, "MISSING_TOP"), seed=100 + i) for i in range(20)]
        mixed = records + bad
        random.Random(7).shuffle(mixed)
        result = filter_plots(mixed, CFG)
        assert len(result.kept) == 80
        assert len(result.dropped) == 20
        assert result.report == {"MISSING_TOP": 20}
        # exact partition: no record lost or duplicated
        all_ids = sorted(r.id for r in result.kept) + sorted(r.id for r in result.dropped)
        assert sorted(all_ids) == sorted(r.id for r in mixed)

    def test_all_valid_drops_nothing(self):
        rng = random.Random(6)
        records = [_record_from_doc(_clean_doc(rng), seed=i) for i in range(10)]
        result = filter_plots(records, CFG)
        assert result.dropped == []
        assert result.report == {}

    def test_corpus_ratio_mirror(self):
        # 200 records, 39 structurally bad: the kept fraction lands at the
        # corpus-filtering ratio (161/200 = 0.805).
        rng = random.Random(8)
        good = [_record_from_doc(_clean_doc(rng), seed=i) for i in range(161)]
        bad = (
            [_record_from_doc(_bad_doc(rng, "MISSING_TOP"), seed=200 + i) for i in range(20)]
            + [_record_from_doc(_bad_doc(rng, "CHAR_COUNT"), seed=300 + i) for i in range(10)]
            + [_record_from_doc(_bad_doc(rng, "SUB_COUNT"), seed=400 + i) for i in range(9)]
        )
        result = filter_plots(good + bad, CFG)
        assert len(result.kept) == 161
        assert len(result.dropped) == 39
        assert len(result.kept) / 200 == pytest.approx(0.805)
        assert result.report == {"MISSING_TOP": 20, "CHAR_COUNT": 10, "SUB_COUNT": 9}

    def test_outline_starting_at_sub_level(self):
        text = (
            "Premise: The outline lost its first point.\n\n"
            "Settings: somewhere structured.\n\n"
            "Characters:\n\nA B: A B is one.\nC D: C D is two.\nE F: E F is three.\n\n"
            "Outline:\n\n"
            "    1a. This sub-point has no parent.\n"
            "2. A second point exists.\n"
        )
        record_doc = parse_plot(text)
        report = validate_structure(record_doc, CFG)
        assert "MISSING_TOP" in {v.code.value for v in report.violations}


class TestExportSft:
    def test_single_valid_record(self):
        rng = random.Random(9)
        record = _record_from_doc(_clean_doc(rng))
        buf = io.StringIO()
        report = export_sft([record], JsonlSink(buf))
        assert report == {"written": 1, "skipped": 0}
        line = json.loads(buf.getvalue())
        assert line["response"].startswith("Settings:")
        assert line["prompt"].startswith("Premise: ")

    def test_invalid_record_skipped(self):
        rng = random.Random(10)
        record = _record_from_doc(_bad_doc(rng, "CHAR_COUNT"))
        buf = io.StringIO()
        report = export_sft([record], JsonlSink(buf))
        assert report == {"written": 0, "skipped": 1}
        assert buf.getvalue() == ""

    def test_reconstruction_over_records(self):
        rng = random.Random(11)
        records = [_record_from_doc(_clean_doc(rng), seed=i) for i in range(50)]
        buf = io.StringIO()
        report = export_sft(records, JsonlSink(buf))
        lines = list(read_jsonl(io.StringIO(buf.getvalue())))
        assert report["written"] == len(lines) == 50
        for record, line in zip(records, lines):
            rebuilt = line["prompt"] + SFT_SEPARATOR + line["response"]
            assert rebuilt == record.raw_text


class TestMakePairs:
    def _gen(self, seed):
        cfg = PipelineConfig(char_range=(4, 4), sub_range=(3, 3), seed=seed,
                             candidates_per_step=1, annotate_scenes=False)
        factory = lambda: scripted_backend(full_run_rules(annotate=False))  # noqa: E731
        return factory, cfg

    def test_three_premises_three_pairs(self):
        premises = [f"Premise variant {i} about a canal." for i in range(3)]
        backend_a, cfg_a = self._gen(1)
        backend_b, cfg_b = self._gen(2)
        buf = io.StringIO()
        pairs = make_pairs(premises, (backend_a, cfg_a, "gen-a"), (backend_b, cfg_b, "gen-b"),
                           JsonlSink(buf))
        assert len(pairs) == 3
        for premise, pair in zip(premises, pairs):
            assert pair.premise == premise
            assert pair.plot_a["source"] == "gen-a"
            assert pair.plot_b["source"] == "gen-b"
            # both sides parse back to the same premise
            for side in (pair.plot_a, pair.plot_b):
                doc = parse_plot(pair_full_text(pair.premise, side["text"]))
                assert doc.premise == premise

    def test_same_generator_different_seeds(self):
        premises = ["A shared premise for both generators."]
        backend_a, cfg_a = self._gen(1)
        backend_b, cfg_b = self._gen(99)
        pairs = make_pairs(premises, (backend_a, cfg_a, "x"), (backend_b, cfg_b, "y"))
        pair = pairs[0]
        assert pair.plot_a["text"]
        assert pair.premise == premises[0]

    def test_duplicate_premise_deduplicated(self, caplog):
        premises = ["The same premise twice.", "The same premise twice."]
        backend_a, cfg_a = self._gen(1)
        backend_b, cfg_b = self._gen(2)
        with caplog.at_level(logging.WARNING):
            pairs = make_pairs(premises, (backend_a, cfg_a, "a"), (backend_b, cfg_b, "b"))
        assert len(pairs) == 1
        assert any("duplicate premise" in r.message for r in caplog.records)

    def test_pair_ids_stable(self):
        premises = ["A premise for id stability."]
        backend_a, cfg_a = self._gen(1)
        backend_b, cfg_b = self._gen(2)
        first = make_pairs(premises, (backend_a, cfg_a, "a"), (backend_b, cfg_b, "b"))
        second = make_pairs(premises, (backend_a, cfg_a, "a"), (backend_b, cfg_b, "b"))
        assert first[0].pair_id == second[0].pair_id

    def test_empty_premises_rejected(self):
        backend_a, cfg_a = self._gen(1)
        with pytest.raises(ValueError):
            make_pairs([], (backend_a, cfg_a, "a"), (backend_a, cfg_a, "b"))


def _choices(q4: str, q6: str = "PLOT_A") -> dict[str, str]:
    return {"Q1": "PLOT_A", "Q3": "PLOT_B", "Q4": q4, "Q5": "BOTH", "Q6": q6}


class TestCorpusStats:
    def test_q4_row_from_100(self):
        labels = (["PLOT_A"] * 29 + ["PLOT_B"] * 38 + ["BOTH"] * 13 + ["NEITHER"] * 20)
        table = corpus_stats([_choices(q4) for q4 in labels])
        row = table["Q4"]
        assert row["counts"] == {"PLOT_A": 29, "PLOT_B": 38, "BOTH": 13, "NEITHER": 20}
        assert row["percentages"] == {"PLOT_A": 29, "PLOT_B": 38, "BOTH": 13, "NEITHER": 20}

    def test_empty_input_zero_table(self):
        table = corpus_stats([])
        for q in ("Q1", "Q3", "Q4", "Q5", "Q6"):
            assert table[q]["total"] == 0
            assert set(table[q]["percentages"].values()) == {0}

    def test_counts_sum_to_total(self):
        rng = random.Random(12)
        responses = [
            {q: rng.choice(["PLOT_A", "PLOT_B", "BOTH", "NEITHER"])
             for q in ("Q1", "Q3", "Q4", "Q5", "Q6")}
            for _ in range(1000)
        ]
        table = corpus_stats(responses)
        for q in ("Q1", "Q3", "Q4", "Q5", "Q6"):
            assert sum(table[q]["counts"].values()) == table[q]["total"] == 1000

    def test_seven_thousand_multinomial_fixture(self):
        # Exact proportional construction at the labeling-campaign scale.
        counts = {"PLOT_A": 2030, "PLOT_B": 2660, "BOTH": 910, "NEITHER": 1400}
        labels = [label for label, c in counts.items() for _ in range(c)]
        random.Random(13).shuffle(labels)
        table = corpus_stats([_choices(q4) for q4 in labels])
        assert table["Q4"]["percentages"] == {
            "PLOT_A": 29, "PLOT_B": 38, "BOTH": 13, "NEITHER": 20,
        }

    def test_rounding_half_up(self):
        assert round_half_up(14.5) == 15.0
        assert round_half_up(46.85, 1) == 46.9
        assert round_half_up(0.6667, 1) == 0.7


class TestSplitRecords:
    def test_seeded_shuffle_and_cut(self):
        rng = random.Random(14)
        records = [_record_from_doc(_clean_doc(rng), seed=i) for i in range(10)]
        train, val = split_records(records, 0.8, seed=42)
        assert len(train) == 8 and len(val) == 2
        assert {r.id for r in train} | {r.id for r in val} == {r.id for r in records}
        train2, val2 = split_records(records, 0.8, seed=42)
        assert [r.id for r in train2] == [r.id for r in train]


class TestRecordCodec:
    def test_json_round_trip(self):
        rng = random.Random(15)
        record = _record_from_doc(random_document(rng))
        data = json.loads(json.dumps(record.to_json_dict()))
        back = PlotRecord.from_json_dict(data)
        assert back.id == record.id
        assert back.document == record.document
        assert back.raw_text == record.raw_text
        assert back.valid == record.valid
