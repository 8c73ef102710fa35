import pytest

from errors import ArgumentError, ParseError
from evaluation.metrics import (
    EvalReport,
    Span,
    micro_f1,
    spans_from_tags,
    tags_from_spans,
    token_accuracy,
    token_report,
)

# five sentences, counts worked out by hand:
# gold spans 6, predicted 6, correct 3 -> P = R = F1 = 0.5
GOLD = [
    ["S-PER", "O", "B-LOC", "E-LOC"],
    ["B-ORG", "I-ORG", "E-ORG", "O"],
    ["O", "O", "S-MISC"],
    ["S-LOC", "S-LOC"],
    ["O", "O", "O"],
]
PRED = [
    ["S-PER", "O", "B-LOC", "E-LOC"],
    ["B-ORG", "E-ORG", "O", "O"],
    ["O", "S-PER", "S-MISC"],
    ["B-LOC", "E-LOC"],
    ["O", "O", "O"],
]


class TestSpans:

    def test_iobes_spans(self):
        assert spans_from_tags(["B-PER", "I-PER", "E-PER", "O", "S-LOC"]) == {
            Span("PER", 0, 2), Span("LOC", 4, 4),
        }

    def test_orphan_inside_opens_a_chunk(self):
        assert spans_from_tags(["O", "I-PER", "I-PER"]) == {Span("PER", 1, 2)}

    def test_type_change_splits_chunk(self):
        assert spans_from_tags(["B-PER", "I-LOC"]) == {Span("PER", 0, 0), Span("LOC", 1, 1)}

    def test_consecutive_begins(self):
        assert spans_from_tags(["B-PER", "B-PER"]) == {Span("PER", 0, 0), Span("PER", 1, 1)}

    def test_no_spans(self):
        assert spans_from_tags(["O", "O"]) == set()

    def test_tags_from_spans(self):
        spans = {Span("ORG", 0, 1), Span("PER", 3, 3)}
        assert tags_from_spans(spans, 5) == ["B-ORG", "E-ORG", "O", "S-PER", "O"]

    def test_tags_from_spans_rejects_overlap_and_range(self):
        with pytest.raises(ArgumentError):
            tags_from_spans({Span("A", 0, 2), Span("B", 1, 1)}, 3)
        with pytest.raises(ArgumentError):
            tags_from_spans({Span("A", 2, 3)}, 3)


class TestMicroF1:

    def test_crafted_fixture(self):
        report = micro_f1(GOLD, PRED, task="ner")
        assert (report.overall.gold, report.overall.predicted, report.overall.correct) == (6, 6, 3)
        assert report.precision == pytest.approx(0.5, abs=1e-4)
        assert report.recall == pytest.approx(0.5, abs=1e-4)
        assert report.f1 == pytest.approx(0.5, abs=1e-4)
        assert report.tokens == 16
        assert report.correct_tokens == 11

    def test_per_type_counts(self):
        per_type = micro_f1(GOLD, PRED).per_type
        assert (per_type["PER"].gold, per_type["PER"].predicted, per_type["PER"].correct) == (1, 2, 1)
        assert (per_type["LOC"].gold, per_type["LOC"].predicted, per_type["LOC"].correct) == (3, 2, 1)
        assert per_type["ORG"].f1 == 0.0
        assert per_type["MISC"].f1 == 1.0
        assert per_type["LOC"].f1 == pytest.approx(0.4, abs=1e-4)

    def test_perfect_prediction(self):
        assert micro_f1(GOLD, GOLD).f1 == 1.0

    def test_no_spans_anywhere_scores_zero(self):
        report = micro_f1([["O", "O"]], [["O", "O"]])
        assert report.f1 == 0.0
        assert report.token_accuracy == 1.0

    def test_shape_mismatch(self):
        with pytest.raises(ArgumentError):
            micro_f1(GOLD, PRED[:4])
        with pytest.raises(ArgumentError):
            micro_f1([["O"]], [["O", "O"]])


class TestTokenAccuracy:

    def test_plain(self):
        assert token_accuracy([["a", "b"], ["c"]], [["a", "x"], ["c"]]) == pytest.approx(2 / 3)

    def test_masked_positions_ignored(self):
        assert token_accuracy([["a", "b"]], [["a", "x"]], mask=[[True, False]]) == 1.0

    def test_token_report_has_no_spans(self):
        report = token_report([["NN", "VB"]], [["NN", "NN"]], task="pos")
        assert report.token_accuracy == 0.5
        assert report.overall.gold == 0


class TestReportSerialisation:

    def test_text_round_trip(self):
        report = micro_f1(GOLD, PRED, task="ner")
        again = EvalReport.from_text(report.to_text())
        assert again == report
        assert again.f1 == report.f1
        assert again.per_type["LOC"].recall == report.per_type["LOC"].recall

    def test_dotted_type_names_round_trip(self):
        gold = [["S-GPE.NAM", "O", "B-ORG.SUB.X", "E-ORG.SUB.X"]]
        pred = [["S-GPE.NAM", "O", "S-ORG.SUB.X", "O"]]
        report = micro_f1(gold, pred)
        again = EvalReport.from_text(report.to_text())
        assert set(again.per_type) == {"GPE.NAM", "ORG.SUB.X"}
        assert again == report

    def test_bad_line(self):
        with pytest.raises(ParseError):
            EvalReport.from_text("gold=1\nnonsense\n")

    def test_incomplete_report(self):
        with pytest.raises(ParseError):
            EvalReport.from_text("gold=1\n")

    def test_table_mentions_every_type(self):
        table = micro_f1(GOLD, PRED, task="ner").to_table()
        assert "FB1:  50.00" in table
        for kind in ("PER", "LOC", "ORG", "MISC"):
            assert kind in table
