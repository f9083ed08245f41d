"""Accuracy and span-level F1."""

import pytest
from hypothesis import given, strategies as st

from monodistil.errors import EvaluationError
from monodistil.metrics import accuracy, decode_spans, span_f1


class TestAccuracy:
    def test_extremes_and_fractions(self):
        assert accuracy([1, 0, 1, 1], [1, 0, 1, 1]) == 1.0
        assert accuracy([0, 1], [1, 0]) == 0.0
        assert accuracy([1, 1, 0, 0], [1, 0, 0, 1]) == 0.5
        assert accuracy([2, 2, 2, 0], [2, 2, 2, 1]) == 0.75

    def test_shape_mismatch(self):
        with pytest.raises(EvaluationError):
            accuracy([1, 2, 3], [1, 2])

    def test_empty_rejected(self):
        with pytest.raises(EvaluationError):
            accuracy([], [])


class TestDecodeSpans:
    def test_simple_spans(self):
        tags = ["O", "B-ENT", "I-ENT", "O", "B-ENT"]
        assert decode_spans(tags) == {("ENT", 1, 2), ("ENT", 4, 4)}

    def test_adjacent_b_tags_split(self):
        assert decode_spans(["B-ENT", "B-ENT"]) == {("ENT", 0, 0), ("ENT", 1, 1)}

    def test_span_running_to_the_end(self):
        assert decode_spans(["O", "B-ENT", "I-ENT"]) == {("ENT", 1, 2)}

    def test_lenient_orphan_i_opens_span(self):
        assert decode_spans(["O", "I-ENT", "O"]) == {("ENT", 1, 1)}

    def test_type_change_mid_span(self):
        tags = ["B-PER", "I-LOC"]
        assert decode_spans(tags) == {("PER", 0, 0), ("LOC", 1, 1)}

    def test_bad_tag_rejected(self):
        with pytest.raises(EvaluationError):
            decode_spans(["O", "ENTITY", "O"])


class TestSpanF1:
    def test_perfect_match(self):
        gold = [["O", "B-ENT", "I-ENT", "O"], ["B-ENT", "O"]]
        assert span_f1(gold, gold) == 1.0

    def test_all_o_against_entities(self):
        gold = [["B-ENT", "O", "B-ENT"]]
        pred = [["O", "O", "O"]]
        assert span_f1(pred, gold) == 0.0

    def test_boundary_error_scores_zero(self):
        gold = [["B-PER", "I-PER", "O"]]
        pred = [["B-PER", "O", "O"]]
        assert span_f1(pred, gold) == 0.0

    def test_partial_credit_across_spans(self):
        gold = [["B-PER", "I-PER", "O", "O", "B-LOC"]]
        pred = [["B-PER", "I-PER", "O", "O", "O"]]
        # one of one predicted span correct, one of two gold spans found
        assert span_f1(pred, gold) == pytest.approx(2 / 3)

    def test_both_empty_is_perfect(self):
        assert span_f1([["O", "O"]], [["O", "O"]]) == 1.0

    def test_sentence_count_mismatch(self):
        with pytest.raises(EvaluationError):
            span_f1([["O"]], [["O"], ["O"]])

    def test_sentence_length_mismatch(self):
        with pytest.raises(EvaluationError):
            span_f1([["O", "O"]], [["O"]])

    @given(st.lists(
        st.lists(st.sampled_from(["O", "B-ENT", "I-ENT", "B-LOC"]), min_size=1, max_size=8),
        min_size=1, max_size=5))
    def test_perfect_iff_span_sets_equal(self, tags):
        assert span_f1(tags, tags) == 1.0

    @given(
        st.lists(st.sampled_from(["O", "B-ENT", "I-ENT"]), min_size=3, max_size=8),
        st.lists(st.sampled_from(["O", "B-ENT", "I-ENT"]), min_size=3, max_size=8),
    )
    def test_one_iff_identical_decoded_spans(self, gold, pred):
        pred = pred[: len(gold)] + ["O"] * max(0, len(gold) - len(pred))
        score = span_f1([pred], [gold])
        same = decode_spans(pred) == decode_spans(gold)
        assert (score == 1.0) == same
        assert 0.0 <= score <= 1.0
