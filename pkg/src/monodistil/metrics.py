"""Task metrics: classification accuracy and span-level F1 over BIO tags."""

from __future__ import annotations

import numpy as np

from .errors import EvaluationError

Span = tuple[str, int, int]


def accuracy(predictions, gold) -> float:
    predictions = np.asarray(predictions).reshape(-1)
    gold = np.asarray(gold).reshape(-1)
    if predictions.shape != gold.shape:
        raise EvaluationError(
            f"prediction count {predictions.shape[0]} differs from gold count {gold.shape[0]}")
    if predictions.size == 0:
        raise EvaluationError("cannot score an empty prediction set")
    return float((predictions == gold).mean())


def decode_spans(tags: list[str]) -> set[Span]:
    """BIO tags to (type, start, end) spans, ends inclusive.

    Lenient rule: an I- tag that does not continue a same-type span opens
    a new span, as if it were B-.
    """
    spans: set[Span] = set()
    start = None
    current_type = None
    for i, tag in enumerate(tags):
        if tag.startswith("B-") or (tag.startswith("I-") and tag[2:] != current_type):
            if start is not None:
                spans.add((current_type, start, i - 1))
            start, current_type = i, tag[2:]
        elif tag.startswith("I-"):
            continue
        else:
            if tag != "O":
                raise EvaluationError(f"unreadable BIO tag {tag!r} at position {i}")
            if start is not None:
                spans.add((current_type, start, i - 1))
            start, current_type = None, None
    if start is not None:
        spans.add((current_type, start, len(tags) - 1))
    return spans


def span_f1(pred_tags: list[list[str]], gold_tags: list[list[str]]) -> float:
    """Micro-averaged exact-span F1; 1.0 only when span sets coincide."""
    if len(pred_tags) != len(gold_tags):
        raise EvaluationError(
            f"prediction has {len(pred_tags)} sentences, gold has {len(gold_tags)}")
    tp = fp = fn = 0
    for idx, (pred, gold) in enumerate(zip(pred_tags, gold_tags)):
        if len(pred) != len(gold):
            raise EvaluationError(
                f"sentence {idx}: prediction length {len(pred)} differs from gold {len(gold)}")
        p_spans = decode_spans(list(pred))
        g_spans = decode_spans(list(gold))
        tp += len(p_spans & g_spans)
        fp += len(p_spans - g_spans)
        fn += len(g_spans - p_spans)
    if tp + fp + fn == 0:
        return 1.0
    return 2.0 * tp / (2.0 * tp + fp + fn)
