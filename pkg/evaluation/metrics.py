"""
Span-level micro-averaged precision / recall / F1 (conlleval semantics)
and token accuracy.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set

from corpus.conll import split_tag
from errors import ArgumentError, ParseError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, order=True)
class Span:
    type: str
    start: int
    end: int  # inclusive


# -----------------------------
# SPANS
# -----------------------------

def _end_of_chunk(prev_prefix: str, prefix: str, prev_type, type_) -> bool:
    if prev_prefix in ("E", "S"):
        return True
    if prev_prefix in ("B", "I") and prefix in ("B", "S", "O"):
        return True
    return prev_prefix != "O" and prev_type != type_


def _start_of_chunk(prev_prefix: str, prefix: str, prev_type, type_) -> bool:
    if prefix in ("B", "S"):
        return True
    if prefix in ("I", "E") and prev_prefix in ("E", "S", "O"):
        return True
    return prefix != "O" and prev_type != type_


def spans_from_tags(tags: Sequence[str]) -> Set[Span]:
    """
    Extract typed spans from an IOBES (or IOB) tag sequence.

    Malformed runs are closed at the last consistent position the way
    conlleval does it.
    """
    spans: Set[Span] = set()
    prev_prefix, prev_type = "O", None
    start: Optional[int] = None
    for i, tag in enumerate(tags):
        prefix, type_ = split_tag(tag)
        if start is not None and _end_of_chunk(prev_prefix, prefix, prev_type, type_):
            spans.add(Span(prev_type, start, i - 1))
            start = None
        if _start_of_chunk(prev_prefix, prefix, prev_type, type_):
            start = i
        prev_prefix, prev_type = prefix, type_
    if start is not None:
        spans.add(Span(prev_type, start, len(tags) - 1))
    return spans


def tags_from_spans(spans: Iterable[Span], n: int) -> List[str]:
    """IOBES tags of length n for non-overlapping spans."""
    tags = ["O"] * n
    for span in sorted(spans, key=lambda s: s.start):
        if not 0 <= span.start <= span.end < n:
            raise ArgumentError(f"span {span} outside a sentence of {n} tokens")
        if any(t != "O" for t in tags[span.start:span.end + 1]):
            raise ArgumentError(f"span {span} overlaps another span")
        if span.start == span.end:
            tags[span.start] = f"S-{span.type}"
            continue
        tags[span.start] = f"B-{span.type}"
        for i in range(span.start + 1, span.end):
            tags[i] = f"I-{span.type}"
        tags[span.end] = f"E-{span.type}"
    return tags


# -----------------------------
# REPORT
# -----------------------------

def _prf(correct: int, predicted: int, gold: int):
    precision = correct / predicted if predicted else 0.0
    recall = correct / gold if gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


@dataclass
class SpanCounts:
    gold: int = 0
    predicted: int = 0
    correct: int = 0

    @property
    def precision(self) -> float:
        return _prf(self.correct, self.predicted, self.gold)[0]

    @property
    def recall(self) -> float:
        return _prf(self.correct, self.predicted, self.gold)[1]

    @property
    def f1(self) -> float:
        return _prf(self.correct, self.predicted, self.gold)[2]


@dataclass
class EvalReport:
    overall: SpanCounts = field(default_factory=SpanCounts)
    per_type: Dict[str, SpanCounts] = field(default_factory=dict)
    tokens: int = 0
    correct_tokens: int = 0
    task: str = ""

    @property
    def precision(self) -> float:
        return self.overall.precision

    @property
    def recall(self) -> float:
        return self.overall.recall

    @property
    def f1(self) -> float:
        return self.overall.f1

    @property
    def token_accuracy(self) -> float:
        return self.correct_tokens / self.tokens if self.tokens else 0.0

    def to_text(self) -> str:
        """Flat key=value block; floats use repr so re-parsing is exact."""
        lines = [f"task={self.task}"]
        rows = [("", self.overall)] + [(f"type.{t}.", c) for t, c in sorted(self.per_type.items())]
        for prefix, counts in rows:
            lines += [
                f"{prefix}gold={counts.gold}",
                f"{prefix}predicted={counts.predicted}",
                f"{prefix}correct={counts.correct}",
                f"{prefix}precision={counts.precision!r}",
                f"{prefix}recall={counts.recall!r}",
                f"{prefix}f1={counts.f1!r}",
            ]
        lines += [
            f"tokens={self.tokens}",
            f"correct_tokens={self.correct_tokens}",
            f"token_accuracy={self.token_accuracy!r}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "EvalReport":
        values: Dict[str, str] = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ParseError(f"report line {lineno}: expected key=value, got {line!r}")
            values[key.strip()] = value.strip()

        def counts(prefix: str) -> SpanCounts:
            return SpanCounts(
                gold=int(values[f"{prefix}gold"]),
                predicted=int(values[f"{prefix}predicted"]),
                correct=int(values[f"{prefix}correct"]),
            )

        try:
            types = sorted({k[len("type."):].rpartition(".")[0] for k in values if k.startswith("type.")})
            return cls(
                overall=counts(""),
                per_type={t: counts(f"type.{t}.") for t in types},
                tokens=int(values["tokens"]),
                correct_tokens=int(values["correct_tokens"]),
                task=values.get("task", ""),
            )
        except (KeyError, ValueError) as exc:
            raise ParseError(f"incomplete evaluation report: {exc}") from exc

    def to_table(self) -> str:
        """Human-readable summary in the conlleval layout."""
        o = self.overall
        lines = [
            f"[{self.task or 'all'}] processed {self.tokens} tokens with {o.gold} phrases; "
            f"found: {o.predicted} phrases; correct: {o.correct}.",
            f"accuracy: {100 * self.token_accuracy:6.2f}%; precision: {100 * o.precision:6.2f}%; "
            f"recall: {100 * o.recall:6.2f}%; FB1: {100 * o.f1:6.2f}",
        ]
        for name, c in sorted(self.per_type.items()):
            lines.append(
                f"{name:>17}: precision: {100 * c.precision:6.2f}%; recall: {100 * c.recall:6.2f}%; "
                f"FB1: {100 * c.f1:6.2f}  {c.predicted}"
            )
        return "\n".join(lines)


# -----------------------------
# SCORING
# -----------------------------

def _check_shapes(gold: Sequence[Sequence], pred: Sequence[Sequence]) -> None:
    if len(gold) != len(pred):
        raise ArgumentError(f"{len(gold)} gold sentences vs {len(pred)} predicted")
    for i, (g, p) in enumerate(zip(gold, pred)):
        if len(g) != len(p):
            raise ArgumentError(f"sentence {i}: {len(g)} gold tags vs {len(p)} predicted")


def micro_f1(gold: Sequence[Sequence[str]], pred: Sequence[Sequence[str]], task: str = "") -> EvalReport:
    """
    Pool span counts over all sentences and types.

    A predicted span is correct iff its type and both boundaries match a
    gold span.
    """
    _check_shapes(gold, pred)
    per_type: Dict[str, SpanCounts] = defaultdict(SpanCounts)
    report = EvalReport(task=task)
    for g_tags, p_tags in zip(gold, pred):
        g_spans, p_spans = spans_from_tags(g_tags), spans_from_tags(p_tags)
        for span in g_spans:
            per_type[span.type].gold += 1
        for span in p_spans:
            per_type[span.type].predicted += 1
        for span in g_spans & p_spans:
            per_type[span.type].correct += 1
        report.tokens += len(g_tags)
        report.correct_tokens += sum(1 for a, b in zip(g_tags, p_tags) if a == b)

    report.per_type = dict(per_type)
    for counts in report.per_type.values():
        report.overall.gold += counts.gold
        report.overall.predicted += counts.predicted
        report.overall.correct += counts.correct
    return report


def token_accuracy(gold: Sequence[Sequence], pred: Sequence[Sequence],
                   mask: Optional[Sequence[Sequence[bool]]] = None) -> float:
    """Fraction of positions with equal tags; masked-out positions are ignored."""
    _check_shapes(gold, pred)
    if mask is not None:
        _check_shapes(gold, mask)
    total = correct = 0
    for i, (g_tags, p_tags) in enumerate(zip(gold, pred)):
        keep = mask[i] if mask is not None else [True] * len(g_tags)
        for a, b, real in zip(g_tags, p_tags, keep):
            if bool(real):
                total += 1
                correct += int(a == b)
    return correct / total if total else 0.0


def token_report(gold: Sequence[Sequence[str]], pred: Sequence[Sequence[str]], task: str = "") -> EvalReport:
    """Report for non-span tasks: token counts only."""
    _check_shapes(gold, pred)
    return EvalReport(
        tokens=sum(len(g) for g in gold),
        correct_tokens=sum(1 for g, p in zip(gold, pred) for a, b in zip(g, p) if a == b),
        task=task,
    )
