"""
Span-level scoring.

Currently exposes:
- spans_from_tags / tags_from_spans
- micro_f1, token_accuracy and EvalReport
"""
