"""
CoNLL column corpora and tag-scheme conversion.

Supported layouts:
- conll2000: TOKEN POS CHUNK
- conll2003: TOKEN POS CHUNK NER (-DOCSTART- lines skipped)
- tokens:    TOKEN (prediction input)
"""

import io
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, TextIO, Union

from errors import ArgumentError, DataNotFoundError, ParseError

logger = logging.getLogger(__name__)

DATA_FORMATS: Dict[str, List[str]] = {
    "conll2000": ["pos", "chunk"],
    "conll2003": ["pos", "chunk", "ner"],
    "tokens": [],
}

DOCSTART = "-DOCSTART-"
SPAN_PREFIXES = ("B", "I", "E", "S")


@dataclass
class RawSentence:
    tokens: List[str]
    columns: Dict[str, List[str]] = field(default_factory=dict)

    def __post_init__(self):
        for name, tags in self.columns.items():
            if len(tags) != len(self.tokens):
                raise ParseError(
                    f"column {name!r} has {len(tags)} tags for {len(self.tokens)} tokens"
                )

    def __len__(self) -> int:
        return len(self.tokens)


class TagScheme(str, Enum):
    IOB1 = "IOB1"
    IOB2 = "IOB2"
    IOBES = "IOBES"


# -----------------------------
# READING
# -----------------------------

def _open(source: Union[str, Path, TextIO]):
    if isinstance(source, (str, Path)):
        path = Path(source)
        if not path.is_file():
            raise DataNotFoundError(f"data file not found: {path}")
        return path.open("r", encoding="utf-8"), str(path)
    return source, getattr(source, "name", "<stream>")


def parse_conll(source: Union[str, Path, TextIO], n_columns: int,
                column_names: Optional[Sequence[str]] = None) -> List[RawSentence]:
    """
    Read a whitespace-separated column file.

    Args:
        source: path or text stream
        n_columns: fields required per non-blank line (token included)
        column_names: names of the tag columns after the token;
            defaults to col1..col{n_columns-1}

    Returns:
        sentences in file order (empty file -> [])
    """
    if n_columns < 1:
        raise ArgumentError("n_columns must be >= 1")
    names = list(column_names) if column_names is not None else [
        f"col{i}" for i in range(1, n_columns)
    ]
    if len(names) != n_columns - 1:
        raise ArgumentError(f"{len(names)} column names for {n_columns - 1} tag columns")

    stream, label = _open(source)
    sentences: List[RawSentence] = []
    tokens: List[str] = []
    columns: List[List[str]] = [[] for _ in names]

    def _flush():
        nonlocal tokens, columns
        if tokens:
            sentences.append(RawSentence(tokens, dict(zip(names, columns))))
        tokens, columns = [], [[] for _ in names]

    try:
        for lineno, line in enumerate(stream, 1):
            parts = line.split()
            if not parts:
                _flush()
                continue
            if parts[0] == DOCSTART:
                continue
            if len(parts) < n_columns:
                raise ParseError(
                    f"{label}:{lineno}: expected {n_columns} fields, got {len(parts)}: {line.rstrip()!r}"
                )
            tokens.append(parts[0])
            for column, value in zip(columns, parts[1:n_columns]):
                column.append(value)
        _flush()
    finally:
        if isinstance(source, (str, Path)):
            stream.close()

    logger.info(f"Read {len(sentences)} sentences from {label}")
    return sentences


def read_corpus(source: Union[str, Path, TextIO], data_format: str) -> List[RawSentence]:
    """Read a corpus in one of DATA_FORMATS and convert its span columns to IOBES."""
    if data_format not in DATA_FORMATS:
        raise ArgumentError(f"unknown data format {data_format!r}, expected one of {list(DATA_FORMATS)}")
    names = DATA_FORMATS[data_format]
    sentences = parse_conll(source, len(names) + 1, names)
    return convert_span_columns(sentences)


def write_conll(sentences: Iterable[RawSentence], stream: TextIO,
                column_order: Optional[Sequence[str]] = None) -> None:
    for sentence in sentences:
        order = list(column_order) if column_order is not None else list(sentence.columns)
        for i, token in enumerate(sentence.tokens):
            stream.write(" ".join([token] + [sentence.columns[c][i] for c in order]) + "\n")
        stream.write("\n")


def format_conll(sentences: Iterable[RawSentence], column_order: Optional[Sequence[str]] = None) -> str:
    buffer = io.StringIO()
    write_conll(sentences, buffer, column_order)
    return buffer.getvalue()


# -----------------------------
# TAG SCHEMES
# -----------------------------

def split_tag(tag: str):
    """'B-PER' -> ('B', 'PER'); 'O' -> ('O', None)."""
    if tag == "O":
        return "O", None
    prefix, sep, kind = tag.partition("-")
    if not sep or prefix not in SPAN_PREFIXES or not kind:
        raise ParseError(f"malformed span tag {tag!r}")
    return prefix, kind


def is_span_column(tags: Iterable[str]) -> bool:
    try:
        for tag in tags:
            split_tag(tag)
    except ParseError:
        return False
    return True


def detect_scheme(tags: Sequence[str]) -> TagScheme:
    previous = "O"
    iob1 = False
    for tag in tags:
        prefix, kind = split_tag(tag)
        if prefix in ("E", "S"):
            return TagScheme.IOBES
        if prefix == "I":
            prev_prefix, prev_kind = split_tag(previous)
            if prev_prefix == "O" or prev_kind != kind:
                iob1 = True
        previous = tag
    return TagScheme.IOB1 if iob1 else TagScheme.IOB2


def to_iob2(tags: Sequence[str]) -> List[str]:
    """Open every chunk with B-: an I-X after O or another type becomes B-X."""
    out: List[str] = []
    previous_kind = None
    for i, tag in enumerate(tags):
        prefix, kind = split_tag(tag)
        if prefix in ("E", "S"):
            raise ParseError(f"to_iob2 got an IOBES tag {tag!r}")
        if prefix == "I" and previous_kind != kind:
            logger.debug(f"Orphan {tag} at position {i} opened as B-{kind}")
            tag = f"B-{kind}"
        out.append(tag)
        previous_kind = kind
    return out


def to_iobes(tags: Sequence[str]) -> List[str]:
    """
    IOB1/IOB2 -> IOBES.

    Single-token chunks become S-X, longer chunks B-X I-X... E-X.
    Input that is already IOBES is returned unchanged.
    """
    if detect_scheme(tags) == TagScheme.IOBES:
        return list(tags)
    iob2 = to_iob2(tags)
    out: List[str] = []
    for i, tag in enumerate(iob2):
        if tag == "O":
            out.append(tag)
            continue
        prefix, kind = split_tag(tag)
        continues = i + 1 < len(iob2) and iob2[i + 1] == f"I-{kind}"
        if prefix == "B":
            out.append(f"B-{kind}" if continues else f"S-{kind}")
        else:
            out.append(f"I-{kind}" if continues else f"E-{kind}")
    return out


def convert_span_columns(sentences: List[RawSentence]) -> List[RawSentence]:
    """Rewrite every column that is span-shaped across the whole corpus into IOBES."""
    if not sentences:
        return sentences
    names = list(sentences[0].columns)
    span_names = [
        name for name in names
        if is_span_column(tag for s in sentences for tag in s.columns.get(name, ()))
    ]
    for sentence in sentences:
        for name in span_names:
            sentence.columns[name] = to_iobes(sentence.columns[name])
    if span_names:
        logger.info(f"Converted span columns {span_names} to IOBES")
    return sentences
