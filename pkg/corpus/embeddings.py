"""
Pretrained word vectors (GloVe-style text files).
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, TextIO, Tuple, Union

import torch

from corpus.vocab import PAD_ID, Vocab
from errors import DataNotFoundError, EmbeddingFormatError
from neural.core import DTYPE

logger = logging.getLogger(__name__)

OOV_BOUND = 0.25


@dataclass
class EmbeddingCoverage:
    exact: int = 0
    case_folded: int = 0
    sampled: int = 0

    @property
    def total(self) -> int:
        return self.exact + self.case_folded + self.sampled


def random_word_table(n_words: int, dim: int, generator: torch.Generator) -> torch.Tensor:
    """Rows drawn from uniform [-0.25, 0.25]; the PAD row is zero."""
    table = (torch.rand((n_words, dim), generator=generator, dtype=DTYPE) * 2.0 - 1.0) * OOV_BOUND
    table[PAD_ID] = 0.0
    return table


def _read_vectors(stream: TextIO, wanted: set, label: str) -> Tuple[Dict[str, List[float]], int]:
    vectors: Dict[str, List[float]] = {}
    dim: Optional[int] = None
    for lineno, line in enumerate(stream, 1):
        parts = line.rstrip().split(" ")
        if len(parts) < 2:
            if not line.strip():
                continue
            raise EmbeddingFormatError(f"{label}:{lineno}: no vector values")
        width = len(parts) - 1
        if dim is None:
            dim = width
        elif width != dim:
            raise EmbeddingFormatError(f"{label}:{lineno}: {width} values, expected {dim}")
        if parts[0] in wanted:
            try:
                vectors[parts[0]] = [float(v) for v in parts[1:]]
            except ValueError as exc:
                raise EmbeddingFormatError(f"{label}:{lineno}: {exc}") from exc
    if dim is None:
        raise EmbeddingFormatError(f"{label}: no vectors found")
    return vectors, dim


def load_pretrained_embeddings(source: Union[str, Path, TextIO], vocab: Vocab,
                               seed: int = 1) -> Tuple[torch.Tensor, EmbeddingCoverage]:
    """
    Build the word table for `vocab` from a pretrained vector file.

    Lookup order per word: exact match, lower-cased match, otherwise a row
    sampled from uniform [-0.25, 0.25]. The caller registers the result as
    a frozen parameter.
    """
    if isinstance(source, (str, Path)):
        path = Path(source)
        if not path.is_file():
            raise DataNotFoundError(f"embedding file not found: {path}")
        with path.open("r", encoding="utf-8") as stream:
            return load_pretrained_embeddings(stream, vocab, seed)

    label = getattr(source, "name", "<stream>")
    wanted = set(vocab.tokens) | {t.lower() for t in vocab.tokens}
    vectors, dim = _read_vectors(source, wanted, label)

    generator = torch.Generator().manual_seed(seed)
    table = random_word_table(len(vocab), dim, generator)
    coverage = EmbeddingCoverage()
    for index, token in enumerate(vocab.tokens):
        if index == PAD_ID and vocab.reserved:
            continue
        if token in vectors:
            table[index] = torch.tensor(vectors[token], dtype=DTYPE)
            coverage.exact += 1
        elif token.lower() in vectors:
            table[index] = torch.tensor(vectors[token.lower()], dtype=DTYPE)
            coverage.case_folded += 1
            logger.debug(f"Embedding for {token!r} taken from {token.lower()!r}")
        else:
            coverage.sampled += 1

    logger.info(
        f"Embeddings from {label}: dim={dim}, exact={coverage.exact}, "
        f"case_folded={coverage.case_folded}, sampled={coverage.sampled}"
    )
    return table, coverage
