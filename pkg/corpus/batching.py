"""
Id encoding, validation splitting and padded batching.
"""

import logging
import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import torch

from corpus.conll import RawSentence
from corpus.formats import classify_word_format, normalize_word
from corpus.vocab import PAD_ID, Vocabularies
from errors import ArgumentError

logger = logging.getLogger(__name__)

DEV_SIZE = 1000
BATCH_SIZE = 10


@dataclass
class EncodedSentence:
    tokens: List[str]
    words: List[int]
    chars: List[List[int]]
    formats: List[int]
    tags: Dict[str, List[int]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass
class Batch:
    word_ids: torch.Tensor
    char_ids: torch.Tensor
    char_lengths: torch.Tensor
    format_ids: torch.Tensor
    mask: torch.Tensor
    lengths: List[int]
    tags: Dict[str, torch.Tensor]
    sentences: List[EncodedSentence]

    @property
    def size(self) -> int:
        return len(self.lengths)


def encode_sentence(sentence: RawSentence, vocabs: Vocabularies,
                    normalize_digits: bool = False) -> EncodedSentence:
    """Resolve word, char, format and tag ids; tags only for columns the vocabularies know."""
    return EncodedSentence(
        tokens=list(sentence.tokens),
        words=[vocabs.words.id(normalize_word(t, normalize_digits)) for t in sentence.tokens],
        chars=[vocabs.chars.ids(list(t)) for t in sentence.tokens],
        formats=[int(classify_word_format(t)) for t in sentence.tokens],
        tags={
            task: vocabs.tags[task].ids(column)
            for task, column in sentence.columns.items()
            if task in vocabs.tags
        },
    )


def encode_corpus(sentences: Sequence[RawSentence], vocabs: Vocabularies,
                  normalize_digits: bool = False) -> List[EncodedSentence]:
    return [encode_sentence(s, vocabs, normalize_digits) for s in sentences]


def collate(sentences: Sequence[EncodedSentence]) -> Batch:
    """Pad a list of sentences to the longest one; mask marks real tokens."""
    if not sentences:
        raise ArgumentError("cannot batch zero sentences")
    lengths = [len(s) for s in sentences]
    if min(lengths) < 1:
        raise ArgumentError("cannot batch an empty sentence")
    batch, steps = len(sentences), max(lengths)
    max_chars = max(len(chars) for s in sentences for chars in s.chars)

    word_ids = torch.full((batch, steps), PAD_ID, dtype=torch.long)
    format_ids = torch.zeros((batch, steps), dtype=torch.long)
    char_ids = torch.full((batch, steps, max_chars), PAD_ID, dtype=torch.long)
    # padded tokens count as one PAD character
    char_lengths = torch.ones((batch, steps), dtype=torch.long)
    mask = torch.zeros((batch, steps), dtype=torch.bool)

    shared_tasks = set.intersection(*(set(s.tags) for s in sentences))
    tags = {task: torch.zeros((batch, steps), dtype=torch.long) for task in sorted(shared_tasks)}

    for b, s in enumerate(sentences):
        n = len(s)
        word_ids[b, :n] = torch.as_tensor(s.words)
        format_ids[b, :n] = torch.as_tensor(s.formats)
        mask[b, :n] = True
        for i, chars in enumerate(s.chars):
            char_ids[b, i, :len(chars)] = torch.as_tensor(chars, dtype=torch.long)
            char_lengths[b, i] = max(len(chars), 1)
        for task in tags:
            tags[task][b, :n] = torch.as_tensor(s.tags[task])

    return Batch(word_ids, char_ids, char_lengths, format_ids, mask, lengths, tags, list(sentences))


def make_batches(sentences: Sequence[EncodedSentence], batch_size: int = BATCH_SIZE,
                 seed: Optional[int] = None) -> List[Batch]:
    """Shuffle (when seeded) and cut into padded batches; the last one may be short."""
    if batch_size < 1:
        raise ArgumentError(f"batch_size must be >= 1, got {batch_size}")
    order = list(range(len(sentences)))
    if seed is not None:
        random.Random(seed).shuffle(order)
    return [
        collate([sentences[i] for i in order[start:start + batch_size]])
        for start in range(0, len(order), batch_size)
    ]


def split_validation(train: Sequence, n: int = DEV_SIZE, seed: int = 1) -> Tuple[list, list]:
    """
    Sample `n` sentences (without replacement) as a dev set.

    Both parts keep the original relative order.
    """
    if len(train) <= n:
        raise ArgumentError(f"cannot take {n} dev sentences from {len(train)} training sentences")
    dev_index = set(random.Random(seed).sample(range(len(train)), n))
    remaining = [s for i, s in enumerate(train) if i not in dev_index]
    dev = [s for i, s in enumerate(train) if i in dev_index]
    logger.info(f"Validation split: {len(remaining)} train / {len(dev)} dev (seed={seed})")
    return remaining, dev
