"""
Token <-> id vocabularies.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

from corpus.formats import normalize_word
from errors import ArgumentError

logger = logging.getLogger(__name__)

PAD = "<pad>"
UNK = "<unk>"
PAD_ID = 0
UNK_ID = 1


class Vocab:
    """
    Bijective token/id map.

    Word and character vocabularies reserve PAD=0 and UNK=1 and fall back
    to UNK for unseen tokens. Tag vocabularies have no reserved entries
    and reject unknown tags.
    """

    def __init__(self, tokens: Iterable[str] = (), reserved: bool = True):
        self.reserved = reserved
        self.frozen = False
        self._ids: Dict[str, int] = {}
        self.tokens: List[str] = []
        if reserved:
            self.add(PAD)
            self.add(UNK)
        for token in tokens:
            self.add(token)

    def add(self, token: str) -> int:
        if token in self._ids:
            return self._ids[token]
        if self.frozen:
            raise ArgumentError(f"cannot add {token!r} to a frozen vocabulary")
        self._ids[token] = len(self.tokens)
        self.tokens.append(token)
        return self._ids[token]

    def freeze(self) -> "Vocab":
        self.frozen = True
        return self

    def id(self, token: str) -> int:
        if token in self._ids:
            return self._ids[token]
        if self.reserved:
            return UNK_ID
        raise ArgumentError(f"unknown tag {token!r}")

    def ids(self, tokens: Sequence[str]) -> List[int]:
        return [self.id(t) for t in tokens]

    def token(self, index: int) -> str:
        return self.tokens[index]

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def __len__(self) -> int:
        return len(self.tokens)

    def to_dict(self) -> dict:
        return {"tokens": list(self.tokens), "reserved": self.reserved}

    @classmethod
    def from_dict(cls, data: dict) -> "Vocab":
        vocab = cls(reserved=False)
        for token in data["tokens"]:
            vocab.add(token)
        vocab.reserved = bool(data["reserved"])
        return vocab.freeze()


@dataclass
class Vocabularies:
    words: Vocab
    chars: Vocab
    tags: Dict[str, Vocab] = field(default_factory=dict)

    def tag_names(self) -> Dict[str, List[str]]:
        return {task: list(v.tokens) for task, v in self.tags.items()}

    def to_dict(self) -> dict:
        return {
            "words": self.words.to_dict(),
            "chars": self.chars.to_dict(),
            "tags": {task: v.to_dict() for task, v in self.tags.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Vocabularies":
        return cls(
            words=Vocab.from_dict(data["words"]),
            chars=Vocab.from_dict(data["chars"]),
            tags={task: Vocab.from_dict(v) for task, v in data["tags"].items()},
        )


def build_vocabularies(sentences, tasks: Sequence[str], normalize_digits: bool = False,
                       extra_words: Optional[Iterable[str]] = None) -> Vocabularies:
    """
    Collect word, character and per-task tag vocabularies.

    Tag ids follow first appearance; the word vocabulary also receives
    `extra_words` (for example every token of the dev/test splits, whose
    vectors come from the frozen pretrained table).
    """
    words, chars = Vocab(), Vocab()
    tags = {task: Vocab(reserved=False) for task in tasks}
    for sentence in sentences:
        for token in sentence.tokens:
            words.add(normalize_word(token, normalize_digits))
            for ch in token:
                chars.add(ch)
        for task in tasks:
            if task not in sentence.columns:
                raise ArgumentError(f"sentence has no {task!r} column")
            for tag in sentence.columns[task]:
                tags[task].add(tag)
    for token in extra_words or ():
        words.add(normalize_word(token, normalize_digits))

    logger.info(
        f"Vocabularies: {len(words)} words, {len(chars)} chars, "
        + ", ".join(f"{task}={len(v)} tags" for task, v in tags.items())
    )
    return Vocabularies(words.freeze(), chars.freeze(), {t: v.freeze() for t, v in tags.items()})
