"""
Small generated corpus with POS, chunk and NER columns.

Entity type is fully determined by word identity and every entity word is
capitalised, so a tagger can fit it exactly. Entities are one, two or
three tokens long, which makes every IOBES prefix appear.
"""

import logging
import random
from typing import List, Tuple

from corpus.conll import RawSentence, convert_span_columns

logger = logging.getLogger(__name__)

ENTITIES = {
    "PER": [["John"], ["Mary"], ["Anna"], ["David"], ["Laura"], ["Peter"],
            ["John", "Smith"], ["Mary", "Brown"], ["Peter", "Jones"], ["Anna", "Clark"],
            ["John", "Paul", "Smith"]],
    "LOC": [["Paris"], ["London"], ["Berlin"], ["Madrid"], ["Tokyo"], ["Lisbon"],
            ["Oslo"], ["Vienna"], ["New", "South", "Wales"]],
    "ORG": [["Acme"], ["Globex"], ["Initech"], ["Umbrella"],
            ["Acme", "Corp"], ["Globex", "Steel", "Corp"], ["Initech", "Corp"]],
}

FILLER = {
    "VBD": ["visited", "met", "joined", "left", "praised", "called"],
    "DT": ["the", "a"],
    "JJ": ["new", "big", "local", "old"],
    "NN": ["report", "team", "office", "deal", "market", "city", "plan", "meeting"],
    "IN": ["in", "with", "from", "near"],
}

# E = entity, V = verb, NP = determiner (+ adjective) + noun, P = preposition
TEMPLATES = [
    ["E", "V", "E", "P", "NP", "."],
    ["NP", "V", "P", "E", "."],
    ["E", "V", "NP", "P", "E", "."],
    ["E", "P", "E", "V", "NP", "."],
]

Token = Tuple[str, str, str, str]


def _entity(rng: random.Random) -> List[Token]:
    kind = rng.choice(sorted(ENTITIES))
    words = rng.choice(ENTITIES[kind])
    return [
        (word, "NNP", ("B-NP" if i == 0 else "I-NP"), ("B-" if i == 0 else "I-") + kind)
        for i, word in enumerate(words)
    ]


def _noun_phrase(rng: random.Random) -> List[Token]:
    words = [("DT", rng.choice(FILLER["DT"]))]
    if rng.random() < 0.5:
        words.append(("JJ", rng.choice(FILLER["JJ"])))
    words.append(("NN", rng.choice(FILLER["NN"])))
    return [
        (word, pos, ("B-NP" if i == 0 else "I-NP"), "O")
        for i, (pos, word) in enumerate(words)
    ]


def _sentence(rng: random.Random) -> RawSentence:
    tokens: List[Token] = []
    for slot in rng.choice(TEMPLATES):
        if slot == "E":
            tokens.extend(_entity(rng))
        elif slot == "NP":
            tokens.extend(_noun_phrase(rng))
        elif slot == "V":
            tokens.append((rng.choice(FILLER["VBD"]), "VBD", "B-VP", "O"))
        elif slot == "P":
            tokens.append((rng.choice(FILLER["IN"]), "IN", "B-PP", "O"))
        else:
            tokens.append((".", ".", "O", "O"))
    words, pos, chunk, ner = (list(column) for column in zip(*tokens))
    return RawSentence(words, {"pos": pos, "chunk": chunk, "ner": ner})


def make_synthetic_corpus(n_sentences: int = 30, seed: int = 1) -> List[RawSentence]:
    """Deterministic corpus in conll2003 layout (pos, chunk, ner), span columns in IOBES."""
    rng = random.Random(seed)
    sentences = convert_span_columns([_sentence(rng) for _ in range(n_sentences)])
    logger.debug(f"Generated {len(sentences)} synthetic sentences (seed={seed})")
    return sentences
