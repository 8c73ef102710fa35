"""
Word-format features: a small categorical description of a token's shape
(numeric, punctuation, casing) that the model embeds next to the word and
character vectors.
"""

import re
import unicodedata
from enum import IntEnum

from errors import ArgumentError

_NUMERIC = re.compile(r"^[0-9.,\-]*[0-9][0-9.,\-]*$")
_DIGIT = re.compile(r"[0-9]")


class FormatCategory(IntEnum):
    NUMERIC = 0
    PUNCT = 1
    ALL_LOWER = 2
    INIT_UPPER = 3
    ALL_UPPER = 4
    ALNUM_MIXED = 5
    OTHER = 6


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch)[0] in ("P", "S")


def classify_word_format(token: str) -> FormatCategory:
    """
    Classify a token, first match wins:

    NUMERIC      digits with optional . , -
    PUNCT        punctuation / symbols only
    ALL_LOWER    alphabetic, lower case
    ALL_UPPER    alphabetic, upper case
    INIT_UPPER   alphabetic, capitalised then lower case
    ALNUM_MIXED  contains both a letter and a digit
    OTHER        anything else
    """
    if not token:
        raise ArgumentError("cannot classify an empty token")
    if _NUMERIC.match(token):
        return FormatCategory.NUMERIC
    if all(_is_punct(ch) for ch in token):
        return FormatCategory.PUNCT
    if token.isalpha():
        if token.islower():
            return FormatCategory.ALL_LOWER
        if token.isupper():
            return FormatCategory.ALL_UPPER
        if token[0].isupper() and token[1:].islower():
            return FormatCategory.INIT_UPPER
    if any(ch.isalpha() for ch in token) and _DIGIT.search(token):
        return FormatCategory.ALNUM_MIXED
    return FormatCategory.OTHER


def normalize_word(token: str, normalize_digits: bool = False) -> str:
    """Word-vocabulary key of a token: every digit becomes '0' when enabled."""
    return _DIGIT.sub("0", token) if normalize_digits else token
