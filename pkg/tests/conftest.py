import pytest

from corpus.batching import encode_corpus, make_batches
from corpus.conll import RawSentence
from corpus.synthetic import make_synthetic_corpus
from corpus.vocab import build_vocabularies
from tagging.config import GtiConfig, Variant
from tagging.model import GtiModel

TASKS = ["ner", "chunk", "pos"]

# dimensions small enough for finite differences
TINY = dict(d_word=8, d_char=8, n_char_filters=4, state_size=8, state_sizes=[8], d_label=8)


def truncate(sentences, n_tokens):
    return [
        RawSentence(s.tokens[:n_tokens], {k: v[:n_tokens] for k, v in s.columns.items()})
        for s in sentences
    ]


@pytest.fixture
def corpus():
    return make_synthetic_corpus(12, seed=3)


@pytest.fixture
def vocabs(corpus):
    return build_vocabularies(corpus, TASKS)


@pytest.fixture
def encoded(corpus, vocabs):
    return encode_corpus(corpus, vocabs)


@pytest.fixture
def batch(encoded):
    return make_batches(encoded[:4], batch_size=4)[0]


@pytest.fixture
def make_model(vocabs):
    """Factory for tiny models of any variant sharing one corpus."""

    def build(variant=Variant.GTI, seed=1, **overrides):
        config = GtiConfig(
            variant=variant,
            main_task="ner",
            aux_tasks=["chunk", "pos"],
            tags=vocabs.tag_names(),
            **{**TINY, **overrides},
        )
        return GtiModel(config, vocabs, seed=seed)

    return build
