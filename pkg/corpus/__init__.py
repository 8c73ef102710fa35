"""
Corpus handling: CoNLL reading, tag schemes, word formats, vocabularies,
pretrained embeddings, batching and a synthetic corpus.
"""
