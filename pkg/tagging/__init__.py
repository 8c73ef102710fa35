"""
Sequence tagging heads and the GTI network.

Currently exposes:
- CRF scoring, loss and Viterbi decoding (crf)
- validated model configuration and variants (config)
- the multi-task model (model)
"""
