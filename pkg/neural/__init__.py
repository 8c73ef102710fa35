"""
Differentiable core and neural layers.
Currently exposes:
- core: matvec, activation, logsumexp, ParamStore, backward
- layers: embedding_lookup, char_cnn, bilstm, apply_dropout
- gradcheck: check_gradients
"""
