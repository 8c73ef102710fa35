"""
Reusable neural layers built on the differentiable core.

Parameters live in a ParamStore; each layer here is a small dataclass of
references into the store plus a function that applies it.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

import torch
import torch.nn.functional as F

from errors import ArgumentError, DimensionError, EmbeddingLookupError
from neural.core import DTYPE, DiffNode, ParamStore, linear, matvec, sigmoid, tanh

logger = logging.getLogger(__name__)

CHAR_TABLE_BOUND = 0.5
FORGET_BIAS = 1.0


# -----------------------------
# EMBEDDINGS
# -----------------------------

def embedding_lookup(table: DiffNode, ids: Union[int, Sequence[int], torch.Tensor]) -> DiffNode:
    """
    Read rows of a lookup table.

    Gradients only reach the rows that were read; a frozen table
    (requires_grad=False) never receives any.
    """
    index = torch.as_tensor(ids, dtype=torch.long)
    if index.numel() > 0:
        low, high = int(index.min()), int(index.max())
        if low < 0 or high >= table.shape[0]:
            bad = low if low < 0 else high
            raise EmbeddingLookupError(f"id {bad} outside table with {table.shape[0]} rows")
    return table[index]


# -----------------------------
# CHARACTER CNN
# -----------------------------

@dataclass
class CharCnnParams:
    char_table: DiffNode
    filters: DiffNode
    bias: DiffNode
    width: int
    pad_id: int = 0

    @property
    def n_filters(self) -> int:
        return self.filters.shape[0]

    @classmethod
    def create(cls, store: ParamStore, prefix: str, n_chars: int, d_char: int,
               n_filters: int = 30, width: int = 3, pad_id: int = 0) -> "CharCnnParams":
        return cls(
            char_table=store.uniform(f"{prefix}.table", (n_chars, d_char), CHAR_TABLE_BOUND),
            filters=store.glorot(f"{prefix}.filters", (n_filters, d_char, width)),
            bias=store.zeros(f"{prefix}.bias", (n_filters,)),
            width=width,
            pad_id=pad_id,
        )


def char_cnn(chars: Union[Sequence[int], torch.Tensor], p: CharCnnParams,
             lengths: Optional[Sequence[int]] = None, dropout=None) -> DiffNode:
    """
    Character-level word features: embed, convolve, tanh, max over time.

    Args:
        chars: char ids of one token, or a (tokens, max_chars) padded id matrix
        p: CNN parameters
        lengths: real char count per row of a padded matrix
        dropout: optional callable applied to the character embeddings

    Returns:
        (n_filters,) for one token, (tokens, n_filters) for a matrix
    """
    single = not torch.is_tensor(chars) or chars.dim() == 1
    if single:
        ids = torch.as_tensor(list(chars), dtype=torch.long).unsqueeze(0)
        lengths = [ids.shape[1]]
    else:
        ids = chars.long()
        if lengths is None:
            lengths = [ids.shape[1]] * ids.shape[0]
    lengths_t = torch.as_tensor(list(lengths), dtype=torch.long)
    if ids.shape[0] == 0 or int(lengths_t.min()) < 1:
        raise ArgumentError("char_cnn needs tokens with at least one character")

    if ids.shape[1] < p.width:
        pad = torch.full((ids.shape[0], p.width - ids.shape[1]), p.pad_id, dtype=torch.long)
        ids = torch.cat([ids, pad], dim=1)

    emb = embedding_lookup(p.char_table, ids)
    if dropout is not None:
        emb = dropout(emb)
    conv = tanh(F.conv1d(emb.transpose(1, 2), p.filters, p.bias))

    # windows past max(len, width) only ever saw padding
    n_windows = lengths_t.clamp(min=p.width) - p.width + 1
    valid = torch.arange(conv.shape[2]).unsqueeze(0) < n_windows.unsqueeze(1)
    conv = conv.masked_fill(~valid.unsqueeze(1), float("-inf"))
    pooled = conv.max(dim=2).values
    return pooled[0] if single else pooled


# -----------------------------
# LSTM / BiLSTM
# -----------------------------

@dataclass
class LstmParams:
    """Gate weights stacked in (input, forget, cell, output) order."""

    W: DiffNode
    U: DiffNode
    b: DiffNode
    d_in: int
    d_h: int

    @classmethod
    def create(cls, store: ParamStore, prefix: str, d_in: int, d_h: int) -> "LstmParams":
        bias = torch.zeros(4 * d_h, dtype=DTYPE)
        bias[d_h:2 * d_h] = FORGET_BIAS
        return cls(
            W=store.glorot(f"{prefix}.W", (4 * d_h, d_in)),
            U=store.glorot(f"{prefix}.U", (4 * d_h, d_h)),
            b=store.add(f"{prefix}.b", bias),
            d_in=d_in,
            d_h=d_h,
        )


@dataclass
class BiLstmParams:
    fwd: LstmParams
    bwd: LstmParams

    @property
    def d_in(self) -> int:
        return self.fwd.d_in

    @property
    def d_h(self) -> int:
        return self.fwd.d_h

    @classmethod
    def create(cls, store: ParamStore, prefix: str, d_in: int, d_h: int) -> "BiLstmParams":
        return cls(
            fwd=LstmParams.create(store, f"{prefix}.fwd", d_in, d_h),
            bwd=LstmParams.create(store, f"{prefix}.bwd", d_in, d_h),
        )


def lstm(xs: DiffNode, p: LstmParams) -> DiffNode:
    """Left-to-right LSTM over a (batch, steps, d_in) tensor from a zero state."""
    batch, steps, _ = xs.shape
    d_h = p.d_h
    projected = linear(p.W, xs, p.b)
    h = xs.new_zeros((batch, d_h))
    c = xs.new_zeros((batch, d_h))
    outputs: List[DiffNode] = []
    for t in range(steps):
        z = projected[:, t] + matvec(p.U, h)
        gates = sigmoid(z)
        cell = tanh(z[:, 2 * d_h:3 * d_h])
        c = gates[:, d_h:2 * d_h] * c + gates[:, :d_h] * cell
        h = gates[:, 3 * d_h:] * tanh(c)
        outputs.append(h)
    return torch.stack(outputs, dim=1)


def reverse_padded(xs: torch.Tensor, lengths: Sequence[int]) -> torch.Tensor:
    """Reverse each row's first `length` steps, leaving padding in place."""
    batch, steps = xs.shape[0], xs.shape[1]
    positions = torch.arange(steps).unsqueeze(0).expand(batch, steps)
    lens = torch.as_tensor(list(lengths), dtype=torch.long).unsqueeze(1)
    index = torch.where(positions < lens, lens - 1 - positions, positions)
    index = index.view(batch, steps, *([1] * (xs.dim() - 2))).expand_as(xs)
    return xs.gather(1, index)


def bilstm(xs: DiffNode, p: BiLstmParams, lengths: Optional[Sequence[int]] = None) -> DiffNode:
    """
    Bidirectional LSTM; output_t = [h_fwd_t ; h_bwd_t].

    Accepts one (steps, d_in) sequence or a padded (batch, steps, d_in)
    batch with per-row lengths. Padded steps never influence real ones.
    """
    single = xs.dim() == 2
    if single:
        xs = xs.unsqueeze(0)
    if xs.dim() != 3 or xs.shape[-1] != p.d_in:
        raise DimensionError(f"bilstm expects inputs of dim {p.d_in}, got shape {tuple(xs.shape)}")
    if xs.shape[1] == 0:
        raise ArgumentError("bilstm over an empty sequence")
    if lengths is None:
        lengths = [xs.shape[1]] * xs.shape[0]

    forward = lstm(xs, p.fwd)
    backward = reverse_padded(lstm(reverse_padded(xs, lengths), p.bwd), lengths)
    out = torch.cat([forward, backward], dim=-1)
    return out[0] if single else out


# -----------------------------
# DROPOUT
# -----------------------------

def apply_dropout(x: DiffNode, rate: float, train: bool,
                  generator: Optional[torch.Generator] = None) -> DiffNode:
    """Inverted dropout: identity in eval mode, rescaled survivors in train mode."""
    if not 0.0 <= rate < 1.0:
        raise ArgumentError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return x
    keep = torch.rand(x.shape, generator=generator, dtype=x.dtype) >= rate
    return x * keep.to(x.dtype) / (1.0 - rate)
