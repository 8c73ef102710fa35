"""
Linear-chain CRF.

Scores a tag sequence, computes the exact log-partition with the forward
algorithm, turns both into a negative log-likelihood, and finds the
one-best sequence with Viterbi. Transitions are a (t+2) x (t+2) matrix
indexed [from, to]; the two extra rows/columns are the virtual START and
STOP states.

Forbidden transitions (into START, out of STOP, and anything a constraint
mask rules out) score NEG inside differentiable paths and -inf in decoding.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch

from corpus.conll import split_tag
from errors import ArgumentError, DimensionError
from neural.core import DiffNode, ParamStore, logsumexp

logger = logging.getLogger(__name__)

NEG = -1e4
TRANSITION_INIT_BOUND = 0.1


@dataclass
class CrfHead:
    transitions: DiffNode
    tag_names: Optional[List[str]] = None
    constraint_mask: Optional[torch.Tensor] = None

    @property
    def n_tags(self) -> int:
        return self.transitions.shape[0] - 2

    @property
    def start(self) -> int:
        return self.n_tags

    @property
    def stop(self) -> int:
        return self.n_tags + 1

    @classmethod
    def create(cls, store: ParamStore, prefix: str, tag_names: Sequence[str],
               use_constraints: bool = False) -> "CrfHead":
        size = len(tag_names) + 2
        transitions = store.uniform(f"{prefix}.transitions", (size, size), TRANSITION_INIT_BOUND)
        mask = build_iobes_mask(tag_names) if use_constraints else None
        return cls(transitions=transitions, tag_names=list(tag_names), constraint_mask=mask)

    def allowed(self) -> torch.Tensor:
        size = self.n_tags + 2
        allowed = torch.ones((size, size), dtype=torch.bool)
        allowed[:, self.start] = False
        allowed[self.stop, :] = False
        if self.constraint_mask is not None:
            allowed &= self.constraint_mask
        return allowed

    def scoring_transitions(self) -> DiffNode:
        neg = torch.full_like(self.transitions, NEG)
        return torch.where(self.allowed(), self.transitions, neg)

    def decode_transitions(self) -> np.ndarray:
        values = self.transitions.detach().cpu().numpy().astype(np.float64)
        return np.where(self.allowed().numpy(), values, -np.inf)


# -----------------------------
# HELPERS
# -----------------------------

def _as_batch(em: DiffNode, head: CrfHead, tags=None, mask=None):
    single = em.dim() == 2
    if single:
        em = em.unsqueeze(0)
    if em.dim() != 3 or em.shape[-1] != head.n_tags:
        raise DimensionError(
            f"emissions of shape {tuple(em.shape)} do not match a CRF over {head.n_tags} tags"
        )
    if em.shape[1] == 0:
        raise ArgumentError("CRF over an empty sentence")
    batch, steps = em.shape[0], em.shape[1]

    if mask is None:
        mask = torch.ones((batch, steps), dtype=torch.bool)
    else:
        mask = torch.as_tensor(mask, dtype=torch.bool).reshape(batch, steps)
        if not bool(mask[:, 0].all()):
            raise ArgumentError("the first position of every sentence must be unmasked")

    if tags is not None:
        tags = torch.as_tensor(tags, dtype=torch.long).reshape(batch, steps)
        real = tags[mask]
        if real.numel() and (int(real.min()) < 0 or int(real.max()) >= head.n_tags):
            raise ArgumentError(f"tag id out of range for a CRF over {head.n_tags} tags")
        tags = torch.where(mask, tags, torch.zeros_like(tags))
    return em, tags, mask, single


# -----------------------------
# SCORING / LOSS
# -----------------------------

def score_sequence(em: DiffNode, tags, head: CrfHead, mask=None) -> DiffNode:
    """Unnormalized score of `tags`: start, emissions, transitions, stop."""
    em, tags, mask, single = _as_batch(em, head, tags=tags, mask=mask)
    T = head.scoring_transitions()
    batch, steps = tags.shape
    rows = torch.arange(batch)

    score = T[head.start, tags[:, 0]] + em[rows, 0, tags[:, 0]]
    for i in range(1, steps):
        step = T[tags[:, i - 1], tags[:, i]] + em[rows, i, tags[:, i]]
        score = score + torch.where(mask[:, i], step, torch.zeros_like(step))
    last = tags[rows, mask.sum(dim=1) - 1]
    score = score + T[last, head.stop]
    return score[0] if single else score


def log_partition(em: DiffNode, head: CrfHead, mask=None) -> DiffNode:
    """log of the summed exp-score over every tag sequence (forward algorithm)."""
    em, _, mask, single = _as_batch(em, head, mask=mask)
    T = head.scoring_transitions()
    t = head.n_tags
    inner = T[:t, :t].unsqueeze(0)

    alpha = T[head.start, :t].unsqueeze(0) + em[:, 0]
    for i in range(1, em.shape[1]):
        nxt = logsumexp(alpha.unsqueeze(2) + inner, dim=1) + em[:, i]
        alpha = torch.where(mask[:, i].unsqueeze(1), nxt, alpha)
    result = logsumexp(alpha + T[:t, head.stop].unsqueeze(0), dim=1)
    return result[0] if single else result


def nll_loss(em: DiffNode, gold, head: CrfHead, mask=None) -> DiffNode:
    """
    Negative log-likelihood of the gold sequence.

    Returns a scalar for one sentence, a per-sentence vector for a batch.
    """
    return log_partition(em, head, mask=mask) - score_sequence(em, gold, head, mask=mask)


# -----------------------------
# DECODING
# -----------------------------

def viterbi_decode(em: DiffNode, head: CrfHead) -> Tuple[List[int], float]:
    """
    Exact one-best sequence for one sentence's (n, t) emissions.

    Ties go to the lower tag id at every step.
    """
    if em.dim() != 2 or em.shape[1] != head.n_tags:
        raise DimensionError(
            f"emissions of shape {tuple(em.shape)} do not match a CRF over {head.n_tags} tags"
        )
    if em.shape[0] == 0:
        raise ArgumentError("CRF over an empty sentence")
    scores = em.detach().cpu().numpy().astype(np.float64)
    T = head.decode_transitions()
    t = head.n_tags
    inner = T[:t, :t]
    columns = np.arange(t)

    best = T[head.start, :t] + scores[0]
    backpointers = []
    for i in range(1, scores.shape[0]):
        candidates = best[:, None] + inner
        previous = np.argmax(candidates, axis=0)
        best = candidates[previous, columns] + scores[i]
        backpointers.append(previous)

    final = best + T[:t, head.stop]
    last = int(np.argmax(final))
    path = [last]
    for previous in reversed(backpointers):
        path.append(int(previous[path[-1]]))
    path.reverse()
    return path, float(final[last])


def viterbi_decode_batch(em: DiffNode, head: CrfHead, lengths: Sequence[int]) -> List[List[int]]:
    return [viterbi_decode(em[b, :n], head)[0] for b, n in enumerate(lengths)]


# -----------------------------
# IOBES CONSTRAINTS
# -----------------------------

def build_iobes_mask(tag_names: Sequence[str]) -> torch.Tensor:
    """
    Permitted transitions under the IOBES scheme, indexed [from, to].

    B-X, I-X -> I-X, E-X
    E-X, S-X, O -> O, B-*, S-*
    START -> O, B-*, S-*
    O, E-*, S-* -> STOP
    """
    parsed = [split_tag(name) for name in tag_names]
    t = len(parsed)
    start, stop = t, t + 1
    mask = torch.zeros((t + 2, t + 2), dtype=torch.bool)

    opens = [j for j, (prefix, _) in enumerate(parsed) if prefix in ("O", "B", "S")]
    for i, (prefix, kind) in enumerate(parsed):
        if prefix in ("B", "I"):
            for j, (to_prefix, to_kind) in enumerate(parsed):
                if to_prefix in ("I", "E") and to_kind == kind:
                    mask[i, j] = True
        else:
            mask[i, opens] = True
            mask[i, stop] = True
    mask[start, opens] = True
    return mask
