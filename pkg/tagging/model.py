"""
GTI multi-task tagger.

Pipeline for one padded batch:
- token vectors: word embedding, character CNN, word-format embedding
- one BiLSTM encoder per task (main + each aux task)
- aux heads: linear emissions + CRF, one-best aux tags
- gated interaction layer: embed aux tags, re-encode, gate against the
  main representation, sum
- main head: fuse, BiLSTM, linear emissions + CRF

The variant flag switches parts of this on and off for ablations.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import torch

from corpus.batching import Batch, EncodedSentence, collate
from corpus.embeddings import random_word_table
from corpus.vocab import Vocabularies
from errors import ArgumentError, ConfigMismatchError, DimensionError, EmbeddingLookupError, FeatureError
from neural.core import DTYPE, DiffNode, ParamStore, linear, matvec, sigmoid, tanh
from neural.layers import (
    BiLstmParams,
    CharCnnParams,
    apply_dropout,
    bilstm,
    char_cnn,
    embedding_lookup,
)
from tagging.config import N_FORMAT_CATEGORIES, GtiConfig, Variant
from tagging.crf import CrfHead, nll_loss, viterbi_decode_batch

logger = logging.getLogger(__name__)

DROPOUT_SEED_OFFSET = 7919


@dataclass
class AuxHead:
    W_A: DiffNode
    b_A: DiffNode
    crf: CrfHead


@dataclass
class GilParams:
    label_table: DiffNode
    trans: BiLstmParams
    W_k: DiffNode
    U_k: DiffNode


@dataclass
class ForwardTrace:
    """Every intermediate of one forward pass, batch-major (B, L, ...)."""

    lengths: List[int]
    mask: torch.Tensor
    x: Optional[DiffNode] = None
    s_main: Optional[DiffNode] = None
    s_aux: Dict[str, DiffNode] = field(default_factory=dict)
    emissions: Dict[str, DiffNode] = field(default_factory=dict)
    aux_tags: Dict[str, List[List[int]]] = field(default_factory=dict)
    label_emb: Dict[str, DiffNode] = field(default_factory=dict)
    h_a: Dict[str, DiffNode] = field(default_factory=dict)
    g_hat: Dict[str, DiffNode] = field(default_factory=dict)
    g: Dict[str, DiffNode] = field(default_factory=dict)
    z_f: Optional[DiffNode] = None
    h_f: Optional[DiffNode] = None
    h_m: Optional[DiffNode] = None
    predictions: List[List[int]] = field(default_factory=list)
    losses: Dict[str, DiffNode] = field(default_factory=dict)
    j_loss: Optional[DiffNode] = None


def _padded(rows: Sequence[Sequence[int]], steps: int) -> torch.Tensor:
    out = torch.zeros((len(rows), steps), dtype=torch.long)
    for b, row in enumerate(rows):
        out[b, :len(row)] = torch.as_tensor(list(row), dtype=torch.long)
    return out


class GtiModel:
    """
    Parameters and forward computation for every variant.

    Parameter names:
        embed.word, embed.format, embed.char.{table,filters,bias}
        encoder.main.*, encoder.{task}.*
        aux.{task}.{W_A,b_A}, aux.{task}.crf.transitions
        gil.{task}.{label_table,W_k,U_k}, gil.{task}.trans.*, gil.W_f
        features.{task}.label_table
        main.{W_m,W_A,b_A}, main.lstm.*, main.crf.transitions
    """

    def __init__(self, config: GtiConfig, vocabs: Vocabularies, seed: int = 1,
                 pretrained: Optional[torch.Tensor] = None):
        self.config = config
        self.vocabs = vocabs
        self.seed = int(seed)
        self.store = ParamStore(seed)
        self.training = False
        self.gate_offset = 0.0
        self.dropout_generator = torch.Generator().manual_seed(self.seed + DROPOUT_SEED_OFFSET)
        self._inactive: set = set()

        self._check_vocabularies()
        self._build(pretrained)
        logger.info(
            f"Built {config.variant.value} model: main={config.main_task}, aux={config.aux_tasks}, "
            f"d_h={config.state_size}, {self.parameter_count()} trainable parameters"
        )

    # -----------------------------
    # CONSTRUCTION
    # -----------------------------

    def _check_vocabularies(self) -> None:
        cfg = self.config
        for task in cfg.tasks:
            if task not in self.vocabs.tags:
                raise ConfigMismatchError(f"no tag vocabulary for task {task!r}")
            if list(self.vocabs.tags[task].tokens) != list(cfg.tags[task]):
                raise ConfigMismatchError(f"tag inventory of {task!r} differs between config and vocabulary")

    def _build(self, pretrained: Optional[torch.Tensor]) -> None:
        cfg, store = self.config, self.store
        d_h, two_h = cfg.state_size, 2 * cfg.state_size
        variant = cfg.variant

        if pretrained is None:
            word_table = random_word_table(len(self.vocabs.words), cfg.d_word, store.generator)
        else:
            word_table = pretrained
            if tuple(word_table.shape) != (len(self.vocabs.words), cfg.d_word):
                raise DimensionError(
                    f"pretrained table {tuple(word_table.shape)} != ({len(self.vocabs.words)}, {cfg.d_word})"
                )
        self.word_table = store.add("embed.word", word_table, frozen=True)
        self.format_table = store.add("embed.format", torch.eye(N_FORMAT_CATEGORIES, cfg.d_format, dtype=DTYPE))
        self.char_cnn = CharCnnParams.create(
            store, "embed.char", len(self.vocabs.chars), cfg.d_char,
            n_filters=cfg.n_char_filters, width=cfg.char_width,
        )

        main_in = cfg.d_input
        if variant.label_features:
            self.feature_tables = {
                task: store.uniform(f"features.{task}.label_table",
                                    (len(cfg.tags[task]), cfg.d_label), self._label_bound())
                for task in cfg.aux_tasks
            }
            main_in += len(cfg.aux_tasks) * cfg.d_label
        else:
            self.feature_tables = {}

        self.main_encoder = BiLstmParams.create(store, "encoder.main", main_in, d_h)
        self.aux_encoders: Dict[str, BiLstmParams] = {}
        self.aux_heads: Dict[str, AuxHead] = {}
        if variant.has_aux_heads:
            for task in cfg.aux_tasks:
                self.aux_encoders[task] = BiLstmParams.create(store, f"encoder.{task}", cfg.d_input, d_h)
                self.aux_heads[task] = AuxHead(
                    W_A=store.glorot(f"aux.{task}.W_A", (len(cfg.tags[task]), two_h)),
                    b_A=store.zeros(f"aux.{task}.b_A", (len(cfg.tags[task]),)),
                    crf=self._crf(f"aux.{task}.crf", cfg.tags[task]),
                )

        self.gil: Dict[str, GilParams] = {}
        self.W_f: Optional[DiffNode] = None
        if variant.uses_gil or variant == Variant.VANILLA:
            before = set(store.names())
            for task in cfg.aux_tasks:
                self.gil[task] = GilParams(
                    label_table=store.uniform(f"gil.{task}.label_table",
                                              (len(cfg.tags[task]), cfg.d_label), self._label_bound()),
                    trans=BiLstmParams.create(store, f"gil.{task}.trans", cfg.d_label, d_h),
                    W_k=store.glorot(f"gil.{task}.W_k", (two_h, two_h)),
                    U_k=store.glorot(f"gil.{task}.U_k", (two_h, two_h)),
                )
            self.W_f = store.glorot("gil.W_f", (two_h, two_h))
            if variant == Variant.VANILLA:
                # registered so isolation is observable, never used
                self._inactive = set(store.names()) - before

        self.W_m = store.glorot("main.W_m", (two_h, two_h))
        self.main_lstm = BiLstmParams.create(store, "main.lstm", two_h, d_h)
        n_main = len(cfg.tags[cfg.main_task])
        self.W_A = store.glorot("main.W_A", (n_main, two_h))
        self.b_A = store.zeros("main.b_A", (n_main,))
        self.main_crf = self._crf("main.crf", cfg.tags[cfg.main_task])

    def _label_bound(self) -> float:
        return math.sqrt(3.0 / self.config.d_label)

    def _crf(self, prefix: str, tag_names: Sequence[str]) -> CrfHead:
        return CrfHead.create(self.store, prefix, tag_names, use_constraints=self.config.use_iobes_mask)

    # -----------------------------
    # MODE / BOOKKEEPING
    # -----------------------------

    def train(self, mode: bool = True) -> "GtiModel":
        self.training = mode
        return self

    def eval(self) -> "GtiModel":
        return self.train(False)

    def active_parameter_names(self) -> List[str]:
        return [n for n in self.store.names() if n not in self._inactive]

    def parameter_count(self) -> int:
        """Trainable parameters taking part in this variant's forward graph."""
        return self.store.count(self.active_parameter_names(), trainable_only=True)

    def _dropout(self, x: DiffNode) -> DiffNode:
        return apply_dropout(x, self.config.dropout_rate, self.training, self.dropout_generator)

    # -----------------------------
    # ENCODER
    # -----------------------------

    def embed_tokens(self, batch: Batch) -> DiffNode:
        """x_i = [word(x_i); charCNN(x_i); format(x_i)], shape (B, L, d_input)."""
        n_batch, steps = batch.word_ids.shape
        try:
            words = embedding_lookup(self.word_table, batch.word_ids)
            formats = embedding_lookup(self.format_table, batch.format_ids)
            chars = char_cnn(
                batch.char_ids.reshape(n_batch * steps, -1),
                self.char_cnn,
                lengths=batch.char_lengths.reshape(-1).tolist(),
                dropout=self._dropout,
            ).reshape(n_batch, steps, -1)
        except EmbeddingLookupError as exc:
            raise FeatureError(f"unresolved token feature: {exc}") from exc
        return torch.cat([words, chars, formats], dim=-1)

    def encode_aux(self, xs: DiffNode, lengths: Sequence[int]) -> Dict[str, DiffNode]:
        return {
            task: bilstm(self._dropout(xs), params, lengths)
            for task, params in self.aux_encoders.items()
        }

    def encode_main(self, xs: DiffNode, lengths: Sequence[int]) -> DiffNode:
        return bilstm(self._dropout(xs), self.main_encoder, lengths)

    def encode_task_specific(self, xs: DiffNode, lengths: Sequence[int]) -> Tuple[DiffNode, Dict[str, DiffNode]]:
        """S_m and one S_aux per aux task, each from its own BiLSTM over dropout(xs)."""
        return self.encode_main(xs, lengths), self.encode_aux(xs, lengths)

    # -----------------------------
    # AUX HEADS
    # -----------------------------

    def aux_task_forward(self, task: str, s_aux: DiffNode, lengths: Sequence[int], mask: torch.Tensor,
                         gold: Optional[torch.Tensor] = None):
        """
        Emissions A^k = W_A S_aux + b_A, the one-best aux tags and the mean CRF loss.

        The one-best tags are plain ids; nothing is differentiated through them.
        """
        head = self.aux_heads[task]
        emissions = linear(head.W_A, s_aux, head.b_A)
        tags = viterbi_decode_batch(emissions, head.crf, lengths)
        loss = None
        if gold is not None:
            loss = nll_loss(emissions, gold, head.crf, mask=mask).mean()
        return emissions, tags, loss

    # -----------------------------
    # GATED INTERACTION LAYER
    # -----------------------------

    def gil_compose_gate(self, task: str, aux_tags: torch.Tensor, s_main: DiffNode,
                         lengths: Sequence[int]) -> Dict[str, DiffNode]:
        """
        L = Lemb(Y^k); h_a = dropout(Trans(L)); g_hat = W_k h_a + U_k S_m;
        g = sigmoid(g_hat) * h_a.
        """
        params = self.gil[task]
        label_emb = embedding_lookup(params.label_table, aux_tags)
        h_a = self._dropout(bilstm(self._dropout(label_emb), params.trans, lengths))
        g_hat = matvec(params.W_k, h_a) + matvec(params.U_k, s_main)
        gate = sigmoid(g_hat + self.gate_offset) if self.gate_offset else sigmoid(g_hat)
        return {"label_emb": label_emb, "h_a": h_a, "g_hat": g_hat, "g": gate * h_a}

    def gil_sum(self, gs: Sequence[DiffNode]) -> DiffNode:
        """z_f = W_f (sum_k g_k)."""
        if not gs:
            raise ArgumentError("gil_sum needs at least one input")
        shape = tuple(gs[0].shape)
        for g in gs[1:]:
            if tuple(g.shape) != shape:
                raise DimensionError(f"gil_sum: shapes {shape} and {tuple(g.shape)} differ")
        total = gs[0]
        for g in gs[1:]:
            total = total + g
        return matvec(self.W_f, total)

    # -----------------------------
    # MAIN HEAD
    # -----------------------------

    def main_task_forward(self, s_main: DiffNode, z_f: DiffNode, lengths: Sequence[int],
                          mask: torch.Tensor, gold: Optional[torch.Tensor] = None):
        """h_f = tanh(W_m S_m + z_f); h = BiLSTM(dropout(h_f)); A = W_A h + b_A; CRF."""
        h_f = tanh(matvec(self.W_m, s_main) + z_f)
        h_m = bilstm(self._dropout(h_f), self.main_lstm, lengths)
        emissions = linear(self.W_A, h_m, self.b_A)
        tags = viterbi_decode_batch(emissions, self.main_crf, lengths)
        loss = None
        if gold is not None:
            loss = nll_loss(emissions, gold, self.main_crf, mask=mask).mean()
        return {"h_f": h_f, "h_m": h_m, "emissions": emissions, "tags": tags, "loss": loss}

    # -----------------------------
    # LOSS / VARIANTS
    # -----------------------------

    @property
    def loss_tasks(self) -> List[str]:
        return [self.config.main_task] + (list(self.config.aux_tasks) if self.config.K else [])

    def joint_loss(self, trace: ForwardTrace) -> DiffNode:
        """J = L_main + sum of aux CRF losses (aux sum is empty for single-task variants)."""
        missing = [task for task in self.loss_tasks if trace.losses.get(task) is None]
        if missing:
            raise ArgumentError(f"no gold tags / loss for task(s): {', '.join(missing)}")
        main, *aux = self.loss_tasks
        total = trace.losses[main]
        for task in aux:
            total = total + trace.losses[task]
        return total

    def _label_features(self, tag_rows: Dict[str, torch.Tensor]) -> DiffNode:
        return torch.cat(
            [embedding_lookup(self.feature_tables[task], tag_rows[task]) for task in self.config.aux_tasks],
            dim=-1,
        )

    def forward_variant(self, batch, golds: Optional[Dict[str, torch.Tensor]] = None) -> ForwardTrace:
        """
        Run the configured variant over a Batch (or a single EncodedSentence).

        `golds` maps task -> (B, L) gold tag ids; a loss is computed for every
        task present, and J_loss when all the variant's tasks are present.
        """
        if isinstance(batch, EncodedSentence):
            batch = collate([batch])
        cfg = self.config
        variant = cfg.variant
        golds = golds or {}
        lengths, mask = batch.lengths, batch.mask
        steps = batch.word_ids.shape[1]
        trace = ForwardTrace(lengths=list(lengths), mask=mask)

        trace.x = self.embed_tokens(batch)
        aux_rows: Dict[str, torch.Tensor] = {}
        if variant.has_aux_heads:
            trace.s_aux = self.encode_aux(trace.x, lengths)
            for task in cfg.aux_tasks:
                emissions, tags, loss = self.aux_task_forward(
                    task, trace.s_aux[task], lengths, mask, golds.get(task)
                )
                trace.emissions[task] = emissions
                trace.aux_tags[task] = tags
                aux_rows[task] = _padded(tags, steps)
                if loss is not None:
                    trace.losses[task] = loss

        main_input = trace.x
        if variant == Variant.SINGLE2:
            missing = [task for task in cfg.aux_tasks if task not in batch.tags]
            if missing:
                raise FeatureError(f"{variant.value} needs gold {', '.join(missing)} tags as input features")
            main_input = torch.cat([trace.x, self._label_features(batch.tags)], dim=-1)
        elif variant == Variant.PIPELINE:
            main_input = torch.cat([trace.x, self._label_features(aux_rows)], dim=-1)
        trace.s_main = self.encode_main(main_input, lengths)

        if variant.uses_gil:
            for task in cfg.aux_tasks:
                parts = self.gil_compose_gate(task, aux_rows[task], trace.s_main, lengths)
                trace.label_emb[task] = parts["label_emb"]
                trace.h_a[task] = parts["h_a"]
                trace.g_hat[task] = parts["g_hat"]
                trace.g[task] = parts["g"]
            summed = trace.g if variant == Variant.GTI else trace.g_hat
            trace.z_f = self.gil_sum([summed[task] for task in cfg.aux_tasks])
        else:
            trace.z_f = torch.zeros_like(trace.s_main)

        main = self.main_task_forward(trace.s_main, trace.z_f, lengths, mask, golds.get(cfg.main_task))
        trace.h_f, trace.h_m = main["h_f"], main["h_m"]
        trace.emissions[cfg.main_task] = main["emissions"]
        trace.predictions = main["tags"]
        if main["loss"] is not None:
            trace.losses[cfg.main_task] = main["loss"]

        if all(trace.losses.get(task) is not None for task in self.loss_tasks):
            trace.j_loss = self.joint_loss(trace)
        return trace

    # -----------------------------
    # INFERENCE
    # -----------------------------

    def predict(self, batch) -> Dict[str, List[List[int]]]:
        """Main and aux one-best tag ids per sentence, without building a graph."""
        with torch.no_grad():
            trace = self.forward_variant(batch)
        out = {self.config.main_task: trace.predictions}
        out.update(trace.aux_tags)
        return out

    def snapshot(self) -> Dict[str, torch.Tensor]:
        return {name: p.detach().clone() for name, p in self.store.named_parameters()}
