"""
Training configuration, single optimisation steps, evaluation and the
epoch loop.
"""

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import torch
from pydantic import model_validator

from corpus.batching import EncodedSentence, make_batches
from corpus.conll import is_span_column
from errors import ArgumentError, NumericalError
from evaluation.metrics import EvalReport, micro_f1, token_report
from tagging.config import ValidatedModel
from tagging.model import GtiModel
from training.checkpoint import save_checkpoint
from training.optimizer import Nadam
from training.schedule import CosineRestartScheduler, cycle_length

logger = logging.getLogger(__name__)

CLIP_NORM = 5.0
EVAL_BATCH_SIZE = 32


class TrainConfig(ValidatedModel):
    alpha0: float = 0.001
    T: int = 270
    M: int = 9
    epoch_cap: int = 70
    batch_size: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 1
    dropout: float = 0.25
    clip_grad_norm: Optional[float] = None
    dev_size: int = 1000

    @model_validator(mode="after")
    def _check(self) -> "TrainConfig":
        if self.M < 1 or self.T % self.M:
            raise ValueError(f"T={self.T} must be a positive multiple of M={self.M}")
        if not 1 <= self.epoch_cap <= self.T:
            raise ValueError(f"epoch_cap must be in [1, T={self.T}], got {self.epoch_cap}")
        if self.alpha0 <= 0:
            raise ValueError("alpha0 must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.clip_grad_norm is not None and self.clip_grad_norm <= 0:
            raise ValueError("clip_grad_norm must be positive")
        return self

    @property
    def cycle(self) -> int:
        return cycle_length(self.T, self.M)


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    loss: float
    steps: int
    dev_f1: Optional[float] = None
    seconds: float = 0.0


@dataclass
class TrainingLog:
    records: List[EpochRecord] = field(default_factory=list)
    best_epoch: Optional[int] = None
    best_dev_f1: Optional[float] = None
    stopped_early: bool = False
    best_state: Optional[Dict[str, torch.Tensor]] = None

    def losses(self) -> List[float]:
        return [r.loss for r in self.records]

    def to_dicts(self) -> List[dict]:
        return [asdict(r) for r in self.records]


Callback = Callable[[EpochRecord], Optional[bool]]


def build_optimizer(model: GtiModel, cfg: TrainConfig) -> Nadam:
    return Nadam(
        model.store.named_parameters(trainable_only=True),
        lr=cfg.alpha0, betas=(cfg.beta1, cfg.beta2), eps=cfg.eps,
    )


def train_step(model: GtiModel, optimizer: Nadam, batch, cfg: TrainConfig) -> float:
    """One forward/backward/Nadam update on a batch; returns J_loss."""
    model.store.zero_grad()
    trace = model.forward_variant(batch, golds=batch.tags)
    loss = model.joint_loss(trace)
    if not torch.isfinite(loss):
        raise NumericalError(f"non-finite joint loss {float(loss)}")
    loss.backward()
    if cfg.clip_grad_norm is not None:
        torch.nn.utils.clip_grad_norm_(
            [p for _, p in model.store.named_parameters(trainable_only=True)], cfg.clip_grad_norm
        )
    optimizer.step()
    return float(loss)


def evaluate_model(model: GtiModel, sentences: Sequence[EncodedSentence],
                   batch_size: int = EVAL_BATCH_SIZE) -> Dict[str, EvalReport]:
    """
    Decode every sentence and score each task that has gold tags.

    Span tasks get micro-F1, other tasks (POS) token accuracy only.
    """
    if not sentences:
        return {}
    was_training = model.training
    model.eval()
    predictions: Dict[str, List[List[int]]] = {}
    try:
        for batch in make_batches(sentences, batch_size):
            for task, rows in model.predict(batch).items():
                predictions.setdefault(task, []).extend(rows)
    finally:
        model.train(was_training)

    reports: Dict[str, EvalReport] = {}
    for task, rows in predictions.items():
        if not all(task in s.tags for s in sentences):
            continue
        names = model.config.tags[task]
        gold = [[names[i] for i in s.tags[task]] for s in sentences]
        pred = [[names[i] for i in row] for row in rows]
        if is_span_column(names):
            reports[task] = micro_f1(gold, pred, task=task)
        else:
            reports[task] = token_report(gold, pred, task=task)
    return reports


def fit(
    model: GtiModel,
    train_data: Sequence[EncodedSentence],
    dev_data: Optional[Sequence[EncodedSentence]],
    cfg: TrainConfig,
    callbacks: Optional[Sequence[Callback]] = None,
    checkpoint_path: Optional[Path] = None,
    optimizer: Optional[Nadam] = None,
    start_epoch: int = 0,
    restore_best: bool = True,
) -> TrainingLog:
    """
    Train until epoch_cap (or until a callback returns True).

    Each epoch: reshuffle with seed + epoch, one Nadam step per batch at
    learning_rate(epoch), then dev micro-F1 of the main task. The best dev
    state is kept (and written to `checkpoint_path`); it is restored into
    the model at the end when `restore_best` is set.
    """
    if not train_data:
        raise ArgumentError("no training sentences")
    optimizer = optimizer or build_optimizer(model, cfg)
    main = model.config.main_task
    log = TrainingLog()

    logger.info(
        f"Training {model.config.variant.value} on {len(train_data)} sentences "
        f"(dev={len(dev_data or [])}, epochs {start_epoch}..{cfg.epoch_cap - 1}, cycle={cfg.cycle})"
    )
    scheduler = CosineRestartScheduler(optimizer, cfg, start_epoch=start_epoch)
    model.train()
    for epoch in range(start_epoch, cfg.epoch_cap):
        started = time.perf_counter()
        lr = optimizer.param_groups[0]["lr"]
        batches = make_batches(train_data, cfg.batch_size, seed=cfg.seed + epoch)
        losses = [train_step(model, optimizer, batch, cfg) for batch in batches]
        scheduler.step()

        record = EpochRecord(epoch=epoch, lr=lr, loss=math.fsum(losses) / len(losses), steps=len(losses))
        if dev_data:
            reports = evaluate_model(model, dev_data)
            record.dev_f1 = reports[main].f1 if main in reports else None
        record.seconds = time.perf_counter() - started
        log.records.append(record)
        logger.info(
            f"epoch {epoch}: lr={lr:.6g} loss={record.loss:.6f} "
            f"dev_f1={'n/a' if record.dev_f1 is None else f'{record.dev_f1:.4f}'} ({record.seconds:.1f}s)"
        )

        if record.dev_f1 is not None and (log.best_dev_f1 is None or record.dev_f1 > log.best_dev_f1):
            log.best_epoch, log.best_dev_f1 = epoch, record.dev_f1
            log.best_state = model.snapshot()
            if checkpoint_path is not None:
                save_checkpoint(checkpoint_path, model, optimizer=optimizer, epoch=epoch + 1, train_config=cfg)

        if any([bool(callback(record)) for callback in callbacks or ()]):
            log.stopped_early = True
            logger.info(f"Stopped by callback after epoch {epoch}")
            break

    model.eval()
    if restore_best and log.best_state is not None:
        model.store.load_values(log.best_state)
        logger.info(f"Restored best dev state from epoch {log.best_epoch} (F1={log.best_dev_f1:.4f})")
    return log
