"""
Job orchestration for the GTI tagger.

Each run_* function binds corpus, model, training and evaluation into one
reproducible job:
- run_train: train one model, keep the best dev checkpoint, score a test split
- run_eval: score a labelled file with a checkpoint
- run_predict: tag a token-only file with a checkpoint
- run_gradcheck: finite-difference check of a tiny model
- run_ablate: every variant over a seed set
- run_sweep: one variant over state sizes and seeds
"""

import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import torch

from corpus.batching import encode_corpus, make_batches, split_validation
from corpus.conll import DATA_FORMATS, RawSentence, format_conll, parse_conll, read_corpus
from corpus.embeddings import load_pretrained_embeddings
from corpus.synthetic import make_synthetic_corpus
from corpus.vocab import Vocabularies, build_vocabularies
from errors import ArgumentError, ConfigMismatchError, NumericalError
from evaluation.metrics import EvalReport
from neural.core import inject_backward_fault
from neural.gradcheck import check_gradients
from tagging.config import DEFAULT_STATE_SIZES, GtiConfig, ValidatedModel, Variant
from tagging.model import GtiModel
from training.checkpoint import load_checkpoint, restore_model, save_checkpoint
from training.trainer import TrainConfig, evaluate_model, fit

logger = logging.getLogger(__name__)

DEFAULT_SEEDS = [1, 2, 3, 4, 5]
CHECKPOINT_NAME = "best.ckpt"
GRADCHECK_TOLERANCE = 1e-4
GRADCHECK_MAX_ENTRIES = 6
GRADCHECK_MAX_TOKENS = 5


# -----------------------------
# JOB SPEC
# -----------------------------

class JobSpec(ValidatedModel):
    command: Literal["train", "eval", "predict", "gradcheck", "ablate", "sweep"]
    data_format: str = "conll2003"
    train_path: Optional[str] = None
    dev_path: Optional[str] = None
    test_path: Optional[str] = None
    input_path: Optional[str] = None
    checkpoint_path: Optional[str] = None
    embeddings_path: Optional[str] = None
    synthetic_sentences: Optional[int] = None
    model: Dict[str, Any] = {}
    train: Dict[str, Any] = {}
    out_dir: str = "runs"
    seed: int = 1
    seeds: List[int] = DEFAULT_SEEDS
    state_sizes: List[int] = DEFAULT_STATE_SIZES
    variants: List[Variant] = list(Variant)
    max_entries: Optional[int] = GRADCHECK_MAX_ENTRIES
    tolerance: float = GRADCHECK_TOLERANCE
    fault: Optional[str] = None

    def train_config(self, seed: Optional[int] = None) -> TrainConfig:
        return TrainConfig(**{**self.train, "seed": self.seed if seed is None else seed})


@dataclass
class CorpusSplits:
    train: List[RawSentence]
    dev: Optional[List[RawSentence]]
    test: Optional[List[RawSentence]]


def inference_threads() -> int:
    try:
        return max(1, int(os.getenv("GTI_THREADS", "1")))
    except ValueError as exc:
        raise ArgumentError(f"GTI_THREADS must be an integer: {exc}") from exc


def git_blob_hash(path: Path) -> str:
    """Content hash as `git hash-object` computes it."""
    content = Path(path).read_bytes()
    return hashlib.sha1(b"blob %d\0" % len(content) + content).hexdigest()


def write_manifest(spec: JobSpec, extra: Optional[Dict[str, Any]] = None) -> Path:
    out_dir = Path(spec.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = [spec.train_path, spec.dev_path, spec.test_path, spec.input_path,
             spec.embeddings_path, spec.checkpoint_path]
    manifest = {
        "spec": spec.model_dump(mode="json"),
        "data_hashes": {f: git_blob_hash(Path(f)) for f in files if f and Path(f).is_file()},
        "torch": torch.__version__,
    }
    manifest.update(extra or {})
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    return path


# -----------------------------
# DATA / MODEL ASSEMBLY
# -----------------------------

def load_splits(spec: JobSpec, dev_size: int) -> CorpusSplits:
    if spec.synthetic_sentences:
        train = make_synthetic_corpus(spec.synthetic_sentences, seed=spec.seed)
    elif spec.train_path:
        train = read_corpus(spec.train_path, spec.data_format)
    else:
        raise ArgumentError("training needs --train or --synthetic")
    if not train:
        raise ArgumentError("the training corpus is empty")

    dev = read_corpus(spec.dev_path, spec.data_format) if spec.dev_path else None
    if dev is None and len(train) > dev_size:
        train, dev = split_validation(train, n=dev_size, seed=spec.seed)
    elif dev is None:
        logger.warning(f"No dev set ({len(train)} training sentences <= dev size {dev_size})")
    test = read_corpus(spec.test_path, spec.data_format) if spec.test_path else None
    return CorpusSplits(train, dev, test)


def resolve_tasks(spec: JobSpec) -> Tuple[str, List[str]]:
    columns = DATA_FORMATS["conll2003"] if spec.synthetic_sentences else DATA_FORMATS.get(spec.data_format)
    if not columns:
        raise ArgumentError(f"data format {spec.data_format!r} has no tag columns to train on")
    main = spec.model.get("main_task") or ("ner" if "ner" in columns else "chunk")
    aux = spec.model.get("aux_tasks")
    if aux is None:
        aux = [c for c in ("chunk", "pos") if c in columns and c != main]
    for task in [main] + list(aux):
        if task not in columns:
            raise ArgumentError(f"task {task!r} is not a column of {spec.data_format}")
    return main, list(aux)


def build_model(spec: JobSpec, splits: CorpusSplits, train_cfg: TrainConfig,
                variant: Optional[Variant] = None, state_size: Optional[int] = None,
                seed: Optional[int] = None) -> GtiModel:
    main, aux = resolve_tasks(spec)
    overrides = {k: v for k, v in spec.model.items() if k not in ("main_task", "aux_tasks")}
    normalize = bool(overrides.get("normalize_digits", False))

    extra_words = None
    if spec.embeddings_path:
        extra_words = [t for part in (splits.dev, splits.test) if part for s in part for t in s.tokens]
    vocabs = build_vocabularies(splits.train, [main] + aux, normalize_digits=normalize, extra_words=extra_words)

    pretrained = None
    if spec.embeddings_path:
        pretrained, _ = load_pretrained_embeddings(spec.embeddings_path, vocabs.words, seed=train_cfg.seed)
        overrides["d_word"] = pretrained.shape[1]
    if state_size is None and "state_size" not in overrides:
        state_size = GtiConfig.model_fields["state_size"].default
        if state_size not in spec.state_sizes:
            state_size = spec.state_sizes[0]

    config = GtiConfig(**{
        "dropout_rate": train_cfg.dropout,
        "state_sizes": spec.state_sizes,
        **overrides,
        "main_task": main,
        "aux_tasks": aux,
        "data_format": "conll2003" if spec.synthetic_sentences else spec.data_format,
        "tags": {task: vocabs.tags[task].tokens for task in [main] + aux},
        **({"variant": variant} if variant is not None else {}),
        **({"state_size": state_size} if state_size is not None else {}),
    })
    return GtiModel(config, vocabs, seed=train_cfg.seed if seed is None else seed, pretrained=pretrained)


def check_inventory(sentences: Sequence[RawSentence], vocabs: Vocabularies, tasks: Sequence[str]) -> None:
    """Every gold tag in the data must exist in the checkpoint's tag vocabularies."""
    for task in tasks:
        for sentence in sentences:
            if task not in sentence.columns:
                raise ConfigMismatchError(f"data has no {task!r} column the checkpoint was trained on")
            unknown = [t for t in sentence.columns[task] if t not in vocabs.tags[task]]
            if unknown:
                raise ConfigMismatchError(f"tag {unknown[0]!r} of task {task!r} unknown to the checkpoint")


def write_reports(out_dir: Path, stem: str, reports: Dict[str, EvalReport], main_task: str) -> Path:
    """Main task to <stem>.txt, every other task to <stem>.<task>.txt."""
    for task, report in reports.items():
        name = f"{stem}.txt" if task == main_task else f"{stem}.{task}.txt"
        (out_dir / name).write_text(report.to_text(), encoding="utf-8")
    return out_dir / f"{stem}.txt"


def _score(reports: Dict[str, EvalReport], task: str) -> float:
    return reports[task].f1 if task in reports else float("nan")


# -----------------------------
# TRAIN / EVAL / PREDICT
# -----------------------------

def run_train(spec: JobSpec) -> Dict[str, Any]:
    train_cfg = spec.train_config()
    splits = load_splits(spec, train_cfg.dev_size)
    model = build_model(spec, splits, train_cfg)
    cfg = model.config
    write_manifest(spec, {"model_config": cfg.model_dump(mode="json"), "train_config": train_cfg.model_dump()})

    out_dir = Path(spec.out_dir)
    ckpt = out_dir / CHECKPOINT_NAME
    normalize = cfg.normalize_digits
    train_data = encode_corpus(splits.train, model.vocabs, normalize)
    dev_data = encode_corpus(splits.dev, model.vocabs, normalize) if splits.dev else None

    log = fit(model, train_data, dev_data, train_cfg, checkpoint_path=ckpt)
    if log.best_state is None:
        save_checkpoint(ckpt, model, epoch=len(log.records), train_config=train_cfg)

    with (out_dir / "epochs.jsonl").open("w", encoding="utf-8") as f:
        for row in log.to_dicts():
            f.write(json.dumps(row) + "\n")

    result: Dict[str, Any] = {
        "success": True,
        "checkpoint": str(ckpt),
        "epochs": len(log.records),
        "best_epoch": log.best_epoch,
        "best_dev_f1": log.best_dev_f1,
    }
    if splits.test:
        reports = evaluate_model(model, encode_corpus(splits.test, model.vocabs, normalize))
        write_reports(out_dir, "test_report", reports, cfg.main_task)
        result["test_f1"] = _score(reports, cfg.main_task)
        result["reports"] = reports
    logger.info(f"Training finished: {result['epochs']} epochs, checkpoint {ckpt}")
    return result


def _load(spec: JobSpec) -> GtiModel:
    if not spec.checkpoint_path:
        raise ArgumentError("this command needs --checkpoint")
    return restore_model(load_checkpoint(spec.checkpoint_path))


def run_eval(spec: JobSpec) -> Dict[str, EvalReport]:
    model = _load(spec)
    if not spec.input_path:
        raise ArgumentError("eval needs --data")
    # an explicit --data-format wins over the layout the checkpoint was trained on
    data_format = spec.data_format if "data_format" in spec.model_fields_set else model.config.data_format
    sentences = read_corpus(spec.input_path, data_format)
    check_inventory(sentences, model.vocabs, model.config.tasks)
    write_manifest(spec)

    reports = evaluate_model(model, encode_corpus(sentences, model.vocabs, model.config.normalize_digits))
    out = write_reports(Path(spec.out_dir), "eval_report", reports, model.config.main_task)
    logger.info(f"Evaluation report written to {out}")
    return reports


def run_predict(spec: JobSpec) -> str:
    """Tag token-only input; output columns are token, aux predictions, main prediction."""
    model = _load(spec)
    if not spec.input_path:
        raise ArgumentError("predict needs --input")
    raw = parse_conll(spec.input_path, 1, [])
    write_manifest(spec)
    if not raw:
        return ""

    cfg = model.config
    encoded = encode_corpus(raw, model.vocabs, cfg.normalize_digits)
    batches = make_batches(encoded, batch_size=32)
    threads = min(inference_threads(), len(batches))
    with ThreadPoolExecutor(max_workers=threads) as pool:
        outputs = list(pool.map(model.predict, batches))

    predictions: Dict[str, List[List[int]]] = {}
    for output in outputs:
        for task, rows in output.items():
            predictions.setdefault(task, []).extend(rows)

    order = list(cfg.aux_tasks[:cfg.K]) + [cfg.main_task]
    tagged = []
    for i, sentence in enumerate(raw):
        columns = {
            task: [cfg.tags[task][t] for t in predictions[task][i]]
            for task in order
        }
        tagged.append(RawSentence(sentence.tokens, columns))
    text = format_conll(tagged, order)
    out = Path(spec.out_dir) / "predictions.conll"
    out.write_text(text, encoding="utf-8")
    logger.info(f"Tagged {len(raw)} sentences with {threads} thread(s) -> {out}")
    return text


# -----------------------------
# GRADIENT CHECK
# -----------------------------

def run_gradcheck(spec: JobSpec):
    """
    Finite-difference check of J_loss over every trainable parameter of a
    tiny model (d_word = d_h = 8, K = 2, sentences of at most 5 tokens).
    """
    corpus = make_synthetic_corpus(3, seed=spec.seed)
    sentences = [
        RawSentence(s.tokens[:GRADCHECK_MAX_TOKENS],
                    {k: v[:GRADCHECK_MAX_TOKENS] for k, v in s.columns.items()})
        for s in corpus
    ]
    variant = Variant(spec.model.get("variant", Variant.GTI))
    tasks = ["ner", "chunk", "pos"]
    vocabs = build_vocabularies(sentences, tasks)
    config = GtiConfig(
        variant=variant, main_task="ner", aux_tasks=["chunk", "pos"],
        tags=vocabs.tag_names(), d_word=8, d_char=8, n_char_filters=4,
        state_size=8, state_sizes=[8], d_label=8,
    )
    model = GtiModel(config, vocabs, seed=spec.seed).eval()
    write_manifest(spec, {"model_config": config.model_dump(mode="json")})
    batch = make_batches(encode_corpus(sentences, vocabs), batch_size=len(sentences))[0]

    def loss_fn():
        return model.joint_loss(model.forward_variant(batch, golds=batch.tags))

    if spec.fault:
        with inject_backward_fault(spec.fault):
            report = check_gradients(loss_fn, model.store, tolerance=spec.tolerance,
                                     max_entries=spec.max_entries, seed=spec.seed)
    else:
        report = check_gradients(loss_fn, model.store, tolerance=spec.tolerance,
                                 max_entries=spec.max_entries, seed=spec.seed)

    out_dir = Path(spec.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "gradcheck.txt").write_text(report.to_text() + "\n", encoding="utf-8")
    if not report.passed:
        faults = f" (corrupted: {', '.join(report.faults)})" if report.faults else ""
        raise NumericalError(
            f"gradient check failed{faults}: max rel error {report.max_rel_error:.3e}; "
            f"offending: {', '.join(report.offending)}"
        )
    return report


# -----------------------------
# ABLATION / SWEEP
# -----------------------------

def _train_and_score(spec: JobSpec, splits: CorpusSplits, variant: Variant,
                     state_size: Optional[int], seed: int) -> float:
    train_cfg = spec.train_config(seed)
    model = build_model(spec, splits, train_cfg, variant=variant, state_size=state_size, seed=seed)
    normalize = model.config.normalize_digits
    train_data = encode_corpus(splits.train, model.vocabs, normalize)
    dev_data = encode_corpus(splits.dev, model.vocabs, normalize) if splits.dev else None
    fit(model, train_data, dev_data, train_cfg)

    # test split if given, else dev, else the training data itself
    scored = splits.test or splits.dev or splits.train
    reports = evaluate_model(model, encode_corpus(scored, model.vocabs, normalize))
    score = _score(reports, model.config.main_task)
    logger.info(f"{variant.value} d_h={model.config.state_size} seed={seed}: F1={score:.4f}")
    return score


def summarize(scores: Sequence[float]) -> Dict[str, float]:
    values = np.asarray(scores, dtype=np.float64)
    return {
        "min": float(values.min()),
        "mean": float(values.mean()),
        "std": float(values.std(ddof=1)) if len(values) > 1 else 0.0,
        "max": float(values.max()),
    }


def format_table(title: str, rows: Dict[str, Dict[str, float]], seeds: Sequence[int]) -> str:
    lines = [
        title,
        f"seeds ({len(seeds)}): {', '.join(str(s) for s in seeds)}",
        f"{'model':<24}{'min':>8}{'mean':>10}{'std':>8}{'max':>8}",
    ]
    for name, stats in rows.items():
        lines.append(
            f"{name:<24}{100 * stats['min']:8.2f}{100 * stats['mean']:10.2f}"
            f"{100 * stats['std']:8.2f}{100 * stats['max']:8.2f}"
        )
    return "\n".join(lines) + "\n"


def _write_table(spec: JobSpec, name: str, table: str, rows: Dict[str, Any]) -> None:
    out_dir = Path(spec.out_dir)
    (out_dir / f"{name}.txt").write_text(table, encoding="utf-8")
    (out_dir / f"{name}.json").write_text(json.dumps(rows, indent=2), encoding="utf-8")


def run_ablate(spec: JobSpec) -> Dict[str, Any]:
    splits = load_splits(spec, spec.train_config().dev_size)
    write_manifest(spec)
    rows: Dict[str, Dict[str, float]] = {}
    scores: Dict[str, List[float]] = {}
    for variant in spec.variants:
        scores[variant.value] = [
            _train_and_score(spec, splits, variant, None, seed) for seed in spec.seeds
        ]
        rows[variant.value] = summarize(scores[variant.value])
    table = format_table("Ablation (main-task F1)", rows, spec.seeds)
    _write_table(spec, "ablation", table, {"seeds": spec.seeds, "rows": rows, "scores": scores})
    return {"success": True, "table": table, "rows": rows, "scores": scores, "seeds": list(spec.seeds)}


def run_sweep(spec: JobSpec) -> Dict[str, Any]:
    splits = load_splits(spec, spec.train_config().dev_size)
    write_manifest(spec)
    variant = Variant(spec.model.get("variant", Variant.GTI))
    rows: Dict[str, Dict[str, float]] = {}
    scores: Dict[str, List[float]] = {}
    for state_size in spec.state_sizes:
        key = f"{variant.value} d_h={state_size}"
        scores[key] = [_train_and_score(spec, splits, variant, state_size, seed) for seed in spec.seeds]
        rows[key] = summarize(scores[key])
    table = format_table("State-size sweep (main-task F1)", rows, spec.seeds)
    _write_table(spec, "sweep", table, {"seeds": spec.seeds, "rows": rows, "scores": scores})
    return {"success": True, "table": table, "rows": rows, "scores": scores, "seeds": list(spec.seeds)}


COMMANDS = {
    "train": run_train,
    "eval": run_eval,
    "predict": run_predict,
    "gradcheck": run_gradcheck,
    "ablate": run_ablate,
    "sweep": run_sweep,
}
