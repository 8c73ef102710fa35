import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from dotenv import load_dotenv

from errors import GtiError
from gti_orchestrator import COMMANDS, JobSpec

load_dotenv()

logger = logging.getLogger(__name__)

# Configuration
DEFAULT_OUT_DIR = os.getenv("GTI_OUT_DIR", "runs")
LOG_LEVEL = os.getenv("GTI_LOG_LEVEL", "INFO").upper()


def setup_logging(out_dir: str, level: str = LOG_LEVEL) -> None:
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.StreamHandler(),
            logging.FileHandler(Path(out_dir) / 'gti.log')
        ],
        force=True,
    )
    # Set third-party library logging levels
    logging.getLogger('torch').setLevel(logging.WARNING)


# =========================================================
# ARGUMENT PARSING
# =========================================================

def _csv(value: str) -> List[str]:
    return [part.strip() for part in value.split(",") if part.strip()]


def _int_csv(value: str) -> List[int]:
    try:
        return [int(part) for part in _csv(value)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {value!r}")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out-dir", default=DEFAULT_OUT_DIR)
    p.add_argument("--seed", type=int, default=1)


def _add_data(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data-format", default="conll2003", choices=["conll2000", "conll2003"])
    p.add_argument("--train", dest="train_path")
    p.add_argument("--dev", dest="dev_path")
    p.add_argument("--test", dest="test_path")
    p.add_argument("--embeddings", dest="embeddings_path")
    p.add_argument("--synthetic", dest="synthetic_sentences", type=int,
                   help="train on a generated corpus of N sentences instead of files")


def _add_model(p: argparse.ArgumentParser, with_variant: bool = True) -> None:
    p.add_argument("--main", dest="main_task")
    p.add_argument("--aux", dest="aux_tasks", type=_csv)
    if with_variant:
        p.add_argument("--variant", choices=["SINGLE1", "SINGLE2", "VANILLA", "PIPELINE", "TI", "GTI"])
    p.add_argument("--state-size", type=int)
    p.add_argument("--state-sizes", type=_int_csv)
    p.add_argument("--d-word", type=int)
    p.add_argument("--d-char", type=int)
    p.add_argument("--d-label", type=int)
    p.add_argument("--iobes-mask", dest="use_iobes_mask", action="store_true", default=None)
    p.add_argument("--normalize-digits", action="store_true", default=None)


def _add_training(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha0", type=float)
    p.add_argument("--T", dest="T", type=int)
    p.add_argument("--M", dest="M", type=int)
    p.add_argument("--epochs", dest="epoch_cap", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--clip", dest="clip_grad_norm", nargs="?", const=5.0, type=float)
    p.add_argument("--dev-size", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gti", description="Gated task interaction sequence tagger")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model")
    _add_common(p)
    _add_data(p)
    _add_model(p)
    _add_training(p)

    p = sub.add_parser("eval", help="score a labelled file with a checkpoint")
    _add_common(p)
    p.add_argument("--checkpoint", dest="checkpoint_path", required=True)
    p.add_argument("--data", dest="input_path", required=True)
    p.add_argument("--data-format", choices=["conll2000", "conll2003"],
                   help="column layout of --data (default: the checkpoint's training layout)")

    p = sub.add_parser("predict", help="tag a token-only file with a checkpoint")
    _add_common(p)
    p.add_argument("--checkpoint", dest="checkpoint_path", required=True)
    p.add_argument("--input", dest="input_path", required=True)

    p = sub.add_parser("gradcheck", help="finite-difference check of a tiny model")
    _add_common(p)
    p.add_argument("--variant", choices=["SINGLE1", "SINGLE2", "VANILLA", "PIPELINE", "TI", "GTI"])
    p.add_argument("--max-entries", type=int, default=6,
                   help="entries sampled per parameter tensor (0 = all)")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--fault", choices=["matvec", "activation", "logsumexp"],
                   help="corrupt the backward rule of this op")

    p = sub.add_parser("ablate", help="all six variants over a seed set")
    _add_common(p)
    _add_data(p)
    _add_model(p, with_variant=False)
    _add_training(p)
    p.add_argument("--seeds", type=_int_csv)
    p.add_argument("--variants", type=_csv)

    p = sub.add_parser("sweep", help="one variant over state sizes and seeds")
    _add_common(p)
    _add_data(p)
    _add_model(p)
    _add_training(p)
    p.add_argument("--seeds", type=_int_csv)
    return parser


MODEL_FLAGS = ("main_task", "aux_tasks", "variant", "state_size", "d_word", "d_char", "d_label",
               "use_iobes_mask", "normalize_digits")
TRAIN_FLAGS = ("alpha0", "T", "M", "epoch_cap", "batch_size", "dropout", "clip_grad_norm", "dev_size")
SPEC_FLAGS = ("data_format", "train_path", "dev_path", "test_path", "input_path", "checkpoint_path",
              "embeddings_path", "synthetic_sentences", "out_dir", "seed", "seeds", "state_sizes",
              "variants", "tolerance", "fault")


def spec_from_args(args: argparse.Namespace):
    """Flags override defaults; unset flags leave the config defaults alone."""
    values = vars(args)

    def present(names) -> Dict[str, Any]:
        return {k: values[k] for k in names if values.get(k) is not None}

    data: Dict[str, Any] = {"command": args.command, **present(SPEC_FLAGS)}
    data["model"] = present(MODEL_FLAGS)
    data["train"] = present(TRAIN_FLAGS)
    if "max_entries" in values:
        data["max_entries"] = values["max_entries"] or None
    return JobSpec(**data)


# =========================================================
# REPORT OUTPUT
# =========================================================

def print_result(command: str, result: Any) -> None:
    if command == "train":
        print(f"checkpoint: {result['checkpoint']}")
        print(f"epochs: {result['epochs']}  best epoch: {result['best_epoch']}  "
              f"best dev F1: {result['best_dev_f1']}")
        for report in result.get("reports", {}).values():
            print(report.to_table())
    elif command == "eval":
        for report in result.values():
            print(report.to_table())
    elif command == "predict":
        sys.stdout.write(result)
    elif command == "gradcheck":
        print(result.to_text())
    else:
        sys.stdout.write(result["table"])


# =========================================================
# RUN
# =========================================================

def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.out_dir)

    try:
        spec = spec_from_args(args)
        logger.info(f"Running {spec.command} -> {spec.out_dir}")
        result = COMMANDS[spec.command](spec)
        print_result(spec.command, result)
        return 0
    except GtiError as exc:
        logger.error(f"{exc.error_class}: {exc}")
        print(f"ERROR {exc.error_class}: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:
        logger.error(f"Unexpected failure in {args.command}: {exc}", exc_info=True)
        print(f"ERROR INTERNAL: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
