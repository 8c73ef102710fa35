"""
Checkpoint codec.

Layout (integers little-endian):
    b"GTI1" | uint32 manifest length | UTF-8 JSON manifest | float32 payload

The payload holds every parameter in manifest order, followed by the
optimizer's first and second moments for each parameter listed under
"optimizer". Values are stored at 32-bit precision; training math stays
64-bit.
"""

import base64
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import torch

from corpus.vocab import Vocabularies
from errors import (
    ArgumentError,
    CheckpointShapeError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    DataNotFoundError,
    DimensionError,
)
from neural.core import DTYPE
from tagging.config import GtiConfig
from tagging.model import GtiModel

logger = logging.getLogger(__name__)

MAGIC = b"GTI1"
VERSION = 1
_HEADER = struct.Struct("<4sI")
_FLOAT = np.dtype("<f4")


@dataclass
class Checkpoint:
    config: GtiConfig
    vocabs: Vocabularies
    params: Dict[str, torch.Tensor]
    seed: int = 1
    epoch: int = 0
    train_config: Optional[dict] = None
    optimizer: Dict[str, Tuple[int, torch.Tensor, torch.Tensor]] = field(default_factory=dict)
    rng: Dict[str, str] = field(default_factory=dict)
    version: int = VERSION


def _generator_state(generator: torch.Generator) -> str:
    return base64.b64encode(generator.get_state().numpy().tobytes()).decode("ascii")


def _set_generator_state(generator: torch.Generator, encoded: str) -> None:
    raw = np.frombuffer(base64.b64decode(encoded), dtype=np.uint8).copy()
    generator.set_state(torch.from_numpy(raw))


def _flat(tensor: torch.Tensor) -> np.ndarray:
    return tensor.detach().cpu().numpy().astype(_FLOAT).ravel()


def save_checkpoint(path: Union[str, Path], model: GtiModel, optimizer=None, epoch: int = 0,
                    train_config=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    named = model.store.named_parameters()
    moments = optimizer.moments() if optimizer is not None else {}
    manifest = {
        "version": VERSION,
        "config": model.config.model_dump(mode="json"),
        "train_config": train_config.model_dump(mode="json") if train_config is not None else None,
        "vocabs": model.vocabs.to_dict(),
        "seed": model.seed,
        "epoch": int(epoch),
        "params": [{"name": name, "shape": list(p.shape)} for name, p in named],
        "optimizer": [{"name": name, "step": int(step)} for name, (step, _, _) in moments.items()],
        "rng": {
            "store": _generator_state(model.store.generator),
            "dropout": _generator_state(model.dropout_generator),
        },
    }
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")

    chunks: List[np.ndarray] = [_flat(p) for _, p in named]
    for _, m, v in moments.values():
        chunks += [_flat(m), _flat(v)]
    payload = np.concatenate(chunks).tobytes() if chunks else b""

    with path.open("wb") as f:
        f.write(_HEADER.pack(MAGIC, len(blob)))
        f.write(blob)
        f.write(payload)
    logger.info(f"Checkpoint written to {path} (epoch {epoch}, {len(payload) // 4} floats)")
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise DataNotFoundError(f"checkpoint not found: {path}")
    data = path.read_bytes()

    if len(data) < _HEADER.size:
        raise CheckpointTruncatedError(f"{path}: file too short for a checkpoint header")
    magic, manifest_len = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointVersionError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    end = _HEADER.size + manifest_len
    if len(data) < end:
        raise CheckpointTruncatedError(f"{path}: manifest cut short ({len(data) - _HEADER.size} of {manifest_len} bytes)")
    try:
        manifest = json.loads(data[_HEADER.size:end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointTruncatedError(f"{path}: unreadable manifest: {exc}") from exc
    if manifest.get("version") != VERSION:
        raise CheckpointVersionError(f"{path}: checkpoint version {manifest.get('version')}, expected {VERSION}")

    payload = data[end:]
    if len(payload) % _FLOAT.itemsize:
        raise CheckpointShapeError(f"{path}: payload of {len(payload)} bytes is not a float32 array")
    values = np.frombuffer(payload, dtype=_FLOAT)

    try:
        shapes = [(entry["name"], tuple(entry["shape"])) for entry in manifest["params"]]
        by_name = dict(shapes)
        moments = [(o["name"], int(o["step"]), by_name[o["name"]]) for o in manifest["optimizer"]]
        config = GtiConfig(**manifest["config"])
        vocabs = Vocabularies.from_dict(manifest["vocabs"])
        fields = {key: manifest[key] for key in ("seed", "epoch", "train_config", "rng")}
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointShapeError(f"{path}: malformed manifest ({type(exc).__name__}: {exc})") from exc
    expected = sum(int(np.prod(s)) for _, s in shapes)
    expected += sum(2 * int(np.prod(shape)) for _, _, shape in moments)
    if values.size != expected:
        raise CheckpointShapeError(f"{path}: payload holds {values.size} floats, manifest describes {expected}")

    offset = 0

    def take(shape) -> torch.Tensor:
        nonlocal offset
        count = int(np.prod(shape))
        chunk = values[offset:offset + count].reshape(shape)
        offset += count
        return torch.tensor(chunk, dtype=DTYPE)

    params = {name: take(shape) for name, shape in shapes}
    optimizer = {name: (step, take(shape), take(shape)) for name, step, shape in moments}

    return Checkpoint(config=config, vocabs=vocabs, params=params, optimizer=optimizer,
                      version=manifest["version"], **fields)


def restore_model(checkpoint: Checkpoint) -> GtiModel:
    """Rebuild the model and load parameter values and rng state."""
    model = GtiModel(checkpoint.config, checkpoint.vocabs, seed=checkpoint.seed)
    try:
        model.store.load_values(checkpoint.params)
    except (ArgumentError, DimensionError) as exc:
        raise CheckpointShapeError(f"checkpoint parameters do not fit the model: {exc}") from exc
    missing = set(model.store.names()) - set(checkpoint.params)
    if missing:
        raise CheckpointShapeError(f"checkpoint lacks parameters: {', '.join(sorted(missing))}")
    if "dropout" in checkpoint.rng:
        _set_generator_state(model.dropout_generator, checkpoint.rng["dropout"])
    return model.eval()


def restore_optimizer(checkpoint: Checkpoint, optimizer) -> None:
    optimizer.load_moments(checkpoint.optimizer)
