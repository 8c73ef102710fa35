"""
Validated model configuration.

GtiConfig is a pydantic model; invalid values surface as ArgumentError so
callers only ever deal with the package's own error hierarchy.
"""

import logging
from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

from corpus.conll import DATA_FORMATS
from errors import ArgumentError

logger = logging.getLogger(__name__)

DEFAULT_STATE_SIZES = [100, 150, 200]
N_FORMAT_CATEGORIES = 7


class Variant(str, Enum):
    SINGLE1 = "SINGLE1"
    SINGLE2 = "SINGLE2"
    VANILLA = "VANILLA"
    PIPELINE = "PIPELINE"
    TI = "TI"
    GTI = "GTI"

    @property
    def has_aux_heads(self) -> bool:
        return self in (Variant.VANILLA, Variant.PIPELINE, Variant.TI, Variant.GTI)

    @property
    def uses_gil(self) -> bool:
        return self in (Variant.TI, Variant.GTI)

    @property
    def label_features(self) -> bool:
        return self in (Variant.SINGLE2, Variant.PIPELINE)


class ValidatedModel(BaseModel):
    """BaseModel whose validation failures raise ArgumentError."""

    model_config = ConfigDict(extra="forbid", use_enum_values=False)

    def __init__(self, **data):
        try:
            super().__init__(**data)
        except ValidationError as exc:
            problems = "; ".join(
                f"{'.'.join(str(p) for p in err['loc']) or type(self).__name__}: {err['msg']}"
                for err in exc.errors()
            )
            raise ArgumentError(f"invalid {type(self).__name__}: {problems}") from exc

    def with_overrides(self, **overrides):
        """Re-validated copy with some fields replaced (None values are ignored)."""
        data = self.model_dump()
        data.update({k: v for k, v in overrides.items() if v is not None})
        return type(self)(**data)


class GtiConfig(ValidatedModel):
    variant: Variant = Variant.GTI
    main_task: str = "ner"
    aux_tasks: List[str] = ["chunk", "pos"]
    # tag inventory per task, index = tag id
    tags: Dict[str, List[str]]
    # column layout of the corpus the inventories were read from
    data_format: str = "conll2003"

    d_word: int = 100
    d_char: Optional[int] = None
    n_char_filters: int = 30
    char_width: int = 3
    d_format: int = N_FORMAT_CATEGORIES
    state_size: int = 100
    state_sizes: List[int] = DEFAULT_STATE_SIZES
    d_label: int = 50

    dropout_rate: float = 0.25
    use_iobes_mask: bool = False
    normalize_digits: bool = False

    @model_validator(mode="after")
    def _check(self) -> "GtiConfig":
        if self.d_char is None:
            self.d_char = self.d_word
        for name in ("d_word", "d_char", "n_char_filters", "char_width", "d_format", "d_label"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.state_size not in self.state_sizes:
            raise ValueError(f"state_size {self.state_size} not in {self.state_sizes}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

        if len(set(self.aux_tasks)) != len(self.aux_tasks):
            raise ValueError(f"duplicate aux task in {self.aux_tasks}")
        if self.main_task in self.aux_tasks:
            raise ValueError(f"main task {self.main_task!r} listed as auxiliary")
        if self.variant not in (Variant.SINGLE1,) and not self.aux_tasks:
            raise ValueError(f"variant {self.variant.value} needs at least one aux task")
        if self.data_format not in DATA_FORMATS:
            raise ValueError(f"unknown data format {self.data_format!r}")
        for task in [self.main_task] + self.aux_tasks:
            if not self.tags.get(task):
                raise ValueError(f"no tag inventory for task {task!r}")
        return self

    @property
    def K(self) -> int:
        """Number of aux tasks trained with their own CRF loss."""
        return len(self.aux_tasks) if self.variant.has_aux_heads else 0

    @property
    def d_input(self) -> int:
        return self.d_word + self.n_char_filters + self.d_format

    @property
    def tasks(self) -> List[str]:
        return [self.main_task] + list(self.aux_tasks)
