"""
Central finite-difference verification of analytic gradients.

Results are reported as a list-of-checks summary, one entry per
parameter tensor, with a single pass/fail verdict.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import torch

from neural.core import ParamStore, active_faults, backward

logger = logging.getLogger(__name__)

DEFAULT_EPS = 1e-5
DEFAULT_TOLERANCE = 1e-4


@dataclass
class GradcheckReport:
    passed: bool
    max_rel_error: float
    tolerance: float
    per_param: Dict[str, float] = field(default_factory=dict)
    offending: List[str] = field(default_factory=list)
    zero_grad_params: List[str] = field(default_factory=list)
    faults: List[str] = field(default_factory=list)
    checked_entries: int = 0

    def to_text(self) -> str:
        lines = [
            f"gradcheck: {'PASS' if self.passed else 'FAIL'}",
            f"max_rel_error={self.max_rel_error:.3e} tolerance={self.tolerance:.1e}",
            f"checked_entries={self.checked_entries} params={len(self.per_param)}",
        ]
        if self.faults:
            lines.append(f"injected_faults={','.join(self.faults)}")
        if self.offending:
            lines.append("offending: " + ", ".join(self.offending))
        if self.zero_grad_params:
            lines.append("exactly-zero gradients: " + ", ".join(self.zero_grad_params))
        return "\n".join(lines)


def _pick_entries(grad: torch.Tensor, max_entries: Optional[int],
                  generator: torch.Generator) -> List[int]:
    numel = grad.numel()
    if max_entries is None or numel <= max_entries:
        return list(range(numel))
    # always include the steepest entry, the rest at random
    steepest = int(grad.abs().reshape(-1).argmax())
    others = torch.randperm(numel, generator=generator)[:max_entries].tolist()
    picked = [steepest] + [i for i in others if i != steepest]
    return picked[:max_entries]


def check_gradients(
    loss_fn: Callable[[], torch.Tensor],
    store: ParamStore,
    eps: float = DEFAULT_EPS,
    tolerance: float = DEFAULT_TOLERANCE,
    max_entries: Optional[int] = None,
    seed: int = 0,
) -> GradcheckReport:
    """
    Compare analytic gradients of `loss_fn` with central differences.

    Args:
        loss_fn: deterministic closure returning a scalar loss
        store: parameters to perturb (frozen ones are skipped)
        eps: finite-difference step
        tolerance: pass iff every |analytic - numeric| / max(1, |analytic|) < tolerance
        max_entries: cap on entries checked per tensor (None = every entry)
        seed: selects which entries are checked when capped

    Returns:
        GradcheckReport
    """
    store.zero_grad()
    grads = backward(loss_fn(), store)
    generator = torch.Generator().manual_seed(seed)

    per_param: Dict[str, float] = {}
    zero_grad_params: List[str] = []
    checked = 0

    for name, param in store.named_parameters(trainable_only=True):
        grad = grads[name]
        if not torch.any(grad != 0):
            zero_grad_params.append(name)
        flat = param.data.view(-1)
        flat_grad = grad.reshape(-1)
        worst = 0.0
        for index in _pick_entries(grad, max_entries, generator):
            original = float(flat[index])
            with torch.no_grad():
                flat[index] = original + eps
                plus = float(loss_fn())
                flat[index] = original - eps
                minus = float(loss_fn())
                flat[index] = original
            numeric = (plus - minus) / (2.0 * eps)
            analytic = float(flat_grad[index])
            worst = max(worst, abs(analytic - numeric) / max(1.0, abs(analytic)))
            checked += 1
        per_param[name] = worst

    offending = [name for name, err in per_param.items() if not err < tolerance]
    max_err = max(per_param.values(), default=0.0)
    report = GradcheckReport(
        passed=not offending,
        max_rel_error=max_err,
        tolerance=tolerance,
        per_param=per_param,
        offending=offending,
        zero_grad_params=zero_grad_params,
        faults=active_faults(),
        checked_entries=checked,
    )
    logger.info(f"Gradient check over {checked} entries: max rel error {max_err:.3e}")
    return report
