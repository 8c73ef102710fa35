import logging
import math
from typing import Iterable, Tuple

import torch
from torch.optim import Optimizer

from errors import ArgumentError, NumericalError

logger = logging.getLogger(__name__)


class Nadam(Optimizer):
    """
    Adam with Nesterov momentum.

    Per step t (starting at 1):
        m = b1 m + (1 - b1) g
        v = b2 v + (1 - b2) g^2
        m_bar = b1 m / (1 - b1^(t+1)) + (1 - b1) g / (1 - b1^t)
        theta -= lr m_bar / (sqrt(v / (1 - b2^t)) + eps)

    Takes (name, parameter) pairs so a non-finite gradient can be reported
    by parameter name. Frozen parameters must not be passed in.
    """

    def __init__(self, named_params: Iterable[Tuple[str, torch.Tensor]], lr: float = 1e-3,
                 betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        named_params = list(named_params)
        if lr < 0.0:
            raise ArgumentError(f"Invalid learning rate: {lr}")
        for i, beta in enumerate(betas):
            if not 0.0 <= beta < 1.0:
                raise ArgumentError(f"Invalid beta parameter at index {i}: {beta}")
        frozen = [name for name, p in named_params if not p.requires_grad]
        if frozen:
            raise ArgumentError(f"frozen parameters passed to the optimizer: {', '.join(frozen)}")
        self.param_names = {id(p): name for name, p in named_params}
        defaults = dict(lr=lr, betas=betas, eps=eps)
        super().__init__([p for _, p in named_params], defaults)

    @torch.no_grad()
    def step(self, closure=None):
        loss = None
        if closure is not None:
            with torch.enable_grad():
                loss = closure()

        for group in self.param_groups:
            beta1, beta2 = group["betas"]
            for p in group["params"]:
                if p.grad is None:
                    continue
                grad = p.grad
                if not torch.isfinite(grad).all():
                    name = self.param_names.get(id(p), "<unnamed>")
                    raise NumericalError(f"non-finite gradient in parameter {name!r}")

                state = self.state[p]
                if len(state) == 0:
                    state["step"] = 0
                    state["exp_avg"] = torch.zeros_like(p)
                    state["exp_avg_sq"] = torch.zeros_like(p)

                state["step"] += 1
                t = state["step"]
                exp_avg, exp_avg_sq = state["exp_avg"], state["exp_avg_sq"]
                exp_avg.mul_(beta1).add_(grad, alpha=1 - beta1)
                exp_avg_sq.mul_(beta2).addcmul_(grad, grad, value=1 - beta2)

                m_bar = (exp_avg * (beta1 / (1 - math.pow(beta1, t + 1)))
                         + grad * ((1 - beta1) / (1 - math.pow(beta1, t))))
                denom = (exp_avg_sq / (1 - math.pow(beta2, t))).sqrt().add_(group["eps"])
                p.addcdiv_(m_bar, denom, value=-group["lr"])

        return loss

    @property
    def step_count(self) -> int:
        return max((s["step"] for s in self.state.values()), default=0)

    def moments(self):
        """name -> (step, m, v) for every parameter with state."""
        out = {}
        for group in self.param_groups:
            for p in group["params"]:
                state = self.state.get(p)
                if state:
                    out[self.param_names[id(p)]] = (state["step"], state["exp_avg"], state["exp_avg_sq"])
        return out

    def load_moments(self, moments) -> None:
        by_name = {self.param_names[id(p)]: p for group in self.param_groups for p in group["params"]}
        for name, (step, m, v) in moments.items():
            if name not in by_name:
                raise ArgumentError(f"optimizer state for unknown parameter {name!r}")
            p = by_name[name]
            self.state[p] = {
                "step": int(step),
                "exp_avg": m.to(p.dtype).clone(),
                "exp_avg_sq": v.to(p.dtype).clone(),
            }
