"""
Shifted cosine annealing with warm restarts.

The rate decays from alpha0 to 0 along half a cosine inside each cycle
of C = T / M epochs and jumps back to alpha0 at every cycle boundary.
"""

import math

import torch

from errors import ArgumentError


def cycle_length(T: int, M: int) -> int:
    if M < 1 or T % M:
        raise ArgumentError(f"T={T} must be a positive multiple of M={M}")
    return T // M


def learning_rate(epoch: float, cfg) -> float:
    """lr = alpha0 / 2 * (1 + cos(pi * p)), p = (epoch mod C) / C."""
    if epoch < 0:
        raise ArgumentError(f"epoch must be >= 0, got {epoch}")
    cycle = cycle_length(cfg.T, cfg.M)
    phase = (epoch % cycle) / cycle
    return cfg.alpha0 / 2 * (1 + math.cos(math.pi * phase))


class CosineRestartScheduler(torch.optim.lr_scheduler.LambdaLR):
    """
    Per-epoch driver of `learning_rate` for an optimizer whose base rate is alpha0.

    Args:
        optimizer: optimizer to schedule
        cfg: training config (alpha0, T, M)
        start_epoch: first epoch to run; the optimizer is set to its rate on construction
    """

    def __init__(self, optimizer: torch.optim.Optimizer, cfg, start_epoch: int = 0) -> None:
        self.cfg = cfg
        for group in optimizer.param_groups:
            # LambdaLR resumes from initial_lr when last_epoch != -1
            group["initial_lr"] = cfg.alpha0
        super().__init__(optimizer, lr_lambda=self.scale_lr, last_epoch=start_epoch - 1)

    def scale_lr(self, epoch: int) -> float:
        return learning_rate(epoch, self.cfg) / self.cfg.alpha0
