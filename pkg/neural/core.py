"""
Differentiable computation core.

Reverse-mode differentiation is torch autograd: a DiffNode is a float64
torch tensor, its `.grad` the accumulator and its `.grad_fn` the record
used for backward traversal. The primitive operations the network is built
from register their own backward rules here:

- matvec: y = W x (x may be a vector or any stack of vectors)
- activation: elementwise sigmoid / tanh
- logsumexp: max-shifted log-sum-exp along one axis

Backward rules can be deliberately corrupted through
`inject_backward_fault`, which the gradient checker uses as a negative
control.
"""

import logging
import math
from collections import OrderedDict
from contextlib import contextmanager
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import torch

from errors import ArgumentError, DimensionError

logger = logging.getLogger(__name__)

DTYPE = torch.float64

# A node of the computation graph: value, grad accumulator, grad_fn record.
DiffNode = torch.Tensor

ACTIVATIONS = ("sigmoid", "tanh")

# op name -> multiplier applied to every gradient that op's backward emits
_BACKWARD_FAULTS: Dict[str, float] = {}


@contextmanager
def inject_backward_fault(op_name: str, scale: float = 1.5) -> Iterator[None]:
    """Scale every gradient emitted by the named op's backward rule."""
    if op_name not in ("matvec", "activation", "logsumexp"):
        raise ArgumentError(f"unknown op for fault injection: {op_name!r}")
    _BACKWARD_FAULTS[op_name] = scale
    logger.warning(f"Backward rule of '{op_name}' corrupted (x{scale})")
    try:
        yield
    finally:
        _BACKWARD_FAULTS.pop(op_name, None)


def active_faults() -> List[str]:
    return sorted(_BACKWARD_FAULTS)


def _faulty(op_name: str, grad: Optional[torch.Tensor]) -> Optional[torch.Tensor]:
    scale = _BACKWARD_FAULTS.get(op_name)
    if grad is None or scale is None:
        return grad
    return grad * scale


# -----------------------------
# PRIMITIVE OPS
# -----------------------------

class _MatVec(torch.autograd.Function):

    @staticmethod
    def forward(ctx, W, x):
        ctx.save_for_backward(W, x)
        return x @ W.transpose(0, 1)

    @staticmethod
    def backward(ctx, grad_y):
        W, x = ctx.saved_tensors
        grad_W = grad_x = None
        if ctx.needs_input_grad[0]:
            # dW = sum over stacked vectors of y_grad (outer) x
            grad_W = grad_y.reshape(-1, W.shape[0]).transpose(0, 1) @ x.reshape(-1, W.shape[1])
        if ctx.needs_input_grad[1]:
            grad_x = grad_y @ W
        return _faulty("matvec", grad_W), _faulty("matvec", grad_x)


class _Activation(torch.autograd.Function):

    @staticmethod
    def forward(ctx, x, kind):
        y = torch.sigmoid(x) if kind == "sigmoid" else torch.tanh(x)
        ctx.kind = kind
        ctx.save_for_backward(y)
        return y

    @staticmethod
    def backward(ctx, grad_y):
        (y,) = ctx.saved_tensors
        if ctx.kind == "sigmoid":
            grad_x = grad_y * y * (1.0 - y)
        else:
            grad_x = grad_y * (1.0 - y * y)
        return _faulty("activation", grad_x), None


class _LogSumExp(torch.autograd.Function):

    @staticmethod
    def forward(ctx, v, dim):
        shift = v.amax(dim=dim, keepdim=True)
        shift = torch.where(torch.isfinite(shift), shift, torch.zeros_like(shift))
        out = shift + torch.log(torch.exp(v - shift).sum(dim=dim, keepdim=True))
        ctx.dim = dim
        ctx.save_for_backward(torch.exp(v - out))
        return out.squeeze(dim)

    @staticmethod
    def backward(ctx, grad_out):
        (softmax,) = ctx.saved_tensors
        return _faulty("logsumexp", grad_out.unsqueeze(ctx.dim) * softmax), None


def matvec(W: DiffNode, x: DiffNode) -> DiffNode:
    """
    Compute y = W x.

    Args:
        W: (rows, cols) matrix
        x: vector of length cols, or a (..., cols) stack of vectors

    Returns:
        y with shape (..., rows)
    """
    if W.dim() != 2 or x.dim() < 1 or x.shape[-1] != W.shape[1]:
        raise DimensionError(
            f"matvec: W{tuple(W.shape)} cannot multiply x{tuple(x.shape)}"
        )
    return _MatVec.apply(W, x)


def linear(W: DiffNode, x: DiffNode, b: Optional[DiffNode] = None) -> DiffNode:
    y = matvec(W, x)
    return y if b is None else y + b


def activation(kind: str, x: DiffNode) -> DiffNode:
    if kind not in ACTIVATIONS:
        raise ArgumentError(f"unknown activation {kind!r}, expected one of {ACTIVATIONS}")
    return _Activation.apply(x, kind)


def sigmoid(x: DiffNode) -> DiffNode:
    return activation("sigmoid", x)


def tanh(x: DiffNode) -> DiffNode:
    return activation("tanh", x)


def logsumexp(v: DiffNode, dim: int = -1) -> DiffNode:
    if v.dim() == 0 or v.numel() == 0 or v.shape[dim] == 0:
        raise ArgumentError("logsumexp of an empty input")
    return _LogSumExp.apply(v, dim)


def as_node(values, requires_grad: bool = False) -> DiffNode:
    """Wrap plain numbers / arrays as a float64 node."""
    return torch.tensor(values, dtype=DTYPE, requires_grad=requires_grad)


# -----------------------------
# PARAMETER STORE
# -----------------------------

class ParamStore:
    """
    Named registry of every tensor a model owns.

    Initial values come from one torch.Generator seeded with `seed`, so the
    same seed and the same sequence of registrations give bit-identical
    parameters. Frozen parameters are registered with requires_grad=False
    and never reach the optimizer.
    """

    def __init__(self, seed: int = 1):
        self.seed = int(seed)
        self.generator = torch.Generator().manual_seed(self.seed)
        self._params: "OrderedDict[str, torch.nn.Parameter]" = OrderedDict()

    def add(self, name: str, value: torch.Tensor, frozen: bool = False) -> torch.nn.Parameter:
        if name in self._params:
            raise ArgumentError(f"parameter {name!r} registered twice")
        param = torch.nn.Parameter(value.to(DTYPE).clone(), requires_grad=not frozen)
        self._params[name] = param
        return param

    def uniform(self, name: str, shape: Sequence[int], bound: float,
                frozen: bool = False) -> torch.nn.Parameter:
        value = torch.rand(tuple(shape), generator=self.generator, dtype=DTYPE)
        return self.add(name, (value * 2.0 - 1.0) * bound, frozen=frozen)

    def glorot(self, name: str, shape: Sequence[int]) -> torch.nn.Parameter:
        """Uniform in +-sqrt(6 / (fan_in + fan_out))."""
        if len(shape) == 2:
            fan_out, fan_in = shape
        else:
            receptive = math.prod(shape[2:])
            fan_out, fan_in = shape[0] * receptive, shape[1] * receptive
        return self.uniform(name, shape, math.sqrt(6.0 / (fan_in + fan_out)))

    def zeros(self, name: str, shape: Sequence[int]) -> torch.nn.Parameter:
        return self.add(name, torch.zeros(tuple(shape), dtype=DTYPE))

    def __getitem__(self, name: str) -> torch.nn.Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> List[str]:
        return list(self._params)

    def named_parameters(self, trainable_only: bool = False) -> List[Tuple[str, torch.nn.Parameter]]:
        return [
            (name, p) for name, p in self._params.items()
            if p.requires_grad or not trainable_only
        ]

    def is_frozen(self, name: str) -> bool:
        return not self._params[name].requires_grad

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None

    def count(self, names: Optional[Sequence[str]] = None, trainable_only: bool = True) -> int:
        selected = self._params if names is None else {n: self._params[n] for n in names}
        return sum(p.numel() for p in selected.values() if p.requires_grad or not trainable_only)

    def load_values(self, values: Dict[str, torch.Tensor]) -> None:
        """Overwrite parameter values in place (shapes must match)."""
        for name, value in values.items():
            if name not in self._params:
                raise ArgumentError(f"unknown parameter {name!r}")
            param = self._params[name]
            if tuple(param.shape) != tuple(value.shape):
                raise DimensionError(
                    f"{name}: stored shape {tuple(value.shape)} != model shape {tuple(param.shape)}"
                )
            with torch.no_grad():
                param.copy_(value.to(DTYPE))


def backward(loss: DiffNode, store: ParamStore, retain_graph: bool = False) -> Dict[str, torch.Tensor]:
    """
    Run reverse-mode differentiation from a scalar loss.

    Gradients accumulate into the store's parameters; the returned map holds
    a copy for every trainable parameter (zeros where the loss does not
    depend on it).
    """
    if loss.numel() != 1:
        raise ArgumentError(f"backward needs a scalar loss, got shape {tuple(loss.shape)}")
    loss.reshape(()).backward(retain_graph=retain_graph)
    grads = {}
    for name, p in store.named_parameters(trainable_only=True):
        grads[name] = p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p.detach())
    return grads
